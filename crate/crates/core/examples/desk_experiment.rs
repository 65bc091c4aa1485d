//! A shortened desk-scale comparison: trains asynchronous (40 ms) and
//! synchronous (120 ms) agents for a few virtual minutes each, then
//! aggregates learning curves, draws them and compares final returns.
//!
//! `cargo run --release --example desk_experiment -- [out_dir] [minutes] [seeds]`

use std::collections::BTreeMap;
use std::path::PathBuf;

use rtsac::harness::{aggregate, compare_settings, emit_plot, load_config, run_experiment, write_curve_csv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/desk-example".into()));
    let minutes = args.next().unwrap_or_else(|| "3".into());
    let seeds = args.next().unwrap_or_else(|| "0,1".into());
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let overrides = vec![
        format!("output={}", out.display()),
        format!("training_minutes={minutes}"),
        format!("seeds={seeds}"),
    ];

    let mut by_setting = BTreeMap::new();
    let mut tables = Vec::new();
    for file in ["desk-async.cfg", "desk-sync.cfg"] {
        let cfg = load_config(&configs.join(file), &overrides)?;
        println!("{}: {} episodes of {} steps per seed", cfg.setting.name(), cfg.episodes(), cfg.horizon());
        let runs = run_experiment(&cfg, 1)?;
        if runs.len() >= 2 {
            let table = aggregate(cfg.setting.name(), &runs, 5)?;
            write_curve_csv(&table, std::fs::File::create(out.join(format!("{}.csv", cfg.setting.name())))?)?;
            tables.push(table);
        }
        by_setting.insert(cfg.setting.name().to_string(), runs);
    }
    if !tables.is_empty() {
        let svg = out.join("curves.svg");
        emit_plot("Online return (95% CI)", &tables, &svg)?;
        println!("wrote {}", svg.display());
    }
    print!("\n{}", compare_settings(&by_setting));
    Ok(())
}
