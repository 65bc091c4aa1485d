//! Loads experiment config files and reports what each one would run, or
//! why it is rejected.
//!
//! `cargo run --example config_check -- [file ...]` (defaults to `configs/*.cfg`)

use std::path::PathBuf;

use rtsac::harness::load_config;

fn main() {
    let mut files: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if files.is_empty() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
        files = std::fs::read_dir(dir).into_iter().flatten().flatten().map(|e| e.path()).collect();
        files.sort();
    }
    let mut bad = 0;
    for f in &files {
        match load_config(f, &[]) {
            Ok(c) => println!(
                "{:<20} {:<15} {}x{} batch {:>3} cycle {:>3} ms  {:>6} steps  {:>3} episodes  warm-up {:>4}  seeds {:?}",
                f.file_name().unwrap().to_string_lossy(),
                c.setting.name(),
                c.width,
                c.height,
                c.batch_size,
                c.cycle_ms,
                c.total_steps(),
                c.episodes(),
                c.init_steps(),
                c.seeds
            ),
            Err(e) => {
                bad += 1;
                println!("{:<20} rejected: {e}", f.display());
            }
        }
    }
    std::process::exit(if bad > 0 { 1 } else { 0 });
}
