use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rtsac::harness::{
    aggregate, compare_settings, emit_bars, emit_plot, load_config, load_runs, read_curve_csv, run_experiment,
    write_curve_csv, BarChart, HarnessError, RunSummary,
};

#[derive(Parser)]
#[command(name = "rtsac", about = "Real-time SAC experiments on the simulated visual reacher")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every seed of a config and write per-run CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// `key=val`, repeatable.
        #[arg(long = "override")]
        overrides: Vec<String>,
        /// Seeds run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write `<setting>.csv` learning-curve tables for every setting under a run directory.
    Aggregate {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value_t = 10)]
        window: usize,
        /// Defaults to `<runs>/tables`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw every table in a directory as one SVG.
    Plot {
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize and order the settings under a run directory.
    Compare {
        #[arg(long)]
        runs: PathBuf,
        /// Also draw mean updates per run as a bar chart.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn settings_under(dir: &Path) -> Result<BTreeMap<String, Vec<RunSummary>>, HarnessError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        let Some(name) = p.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
            continue;
        };
        if p.is_dir() {
            let runs = load_runs(&p)?;
            if !runs.is_empty() {
                out.insert(name, runs);
            }
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Aggregate(format!("no runs under {}", dir.display())));
    }
    Ok(out)
}

fn main_inner(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Run {
            config,
            seed,
            mut overrides,
            jobs,
        } => {
            if let Some(s) = seed {
                overrides.push(format!("seeds={s}"));
            }
            let cfg = load_config(&config, &overrides)?;
            let summaries = run_experiment(&cfg, jobs)?;
            let mut failed = 0;
            for s in &summaries {
                println!(
                    "{} seed {}: {} steps, {} updates, mean cycle {:.2} ms, final return {:.3}{}",
                    cfg.setting.name(),
                    s.seed,
                    s.total_steps,
                    s.total_updates,
                    s.mean_cycle_ms,
                    rtsac::harness::final_return(&s.returns),
                    s.failure.as_deref().map(|f| format!(", FAILED: {f}")).unwrap_or_default()
                );
                failed += s.failure.is_some() as usize;
            }
            if failed > 0 {
                return Err(HarnessError::Run(format!("{failed} of {} runs failed", summaries.len())));
            }
        }
        Cmd::Aggregate { runs, window, out } => {
            let out = out.unwrap_or_else(|| runs.join("tables"));
            std::fs::create_dir_all(&out)?;
            for (label, rs) in settings_under(&runs)? {
                let table = aggregate(&label, &rs, window)?;
                let path = out.join(format!("{label}.csv"));
                write_curve_csv(&table, std::fs::File::create(&path)?)?;
                println!("{}", path.display());
            }
        }
        Cmd::Plot { tables, out } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&tables)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            paths.retain(|p| p.extension().is_some_and(|e| e == "csv"));
            paths.sort();
            let mut ts = Vec::new();
            for p in paths {
                let label = p.file_stem().and_then(|s| s.to_str()).unwrap_or("?").to_string();
                ts.push(read_curve_csv(&label, std::fs::File::open(&p)?)?);
            }
            emit_plot("Online return (95% CI)", &ts, &out)?;
        }
        Cmd::Compare { runs, svg } => {
            let by = settings_under(&runs)?;
            if by.len() < 2 {
                return Err(HarnessError::Aggregate("compare needs at least two settings".into()));
            }
            let report = compare_settings(&by);
            print!("{report}");
            if let Some(path) = svg {
                let chart = BarChart {
                    title: "Gradient updates per run".into(),
                    y_label: "updates".into(),
                    bars: report.settings.iter().map(|s| (s.label.clone(), s.mean_updates)).collect(),
                };
                emit_bars(&chart, &path)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
