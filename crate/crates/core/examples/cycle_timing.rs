//! Synchronous versus asynchronous interaction under the same injected
//! component times, on the virtual clock. The synchronous loop pays for the
//! gradient step inside every cycle; the asynchronous one does not.
//!
//! `cargo run --release --example cycle_timing -- [grad_ms]`

use rtsac::clock::{new_clock, ClockMode};
use rtsac::envsim::{EnvConfig, VisualReacher};
use rtsac::pipeline::{run, Delays, Mode, PipelineConfig};
use rtsac::sac::{NullLearner, RandomActor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grad: u64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(60);
    let delays = Delays {
        observe: 10,
        act: 5,
        store: 1,
        sample: 4,
        grad,
    };
    println!("component times {delays:?} (sum {} ms)\n", delays.total());
    println!("{:<6} {:>6} {:>7} {:>9} {:>8} {:>9}", "mode", "cycle", "steps", "updates", "missed", "realized");
    for (mode, cycle) in [(Mode::Sync, 40), (Mode::Sync, 120), (Mode::Async, 40)] {
        let cfg = PipelineConfig {
            mode,
            cycle_ms: cycle,
            episodes: 3,
            batch_size: 16,
            delays,
            ..PipelineConfig::default()
        };
        let env = VisualReacher::new(
            EnvConfig {
                width: 40,
                height: 24,
                cycle_ms: cycle,
                ..EnvConfig::default()
            },
            0,
        )?;
        let out = run(&cfg, env, &mut NullLearner::new(), &mut RandomActor::new(0), new_clock(ClockMode::Virtual))?;
        let log = out.log;
        let missed = log.steps.iter().filter(|s| s.deadline_missed).count();
        println!(
            "{:<6} {:>4}ms {:>7} {:>9} {:>8} {:>7.1}ms",
            format!("{mode:?}").to_lowercase(),
            cycle,
            log.steps.len(),
            log.updates.len(),
            missed,
            log.mean_realized_cycle_ms()
        );
    }
    Ok(())
}
