//! Two workers on the deterministic virtual clock: a 40 ms control loop and a
//! background job that takes 100 ms per item. Prints the scheduler's event
//! log; rerunning prints the same log.
//!
//! `cargo run --example virtual_clock`

use std::sync::Arc;

use rtsac::clock::{Clock, EventKind, VirtualClock, WorkerClock};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clock = Arc::new(VirtualClock::new());
    let shared: Arc<dyn Clock> = clock.clone();
    let control = WorkerClock::new(shared.clone(), 0);
    let background = WorkerClock::new(shared, 1);

    std::thread::scope(|s| {
        s.spawn(|| {
            control.enter().unwrap();
            for i in 0..6 {
                let t0 = control.now();
                control.spend(15).unwrap();
                control.sleep_until(t0 + 40).unwrap();
                println!("control  step {i} started at {t0:>4} ms");
            }
            control.leave();
        });
        s.spawn(|| {
            background.enter().unwrap();
            for i in 0..2 {
                background.spend(100).unwrap();
                println!("background item {i} done at {:>4} ms", background.now());
            }
            background.leave();
        });
    });

    println!("\nscheduler events:");
    for e in clock.event_log() {
        let what = match e.kind {
            EventKind::Resume => "resume",
            EventKind::Leave => "leave",
        };
        println!("{:>5} ms  worker {}  {what}", e.t_ms, e.worker);
    }
    Ok(())
}
