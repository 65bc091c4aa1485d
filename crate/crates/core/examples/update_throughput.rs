//! Measures wall-clock cost of one SAC update on the desk-scale network.
//!
//! `cargo run --release --example update_throughput -- [batch] [hidden] [updates]`

use std::time::Instant;

use rtsac::envsim::{EnvConfig, VisualReacher};
use rtsac::nn::Architecture;
use rtsac::sac::{Learner, RandomActor, ReplayBuffer, SacHyper, SacLearner};
use rtsac::types::Transition;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let batch = args.first().copied().unwrap_or(32);
    let hidden = args.get(1).copied().unwrap_or(128);
    let updates = args.get(2).copied().unwrap_or(200);

    let cfg = EnvConfig {
        width: 40,
        height: 24,
        ..EnvConfig::default()
    };
    let mut env = VisualReacher::new(cfg, 0)?;
    let mut buffer = ReplayBuffer::new(1000, 0, 0)?;
    let mut actor = RandomActor::new(0);
    let mut obs = env.reset()?;
    for _ in 0..150 {
        let a = actor.sample();
        let (next, r) = env.step(&a)?;
        buffer.push(Transition { obs, action: a, reward: r, next_obs: next.clone(), terminal: false });
        obs = next;
    }

    let mut arch = Architecture::standard(40, 24);
    arch.hidden = vec![hidden; 2];
    let hyper = SacHyper { batch_size: batch, ..SacHyper::default() };
    let mut learner: SacLearner<f32> = SacLearner::new(arch, hyper, 0)?;
    let start = Instant::now();
    for _ in 0..updates {
        let b = buffer.sample(batch)?;
        learner.update(&b)?;
    }
    let per = start.elapsed().as_secs_f64() * 1000.0 / updates as f64;
    println!("batch {batch}, hidden {hidden}: {per:.2} ms per update");
    Ok(())
}
