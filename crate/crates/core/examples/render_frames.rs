//! Drives the visual reacher with random actions, writes a few frames as PPM
//! images and prints the reward of each step.
//!
//! `cargo run --example render_frames -- [out_dir] [width] [height]`

use std::path::PathBuf;

use rtsac::envsim::{write_ppm, EnvConfig, VisualReacher};
use rtsac::sac::RandomActor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "frames".into()));
    let width = args.next().map(|a| a.parse()).transpose()?.unwrap_or(160);
    let height = args.next().map(|a| a.parse()).transpose()?.unwrap_or(90);
    std::fs::create_dir_all(&out)?;

    let cfg = EnvConfig {
        width,
        height,
        ..EnvConfig::default()
    };
    let mut env = VisualReacher::new(cfg, 1)?;
    let mut actor = RandomActor::new(1);
    env.reset()?;
    let mut total = 0.0;
    let mut step = 0;
    while !env.is_episode_over() {
        let (_, r) = env.step(&actor.sample())?;
        total += r;
        if step % 30 == 0 {
            let path = out.join(format!("step{step:03}.ppm"));
            write_ppm(env.latest_frame().expect("stepped"), std::fs::File::create(&path)?)?;
            println!("step {step:>3}  reward {r:>7.4}  -> {}", path.display());
        }
        step += 1;
    }
    println!("{step} steps, episode return {total:.3}");
    Ok(())
}
