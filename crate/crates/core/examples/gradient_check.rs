//! Compares the analytic gradients of the critic, actor and temperature
//! losses with central finite differences on small random networks.
//!
//! `cargo run --release --example gradient_check -- [trials] [seed]`

use rtsac::sac::gradcheck::check_sac_gradients;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let trials = args.first().copied().unwrap_or(10) as usize;
    let seed = args.get(1).copied().unwrap_or(0);
    let r = check_sac_gradients(trials, seed);
    println!("trials            {}", r.trials);
    println!("critic      max rel err {:.3e}", r.critic_max_rel_err);
    println!("actor       max rel err {:.3e}", r.actor_max_rel_err);
    println!("temperature max rel err {:.3e}", r.temperature_max_rel_err);
    if r.worst() >= 1e-4 {
        return Err(format!("gradient mismatch {:.3e}", r.worst()).into());
    }
    Ok(())
}
