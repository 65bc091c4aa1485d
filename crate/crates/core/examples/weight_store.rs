//! One writer publishing versioned, checksummed snapshots while a reader
//! polls for newer ones, as the learner and the acting worker do.
//!
//! `cargo run --release --example weight_store -- [publishes]`

use rtsac::nn::{ParamSet, Tensor, WeightSnapshot};
use rtsac::pipeline::WeightStore;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: u64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(20_000);
    let store = WeightStore::new();
    let (seen, loads) = std::thread::scope(|s| {
        s.spawn(|| {
            for v in 1..=n {
                let mut p = ParamSet::<f32>::new();
                p.insert("w", Tensor::from_f64(&[64], &[v as f64; 64])).unwrap();
                store.publish(WeightSnapshot::encode(&p, v)).unwrap();
            }
        });
        let reader = s.spawn(|| {
            let mut r = store.reader();
            let mut loads = 0u64;
            while r.seen() < n {
                if let Some(snap) = r.fetch_if_newer().expect("valid snapshot") {
                    let p: ParamSet<f32> = snap.restore().expect("restores");
                    assert_eq!(p.get("w").unwrap().data()[0] as u64, snap.version());
                    loads += 1;
                }
            }
            (r.seen(), loads)
        });
        reader.join().unwrap()
    });
    println!("{n} versions published; reader ended at v{seen} after loading {loads} of them");
    Ok(())
}
