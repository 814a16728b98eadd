//! Scratch probe (not shipped): IDM acceleration demand vs wave maturity.

use difftraffic::env::{simulate, ScenarioConfig};

fn main() -> difftraffic::Result<()> {
    let scenario = ScenarioConfig::unstable_ring();
    for seed in 0..3 {
        let run = simulate(&scenario, seed, 3000, None)?;
        println!("seed {seed}:");
        for window in [(0, 200), (200, 500), (500, 800), (800, 1200), (1200, 1800), (1800, 3000)] {
            let accels: Vec<f64> = run
                .rows
                .iter()
                .filter(|r| r.step > window.0 && r.step <= window.1)
                .map(|r| r.accel)
                .collect();
            let min = accels.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = accels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let p5 = {
                let mut s = accels.clone();
                s.sort_by(f64::total_cmp);
                s[s.len() / 20]
            };
            println!(
                "  steps {:>4}-{:>4}: accel min {:>8.2} p5 {:>6.2} max {:>5.2}",
                window.0, window.1, min, p5, max
            );
        }
    }
    Ok(())
}
