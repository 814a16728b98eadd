//! Scratch probe (not shipped): episode-return luck across reset seeds.

use difftraffic::env::{simulate, InitialCondition, ScenarioConfig};

fn main() -> difftraffic::Result<()> {
    for (sigma, warmup) in [
        (2.0, 50),
        (2.0, 200),
        (2.0, 400),
        (3.0, 50),
        (3.0, 200),
        (4.0, 50),
        (4.0, 200),
    ] {
        let mut scenario = ScenarioConfig::unstable_ring();
        scenario.init = InitialCondition::UniformPerturbed { sigma };
        scenario.warmup_steps = warmup;
        let mut flows = Vec::new();
        let mut collisions = 0;
        for seed in 0..12 {
            // simulate() runs the warmup inside env construction; steps here
            // are the episode window.
            let run = simulate(&scenario, seed, 600, None)?;
            flows.push(run.mean_flow);
            collisions += run.collision_count;
        }
        let n = flows.len() as f64;
        let mean = flows.iter().sum::<f64>() / n;
        let std = (flows.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n).sqrt();
        println!(
            "sigma {sigma} warmup {warmup:>3}: uncontrolled flow {mean:.3} ± {std:.3} (12 seeds), warmup-collisions {collisions}"
        );
    }
    Ok(())
}
