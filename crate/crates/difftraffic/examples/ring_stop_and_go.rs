//! Uncontrolled ring: watch stop-and-go waves grow out of small position
//! noise.
//!
//! Runs the shipped unstable-ring scenario with every vehicle on IDM, then
//! prints the velocity spread at a few checkpoints and the resulting mean
//! flow. Dense uniform flow on this ring is string-unstable: tiny initial
//! perturbations organize into backward-propagating waves that drag the
//! average speed well below the uniform equilibrium.
//!
//! ```bash
//! cargo run --release --example ring_stop_and_go
//! ```

use difftraffic::env::{simulate, ScenarioConfig};
use difftraffic::sim::equilibrium_velocity;

fn main() -> difftraffic::Result<()> {
    let scenario = ScenarioConfig::unstable_ring();
    let steps = 3000;
    let run = simulate(&scenario, 0, steps, None)?;

    let gap = scenario.track_length / scenario.vehicle_count as f64
        - scenario.idm.vehicle_length;
    let v_eq = equilibrium_velocity(gap, &scenario.idm)?;
    println!(
        "ring: L = {} m, {} vehicles, equilibrium speed {:.3} m/s",
        scenario.track_length, scenario.vehicle_count, v_eq
    );

    println!("\n step |  mean v |  min v  |  max v  | velocity variance");
    for checkpoint in [1, 100, 500, 1000, 2000, 3000] {
        let velocities: Vec<f64> = run
            .rows
            .iter()
            .filter(|r| r.step == checkpoint)
            .map(|r| r.v)
            .collect();
        if velocities.is_empty() {
            println!("{checkpoint:>5} | run ended early (collision)");
            continue;
        }
        let n = velocities.len() as f64;
        let mean = velocities.iter().sum::<f64>() / n;
        let min = velocities.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = velocities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let var = velocities.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        println!("{checkpoint:>5} | {mean:>7.3} | {min:>7.3} | {max:>7.3} | {var:>10.5}");
    }

    println!(
        "\nmean flow over {} steps: {:.3} m/s (uniform equilibrium would hold {:.3})",
        run.steps_completed, run.mean_flow, v_eq
    );
    println!("collisions: {}", run.collision_count);
    Ok(())
}
