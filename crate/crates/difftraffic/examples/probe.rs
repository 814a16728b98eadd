//! Scratch tuning probe (not shipped).

use difftraffic::env::{simulate, InitialCondition, ScenarioConfig};
use difftraffic::sim::equilibrium_velocity;

fn main() -> difftraffic::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let length: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(150.0);
    let sigma: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let steps: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(3000);

    let mut scenario = ScenarioConfig::unstable_ring();
    scenario.track_length = length;
    scenario.init = InitialCondition::UniformPerturbed { sigma };

    let gap = length / scenario.vehicle_count as f64 - scenario.idm.vehicle_length;
    let v_eq = equilibrium_velocity(gap, &scenario.idm)?;
    println!("L={length} sigma={sigma} v_eq={v_eq:.3}");
    for seed in 0..3 {
        let run = simulate(&scenario, seed, steps, None)?;
        let var_at = |step: usize| {
            let vs: Vec<f64> = run.rows.iter().filter(|r| r.step == step).map(|r| r.v).collect();
            if vs.is_empty() {
                return f64::NAN;
            }
            let m = vs.iter().sum::<f64>() / vs.len() as f64;
            vs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vs.len() as f64
        };
        let flow_window = |from: usize, to: usize| {
            let vs: Vec<f64> = run
                .rows
                .iter()
                .filter(|r| r.step > from && r.step <= to)
                .map(|r| r.v)
                .collect();
            vs.iter().sum::<f64>() / vs.len().max(1) as f64
        };
        println!(
            "  seed {seed}: var100={:.4} var500={:.4} var1000={:.4} var3000={:.4} flow(0..1500)={:.3} flow(1500..3000)={:.3} mean_flow={:.3} collisions={}",
            var_at(100), var_at(500), var_at(1000), var_at(steps.min(3000)),
            flow_window(0, 1500), flow_window(1500, 3000),
            run.mean_flow, run.collision_count
        );
    }
    Ok(())
}
