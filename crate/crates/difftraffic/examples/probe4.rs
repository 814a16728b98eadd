//! Scratch probe (not shipped): can ANY controller beat uncontrolled IDM
//! flow under the evaluation protocol?

use difftraffic::env::{observe, ScenarioConfig, TrafficEnv};
use difftraffic::harness::uncontrolled_mean_flow;
use difftraffic::idm::headway;

fn eval_controller<F: FnMut(&TrafficEnv) -> f64>(
    scenario: &ScenarioConfig,
    episodes: usize,
    base_seed: u64,
    mut control: F,
) -> difftraffic::Result<(f64, usize)> {
    let mut flow_sum = 0.0;
    let mut collisions = 0;
    for episode in 0..episodes {
        let seed = base_seed
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(episode as u64);
        let mut env = TrafficEnv::new(scenario.clone(), seed)?;
        let mut episode_flow = 0.0;
        loop {
            let action = control(&env);
            let step = env.step(action)?;
            episode_flow += step.terms.velocity;
            if step.collided {
                collisions += 1;
            }
            if step.done {
                break;
            }
        }
        flow_sum += episode_flow / scenario.horizon as f64;
    }
    Ok((flow_sum / episodes as f64, collisions))
}

fn main() -> difftraffic::Result<()> {
    let mut scenario = ScenarioConfig::unstable_ring();
    if std::env::args().nth(1).as_deref() == Some("long") {
        scenario.horizon = 3000;
    }
    let episodes = 10;

    let unc = uncontrolled_mean_flow(&scenario, episodes, 0)?;
    println!("uncontrolled IDM:      flow {unc:.4}");

    // Constant-speed servo at the uniform equilibrium velocity.
    let v_eq = 3.7137;
    let (flow, crashes) = eval_controller(&scenario, episodes, 0, |env| {
        let v = env.state().vehicles[0].velocity;
        10.0 * (v_eq - v)
    })?;
    println!("const-speed @ v_eq:    flow {flow:.4} collisions {crashes}");

    // Same, with an emergency-gap override.
    let idm = scenario.idm;
    let (flow, crashes) = eval_controller(&scenario, episodes, 0, |env| {
        let state = env.state();
        let v = state.vehicles[0].velocity;
        let gap = headway(state, 0, &idm).unwrap_or(1.0);
        let leader = state.leader_of(0).unwrap();
        let v_lead = state.vehicles[leader].velocity;
        let closing = v - v_lead;
        if closing > 0.0 && gap < 2.0 + 1.5 * v * closing {
            -3.0
        } else {
            10.0 * (v_eq - v)
        }
    })?;
    println!("v_eq + safety brake:   flow {flow:.4} collisions {crashes}");

    // Gap-proportional speed command (wave absorber).
    let (flow, crashes) = eval_controller(&scenario, episodes, 0, |env| {
        let state = env.state();
        let v = state.vehicles[0].velocity;
        let gap = headway(state, 0, &idm).unwrap_or(1.0);
        let v_cmd = (0.8 * (gap - 2.0)).clamp(0.0, 6.0);
        (3.0 * (v_cmd - v)).clamp(-3.0, 1.0)
    })?;
    println!("gap-proportional:      flow {flow:.4} collisions {crashes}");

    // Sanity: what does an episode-matched observation look like?
    let env = TrafficEnv::new(scenario.clone(), 1)?;
    let obs = observe(env.state(), &scenario);
    println!("obs dim {}", obs.len());
    Ok(())
}
