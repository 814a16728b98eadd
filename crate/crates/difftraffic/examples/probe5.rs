//! Scratch probe (not shipped).
use difftraffic::env::ScenarioConfig;
use difftraffic::harness::uncontrolled_mean_flow;
fn main() -> difftraffic::Result<()> {
    for h in [600usize, 1500, 3000] {
        let mut s = ScenarioConfig::unstable_ring();
        s.horizon = h;
        println!("uncontrolled@{h}: {:.4}", uncontrolled_mean_flow(&s, 10, 0)?);
    }
    Ok(())
}
