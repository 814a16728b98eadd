//! Runtime comparison of analytical versus numerical Jacobians.
//!
//! The analytical route assembles O(n) blocks per evaluation; the
//! central-difference oracle re-steps the whole platoon twice per state
//! entry, O(n^2) work. The benchmark times both on identical seeded state
//! streams and reports the speedup.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::idm::IdmParams;
use crate::jacobian::{finite_difference_jacobian, sample_interior_state, step_jacobian};
use crate::sim::StepConfig;
use crate::{Error, Result};

/// Timing report of one benchmark configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub n: usize,
    pub iters: usize,
    pub analytical_s: f64,
    pub fd_s: f64,
    pub speedup: f64,
}

/// Times `iters` Jacobian evaluations of an `n`-vehicle ring both ways.
///
/// Both paths consume the same pre-generated states, so the report is
/// reproducible up to timing noise. The finite-difference oracle uses
/// `h = 1e-5`.
pub fn jacobian_benchmark(n: usize, iters: usize, seed: u64) -> Result<BenchReport> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "benchmark needs n >= 2, got {n}"
        )));
    }
    if iters < 1 {
        return Err(Error::InvalidParameter("benchmark needs iters >= 1".into()));
    }
    let params = IdmParams::default();
    let cfg = StepConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // A handful of distinct states cycled identically by both paths keeps
    // state generation out of the timings even for large iteration counts.
    let pool: Vec<_> = (0..iters.min(16))
        .map(|_| sample_interior_state(&mut rng, n, true, &params, &cfg))
        .collect();
    let no_clips = vec![false; n];

    let start = Instant::now();
    let mut checksum = 0.0;
    for k in 0..iters {
        let state = &pool[k % pool.len()];
        let jac = step_jacobian(state, &params, &cfg, &no_clips)?;
        checksum += jac.diag_block(n - 1)[1][1];
    }
    let analytical_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    for k in 0..iters {
        let state = &pool[k % pool.len()];
        let jac = finite_difference_jacobian(state, &params, &cfg, 1e-5)?;
        checksum += jac[(2 * n - 1, 2 * n - 1)];
    }
    let fd_s = start.elapsed().as_secs_f64();
    std::hint::black_box(checksum);

    Ok(BenchReport {
        n,
        iters,
        analytical_s,
        fd_s,
        speedup: fd_s / analytical_s.max(1e-12),
    })
}

/// CSV header matching [`bench_csv_row`].
pub const BENCH_CSV_HEADER: &str = "n,iters,analytical_s,fd_s,speedup";

pub fn bench_csv_row(report: &BenchReport) -> String {
    format!(
        "{},{},{},{},{}",
        report.n, report.iters, report.analytical_s, report.fd_s, report.speedup
    )
}

/// Median-of-three per-evaluation analytical timing, for scaling checks.
pub fn analytical_time_per_eval(n: usize, iters: usize, seed: u64) -> Result<f64> {
    let mut times = Vec::with_capacity(3);
    for rep in 0..3 {
        let report = jacobian_benchmark_analytical_only(n, iters, seed.wrapping_add(rep))?;
        times.push(report / iters as f64);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[1])
}

fn jacobian_benchmark_analytical_only(n: usize, iters: usize, seed: u64) -> Result<f64> {
    let params = IdmParams::default();
    let cfg = StepConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<_> = (0..iters.min(8))
        .map(|_| sample_interior_state(&mut rng, n, true, &params, &cfg))
        .collect();
    let no_clips = vec![false; n];
    let start = Instant::now();
    let mut checksum = 0.0;
    for k in 0..iters {
        let jac = step_jacobian(&pool[k % pool.len()], &params, &cfg, &no_clips)?;
        checksum += jac.diag_block(n - 1)[1][1];
    }
    let elapsed = start.elapsed().as_secs_f64();
    std::hint::black_box(checksum);
    Ok(elapsed)
}
