//! Fixtures shared by the benchmarks.

use flexhost::capacity::ResidualCapacitySeries;
use flexhost::hosting::HostingProblemSpec;
use flexhost::risk::RiskSpec;
use flexhost::timeseries::FlexibleProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random hosting problem with `horizon` intervals and a diurnal-looking profile.
pub fn random_spec(seed: u64, horizon: usize, alpha: f64, rho: f64, lambda: f64) -> HostingProblemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let residual: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.1..1.0)).collect();
    let mut l_hat: Vec<f64> = (0..horizon)
        .map(|t| {
            let phase = (t % 96) as f64 / 96.0 * std::f64::consts::TAU;
            (0.5 - 0.45 * phase.cos() + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0)
        })
        .collect();
    let peak = l_hat.iter().copied().fold(0.0, f64::max);
    l_hat.iter_mut().for_each(|v| *v /= peak);
    HostingProblemSpec::new(
        ResidualCapacitySeries::from_values(residual, 1),
        FlexibleProfile { values: l_hat, connection_bus: 1 },
        RiskSpec::new(alpha, 0.0, rho).expect("valid risk parameters"),
        lambda,
    )
    .expect("valid spec")
}
