use rand::Rng;
use rand_distr::StandardNormal;

use crate::trajdata::Point;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Log-density of a diagonal Gaussian with fixed log std.
pub fn gaussian_log_prob(action: Point, mean: Point, log_std: [f64; 2]) -> f64 {
    (0..2)
        .map(|d| {
            let sigma = log_std[d].exp();
            let z = (action[d] - mean[d]) / sigma;
            -0.5 * z * z - log_std[d] - HALF_LOG_TWO_PI
        })
        .sum()
}

/// Samples an action (or returns the mean when `stochastic` is false)
/// together with its log-density.
pub fn sample_action<R: Rng + ?Sized>(mean: Point, log_std: [f64; 2], stochastic: bool, rng: &mut R) -> (Point, f64) {
    let action = if stochastic {
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        [mean[0] + log_std[0].exp() * e0, mean[1] + log_std[1].exp() * e1]
    } else {
        mean
    };
    (action, gaussian_log_prob(action, mean, log_std))
}
