//! One-sided truncated normal draws for the probit latents.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

/// Standard normal restricted to `[lower, ∞)`.
///
/// Plain rejection for `lower < 0.45`; otherwise exponential-proposal
/// rejection with the optimal rate.
pub fn standard_normal_above<R: Rng + ?Sized>(lower: f64, rng: &mut R) -> f64 {
    if lower < 0.45 {
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x >= lower {
                return x;
            }
        }
    }
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let x = lower + rng.sample::<f64, _>(Exp1) / rate;
        let accept = (-0.5 * (x - rate) * (x - rate)).exp();
        if rng.random::<f64>() <= accept {
            return x;
        }
    }
}

/// `N(mean, sd²)` restricted to `(0, ∞)` when `positive`, else to `(-∞, 0]`.
pub fn sample_sign_truncated<R: Rng + ?Sized>(mean: f64, sd: f64, positive: bool, rng: &mut R) -> f64 {
    if positive {
        let t = standard_normal_above(-mean / sd, rng);
        (mean + sd * t).max(f64::MIN_POSITIVE)
    } else {
        let t = standard_normal_above(mean / sd, rng);
        (mean - sd * t).min(0.0)
    }
}
