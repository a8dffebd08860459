//! Exact sampler for `PG(1, c)` Pólya-Gamma variables (Devroye-style
//! alternating-series rejection with a truncated exponential / truncated
//! inverse-Gaussian proposal split at 0.64).

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use libm::erfc;

const TRUNC: f64 = 0.64;

fn ln_normal_cdf(x: f64) -> f64 {
    (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
}

/// n-th coefficient of the alternating series for the Jacobi density.
fn series_coef(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let half = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * half * half / x).exp()
    } else {
        0.0
    }
}

/// Probability of proposing from the exponential tail piece.
fn exponential_mass(z: f64) -> f64 {
    let t = TRUNC;
    let fz = PI * PI / 8.0 + 0.5 * z * z;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + ln_normal_cdf(b);
    let xa = x0 + z + ln_normal_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse Gaussian with mean `1/z`, shape 1, truncated to `(0, TRUNC)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let r = TRUNC;
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > r {
        loop {
            let mut e1: f64 = rng.sample(Exp1);
            let mut e2: f64 = rng.sample(Exp1);
            while e1 * e1 > 2.0 * e2 / r {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
            }
            let x = r / ((1.0 + r * e1) * (1.0 + r * e1));
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        let mut x = r + 1.0;
        while x >= r {
            let n: f64 = rng.sample(StandardNormal);
            let y = n * n;
            x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y).powi(2)).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
        }
        x
    }
}

/// One draw from `PG(1, c)`.
pub fn sample_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    let fz = PI * PI / 8.0 + 0.5 * z * z;
    let mass = exponential_mass(z);
    loop {
        let x = if rng.random::<f64>() < mass {
            TRUNC + rng.sample::<f64, _>(Exp1) / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// `E[PG(1, c)] = tanh(c/2) / (2c)`.
pub fn pg1_mean(c: f64) -> f64 {
    if c.abs() < 1e-8 {
        0.25
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pg1_variance(c: f64) -> f64 {
        if c.abs() < 1e-4 {
            1.0 / 24.0
        } else {
            (c.sinh() - c) / (4.0 * c.powi(3) * (0.5 * c).cosh().powi(2))
        }
    }

    #[test]
    fn moments_match_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 200_000;
        for &c in &[0.0, 0.3, 1.0, 2.5, 8.0] {
            let xs: Vec<f64> = (0..draws).map(|_| sample_pg1(c, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / draws as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let se = (pg1_variance(c) / draws as f64).sqrt();
            assert!((mean - pg1_mean(c)).abs() < 4.0 * se, "c={c}: mean {mean} vs {}", pg1_mean(c));
            assert!((var / pg1_variance(c) - 1.0).abs() < 0.03, "c={c}: var {var} vs {}", pg1_variance(c));
            assert!(xs.iter().all(|&x| x > 0.0));
        }
    }
}
