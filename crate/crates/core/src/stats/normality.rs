//! Kolmogorov-Smirnov and Anderson-Darling tests against `N(0, sigma^2)`.
//!
//! Both tests operate on probability-integral transforms `u_i = F(x_i)`. For
//! samples confined to a lattice `h Z` the continuous transform is not
//! uniform even under a perfect Gaussian fit (every atom becomes a jump of
//! the empirical distribution), so an optional randomised transform against
//! the lattice-discretised normal is available:
//! `u = F((k - 1/2) h) + V (F((k + 1/2) h) - F((k - 1/2) h))`, `V ~ U(0, 1)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::{norm_interval, Real};
use crate::rng::RngStream;

/// Smallest sample accepted by the tests.
pub const MIN_SAMPLES: usize = 500;

/// Seed of the auxiliary uniforms used by the randomised transform.
const RANDOMISATION_SEED: u64 = 0x6A09_E667_F3BC_C908;

#[derive(Clone, Debug, PartialEq)]
pub struct NormalityReport {
    pub theta: Vec<f64>,
    pub samples: usize,
    pub sigma2: f64,
    /// Lattice spacing used by the randomised transform, if any.
    pub lattice_step: Option<f64>,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub ad_statistic: f64,
    pub ad_p_value: f64,
    /// KS against the continuous normal even when a lattice step is set.
    pub continuous_ks_statistic: f64,
    pub continuous_ks_p_value: f64,
}

impl NormalityReport {
    pub fn passes(&self, alpha: f64) -> bool {
        self.ks_p_value > alpha && self.ad_p_value > alpha
    }
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form, fast for small arguments
        let y = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (m * m * y).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for j in 1..=100 {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            s += if j % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// KS statistic of sorted uniforms.
fn ks_statistic(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |d, (i, &u)| {
        let lo = u - i as f64 / n;
        let hi = (i + 1) as f64 / n - u;
        d.max(lo).max(hi)
    })
}

/// Asymptotic KS p-value with the small-sample correction of Stephens.
pub fn ks_p_value(statistic: f64, n: usize) -> f64 {
    let root = (n as f64).sqrt();
    kolmogorov_survival((root + 0.12 + 0.11 / root) * statistic)
}

/// Anderson-Darling statistic of sorted uniforms.
fn ad_statistic(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    let clamp = |u: f64| u.clamp(1e-300, 1.0 - 1e-16);
    let s: f64 = (0..n)
        .map(|i| {
            let w = (2 * i + 1) as f64;
            w * (clamp(sorted[i]).ln() + (1.0 - clamp(sorted[n - 1 - i])).ln())
        })
        .sum();
    -nf - s / nf
}

/// Limiting distribution function of the AD statistic (Marsaglia and
/// Marsaglia's two-piece approximation).
fn ad_limit_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.233_714_1 / z).exp() / z.sqrt()
            * (2.000_12
                + (0.247_105 - (0.064_982_1 - (0.034_796_2 - (0.011_672 - 0.001_686_91 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.306_95 - (0.434_24 - (0.082_433 - (0.008_056 - 0.000_314_6 * z) * z) * z) * z) * z).exp())
            .exp()
    }
}

pub fn ad_p_value(statistic: f64) -> f64 {
    (1.0 - ad_limit_cdf(statistic)).clamp(0.0, 1.0)
}

/// Uniform transforms of `samples` under `N(0, sigma2)`.
fn transforms(samples: &[f64], sigma: f64, lattice_step: Option<f64>) -> Vec<f64> {
    match lattice_step {
        None => samples.iter().map(|&x| (x / sigma).norm_cdf()).collect(),
        Some(h) => {
            let mut rng = RngStream::new(RANDOMISATION_SEED, samples.len() as u64);
            samples
                .iter()
                .map(|&x| {
                    let k = (x / h).round();
                    let lo = (k - 0.5) * h / sigma;
                    let hi = (k + 0.5) * h / sigma;
                    let v: f64 = rng.random();
                    lo.norm_cdf() + v * norm_interval(lo, hi)
                })
                .collect()
        }
    }
}

fn sorted(mut u: Vec<f64>) -> Vec<f64> {
    u.sort_by(|a, b| a.partial_cmp(b).expect("transforms are finite"));
    u
}

/// Tests whether `samples` look like `N(0, sigma2)`.
///
/// `theta` is carried into the report for labelling only.
pub fn normality_test(samples: &[f64], sigma2: f64, lattice_step: Option<f64>, theta: &[f64]) -> Result<NormalityReport> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidTheta(format!("projected variance {sigma2} is not positive")));
    }
    if let Some(h) = lattice_step {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("lattice step {h} must be positive")));
        }
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample".into()));
    }
    let sigma = sigma2.sqrt();
    let n = samples.len();
    let u = sorted(transforms(samples, sigma, lattice_step));
    let ks = ks_statistic(&u);
    let ad = ad_statistic(&u);
    let (cks, cks_p) = if lattice_step.is_some() {
        let c = ks_statistic(&sorted(transforms(samples, sigma, None)));
        (c, ks_p_value(c, n))
    } else {
        (ks, ks_p_value(ks, n))
    };
    Ok(NormalityReport {
        theta: theta.to_vec(),
        samples: n,
        sigma2,
        lattice_step,
        ks_statistic: ks,
        ks_p_value: ks_p_value(ks, n),
        ad_statistic: ad,
        ad_p_value: ad_p_value(ad),
        continuous_ks_statistic: cks,
        continuous_ks_p_value: cks_p,
    })
}
