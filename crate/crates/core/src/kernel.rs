//! Jump kernels of continuous-time lattice random walks.
//!
//! A walk jumps at rate one; each jump is an independent draw from a
//! finitely supported law `p` on `Z^d`. Displacements over any duration are
//! compound Poisson and are sampled exactly.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;

/// Validated jump law together with its first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpKernel<T> {
    dim: usize,
    support: Vec<(Vec<i64>, T)>,
    drift: Vec<T>,
    second_moment: Matrix<T>,
    factor: Matrix<T>,
}

fn sum_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
}

impl<T: Real> JumpKernel<T> {
    /// Checks a probability mass function and derives drift `v`, second
    /// moment matrix `a = sum x x^T p(x)` and its Cholesky factor `kappa`.
    ///
    /// The support must span `R^d` linearly, which is exactly the condition
    /// for `a` to be positive definite.
    pub fn new(pmf: &[(Vec<i64>, T)], dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidKernel("dimension must be at least 1".into()));
        }
        if pmf.is_empty() {
            return Err(Error::InvalidKernel("empty support".into()));
        }
        let mut seen = HashSet::with_capacity(pmf.len());
        for (site, p) in pmf {
            if site.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: site.len(),
                });
            }
            if !(p.is_finite() && *p > T::zero() && *p <= T::one()) {
                return Err(Error::InvalidKernel(format!(
                    "probability {p} at {site:?} is outside (0, 1]"
                )));
            }
            if !seen.insert(site.clone()) {
                return Err(Error::DuplicateSite { site: site.clone() });
            }
        }
        let sum: T = pmf.iter().map(|(_, p)| *p).sum();
        if (sum - T::one()).abs() > sum_tolerance::<T>() {
            return Err(Error::ProbabilitySum { sum: sum.as_f64() });
        }

        let mut drift = vec![T::zero(); dim];
        let mut second_moment = Matrix::zeros(dim);
        for (site, p) in pmf {
            let p = *p;
            for i in 0..dim {
                let xi = T::lit(site[i] as f64);
                drift[i] += xi * p;
                for j in 0..dim {
                    second_moment[(i, j)] += xi * T::lit(site[j] as f64) * p;
                }
            }
        }
        let factor = second_moment
            .cholesky(T::lit(1e-12).max(T::epsilon() * T::lit(16.0)))
            .map_err(|_| Error::DegenerateSupport { dim })?;

        Ok(Self {
            dim,
            support: pmf.to_vec(),
            drift,
            second_moment,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[(Vec<i64>, T)] {
        &self.support
    }

    /// Mean jump `v`, the velocity of the walks.
    pub fn drift(&self) -> &[T] {
        &self.drift
    }

    /// `a_ij = sum_x x_i x_j p(x)`.
    pub fn second_moment(&self) -> &Matrix<T> {
        &self.second_moment
    }

    /// Lower-triangular `kappa` with `kappa kappa^T = a`.
    pub fn factor(&self) -> &Matrix<T> {
        &self.factor
    }

    /// Largest singular value of `kappa`.
    pub fn factor_norm(&self) -> T {
        self.second_moment.largest_eigenvalue().sqrt()
    }

    /// Sampler for displacements accumulated over `duration`.
    pub fn displacement_sampler(&self, duration: T) -> Result<DisplacementSampler<'_, T>> {
        DisplacementSampler::new(self, duration)
    }

    /// Exact draw of `X(duration) - X(0)`.
    pub fn sample_displacement<R: Rng + ?Sized>(&self, duration: T, rng: &mut R) -> Result<Vec<i64>> {
        let sampler = self.displacement_sampler(duration)?;
        let mut out = vec![0; self.dim];
        sampler.sample_into(rng, &mut out);
        Ok(out)
    }

    /// `P(X(duration) = target)` from the Poisson mixture of convolution
    /// powers `sum_k e^{-t} t^k / k! p^(k)(target)`.
    ///
    /// The series stops at the first `k*` whose Chernoff bound on
    /// `P(K > k*)` falls below `tol`, so the returned value is low by at
    /// most `tol`.
    pub fn transition_probability(&self, duration: T, target: &[i64], tol: T) -> Result<T> {
        if target.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: target.len(),
            });
        }
        if !(duration >= T::zero()) || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!("duration {duration} must be >= 0")));
        }
        if !(tol > T::zero()) {
            return Err(Error::InvalidParameter(format!("tolerance {tol} must be > 0")));
        }
        let origin = vec![0i64; self.dim];
        if duration == T::zero() {
            return Ok(if target == origin.as_slice() { T::one() } else { T::zero() });
        }
        let last = poisson_truncation(duration.as_f64(), tol.as_f64());

        let mut weight = (-duration).exp();
        let mut layer: HashMap<Vec<i64>, T> = HashMap::from([(origin, T::one())]);
        let mut total = T::zero();
        for k in 0..=last {
            if let Some(&p) = layer.get(target) {
                total += weight * p;
            }
            if k == last {
                break;
            }
            let mut next: HashMap<Vec<i64>, T> = HashMap::with_capacity(layer.len() * self.support.len());
            for (pos, &mass) in &layer {
                for (jump, p) in &self.support {
                    let p = *p;
                    let site: Vec<i64> = pos.iter().zip(jump).map(|(a, b)| a + b).collect();
                    *next.entry(site).or_insert_with(T::zero) += mass * p;
                }
            }
            layer = next;
            weight = weight * duration / T::lit((k + 1) as f64);
        }
        Ok(total)
    }
}

/// Smallest `k` with `P(Poisson(t) > k) < tol` according to the Chernoff
/// bound `P(K >= m) <= e^{-t} (e t / m)^m` for `m > t`.
pub fn poisson_truncation(t: f64, tol: f64) -> usize {
    let mut k = t.ceil().max(0.0) as usize;
    loop {
        let m = (k + 1) as f64;
        if m > t {
            let log_bound = -t + m * (1.0 + t.ln() - m.ln());
            if log_bound < tol.ln() {
                return k;
            }
        }
        k += 1;
    }
}

/// Exact compound-Poisson displacement sampler for a fixed duration.
///
/// By Poisson thinning the numbers of jumps of each kind are independent
/// `Poisson(duration * p(x))` variables, so a displacement is one Poisson
/// draw per support point.
#[derive(Clone, Debug)]
pub struct DisplacementSampler<'a, T> {
    kernel: &'a JumpKernel<T>,
    counts: Vec<Option<Poisson<f64>>>,
}

impl<'a, T: Real> DisplacementSampler<'a, T> {
    fn new(kernel: &'a JumpKernel<T>, duration: T) -> Result<Self> {
        if !(duration >= T::zero()) || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!("duration {duration} must be >= 0")));
        }
        let counts = kernel
            .support
            .iter()
            .map(|(_, p)| {
                let rate = (duration * *p).as_f64();
                if rate > 0.0 {
                    Poisson::new(rate)
                        .map(Some)
                        .map_err(|e| Error::InvalidParameter(format!("poisson rate {rate}: {e}")))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { kernel, counts })
    }

    /// Overwrites `out` with a fresh displacement.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [i64]) {
        out.iter_mut().for_each(|x| *x = 0);
        self.accumulate(rng, out);
    }

    /// Adds a fresh displacement to `out`.
    #[inline]
    pub fn accumulate<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [i64]) {
        for ((jump, _), count) in self.kernel.support.iter().zip(&self.counts) {
            let Some(count) = count else { continue };
            let taken = count.sample(rng) as i64;
            if taken > 0 {
                for (o, &x) in out.iter_mut().zip(jump) {
                    *o += taken * x;
                }
            }
        }
    }
}
