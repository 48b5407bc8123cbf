//! Covariance of the Gaussian limit of the current process.
//!
//! Every double integral `int int phi(y) psi(z) p_u(z - y) dz dy` is reduced
//! to the single integral `C(u) = int phi(y) (T_u psi)(y) dy` with the heat
//! semigroup `T_u` of the limiting diffusion `kappa B`. By convention
//! `C(0) = int phi psi`, the continuity limit.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quadrature::{integrate, Tolerance};
use crate::real::{norm_interval, Real};
use crate::test_functions::{conditional_term, HeatSmoothed, TestFunction};

/// Parameters of the limit law: mean occupation `rho0`, occupation variance
/// `v0` and the diffusion matrix `a` of the jump kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitSpec<T> {
    rho0: T,
    v0: T,
    diffusion: Matrix<T>,
}

impl<T: Real> LimitSpec<T> {
    pub fn new(rho0: T, v0: T, diffusion: Matrix<T>) -> Result<Self> {
        if !(rho0 >= T::zero() && rho0.is_finite()) || !(v0 >= T::zero() && v0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "occupation moments must be finite and >= 0 (rho0={rho0}, v0={v0})"
            )));
        }
        if diffusion.size() == 0 || !diffusion.is_symmetric(T::lit(1e-12) * diffusion.trace().abs()) {
            return Err(Error::NotPositiveDefinite);
        }
        diffusion.cholesky(T::epsilon())?;
        Ok(Self { rho0, v0, diffusion })
    }

    pub fn rho0(&self) -> T {
        self.rho0
    }

    pub fn v0(&self) -> T {
        self.v0
    }

    pub fn diffusion(&self) -> &Matrix<T> {
        &self.diffusion
    }

    pub fn dim(&self) -> usize {
        self.diffusion.size()
    }

    pub fn with_moments(&self, rho0: T, v0: T) -> Result<Self> {
        Self::new(rho0, v0, self.diffusion.clone())
    }
}

/// Argument `(t, phi)` of the limit process.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimePoint<T> {
    pub time: T,
    pub function: TestFunction<T>,
}

impl<T: Real> SpaceTimePoint<T> {
    pub fn new(time: T, function: TestFunction<T>) -> Result<Self> {
        check_time(time)?;
        Ok(Self { time, function })
    }
}

fn check_time<T: Real>(t: T) -> Result<()> {
    if t >= T::zero() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("time {t} must be finite and >= 0")))
    }
}

/// Density of `kappa B(t)` at `x`.
pub fn gaussian_density<T: Real>(x: &[T], t: T, a: &Matrix<T>) -> Result<T> {
    if !(t > T::zero()) {
        return Err(Error::NonPositiveTime(t.as_f64()));
    }
    if x.len() != a.size() {
        return Err(Error::DimensionMismatch {
            expected: a.size(),
            got: x.len(),
        });
    }
    let l = a.cholesky(T::epsilon())?;
    let solved = Matrix::cholesky_solve(&l, x);
    let q: T = solved.iter().zip(x).map(|(&u, &v)| u * v).sum();
    let d = T::lit(x.len() as f64);
    let det = Matrix::det_from_cholesky(&l);
    Ok((-q / (T::lit(2.0) * t)).exp() / ((T::TAU() * t).powf(d / T::lit(2.0)) * det.sqrt()))
}

fn outer_tolerance() -> Tolerance {
    Tolerance {
        abs: 1e-13,
        rel: 1e-11,
        max_intervals: 4000,
    }
}

/// `C(u; phi, psi) = int int phi(y) psi(z) p_u(z - y) dz dy`.
pub fn pair_integral<T: Real>(u: T, phi: &TestFunction<T>, psi: &TestFunction<T>, a: &Matrix<T>) -> Result<T> {
    check_time(u)?;
    if phi.dim() != psi.dim() || phi.dim() != a.size() {
        return Err(Error::DimensionMismatch {
            expected: a.size(),
            got: if phi.dim() != a.size() { phi.dim() } else { psi.dim() },
        });
    }
    match psi.heat_smooth(u, a)? {
        HeatSmoothed::Closed(smoothed) => phi.inner_product(&smoothed),
        HeatSmoothed::Conditional { base, lower } => {
            // Outer integral over the support of each separable term of phi.
            let mut total = T::zero();
            for term in phi.terms() {
                let ranges: Vec<(T, T)> = term.factors.iter().map(|f| f.reach()).collect();
                let edges: Vec<Vec<T>> = term.factors.iter().map(|f| f.edges()).collect();
                let mut y = Vec::with_capacity(phi.dim());
                let mut z = Vec::with_capacity(phi.dim());
                let v = nested(&ranges, &edges, &mut y, &mut |y: &[T]| {
                    let w: T = term.factors.iter().zip(y).map(|(f, &yi)| f.value(yi)).fold(T::one(), |p, v| p * v);
                    if w == T::zero() {
                        return Ok(T::zero());
                    }
                    let mut inner = T::zero();
                    for b in base.terms() {
                        z.clear();
                        inner += b.coeff * conditional_term(&b.factors, &lower, y, &mut z)?;
                    }
                    Ok(w * inner)
                })?;
                total += term.coeff * v;
            }
            Ok(total)
        }
    }
}

fn nested<T: Real>(
    ranges: &[(T, T)],
    edges: &[Vec<T>],
    y: &mut Vec<T>,
    f: &mut dyn FnMut(&[T]) -> Result<T>,
) -> Result<T> {
    let i = y.len();
    if i == ranges.len() {
        return f(y);
    }
    let (lo, hi) = ranges[i];
    integrate(
        |yi| {
            y.push(yi);
            let v = nested(ranges, edges, y, f);
            y.pop();
            v
        },
        lo,
        hi,
        &edges[i],
        outer_tolerance(),
    )
    .map_err(|e| match e {
        Error::QuadratureNotConverged(m) => Error::QuadratureNotConverged(m),
        other => other,
    })
}

/// The pieces of the limit covariance between `(s, phi)` and `(t, psi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceTerms<T> {
    pub sigma1: T,
    pub sigma2: T,
}

impl<T: Real> CovarianceTerms<T> {
    pub fn covariance(&self, rho0: T, v0: T) -> T {
        rho0 * self.sigma1 + v0 * self.sigma2
    }
}

/// `sigma1` and `sigma2` evaluated together so shared integrals are reused.
pub fn covariance_terms<T: Real>(
    s: T,
    phi: &TestFunction<T>,
    t: T,
    psi: &TestFunction<T>,
    a: &Matrix<T>,
) -> Result<CovarianceTerms<T>> {
    check_time(s)?;
    check_time(t)?;
    let c = |u: T| pair_integral(u, phi, psi, a);
    let overlap = c(T::zero())?;
    let c_sum = c(s + t)?;
    let c_gap = if s == t { overlap } else { c((t - s).abs())? };
    let c_t = if t == T::zero() { overlap } else { c(t)? };
    let c_s = if s == t {
        c_t
    } else if s == T::zero() {
        overlap
    } else {
        c(s)?
    };
    Ok(CovarianceTerms {
        sigma1: c_gap - c_sum,
        sigma2: c_sum - c_t - c_s + overlap,
    })
}

/// `C(|t - s|) - C(t + s)`.
pub fn sigma1<T: Real>(s: T, phi: &TestFunction<T>, t: T, psi: &TestFunction<T>, a: &Matrix<T>) -> Result<T> {
    check_time(s)?;
    check_time(t)?;
    Ok(pair_integral((t - s).abs(), phi, psi, a)? - pair_integral(s + t, phi, psi, a)?)
}

/// `C(t + s) - C(t) - C(s) + int phi psi`.
pub fn sigma2<T: Real>(s: T, phi: &TestFunction<T>, t: T, psi: &TestFunction<T>, a: &Matrix<T>) -> Result<T> {
    Ok(covariance_terms(s, phi, t, psi, a)?.sigma2)
}

/// `E xi(s, phi) xi(t, psi) = rho0 sigma1 + v0 sigma2`.
pub fn limit_covariance<T: Real>(
    s: T,
    phi: &TestFunction<T>,
    t: T,
    psi: &TestFunction<T>,
    spec: &LimitSpec<T>,
) -> Result<T> {
    Ok(covariance_terms(s, phi, t, psi, &spec.diffusion)?.covariance(spec.rho0, spec.v0))
}

/// Closed form of `C(u)` for `phi = psi = 1_{[-M, M]^d}` and `a = I`.
pub fn box_i<T: Real>(u: T, m: T, d: usize) -> Result<T> {
    if !(u > T::zero()) {
        return Err(Error::NonPositiveTime(u.as_f64()));
    }
    if !(m > T::zero()) {
        return Err(Error::InvalidParameter(format!("box radius {m} must be positive")));
    }
    let two = T::lit(2.0);
    let root = u.sqrt();
    let r = two * m / root;
    // Phi_u(2M) - Phi_u(-2M) with Phi_u the N(0, u) distribution function
    let mass = norm_interval(-r, r);
    // exp(-2M^2/u) - 1, accurate for small arguments as well
    let decay = (-(two * m * m) / u).exp_m1();
    let one_dim = two * m * mass + two * (u / T::TAU()).sqrt() * decay;
    Ok(one_dim.powi(d as i32))
}

/// `Q1 = int sum_ij a_ij d_i phi d_j psi` and `Q2 = int (A phi)(A psi)`.
pub fn q_forms<T: Real>(phi: &TestFunction<T>, psi: &TestFunction<T>, a: &Matrix<T>) -> Result<(T, T)> {
    if !phi.is_smooth() || !psi.is_smooth() {
        return Err(Error::NotSmooth);
    }
    let d = a.size();
    let dphi: Vec<TestFunction<T>> = (0..d).map(|i| phi.partial(i)).collect::<Result<_>>()?;
    let dpsi: Vec<TestFunction<T>> = (0..d).map(|i| psi.partial(i)).collect::<Result<_>>()?;
    let mut q1 = T::zero();
    for i in 0..d {
        for j in 0..d {
            if a[(i, j)] != T::zero() {
                q1 += a[(i, j)] * dphi[i].inner_product(&dpsi[j])?;
            }
        }
    }
    let q2 = phi.generator_image(a)?.inner_product(&psi.generator_image(a)?)?;
    Ok((q1, q2))
}

/// `Var(xi(t, phi) - xi(s, phi))` by bilinearity of the covariance.
pub fn increment_variance<T: Real>(s: T, t: T, phi: &TestFunction<T>, spec: &LimitSpec<T>) -> Result<T> {
    check_time(s)?;
    check_time(t)?;
    if s > t {
        return Err(Error::InvalidParameter(format!("increment needs s <= t (s={s}, t={t})")));
    }
    if s == t {
        return Ok(T::zero());
    }
    let cov = |x: T, y: T| limit_covariance(x, phi, y, phi, spec);
    Ok(cov(t, t)? + cov(s, s)? - T::lit(2.0) * cov(s, t)?)
}

/// Gram matrix `G_ij = E xi(p_i) xi(p_j)`.
pub fn gram_matrix<T: Real>(points: &[SpaceTimePoint<T>], spec: &LimitSpec<T>) -> Result<Matrix<T>> {
    let k = points.len();
    let mut g = Matrix::zeros(k);
    for i in 0..k {
        for j in i..k {
            let v = limit_covariance(
                points[i].time,
                &points[i].function,
                points[j].time,
                &points[j].function,
                spec,
            )?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Lower factor `L` with `L L^T` equal to `gram` up to a diagonal jitter.
///
/// Exactly zero rows (points with zero variance) are kept exactly zero.
/// Otherwise jitter `1e-12, 1e-11, ..., 1e-8` times the largest diagonal
/// entry is tried in turn.
pub fn gram_factor<T: Real>(gram: &Matrix<T>) -> Result<Matrix<T>> {
    let k = gram.size();
    let scale = (0..k).map(|i| gram[(i, i)].abs()).fold(T::zero(), T::max);
    if scale == T::zero() {
        return Ok(Matrix::zeros(k));
    }
    let live: Vec<usize> = (0..k)
        .filter(|&i| (0..k).any(|j| gram[(i, j)] != T::zero()))
        .collect();
    let mut sub = Matrix::zeros(live.len());
    for (a, &i) in live.iter().enumerate() {
        for (b, &j) in live.iter().enumerate() {
            sub[(a, b)] = gram[(i, j)];
        }
    }
    let mut jitter = T::zero();
    let factor = loop {
        let mut trial = sub.clone();
        for i in 0..trial.size() {
            trial[(i, i)] += jitter * scale;
        }
        match trial.cholesky(T::zero()) {
            Ok(l) => break l,
            Err(_) => {
                jitter = if jitter == T::zero() {
                    T::lit(1e-12)
                } else {
                    jitter * T::lit(10.0)
                };
                if jitter > T::lit(1.5e-8) {
                    return Err(Error::GramNotPsd { jitter: 1e-8 });
                }
            }
        }
    };
    let mut full = Matrix::zeros(k);
    for (a, &i) in live.iter().enumerate() {
        for (b, &j) in live.iter().enumerate() {
            full[(i, j)] = factor[(a, b)];
        }
    }
    Ok(full)
}

/// Exact sampler of the limit's finite-dimensional distribution.
#[derive(Clone, Debug)]
pub struct LimitSampler<T> {
    gram: Matrix<T>,
    factor: Matrix<T>,
}

impl<T: Real> LimitSampler<T> {
    pub fn new(points: &[SpaceTimePoint<T>], spec: &LimitSpec<T>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("no space-time points".into()));
        }
        let gram = gram_matrix(points, spec)?;
        Self::from_gram(gram)
    }

    pub fn from_gram(gram: Matrix<T>) -> Result<Self> {
        let factor = gram_factor(&gram)?;
        Ok(Self { gram, factor })
    }

    pub fn gram(&self) -> &Matrix<T> {
        &self.gram
    }

    pub fn len(&self) -> usize {
        self.gram.size()
    }

    pub fn is_empty(&self) -> bool {
        self.gram.size() == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let z: Vec<T> = (0..self.len())
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        self.factor.mul_vec(&z)
    }
}

/// One draw of `(xi(p_1), ..., xi(p_k))` under the limit law.
pub fn sample_limit_fdd<T: Real, R: Rng + ?Sized>(
    points: &[SpaceTimePoint<T>],
    spec: &LimitSpec<T>,
    rng: &mut R,
) -> Result<Vec<T>> {
    Ok(LimitSampler::new(points, spec)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> TestFunction<f64> {
        TestFunction::box_indicator(1, 1.0).unwrap()
    }

    #[test]
    fn density_at_origin() {
        let v = gaussian_density(&[0.0f64], 1.0, &Matrix::identity(1)).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(
            gaussian_density(&[0.0], 0.0, &Matrix::<f64>::identity(1)),
            Err(Error::NonPositiveTime(0.0))
        );
    }

    #[test]
    fn box_i_small_and_unit_time() {
        // near zero the deficit is 2 sqrt(u / 2 pi) to leading order
        let u = 1e-8f64;
        let deficit = 2.0 - box_i(u, 1.0, 1).unwrap();
        assert!((deficit / (2.0 * (u / std::f64::consts::TAU).sqrt()) - 1.0).abs() < 1e-6);
        assert!((box_i(1e-14f64, 1.0, 1).unwrap() - 2.0).abs() < 1e-6);
        let v = box_i(1.0f64, 1.0, 1).unwrap();
        // independent adaptive quadrature of int_{-1}^{1} [Phi(1-y) - Phi(-1-y)] dy
        assert!((v - 1.219_096_844_430_794).abs() < 1e-12, "{v}");
        assert!((box_i(0.7, 1.0, 2).unwrap() - box_i(0.7f64, 1.0, 1).unwrap().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn zero_time_terms_vanish() {
        let a = Matrix::identity(1);
        let b = unit_box();
        assert_eq!(sigma1(0.0, &b, 0.0, &b, &a).unwrap(), 0.0);
        assert_eq!(sigma2(0.0, &b, 0.0, &b, &a).unwrap(), 0.0);
        assert_eq!(sigma2(0.0, &b, 0.8, &b, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_zero_time_point_samples_zero() {
        let spec = LimitSpec::new(1.0, 1.0, Matrix::identity(1)).unwrap();
        let p = SpaceTimePoint::new(0.0, unit_box()).unwrap();
        let mut rng = crate::rng::RngStream::new(1, 0);
        assert_eq!(sample_limit_fdd(&[p], &spec, &mut rng).unwrap(), vec![0.0]);
    }

    #[test]
    fn spec_validation() {
        assert!(LimitSpec::new(-1.0, 0.0, Matrix::identity(1)).is_err());
        assert!(LimitSpec::new(1.0, 0.0, Matrix::<f64>::diagonal(&[1.0, 0.0])).is_err());
    }
}
