//! Closed family of test functions.
//!
//! Every function is a finite linear combination of separable products
//! `c * f_1(x_1) * ... * f_d(x_d)` whose one-dimensional factors are
//!
//! * Hermite-Gaussians `He_k((x - c)/s) exp(-(x - c)^2 / (2 s^2))`,
//! * closed interval indicators `1{lo <= x <= hi}`,
//! * interval indicators smoothed by a centred normal, i.e.
//!   `Phi((hi - x)/sigma) - Phi((lo - x)/sigma)`.
//!
//! The family is closed under differentiation of the smooth members, under
//! argument scaling `x -> x / sqrt(a)`, and under the heat semigroup with a
//! diagonal diffusion matrix, so those operations are exact. Heat smoothing
//! with a non-diagonal matrix is evaluated by conditional quadrature.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quadrature::{gauss_hermite, integrate, Tolerance};
use crate::real::{norm_interval, Real};

/// Probabilists' Hermite polynomial `He_k(z)`.
pub fn hermite_poly<T: Real>(order: u32, z: T) -> T {
    let mut prev = T::one();
    if order == 0 {
        return prev;
    }
    let mut cur = z;
    for k in 1..order {
        let next = z * cur - T::lit(k as f64) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

// Normal tail beyond this many standard deviations is below 1e-19.
const GAUSS_REACH: f64 = 9.0;

/// One-dimensional building block.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor<T> {
    Hermite { order: u32, center: T, width: T },
    Interval { lo: T, hi: T },
    SmoothedInterval { lo: T, hi: T, spread: T },
}

impl<T: Real> Factor<T> {
    #[inline]
    pub fn value(&self, x: T) -> T {
        match *self {
            Factor::Hermite { order, center, width } => {
                let z = (x - center) / width;
                hermite_poly(order, z) * (-(z * z) * T::lit(0.5)).exp()
            }
            Factor::Interval { lo, hi } => {
                if lo <= x && x <= hi {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Factor::SmoothedInterval { lo, hi, spread } => norm_interval((lo - x) / spread, (hi - x) / spread),
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, Factor::Interval { .. })
    }

    /// Derivative as a combination of factors.
    pub fn derivative(&self) -> Result<Vec<(T, Factor<T>)>> {
        match *self {
            Factor::Hermite { order, center, width } => Ok(vec![(
                -T::one() / width,
                Factor::Hermite {
                    order: order + 1,
                    center,
                    width,
                },
            )]),
            Factor::Interval { .. } => Err(Error::NotSmooth),
            Factor::SmoothedInterval { lo, hi, spread } => {
                let c = T::one() / (spread * T::TAU().sqrt());
                let bump = |center| Factor::Hermite {
                    order: 0,
                    center,
                    width: spread,
                };
                Ok(vec![(c, bump(lo)), (-c, bump(hi))])
            }
        }
    }

    /// Convolution with a centred normal of the given variance.
    pub fn heat(&self, variance: T) -> (T, Factor<T>) {
        if variance == T::zero() {
            return (T::one(), self.clone());
        }
        match *self {
            Factor::Hermite { order, center, width } => {
                let wide = (width * width + variance).sqrt();
                ((width / wide).powi(order as i32 + 1), Factor::Hermite { order, center, width: wide })
            }
            Factor::Interval { lo, hi } => (
                T::one(),
                Factor::SmoothedInterval {
                    lo,
                    hi,
                    spread: variance.sqrt(),
                },
            ),
            Factor::SmoothedInterval { lo, hi, spread } => (
                T::one(),
                Factor::SmoothedInterval {
                    lo,
                    hi,
                    spread: (spread * spread + variance).sqrt(),
                },
            ),
        }
    }

    /// `x -> f(x / r)`.
    pub fn stretched(&self, r: T) -> Factor<T> {
        match *self {
            Factor::Hermite { order, center, width } => Factor::Hermite {
                order,
                center: center * r,
                width: width * r,
            },
            Factor::Interval { lo, hi } => Factor::Interval { lo: lo * r, hi: hi * r },
            Factor::SmoothedInterval { lo, hi, spread } => Factor::SmoothedInterval {
                lo: lo * r,
                hi: hi * r,
                spread: spread * r,
            },
        }
    }

    /// `int_R f(x) dx`.
    pub fn integral(&self) -> T {
        match *self {
            Factor::Hermite { order, width, .. } => {
                if order == 0 {
                    width * T::TAU().sqrt()
                } else {
                    T::zero()
                }
            }
            Factor::Interval { lo, hi } | Factor::SmoothedInterval { lo, hi, .. } => hi - lo,
        }
    }

    /// Interval outside which the factor is negligible (below ~1e-18 of its
    /// scale).
    pub fn reach(&self) -> (T, T) {
        match *self {
            Factor::Hermite { order, center, width } => {
                let r = width * (T::lit(GAUSS_REACH + 1.0) + T::lit(2.0) * T::lit(order as f64).sqrt());
                (center - r, center + r)
            }
            Factor::Interval { lo, hi } => (lo, hi),
            Factor::SmoothedInterval { lo, hi, spread } => {
                let r = spread * T::lit(GAUSS_REACH + 0.5);
                (lo - r, hi + r)
            }
        }
    }

    /// Points where the integrand changes character; used as breakpoints.
    pub fn edges(&self) -> Vec<T> {
        match *self {
            Factor::Hermite { center, width, .. } => {
                let w = width * T::lit(3.0);
                vec![center - w, center, center + w]
            }
            Factor::Interval { lo, hi } => vec![lo, hi],
            Factor::SmoothedInterval { lo, hi, spread } => {
                let w = spread * T::lit(3.0);
                vec![lo - w, lo, lo + w, hi - w, hi, hi + w]
            }
        }
    }

    /// Max-norm radius beyond which `|coeff * f|` drops below `tol`.
    fn support_radius(&self, coeff: T, tol: T) -> T {
        let level = (coeff.abs() / tol).max(T::one()).ln();
        let spread = (T::lit(2.0) * level).sqrt();
        match *self {
            Factor::Hermite { order, center, width } => {
                center.abs() + width * (spread + T::lit(2.0) * T::lit(order as f64).sqrt())
            }
            Factor::Interval { lo, hi } => lo.abs().max(hi.abs()),
            Factor::SmoothedInterval { lo, hi, spread: s } => lo.abs().max(hi.abs()) + s * spread,
        }
    }

    pub fn cast<U: Real>(&self) -> Factor<U> {
        let c = |v: T| U::lit(v.as_f64());
        match *self {
            Factor::Hermite { order, center, width } => Factor::Hermite {
                order,
                center: c(center),
                width: c(width),
            },
            Factor::Interval { lo, hi } => Factor::Interval { lo: c(lo), hi: c(hi) },
            Factor::SmoothedInterval { lo, hi, spread } => Factor::SmoothedInterval {
                lo: c(lo),
                hi: c(hi),
                spread: c(spread),
            },
        }
    }
}

fn tight() -> Tolerance {
    Tolerance {
        abs: 1e-15,
        rel: 1e-13,
        max_intervals: 4000,
    }
}

/// `int_R f(x) g(x) dx`.
pub fn factor_inner<T: Real>(f: &Factor<T>, g: &Factor<T>) -> Result<T> {
    use Factor::*;
    match (f, g) {
        (Interval { lo: a1, hi: b1 }, Interval { lo: a2, hi: b2 }) => Ok((b1.min(*b2) - a1.max(*a2)).max(T::zero())),
        (Interval { lo, hi }, other) | (other, Interval { lo, hi }) => {
            let (r0, r1) = other.reach();
            let (a, b) = (lo.max(r0), hi.min(r1));
            if a >= b {
                return Ok(T::zero());
            }
            integrate(|x| Ok(other.value(x)), a, b, &other.edges(), tight())
        }
        (
            Hermite {
                order: k1,
                center: c1,
                width: s1,
            },
            Hermite {
                order: k2,
                center: c2,
                width: s2,
            },
        ) => {
            // The product of the two Gaussians is one Gaussian times a
            // constant; the remaining polynomial is integrated exactly.
            let (p1, p2) = (T::one() / (*s1 * *s1), T::one() / (*s2 * *s2));
            let precision = p1 + p2;
            let mean = (*c1 * p1 + *c2 * p2) / precision;
            let sd = T::one() / precision.sqrt();
            let gap = *c1 - *c2;
            let prefactor = (-(gap * gap) / (T::lit(2.0) * (*s1 * *s1 + *s2 * *s2))).exp();
            let nodes = ((k1 + k2) as usize / 2 + 2).max(4);
            let sum: T = gauss_hermite(nodes)
                .iter()
                .map(|&(z, w)| {
                    let y = mean + sd * T::lit(z);
                    T::lit(w) * hermite_poly(*k1, (y - *c1) / *s1) * hermite_poly(*k2, (y - *c2) / *s2)
                })
                .sum();
            Ok(sd * prefactor * sum)
        }
        _ => {
            let (f0, f1) = f.reach();
            let (g0, g1) = g.reach();
            let (a, b) = (f0.max(g0), f1.min(g1));
            if a >= b {
                return Ok(T::zero());
            }
            let mut edges = f.edges();
            edges.extend(g.edges());
            integrate(|x| Ok(f.value(x) * g.value(x)), a, b, &edges, tight())
        }
    }
}

/// One separable product `coeff * prod_i factors[i](x_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term<T> {
    pub coeff: T,
    pub factors: Vec<Factor<T>>,
}

impl<T: Real> Term<T> {
    #[inline]
    fn value(&self, x: &[T]) -> T {
        let mut v = self.coeff;
        for (f, &xi) in self.factors.iter().zip(x) {
            if v == T::zero() {
                break;
            }
            v *= f.value(xi);
        }
        v
    }

    /// Partial derivative along axis `axis`, possibly several terms.
    fn partial(&self, axis: usize) -> Result<Vec<Term<T>>> {
        Ok(self.factors[axis]
            .derivative()?
            .into_iter()
            .map(|(c, f)| {
                let mut factors = self.factors.clone();
                factors[axis] = f;
                Term {
                    coeff: self.coeff * c,
                    factors,
                }
            })
            .collect())
    }
}

/// Evaluable test function from the closed family.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction<T> {
    dim: usize,
    terms: Vec<Term<T>>,
}

fn positive<T: Real>(name: &str, v: T) -> Result<T> {
    if v.is_finite() && v > T::zero() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl<T: Real> TestFunction<T> {
    /// Builds from raw terms; all terms must have `dim` factors.
    pub fn from_terms(dim: usize, terms: Vec<Term<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("test function dimension must be >= 1".into()));
        }
        for t in &terms {
            if t.factors.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.factors.len(),
                });
            }
        }
        Ok(Self { dim, terms })
    }

    /// `amplitude * exp(-inverse_width * |x - center|^2 / 2)`.
    pub fn gaussian_bump(center: &[T], inverse_width: T, amplitude: T) -> Result<Self> {
        let w = positive("inverse width", inverse_width)?;
        let width = T::one() / w.sqrt();
        let factors = center
            .iter()
            .map(|&c| Factor::Hermite {
                order: 0,
                center: c,
                width,
            })
            .collect();
        Self::from_terms(
            center.len(),
            vec![Term {
                coeff: amplitude,
                factors,
            }],
        )
    }

    /// `prod_i He_{alpha_i}(x_i / width) exp(-x_i^2 / (2 width^2))`.
    pub fn hermite_gaussian(alpha: &[u32], width: T) -> Result<Self> {
        let width = positive("width", width)?;
        let factors = alpha
            .iter()
            .map(|&order| Factor::Hermite {
                order,
                center: T::zero(),
                width,
            })
            .collect();
        Self::from_terms(
            alpha.len(),
            vec![Term {
                coeff: T::one(),
                factors,
            }],
        )
    }

    /// Indicator of the closed max-norm box `{x : max_i |x_i| <= radius}`.
    pub fn box_indicator(dim: usize, radius: T) -> Result<Self> {
        let m = positive("box radius", radius)?;
        Self::from_terms(
            dim,
            vec![Term {
                coeff: T::one(),
                factors: vec![Factor::Interval { lo: -m, hi: m }; dim],
            }],
        )
    }

    /// Tensor product `(x_1, ..., x_k) -> prod_j parts[j](x_j)` of
    /// lower-dimensional functions.
    pub fn product(parts: &[TestFunction<T>]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("product of no functions".into()));
        }
        let dim = parts.iter().map(|p| p.dim).sum();
        let mut terms = vec![Term {
            coeff: T::one(),
            factors: Vec::with_capacity(dim),
        }];
        for part in parts {
            let mut next = Vec::with_capacity(terms.len() * part.terms.len());
            for left in &terms {
                for right in &part.terms {
                    let mut factors = left.factors.clone();
                    factors.extend(right.factors.iter().cloned());
                    next.push(Term {
                        coeff: left.coeff * right.coeff,
                        factors,
                    });
                }
            }
            terms = next;
        }
        Self::from_terms(dim, terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term<T>] {
        &self.terms
    }

    pub fn is_smooth(&self) -> bool {
        self.terms.iter().all(|t| t.factors.iter().all(Factor::is_smooth))
    }

    /// True for a plain indicator of an axis-aligned box.
    pub fn is_indicator(&self) -> bool {
        self.terms.len() == 1
            && self.terms[0].coeff == T::one()
            && self.terms[0].factors.iter().all(|f| matches!(f, Factor::Interval { .. }))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self { dim: self.dim, terms })
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff * c,
                    factors: t.factors.clone(),
                })
                .collect(),
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            })
        }
    }

    pub fn evaluate(&self, x: &[T]) -> Result<T> {
        self.check_dim(x.len())?;
        Ok(self.value(x))
    }

    /// Evaluation without the dimension check; `x` must have `dim` entries.
    #[inline]
    pub fn value(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.dim);
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    /// `d phi / d x_axis` as a member of the family.
    pub fn partial(&self, axis: usize) -> Result<Self> {
        if axis >= self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: axis + 1,
            });
        }
        let mut terms = Vec::new();
        for t in &self.terms {
            terms.extend(t.partial(axis)?);
        }
        Ok(Self { dim: self.dim, terms })
    }

    pub fn gradient(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x.len())?;
        if !self.is_smooth() {
            return Err(Error::NotSmooth);
        }
        (0..self.dim).map(|i| Ok(self.partial(i)?.value(x))).collect()
    }

    /// `A phi = 1/2 sum_ij a_ij d_i d_j phi` as a member of the family.
    pub fn generator_image(&self, a: &Matrix<T>) -> Result<Self> {
        self.check_dim(a.size())?;
        if !self.is_smooth() {
            return Err(Error::NotSmooth);
        }
        let half = T::lit(0.5);
        let mut terms = Vec::new();
        for i in 0..self.dim {
            let di = self.partial(i)?;
            for j in 0..self.dim {
                let aij = a[(i, j)];
                if aij == T::zero() {
                    continue;
                }
                terms.extend(di.partial(j)?.scaled(half * aij).terms);
            }
        }
        Ok(Self { dim: self.dim, terms })
    }

    pub fn generator_apply(&self, x: &[T], a: &Matrix<T>) -> Result<T> {
        self.check_dim(x.len())?;
        Ok(self.generator_image(a)?.value(x))
    }

    /// `phi o eta_a` with `eta_a(x) = x / sqrt(a)`.
    pub fn scale_argument(&self, a: T) -> Result<Self> {
        let r = positive("scale", a)?.sqrt();
        Ok(Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff,
                    factors: t.factors.iter().map(|f| f.stretched(r)).collect(),
                })
                .collect(),
        })
    }

    /// `T_t phi(x) = int phi(y) p_t(y - x) dy` for diffusion matrix `a`.
    pub fn heat_smooth(&self, t: T, a: &Matrix<T>) -> Result<HeatSmoothed<T>> {
        self.check_dim(a.size())?;
        if !(t >= T::zero()) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("smoothing time {t} must be >= 0")));
        }
        if t == T::zero() {
            return Ok(HeatSmoothed::Closed(self.clone()));
        }
        if a.is_diagonal() {
            let terms = self
                .terms
                .iter()
                .map(|term| {
                    let mut coeff = term.coeff;
                    let factors = term
                        .factors
                        .iter()
                        .enumerate()
                        .map(|(i, f)| {
                            let (c, g) = f.heat(t * a[(i, i)]);
                            coeff *= c;
                            g
                        })
                        .collect();
                    Term { coeff, factors }
                })
                .collect();
            return Ok(HeatSmoothed::Closed(Self { dim: self.dim, terms }));
        }
        let mut scaled = a.clone();
        for i in 0..a.size() {
            for j in 0..a.size() {
                scaled[(i, j)] *= t;
            }
        }
        let lower = scaled
            .cholesky(T::epsilon())
            .map_err(|_| Error::InvalidParameter("diffusion matrix must be positive definite".into()))?;
        Ok(HeatSmoothed::Conditional {
            base: self.clone(),
            lower,
        })
    }

    /// `int phi(x) dx`.
    pub fn integral(&self) -> T {
        self.terms
            .iter()
            .map(|t| t.coeff * t.factors.iter().map(Factor::integral).fold(T::one(), |a, b| a * b))
            .sum()
    }

    /// `int phi(x) psi(x) dx`, factor by factor.
    pub fn inner_product(&self, other: &Self) -> Result<T> {
        self.check_dim(other.dim)?;
        let mut total = T::zero();
        for s in &self.terms {
            for o in &other.terms {
                let mut v = s.coeff * o.coeff;
                for (f, g) in s.factors.iter().zip(&o.factors) {
                    if v == T::zero() {
                        break;
                    }
                    v *= factor_inner(f, g)?;
                }
                total += v;
            }
        }
        Ok(total)
    }

    /// Max-norm radius outside which `|phi| < tol` (per term).
    pub fn support_radius(&self, tol: T) -> T {
        self.terms
            .iter()
            .flat_map(|t| t.factors.iter().map(move |f| f.support_radius(t.coeff, tol)))
            .fold(T::zero(), T::max)
    }

    pub fn cast<U: Real>(&self) -> TestFunction<U> {
        TestFunction {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: U::lit(t.coeff.as_f64()),
                    factors: t.factors.iter().map(Factor::cast).collect(),
                })
                .collect(),
        }
    }
}

/// Result of [`TestFunction::heat_smooth`].
#[derive(Clone, Debug, PartialEq)]
pub enum HeatSmoothed<T> {
    /// Exact member of the family.
    Closed(TestFunction<T>),
    /// `E phi(x + L Z)` with `L L^T = t a`, evaluated by integrating the
    /// standard normal coordinates one at a time; the last coordinate is
    /// done in closed form.
    Conditional { base: TestFunction<T>, lower: Matrix<T> },
}

impl<T: Real> HeatSmoothed<T> {
    pub fn dim(&self) -> usize {
        match self {
            HeatSmoothed::Closed(f) => f.dim(),
            HeatSmoothed::Conditional { base, .. } => base.dim(),
        }
    }

    pub fn as_closed(&self) -> Option<&TestFunction<T>> {
        match self {
            HeatSmoothed::Closed(f) => Some(f),
            HeatSmoothed::Conditional { .. } => None,
        }
    }

    pub fn evaluate(&self, x: &[T]) -> Result<T> {
        match self {
            HeatSmoothed::Closed(f) => f.evaluate(x),
            HeatSmoothed::Conditional { base, lower } => {
                base.check_dim(x.len())?;
                let mut total = T::zero();
                let mut z = Vec::with_capacity(x.len());
                for term in base.terms() {
                    let v = conditional_term(&term.factors, lower, x, &mut z)
                        .map_err(|e| Error::UnsupportedCombination(e.to_string()))?;
                    total += term.coeff * v;
                }
                Ok(total)
            }
        }
    }
}

pub(crate) fn conditional_term<T: Real>(factors: &[Factor<T>], lower: &Matrix<T>, x: &[T], z: &mut Vec<T>) -> Result<T> {
    let i = z.len();
    let mut shift = x[i];
    for (j, &zj) in z.iter().enumerate() {
        shift += lower[(i, j)] * zj;
    }
    let sd = lower[(i, i)];
    if i + 1 == factors.len() {
        let (c, f) = factors[i].heat(sd * sd);
        return Ok(c * f.value(shift));
    }
    let reach = T::lit(GAUSS_REACH);
    let edges: Vec<T> = factors[i].edges().into_iter().map(|e| (e - shift) / sd).collect();
    let (r0, r1) = factors[i].reach();
    let lo = ((r0 - shift) / sd).max(-reach);
    let hi = ((r1 - shift) / sd).min(reach);
    if lo >= hi {
        return Ok(T::zero());
    }
    integrate(
        |zi| {
            let fv = factors[i].value(shift + sd * zi);
            if fv == T::zero() {
                return Ok(T::zero());
            }
            z.push(zi);
            let inner = conditional_term(factors, lower, x, z);
            z.pop();
            Ok(zi.norm_pdf() * fv * inner?)
        },
        lo,
        hi,
        &edges,
        Tolerance {
            abs: 1e-13,
            rel: 1e-11,
            max_intervals: 4000,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump1() -> TestFunction<f64> {
        TestFunction::gaussian_bump(&[0.0], 1.0, 1.0).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(bump1().evaluate(&[0.0]).unwrap(), 1.0);
        let b = TestFunction::box_indicator(2, 1.0).unwrap();
        assert_eq!(b.evaluate(&[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(b.evaluate(&[1.01, 0.0]).unwrap(), 0.0);
        assert_eq!(
            b.evaluate(&[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn gradient_examples() {
        let g = TestFunction::<f64>::gaussian_bump(&[0.0, 0.0], 1.0, 1.0).unwrap();
        assert_eq!(g.gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let d = bump1().gradient(&[1.0]).unwrap()[0];
        assert!((d + (-0.5f64).exp()).abs() < 1e-15);
        let b = TestFunction::box_indicator(1, 1.0).unwrap();
        assert_eq!(b.gradient(&[0.0]), Err(Error::NotSmooth));
    }

    #[test]
    fn generator_examples() {
        let g = TestFunction::<f64>::gaussian_bump(&[0.0, 0.0], 1.0, 1.0).unwrap();
        let v = g.generator_apply(&[0.0, 0.0], &Matrix::identity(2)).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
        let b = TestFunction::box_indicator(2, 1.0).unwrap();
        assert_eq!(b.generator_apply(&[0.0, 0.0], &Matrix::identity(2)), Err(Error::NotSmooth));
    }

    #[test]
    fn generator_is_linear() {
        let a = Matrix::<f64>::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap();
        let phi = TestFunction::gaussian_bump(&[0.2, -0.1], 0.7, 1.3).unwrap();
        let psi = TestFunction::hermite_gaussian(&[1, 2], 0.8).unwrap();
        let sum = phi.add(&psi).unwrap();
        for x in [[0.0, 0.0], [0.4, -1.2], [2.0, 0.5]] {
            let lhs = sum.generator_apply(&x, &a).unwrap();
            let rhs = phi.generator_apply(&x, &a).unwrap() + psi.generator_apply(&x, &a).unwrap();
            assert!((lhs - rhs).abs() <= 1e-15 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn scaling_examples() {
        let b = TestFunction::<f64>::box_indicator(2, 1.0).unwrap();
        assert_eq!(b.scale_argument(1.0).unwrap(), b);
        assert_eq!(b.scale_argument(4.0).unwrap(), TestFunction::box_indicator(2, 2.0).unwrap());
        let g = TestFunction::<f64>::gaussian_bump(&[0.0], 0.6, 2.0).unwrap();
        let s = g.scale_argument(4.0).unwrap();
        let expected = TestFunction::gaussian_bump(&[0.0], 0.15, 2.0).unwrap();
        for x in [0.0f64, 0.5, 2.0, 3.7] {
            assert!((s.evaluate(&[x]).unwrap() - expected.evaluate(&[x]).unwrap()).abs() < 1e-15);
        }
        assert!((s.evaluate(&[2.0]).unwrap() - g.evaluate(&[1.0]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn heat_smoothing_examples() {
        let a = Matrix::<f64>::identity(1);
        let g = bump1();
        assert_eq!(g.heat_smooth(0.0, &a).unwrap().as_closed(), Some(&g));
        let t1 = g.heat_smooth(1.0, &a).unwrap();
        assert!((t1.evaluate(&[0.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        for (t, x) in [(0.5f64, 0.3f64), (2.0, -1.4)] {
            let closed = (1.0 + t).powf(-0.5) * (-x * x / (2.0 * (1.0 + t))).exp();
            let v = g.heat_smooth(t, &a).unwrap().evaluate(&[x]).unwrap();
            assert!((v - closed).abs() < 1e-15);
        }
    }

    #[test]
    fn hermite_factor_derivatives_chain() {
        // d/dx He_1(x) e^{-x^2/2} = (1 - x^2) e^{-x^2/2}
        let f = TestFunction::<f64>::hermite_gaussian(&[1], 1.0).unwrap();
        let x: f64 = 0.7;
        let d = f.gradient(&[x]).unwrap()[0];
        assert!((d - (1.0 - x * x) * (-x * x / 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn indicator_detection() {
        assert!(TestFunction::<f64>::box_indicator(3, 2.0).unwrap().is_indicator());
        assert!(!bump1().is_indicator());
        assert!(TestFunction::<f64>::box_indicator(1, -1.0).is_err());
        assert!(TestFunction::<f64>::gaussian_bump(&[0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn hermite_pair_integral_matches_closed_form() {
        // int He_1(x)^2 e^{-x^2} dx = sqrt(pi)/2
        let f = Factor::Hermite {
            order: 1,
            center: 0.0,
            width: 1.0,
        };
        let v = factor_inner(&f, &f).unwrap();
        assert!((v - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-14);
        // two offset Gaussians
        let g = Factor::Hermite {
            order: 0,
            center: 1.0,
            width: 2.0,
        };
        let h = Factor::Hermite {
            order: 0,
            center: 0.0,
            width: 1.0,
        };
        let exact = (2.0 * std::f64::consts::PI * 4.0 / 5.0).sqrt() * (-1.0f64 / 10.0).exp();
        assert!((factor_inner(&g, &h).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn mixed_factor_integrals() {
        let iv = Factor::Interval { lo: -1.0, hi: 1.0 };
        let g = Factor::Hermite {
            order: 0,
            center: 0.0,
            width: 1.0,
        };
        let exact = (2.0 * std::f64::consts::PI).sqrt() * (2.0 * 1.0f64.norm_cdf() - 1.0);
        assert!((factor_inner(&iv, &g).unwrap() - exact).abs() < 1e-13);
        assert_eq!(factor_inner(&iv, &Factor::Interval { lo: 0.5, hi: 3.0 }).unwrap(), 0.5);
        assert_eq!(factor_inner(&iv, &Factor::Interval { lo: 2.0, hi: 3.0 }).unwrap(), 0.0);
    }
}
