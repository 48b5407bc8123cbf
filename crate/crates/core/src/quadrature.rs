//! One-dimensional quadrature rules.
//!
//! * [`integrate`]: globally adaptive Gauss-Kronrod (7/15) on a finite
//!   interval with optional interior breakpoints.
//! * [`gauss_hermite`]: nodes and weights for `int f(z) exp(-z^2/2) dz`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::real::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod abscissae.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Accuracy request for [`integrate`]: stop when the error estimate is
/// below `max(abs, rel * |estimate|)`.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-14,
            rel: 1e-12,
            max_intervals: 2000,
        }
    }
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Self {
            abs,
            ..Self::default()
        }
    }
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn kronrod<T, F>(f: &mut F, a: T, b: T) -> Result<(T, T)>
where
    T: Real,
    F: FnMut(T) -> Result<T>,
{
    let half = T::lit(0.5);
    let center = half * (a + b);
    let radius = half * (b - a);
    let fc = f(center)?;
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = radius * T::lit(XGK[j]);
        let pair = f(center - dx)? + f(center + dx)?;
        kron += T::lit(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss += T::lit(WG[j / 2]) * pair;
        }
    }
    Ok((kron * radius, ((kron - gauss) * radius).abs()))
}

/// Integrates `f` over `[a, b]`, splitting first at the given breakpoints
/// (those outside the open interval are ignored).
pub fn integrate<T, F>(mut f: F, a: T, b: T, breakpoints: &[T], tol: Tolerance) -> Result<T>
where
    T: Real,
    F: FnMut(T) -> Result<T>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter("integration limits must be finite".into()));
    }
    if a == b {
        return Ok(T::zero());
    }
    if a > b {
        return integrate(f, b, a, breakpoints, tol).map(|v| -v);
    }
    let mut cuts: Vec<T> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);

    let mut segments = Vec::with_capacity(64);
    for w in edges.windows(2) {
        let (value, error) = kronrod(&mut f, w[0], w[1])?;
        segments.push(Segment {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }

    let abs = T::lit(tol.abs);
    let rel = T::lit(tol.rel);
    // an interval narrower than this cannot be split meaningfully
    let resolution = T::epsilon() * T::lit(64.0) * (b - a).max(a.abs().max(b.abs()));
    loop {
        let total: T = segments.iter().map(|s| s.value).sum();
        let err: T = segments.iter().map(|s| s.error).sum();
        if err <= abs.max(rel * total.abs()) {
            return Ok(total);
        }
        if segments.len() >= tol.max_intervals {
            return Err(Error::QuadratureNotConverged(format!(
                "error estimate {:e} after {} subintervals",
                err.as_f64(),
                segments.len()
            )));
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .expect("at least one segment");
        let seg = segments.swap_remove(worst);
        if seg.b - seg.a <= resolution {
            // cannot refine further; accept its contribution as is
            segments.push(Segment { error: T::zero(), ..seg });
            continue;
        }
        let mid = T::lit(0.5) * (seg.a + seg.b);
        for (lo, hi) in [(seg.a, mid), (mid, seg.b)] {
            let (value, error) = kronrod(&mut f, lo, hi)?;
            segments.push(Segment {
                a: lo,
                b: hi,
                value,
                error,
            });
        }
    }
}

/// Nodes and weights for `int_R f(z) exp(-z^2 / 2) dz ~ sum w_i f(z_i)`.
///
/// Computed once per order by Newton iteration on normalised Hermite
/// polynomials and cached for the life of the process.
pub fn gauss_hermite(order: usize) -> &'static [(f64, f64)] {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static [(f64, f64)]>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    *guard
        .entry(order)
        .or_insert_with(|| Box::leak(hermite_rule(order).into_boxed_slice()))
}

fn hermite_rule(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "Gauss-Hermite order must be positive");
    // Physicists' rule (weight e^{-x^2}) then rescaled.
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut derivative = 1.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            derivative = (2.0 * nf).sqrt() * p2;
            let step = p1 / derivative;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (derivative * derivative);
        w[n - 1 - i] = w[i];
    }
    let s2 = std::f64::consts::SQRT_2;
    x.iter()
        .zip(&w)
        .rev()
        .map(|(&xi, &wi)| (s2 * xi, s2 * wi))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_integrates_smooth_functions() {
        let v = integrate(|x: f64| Ok(x.sin()), 0.0, std::f64::consts::PI, &[], Tolerance::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-13);
        let v = integrate(|x: f64| Ok((-x * x).exp()), -8.0, 8.0, &[], Tolerance::default()).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        let r = integrate(|x: f64| Ok(x), 1.0, 0.0, &[], Tolerance::default()).unwrap();
        assert!((r + 0.5).abs() < 1e-15);
    }

    #[test]
    fn breakpoints_handle_kinks() {
        let v = integrate(|x: f64| Ok(if x < 0.3 { 1.0 } else { 0.0 }), 0.0, 1.0, &[0.3], Tolerance::default())
            .unwrap();
        assert!((v - 0.3).abs() < 1e-14);
    }

    #[test]
    fn errors_propagate() {
        let r = integrate(
            |x: f64| if x > 0.5 { Err(Error::NotSmooth) } else { Ok(x) },
            0.0,
            1.0,
            &[],
            Tolerance::default(),
        );
        assert_eq!(r, Err(Error::NotSmooth));
    }

    #[test]
    fn hermite_moments() {
        let root = (2.0 * std::f64::consts::PI).sqrt();
        for n in [1usize, 2, 5, 16, 40, 128] {
            let rule = gauss_hermite(n);
            assert_eq!(rule.len(), n);
            let m0: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((m0 - root).abs() < 1e-12, "n={n} m0={m0}");
            if n >= 3 {
                let m2: f64 = rule.iter().map(|(z, w)| w * z * z).sum();
                let m4: f64 = rule.iter().map(|(z, w)| w * z.powi(4)).sum();
                assert!((m2 - root).abs() < 1e-12);
                assert!((m4 - 3.0 * root).abs() < 1e-11);
            }
            for pair in rule.windows(2) {
                assert!(pair[0].0 < pair[1].0);
            }
        }
    }
}
