use fluxlab_core::analytic::{covariance_terms, gram_factor, gram_matrix};
use fluxlab_core::quadrature::{integrate, Tolerance};
use fluxlab_core::stats::covariance_with_se;
use fluxlab_core::{
    box_i, gaussian_density, increment_variance, limit_covariance, pair_integral, q_forms, sample_limit_fdd, sigma1,
    sigma2, Function, LimitSampler, Mat, Point, RngStream, Spec, TestFunction,
};
use rand::Rng;

fn unit_box(d: usize) -> Function {
    TestFunction::box_indicator(d, 1.0).unwrap()
}

fn bump(center: &[f64], w: f64) -> Function {
    TestFunction::gaussian_bump(center, w, 1.0).unwrap()
}

fn eye(d: usize) -> Mat {
    Mat::identity(d)
}

fn correlated() -> Mat {
    Mat::from_rows(&[vec![1.0, 0.4], vec![0.4, 0.7]]).unwrap()
}

fn tol() -> Tolerance {
    Tolerance {
        abs: 1e-13,
        rel: 1e-12,
        max_intervals: 2000,
    }
}

fn ln_det2(m: &Mat) -> f64 {
    (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).ln()
}

/// `C(u)` for two isotropic unit-amplitude Gaussians in d = 2: the
/// convolution of three Gaussians is a Gaussian density evaluated at the
/// centre offset.
fn gaussian_pair_oracle(u: f64, c1: &[f64], s1: f64, c2: &[f64], s2: f64, a: &Mat) -> f64 {
    let iso = s1 * s1 + s2 * s2;
    let cov = Mat::from_rows(&[
        vec![iso + u * a[(0, 0)], u * a[(0, 1)]],
        vec![u * a[(1, 0)], iso + u * a[(1, 1)]],
    ])
    .unwrap();
    let dx = [c2[0] - c1[0], c2[1] - c1[1]];
    let det = ln_det2(&cov).exp();
    let inv = [[cov[(1, 1)] / det, -cov[(0, 1)] / det], [-cov[(1, 0)] / det, cov[(0, 0)] / det]];
    let q = dx[0] * (inv[0][0] * dx[0] + inv[0][1] * dx[1]) + dx[1] * (inv[1][0] * dx[0] + inv[1][1] * dx[1]);
    let density = (-0.5 * q).exp() / (std::f64::consts::TAU * det.sqrt());
    std::f64::consts::TAU.powi(2) * (s1 * s2).powi(2) * density
}

#[test]
fn density_examples() {
    let a = eye(1);
    let p0 = gaussian_density(&[0.0], 1.0, &a).unwrap();
    assert!((p0 - 0.398_942_280_401_432_7).abs() < 1e-15);
    let b = correlated();
    for x in [[0.3, -1.2], [2.0, 0.5], [-0.7, -0.1]] {
        let neg = [-x[0], -x[1]];
        assert_eq!(gaussian_density(&x, 0.8, &b).unwrap(), gaussian_density(&neg, 0.8, &b).unwrap());
    }
    let mass = integrate(|x: f64| gaussian_density(&[x], 1.0, &a), -40.0, 40.0, &[0.0], tol()).unwrap();
    assert!((mass - 1.0).abs() < 1e-10, "{mass}");
    assert!(gaussian_density(&[0.0], 0.0, &a).is_err());
}

#[test]
fn box_closed_form_matches_pair_integral() {
    for d in [1, 2] {
        let f = unit_box(d);
        for u in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let closed = box_i(u, 1.0, d).unwrap();
            let quad = pair_integral(u, &f, &f, &eye(d)).unwrap();
            assert!((closed - quad).abs() < 1e-8, "d={d} u={u}: {closed} vs {quad}");
        }
    }
    let f = TestFunction::box_indicator(1, 1.7).unwrap();
    let quad = pair_integral(0.6, &f, &f, &eye(1)).unwrap();
    assert!((box_i(0.6, 1.7, 1).unwrap() - quad).abs() < 1e-8);
}

#[test]
fn pair_integral_is_symmetric() {
    let cases: Vec<(Function, Function, Mat)> = vec![
        (unit_box(1), bump(&[0.4], 2.0), eye(1)),
        (TestFunction::hermite_gaussian(&[2], 0.8).unwrap(), bump(&[-0.3], 0.5), eye(1)),
        (unit_box(2), bump(&[0.2, -0.5], 1.5), Mat::diagonal(&[0.5, 2.0])),
        (bump(&[0.2, -0.5], 1.5), bump(&[-0.4, 0.1], 0.7), correlated()),
        (unit_box(2), bump(&[0.3, 0.1], 1.0), correlated()),
    ];
    for (phi, psi, a) in &cases {
        for u in [0.0, 0.3, 1.7] {
            let x = pair_integral(u, phi, psi, a).unwrap();
            let y = pair_integral(u, psi, phi, a).unwrap();
            assert!((x - y).abs() < 1e-10, "u={u}: {x} vs {y}");
        }
    }
}

#[test]
fn pair_integral_small_time_limit() {
    let f = unit_box(1);
    assert_eq!(pair_integral(0.0, &f, &f, &eye(1)).unwrap(), 2.0);
    let c = pair_integral(1e-10, &f, &f, &eye(1)).unwrap();
    assert!((c - 2.0).abs() < 1e-4, "{c}");
}

#[test]
fn correlated_gaussian_pairs_match_closed_form() {
    let a = correlated();
    let (c1, s1, c2, s2) = ([0.3, -0.2], 0.8, [-0.5, 0.4], 1.3);
    let phi = bump(&c1, 1.0 / (s1 * s1));
    let psi = bump(&c2, 1.0 / (s2 * s2));
    for u in [0.25, 1.0, 3.0] {
        let exact = gaussian_pair_oracle(u, &c1, s1, &c2, s2, &a);
        let got = pair_integral(u, &phi, &psi, &a).unwrap();
        assert!((exact - got).abs() < 1e-8 * exact.abs().max(1.0), "u={u}: {got} vs {exact}");
    }
}

#[test]
fn correlated_box_pairs_are_reflection_invariant() {
    // the unit box is symmetric under x_2 -> -x_2, which flips the sign of a_12
    let f = unit_box(2);
    let plus = correlated();
    let minus = Mat::from_rows(&[vec![1.0, -0.4], vec![-0.4, 0.7]]).unwrap();
    for u in [0.2, 1.0] {
        let x = pair_integral(u, &f, &f, &plus).unwrap();
        let y = pair_integral(u, &f, &f, &minus).unwrap();
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        // between the two diagonal extremes with the same marginals
        let diag = pair_integral(u, &f, &f, &Mat::diagonal(&[1.0, 0.7])).unwrap();
        assert!(x > diag, "correlation concentrates the displacement: {x} vs {diag}");
    }
}

#[test]
fn correlated_box_pair_matches_monte_carlo() {
    // C(u) = E over Y uniform on the box of (2M)^d P(Y + kappa B_u in box)
    let a = correlated();
    let f = unit_box(2);
    let u = 0.7;
    let exact = pair_integral(u, &f, &f, &a).unwrap();
    let k = a.cholesky(1e-12).unwrap();
    let mut rng = RngStream::new(17, 0);
    let draws = 400_000;
    let mut hits = 0u64;
    for _ in 0..draws {
        let y = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let g: [f64; 2] = [rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)];
        let z0 = y[0] + u.sqrt() * k[(0, 0)] * g[0];
        let z1 = y[1] + u.sqrt() * (k[(1, 0)] * g[0] + k[(1, 1)] * g[1]);
        if z0.abs() <= 1.0 && z1.abs() <= 1.0 {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    let se = 4.0 * (p * (1.0 - p) / draws as f64).sqrt();
    assert!((4.0 * p - exact).abs() < 5.0 * se, "{exact} vs {} +- {se}", 4.0 * p);
}

#[test]
fn box_pair_integral_decreases_to_zero() {
    let f = unit_box(1);
    let us: Vec<f64> = (0..40).map(|k| 0.05 * 1.25f64.powi(k)).collect();
    let values: Vec<f64> = us.iter().map(|&u| pair_integral(u, &f, &f, &eye(1)).unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]));
    // C(u) ~ (2M)^2 / sqrt(2 pi u) for large u
    let (u, c) = (us[39], values[39]);
    assert!((c * (std::f64::consts::TAU * u).sqrt() / 4.0 - 1.0).abs() < 0.01, "{c}");
    assert!(pair_integral(1e8, &f, &f, &eye(1)).unwrap() < 1e-3);
}

#[test]
fn covariance_scaling_identity() {
    let cases: Vec<(Function, Function, Mat)> = vec![
        (unit_box(1), unit_box(1), eye(1)),
        (unit_box(1), bump(&[0.3], 2.0), eye(1)),
        (unit_box(2), bump(&[0.3, -0.1], 1.0), Mat::diagonal(&[1.0, 0.5])),
        (bump(&[0.3, -0.1], 1.0), bump(&[-0.2, 0.2], 3.0), correlated()),
    ];
    for (phi, psi, a) in &cases {
        let d = phi.dim() as i32;
        for scale in [2.0, 4.0] {
            let sp = phi.scale_argument(scale).unwrap();
            let ss = psi.scale_argument(scale).unwrap();
            for u in [0.0, 0.4, 1.0] {
                let lhs = pair_integral(scale * u, &sp, &ss, a).unwrap();
                let rhs = scale.powf(d as f64 / 2.0) * pair_integral(u, phi, psi, a).unwrap();
                assert!((lhs - rhs).abs() < 1e-7, "a={scale} u={u}: {lhs} vs {rhs}");
            }
            let (s, t) = (0.3, 0.8);
            let lhs = covariance_terms(scale * s, &sp, scale * t, &ss, a).unwrap();
            let rhs = covariance_terms(s, phi, t, psi, a).unwrap();
            let factor = scale.powf(d as f64 / 2.0);
            assert!((lhs.sigma1 - factor * rhs.sigma1).abs() < 1e-7);
            assert!((lhs.sigma2 - factor * rhs.sigma2).abs() < 1e-7);
        }
    }
}

#[test]
fn sigma_examples() {
    let f = unit_box(1);
    let a = eye(1);
    let i1 = box_i(1.0, 1.0, 1).unwrap();
    let i_half = box_i(0.5, 1.0, 1).unwrap();
    assert_eq!(sigma1(0.0, &f, 0.0, &f, &a).unwrap(), 0.0);
    assert_eq!(sigma2(0.0, &f, 0.0, &f, &a).unwrap(), 0.0);
    let s1 = sigma1(0.5, &f, 0.5, &f, &a).unwrap();
    assert!((s1 - (2.0 - i1)).abs() < 1e-9, "{s1}");
    let s2 = sigma2(0.5, &f, 0.5, &f, &a).unwrap();
    assert!((s2 - (i1 - 2.0 * i_half + 2.0)).abs() < 1e-9, "{s2}");
    let g = bump(&[0.4], 1.5);
    for t in [0.2, 1.0, 3.0] {
        assert!(sigma2(0.0, &f, t, &g, &a).unwrap().abs() < 1e-12);
        let x = sigma1(0.7, &f, t, &g, &a).unwrap();
        let y = sigma1(t, &g, 0.7, &f, &a).unwrap();
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn limit_covariance_structure() {
    let f = unit_box(1);
    let g = bump(&[0.2], 1.0);
    let a = eye(1);
    let ou = Spec::new(1.0, 0.0, a.clone()).unwrap();
    let s1 = sigma1(0.4, &f, 0.9, &g, &a).unwrap();
    assert!((limit_covariance(0.4, &f, 0.9, &g, &ou).unwrap() - s1).abs() < 1e-14);
    for lambda in [0.5, 1.0, 2.0] {
        let spec = Spec::new(lambda, lambda, a.clone()).unwrap();
        assert_eq!(limit_covariance(0.0, &f, 0.0, &f, &spec).unwrap(), 0.0);
        for t in [0.25, 1.0, 4.0] {
            let diag = limit_covariance(t, &f, t, &f, &spec).unwrap();
            let expected = 2.0 * lambda * (2.0 - box_i(t, 1.0, 1).unwrap());
            assert!((diag - expected).abs() < 1e-9, "{diag} vs {expected}");
        }
    }
}

#[test]
fn increment_variance_examples() {
    let f = unit_box(1);
    let a = eye(1);
    let poisson = Spec::new(1.0, 1.0, a.clone()).unwrap();
    assert_eq!(increment_variance(0.7, 0.7, &f, &poisson).unwrap(), 0.0);
    let early = increment_variance(0.0, 1.0, &f, &poisson).unwrap();
    let late = increment_variance(1.0, 2.0, &f, &poisson).unwrap();
    assert!((early - late).abs() < 1e-8, "{early} vs {late}");
    // the bilinear expansion reduces to 2 lambda (int phi^2 - C(t - s))
    let expected = 2.0 * (2.0 - box_i(1.0, 1.0, 1).unwrap());
    assert!((early - expected).abs() < 1e-9);
    let mid = increment_variance(0.5, 1.0, &f, &poisson).unwrap();
    assert!((mid - 2.0 * (2.0 - box_i(0.5, 1.0, 1).unwrap())).abs() < 1e-9);

    let det = Spec::new(2.0, 0.0, a.clone()).unwrap();
    let (s, t) = (0.3, 1.1);
    let sg = |x: f64, y: f64| sigma1(x, &f, y, &f, &a).unwrap();
    let expected = 2.0 * (sg(t, t) + sg(s, s) - 2.0 * sg(s, t));
    assert!((increment_variance(s, t, &f, &det).unwrap() - expected).abs() < 1e-12);
    assert!(increment_variance(1.0, 0.5, &f, &det).is_err());
}

#[test]
fn long_run_covariance_settles() {
    let f = unit_box(1);
    let spec = Spec::new(1.0, 1.0, eye(1)).unwrap();
    let tau = 0.5;
    let cov = |s: f64| limit_covariance(s, &f, s + tau, &f, &spec).unwrap();
    let values: Vec<f64> = [8.0, 16.0, 32.0, 64.0].iter().map(|&s| cov(s)).collect();
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
    // in one dimension C(u) decays like u^{-1/2}, so each doubling of s
    // shrinks the step by about 1/sqrt(2)
    for w in diffs.windows(2) {
        assert!((w[1] / w[0] - 0.5f64.sqrt()).abs() < 0.06, "{diffs:?}");
    }
    let stationary = 2.0 + box_i(tau, 1.0, 1).unwrap();
    assert!((cov(1e8) - stationary).abs() < 1e-3);
    // faster in three dimensions
    let f3 = unit_box(3);
    let spec3 = Spec::new(1.0, 1.0, eye(3)).unwrap();
    let cov3 = |s: f64| limit_covariance(s, &f3, s + tau, &f3, &spec3).unwrap();
    let d3: Vec<f64> = [8.0, 16.0, 32.0].iter().map(|&s| cov3(s)).collect();
    let ratio = (d3[2] - d3[1]).abs() / (d3[1] - d3[0]).abs();
    assert!((ratio - 0.5f64.powf(1.5)).abs() < 0.06, "{ratio}");
}

#[test]
fn quadratic_forms_closed_values() {
    let f = TestFunction::gaussian_bump(&[0.0], 1.0, 1.0).unwrap();
    let (q1, q2) = q_forms(&f, &f, &eye(1)).unwrap();
    let root_pi = std::f64::consts::PI.sqrt();
    assert!((q1 - root_pi / 2.0).abs() < 1e-7, "{q1}");
    assert!((q2 - 3.0 / 16.0 * root_pi).abs() < 1e-7, "{q2}");
    assert!(q_forms(&unit_box(1), &f, &eye(1)).is_err());
}

#[test]
fn first_form_integrates_by_parts() {
    let cases: Vec<(Function, Function, Mat)> = vec![
        (bump(&[0.0], 1.0), bump(&[0.5], 2.0), eye(1)),
        (TestFunction::hermite_gaussian(&[1], 0.7).unwrap(), bump(&[0.2], 0.6), Mat::diagonal(&[2.5])),
        (bump(&[0.1, -0.3], 1.2), TestFunction::hermite_gaussian(&[2, 1], 0.9).unwrap(), correlated()),
    ];
    for (phi, psi, a) in &cases {
        let (q1, _) = q_forms(phi, psi, a).unwrap();
        let ibp = -2.0 * phi.inner_product(&psi.generator_image(a).unwrap()).unwrap();
        assert!((q1 - ibp).abs() < 1e-6, "{q1} vs {ibp}");
        let (q1_swapped, _) = q_forms(psi, phi, a).unwrap();
        assert!((q1 - q1_swapped).abs() < 1e-10);
    }
}

#[test]
fn time_derivative_is_generator_pairing() {
    let cases: Vec<(Function, Function, Mat)> = vec![
        (unit_box(1), bump(&[0.3], 1.0), eye(1)),
        (bump(&[0.0], 2.0), bump(&[-0.4], 0.8), Mat::diagonal(&[1.5])),
        (unit_box(2), bump(&[0.1, 0.2], 1.0), Mat::diagonal(&[1.0, 0.5])),
    ];
    let h = 1e-3;
    for (phi, psi, a) in &cases {
        let generated = psi.generator_image(a).unwrap();
        for u in [0.3, 1.0] {
            let fd = (pair_integral(u + h, phi, psi, a).unwrap() - pair_integral(u - h, phi, psi, a).unwrap()) / (2.0 * h);
            let exact = pair_integral(u, phi, &generated, a).unwrap();
            assert!((fd - exact).abs() < 1e-4, "u={u}: {fd} vs {exact}");
        }
    }
}

fn random_function(rng: &mut RngStream, d: usize) -> Function {
    if rng.random_bool(0.4) {
        TestFunction::box_indicator(d, rng.random_range(0.3..2.0)).unwrap()
    } else {
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        TestFunction::gaussian_bump(&c, rng.random_range(0.3..3.0), rng.random_range(-2.0..2.0)).unwrap()
    }
}

#[test]
fn gram_matrices_are_positive_semidefinite() {
    let mut rng = RngStream::new(2024, 0);
    for set in 0..50 {
        let d = 1 + set % 2;
        let a = if d == 1 {
            Mat::diagonal(&[rng.random_range(0.3..2.0)])
        } else {
            Mat::diagonal(&[rng.random_range(0.3..2.0), rng.random_range(0.3..2.0)])
        };
        let rho0 = rng.random_range(0.0..3.0);
        let v0 = rng.random_range(0.0..3.0);
        let spec = Spec::new(rho0, v0, a).unwrap();
        let k = rng.random_range(2..7);
        let points: Vec<Point> = (0..k)
            .map(|_| {
                let f = random_function(&mut rng, d);
                let t = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..3.0) };
                Point::new(t, f).unwrap()
            })
            .collect();
        let g = gram_matrix(&points, &spec).unwrap();
        assert!(g.is_symmetric(0.0));
        let factor = gram_factor(&g).unwrap_or_else(|e| panic!("set {set}: {e}"));
        let rebuilt = factor.matmul(&factor.transpose());
        let scale = (0..k).map(|i| g[(i, i)].abs()).fold(1.0, f64::max);
        assert!(rebuilt.max_abs_diff(&g) < 1e-7 * scale, "set {set}");
    }
}

#[test]
fn correlated_gram_is_positive_semidefinite() {
    let spec = Spec::new(1.0, 0.5, correlated()).unwrap();
    let points = vec![
        Point::new(0.5, bump(&[0.0, 0.0], 1.0)).unwrap(),
        Point::new(1.0, bump(&[0.0, 0.0], 1.0)).unwrap(),
        Point::new(1.0, bump(&[0.5, -0.5], 2.0)).unwrap(),
    ];
    let g = gram_matrix(&points, &spec).unwrap();
    assert!(gram_factor(&g).is_ok());
}

fn fdd_points() -> Vec<Point> {
    let f = unit_box(1);
    let g = bump(&[0.3], 2.0);
    vec![
        Point::new(0.25, f.clone()).unwrap(),
        Point::new(0.5, f.clone()).unwrap(),
        Point::new(1.0, f).unwrap(),
        Point::new(1.0, g).unwrap(),
    ]
}

fn empirical_check(samples: &[Vec<f64>], gram: &Mat, z_max: f64) {
    let k = gram.size();
    for i in 0..k {
        for j in i..k {
            let x: Vec<f64> = samples.iter().map(|r| r[i]).collect();
            let y: Vec<f64> = samples.iter().map(|r| r[j]).collect();
            let (c, se) = covariance_with_se(&x, &y);
            assert!((c - gram[(i, j)]).abs() < z_max * se, "({i},{j}): {c} vs {} (se {se})", gram[(i, j)]);
        }
    }
}

#[test]
fn limit_samples_reproduce_gram() {
    let spec = Spec::new(1.0, 1.0, eye(1)).unwrap();
    let points = fdd_points();
    let sampler = LimitSampler::new(&points, &spec).unwrap();
    let samples: Vec<Vec<f64>> = (0..100_000).map(|r| sampler.sample(&mut RngStream::new(5, r))).collect();
    empirical_check(&samples, sampler.gram(), 5.0);
}

#[test]
fn limit_samples_at_time_zero_vanish() {
    let spec = Spec::new(1.0, 1.0, eye(1)).unwrap();
    let points = vec![Point::new(0.0, unit_box(1)).unwrap()];
    let mut rng = RngStream::new(1, 0);
    for _ in 0..100 {
        assert_eq!(sample_limit_fdd(&points, &spec, &mut rng).unwrap(), vec![0.0]);
    }
}

#[test]
fn independent_components_add_up() {
    let (rho0, v0) = (1.5, 0.6);
    let points = fdd_points();
    let full = Spec::new(rho0, v0, eye(1)).unwrap();
    let walk = LimitSampler::new(&points, &full.with_moments(rho0, 0.0).unwrap()).unwrap();
    let initial = LimitSampler::new(&points, &full.with_moments(0.0, v0).unwrap()).unwrap();
    let target = gram_matrix(&points, &full).unwrap();
    for i in 0..target.size() {
        for j in 0..target.size() {
            assert!((walk.gram()[(i, j)] + initial.gram()[(i, j)] - target[(i, j)]).abs() < 1e-12);
        }
    }
    let samples: Vec<Vec<f64>> = (0..100_000)
        .map(|r| {
            let x = walk.sample(&mut RngStream::new(11, r));
            let y = initial.sample(&mut RngStream::new(12, r));
            x.iter().zip(&y).map(|(p, q)| p + q).collect()
        })
        .collect();
    empirical_check(&samples, &target, 5.0);
}
