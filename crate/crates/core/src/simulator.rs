//! Microscopic system of independent walkers and its scaled current.
//!
//! Walkers start from i.i.d. occupations on the box `[-R, R]^d` and are
//! observed only at the grid epochs; the displacement over each gap is an
//! exact compound-Poisson draw, so there is no time discretisation. The
//! current at epoch `t_k` is
//!
//! `xi_n(t_k, phi) = n^{-d/4} sum_walkers [phi((X(n t_k) - [n v t_k]) / sqrt n) - phi(m / sqrt n)]`
//!
//! where `m` is the walker's start site and `[.]` truncates toward zero.

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson};

use crate::error::{Error, Result};
use crate::kernel::{DisplacementSampler, JumpKernel};
use crate::real::Real;
use crate::rng::{site_lane, RngStream};
use crate::test_functions::TestFunction;

/// Law of the i.i.d. initial occupation numbers.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialLaw {
    Poisson(f64),
    Deterministic(u64),
    /// Number of failures before the first success, success probability `p`.
    Geometric(f64),
    /// Finite table of `(occupation, probability)`.
    CustomPmf(Vec<(u64, f64)>),
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialLaw::Poisson(l) if !(l.is_finite() && *l > 0.0) => {
                Err(Error::InvalidParameter(format!("poisson mean {l} must be positive")))
            }
            InitialLaw::Geometric(p) if !(*p > 0.0 && *p < 1.0) => {
                Err(Error::InvalidParameter(format!("geometric success probability {p} must lie in (0, 1)")))
            }
            InitialLaw::CustomPmf(table) => {
                if table.is_empty() {
                    return Err(Error::EmptyInput("occupation table".into()));
                }
                let mut seen = std::collections::HashSet::new();
                for &(k, p) in table {
                    if !(p.is_finite() && p >= 0.0) {
                        return Err(Error::InvalidParameter(format!("probability {p} of occupation {k}")));
                    }
                    if !seen.insert(k) {
                        return Err(Error::InvalidParameter(format!("occupation {k} listed twice")));
                    }
                }
                let sum: f64 = table.iter().map(|(_, p)| p).sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::ProbabilitySum { sum });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `(rho0, v0)`: mean and variance of one occupation number.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            InitialLaw::Poisson(l) => (*l, *l),
            InitialLaw::Deterministic(k) => (*k as f64, 0.0),
            InitialLaw::Geometric(p) => ((1.0 - p) / p, (1.0 - p) / (p * p)),
            InitialLaw::CustomPmf(table) => {
                let mean: f64 = table.iter().map(|&(k, p)| k as f64 * p).sum();
                let var: f64 = table.iter().map(|&(k, p)| (k as f64 - mean).powi(2) * p).sum();
                (mean, var)
            }
        }
    }

    fn sampler(&self) -> Result<LawSampler> {
        self.validate()?;
        Ok(match self {
            InitialLaw::Poisson(l) => {
                LawSampler::Poisson(Poisson::new(*l).map_err(|e| Error::InvalidParameter(e.to_string()))?)
            }
            InitialLaw::Deterministic(k) => LawSampler::Fixed(*k),
            InitialLaw::Geometric(p) => {
                LawSampler::Geometric(Geometric::new(*p).map_err(|e| Error::InvalidParameter(e.to_string()))?)
            }
            InitialLaw::CustomPmf(table) => {
                let mut acc = 0.0;
                let cumulative = table
                    .iter()
                    .map(|&(k, p)| {
                        acc += p;
                        (acc, k)
                    })
                    .collect();
                LawSampler::Table(cumulative)
            }
        })
    }
}

/// `(rho0, v0)` of an initial law.
pub fn moments_of_law(law: &InitialLaw) -> (f64, f64) {
    law.moments()
}

#[derive(Clone, Debug)]
enum LawSampler {
    Poisson(Poisson<f64>),
    Fixed(u64),
    Geometric(Geometric),
    Table(Vec<(f64, u64)>),
}

impl LawSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            LawSampler::Poisson(d) => d.sample(rng) as u64,
            LawSampler::Fixed(k) => *k,
            LawSampler::Geometric(d) => d.sample(rng),
            LawSampler::Table(cumulative) => {
                let u: f64 = rng.random();
                cumulative
                    .iter()
                    .find(|(c, _)| u < *c)
                    .or(cumulative.last())
                    .map(|&(_, k)| k)
                    .unwrap_or(0)
            }
        }
    }
}

/// Componentwise truncation toward zero.
pub fn integer_part<T: Real>(x: &[T]) -> Vec<i64> {
    x.iter()
        .map(|v| v.trunc().to_i64().expect("integer part fits in i64"))
        .collect()
}

/// Radius `R` of the start region `[-R, R]^d` (lattice units).
///
/// `R = ceil(r sqrt(n) + c sqrt(n T) sqrt(2 ln(1/tail_tol)))`, where `r` is
/// the max-norm radius outside which every observable is below `tail_tol`
/// and `c` the largest singular value of `kappa`: a walker started farther
/// out reaches the support only through a Gaussian deviation of that size.
pub fn truncation_radius<T: Real>(
    n: u64,
    horizon: T,
    kernel: &JumpKernel<T>,
    functions: &[TestFunction<T>],
    box_radius: Option<T>,
    tail_tol: f64,
) -> Result<i64> {
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::InvalidParameter(format!("tail tolerance {tail_tol} must lie in (0, 1)")));
    }
    let tol = T::lit(tail_tol);
    let reach = functions
        .iter()
        .map(|f| f.support_radius(tol))
        .chain(box_radius)
        .fold(T::zero(), T::max)
        .as_f64();
    let c = kernel.second_moment().largest_eigenvalue().as_f64().sqrt();
    let nf = n as f64;
    let r = reach * nf.sqrt() + c * (nf * horizon.as_f64()).sqrt() * (2.0 * (1.0 / tail_tol).ln()).sqrt();
    Ok(r.ceil().max(0.0) as i64)
}

/// Uniform grid `0, T/k, ..., T`.
pub fn uniform_grid<T: Real>(horizon: T, intervals: usize) -> Vec<T> {
    (0..=intervals)
        .map(|i| horizon * T::lit(i as f64) / T::lit(intervals as f64))
        .collect()
}

/// Named observable of the simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable<T> {
    pub id: String,
    pub function: TestFunction<T>,
}

/// Identifier of the box-current observable added when a box radius is set.
pub const BOX_ID: &str = "box";

/// Default number of grid intervals on `[0, T]`.
pub const DEFAULT_GRID_INTERVALS: usize = 8;

/// Default tail tolerance for the truncation radius.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

/// Full description of one simulation rung.
#[derive(Clone, Debug)]
pub struct SimulationPlan<T> {
    pub n: u64,
    pub kernel: JumpKernel<T>,
    pub law: InitialLaw,
    pub grid: Vec<T>,
    pub observables: Vec<Observable<T>>,
    pub box_radius: Option<T>,
    pub radius: i64,
    pub seed: u64,
}

impl<T: Real> SimulationPlan<T> {
    /// Plan with the default grid and the truncation radius for the default
    /// tail tolerance.
    pub fn new(
        n: u64,
        kernel: JumpKernel<T>,
        law: InitialLaw,
        horizon: T,
        functions: Vec<Observable<T>>,
        box_radius: Option<T>,
        seed: u64,
    ) -> Result<Self> {
        if !(horizon > T::zero() && horizon.is_finite()) {
            return Err(Error::PlanInvalid(format!("horizon {horizon} must be positive")));
        }
        let mut plan = Self {
            n,
            kernel,
            law,
            grid: uniform_grid(horizon, DEFAULT_GRID_INTERVALS),
            observables: functions,
            box_radius,
            radius: 0,
            seed,
        };
        if let Some(m) = box_radius {
            plan.observables.push(Observable {
                id: BOX_ID.to_string(),
                function: TestFunction::box_indicator(plan.kernel.dim(), m)
                    .map_err(|e| Error::PlanInvalid(e.to_string()))?,
            });
        }
        plan.radius = plan.auto_radius(DEFAULT_TAIL_TOL)?;
        plan.validate()?;
        Ok(plan)
    }

    /// Replaces the grid; the radius is recomputed for the new horizon only
    /// if it grows.
    pub fn with_grid(mut self, grid: Vec<T>) -> Result<Self> {
        self.grid = grid;
        self.validate()?;
        let needed = self.auto_radius(DEFAULT_TAIL_TOL)?;
        self.radius = self.radius.max(needed);
        Ok(self)
    }

    /// Recomputes the radius for another tail tolerance.
    pub fn with_tail_tol(mut self, tail_tol: f64) -> Result<Self> {
        self.radius = self.auto_radius(tail_tol)?;
        Ok(self)
    }

    /// Sets the radius explicitly. Smaller than automatic radii are
    /// accepted so that hand-checkable micro-instances can be built.
    pub fn with_radius(mut self, radius: i64) -> Result<Self> {
        if radius < 0 {
            return Err(Error::PlanInvalid(format!("radius {radius} must be >= 0")));
        }
        self.radius = radius;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn horizon(&self) -> T {
        *self.grid.last().expect("validated grid is non-empty")
    }

    pub fn observable_ids(&self) -> Vec<&str> {
        self.observables.iter().map(|o| o.id.as_str()).collect()
    }

    pub fn observable_index(&self, id: &str) -> Option<usize> {
        self.observables.iter().position(|o| o.id == id)
    }

    pub fn epoch_index(&self, t: T) -> Option<usize> {
        self.grid.iter().position(|&g| (g - t).abs() <= T::epsilon() * T::lit(16.0) * t.abs().max(T::one()))
    }

    fn auto_radius(&self, tail_tol: f64) -> Result<i64> {
        let functions: Vec<TestFunction<T>> = self.observables.iter().map(|o| o.function.clone()).collect();
        truncation_radius(self.n, self.horizon(), &self.kernel, &functions, self.box_radius, tail_tol)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::PlanInvalid(m));
        if self.n == 0 {
            return bad("n must be a positive integer".into());
        }
        if self.grid.len() < 2 || self.grid[0] != T::zero() {
            return bad("grid must start at 0 and contain at least one positive time".into());
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return bad("grid must be strictly increasing".into());
        }
        if self.observables.is_empty() {
            return bad("no observables".into());
        }
        let mut ids = std::collections::HashSet::new();
        for o in &self.observables {
            if o.function.dim() != self.dim() {
                return bad(format!(
                    "observable {} has dimension {}, kernel has {}",
                    o.id,
                    o.function.dim(),
                    self.dim()
                ));
            }
            if !ids.insert(o.id.as_str()) {
                return bad(format!("observable id {} repeated", o.id));
            }
        }
        self.law.validate().map_err(|e| Error::PlanInvalid(e.to_string()))
    }

    pub fn prepare(&self) -> Result<Prepared<'_, T>> {
        Prepared::new(self)
    }
}

/// Per-replica output.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentPath<T> {
    pub replica: u64,
    /// `values[k][j] = xi_n(t_k, observable_j)`.
    pub values: Vec<Vec<T>>,
    /// `density[k][j] = n^{-d/2} sum_walkers phi_j((X(n t_k) - [n v t_k]) / sqrt n)`.
    pub density: Vec<Vec<T>>,
    pub walkers: u64,
    /// Walkers that contributed a term at the last epoch.
    pub walkers_final: u64,
    /// Sum of `|contribution|` over epochs and observables from walkers
    /// started in the outer tenth of the start box.
    pub shell_abs: T,
    pub total_abs: T,
}

/// Plan with everything that does not depend on the replica precomputed.
pub struct Prepared<'a, T> {
    plan: &'a SimulationPlan<T>,
    law: LawSampler,
    gaps: Vec<DisplacementSampler<'a, T>>,
    centers: Vec<Vec<i64>>,
    inv_sqrt_n: T,
    current_scale: T,
    density_scale: T,
    shell_from: i64,
}

impl<'a, T: Real> Prepared<'a, T> {
    fn new(plan: &'a SimulationPlan<T>) -> Result<Self> {
        plan.validate()?;
        let n = T::lit(plan.n as f64);
        let d = plan.dim() as f64;
        let gaps = plan
            .grid
            .windows(2)
            .map(|w| plan.kernel.displacement_sampler(n * (w[1] - w[0])))
            .collect::<Result<_>>()?;
        let centers = plan
            .grid
            .iter()
            .map(|&t| {
                let shift: Vec<T> = plan.kernel.drift().iter().map(|&v| n * v * t).collect();
                integer_part(&shift)
            })
            .collect();
        Ok(Self {
            plan,
            law: plan.law.sampler()?,
            gaps,
            centers,
            inv_sqrt_n: T::one() / n.sqrt(),
            current_scale: n.powf(T::lit(-d / 4.0)),
            density_scale: n.powf(T::lit(-d / 2.0)),
            // outer tenth of the radius: |m|_inf > 0.9 R
            shell_from: (0.9 * plan.radius as f64).floor() as i64,
        })
    }

    pub fn plan(&self) -> &SimulationPlan<T> {
        self.plan
    }

    /// Visits every site of `[-R, R]^d` in lexicographic order.
    fn for_each_site(&self, mut f: impl FnMut(&[i64])) {
        let d = self.plan.dim();
        let r = self.plan.radius;
        let mut site = vec![-r; d];
        loop {
            f(&site);
            let mut axis = 0;
            loop {
                if axis == d {
                    return;
                }
                if site[axis] < r {
                    site[axis] += 1;
                    break;
                }
                site[axis] = -r;
                axis += 1;
            }
        }
    }

    /// Occupations of the start box for a replica; empty sites omitted.
    pub fn sample_initial(&self, replica: u64) -> Vec<(Vec<i64>, u64)> {
        let stream = RngStream::new(self.plan.seed, replica);
        let mut out = Vec::new();
        self.for_each_site(|m| {
            let mut rng = stream.site(site_lane(m));
            let eta = self.law.sample(&mut rng);
            if eta > 0 {
                out.push((m.to_vec(), eta));
            }
        });
        out
    }

    pub fn run(&self, replica: u64) -> CurrentPath<T> {
        let plan = self.plan;
        let d = plan.dim();
        let epochs = plan.grid.len();
        let obs = plan.observables.len();
        let stream = RngStream::new(plan.seed, replica);

        let mut values = vec![vec![T::zero(); obs]; epochs];
        let mut density = vec![vec![T::zero(); obs]; epochs];
        let mut walkers = 0u64;
        let mut walkers_final = 0u64;
        let mut shell_abs = T::zero();
        let mut total_abs = T::zero();

        let mut scaled = vec![T::zero(); d];
        let mut base = vec![T::zero(); obs];
        let mut pos = vec![0i64; d];

        self.for_each_site(|m| {
            let mut rng = stream.site(site_lane(m));
            let eta = self.law.sample(&mut rng);
            if eta == 0 {
                return;
            }
            walkers += eta;
            for (s, &mi) in scaled.iter_mut().zip(m) {
                *s = T::lit(mi as f64) * self.inv_sqrt_n;
            }
            for (b, o) in base.iter_mut().zip(&plan.observables) {
                *b = o.function.value(&scaled);
            }
            let in_shell = m.iter().any(|c| c.abs() > self.shell_from);
            let mut site_abs = T::zero();
            for _ in 0..eta {
                pos.copy_from_slice(m);
                for k in 0..epochs {
                    if k > 0 {
                        self.gaps[k - 1].accumulate(&mut rng, &mut pos);
                    }
                    for ((s, &p), &c) in scaled.iter_mut().zip(&pos).zip(&self.centers[k]) {
                        *s = T::lit((p - c) as f64) * self.inv_sqrt_n;
                    }
                    let (vk, dk) = (&mut values[k], &mut density[k]);
                    for j in 0..obs {
                        let v = plan.observables[j].function.value(&scaled);
                        let diff = v - base[j];
                        vk[j] += diff;
                        dk[j] += v;
                        site_abs += diff.abs();
                    }
                }
                walkers_final += 1;
            }
            total_abs += site_abs;
            if in_shell {
                shell_abs += site_abs;
            }
        });

        for row in &mut values {
            row.iter_mut().for_each(|v| *v *= self.current_scale);
        }
        for row in &mut density {
            row.iter_mut().for_each(|v| *v *= self.density_scale);
        }
        CurrentPath {
            replica,
            values,
            density,
            walkers,
            walkers_final,
            shell_abs: shell_abs * self.current_scale,
            total_abs: total_abs * self.current_scale,
        }
    }
}

/// Runs one replica of a plan.
pub fn run_replica<T: Real>(plan: &SimulationPlan<T>, replica: u64) -> Result<CurrentPath<T>> {
    Ok(plan.prepare()?.run(replica))
}
