//! Experiment configuration: TOML (or equivalent JSON) schema, defaults and
//! validation into core objects.
//!
//! ```toml
//! [kernel]
//! jumps = [[1], [-1]]
//! weights = [0.5, 0.5]
//!
//! [initial]
//! law = "poisson"          # poisson | deterministic | geometric | custom
//! mean = 1.0
//!
//! [scaling]
//! n = [64, 256]
//! horizon = 1.0
//! grid_intervals = 8       # or an explicit `grid = [0.0, 0.5, 1.0]`
//!
//! [observables]
//! box_radius = 1.0
//!
//! [[observables.functions]]
//! id = "bump"
//! kind = "gaussian_bump"   # gaussian_bump | hermite_gaussian | box
//! center = [0.0]
//! inverse_width = 1.0
//!
//! [[observables.theta]]
//! terms = [{ time = 0.5, id = "box", weight = 1.0 }, { time = 1.0, id = "box", weight = -1.0 }]
//!
//! [run]
//! replicas = 10000
//! seed = 42
//! tail_tol = 1e-6
//! out = "fluxlab-out"
//! ```

use std::path::{Path, PathBuf};

use fluxlab_core::rng::mix64;
use fluxlab_core::simulator::{uniform_grid, Observable, DEFAULT_GRID_INTERVALS, DEFAULT_TAIL_TOL};
use fluxlab_core::{InitialLaw, Kernel, Mat, Plan, Spec, TestFunction};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

const DEFAULT_REPLICAS: usize = 1000;
const DEFAULT_OUT: &str = "fluxlab-out";

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub jumps: Option<Vec<Vec<i64>>>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub law: Option<String>,
    pub mean: Option<f64>,
    pub count: Option<u64>,
    pub p: Option<f64>,
    pub values: Option<Vec<u64>>,
    pub probabilities: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub n: Option<Vec<u64>>,
    pub horizon: Option<f64>,
    pub grid_intervals: Option<usize>,
    pub grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FunctionConfig {
    pub id: String,
    pub kind: String,
    pub center: Option<Vec<f64>>,
    pub inverse_width: Option<f64>,
    pub amplitude: Option<f64>,
    pub alpha: Option<Vec<u32>>,
    pub width: Option<f64>,
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ThetaTerm {
    pub time: f64,
    pub id: String,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ThetaConfig {
    pub terms: Vec<ThetaTerm>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    pub box_radius: Option<f64>,
    #[serde(default)]
    pub functions: Vec<FunctionConfig>,
    #[serde(default)]
    pub theta: Vec<ThetaConfig>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
    pub tail_tol: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Configuration file contents; after [`Experiment::from_config`] every
/// optional field is filled in.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: Option<usize>,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub run: RunConfig,
}

/// Where the seed of a run came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Environment,
    Entropy,
}

/// Validated experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    /// Resolved configuration with all defaults.
    pub config: ExperimentConfig,
    pub kernel: Kernel,
    pub law: InitialLaw,
    pub ladder: Vec<u64>,
    pub grid: Vec<f64>,
    pub functions: Vec<Observable<f64>>,
    pub box_radius: Option<f64>,
    /// Each theta as `(time, observable id, weight)` terms.
    pub theta: Vec<Vec<(f64, String, f64)>>,
    pub replicas: usize,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub tail_tol: f64,
    pub out: PathBuf,
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Reads a TOML file, or JSON when the extension is `.json`.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse_str(&text, json).map_err(|e| match e {
        CliError::Parse { location, message } => CliError::Parse {
            location: format!("{}:{location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn parse_str(text: &str, json: bool) -> Result<ExperimentConfig, CliError> {
    if json {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            location: format!("{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })
    } else {
        toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            CliError::Parse {
                location: format!("{line}:{col}"),
                message: e.message().to_string(),
            }
        })
    }
}

fn kernel_of(cfg: &mut ExperimentConfig) -> Result<Kernel, CliError> {
    let k = &mut cfg.kernel;
    let jumps = k.jumps.clone().ok_or_else(|| invalid("kernel.jumps", "missing"))?;
    if jumps.is_empty() {
        return Err(invalid("kernel.jumps", "at least one jump is required"));
    }
    let d = cfg.dim.unwrap_or(jumps[0].len());
    if d == 0 {
        return Err(invalid("dim", "dimension must be positive"));
    }
    if let Some(bad) = jumps.iter().find(|j| j.len() != d) {
        return Err(invalid("kernel.jumps", format!("jump {bad:?} does not have {d} coordinates")));
    }
    let weights = k.weights.clone().ok_or_else(|| invalid("kernel.weights", "missing"))?;
    if weights.len() != jumps.len() {
        return Err(invalid(
            "kernel.weights",
            format!("{} weights for {} jumps", weights.len(), jumps.len()),
        ));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid("kernel.weights", "weights must be nonnegative"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid("kernel.weights", format!("weights sum to {sum}, expected 1")));
    }
    cfg.dim = Some(d);
    let pmf: Vec<(Vec<i64>, f64)> = jumps.into_iter().zip(weights).collect();
    Kernel::new(&pmf, d).map_err(|e| invalid("kernel.jumps", e.to_string()))
}

fn law_of(cfg: &mut InitialConfig) -> Result<InitialLaw, CliError> {
    let name = cfg.law.get_or_insert_with(|| "poisson".into()).to_ascii_lowercase();
    let law = match name.as_str() {
        "poisson" => InitialLaw::Poisson(*cfg.mean.get_or_insert(1.0)),
        "deterministic" => InitialLaw::Deterministic(*cfg.count.get_or_insert(1)),
        "geometric" => InitialLaw::Geometric(cfg.p.ok_or_else(|| invalid("initial.p", "missing"))?),
        "custom" => {
            let values = cfg.values.clone().ok_or_else(|| invalid("initial.values", "missing"))?;
            let probs = cfg
                .probabilities
                .clone()
                .ok_or_else(|| invalid("initial.probabilities", "missing"))?;
            if values.len() != probs.len() {
                return Err(invalid("initial.probabilities", "one probability per value is required"));
            }
            InitialLaw::CustomPmf(values.into_iter().zip(probs).collect())
        }
        other => return Err(invalid("initial.law", format!("unknown law {other:?}"))),
    };
    let field = match law {
        InitialLaw::Poisson(_) => "initial.mean",
        InitialLaw::Deterministic(_) => "initial.count",
        InitialLaw::Geometric(_) => "initial.p",
        InitialLaw::CustomPmf(_) => "initial.probabilities",
    };
    law.validate().map_err(|e| invalid(field, e.to_string()))?;
    cfg.law = Some(name);
    Ok(law)
}

fn function_of(f: &mut FunctionConfig, d: usize, index: usize) -> Result<TestFunction<f64>, CliError> {
    let field = |name: &str| format!("observables.functions[{index}].{name}");
    let built = match f.kind.as_str() {
        "gaussian_bump" => {
            let center = f.center.get_or_insert_with(|| vec![0.0; d]).clone();
            if center.len() != d {
                return Err(invalid(&field("center"), format!("expected {d} coordinates")));
            }
            let w = *f.inverse_width.get_or_insert(1.0);
            let amp = *f.amplitude.get_or_insert(1.0);
            TestFunction::gaussian_bump(&center, w, amp).map_err(|e| invalid(&field("inverse_width"), e.to_string()))?
        }
        "hermite_gaussian" => {
            let alpha = f.alpha.get_or_insert_with(|| vec![0; d]).clone();
            if alpha.len() != d {
                return Err(invalid(&field("alpha"), format!("expected {d} orders")));
            }
            let width = *f.width.get_or_insert(1.0);
            TestFunction::hermite_gaussian(&alpha, width).map_err(|e| invalid(&field("width"), e.to_string()))?
        }
        "box" => {
            let r = *f.radius.get_or_insert(1.0);
            TestFunction::box_indicator(d, r).map_err(|e| invalid(&field("radius"), e.to_string()))?
        }
        other => return Err(invalid(&field("kind"), format!("unknown kind {other:?}"))),
    };
    Ok(built)
}

/// Seed precedence: flag, config file, `FLUXLAB_SEED`, entropy.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<(u64, SeedSource), CliError> {
    if let Some(s) = flag {
        return Ok((s, SeedSource::Flag));
    }
    if let Some(s) = config {
        return Ok((s, SeedSource::Config));
    }
    if let Some(text) = env {
        let s = text
            .trim()
            .parse()
            .map_err(|_| invalid("FLUXLAB_SEED", format!("{text:?} is not an unsigned 64-bit integer")))?;
        return Ok((s, SeedSource::Environment));
    }
    Ok((rand::random(), SeedSource::Entropy))
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub out: Option<PathBuf>,
    pub env_seed: Option<String>,
}

impl Experiment {
    pub fn from_config(mut cfg: ExperimentConfig, over: &Overrides) -> Result<Self, CliError> {
        let kernel = kernel_of(&mut cfg)?;
        let d = kernel.dim();
        let law = law_of(&mut cfg.initial)?;

        let s = &mut cfg.scaling;
        let ladder = s.n.get_or_insert_with(|| vec![64]).clone();
        if ladder.is_empty() || ladder.contains(&0) {
            return Err(invalid("scaling.n", "a nonempty list of positive integers is required"));
        }
        if ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("scaling.n", "the ladder must be strictly increasing"));
        }
        let grid = match &s.grid {
            Some(g) => {
                if s.grid_intervals.is_some() {
                    return Err(invalid("scaling.grid", "give either grid or grid_intervals"));
                }
                if g.len() < 2 || g[0] != 0.0 || g.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid("scaling.grid", "grid must start at 0 and increase strictly"));
                }
                if let Some(h) = s.horizon {
                    if h != *g.last().unwrap() {
                        return Err(invalid("scaling.horizon", "horizon must equal the last grid time"));
                    }
                }
                s.horizon = g.last().copied();
                g.clone()
            }
            None => {
                let horizon = *s.horizon.get_or_insert(1.0);
                if !(horizon > 0.0 && horizon.is_finite()) {
                    return Err(invalid("scaling.horizon", "horizon must be positive"));
                }
                let k = *s.grid_intervals.get_or_insert(DEFAULT_GRID_INTERVALS);
                if k == 0 {
                    return Err(invalid("scaling.grid_intervals", "at least one interval is required"));
                }
                let g = uniform_grid(horizon, k);
                s.grid = Some(g.clone());
                s.grid_intervals = None;
                g
            }
        };

        let obs = &mut cfg.observables;
        if let Some(m) = obs.box_radius {
            if !(m > 0.0 && m.is_finite()) {
                return Err(invalid("observables.box_radius", "box radius must be positive"));
            }
        }
        let mut functions = Vec::new();
        for (i, f) in obs.functions.iter_mut().enumerate() {
            if f.id == fluxlab_core::simulator::BOX_ID && obs.box_radius.is_some() {
                return Err(invalid(
                    &format!("observables.functions[{i}].id"),
                    "id \"box\" is reserved for the box current",
                ));
            }
            if functions.iter().any(|o: &Observable<f64>| o.id == f.id) {
                return Err(invalid(&format!("observables.functions[{i}].id"), "duplicate id"));
            }
            let function = function_of(f, d, i)?;
            functions.push(Observable {
                id: f.id.clone(),
                function,
            });
        }
        if functions.is_empty() && obs.box_radius.is_none() {
            return Err(invalid("observables", "declare functions or a box_radius"));
        }
        let mut ids: Vec<String> = functions.iter().map(|o| o.id.clone()).collect();
        if obs.box_radius.is_some() {
            ids.push(fluxlab_core::simulator::BOX_ID.into());
        }
        let mut theta = Vec::new();
        for (i, t) in obs.theta.iter().enumerate() {
            let field = format!("observables.theta[{i}]");
            if t.terms.is_empty() || t.terms.iter().all(|term| term.weight == 0.0) {
                return Err(invalid(&field, "theta must have a nonzero weight"));
            }
            for term in &t.terms {
                if !ids.contains(&term.id) {
                    return Err(invalid(&field, format!("unknown observable {:?}", term.id)));
                }
                if !grid.iter().any(|&g| (g - term.time).abs() <= 1e-12 * g.max(1.0)) {
                    return Err(invalid(&field, format!("time {} is not on the grid", term.time)));
                }
            }
            theta.push(t.terms.iter().map(|x| (x.time, x.id.clone(), x.weight)).collect());
        }

        let run = &mut cfg.run;
        if let Some(r) = over.replicas {
            run.replicas = Some(r);
        }
        let replicas = *run.replicas.get_or_insert(DEFAULT_REPLICAS);
        if replicas < 2 {
            return Err(invalid("run.replicas", "at least 2 replicas are required"));
        }
        let tail_tol = *run.tail_tol.get_or_insert(DEFAULT_TAIL_TOL);
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(invalid("run.tail_tol", "tail tolerance must lie in (0, 1)"));
        }
        if let Some(o) = &over.out {
            run.out = Some(o.clone());
        }
        let out = run.out.get_or_insert_with(|| DEFAULT_OUT.into()).clone();
        let (seed, seed_source) = resolve_seed(over.seed, run.seed, over.env_seed.as_deref())?;
        run.seed = Some(seed);

        let box_radius = cfg.observables.box_radius;
        Ok(Self {
            config: cfg,
            kernel,
            law,
            ladder,
            grid,
            functions,
            box_radius,
            theta,
            replicas,
            seed,
            seed_source,
            tail_tol,
            out,
        })
    }

    /// Plan of one ladder rung; every rung gets its own seed.
    pub fn plan(&self, n: u64) -> Result<Plan, CliError> {
        let plan = Plan::new(
            n,
            self.kernel.clone(),
            self.law.clone(),
            *self.grid.last().expect("validated grid"),
            self.functions.clone(),
            self.box_radius,
            mix64(self.seed ^ mix64(n)),
        )?
        .with_tail_tol(self.tail_tol)?
        .with_grid(self.grid.clone())?;
        Ok(plan)
    }

    pub fn spec(&self) -> Result<Spec, CliError> {
        let (rho0, v0) = self.law.moments();
        Ok(Spec::new(rho0, v0, self.kernel.second_moment().clone())?)
    }

    pub fn diffusion(&self) -> &Mat {
        self.kernel.second_moment()
    }

    /// SHA-256 of the resolved configuration without its seed.
    pub fn config_hash(&self) -> String {
        let mut c = self.config.clone();
        c.run.seed = None;
        let text = serde_json::to_string(&c).expect("configuration serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
