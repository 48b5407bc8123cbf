//! Replica ensembles and their moment summaries.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::analytic::{LimitSampler, LimitSpec, SpaceTimePoint};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;
use crate::rng::RngStream;
use crate::simulator::{CurrentPath, SimulationPlan};
use crate::test_functions::TestFunction;

/// Label of one coordinate of the sample vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PointLabel {
    pub time: f64,
    pub id: String,
}

/// Raw per-replica values at every tracked `(t, phi)` point, in replica
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStore {
    pub rows: Vec<Vec<f64>>,
}

impl SampleStore {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// `sum_i theta_i x_i` for every replica.
    pub fn project(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.width() {
            return Err(Error::InvalidTheta(format!(
                "theta has {} entries, samples have {}",
                theta.len(),
                self.width()
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|r| r.iter().zip(theta).map(|(x, t)| x * t).sum())
            .collect())
    }

    /// Batch-means standard error of the covariance of coordinates `i, j`.
    pub fn batch_means_se(&self, i: usize, j: usize, batches: usize) -> Result<f64> {
        let size = self.len() / batches.max(1);
        if batches < 2 || size < 2 {
            return Err(Error::TooFewSamples {
                needed: 2 * batches.max(2),
                got: self.len(),
            });
        }
        let estimates: Vec<f64> = self
            .rows
            .chunks_exact(size)
            .take(batches)
            .map(|chunk| {
                let xs: Vec<f64> = chunk.iter().map(|r| r[i]).collect();
                let ys: Vec<f64> = chunk.iter().map(|r| r[j]).collect();
                covariance(&xs, &ys)
            })
            .collect();
        let b = estimates.len() as f64;
        let m = estimates.iter().sum::<f64>() / b;
        let var = estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (b - 1.0);
        Ok((var / b).sqrt())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Unbiased sample covariance and its delete-one jackknife standard error.
///
/// With `p_k = (x_k - xbar)(y_k - ybar)` the leave-one-out estimate is
/// `(S - G p_i / (G - 1)) / (G - 2)`, so the jackknife variance reduces to
/// `(G - 1)/G (G / ((G - 1)(G - 2)))^2 sum (p_i - pbar)^2`. The standard
/// error is undefined (NaN) for two samples.
pub fn covariance_with_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let g = xs.len() as f64;
    if xs.len() < 3 {
        return (covariance(xs, ys), f64::NAN);
    }
    let (mx, my) = (mean(xs), mean(ys));
    let p: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let pbar = mean(&p);
    let cov = pbar * g / (g - 1.0);
    let spread: f64 = p.iter().map(|v| (v - pbar).powi(2)).sum();
    let factor = g / ((g - 1.0) * (g - 2.0));
    let var = (g - 1.0) / g * factor * factor * spread;
    (cov, var.max(0.0).sqrt())
}

/// Averages of the simulator's side channels.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Diagnostics {
    pub mean_walkers: f64,
    /// Every replica had `xi_n(0, .) == 0` bit for bit.
    pub zero_at_origin: bool,
    /// Every replica kept all of its walkers to the last epoch.
    pub walkers_conserved: bool,
    /// `sum shell_abs / sum total_abs` over replicas.
    pub shell_fraction: f64,
    /// Mean `n^{-d/2} sum phi(...)` per tracked point.
    pub mean_density: Vec<f64>,
}

/// Moments of an ensemble of sample vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub plan_hash: String,
    pub replicas: usize,
    pub labels: Vec<PointLabel>,
    /// Space-time points for analytic comparison, in label order.
    pub points: Vec<SpaceTimePoint<f64>>,
    /// Diffusion matrix of the kernel that produced the samples.
    pub diffusion: Matrix<f64>,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub covariance: Matrix<f64>,
    pub covariance_se: Matrix<f64>,
    pub diagnostics: Diagnostics,
}

impl EnsembleSummary {
    pub fn variance(&self, i: usize) -> f64 {
        self.covariance[(i, i)]
    }

    pub fn index_of(&self, time: f64, id: &str) -> Option<usize> {
        self.labels
            .iter()
            .position(|l| l.id == id && (l.time - time).abs() <= 1e-12 * time.abs().max(1.0))
    }

    /// Summary of given rows; `points` label the columns.
    pub fn from_rows(
        rows: &SampleStore,
        points: Vec<SpaceTimePoint<f64>>,
        labels: Vec<PointLabel>,
        diffusion: Matrix<f64>,
        plan_hash: String,
    ) -> Result<Self> {
        let g = rows.len();
        if g < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: g });
        }
        let width = rows.width();
        if points.len() != width || labels.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: points.len(),
            });
        }
        let columns: Vec<Vec<f64>> = (0..width).map(|i| rows.rows.iter().map(|r| r[i]).collect()).collect();
        let mean: Vec<f64> = columns.iter().map(|c| mean(c)).collect();
        let mean_se = columns
            .iter()
            .map(|c| (covariance(c, c) / g as f64).sqrt())
            .collect();
        let mut cov = Matrix::zeros(width);
        let mut cov_se = Matrix::zeros(width);
        for i in 0..width {
            for j in i..width {
                let (c, se) = covariance_with_se(&columns[i], &columns[j]);
                cov[(i, j)] = c;
                cov[(j, i)] = c;
                cov_se[(i, j)] = se;
                cov_se[(j, i)] = se;
            }
        }
        Ok(Self {
            plan_hash,
            replicas: g,
            labels,
            points,
            diffusion,
            mean,
            mean_se,
            covariance: cov,
            covariance_se: cov_se,
            diagnostics: Diagnostics::default(),
        })
    }
}

/// Summary together with the raw samples it was computed from.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub summary: EnsembleSummary,
    pub samples: SampleStore,
}

/// Stable hash of everything that determines a plan's output.
pub fn plan_hash<T: Real>(plan: &SimulationPlan<T>) -> String {
    let mut h = Sha256::new();
    h.update(format!("{plan:?}").as_bytes());
    hex::encode(h.finalize())
}

/// Space-time points and labels of a plan's columns, time-major.
pub fn plan_points<T: Real>(plan: &SimulationPlan<T>) -> (Vec<SpaceTimePoint<f64>>, Vec<PointLabel>) {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for &t in &plan.grid {
        for o in &plan.observables {
            let f: TestFunction<f64> = o.function.cast();
            points.push(SpaceTimePoint {
                time: t.as_f64(),
                function: f,
            });
            labels.push(PointLabel {
                time: t.as_f64(),
                id: o.id.clone(),
            });
        }
    }
    (points, labels)
}

/// Runs replicas `0..replicas` of `plan` in parallel and summarises them.
///
/// The columns are all `(t_k, observable)` pairs, time-major.
pub fn run_ensemble<T: Real>(plan: &SimulationPlan<T>, replicas: usize) -> Result<Ensemble> {
    if replicas < 2 {
        return Err(Error::PlanInvalid(format!("ensemble needs at least 2 replicas, got {replicas}")));
    }
    let prepared = plan.prepare()?;
    let paths: Vec<CurrentPath<T>> = (0..replicas as u64).into_par_iter().map(|r| prepared.run(r)).collect();

    let rows = SampleStore {
        rows: paths
            .iter()
            .map(|p| p.values.iter().flatten().map(|v| v.as_f64()).collect())
            .collect(),
    };
    let (points, labels) = plan_points(plan);
    let mut summary = EnsembleSummary::from_rows(
        &rows,
        points,
        labels,
        plan.kernel.second_moment().cast(),
        plan_hash(plan),
    )?;

    let g = replicas as f64;
    let width = rows.width();
    let mut density = vec![0.0; width];
    for p in &paths {
        for (acc, v) in density.iter_mut().zip(p.density.iter().flatten()) {
            *acc += v.as_f64() / g;
        }
    }
    let shell: f64 = paths.iter().map(|p| p.shell_abs.as_f64()).sum();
    let total: f64 = paths.iter().map(|p| p.total_abs.as_f64()).sum();
    summary.diagnostics = Diagnostics {
        mean_walkers: paths.iter().map(|p| p.walkers as f64).sum::<f64>() / g,
        zero_at_origin: paths.iter().all(|p| p.values[0].iter().all(|v| *v == T::zero())),
        walkers_conserved: paths.iter().all(|p| p.walkers == p.walkers_final),
        shell_fraction: if total > 0.0 { shell / total } else { 0.0 },
        mean_density: density,
    };
    Ok(Ensemble { summary, samples: rows })
}

/// Ensemble drawn from the exact limit law instead of the simulator; used
/// to calibrate the harness itself.
pub fn limit_ensemble(
    points: Vec<SpaceTimePoint<f64>>,
    labels: Vec<PointLabel>,
    spec: &LimitSpec<f64>,
    replicas: usize,
    seed: u64,
) -> Result<Ensemble> {
    let sampler = LimitSampler::new(&points, spec)?;
    let rows = SampleStore {
        rows: (0..replicas as u64)
            .into_par_iter()
            .map(|r| sampler.sample(&mut RngStream::new(seed, r)))
            .collect(),
    };
    let mut h = Sha256::new();
    h.update(format!("limit:{points:?}:{spec:?}:{seed}").as_bytes());
    let summary = EnsembleSummary::from_rows(&rows, points, labels, spec.diffusion().clone(), hex::encode(h.finalize()))?;
    Ok(Ensemble { summary, samples: rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jackknife_matches_brute_force() {
        let xs = [0.3, -1.2, 2.2, 0.7, -0.4, 1.9, 0.0, -2.5];
        let ys = [1.1, 0.2, -0.7, 0.9, -1.3, 2.4, 0.5, -0.1];
        let (c, se) = covariance_with_se(&xs, &ys);
        assert!((c - covariance(&xs, &ys)).abs() < 1e-14);
        let g = xs.len();
        let loo: Vec<f64> = (0..g)
            .map(|i| {
                let x: Vec<f64> = (0..g).filter(|&k| k != i).map(|k| xs[k]).collect();
                let y: Vec<f64> = (0..g).filter(|&k| k != i).map(|k| ys[k]).collect();
                covariance(&x, &y)
            })
            .collect();
        let m = mean(&loo);
        let brute = ((g as f64 - 1.0) / g as f64 * loo.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sqrt();
        assert!((se - brute).abs() < 1e-13, "{se} vs {brute}");
    }
}
