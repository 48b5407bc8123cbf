//! Empirical-versus-limit comparisons.

use crate::analytic::{gram_matrix, LimitSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::stats::ensemble::{Ensemble, EnsembleSummary};
use crate::stats::normality::{normality_test, NormalityReport};

/// `|z|` above which a covariance entry is flagged.
pub const Z_FLAG: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEntry {
    pub i: usize,
    pub j: usize,
    pub empirical: f64,
    pub analytic: f64,
    pub standard_error: f64,
    pub z: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceReport {
    pub entries: Vec<CovarianceEntry>,
}

impl CovarianceReport {
    pub fn flagged(&self) -> usize {
        self.entries.iter().filter(|e| e.flagged).count()
    }

    pub fn flagged_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.flagged() as f64 / self.entries.len() as f64
        }
    }

    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max)
    }

    pub fn entry(&self, i: usize, j: usize) -> Option<&CovarianceEntry> {
        let (i, j) = (i.min(j), i.max(j));
        self.entries.iter().find(|e| e.i == i && e.j == j)
    }
}

/// `(empirical - analytic) / se`; zero when both the difference and the
/// standard error vanish (e.g. entries involving `t = 0`), NaN when the
/// standard error is undefined.
pub fn z_score(empirical: f64, analytic: f64, se: f64) -> f64 {
    let diff = empirical - analytic;
    if se.is_nan() {
        f64::NAN
    } else if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Compares every entry `i <= j` among `indices` against a given matrix.
pub fn compare_against(summary: &EnsembleSummary, analytic: &Matrix<f64>, indices: &[usize]) -> CovarianceReport {
    let mut entries = Vec::new();
    for (a, &i) in indices.iter().enumerate() {
        for (b, &j) in indices.iter().enumerate().skip(a) {
            let empirical = summary.covariance[(i, j)];
            let expected = analytic[(a, b)];
            let se = summary.covariance_se[(i, j)];
            let z = z_score(empirical, expected, se);
            entries.push(CovarianceEntry {
                i,
                j,
                empirical,
                analytic: expected,
                standard_error: se,
                z,
                flagged: z.abs() > Z_FLAG,
            });
        }
    }
    CovarianceReport { entries }
}

fn check_spec(summary: &EnsembleSummary, spec: &LimitSpec<f64>) -> Result<()> {
    let a = spec.diffusion();
    if a.size() != summary.diffusion.size() {
        return Err(Error::SpecMismatch(format!(
            "limit spec has dimension {}, samples have {}",
            a.size(),
            summary.diffusion.size()
        )));
    }
    let scale = a.trace().abs().max(1.0);
    if a.max_abs_diff(&summary.diffusion) > 1e-9 * scale {
        return Err(Error::SpecMismatch("diffusion matrices differ".into()));
    }
    Ok(())
}

/// Analytic covariance among the selected summary points.
pub fn analytic_gram(summary: &EnsembleSummary, spec: &LimitSpec<f64>, indices: &[usize]) -> Result<Matrix<f64>> {
    check_spec(summary, spec)?;
    let points: Vec<_> = indices.iter().map(|&i| summary.points[i].clone()).collect();
    gram_matrix(&points, spec)
}

/// z-scores of the empirical covariances among `indices` (all points when
/// `None`) against the limit covariance.
pub fn compare_covariance(
    summary: &EnsembleSummary,
    spec: &LimitSpec<f64>,
    indices: Option<&[usize]>,
) -> Result<CovarianceReport> {
    let all: Vec<usize> = (0..summary.points.len()).collect();
    let idx = indices.unwrap_or(&all);
    let gram = analytic_gram(summary, spec, idx)?;
    Ok(compare_against(summary, &gram, idx))
}

/// Normality test of `theta . x` against `N(0, theta^T G theta)`.
pub fn theta_normality(
    ensemble: &Ensemble,
    theta: &[f64],
    spec: &LimitSpec<f64>,
    lattice_step: Option<f64>,
) -> Result<NormalityReport> {
    if theta.iter().all(|&t| t == 0.0) {
        return Err(Error::InvalidTheta("theta is the zero vector".into()));
    }
    let support: Vec<usize> = theta
        .iter()
        .enumerate()
        .filter(|(_, &t)| t != 0.0)
        .map(|(i, _)| i)
        .collect();
    let gram = analytic_gram(&ensemble.summary, spec, &support)?;
    let weights: Vec<f64> = support.iter().map(|&i| theta[i]).collect();
    let sigma2 = gram.quadratic_form(&weights);
    let projected = ensemble.samples.project(theta)?;
    normality_test(&projected, sigma2, lattice_step, theta)
}

/// One rung of an `n` ladder.
pub struct Rung<'a> {
    pub n: u64,
    pub ensemble: &'a Ensemble,
    pub lattice_step: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: u64,
    pub replicas: usize,
    pub max_abs_z: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn max_z_nonincreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].max_abs_z <= w[0].max_abs_z)
    }

    pub fn ks_nonincreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].ks_statistic <= w[0].ks_statistic)
    }
}

/// Worst `|z|` over `tracked` covariance pairs and the KS statistic of the
/// `theta` projection at every rung, in increasing `n`.
pub fn convergence_table(
    rungs: &[Rung<'_>],
    spec: &LimitSpec<f64>,
    tracked: &[(usize, usize)],
    theta: &[f64],
) -> Result<ConvergenceTable> {
    if rungs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "a ladder needs at least 2 rungs, got {}",
            rungs.len()
        )));
    }
    if tracked.is_empty() {
        return Err(Error::EmptyInput("no tracked covariance pairs".into()));
    }
    if rungs.windows(2).any(|w| w[1].n < w[0].n) {
        return Err(Error::InvalidParameter("rungs must be ordered by n".into()));
    }
    let mut indices: Vec<usize> = tracked.iter().flat_map(|&(i, j)| [i, j]).collect();
    indices.sort_unstable();
    indices.dedup();
    let gram = analytic_gram(&rungs[0].ensemble.summary, spec, &indices)?;
    let pos = |i: usize| indices.binary_search(&i).expect("index collected above");
    let mut rows = Vec::with_capacity(rungs.len());
    for rung in rungs {
        let s = &rung.ensemble.summary;
        if s.labels != rungs[0].ensemble.summary.labels {
            return Err(Error::SpecMismatch("rungs track different points".into()));
        }
        let max_abs_z = tracked
            .iter()
            .map(|&(i, j)| z_score(s.covariance[(i, j)], gram[(pos(i), pos(j))], s.covariance_se[(i, j)]).abs())
            .fold(0.0, f64::max);
        let normal = theta_normality(rung.ensemble, theta, spec, rung.lattice_step)?;
        rows.push(ConvergenceRow {
            n: rung.n,
            replicas: s.replicas,
            max_abs_z,
            ks_statistic: normal.ks_statistic,
            ks_p_value: normal.ks_p_value,
        });
    }
    Ok(ConvergenceTable { rows })
}
