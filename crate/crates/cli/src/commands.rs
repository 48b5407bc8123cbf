//! The five subcommands.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use fluxlab_core::analytic::covariance_terms;
use fluxlab_core::stats::{
    compare_covariance, convergence_table, limit_ensemble, plan_points, run_ensemble, theta_normality, Ensemble,
    EnsembleSummary, NormalityReport, Rung, MIN_SAMPLES,
};
use fluxlab_core::{Mat, Plan, RngStream};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use crate::config::Experiment;
use crate::error::CliError;
use crate::output::{create, num, write_csv, write_text, Provenance};

/// Significance level of the normality checks.
pub const ALPHA: f64 = 0.01;

/// Largest fraction of covariance entries allowed beyond `|z| > 3`.
pub const FLAG_ALLOWANCE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

fn format_vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("[{}]", parts.join(", "))
}

fn format_matrix(m: &Mat) -> String {
    let rows: Vec<String> = m.to_rows().iter().map(|r| format_vector(r)).collect();
    format!("[{}]", rows.join(", "))
}

/// Prints the drift, second moment and its Cholesky factor.
pub fn kernel_info(exp: &Experiment, out: &mut impl Write) -> Result<(), CliError> {
    let k = &exp.kernel;
    let (rho0, v0) = exp.law.moments();
    let text = format!(
        "dimension: {}\nsupport: {} jumps\nv = {}\na = {}\nkappa = {}\nrho0 = {}\nv0 = {}\n",
        k.dim(),
        k.support().len(),
        format_vector(k.drift()),
        format_matrix(k.second_moment()),
        format_matrix(k.factor()),
        num(rho0),
        num(v0),
    );
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))
}

/// Ensemble of one rung, from the simulator or from the exact limit law.
fn rung_ensemble(exp: &Experiment, plan: &Plan, mock: bool) -> Result<Ensemble, CliError> {
    if mock {
        let (points, labels) = plan_points(plan);
        Ok(limit_ensemble(points, labels, &exp.spec()?, exp.replicas, plan.seed)?)
    } else {
        Ok(run_ensemble(plan, exp.replicas)?)
    }
}

/// Writes every replica's current at every grid point as JSON lines.
pub fn simulate(exp: &Experiment) -> Result<PathBuf, CliError> {
    let prov = Provenance::new(exp, "simulate");
    let plans: Vec<Plan> = exp.ladder.iter().map(|&n| exp.plan(n)).collect::<Result<_, _>>()?;
    let (path, mut w) = create(&exp.out, "simulate.jsonl")?;
    let io = |e: std::io::Error| CliError::io(exp.out.join("simulate.jsonl"), e);
    let header = json!({
        "provenance": prov,
        "config": exp.config,
        "plans": plans.iter().map(|p| json!({
            "n": p.n,
            "radius": p.radius,
            "seed": p.seed,
            "grid": p.grid,
            "observables": p.observable_ids(),
            "plan_sha256": fluxlab_core::stats::plan_hash(p),
        })).collect::<Vec<_>>(),
    });
    writeln!(w, "{header}").map_err(io)?;
    for plan in &plans {
        let ens = run_ensemble(plan, exp.replicas)?;
        for (replica, row) in ens.samples.rows.iter().enumerate() {
            for (label, value) in ens.summary.labels.iter().zip(row) {
                let rec = json!({
                    "n": plan.n,
                    "replica": replica,
                    "t": label.time,
                    "phi_id": label.id,
                    "value": value,
                });
                writeln!(w, "{rec}").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;
    Ok(path)
}

/// Analytic covariance table over all grid pairs `s <= t`.
pub fn analytic(exp: &Experiment) -> Result<PathBuf, CliError> {
    let prov = Provenance::new(exp, "analytic");
    let spec = exp.spec()?;
    let plan = exp.plan(exp.ladder[0])?;
    let (rho0, v0) = (spec.rho0(), spec.v0());
    let mut rows = Vec::new();
    for (a, &s) in exp.grid.iter().enumerate() {
        for &t in &exp.grid[a..] {
            for phi in &plan.observables {
                for psi in &plan.observables {
                    let terms = covariance_terms(s, &phi.function, t, &psi.function, spec.diffusion())?;
                    rows.push(vec![
                        num(s),
                        num(t),
                        phi.id.clone(),
                        psi.id.clone(),
                        num(terms.sigma1),
                        num(terms.sigma2),
                        num(terms.covariance(rho0, v0)),
                    ]);
                }
            }
        }
    }
    write_csv(
        &exp.out,
        "analytic.csv",
        &prov,
        &["s", "t", "phi_id", "psi_id", "sigma1", "sigma2", "cov"],
        &rows,
    )
}

/// Indices of the columns at positive times.
fn positive_columns(summary: &EnsembleSummary) -> Vec<usize> {
    (0..summary.labels.len()).filter(|&i| summary.labels[i].time > 0.0).collect()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Lattice spacing of `theta . x` for simulated data: indicator observables
/// take values in `n^{-d/4} Z`, so integer weights on them keep the
/// projection on a lattice.
fn lattice_step(plan: &Plan, theta: &[f64]) -> Option<f64> {
    let width = plan.observables.len();
    let mut g = 0u64;
    for (i, &w) in theta.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        if !plan.observables[i % width].function.is_indicator() || w.fract() != 0.0 {
            return None;
        }
        g = gcd(g, w.abs() as u64);
    }
    let h = (plan.n as f64).powf(-(plan.dim() as f64) / 4.0);
    (g > 0).then(|| g as f64 * h)
}

struct ThetaCase {
    name: String,
    theta: Vec<f64>,
}

/// Configured theta vectors, or the defaults: unit vectors at the last
/// epoch for every observable plus one dense Gaussian theta.
fn theta_cases(exp: &Experiment, summary: &EnsembleSummary, stream: u64) -> Result<Vec<ThetaCase>, CliError> {
    let width = summary.labels.len();
    if !exp.theta.is_empty() {
        return exp
            .theta
            .iter()
            .enumerate()
            .map(|(k, terms)| {
                let mut theta = vec![0.0; width];
                for (time, id, w) in terms {
                    let i = summary
                        .index_of(*time, id)
                        .ok_or_else(|| CliError::Usage(format!("theta point ({time}, {id}) is not tracked")))?;
                    theta[i] += w;
                }
                Ok(ThetaCase {
                    name: format!("theta[{k}]"),
                    theta,
                })
            })
            .collect();
    }
    let last = summary.labels.last().map_or(0.0, |l| l.time);
    let mut cases: Vec<ThetaCase> = (0..width)
        .filter(|&i| summary.labels[i].time == last)
        .map(|i| {
            let mut theta = vec![0.0; width];
            theta[i] = 1.0;
            ThetaCase {
                name: format!("unit({}, {})", num(last), summary.labels[i].id),
                theta,
            }
        })
        .collect();
    let mut rng = RngStream::new(exp.seed, stream);
    let dense: Vec<f64> = summary
        .labels
        .iter()
        .map(|l| if l.time > 0.0 { rng.sample(StandardNormal) } else { 0.0 })
        .collect();
    if dense.iter().any(|&x| x != 0.0) {
        cases.push(ThetaCase {
            name: "dense".into(),
            theta: dense,
        });
    }
    Ok(cases)
}

struct RungCheck {
    n: u64,
    entries: usize,
    flagged: usize,
    allowed: usize,
    max_abs_z: f64,
    normality: Vec<(String, NormalityReport)>,
    normality_level: f64,
    pass: bool,
}

/// Runs every rung and checks covariances and theta projections.
pub fn verify(exp: &Experiment, mock: bool) -> Result<Outcome, CliError> {
    let prov = Provenance::new(exp, if mock { "verify --mock-limit" } else { "verify" });
    let spec = exp.spec()?;
    let mut cov_rows = Vec::new();
    let mut norm_rows = Vec::new();
    let mut checks = Vec::new();
    for (rung, &n) in exp.ladder.iter().enumerate() {
        let plan = exp.plan(n)?;
        let ens = rung_ensemble(exp, &plan, mock)?;
        let s = &ens.summary;
        let cols = positive_columns(s);
        let report = compare_covariance(s, &spec, Some(&cols))?;
        for e in &report.entries {
            cov_rows.push(vec![
                n.to_string(),
                num(s.labels[e.i].time),
                s.labels[e.i].id.clone(),
                num(s.labels[e.j].time),
                s.labels[e.j].id.clone(),
                num(e.empirical),
                num(e.analytic),
                num(e.standard_error),
                num(e.z),
                e.flagged.to_string(),
            ]);
        }
        let allowed = ((FLAG_ALLOWANCE * report.entries.len() as f64).floor() as usize).max(1);
        let mut normality = Vec::new();
        let cases = theta_cases(exp, s, u64::MAX - rung as u64)?;
        let level = ALPHA / cases.len().max(1) as f64;
        if exp.replicas >= MIN_SAMPLES {
            for case in cases {
                let lattice = if mock { None } else { lattice_step(&plan, &case.theta) };
                let r = theta_normality(&ens, &case.theta, &spec, lattice)?;
                norm_rows.push(vec![
                    n.to_string(),
                    case.name.clone(),
                    num(r.sigma2),
                    r.lattice_step.map_or(String::new(), num),
                    num(r.ks_statistic),
                    num(r.ks_p_value),
                    num(r.ad_statistic),
                    num(r.ad_p_value),
                    num(r.continuous_ks_p_value),
                    (r.ks_p_value > level && r.ad_p_value > level).to_string(),
                ]);
                normality.push((case.name, r));
            }
        }
        let normal_ok = normality
            .iter()
            .all(|(_, r)| r.ks_p_value > level && r.ad_p_value > level);
        checks.push(RungCheck {
            n,
            entries: report.entries.len(),
            flagged: report.flagged(),
            allowed,
            max_abs_z: report.max_abs_z(),
            normality,
            normality_level: level,
            pass: report.flagged() <= allowed && normal_ok,
        });
    }
    write_csv(
        &exp.out,
        "verify.csv",
        &prov,
        &["n", "s", "phi_id", "t", "psi_id", "empirical", "analytic", "se", "z", "flagged"],
        &cov_rows,
    )?;
    write_csv(
        &exp.out,
        "verify_normality.csv",
        &prov,
        &[
            "n",
            "theta",
            "sigma2",
            "lattice_step",
            "ks",
            "ks_p",
            "ad",
            "ad_p",
            "continuous_ks_p",
            "pass",
        ],
        &norm_rows,
    )?;
    let pass = checks.iter().all(|c| c.pass);
    let mut text = String::new();
    let source = if mock { "exact limit law" } else { "simulation" };
    writeln!(text, "samples: {source}, {} replicas per rung", exp.replicas).unwrap();
    for c in &checks {
        writeln!(
            text,
            "n = {}: {} covariance entries, {} with |z| > 3 (allowed {}), max |z| = {:.3}",
            c.n, c.entries, c.flagged, c.allowed, c.max_abs_z
        )
        .unwrap();
        if c.normality.is_empty() {
            writeln!(text, "  normality: not attempted (fewer than {MIN_SAMPLES} replicas)").unwrap();
        }
        for (name, r) in &c.normality {
            writeln!(
                text,
                "  {name}: KS p = {:.4}, AD p = {:.4} (level {:.4})",
                r.ks_p_value, r.ad_p_value, c.normality_level
            )
            .unwrap();
        }
        writeln!(text, "  {}", if c.pass { "PASS" } else { "FAIL" }).unwrap();
    }
    writeln!(text, "overall: {}", if pass { "PASS" } else { "FAIL" }).unwrap();
    write_text(&exp.out, "verify.txt", &prov, &text)?;
    print!("{text}");
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

/// Convergence table across the ladder and plot-ready covariance curves.
pub fn report(exp: &Experiment, mock: bool) -> Result<(), CliError> {
    if exp.ladder.len() < 2 {
        return Err(CliError::Usage("report needs at least two values in scaling.n".into()));
    }
    let prov = Provenance::new(exp, if mock { "report --mock-limit" } else { "report" });
    let spec = exp.spec()?;
    let plans: Vec<Plan> = exp.ladder.iter().map(|&n| exp.plan(n)).collect::<Result<_, _>>()?;
    let ensembles: Vec<Ensemble> = plans
        .iter()
        .map(|p| rung_ensemble(exp, p, mock))
        .collect::<Result<_, _>>()?;
    let first = &ensembles[0].summary;
    let cols = positive_columns(first);
    let tracked: Vec<(usize, usize)> = cols
        .iter()
        .enumerate()
        .flat_map(|(a, &i)| cols[a..].iter().map(move |&j| (i, j)))
        .collect();
    let theta = theta_cases(exp, first, u64::MAX)?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::Usage("no theta vector to track".into()))?;
    let rungs: Vec<Rung<'_>> = plans
        .iter()
        .zip(&ensembles)
        .map(|(p, e)| Rung {
            n: p.n,
            ensemble: e,
            lattice_step: if mock { None } else { lattice_step(p, &theta.theta) },
        })
        .collect();
    let table = convergence_table(&rungs, &spec, &tracked, &theta.theta)?;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.replicas.to_string(),
                num(r.max_abs_z),
                num(r.ks_statistic),
                num(r.ks_p_value),
            ]
        })
        .collect();
    write_csv(
        &exp.out,
        "convergence.csv",
        &prov,
        &["n", "replicas", "max_abs_z", "ks", "ks_p"],
        &rows,
    )?;

    let mut curves = Vec::new();
    for (plan, ens) in plans.iter().zip(&ensembles) {
        let s = &ens.summary;
        for (a, &i) in cols.iter().enumerate() {
            for &j in &cols[a..] {
                if s.labels[i].id != s.labels[j].id {
                    continue;
                }
                let pi = &s.points[i];
                let pj = &s.points[j];
                let analytic = fluxlab_core::limit_covariance(pi.time, &pi.function, pj.time, &pj.function, &spec)?;
                let (emp, se) = (s.covariance[(i, j)], s.covariance_se[(i, j)]);
                curves.push(vec![
                    plan.n.to_string(),
                    num(pi.time),
                    num(pj.time),
                    s.labels[i].id.clone(),
                    num(analytic),
                    num(emp),
                    num(se),
                    num(emp - 2.0 * se),
                    num(emp + 2.0 * se),
                ]);
            }
        }
    }
    write_csv(
        &exp.out,
        "curves.csv",
        &prov,
        &["n", "s", "t", "phi_id", "analytic", "empirical", "se", "lower", "upper"],
        &curves,
    )?;

    let mut text = String::new();
    writeln!(text, "tracked pairs: {}, theta: {}", tracked.len(), theta.name).unwrap();
    writeln!(text, "{:>8} {:>9} {:>10} {:>10} {:>10}", "n", "replicas", "max|z|", "KS", "KS p").unwrap();
    for r in &table.rows {
        writeln!(
            text,
            "{:>8} {:>9} {:>10.4} {:>10.5} {:>10.4}",
            r.n, r.replicas, r.max_abs_z, r.ks_statistic, r.ks_p_value
        )
        .unwrap();
    }
    writeln!(text, "max |z| nonincreasing in n: {}", table.max_z_nonincreasing()).unwrap();
    writeln!(text, "KS nonincreasing in n: {}", table.ks_nonincreasing()).unwrap();
    write_text(&exp.out, "report.txt", &prov, &text)?;
    print!("{text}");
    Ok(())
}
