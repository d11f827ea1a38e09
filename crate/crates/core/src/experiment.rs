//! Batch experiments behind the command-line tool: single solves, parameter
//! sweeps, PTO/OSM comparisons and a content-addressed result store.
//!
//! CSV bodies are deterministic for fixed inputs. Timing columns are opt-in
//! and the only run-dependent data otherwise sits in a `#` metadata line.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{arr_revenue_with, RevenueBreakdown};
use crate::error::{Error, Result};
use crate::mdp::{ArrMdp, Policy};
use crate::models::ModelSpec;
use crate::pto::{build_pt_mdp, pt_total_reward, solve_pto, PtoSolveConfig};
use crate::solvers::{monte_carlo_revenue, osm_solve, McEstimate, OsmConfig, SolveReport};

/// Largest PTO/OSM revenue gap accepted by [`run_compare`].
pub const AGREEMENT_TOLERANCE: f64 = 1e-4;
pub const RESULTS_DIR_ENV: &str = "ARRMDP_RESULTS_DIR";
pub const DEFAULT_RESULTS_DIR: &str = "arrmdp-results";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Pto,
    Osm,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pto => "pto",
            Self::Osm => "osm",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyChoice {
    /// Optimise with the selected solver.
    #[default]
    Optimal,
    /// Evaluate the model's honest reference policy.
    Honest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRequest {
    pub model: ModelSpec,
    pub solver: SolverKind,
    pub policy: PolicyChoice,
    pub pto: PtoSolveConfig,
    pub osm: OsmConfig,
    /// Monte Carlo cross-check: `(steps, seed)`.
    pub monte_carlo: Option<(u64, u64)>,
}

impl SolveRequest {
    pub fn new(model: ModelSpec, solver: SolverKind) -> Self {
        Self {
            model,
            solver,
            policy: PolicyChoice::Optimal,
            pto: PtoSolveConfig::default(),
            osm: OsmConfig::default(),
            monte_carlo: None,
        }
    }

    /// Content hash of everything that determines the result.
    pub fn key(&self) -> String {
        content_key(self)
    }
}

/// Hex SHA-256 of the JSON serialisation.
pub fn content_key<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("request types serialise");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub request: SolveRequest,
    pub states: usize,
    pub rev_arr: f64,
    /// `REV_PT` of the returned policy at the configured horizon.
    pub rev_pt: Option<f64>,
    pub report: SolveReport,
    pub revenue: RevenueBreakdown,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<McEstimate>,
}

pub fn run_solve(req: &SolveRequest) -> Result<SolveResult> {
    let built = req.model.build()?;
    let (policy, result) = solve_built(req, &built.mdp, &built.honest)?;
    finish(req, &built.mdp, &policy, result)
}

fn solve_built(req: &SolveRequest, mdp: &ArrMdp, honest: &Policy) -> Result<(Policy, SolveResult)> {
    let base = |report: SolveReport, revenue: RevenueBreakdown, rev_pt: Option<f64>| SolveResult {
        request: req.clone(),
        states: mdp.num_states(),
        rev_arr: revenue.rev_arr,
        rev_pt,
        report,
        revenue,
        monte_carlo: None,
    };
    match (req.policy, req.solver) {
        (PolicyChoice::Honest, _) => {
            let start = Instant::now();
            let revenue = arr_revenue_with(mdp, honest, req.pto.linear_solver)?.without_mu();
            let pt = build_pt_mdp(mdp, req.pto.horizon)?;
            let total = pt_total_reward(&pt, honest, req.pto.linear_solver)?;
            let report = SolveReport {
                policy_iterations: 0,
                linear_solves: 1,
                wall_time: start.elapsed().as_secs_f64(),
                final_values: Vec::new(),
                objective_value: revenue.rev_arr,
                converged: true,
            };
            Ok((honest.clone(), base(report, revenue, Some(total / req.pto.horizon))))
        }
        (PolicyChoice::Optimal, SolverKind::Pto) => {
            let out = solve_pto(mdp, &req.pto)?;
            let rev_pt = out.rev_pt;
            Ok((out.policy, base(out.report, out.revenue, Some(rev_pt))))
        }
        (PolicyChoice::Optimal, SolverKind::Osm) => {
            let out = osm_solve(mdp, &req.osm)?;
            Ok((out.policy, base(out.report, out.revenue, None)))
        }
    }
}

fn finish(req: &SolveRequest, mdp: &ArrMdp, policy: &Policy, mut result: SolveResult) -> Result<SolveResult> {
    // value vectors are not part of the stored record
    result.report.final_values = Vec::new();
    if let Some((steps, seed)) = req.monte_carlo {
        result.monte_carlo = Some(monte_carlo_revenue(mdp, policy, steps, seed)?);
    }
    Ok(result)
}

/// Directory of JSON results named by [`content_key`].
#[derive(Clone, Debug)]
pub struct ResultStore {
    root: PathBuf,
}

impl ResultStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `$ARRMDP_RESULTS_DIR`, or `arrmdp-results` in the working directory.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(RESULTS_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_RESULTS_DIR), PathBuf::from))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.json"))
    }

    pub fn load<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match fs::read(self.path(key)) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes).ok()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes through a temporary file so concurrent workers never observe
    /// a half-written result.
    pub fn save<T: Serialize>(&self, key: &str, value: &T) -> Result<PathBuf> {
        fs::create_dir_all(&self.root)?;
        let path = self.path(key);
        let tmp = self.root.join(format!(".{key}.{}.tmp", std::process::id()));
        fs::write(&tmp, serde_json::to_vec_pretty(value)?)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

/// Solve through the store: reuse a stored result or compute and save.
pub fn cached_solve(req: &SolveRequest, store: Option<&ResultStore>) -> Result<SolveResult> {
    let key = req.key();
    if let Some(store) = store {
        if let Some(hit) = store.load::<SolveResult>(&key)? {
            if hit.request == *req {
                log::debug!("store hit {key}");
                return Ok(hit);
            }
        }
    }
    let result = run_solve(req)?;
    if let Some(store) = store {
        store.save(&key, &result)?;
    }
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    Horizon,
    MaxFork,
}

impl SweepAxis {
    fn apply(self, base: &SolveRequest, value: f64) -> Result<SolveRequest> {
        let mut req = base.clone();
        match self {
            Self::Alpha => req.model = req.model.with_alpha(value),
            Self::Horizon => req.pto.horizon = value,
            Self::MaxFork => {
                if value.fract() != 0.0 || value < 0.0 || value > f64::from(u32::MAX) {
                    return Err(Error::InvalidParams(format!("max_fork {value} is not an integer")));
                }
                req.model = req.model.with_max_fork(value as u32);
            }
        }
        Ok(req)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: String,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub max_fork: u32,
    pub horizon: f64,
    pub solver: SolverKind,
    pub rev_arr: f64,
    pub rev_pt: Option<f64>,
    pub iterations: usize,
    pub linear_solves: usize,
    pub converged: bool,
    pub wall_time: f64,
    /// `rev_arr` divided by the largest `rev_arr` among rows with the same α.
    pub normalized: f64,
}

impl SweepRow {
    fn from_result(res: &SolveResult) -> Self {
        let (gamma, max_fork) = match &res.request.model {
            ModelSpec::Bitcoin(p) => (Some(p.gamma), p.max_fork),
            ModelSpec::Ethereum(p) => (None, p.max_fork),
        };
        Self {
            family: res.request.model.family().into(),
            alpha: res.request.model.alpha(),
            gamma,
            max_fork,
            horizon: res.request.pto.horizon,
            solver: res.request.solver,
            rev_arr: res.rev_arr,
            rev_pt: res.rev_pt,
            iterations: res.report.policy_iterations,
            linear_solves: res.report.linear_solves,
            converged: res.report.converged,
            wall_time: res.report.wall_time,
            normalized: f64::NAN,
        }
    }
}

/// Outcome of a sweep: rows of the points that finished, in axis order,
/// and the first failure if any.
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failure: Option<(f64, Error)>,
}

pub fn run_sweep(
    base: &SolveRequest,
    axis: SweepAxis,
    values: &[f64],
    jobs: usize,
    store: Option<&ResultStore>,
) -> Result<SweepOutcome> {
    let mut values = values.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let requests = values
        .iter()
        .map(|&v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;
    let results: Vec<Result<SolveResult>> =
        pool.install(|| requests.par_iter().map(|r| cached_solve(r, store)).collect());

    let mut rows = Vec::new();
    let mut failure = None;
    for (v, res) in values.iter().zip(results) {
        match res {
            Ok(r) => rows.push(SweepRow::from_result(&r)),
            Err(e) => {
                log::error!("sweep point {v} failed: {e}");
                if failure.is_none() {
                    failure = Some((*v, e));
                }
            }
        }
    }
    normalize(&mut rows);
    Ok(SweepOutcome { rows, failure })
}

fn normalize(rows: &mut [SweepRow]) {
    let mut best: HashMap<u64, f64> = HashMap::new();
    for r in rows.iter() {
        let e = best.entry(r.alpha.to_bits()).or_insert(f64::NEG_INFINITY);
        *e = e.max(r.rev_arr);
    }
    for r in rows.iter_mut() {
        r.normalized = r.rev_arr / best[&r.alpha.to_bits()];
    }
}

/// Ten significant digits, `.` decimal point, no grouping.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.9e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// `# arrmdp <version> <command> unix_time=<t>`
pub fn metadata_line<W: Write>(mut w: W, command: &str) -> Result<()> {
    let t = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    writeln!(w, "# arrmdp {} {command} unix_time={t}", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], timings: bool, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![
        "family",
        "alpha",
        "gamma",
        "max_fork",
        "horizon",
        "solver",
        "rev_arr",
        "rev_pt",
        "normalized",
        "iterations",
        "linear_solves",
        "converged",
    ];
    if timings {
        header.push("wall_time");
    }
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.family.clone(),
            fmt_num(r.alpha),
            fmt_opt(r.gamma),
            r.max_fork.to_string(),
            fmt_num(r.horizon),
            r.solver.name().into(),
            fmt_num(r.rev_arr),
            fmt_opt(r.rev_pt),
            fmt_num(r.normalized),
            r.iterations.to_string(),
            r.linear_solves.to_string(),
            r.converged.to_string(),
        ];
        if timings {
            rec.push(fmt_num(r.wall_time));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub solver: SolverKind,
    pub iterations: usize,
    pub linear_solves: usize,
    pub revenue: f64,
    /// OSM linear solves divided by PTO linear solves, same on both rows.
    pub solve_ratio: f64,
    pub wall_time: f64,
}

pub struct CompareOutcome {
    pub rows: Vec<CompareRow>,
    /// Human-readable report for each instance whose revenues differ by
    /// more than [`AGREEMENT_TOLERANCE`].
    pub disagreements: Vec<String>,
}

/// Runs both solvers on one model.
pub fn compare_mdp(label: &str, mdp: &ArrMdp, pto: &PtoSolveConfig, osm: &OsmConfig) -> Result<(Vec<CompareRow>, Option<String>)> {
    let p = solve_pto(mdp, pto)?;
    let o = osm_solve(mdp, osm)?;
    let ratio = o.report.linear_solves as f64 / p.report.linear_solves as f64;
    let row = |solver, r: &SolveReport, revenue| CompareRow {
        label: label.to_string(),
        solver,
        iterations: r.policy_iterations,
        linear_solves: r.linear_solves,
        revenue,
        solve_ratio: ratio,
        wall_time: r.wall_time,
    };
    let rows = vec![row(SolverKind::Pto, &p.report, p.rev_arr), row(SolverKind::Osm, &o.report, o.rev_arr)];
    let diff = (p.rev_arr - o.rev_arr).abs();
    let report = (diff > AGREEMENT_TOLERANCE).then(|| {
        format!(
            "{label}: pto {} vs osm {} (|diff| = {:.3e} > {AGREEMENT_TOLERANCE:.0e})",
            fmt_num(p.rev_arr),
            fmt_num(o.rev_arr),
            diff
        )
    });
    Ok((rows, report))
}

/// Label used for a model in comparison output.
pub fn model_label(spec: &ModelSpec) -> String {
    match spec {
        ModelSpec::Bitcoin(p) => format!("bitcoin alpha={} gamma={} max_fork={}", p.alpha, p.gamma, p.max_fork),
        ModelSpec::Ethereum(p) => format!("ethereum alpha={} max_fork={}", p.alpha, p.max_fork),
    }
}

pub fn run_compare(models: &[ModelSpec], pto: &PtoSolveConfig, osm: &OsmConfig, jobs: usize) -> Result<CompareOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;
    let pto = Arc::new(pto.clone());
    let osm = Arc::new(osm.clone());
    let results: Vec<Result<(Vec<CompareRow>, Option<String>)>> = pool.install(|| {
        models
            .par_iter()
            .map(|spec| {
                let built = spec.build()?;
                compare_mdp(&model_label(spec), &built.mdp, &pto, &osm)
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut disagreements = Vec::new();
    for r in results {
        let (mut rs, d) = r?;
        rows.append(&mut rs);
        disagreements.extend(d);
    }
    Ok(CompareOutcome { rows, disagreements })
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], timings: bool, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["model", "solver", "iterations", "linear_solves", "revenue", "solve_ratio"];
    if timings {
        header.push("wall_time");
    }
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.label.clone(),
            r.solver.name().to_string(),
            r.iterations.to_string(),
            r.linear_solves.to_string(),
            fmt_num(r.revenue),
            fmt_num(r.solve_ratio),
        ];
        if timings {
            rec.push(fmt_num(r.wall_time));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::bitcoin::BitcoinParams;

    fn small(alpha: f64) -> SolveRequest {
        let mut req = SolveRequest::new(ModelSpec::Bitcoin(BitcoinParams::new(alpha, 0.5, 6).unwrap()), SolverKind::Pto);
        req.pto.horizon = 1e4;
        req
    }

    #[test]
    fn ten_significant_digits() {
        assert_eq!(fmt_num(0.488664438123456), "0.4886644381");
        assert_eq!(fmt_num(1e6), "1000000");
        assert_eq!(fmt_num(0.3), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.3333333333");
    }

    #[test]
    fn key_depends_on_every_field() {
        let a = small(0.3);
        let mut b = a.clone();
        assert_eq!(a.key(), b.key());
        b.pto.stop_threshold = 1e-6;
        assert_ne!(a.key(), b.key());
        assert_eq!(a.key().len(), 64);
    }

    #[test]
    fn honest_solve_reports_alpha() {
        let mut req = small(0.3);
        req.policy = PolicyChoice::Honest;
        let res = run_solve(&req).unwrap();
        assert!((res.rev_arr - 0.3).abs() < 1e-9);
        assert!(res.report.converged);
    }

    #[test]
    fn store_round_trip_and_reuse() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::new(dir.path());
        let req = small(0.35);
        let first = cached_solve(&req, Some(&store)).unwrap();
        assert!(store.path(&req.key()).exists());
        let second = cached_solve(&req, Some(&store)).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn sweep_rows_sorted_and_normalized() {
        let out = run_sweep(&small(0.35), SweepAxis::Horizon, &[1e4, 1e2, 1e3], 2, None).unwrap();
        assert!(out.failure.is_none());
        let hs: Vec<f64> = out.rows.iter().map(|r| r.horizon).collect();
        assert_eq!(hs, vec![1e2, 1e3, 1e4]);
        assert!(out.rows.iter().any(|r| r.normalized == 1.0));
        assert!(out.rows.iter().all(|r| r.normalized <= 1.0));
    }

    #[test]
    fn sweep_keeps_finished_points_on_failure() {
        // horizon 5 is below d_max = 7
        let out = run_sweep(&small(0.35), SweepAxis::Horizon, &[5.0, 1e3], 1, None).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(matches!(out.failure, Some((v, Error::HorizonTooSmall { .. })) if v == 5.0));
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let out = run_sweep(&small(0.35), SweepAxis::Alpha, &[], 1, None).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&out.rows, false, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("family,alpha,"));
    }
}
