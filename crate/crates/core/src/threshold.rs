//! Security threshold: the smallest mining power at which the optimal
//! strategy strictly beats honest mining.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::pto::{solve_pto, PtoSolveConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub lo: f64,
    pub hi: f64,
    /// Final bracket width.
    pub tol: f64,
    /// `profitable(α)` means optimal revenue above `α + margin`.
    pub margin: f64,
    /// Interior points checked for monotonicity before bisecting.
    pub spot_checks: usize,
    pub solve: PtoSolveConfig,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 0.49,
            tol: 1e-4,
            margin: 1e-6,
            spot_checks: 5,
            solve: PtoSolveConfig::default(),
        }
    }
}

/// One PTO solve made while searching.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProbe {
    pub alpha: f64,
    pub rev_arr: f64,
    pub profitable: bool,
    /// Bracket after this probe.
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub family: String,
    pub params: serde_json::Value,
    pub bracket_history: Vec<ThresholdProbe>,
    pub threshold: f64,
}

/// Optimal revenue at `alpha` and whether it beats honest mining.
pub fn profitability(spec: &ModelSpec, alpha: f64, solve: &PtoSolveConfig, margin: f64) -> Result<(f64, bool)> {
    let model = spec.with_alpha(alpha).build()?;
    let out = solve_pto(&model.mdp, solve)?;
    log::info!("alpha={alpha:.6} rev={:.8}", out.rev_arr);
    Ok((out.rev_arr, out.rev_arr > alpha + margin))
}

pub fn find_threshold(spec: &ModelSpec, config: &ThresholdConfig) -> Result<ThresholdRecord> {
    let (mut lo, mut hi) = (config.lo, config.hi);
    if !(0.0 <= lo && lo < hi && hi < 0.5) || !(config.tol > 0.0) {
        return Err(Error::BracketInvalid(format!(
            "need 0 <= lo < hi < 0.5 and tol > 0, got [{lo}, {hi}] and {}",
            config.tol
        )));
    }
    let mut history = Vec::new();
    let probe = |alpha: f64, lo: f64, hi: f64, history: &mut Vec<ThresholdProbe>| -> Result<bool> {
        let (rev_arr, profitable) = profitability(spec, alpha, &config.solve, config.margin)?;
        history.push(ThresholdProbe {
            alpha,
            rev_arr,
            profitable,
            lo,
            hi,
        });
        Ok(profitable)
    };

    if !probe(hi, lo, hi, &mut history)? {
        return Err(Error::BracketInvalid(format!("alpha={hi} is not profitable")));
    }
    if probe(lo, lo, hi, &mut history)? {
        return Err(Error::BracketInvalid(format!("alpha={lo} is already profitable")));
    }

    // Interior spot checks: profitability must switch at most once. They
    // double as the first bisection steps.
    let n = config.spot_checks;
    let points: Vec<f64> = (1..=n).map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64).collect();
    let mut flags = Vec::with_capacity(n);
    for &alpha in &points {
        flags.push(probe(alpha, lo, hi, &mut history)?);
    }
    if let Some(first) = flags.iter().position(|&f| f) {
        if let Some(bad) = flags[first..].iter().position(|&f| !f) {
            return Err(Error::NonMonotone(format!(
                "profitable at alpha={} but not at alpha={}",
                points[first],
                points[first + bad]
            )));
        }
        hi = points[first];
        if first > 0 {
            lo = points[first - 1];
        }
    } else if let Some(&last) = points.last() {
        lo = last;
    }
    if let Some(step) = history.last_mut() {
        step.lo = lo;
        step.hi = hi;
    }

    while hi - lo > config.tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid, lo, hi, &mut history)? {
            hi = mid;
        } else {
            lo = mid;
        }
        let step = history.last_mut().expect("just pushed");
        step.lo = lo;
        step.hi = hi;
    }

    let mut params = match spec {
        ModelSpec::Bitcoin(p) => serde_json::json!({"gamma": p.gamma, "max_fork": p.max_fork}),
        ModelSpec::Ethereum(p) => serde_json::json!({"max_fork": p.max_fork}),
    };
    params["horizon"] = config.solve.horizon.into();
    params["stop_threshold"] = config.solve.stop_threshold.into();
    params["margin"] = config.margin.into();
    Ok(ThresholdRecord {
        family: spec.family().to_string(),
        params,
        bracket_history: history,
        threshold: 0.5 * (lo + hi),
    })
}
