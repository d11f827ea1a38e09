//! Probabilistic termination: the ratio objective is replaced by the total
//! reward of an auxiliary MDP that stops after each unit of difficulty with
//! probability `1/H`, so the expected difficulty until termination is about
//! `H` and maximising total reward maximises reward per unit of difficulty.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{arr_revenue_with, RevenueBreakdown};
use crate::error::{Error, Result};
use crate::linalg::LinearSolver;
use crate::mdp::{ArrMdp, ArrMdpBuilder, ModelDocument, Policy, StateId, Transition};
use crate::solvers::{evaluate_ssp, ssp_policy_iteration, PiConfig, SolveReport};

/// Below `WARN_HORIZON_FACTOR · d_max` the expected-horizon bound is loose.
pub const WARN_HORIZON_FACTOR: f64 = 100.0;

/// One outgoing edge of a PT-MDP choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PtEdge {
    pub to: StateId,
    pub prob: f64,
    pub reward: f64,
    pub difficulty: f64,
    pub terminates: bool,
}

/// ARR-MDP augmented with an absorbing terminal state. Shares states,
/// actions and per-transition rewards with its base model; only the
/// probabilities change.
#[derive(Clone, Debug)]
pub struct PtMdp<'a> {
    base: &'a ArrMdp,
    horizon: f64,
    survive: Vec<f64>,
    terminate: Vec<f64>,
}

/// Continuation probability `(1 − 1/H)^d`, together with its complement
/// computed without cancellation.
pub fn continuation(horizon: f64, difficulty: f64) -> (f64, f64) {
    let log_q = (-1.0 / horizon).ln_1p();
    let stay = (difficulty * log_q).exp();
    let stop = -(difficulty * log_q).exp_m1();
    (stay, stop)
}

pub fn build_pt_mdp(mdp: &ArrMdp, horizon: f64) -> Result<PtMdp<'_>> {
    if !(horizon > mdp.d_max()) || !horizon.is_finite() {
        return Err(Error::HorizonTooSmall {
            horizon,
            d_max: mdp.d_max(),
        });
    }
    if horizon < WARN_HORIZON_FACTOR * mdp.d_max() {
        log::warn!(
            "horizon {horizon} is below {WARN_HORIZON_FACTOR}·d_max = {}; the approximation may be poor",
            WARN_HORIZON_FACTOR * mdp.d_max()
        );
    }
    let n_tr = mdp.num_transitions();
    let mut survive = Vec::with_capacity(n_tr);
    let mut terminate = Vec::with_capacity(n_tr);
    for c in 0..mdp.num_choices() {
        for t in mdp.choice_transitions(c) {
            if t.difficulty == 0.0 {
                survive.push(t.prob);
                terminate.push(0.0);
            } else {
                let (stay, stop) = continuation(horizon, t.difficulty);
                survive.push(t.prob * stay);
                terminate.push(t.prob * stop);
            }
        }
    }
    Ok(PtMdp {
        base: mdp,
        horizon,
        survive,
        terminate,
    })
}

impl<'a> PtMdp<'a> {
    pub fn base(&self) -> &'a ArrMdp {
        self.base
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Id of the absorbing state, one past the base model's states.
    pub fn terminal(&self) -> StateId {
        self.base.num_states()
    }

    pub fn num_states(&self) -> usize {
        self.base.num_states() + 1
    }

    /// Survive and terminate probability of the `k`-th transition of `choice`.
    pub(crate) fn split(&self, choice: usize, k: usize) -> (f64, f64) {
        let idx = self.base.choice_offset(choice) + k;
        (self.survive[idx], self.terminate[idx])
    }

    /// Edges of a base choice: one survive edge per base transition, plus a
    /// terminate edge for each transition with positive difficulty.
    pub fn edges(&self, choice: usize) -> impl Iterator<Item = PtEdge> + '_ {
        self.base
            .choice_transitions(choice)
            .iter()
            .enumerate()
            .flat_map(move |(k, t)| {
                let (stay, stop) = self.split(choice, k);
                let survive = PtEdge {
                    to: t.to,
                    prob: stay,
                    reward: t.reward,
                    difficulty: t.difficulty,
                    terminates: false,
                };
                let end = (stop > 0.0).then_some(PtEdge {
                    to: self.terminal(),
                    prob: stop,
                    reward: t.reward,
                    difficulty: t.difficulty,
                    terminates: true,
                });
                std::iter::once(survive).chain(end)
            })
    }

    /// Total probability of a choice.
    pub fn choice_mass(&self, choice: usize) -> f64 {
        self.edges(choice).map(|e| e.prob).sum()
    }

    /// Materialises the PT-MDP as an ordinary model with the terminal state
    /// as a zero-reward self-loop.
    pub fn to_arr_mdp(&self) -> Result<ArrMdp> {
        let n = self.base.num_states();
        let mut b = ArrMdpBuilder::new(n + 1, self.base.s_init());
        for s in 0..n {
            for c in self.base.choices(s) {
                let edges: Vec<Transition> = self
                    .edges(c)
                    .filter(|e| e.prob > 0.0)
                    .map(|e| Transition::new(e.to, e.prob, e.reward, e.difficulty))
                    .collect();
                b.add_choice(s, self.base.choice_action(c), edges)?;
            }
        }
        b.add_choice(n, 0, [Transition::new(n, 1.0, 0.0, 0.0)])?;
        b.with_bounds(self.base.r_max(), self.base.d_max());
        b.build()
    }

    /// JSON export in the model format, flagged with the terminal state.
    pub fn to_json(&self) -> Result<ModelDocument> {
        let mut doc = self.to_arr_mdp()?.to_json();
        doc.terminal = Some(self.terminal());
        doc.semantics = self.base.semantics().cloned();
        Ok(doc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PtoSolveConfig {
    pub horizon: f64,
    pub stop_threshold: f64,
    pub max_iterations: usize,
    pub linear_solver: LinearSolver,
}

impl Default for PtoSolveConfig {
    fn default() -> Self {
        Self {
            horizon: 1e6,
            stop_threshold: 1e-5,
            max_iterations: 200,
            linear_solver: LinearSolver::Direct,
        }
    }
}

impl PtoSolveConfig {
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            horizon,
            ..Self::default()
        }
    }

    pub fn check(&self, mdp: &ArrMdp) -> Result<()> {
        if !(self.horizon > mdp.d_max()) {
            return Err(Error::HorizonTooSmall {
                horizon: self.horizon,
                d_max: mdp.d_max(),
            });
        }
        if !(self.stop_threshold > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidParams(
                "stop threshold and iteration limit must be positive".into(),
            ));
        }
        Ok(())
    }

    fn pi(&self) -> PiConfig {
        PiConfig {
            stop_threshold: self.stop_threshold,
            max_iterations: self.max_iterations,
            linear_solver: self.linear_solver,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PtoOutcome {
    #[serde(skip)]
    pub policy: Policy,
    pub horizon: f64,
    /// `(1/H)·E[Σ R]` until termination, from the initial state.
    pub rev_pt: f64,
    /// Revenue of the returned policy in the original model.
    pub rev_arr: f64,
    pub report: SolveReport,
    pub revenue: RevenueBreakdown,
}

/// Solves the ratio objective through the PT-MDP and evaluates the result
/// exactly on the original model.
pub fn solve_pto(mdp: &ArrMdp, config: &PtoSolveConfig) -> Result<PtoOutcome> {
    solve_pto_from(mdp, config, None)
}

/// Same as [`solve_pto`], starting policy iteration from `initial`.
pub fn solve_pto_from(mdp: &ArrMdp, config: &PtoSolveConfig, initial: Option<&Policy>) -> Result<PtoOutcome> {
    config.check(mdp)?;
    let start = Instant::now();
    let pt = build_pt_mdp(mdp, config.horizon)?;
    let (policy, mut report) = ssp_policy_iteration(&pt, &config.pi(), initial)?;
    let revenue = arr_revenue_with(mdp, &policy, config.linear_solver)?.without_mu();
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(PtoOutcome {
        rev_pt: report.objective_value / config.horizon,
        rev_arr: revenue.rev_arr,
        horizon: config.horizon,
        policy,
        report,
        revenue,
    })
}

/// Expected total reward until absorption from the initial state, i.e.
/// `H · REV_PT(H)`. One linear solve.
pub fn pt_total_reward(pt: &PtMdp<'_>, policy: &Policy, solver: LinearSolver) -> Result<f64> {
    pt_total_reward_from(pt, policy, pt.base().s_init(), solver)
}

pub fn pt_total_reward_from(pt: &PtMdp<'_>, policy: &Policy, start: StateId, solver: LinearSolver) -> Result<f64> {
    if start == pt.terminal() {
        return Ok(0.0);
    }
    policy.check(pt.base())?;
    let values = evaluate_ssp(pt, &policy.choice_indices(pt.base()), solver, None)?;
    Ok(values[start])
}

/// Sample mean and standard error of the total difficulty accumulated until
/// termination, over `episodes` independent PT-MDP runs under `policy`.
pub fn simulate_total_difficulty(
    pt: &PtMdp<'_>,
    policy: &Policy,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    const CHUNK: usize = 1024;
    policy.check(pt.base())?;
    let base = pt.base();
    let choices = policy.choice_indices(base);
    let chunks = episodes.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let count = CHUNK.min(episodes - k * CHUNK);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..count {
                let mut s = base.s_init();
                let mut total = 0.0;
                loop {
                    let c = choices[s];
                    let ts = base.choice_transitions(c);
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut k_pick = ts.len() - 1;
                    for (k, t) in ts.iter().enumerate() {
                        acc += t.prob;
                        if u < acc {
                            k_pick = k;
                            break;
                        }
                    }
                    let t = ts[k_pick];
                    total += t.difficulty;
                    if t.difficulty > 0.0 {
                        let (stay, _) = continuation(pt.horizon(), t.difficulty);
                        if rng.random::<f64>() >= stay {
                            break;
                        }
                    }
                    s = t.to;
                }
                sum += total;
                sum_sq += total * total;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partial.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = episodes as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}
