//! Stationary analysis of policy-induced chains and exact ARR revenue.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CsrMatrix, LinearSolver};
use crate::mdp::{induce_chain, ArrMdp, InducedChain, Policy};

/// Average difficulty per step below which revenue is undefined.
pub const MIN_AVG_DIFFICULTY: f64 = 1e-9;

/// Accepted `‖μᵀP − μᵀ‖∞`.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationaryDistribution {
    pub mu: Vec<f64>,
}

impl StationaryDistribution {
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.mu.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// `‖μᵀP − μᵀ‖∞`
    pub fn fixed_point_residual(&self, matrix: &CsrMatrix) -> f64 {
        matrix
            .vec_mul(&self.mu)
            .iter()
            .zip(&self.mu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Strongly connected components of the subgraph induced by `active`,
/// iterative Tarjan. Returns the component id per vertex (`usize::MAX` for
/// inactive vertices) and the number of components.
fn strongly_connected(matrix: &CsrMatrix, active: &[bool]) -> (Vec<usize>, usize) {
    let n = matrix.n_rows();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut n_comp = 0;
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            matrix
                .row(i)
                .filter(|&(j, p)| p > 0.0 && active[j])
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    for root in 0..n {
        if !active[root] || index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(top) = call.last_mut() {
            let v = top.0;
            if top.1 < succ[v].len() {
                let w = succ[v][top.1];
                top.1 += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = n_comp;
                        if w == v {
                            break;
                        }
                    }
                    n_comp += 1;
                }
            }
        }
    }
    (comp, n_comp)
}

/// The unique closed class reachable from `chain.s_init`, as a membership
/// mask.
pub fn recurrent_class(chain: &InducedChain) -> Result<Vec<bool>> {
    let n = chain.num_states();
    let mut reachable = vec![false; n];
    let mut queue = vec![chain.s_init];
    reachable[chain.s_init] = true;
    while let Some(s) = queue.pop() {
        for (j, p) in chain.matrix.row(s) {
            if p > 0.0 && !reachable[j] {
                reachable[j] = true;
                queue.push(j);
            }
        }
    }
    let (comp, n_comp) = strongly_connected(&chain.matrix, &reachable);
    let mut closed = vec![true; n_comp];
    for i in (0..n).filter(|&i| reachable[i]) {
        if chain.matrix.row(i).any(|(j, p)| p > 0.0 && comp[j] != comp[i]) {
            closed[comp[i]] = false;
        }
    }
    let mut bottoms = closed.iter().enumerate().filter(|(_, &c)| c).map(|(k, _)| k);
    let bottom = bottoms.next().ok_or(Error::NotUnichain)?;
    if bottoms.next().is_some() {
        return Err(Error::NotUnichain);
    }
    Ok((0..n).map(|i| reachable[i] && comp[i] == bottom).collect())
}

/// Stationary distribution of the recurrent class reachable from the
/// initial state. Transient and unreachable states get zero mass.
pub fn stationary_distribution(chain: &InducedChain, solver: LinearSolver) -> Result<StationaryDistribution> {
    let n = chain.num_states();
    let class = recurrent_class(chain)?;
    let members: Vec<usize> = (0..n).filter(|&i| class[i]).collect();
    let mut local = vec![usize::MAX; n];
    for (k, &i) in members.iter().enumerate() {
        local[i] = k;
    }
    let m = members.len();
    // Column j of (I - P_C)ᵀ is row j of I - P_C; build the transpose
    // directly, then overwrite row 0 with the normalisation Σμ = 1.
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (k, &i) in members.iter().enumerate() {
        rows[k].push((k, 1.0));
        for (j, p) in chain.matrix.row(i) {
            rows[local[j]].push((k, -p));
        }
    }
    rows[0] = (0..m).map(|k| (k, 1.0)).collect();
    let a = CsrMatrix::from_rows(m, rows);
    let mut b = vec![0.0; m];
    b[0] = 1.0;
    let guess = vec![1.0 / m as f64; m];
    let x = linalg::solve(solver, &a, &b, Some(&guess))?;
    let mut mu = vec![0.0; n];
    for (k, &i) in members.iter().enumerate() {
        mu[i] = x[k].max(0.0);
    }
    let total: f64 = mu.iter().sum();
    if !(total > 0.0) {
        return Err(Error::SolverFailure("stationary vector vanished".into()));
    }
    mu.iter_mut().for_each(|v| *v /= total);
    let dist = StationaryDistribution { mu };
    let residual = dist.fixed_point_residual(&chain.matrix);
    if residual > FIXED_POINT_TOLERANCE {
        return Err(Error::SolverFailure(format!(
            "stationary residual {residual:.3e} above {FIXED_POINT_TOLERANCE:.0e}"
        )));
    }
    Ok(dist)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevenueBreakdown {
    #[serde(rename = "rev")]
    pub rev_arr: f64,
    #[serde(rename = "avg_r")]
    pub avg_reward_per_step: f64,
    #[serde(rename = "avg_d")]
    pub avg_difficulty_per_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<StationaryDistribution>,
}

impl RevenueBreakdown {
    pub fn without_mu(mut self) -> Self {
        self.mu = None;
        self
    }
}

/// Revenue of `policy` as `⟨R̂, μ⟩ / ⟨D̂, μ⟩`.
pub fn arr_revenue(mdp: &ArrMdp, policy: &Policy) -> Result<RevenueBreakdown> {
    arr_revenue_with(mdp, policy, LinearSolver::Direct)
}

pub fn arr_revenue_with(mdp: &ArrMdp, policy: &Policy, solver: LinearSolver) -> Result<RevenueBreakdown> {
    let chain = induce_chain(mdp, policy)?;
    chain_revenue(&chain, solver)
}

pub fn chain_revenue(chain: &InducedChain, solver: LinearSolver) -> Result<RevenueBreakdown> {
    let mu = stationary_distribution(chain, solver)?;
    let avg_r = mu.dot(&chain.expected_reward);
    let avg_d = mu.dot(&chain.expected_difficulty);
    if avg_d <= MIN_AVG_DIFFICULTY {
        return Err(Error::ZeroDifficulty(avg_d));
    }
    Ok(RevenueBreakdown {
        rev_arr: avg_r / avg_d,
        avg_reward_per_step: avg_r,
        avg_difficulty_per_step: avg_d,
        mu: Some(mu),
    })
}
