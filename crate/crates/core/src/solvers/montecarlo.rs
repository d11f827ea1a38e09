use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ArrMdp, Policy};

pub const MIN_STEPS: u64 = 10_000;
const BATCHES: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Batch-means standard error of the ratio estimator.
    pub std_error: f64,
    pub steps: u64,
}

/// Simulates `policy` for `steps` transitions from the initial state and
/// reports `Σ R / Σ D`. Deterministic for a fixed seed.
pub fn monte_carlo_revenue(mdp: &ArrMdp, policy: &Policy, steps: u64, seed: u64) -> Result<McEstimate> {
    if steps < MIN_STEPS {
        return Err(Error::InvalidParams(format!(
            "Monte Carlo needs at least {MIN_STEPS} steps, got {steps}"
        )));
    }
    policy.check(mdp)?;
    let choices = policy.choice_indices(mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch_len = steps / BATCHES;
    let mut batch_r = vec![0.0; BATCHES as usize];
    let mut batch_d = vec![0.0; BATCHES as usize];
    let mut s = mdp.s_init();
    for step in 0..steps {
        let ts = mdp.choice_transitions(choices[s]);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = ts.len() - 1;
        for (k, t) in ts.iter().enumerate() {
            acc += t.prob;
            if u < acc {
                pick = k;
                break;
            }
        }
        let t = ts[pick];
        let b = ((step / batch_len).min(BATCHES - 1)) as usize;
        batch_r[b] += t.reward;
        batch_d[b] += t.difficulty;
        s = t.to;
    }
    let total_r: f64 = batch_r.iter().sum();
    let total_d: f64 = batch_d.iter().sum();
    if total_d <= 0.0 {
        return Err(Error::ZeroDifficulty(0.0));
    }
    let ratio = total_r / total_d;
    let nb = BATCHES as f64;
    let z: Vec<f64> = batch_r.iter().zip(&batch_d).map(|(r, d)| r - ratio * d).collect();
    let z_mean = z.iter().sum::<f64>() / nb;
    let var = z.iter().map(|v| (v - z_mean).powi(2)).sum::<f64>() / (nb - 1.0);
    let std_error = (var / nb).sqrt() / (total_d / nb);
    Ok(McEstimate {
        estimate: ratio,
        std_error,
        steps,
    })
}
