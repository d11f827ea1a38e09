//! Bitcoin selfish mining with a single rational miner of mining power `α`
//! and rushing level `γ`.
//!
//! Each transition is a composite step: the chosen action's bookkeeping is
//! applied, then exactly one block is mined. Rewards and difficulty are
//! credited only when blocks are accepted by everyone, so `R` counts the
//! miner's accepted blocks and `D` all accepted blocks.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{explore, Outcome};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, ArrMdp, Policy, StateId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitcoinParams {
    pub alpha: f64,
    pub gamma: f64,
    pub max_fork: u32,
}

impl BitcoinParams {
    pub fn new(alpha: f64, gamma: f64, max_fork: u32) -> Result<Self> {
        let p = Self { alpha, gamma, max_fork };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.alpha) {
            return Err(Error::InvalidParams(format!("alpha {} outside [0, 0.5)", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.max_fork < 2 {
            return Err(Error::InvalidParams(format!("max_fork {} below 2", self.max_fork)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fork {
    /// The last block was mined by the rational miner; matching is impossible.
    Irrelevant,
    /// The last block was honest and just published.
    Relevant,
    /// The miner matched and the network is split.
    Active,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitcoinState {
    pub a: u32,
    pub h: u32,
    pub fork: Fork,
}

impl BitcoinState {
    pub const fn new(a: u32, h: u32, fork: Fork) -> Self {
        Self { a, h, fork }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u32)]
pub enum BitcoinAction {
    Adopt = 0,
    Override = 1,
    Match = 2,
    Wait = 3,
}

impl BitcoinAction {
    pub const ALL: [Self; 4] = [Self::Adopt, Self::Override, Self::Match, Self::Wait];

    pub fn id(self) -> ActionId {
        self as ActionId
    }

    pub fn from_id(id: ActionId) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Adopt => "adopt",
            Self::Override => "override",
            Self::Match => "match",
            Self::Wait => "wait",
        }
    }
}

/// Generated model with its state decoder.
#[derive(Clone, Debug)]
pub struct BitcoinModel {
    pub params: BitcoinParams,
    pub mdp: ArrMdp,
    pub states: Vec<BitcoinState>,
    index: HashMap<BitcoinState, StateId>,
}

impl BitcoinModel {
    pub fn state_id(&self, state: &BitcoinState) -> Option<StateId> {
        self.index.get(state).copied()
    }

    pub fn state(&self, id: StateId) -> BitcoinState {
        self.states[id]
    }

    /// Adopt on any public block, publish a lone private block at once,
    /// never match.
    pub fn honest_policy(&self) -> Policy {
        honest_policy(self)
    }

    pub fn semantics(&self) -> serde_json::Value {
        json!({
            "family": "bitcoin",
            "params": self.params,
            "actions": BitcoinAction::ALL.iter().map(|a| a.name()).collect::<Vec<_>>(),
            "states": self.states,
        })
    }
}

pub fn honest_policy(model: &BitcoinModel) -> Policy {
    let choice = model
        .states
        .iter()
        .map(|s| {
            let action = if s.h >= 1 {
                BitcoinAction::Adopt
            } else if s.a >= 1 {
                BitcoinAction::Override
            } else {
                BitcoinAction::Wait
            };
            action.id()
        })
        .collect();
    Policy::new(&model.mdp, choice).expect("honest actions are admissible in every reachable state")
}

/// Admissible actions and their composite outcomes.
pub(crate) fn expand(p: &BitcoinParams, s: &BitcoinState) -> Vec<(ActionId, Vec<Outcome<BitcoinState>>)> {
    use Fork::*;
    let (alpha, gamma, max) = (p.alpha, p.gamma, p.max_fork);
    let BitcoinState { a, h, fork } = *s;
    let honest = 1.0 - alpha;
    // Lottery once a fork is active: the miner extends her chain, an honest
    // miner extends hers (fork resolved in her favour), or an honest miner
    // extends the public chain.
    let active = |a: u32, h: u32| {
        vec![
            (BitcoinState::new(a + 1, h, Active), alpha, 0.0, 0.0),
            (BitcoinState::new(a - h, 1, Relevant), honest * gamma, h as f64, h as f64),
            (BitcoinState::new(a, h + 1, Relevant), honest * (1.0 - gamma), 0.0, 0.0),
        ]
    };
    let mut out = Vec::with_capacity(4);
    if h >= 1 {
        out.push((
            BitcoinAction::Adopt.id(),
            vec![
                (BitcoinState::new(1, 0, Irrelevant), alpha, 0.0, h as f64),
                (BitcoinState::new(0, 1, Relevant), honest, 0.0, h as f64),
            ],
        ));
    }
    if a > h {
        let won = (h + 1) as f64;
        out.push((
            BitcoinAction::Override.id(),
            vec![
                (BitcoinState::new(a - h, 0, Irrelevant), alpha, won, won),
                (BitcoinState::new(a - h - 1, 1, Relevant), honest, won, won),
            ],
        ));
    }
    if fork == Relevant && h >= 1 && a >= h && a < max && h < max {
        out.push((BitcoinAction::Match.id(), active(a, h)));
    }
    if a < max && h < max {
        let wait = if fork == Active {
            active(a, h)
        } else {
            vec![
                (BitcoinState::new(a + 1, h, Irrelevant), alpha, 0.0, 0.0),
                (BitcoinState::new(a, h + 1, Relevant), honest, 0.0, 0.0),
            ]
        };
        out.push((BitcoinAction::Wait.id(), wait));
    }
    out
}

/// Builds the model over the states reachable from `(0, 0, irrelevant)`.
pub fn build_bitcoin_mdp(params: &BitcoinParams) -> Result<BitcoinModel> {
    params.check()?;
    let bound = f64::from(params.max_fork + 1);
    let init = BitcoinState::new(0, 0, Fork::Irrelevant);
    let (mdp, states) = explore(init, Some((bound, bound)), |s| expand(params, s))?;
    let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    Ok(BitcoinModel {
        params: params.clone(),
        mdp,
        states,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::arr_revenue;
    use crate::mdp::validate;

    #[test]
    fn honest_revenue_is_alpha() {
        for alpha in [0.1, 0.3, 0.45] {
            let m = build_bitcoin_mdp(&BitcoinParams::new(alpha, 0.5, 6).unwrap()).unwrap();
            let rev = arr_revenue(&m.mdp, &m.honest_policy()).unwrap();
            assert!((rev.rev_arr - alpha).abs() < 1e-9, "alpha {alpha}: {}", rev.rev_arr);
        }
    }

    #[test]
    fn generated_model_validates() {
        let m = build_bitcoin_mdp(&BitcoinParams::new(0.4, 0.0, 10).unwrap()).unwrap();
        let honest = m.honest_policy();
        let report = validate(&m.mdp, &[("honest", &honest)], 1e-6);
        assert!(report.is_clean(), "{report:?}");
        assert_eq!(m.mdp.d_max(), 11.0);
    }

    #[test]
    fn boundary_forbids_growth() {
        let p = BitcoinParams::new(0.4, 0.0, 3).unwrap();
        let top = expand(&p, &BitcoinState::new(3, 3, Fork::Relevant));
        assert_eq!(top.iter().map(|(a, _)| *a).collect::<Vec<_>>(), vec![0]);
        let ahead = expand(&p, &BitcoinState::new(3, 1, Fork::Relevant));
        assert_eq!(ahead.iter().map(|(a, _)| *a).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn active_wait_uses_rushing_level() {
        let p = BitcoinParams::new(0.3, 0.25, 10).unwrap();
        let out = expand(&p, &BitcoinState::new(4, 2, Fork::Active));
        let (action, outcomes) = &out[out.len() - 1];
        assert_eq!(*action, BitcoinAction::Wait.id());
        let probs: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
        assert!((probs[1] - 0.7 * 0.25).abs() < 1e-15);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(outcomes[1].0, BitcoinState::new(2, 1, Fork::Relevant));
        assert_eq!((outcomes[1].2, outcomes[1].3), (2.0, 2.0));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(BitcoinParams::new(0.5, 0.0, 10).is_err());
        assert!(BitcoinParams::new(0.3, 1.5, 10).is_err());
        assert!(BitcoinParams::new(0.3, 0.0, 1).is_err());
    }
}
