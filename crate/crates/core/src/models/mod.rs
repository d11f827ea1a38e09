//! Selfish-mining models. Both generators enumerate the states reachable
//! from the synchronised start state and attach a state decoder that is
//! exported under the `semantics` key of the model JSON.

pub mod bitcoin;
pub mod ethereum;

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use crate::error::Result;
use crate::mdp::{ActionId, ArrMdp, ArrMdpBuilder, Transition};

/// One outcome of a composite step: next state, probability, reward,
/// difficulty.
pub(crate) type Outcome<S> = (S, f64, f64, f64);

/// Breadth-first enumeration of the states reachable from `init`. `expand`
/// lists the admissible actions of a state with their outcomes; outcomes
/// with zero probability are dropped.
pub(crate) fn explore<S, F>(init: S, bounds: Option<(f64, f64)>, mut expand: F) -> Result<(ArrMdp, Vec<S>)>
where
    S: Copy + Eq + Hash,
    F: FnMut(&S) -> Vec<(ActionId, Vec<Outcome<S>>)>,
{
    let mut index: HashMap<S, usize> = HashMap::new();
    let mut states = vec![init];
    index.insert(init, 0);
    let mut queue = VecDeque::from([0usize]);
    let mut choices: Vec<Vec<(ActionId, Vec<Transition>)>> = Vec::new();
    while let Some(id) = queue.pop_front() {
        let state = states[id];
        let mut per_action = Vec::new();
        for (action, outcomes) in expand(&state) {
            let mut ts = Vec::with_capacity(outcomes.len());
            for (next, p, r, d) in outcomes {
                if p <= 0.0 {
                    continue;
                }
                let to = *index.entry(next).or_insert_with(|| {
                    states.push(next);
                    queue.push_back(states.len() - 1);
                    states.len() - 1
                });
                ts.push(Transition::new(to, p, r, d));
            }
            per_action.push((action, ts));
        }
        if choices.len() <= id {
            choices.resize_with(id + 1, Vec::new);
        }
        choices[id] = per_action;
    }
    let mut builder = ArrMdpBuilder::new(states.len(), 0);
    if let Some((r, d)) = bounds {
        builder.with_bounds(r, d);
    }
    for (s, per_action) in choices.into_iter().enumerate() {
        for (a, ts) in per_action {
            builder.add_choice(s, a, ts)?;
        }
    }
    Ok((builder.build()?, states))
}

/// Model family with its parameters, as accepted by the experiment layer.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelSpec {
    Bitcoin(bitcoin::BitcoinParams),
    Ethereum(ethereum::EthereumParams),
}

/// A generated model together with its honest reference policy and state
/// decoder.
pub struct BuiltModel {
    pub mdp: ArrMdp,
    pub honest: crate::mdp::Policy,
    pub semantics: serde_json::Value,
}

impl ModelSpec {
    pub fn alpha(&self) -> f64 {
        match self {
            Self::Bitcoin(p) => p.alpha,
            Self::Ethereum(p) => p.alpha,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        match self {
            Self::Bitcoin(p) => Self::Bitcoin(bitcoin::BitcoinParams { alpha, ..p.clone() }),
            Self::Ethereum(p) => Self::Ethereum(ethereum::EthereumParams { alpha, ..p.clone() }),
        }
    }

    pub fn with_max_fork(&self, max_fork: u32) -> Self {
        match self {
            Self::Bitcoin(p) => Self::Bitcoin(bitcoin::BitcoinParams { max_fork, ..p.clone() }),
            Self::Ethereum(p) => Self::Ethereum(ethereum::EthereumParams { max_fork, ..p.clone() }),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Bitcoin(_) => "bitcoin",
            Self::Ethereum(_) => "ethereum",
        }
    }

    pub fn build(&self) -> Result<BuiltModel> {
        match self {
            Self::Bitcoin(p) => {
                let m = bitcoin::build_bitcoin_mdp(p)?;
                Ok(BuiltModel {
                    honest: m.honest_policy(),
                    semantics: m.semantics(),
                    mdp: m.mdp,
                })
            }
            Self::Ethereum(p) => {
                let m = ethereum::build_ethereum_mdp(p)?;
                Ok(BuiltModel {
                    honest: m.honest_policy(),
                    semantics: m.semantics(),
                    mdp: m.mdp,
                })
            }
        }
    }
}
