//! Ethereum selfish mining with uncle and nephew rewards and a difficulty
//! adjustment that counts every referenced uncle as one block.
//!
//! State `(a, h, fork, r, u_a, u_h)`:
//! * `a`, `h`: private and public chain lengths since the last fork.
//! * `fork`: relevant, or active after a match. Ties split evenly.
//! * `r`: length of the public chain when the first private block was
//!   revealed, or 0 while it is secret. Public blocks from index `r + 1` on
//!   may reference it, the block at index `k` at distance `k − 1`.
//! * `u_a`: the miner's previous fork block was credited as an uncle in
//!   advance and has not been referenced yet.
//! * `u_h`: bit `i − 1` marks an honest uncle that the next block on top of
//!   the accepted head would reference at distance `i`.
//!
//! The rational miner references only her own blocks. Honest blocks
//! reference up to two uncles each, oldest first.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{explore, Outcome};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, ArrMdp, Policy, StateId};

/// Maximal uncle distance.
pub const MAX_UNCLE_DISTANCE: u8 = 6;
pub const NEPHEW_REWARD: f64 = 1.0 / 32.0;
/// Penalty when an advance-credited uncle is referenced one block late.
pub const LATE_UNCLE_FINE: f64 = 1.0 / 8.0;
const UNCLES_PER_BLOCK: usize = 2;

/// Uncle reward at distance `d ∈ 1..=6`: 7/8 down to 2/8.
pub fn uncle_reward(d: u8) -> f64 {
    debug_assert!((1..=MAX_UNCLE_DISTANCE).contains(&d));
    f64::from(8 - d) / 8.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EthereumParams {
    pub alpha: f64,
    pub max_fork: u32,
}

impl EthereumParams {
    pub fn new(alpha: f64, max_fork: u32) -> Result<Self> {
        let p = Self { alpha, max_fork };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.alpha) {
            return Err(Error::InvalidParams(format!("alpha {} outside [0, 0.5)", self.alpha)));
        }
        if !(2..=250).contains(&self.max_fork) {
            return Err(Error::InvalidParams(format!("max_fork {} outside [2, 250]", self.max_fork)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EthFork {
    Relevant,
    Active,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EthereumState {
    pub a: u8,
    pub h: u8,
    pub fork: EthFork,
    pub r: u8,
    pub u_a: bool,
    pub u_h: u8,
}

impl EthereumState {
    pub const INIT: Self = Self {
        a: 0,
        h: 0,
        fork: EthFork::Relevant,
        r: 0,
        u_a: false,
        u_h: 0,
    };

    /// Honest uncle available at distance `d` from the next block.
    pub fn has_uncle(&self, d: u8) -> bool {
        self.u_h & bit(d) != 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u32)]
pub enum EthereumAction {
    Adopt = 0,
    Override = 1,
    Match = 2,
    Wait = 3,
    Reveal = 4,
}

impl EthereumAction {
    pub const ALL: [Self; 5] = [Self::Adopt, Self::Override, Self::Match, Self::Wait, Self::Reveal];

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
            Self::Reveal => "reveal",
        }
    }
}

fn bit(d: u8) -> u8 {
    if (1..=MAX_UNCLE_DISTANCE).contains(&d) {
        1 << (d - 1)
    } else {
        0
    }
}

/// Ages every uncle by `k` blocks, dropping those beyond distance 6.
fn shift(u_h: u8, k: u32) -> u8 {
    if k >= u32::from(MAX_UNCLE_DISTANCE) {
        0
    } else {
        (u_h << k) & 0x3F
    }
}

/// Bookkeeping of an adopt: the public chain `p_1..p_h` becomes the main
/// chain and each of its blocks references uncles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdoptOutcome {
    pub reward: f64,
    pub difficulty: f64,
    pub honest_uncles: u32,
    /// Public block index that referenced the miner's first fork block.
    pub own_uncle_at: Option<u8>,
    pub u_a: bool,
    pub u_h: u8,
}

pub fn adopt_outcome(s: &EthereumState) -> AdoptOutcome {
    let h = s.h;
    let mut avail = s.u_h;
    let own_candidate = s.a >= 1 && s.r > 0;
    let mut own_uncle_at = None;
    let mut reward = 0.0;
    let mut honest_uncles = 0u32;
    for k in 1..=h {
        let mut slots = UNCLES_PER_BLOCK;
        for i in (1..=MAX_UNCLE_DISTANCE).rev() {
            if slots == 0 {
                break;
            }
            if avail & bit(i) != 0 && u32::from(i) + u32::from(k) - 1 <= u32::from(MAX_UNCLE_DISTANCE) {
                avail &= !bit(i);
                honest_uncles += 1;
                slots -= 1;
            }
        }
        if k == 1 && s.u_a && slots == 0 {
            reward -= LATE_UNCLE_FINE;
        }
        if own_candidate
            && own_uncle_at.is_none()
            && slots > 0
            && k > s.r
            && k - 1 <= MAX_UNCLE_DISTANCE
        {
            own_uncle_at = Some(k);
            reward += uncle_reward(k - 1);
        }
    }
    let mut difficulty = f64::from(h) + f64::from(honest_uncles);
    let mut u_a = false;
    if own_uncle_at.is_some() {
        difficulty += 1.0;
    } else if own_candidate && h <= MAX_UNCLE_DISTANCE {
        // credited now, assuming the first block of the next fork
        // references it
        reward += uncle_reward(h);
        difficulty += 1.0;
        u_a = true;
    }
    AdoptOutcome {
        reward,
        difficulty,
        honest_uncles,
        own_uncle_at,
        u_a,
        u_h: shift(avail, u32::from(h)),
    }
}

#[derive(Clone, Debug)]
pub struct EthereumModel {
    pub params: EthereumParams,
    pub mdp: ArrMdp,
    pub states: Vec<EthereumState>,
    index: HashMap<EthereumState, StateId>,
}

impl EthereumModel {
    pub fn state_id(&self, state: &EthereumState) -> Option<StateId> {
        self.index.get(state).copied()
    }

    pub fn state(&self, id: StateId) -> EthereumState {
        self.states[id]
    }

    pub fn honest_policy(&self) -> Policy {
        ethereum_honest_policy(self)
    }

    pub fn semantics(&self) -> serde_json::Value {
        json!({
            "family": "ethereum",
            "params": self.params,
            "actions": EthereumAction::ALL.iter().map(|a| a.name()).collect::<Vec<_>>(),
            "states": self.states,
        })
    }
}

/// Publish immediately, adopt any public block, never withhold.
pub fn ethereum_honest_policy(model: &EthereumModel) -> Policy {
    let choice = model
        .states
        .iter()
        .map(|s| {
            let action = if s.h >= 1 {
                EthereumAction::Adopt
            } else if s.a >= 1 {
                EthereumAction::Override
            } else {
                EthereumAction::Wait
            };
            action.id()
        })
        .collect();
    Policy::new(&model.mdp, choice).expect("honest actions are admissible in every reachable state")
}

pub(crate) fn expand(p: &EthereumParams, s: &EthereumState) -> Vec<(ActionId, Vec<Outcome<EthereumState>>)> {
    use EthFork::*;
    let alpha = p.alpha;
    let honest = 1.0 - alpha;
    let max = p.max_fork as u8;
    let EthereumState { a, h, fork, r, u_a, u_h } = *s;

    // One block arrives on top of `base` with no fork in progress.
    let plain = |base: EthereumState, reward: f64, difficulty: f64| {
        vec![
            (EthereumState { a: base.a + 1, ..base }, alpha, reward, difficulty),
            (EthereumState { h: base.h + 1, ..base }, honest, reward, difficulty),
        ]
    };
    // One block arrives while the network is split evenly.
    let split = |base: EthereumState| {
        let resolved = EthereumState {
            a: base.a - base.h,
            h: 1,
            fork: Relevant,
            r: 0,
            u_a: false,
            u_h: shift(base.u_h, u32::from(base.h)) | bit(base.h),
        };
        let nephew = if base.u_a { NEPHEW_REWARD } else { 0.0 };
        vec![
            (EthereumState { a: base.a + 1, ..base }, alpha, 0.0, 0.0),
            (resolved, honest * 0.5, f64::from(base.h) + nephew, f64::from(base.h)),
            (
                EthereumState {
                    h: base.h + 1,
                    fork: Relevant,
                    ..base
                },
                honest * 0.5,
                0.0,
                0.0,
            ),
        ]
    };

    let mut out = Vec::with_capacity(5);
    if h >= 1 {
        let o = adopt_outcome(s);
        let base = EthereumState {
            a: 0,
            h: 0,
            fork: Relevant,
            r: 0,
            u_a: o.u_a,
            u_h: o.u_h,
        };
        out.push((EthereumAction::Adopt.id(), plain(base, o.reward, o.difficulty)));
    }
    if a > h {
        let mut fresh = shift(u_h, u32::from(h) + 1);
        if h >= 1 {
            fresh |= bit(h + 1);
        }
        let base = EthereumState {
            a: a - h - 1,
            h: 0,
            fork: Relevant,
            r: 0,
            u_a: false,
            u_h: fresh,
        };
        let won = f64::from(h) + 1.0;
        let nephew = if u_a { NEPHEW_REWARD } else { 0.0 };
        out.push((EthereumAction::Override.id(), plain(base, won + nephew, won)));
    }
    if fork == Relevant && h >= 1 && a >= h && a < max && h < max {
        let revealed = if r == 0 && (1..=MAX_UNCLE_DISTANCE).contains(&h) { h } else { r };
        out.push((
            EthereumAction::Match.id(),
            split(EthereumState {
                fork: Active,
                r: revealed,
                ..*s
            }),
        ));
    }
    if a < max && h < max {
        let wait = match fork {
            Relevant => plain(*s, 0.0, 0.0),
            Active => split(*s),
        };
        out.push((EthereumAction::Wait.id(), wait));
    }
    if a > 0 && r == 0 && (2..=MAX_UNCLE_DISTANCE).contains(&h) {
        out.push((
            EthereumAction::Reveal.id(),
            vec![(EthereumState { r: h, ..*s }, 1.0, 0.0, 0.0)],
        ));
    }
    out
}

/// Builds the model over the states reachable from the all-clear start.
pub fn build_ethereum_mdp(params: &EthereumParams) -> Result<EthereumModel> {
    params.check()?;
    let (mdp, states) = explore(EthereumState::INIT, None, |s| expand(params, s))?;
    let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    Ok(EthereumModel {
        params: params.clone(),
        mdp,
        states,
        index,
    })
}
