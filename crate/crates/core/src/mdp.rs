//! Average-reward-ratio MDPs: every transition carries a probability, a
//! reward and a difficulty contribution, and the objective is the long-run
//! ratio of accumulated reward to accumulated difficulty.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::chain::stationary_distribution;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, LinearSolver};

pub type StateId = usize;
pub type ActionId = u32;

/// Tolerance on `Σ prob = 1` for every state-action pair.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// Default lower bound on the average difficulty per step for probe policies.
pub const DEFAULT_DIFFICULTY_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub to: StateId,
    pub prob: f64,
    pub reward: f64,
    pub difficulty: f64,
}

impl Transition {
    pub fn new(to: StateId, prob: f64, reward: f64, difficulty: f64) -> Self {
        Self {
            to,
            prob,
            reward,
            difficulty,
        }
    }
}

/// A finite ARR-MDP in a flat sparse layout.
///
/// State `s` owns the choices `state_ptr[s]..state_ptr[s + 1]`; choice `c`
/// owns the transitions `choice_ptr[c]..choice_ptr[c + 1]`. Action ids are
/// sorted within a state.
#[derive(Clone, Debug)]
pub struct ArrMdp {
    s_init: StateId,
    r_max: f64,
    d_max: f64,
    state_ptr: Vec<usize>,
    actions: Vec<ActionId>,
    choice_ptr: Vec<usize>,
    transitions: Vec<Transition>,
    semantics: Option<serde_json::Value>,
}

impl ArrMdp {
    pub fn num_states(&self) -> usize {
        self.state_ptr.len() - 1
    }

    pub fn num_choices(&self) -> usize {
        self.actions.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn s_init(&self) -> StateId {
        self.s_init
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Model-specific decoding of state and action ids, if the builder
    /// attached one.
    pub fn semantics(&self) -> Option<&serde_json::Value> {
        self.semantics.as_ref()
    }

    pub fn set_semantics(&mut self, semantics: serde_json::Value) {
        self.semantics = Some(semantics);
    }

    /// Global choice indices of `state`.
    pub fn choices(&self, state: StateId) -> std::ops::Range<usize> {
        self.state_ptr[state]..self.state_ptr[state + 1]
    }

    pub fn choice_action(&self, choice: usize) -> ActionId {
        self.actions[choice]
    }

    pub fn choice_transitions(&self, choice: usize) -> &[Transition] {
        &self.transitions[self.choice_ptr[choice]..self.choice_ptr[choice + 1]]
    }

    /// Offset of the first transition of `choice` in the global transition
    /// array; derived models index per-transition data with it.
    pub fn choice_offset(&self, choice: usize) -> usize {
        self.choice_ptr[choice]
    }

    pub fn actions_of(&self, state: StateId) -> &[ActionId] {
        &self.actions[self.choices(state)]
    }

    pub fn choice_index(&self, state: StateId, action: ActionId) -> Option<usize> {
        let range = self.choices(state);
        self.actions[range.clone()]
            .binary_search(&action)
            .ok()
            .map(|k| range.start + k)
    }

    pub fn transitions(&self, state: StateId, action: ActionId) -> Option<&[Transition]> {
        self.choice_index(state, action)
            .map(|c| self.choice_transitions(c))
    }

    /// Same model with every reward multiplied by `c`.
    pub fn scale_rewards(&self, c: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.transitions {
            t.reward *= c;
        }
        out.r_max *= c.abs();
        out
    }

    /// States reachable from `s_init` using any admissible actions.
    pub fn reachable_states(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::from([self.s_init]);
        seen[self.s_init] = true;
        while let Some(s) = queue.pop_front() {
            for c in self.choices(s) {
                for t in self.choice_transitions(c) {
                    if !seen[t.to] {
                        seen[t.to] = true;
                        queue.push_back(t.to);
                    }
                }
            }
        }
        seen
    }

    pub fn to_json(&self) -> ModelDocument {
        let mut transitions = Vec::with_capacity(self.transitions.len());
        for s in 0..self.num_states() {
            for c in self.choices(s) {
                for t in self.choice_transitions(c) {
                    transitions.push(TransitionRecord {
                        from: s,
                        action: self.actions[c],
                        to: t.to,
                        p: t.prob,
                        r: t.reward,
                        d: t.difficulty,
                    });
                }
            }
        }
        ModelDocument {
            states: self.num_states(),
            s_init: self.s_init,
            r_max: self.r_max,
            d_max: self.d_max,
            terminal: None,
            transitions,
            semantics: self.semantics.clone(),
        }
    }

    pub fn from_json(doc: &ModelDocument) -> Result<Self> {
        let mut builder = ArrMdpBuilder::new(doc.states, doc.s_init);
        let mut grouped: Vec<Vec<(ActionId, Transition)>> = vec![Vec::new(); doc.states];
        for rec in &doc.transitions {
            if rec.from >= doc.states {
                return Err(Error::MalformedModel(format!("source state {} out of range", rec.from)));
            }
            grouped[rec.from].push((rec.action, Transition::new(rec.to, rec.p, rec.r, rec.d)));
        }
        for (s, mut entries) in grouped.into_iter().enumerate() {
            entries.sort_by_key(|(a, _)| *a);
            let mut k = 0;
            while k < entries.len() {
                let action = entries[k].0;
                let end = entries[k..]
                    .iter()
                    .position(|(a, _)| *a != action)
                    .map_or(entries.len(), |p| k + p);
                builder.add_choice(s, action, entries[k..end].iter().map(|(_, t)| *t))?;
                k = end;
            }
        }
        builder.with_bounds(doc.r_max, doc.d_max);
        let mut mdp = builder.build()?;
        mdp.semantics = doc.semantics.clone();
        Ok(mdp)
    }

    pub fn write_json<W: std::io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, &self.to_json())?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(reader: R) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_reader(reader)?;
        Self::from_json(&doc)
    }
}

/// Portable JSON form of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub states: usize,
    pub s_init: StateId,
    pub r_max: f64,
    pub d_max: f64,
    /// Id of the absorbing terminal state, present for PT-MDP exports only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<StateId>,
    pub transitions: Vec<TransitionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantics: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from: StateId,
    pub action: ActionId,
    pub to: StateId,
    pub p: f64,
    pub r: f64,
    pub d: f64,
}

/// Incremental constructor. Duplicate `(state, action, next_state)` entries
/// are merged: probabilities add, reward and difficulty are averaged with
/// probability weights.
#[derive(Debug)]
pub struct ArrMdpBuilder {
    num_states: usize,
    s_init: StateId,
    bounds: Option<(f64, f64)>,
    per_state: Vec<Vec<(ActionId, Vec<Transition>)>>,
}

impl ArrMdpBuilder {
    pub fn new(num_states: usize, s_init: StateId) -> Self {
        Self {
            num_states,
            s_init,
            bounds: None,
            per_state: vec![Vec::new(); num_states],
        }
    }

    /// Declares `r_max` and `d_max`; without it they are taken from the
    /// transitions.
    pub fn with_bounds(&mut self, r_max: f64, d_max: f64) -> &mut Self {
        self.bounds = Some((r_max, d_max));
        self
    }

    pub fn add_choice<I>(&mut self, state: StateId, action: ActionId, transitions: I) -> Result<&mut Self>
    where
        I: IntoIterator<Item = Transition>,
    {
        if state >= self.num_states {
            return Err(Error::MalformedModel(format!("state {state} out of range")));
        }
        let mut merged: Vec<Transition> = Vec::new();
        for t in transitions {
            if t.to >= self.num_states {
                return Err(Error::MalformedModel(format!(
                    "transition ({state}, {action}) -> {} out of range",
                    t.to
                )));
            }
            if !(t.prob > 0.0 && t.prob <= 1.0 + PROB_TOLERANCE) || !t.reward.is_finite() || !t.difficulty.is_finite() {
                return Err(Error::MalformedModel(format!(
                    "transition ({state}, {action}) -> {} has p={}, r={}, d={}",
                    t.to, t.prob, t.reward, t.difficulty
                )));
            }
            match merged.iter_mut().find(|m| m.to == t.to) {
                Some(m) => {
                    let p = m.prob + t.prob;
                    m.reward = (m.reward * m.prob + t.reward * t.prob) / p;
                    m.difficulty = (m.difficulty * m.prob + t.difficulty * t.prob) / p;
                    m.prob = p;
                }
                None => merged.push(t),
            }
        }
        if merged.is_empty() {
            return Err(Error::MalformedModel(format!("choice ({state}, {action}) has no transitions")));
        }
        let slot = &mut self.per_state[state];
        if slot.iter().any(|(a, _)| *a == action) {
            return Err(Error::MalformedModel(format!("choice ({state}, {action}) added twice")));
        }
        slot.push((action, merged));
        Ok(self)
    }

    pub fn build(self) -> Result<ArrMdp> {
        if self.s_init >= self.num_states {
            return Err(Error::MalformedModel(format!("s_init {} out of range", self.s_init)));
        }
        let mut state_ptr = vec![0];
        let mut actions = Vec::new();
        let mut choice_ptr = vec![0];
        let mut transitions = Vec::new();
        let (mut r_obs, mut d_obs) = (0.0f64, 0.0f64);
        for (s, mut choices) in self.per_state.into_iter().enumerate() {
            if choices.is_empty() {
                return Err(Error::MalformedModel(format!("state {s} has no admissible action")));
            }
            choices.sort_by_key(|(a, _)| *a);
            for (a, ts) in choices {
                for t in &ts {
                    r_obs = r_obs.max(t.reward.abs());
                    d_obs = d_obs.max(t.difficulty);
                }
                actions.push(a);
                transitions.extend(ts);
                choice_ptr.push(transitions.len());
            }
            state_ptr.push(actions.len());
        }
        let (r_max, d_max) = self.bounds.unwrap_or((r_obs, d_obs));
        Ok(ArrMdp {
            s_init: self.s_init,
            r_max,
            d_max,
            state_ptr,
            actions,
            choice_ptr,
            transitions,
            semantics: None,
        })
    }
}

/// Deterministic stationary policy.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    choice: Vec<ActionId>,
}

impl Policy {
    /// Checks admissibility of every entry.
    pub fn new(mdp: &ArrMdp, choice: Vec<ActionId>) -> Result<Self> {
        let policy = Self { choice };
        policy.check(mdp)?;
        Ok(policy)
    }

    pub fn from_fn(mdp: &ArrMdp, f: impl Fn(StateId) -> ActionId) -> Result<Self> {
        Self::new(mdp, (0..mdp.num_states()).map(f).collect())
    }

    /// Lowest admissible action everywhere.
    pub fn first_admissible(mdp: &ArrMdp) -> Self {
        Self {
            choice: (0..mdp.num_states()).map(|s| mdp.actions_of(s)[0]).collect(),
        }
    }

    pub(crate) fn from_choices_unchecked(choice: Vec<ActionId>) -> Self {
        Self { choice }
    }

    pub fn check(&self, mdp: &ArrMdp) -> Result<()> {
        if self.choice.len() != mdp.num_states() {
            return Err(Error::PolicyLength {
                expected: mdp.num_states(),
                got: self.choice.len(),
            });
        }
        for (s, &a) in self.choice.iter().enumerate() {
            if mdp.choice_index(s, a).is_none() {
                return Err(Error::InvalidPolicy { state: s, action: a });
            }
        }
        Ok(())
    }

    pub fn action(&self, state: StateId) -> ActionId {
        self.choice[state]
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.choice
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }

    /// Global choice index per state. Panics on an inadmissible entry; call
    /// [`Policy::check`] first for untrusted policies.
    pub(crate) fn choice_indices(&self, mdp: &ArrMdp) -> Vec<usize> {
        self.choice
            .iter()
            .enumerate()
            .map(|(s, &a)| mdp.choice_index(s, a).expect("policy checked against model"))
            .collect()
    }
}

/// Markov chain induced by a policy, with per-state expected reward and
/// difficulty.
#[derive(Clone, Debug)]
pub struct InducedChain {
    pub matrix: CsrMatrix,
    pub expected_reward: Vec<f64>,
    pub expected_difficulty: Vec<f64>,
    pub s_init: StateId,
}

impl InducedChain {
    pub fn num_states(&self) -> usize {
        self.matrix.n_rows()
    }

    /// Plain chain without rewards, mostly for tests and examples.
    pub fn from_matrix(matrix: CsrMatrix, s_init: StateId) -> Self {
        let n = matrix.n_rows();
        Self {
            matrix,
            expected_reward: vec![0.0; n],
            expected_difficulty: vec![0.0; n],
            s_init,
        }
    }
}

pub fn induce_chain(mdp: &ArrMdp, policy: &Policy) -> Result<InducedChain> {
    policy.check(mdp)?;
    let choices = policy.choice_indices(mdp);
    let mut expected_reward = Vec::with_capacity(choices.len());
    let mut expected_difficulty = Vec::with_capacity(choices.len());
    let rows: Vec<Vec<(usize, f64)>> = choices
        .iter()
        .map(|&c| {
            let ts = mdp.choice_transitions(c);
            expected_reward.push(ts.iter().map(|t| t.prob * t.reward).sum());
            expected_difficulty.push(ts.iter().map(|t| t.prob * t.difficulty).sum());
            ts.iter().map(|t| (t.to, t.prob)).collect()
        })
        .collect();
    Ok(InducedChain {
        matrix: CsrMatrix::from_rows(mdp.num_states(), rows),
        expected_reward,
        expected_difficulty,
        s_init: mdp.s_init(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityDefect {
    pub state: StateId,
    pub action: ActionId,
    pub sum: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Reward,
    NegativeDifficulty,
    Difficulty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub state: StateId,
    pub action: ActionId,
    pub to: StateId,
    pub kind: BoundKind,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyProbe {
    pub name: String,
    /// `None` when the probe could not be evaluated (e.g. several recurrent
    /// classes).
    pub avg_difficulty: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub probability_defects: Vec<ProbabilityDefect>,
    pub bound_violations: Vec<BoundViolation>,
    pub unreachable_states: Vec<StateId>,
    pub difficulty_probes: Vec<DifficultyProbe>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.probability_defects.is_empty()
            && self.bound_violations.is_empty()
            && self.unreachable_states.is_empty()
            && self.difficulty_probes.iter().all(|p| p.passed)
    }
}

/// Checks the structural assumptions of the ratio objective. `probes` are
/// named policies whose average difficulty per step must exceed `epsilon`.
pub fn validate(mdp: &ArrMdp, probes: &[(&str, &Policy)], epsilon: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    for s in 0..mdp.num_states() {
        for c in mdp.choices(s) {
            let action = mdp.choice_action(c);
            let ts = mdp.choice_transitions(c);
            let sum: f64 = ts.iter().map(|t| t.prob).sum();
            if (sum - 1.0).abs() > PROB_TOLERANCE {
                report.probability_defects.push(ProbabilityDefect { state: s, action, sum });
            }
            for t in ts {
                let mut flag = |kind, value| {
                    report.bound_violations.push(BoundViolation {
                        state: s,
                        action,
                        to: t.to,
                        kind,
                        value,
                    })
                };
                if t.reward.abs() > mdp.r_max() {
                    flag(BoundKind::Reward, t.reward);
                }
                if t.difficulty < 0.0 {
                    flag(BoundKind::NegativeDifficulty, t.difficulty);
                } else if t.difficulty > mdp.d_max() {
                    flag(BoundKind::Difficulty, t.difficulty);
                }
            }
        }
    }
    report.unreachable_states = mdp
        .reachable_states()
        .iter()
        .enumerate()
        .filter(|(_, &r)| !r)
        .map(|(s, _)| s)
        .collect();
    for (name, policy) in probes {
        let avg = induce_chain(mdp, policy).ok().and_then(|chain| {
            stationary_distribution(&chain, LinearSolver::Direct)
                .ok()
                .map(|mu| mu.dot(&chain.expected_difficulty))
        });
        report.difficulty_probes.push(DifficultyProbe {
            name: name.to_string(),
            avg_difficulty: avg,
            passed: avg.is_some_and(|d| d > epsilon),
        });
    }
    report
}
