use std::collections::HashSet;

use arrmdp::mdp::{induce_chain, validate};
use arrmdp::models::bitcoin::{build_bitcoin_mdp, BitcoinAction, BitcoinParams, BitcoinState, Fork};
use arrmdp::models::ethereum::{
    build_ethereum_mdp, EthFork, EthereumAction, EthereumModel, EthereumParams, EthereumState, MAX_UNCLE_DISTANCE,
};
use arrmdp::{arr_revenue, solve_pto, ArrMdp, Policy, PtoSolveConfig, StateId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn bitcoin_fork2_matches_hand_enumeration() {
    use BitcoinAction::*;
    use Fork::*;
    type Row = ((u32, u32, Fork), BitcoinAction, Vec<((u32, u32, Fork), f64, f64, f64)>);
    let (p, q) = (0.4, 0.6);
    let to_both = |r: f64, d: f64| vec![((1, 0, Irrelevant), p, r, d), ((0, 1, Relevant), q, r, d)];
    let expected: Vec<Row> = vec![
        ((0, 0, Irrelevant), Wait, vec![((1, 0, Irrelevant), p, 0.0, 0.0), ((0, 1, Relevant), q, 0.0, 0.0)]),
        ((1, 0, Irrelevant), Override, to_both(1.0, 1.0)),
        ((1, 0, Irrelevant), Wait, vec![((2, 0, Irrelevant), p, 0.0, 0.0), ((1, 1, Relevant), q, 0.0, 0.0)]),
        ((0, 1, Relevant), Adopt, to_both(0.0, 1.0)),
        ((0, 1, Relevant), Wait, vec![((1, 1, Irrelevant), p, 0.0, 0.0), ((0, 2, Relevant), q, 0.0, 0.0)]),
        ((2, 0, Irrelevant), Override, vec![((2, 0, Irrelevant), p, 1.0, 1.0), ((1, 1, Relevant), q, 1.0, 1.0)]),
        ((1, 1, Relevant), Adopt, to_both(0.0, 1.0)),
        ((1, 1, Relevant), Match, vec![((2, 1, Active), p, 0.0, 0.0), ((1, 2, Relevant), q, 0.0, 0.0)]),
        ((1, 1, Relevant), Wait, vec![((2, 1, Irrelevant), p, 0.0, 0.0), ((1, 2, Relevant), q, 0.0, 0.0)]),
        ((1, 1, Irrelevant), Adopt, to_both(0.0, 1.0)),
        ((1, 1, Irrelevant), Wait, vec![((2, 1, Irrelevant), p, 0.0, 0.0), ((1, 2, Relevant), q, 0.0, 0.0)]),
        ((0, 2, Relevant), Adopt, to_both(0.0, 2.0)),
        ((2, 1, Active), Adopt, to_both(0.0, 1.0)),
        ((2, 1, Active), Override, to_both(2.0, 2.0)),
        ((1, 2, Relevant), Adopt, to_both(0.0, 2.0)),
        ((2, 1, Irrelevant), Adopt, to_both(0.0, 1.0)),
        ((2, 1, Irrelevant), Override, to_both(2.0, 2.0)),
    ];

    let model = build_bitcoin_mdp(&BitcoinParams::new(0.4, 0.0, 2).unwrap()).unwrap();
    let states: HashSet<_> = expected.iter().map(|r| r.0).collect();
    assert_eq!(model.mdp.num_states(), states.len());
    let choices: usize = (0..model.mdp.num_states()).map(|s| model.mdp.actions_of(s).len()).sum();
    assert_eq!(choices, expected.len());

    for ((a, h, fork), action, outcomes) in expected {
        let s = model.state_id(&BitcoinState::new(a, h, fork)).expect("state present");
        let ts = model
            .mdp
            .transitions(s, action.id())
            .unwrap_or_else(|| panic!("{action:?} missing at ({a},{h},{fork:?})"));
        assert_eq!(ts.len(), outcomes.len(), "({a},{h},{fork:?}) {action:?}");
        for ((ta, th, tf), prob, r, d) in outcomes {
            let to = model.state_id(&BitcoinState::new(ta, th, tf)).unwrap();
            let t = ts.iter().find(|t| t.to == to).expect("target present");
            assert!(close(t.prob, prob) && close(t.reward, r) && close(t.difficulty, d), "{t:?}");
        }
    }
    assert_eq!(model.mdp.d_max(), 3.0);
    assert_eq!(model.mdp.r_max(), 3.0);
}

#[test]
fn bitcoin_fork10_validates_cleanly() {
    let model = build_bitcoin_mdp(&BitcoinParams::new(0.4, 0.0, 10).unwrap()).unwrap();
    let honest = model.honest_policy();
    let report = validate(&model.mdp, &[("honest", &honest)], 1e-6);
    assert!(report.is_clean(), "{report:?}");
    assert!(model.mdp.reachable_states().iter().all(|&r| r));
}

#[test]
fn bitcoin_honest_chain_rewards_match_enumeration() {
    let model = build_bitcoin_mdp(&BitcoinParams::new(0.3, 0.5, 10).unwrap()).unwrap();
    let chain = induce_chain(&model.mdp, &model.honest_policy()).unwrap();
    // (state, expected R̂, expected D̂) worked out from the honest rules
    let cases = [
        (BitcoinState::new(1, 0, Fork::Irrelevant), 1.0, 1.0),
        (BitcoinState::new(0, 1, Fork::Relevant), 0.0, 1.0),
        (BitcoinState::new(0, 0, Fork::Irrelevant), 0.0, 0.0),
    ];
    for (state, r, d) in cases {
        let s = model.state_id(&state).unwrap();
        assert!(close(chain.expected_reward[s], r) && close(chain.expected_difficulty[s], d), "{state:?}");
        assert!(close(chain.matrix.row_sum(s), 1.0));
    }
}

fn optimal_revenue(mdp: &ArrMdp) -> f64 {
    solve_pto(mdp, &PtoSolveConfig::default()).unwrap().rev_arr
}

#[test]
fn bitcoin_revenue_grows_with_fork_bound() {
    let revs: Vec<f64> = [10, 20, 40, 80]
        .iter()
        .map(|&f| optimal_revenue(&build_bitcoin_mdp(&BitcoinParams::new(0.4, 0.5, f).unwrap()).unwrap().mdp))
        .collect();
    for w in revs.windows(2) {
        assert!(w[1] >= w[0] - 1e-7, "{revs:?}");
    }
}

#[test]
fn bitcoin_revenue_grows_with_rushing() {
    let revs: Vec<f64> = [0.0, 0.5, 1.0]
        .iter()
        .map(|&g| optimal_revenue(&build_bitcoin_mdp(&BitcoinParams::new(0.35, g, 30).unwrap()).unwrap().mdp))
        .collect();
    for w in revs.windows(2) {
        assert!(w[1] >= w[0] - 1e-7, "{revs:?}");
    }
}

#[test]
fn bitcoin_half_rushing_threshold_sits_at_a_quarter() {
    // break-even exactly at 0.25, profitable just above
    let rev = |alpha: f64| optimal_revenue(&build_bitcoin_mdp(&BitcoinParams::new(alpha, 0.5, 30).unwrap()).unwrap().mdp);
    assert!((rev(0.25) - 0.25).abs() < 1e-7);
    assert!(rev(0.255) > 0.255 + 1e-6);
}

#[test]
fn optimal_never_below_honest() {
    for alpha in [0.1, 0.3, 0.45] {
        let b = build_bitcoin_mdp(&BitcoinParams::new(alpha, 0.5, 15).unwrap()).unwrap();
        assert!(optimal_revenue(&b.mdp) >= alpha - 1e-9);
        let e = build_ethereum_mdp(&EthereumParams::new(alpha, 4).unwrap()).unwrap();
        assert!(optimal_revenue(&e.mdp) >= alpha - 1e-9);
    }
}

#[test]
fn ethereum_revenue_grows_with_fork_bound() {
    let revs: Vec<f64> = [3, 5, 7]
        .iter()
        .map(|&f| {
            let m = build_ethereum_mdp(&EthereumParams::new(0.3, f).unwrap()).unwrap();
            solve_pto(&m.mdp, &PtoSolveConfig::with_horizon(1e5)).unwrap().rev_arr
        })
        .collect();
    for w in revs.windows(2) {
        assert!(w[1] >= w[0] - 1e-7, "{revs:?}");
    }
}

#[test]
fn ethereum_honest_below_threshold_is_optimal() {
    let m = build_ethereum_mdp(&EthereumParams::new(0.2, 6).unwrap()).unwrap();
    let rev = solve_pto(&m.mdp, &PtoSolveConfig::with_horizon(1e5)).unwrap().rev_arr;
    assert!((rev - 0.2).abs() < 1e-4, "{rev}");
}

// ---------------------------------------------------------------------------
// Block-level replay of Ethereum traces.
//
// The auditor keeps explicit blocks: the accepted head height, a pool of
// orphaned honest blocks by height, the private and public branches, and the
// uncles each public block picked when it was mined. It derives the
// difficulty of every step as "accepted main-chain blocks + uncles they
// reference" and compares with the model, step by step.

#[derive(Clone, Debug, Default)]
struct Auditor {
    head: u64,
    /// Heights of orphaned honest blocks that may still become uncles.
    pool: Vec<u64>,
    private: u64,
    /// Per public block: the pool heights it references and whether it
    /// references the miner's first private block.
    public: Vec<(Vec<u64>, bool)>,
    /// Public length when the first private block was revealed.
    revealed_at: Option<u64>,
    active: bool,
    /// Own uncles counted in advance and not yet referenced.
    pending_own: u32,
    accepted_blocks: u64,
    referenced_uncles: u64,
    advance_credits: u64,
}

impl Auditor {
    fn eligible(&self, nephew_height: u64, uncle_height: u64) -> bool {
        nephew_height > uncle_height && nephew_height - uncle_height <= u64::from(MAX_UNCLE_DISTANCE)
    }

    /// An honest block extends the public branch and picks its uncles now.
    fn mine_public(&mut self) {
        let k = self.public.len() as u64 + 1;
        let height = self.head + k;
        let taken: HashSet<u64> = self.public.iter().flat_map(|(u, _)| u.iter().copied()).collect();
        let mut candidates: Vec<u64> = self
            .pool
            .iter()
            .copied()
            .filter(|&u| !taken.contains(&u) && self.eligible(height, u))
            .collect();
        candidates.sort_unstable();
        candidates.truncate(2);
        let own_taken = self.public.iter().any(|(_, own)| *own);
        let own = !own_taken
            && candidates.len() < 2
            && self.private >= 1
            && self.revealed_at.is_some_and(|r| k > r)
            && self.eligible(height, self.head + 1);
        self.public.push((candidates, own));
    }

    fn age_pool(&mut self) {
        let next = self.head + 1;
        self.pool.retain(|&u| next - u <= u64::from(MAX_UNCLE_DISTANCE));
    }

    fn adopt(&mut self) -> u64 {
        let h = self.public.len() as u64;
        let mut refs = 0;
        let mut own_referenced = false;
        for (uncles, own) in self.public.drain(..) {
            refs += uncles.len() as u64;
            self.pool.retain(|u| !uncles.contains(u));
            if own {
                refs += 1;
                own_referenced = true;
            }
        }
        let mut d = h + refs;
        // an older pending own uncle is considered referenced by now
        self.pending_own = 0;
        if !own_referenced && self.private >= 1 && self.revealed_at.is_some() && h <= u64::from(MAX_UNCLE_DISTANCE) {
            d += 1;
            self.advance_credits += 1;
            self.pending_own = 1;
        }
        self.accepted_blocks += h;
        self.referenced_uncles += refs;
        self.head += h;
        self.private = 0;
        self.revealed_at = None;
        self.active = false;
        self.age_pool();
        d
    }

    /// The miner's first `won` private blocks become the main chain; the
    /// first public block, if any, is orphaned.
    fn miner_wins(&mut self, won: u64) -> u64 {
        let orphan = (!self.public.is_empty()).then_some(self.head + 1);
        self.accepted_blocks += won;
        self.head += won;
        self.private -= won;
        self.public.clear();
        if let Some(u) = orphan {
            self.pool.push(u);
        }
        self.pending_own = 0;
        self.revealed_at = None;
        self.active = false;
        self.age_pool();
        won
    }

    fn u_h(&self) -> u8 {
        let next = self.head + 1;
        self.pool.iter().fold(0, |acc, &u| acc | 1 << (next - u - 1))
    }

    fn check(&self, s: &EthereumState) {
        assert_eq!(u64::from(s.a), self.private, "a: {s:?} vs {self:?}");
        assert_eq!(s.h as usize, self.public.len(), "h: {s:?} vs {self:?}");
        assert_eq!(s.u_h, self.u_h(), "u_h: {s:?} vs {self:?}");
        assert_eq!(s.u_a, self.pending_own == 1, "u_a: {s:?} vs {self:?}");
        assert_eq!(s.fork == EthFork::Active, self.active, "fork: {s:?} vs {self:?}");
        assert!(self.pending_own <= 1);
    }

    /// Replays one composite step and returns the difficulty it should carry.
    fn step(&mut self, s: &EthereumState, action: EthereumAction, next: &EthereumState) -> u64 {
        let mut d = 0;
        match action {
            EthereumAction::Adopt => d += self.adopt(),
            EthereumAction::Override => d += self.miner_wins(self.public.len() as u64 + 1),
            EthereumAction::Match => {
                if self.revealed_at.is_none() {
                    self.revealed_at = Some(self.public.len() as u64);
                }
                self.active = true;
            }
            EthereumAction::Reveal => {
                self.revealed_at = Some(self.public.len() as u64);
                return d;
            }
            EthereumAction::Wait => {}
        }
        let (a, h) = (self.private, self.public.len() as u64);
        if u64::from(next.a) == a + 1 && next.h as usize == self.public.len() {
            self.private += 1;
        } else if self.active && next.h == 1 && u64::from(next.a) == a - h {
            // honest block on top of the miner's matched prefix
            d += self.miner_wins(h);
            self.mine_public();
        } else {
            assert_eq!(next.h as usize, self.public.len() + 1, "unexplained move {s:?} -> {next:?}");
            self.active = false;
            self.mine_public();
        }
        d
    }
}

fn replay(model: &EthereumModel, policy: &Policy, steps: usize, seed: u64) -> Auditor {
    let mdp = &model.mdp;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audit = Auditor::default();
    let mut s: StateId = mdp.s_init();
    let mut model_total = 0.0;
    for _ in 0..steps {
        let state = model.state(s);
        audit.check(&state);
        let action = policy.action(s);
        let ts = mdp.transitions(s, action).unwrap();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let t = *ts
            .iter()
            .find(|t| {
                acc += t.prob;
                u < acc
            })
            .unwrap_or(ts.last().unwrap());
        let next = model.state(t.to);
        let d = audit.step(&state, EthereumAction::from_id(action).unwrap(), &next);
        assert_eq!(t.difficulty, d as f64, "{state:?} {action} -> {next:?}");
        model_total += t.difficulty;
        s = t.to;
    }
    let audited = audit.accepted_blocks + audit.referenced_uncles + audit.advance_credits;
    assert_eq!(model_total, audited as f64);
    audit
}

fn random_policy(mdp: &ArrMdp, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let choice = (0..mdp.num_states())
        .map(|s| {
            let acts = mdp.actions_of(s);
            acts[rng.random_range(0..acts.len())]
        })
        .collect();
    Policy::new(mdp, choice).unwrap()
}

#[test]
fn ethereum_difficulty_is_blocks_plus_referenced_uncles() {
    let model = build_ethereum_mdp(&EthereumParams::new(0.35, 8).unwrap()).unwrap();
    let optimal = solve_pto(&model.mdp, &PtoSolveConfig::with_horizon(1e5)).unwrap().policy;
    let audit = replay(&model, &optimal, 200_000, 1);
    assert!(audit.referenced_uncles > 0, "{audit:?}");
    let credits: u64 = (0..6)
        .map(|seed| replay(&model, &random_policy(&model.mdp, seed), 50_000, seed).advance_credits)
        .sum();
    assert!(credits > 0);
    let audit = replay(&model, &model.honest_policy(), 20_000, 9);
    assert_eq!(audit.referenced_uncles + audit.advance_credits, 0);
}

#[test]
fn ethereum_pending_own_uncle_only_follows_adopt() {
    let model = build_ethereum_mdp(&EthereumParams::new(0.3, 8).unwrap()).unwrap();
    let mdp = &model.mdp;
    let mut seen_credit = false;
    for s in 0..mdp.num_states() {
        let from = model.state(s);
        for &a in mdp.actions_of(s) {
            let action = EthereumAction::from_id(a).unwrap();
            for t in mdp.transitions(s, a).unwrap() {
                let to = model.state(t.to);
                if !to.u_a || from.u_a {
                    continue;
                }
                // a fresh pending uncle appears only through adopt
                assert_eq!(action, EthereumAction::Adopt, "{from:?} -> {to:?}");
                assert!(from.r > 0 && from.a >= 1);
                seen_credit = true;
            }
        }
    }
    assert!(seen_credit);
    // while a fork runs, the flag is carried unchanged
    for s in 0..mdp.num_states() {
        let from = model.state(s);
        if !from.u_a {
            continue;
        }
        for &a in mdp.actions_of(s) {
            if matches!(EthereumAction::from_id(a), Some(EthereumAction::Wait | EthereumAction::Reveal)) {
                for t in mdp.transitions(s, a).unwrap() {
                    let to = model.state(t.to);
                    let resolved = from.fork == EthFork::Active && to.h == 1;
                    assert!(resolved || to.u_a, "{from:?} -> {to:?}");
                }
            }
        }
    }
}

#[test]
fn ethereum_honest_revenue_is_alpha() {
    for alpha in [0.1, 0.25, 0.4] {
        let m = build_ethereum_mdp(&EthereumParams::new(alpha, 6).unwrap()).unwrap();
        let rev = arr_revenue(&m.mdp, &m.honest_policy()).unwrap().rev_arr;
        assert!((rev - alpha).abs() < 1e-9);
    }
}
