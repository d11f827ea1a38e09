//! Randomised invariants of the solver stack, checked against brute force
//! and simulation oracles.

use arrmdp::chain::{chain_revenue, stationary_distribution};
use arrmdp::linalg::CsrMatrix;
use arrmdp::mdp::{induce_chain, InducedChain};
use arrmdp::models::bitcoin::{build_bitcoin_mdp, BitcoinParams};
use arrmdp::models::ethereum::{build_ethereum_mdp, EthereumParams};
use arrmdp::pto::pt_total_reward;
use arrmdp::solvers::{avg_reward_policy_iteration, monte_carlo_revenue, ssp_policy_iteration, ssp_residual, PiConfig};
use arrmdp::{
    arr_revenue, build_pt_mdp, osm_solve, solve_pto, ArrMdp, ArrMdpBuilder, LinearSolver, OsmConfig, Policy,
    PtoSolveConfig, Transition,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random ARR-MDP in which every state can return to state 0, so each
/// policy is unichain and every cycle collects difficulty.
fn random_mdp(n: usize, branching: usize, actions: impl Fn(usize) -> usize, seed: u64) -> ArrMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ArrMdpBuilder::new(n, 0);
    b.with_bounds(10.0, 3.0);
    for s in 0..n {
        for a in 0..actions(s) {
            let k = rng.random_range(1..=branching);
            let mut weights: Vec<f64> = (0..=k).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            let ts: Vec<Transition> = weights
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let to = if i == 0 { 0 } else { rng.random_range(0..n) };
                    Transition::new(to, p, rng.random_range(0.0..10.0), rng.random_range(0.2..3.0))
                })
                .collect();
            b.add_choice(s, a as u32, ts).unwrap();
        }
    }
    b.build().unwrap()
}

fn all_policies(mdp: &ArrMdp) -> impl Iterator<Item = Policy> + '_ {
    let n = mdp.num_states();
    let radix: Vec<usize> = (0..n).map(|s| mdp.actions_of(s).len()).collect();
    let total: usize = radix.iter().product();
    (0..total).map(move |mut code| {
        let choice = (0..n)
            .map(|s| {
                let a = mdp.actions_of(s)[code % radix[s]];
                code /= radix[s];
                a
            })
            .collect();
        Policy::new(mdp, choice).unwrap()
    })
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

fn exact_pi() -> PiConfig {
    PiConfig {
        stop_threshold: 1e-12,
        ..PiConfig::default()
    }
}

/// Random irreducible chain: a ring plus random chords.
fn random_ergodic_chain(n: usize, chords: usize, seed: u64) -> InducedChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n).map(|i| {
        let mut row = vec![((i + 1) % n, rng.random_range(0.1..1.0))];
        for _ in 0..chords {
            row.push((rng.random_range(0..n), rng.random_range(0.0..1.0)));
        }
        let total: f64 = row.iter().map(|e| e.1).sum();
        row.into_iter().map(|(j, w)| (j, w / total)).collect::<Vec<_>>()
    });
    InducedChain::from_matrix(CsrMatrix::from_rows(n, rows), 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pi_matches_exhaustive_search_on_small_ssps(n in 3usize..=10, seed in any::<u64>()) {
        let mdp = random_mdp(n, 3, |_| 2, seed);
        let pt = build_pt_mdp(&mdp, 50.0).unwrap();
        let best = all_policies(&mdp)
            .map(|p| pt_total_reward(&pt, &p, LinearSolver::Direct).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let (policy, report) = ssp_policy_iteration(&pt, &exact_pi(), None).unwrap();
        prop_assert!(report.converged);
        prop_assert!((report.objective_value - best).abs() <= 1e-9 * best.abs().max(1.0));
        let value = pt_total_reward(&pt, &policy, LinearSolver::Direct).unwrap();
        prop_assert!((value - report.objective_value).abs() <= 1e-9 * value.abs().max(1.0));
        prop_assert!(ssp_residual(&pt, &policy, &report.final_values).unwrap() <= 1e-9);
    }

    #[test]
    fn average_reward_pi_matches_exhaustive_search(n in 2usize..=9, seed in any::<u64>()) {
        let mdp = random_mdp(n, 3, |_| 2, seed);
        // unit difficulty turns the ratio into the plain average reward
        let best = all_policies(&mdp)
            .map(|p| {
                let chain = induce_chain(&mdp, &p).unwrap();
                let unit = InducedChain { expected_difficulty: vec![1.0; n], ..chain };
                chain_revenue(&unit, LinearSolver::Direct).unwrap().rev_arr
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let (_, report) = avg_reward_policy_iteration(&mdp, |t| t.reward, &exact_pi(), None).unwrap();
        prop_assert!((report.objective_value - best).abs() <= 1e-9 * best.abs().max(1.0));
    }

    #[test]
    fn ratio_solvers_find_the_best_ratio(n in 2usize..=8, seed in any::<u64>()) {
        let mdp = random_mdp(n, 2, |_| 2, seed);
        let best = all_policies(&mdp)
            .map(|p| arr_revenue(&mdp, &p).unwrap().rev_arr)
            .fold(f64::NEG_INFINITY, f64::max);
        // rewards up to 10 per unit of difficulty 0.2: scale into [0, 1]
        let scaled = mdp.scale_rewards(0.02);
        let pto = solve_pto(&scaled, &PtoSolveConfig::default()).unwrap();
        let osm = osm_solve(&scaled, &OsmConfig::default()).unwrap();
        prop_assert!((pto.rev_arr / 0.02 - best).abs() <= 1e-4 * best, "pto {} best {}", pto.rev_arr / 0.02, best);
        prop_assert!((osm.rev_arr / 0.02 - best).abs() <= 1e-4 * best, "osm {} best {}", osm.rev_arr / 0.02, best);
    }

    #[test]
    fn rows_stay_stochastic(n in 2usize..=40, seed in any::<u64>(), horizon_exp in 2i32..=6) {
        let mdp = random_mdp(n, 4, |s| 1 + s % 3, seed);
        let chain = induce_chain(&mdp, &random_policy(&mdp, seed ^ 1)).unwrap();
        for i in 0..n {
            prop_assert!((chain.matrix.row_sum(i) - 1.0).abs() <= 1e-12);
        }
        let pt = build_pt_mdp(&mdp, 10f64.powi(horizon_exp)).unwrap();
        for c in 0..mdp.num_choices() {
            prop_assert!((pt.choice_mass(c) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn scaling_rewards_scales_revenue(n in 2usize..=20, seed in any::<u64>(), c in 0.01f64..100.0) {
        let mdp = random_mdp(n, 3, |_| 1, seed);
        let p = Policy::first_admissible(&mdp);
        let base = arr_revenue(&mdp, &p).unwrap().rev_arr;
        let scaled = arr_revenue(&mdp.scale_rewards(c), &p).unwrap().rev_arr;
        prop_assert!((scaled - c * base).abs() <= 1e-12 * (c * base).abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stationary_distribution_is_a_fixed_point(exp in 1u32..=4, seed in any::<u64>(), chords in 0usize..4) {
        let n = 10usize.pow(exp).max(2);
        let chain = random_ergodic_chain(n, chords, seed);
        let mu = stationary_distribution(&chain, LinearSolver::Direct).unwrap();
        prop_assert!(mu.mu.iter().all(|&m| m >= 0.0));
        prop_assert!((mu.mu.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert!(mu.fixed_point_residual(&chain.matrix) <= 1e-9);
    }
}

#[test]
fn exhaustive_search_on_twenty_state_ssps() {
    // twelve states with a choice, eight without: 4096 policies each
    for seed in 0..3 {
        let mdp = random_mdp(20, 3, |s| if s < 12 { 2 } else { 1 }, 100 + seed);
        let pt = build_pt_mdp(&mdp, 200.0).unwrap();
        let best = all_policies(&mdp)
            .map(|p| pt_total_reward(&pt, &p, LinearSolver::Direct).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let (_, report) = ssp_policy_iteration(&pt, &exact_pi(), None).unwrap();
        assert!((report.objective_value - best).abs() <= 1e-9 * best, "{} vs {best}", report.objective_value);
    }
}

#[test]
fn average_reward_pi_matches_relative_value_iteration() {
    let n = 30;
    let mdp = random_mdp(n, 4, |s| 1 + s % 3, 7);
    let (_, report) = avg_reward_policy_iteration(&mdp, |t| t.reward, &exact_pi(), None).unwrap();

    // aperiodic relative value iteration: h ← ½h + ½(T h) − offset
    let mut h = vec![0.0; n];
    let mut gain = 0.0;
    for _ in 0..1_000_000 {
        let th: Vec<f64> = (0..n)
            .map(|s| {
                mdp.choices(s)
                    .map(|c| mdp.choice_transitions(c).iter().map(|t| t.prob * (t.reward + h[t.to])).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let next: Vec<f64> = (0..n).map(|s| 0.5 * h[s] + 0.5 * th[s]).collect();
        let offset = next[0] - h[0];
        let delta: Vec<f64> = (0..n).map(|s| next[s] - h[s]).collect();
        let spread = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - delta.iter().copied().fold(f64::INFINITY, f64::min);
        h = next.iter().map(|v| v - offset).collect();
        gain = 2.0 * offset;
        if spread < 1e-12 {
            break;
        }
    }
    assert!((report.objective_value - gain).abs() <= 1e-6, "{} vs {gain}", report.objective_value);
}

#[test]
fn monte_carlo_agrees_with_exact_revenue() {
    let mut cases: Vec<(ArrMdp, Policy)> = Vec::new();
    for seed in 0..10 {
        let mdp = random_mdp(15, 3, |s| 1 + s % 2, 500 + seed);
        let p = random_policy(&mdp, seed);
        cases.push((mdp, p));
    }
    for (i, alpha) in [0.2, 0.3, 0.4, 0.45].into_iter().enumerate() {
        let b = build_bitcoin_mdp(&BitcoinParams::new(alpha, 0.5, 12).unwrap()).unwrap();
        let opt = solve_pto(&b.mdp, &PtoSolveConfig::with_horizon(1e5)).unwrap().policy;
        cases.push((b.mdp.clone(), opt));
        if i % 2 == 0 {
            cases.push((b.mdp.clone(), b.honest_policy()));
        }
    }
    for alpha in [0.25, 0.3, 0.35, 0.45] {
        let e = build_ethereum_mdp(&EthereumParams::new(alpha, 5).unwrap()).unwrap();
        let opt = solve_pto(&e.mdp, &PtoSolveConfig::with_horizon(1e5)).unwrap().policy;
        cases.push((e.mdp.clone(), opt));
    }
    assert!(cases.len() >= 20);
    for (k, (mdp, policy)) in cases.iter().enumerate() {
        let exact = arr_revenue(mdp, policy).unwrap().rev_arr;
        let mc = monte_carlo_revenue(mdp, policy, 1_000_000, k as u64).unwrap();
        // deterministic chains have zero spread; allow rounding there
        assert!((mc.estimate - exact).abs() <= 3.0 * mc.std_error + 1e-9 * exact.abs(), "case {k}: exact {exact} simulated {} +- {}", mc.estimate, mc.std_error);
    }
}

#[test]
fn visit_frequencies_match_stationary_distribution() {
    let n = 12;
    let chain = random_ergodic_chain(n, 2, 4);
    let mu = stationary_distribution(&chain, LinearSolver::Direct).unwrap();
    let steps = 1_000_000usize;
    let batches = 100;
    let per = steps / batches;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = vec![vec![0usize; n]; batches];
    let mut s = 0;
    for step in 0..steps {
        counts[step / per][s] += 1;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let row: Vec<(usize, f64)> = chain.matrix.row(s).collect();
        s = row.iter().find(|(_, p)| {
            acc += p;
            u < acc
        }).map_or(row.last().unwrap().0, |e| e.0);
    }
    for i in 0..n {
        let freqs: Vec<f64> = counts.iter().map(|c| c[i] as f64 / per as f64).collect();
        let mean = freqs.iter().sum::<f64>() / batches as f64;
        let var = freqs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        assert!((mean - mu.mu[i]).abs() <= 3.0 * se, "state {i}: {mean} vs {} (se {se})", mu.mu[i]);
    }
}
