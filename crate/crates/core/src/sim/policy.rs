//! The online learning and selection loop and its baselines.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::env::{draw_event, make_priors, step_environment, stream, stream_rng, GroundTruth, Population};
use super::trace::{ExperimentTrace, StepRecord, StepTiming};
use crate::belief::{Context, GaussianBelief};
use crate::ocs::{
    budget_limit, check_network, expected_shortfall_exact, expected_shortfall_mc, solve_budget,
    solve_budget_network_with, solve_target, solve_target_one_sided, target_objective, CustomerEvent,
    NetworkOptions, OneSidedOptions, RadialNetwork, Selection, Solution, TargetOptions,
};
use crate::par::Execution;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Thompson sampling over variational logistic posteriors.
    Ols,
    /// Context-free UCB index on empirical stay rates.
    Ucb,
    /// Random fill within the budget.
    Random,
    /// Clairvoyant selection with the true probabilities.
    Oracle,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Ols, Policy::Ucb, Policy::Random, Policy::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Ols => "ols",
            Policy::Ucb => "ucb",
            Policy::Random => "random",
            Policy::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown policy {s:?} (expected ols, ucb, random or oracle)")))
    }
}

/// Per-event selection problem the policies face.
#[derive(Clone, Debug)]
pub enum Objective {
    /// Maximise expected reduction under the revenue budget.
    Budget,
    /// Track `D_t` in mean square with at most `⌊b_t⌋` customers.
    Target,
    /// Minimise expected shortfall below `D_t` with at most `⌊b_t⌋` customers.
    TargetOneSided,
    /// `Budget` restricted to selections the network can carry.
    BudgetNetwork(Arc<RadialNetwork>),
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Budget => "budget",
            Objective::Target => "target",
            Objective::TargetOneSided => "target_one_sided",
            Objective::BudgetNetwork(_) => "budget_network",
        }
    }
}

/// Node limit for network-constrained solves inside the simulation loop.
const SIM_NETWORK_NODES: u64 = 200_000;

/// Event data as seen by the solvers.
struct EventView<'a> {
    events: &'a [CustomerEvent],
    budget: f64,
    target: f64,
    /// Seeds the common random numbers of one-sided solves and evaluations.
    mc_seed: u64,
    mc_samples: usize,
}

impl EventView<'_> {
    fn max_count(&self) -> usize {
        self.budget.max(0.0).floor() as usize
    }

    fn solve(&self, objective: &Objective, probs: &[f64]) -> Result<Solution> {
        match objective {
            Objective::Budget => solve_budget(self.events, probs, self.budget),
            Objective::Target => {
                solve_target(self.events, probs, self.target, self.max_count(), &TargetOptions::default())
            }
            Objective::TargetOneSided => solve_target_one_sided(
                self.events,
                probs,
                self.target,
                self.max_count(),
                &OneSidedOptions {
                    mc_samples: self.mc_samples,
                    seed: self.mc_seed,
                    ..Default::default()
                },
            ),
            Objective::BudgetNetwork(net) => solve_budget_network_with(
                self.events,
                probs,
                self.budget,
                net,
                &NetworkOptions {
                    node_limit: SIM_NETWORK_NODES,
                },
            ),
        }
    }

    /// Objective of `sel` under `probs`, oriented so that higher is better.
    fn value(&self, objective: &Objective, sel: &Selection, probs: &[f64]) -> Result<f64> {
        match objective {
            Objective::Budget | Objective::BudgetNetwork(_) => {
                Ok(sel.indices().iter().map(|&i| self.events[i].d * probs[i]).sum())
            }
            Objective::Target => Ok(-target_objective(sel, self.events, probs, self.target)?),
            Objective::TargetOneSided => {
                let v = if sel.len() <= 20 {
                    expected_shortfall_exact(sel, self.events, probs, self.target)?
                } else {
                    expected_shortfall_mc(sel, self.events, probs, self.target, self.mc_samples, self.mc_seed)?
                };
                Ok(-v)
            }
        }
    }
}

/// Clairvoyant budgeted selection: [`solve_budget`] on the true probabilities.
pub fn oracle_select(truth: &GroundTruth, events: &[CustomerEvent], budget: f64) -> Result<Solution> {
    let probs = events
        .iter()
        .enumerate()
        .map(|(i, e)| truth.prob(i, &e.ctx))
        .collect::<Result<Vec<_>>>()?;
    solve_budget(events, &probs, budget)
}

/// Per-customer empirical stay rate and selection count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UcbState {
    successes: Vec<f64>,
    counts: Vec<u64>,
}

impl UcbState {
    pub fn new(n: usize) -> Self {
        UcbState {
            successes: vec![0.0; n],
            counts: vec![0; n],
        }
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.counts[i] == 0 {
            0.0
        } else {
            self.successes[i] / self.counts[i] as f64
        }
    }

    /// `p̄ + √(3 ln t / 2 T_i)` for event `t` (1-based); `+∞` before the
    /// first selection.
    pub fn raw_index(&self, i: usize, t: usize) -> f64 {
        if self.counts[i] == 0 {
            return f64::INFINITY;
        }
        self.mean(i) + (3.0 * (t as f64).ln() / (2.0 * self.counts[i] as f64)).sqrt()
    }

    /// The index clamped into `[0, 1]`, as handed to the solver.
    pub fn index(&self, i: usize, t: usize) -> f64 {
        self.raw_index(i, t).clamp(0.0, 1.0)
    }

    pub fn update(&mut self, i: usize, stayed: bool) {
        self.counts[i] += 1;
        if stayed {
            self.successes[i] += 1.0;
        }
    }
}

enum Learner {
    Ols {
        beliefs: Vec<GaussianBelief>,
        rngs: Vec<ChaCha8Rng>,
        iters: usize,
    },
    Ucb(UcbState),
    Random,
    Oracle,
}

/// Run the online loop with Thompson sampling from `priors`.
pub fn run_ols(
    cfg: &SimConfig,
    pop: &Population,
    priors: Vec<GaussianBelief>,
    objective: &Objective,
    exec: Execution,
) -> Result<ExperimentTrace> {
    if priors.len() != cfg.n_customers {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_customers,
            got: priors.len(),
        });
    }
    let rngs = (0..cfg.n_customers)
        .map(|i| stream_rng(cfg.seed, stream::SAMPLING, i as u64))
        .collect();
    run_loop(
        cfg,
        pop,
        Policy::Ols,
        Learner::Ols {
            beliefs: priors,
            rngs,
            iters: cfg.observe_iters,
        },
        objective,
        exec,
    )
}

pub fn run_ucb(cfg: &SimConfig, pop: &Population, objective: &Objective, exec: Execution) -> Result<ExperimentTrace> {
    run_loop(cfg, pop, Policy::Ucb, Learner::Ucb(UcbState::new(cfg.n_customers)), objective, exec)
}

pub fn run_random(cfg: &SimConfig, pop: &Population, objective: &Objective) -> Result<ExperimentTrace> {
    run_loop(cfg, pop, Policy::Random, Learner::Random, objective, Execution::Sequential)
}

pub fn run_oracle(cfg: &SimConfig, pop: &Population, objective: &Objective) -> Result<ExperimentTrace> {
    run_loop(cfg, pop, Policy::Oracle, Learner::Oracle, objective, Execution::Sequential)
}

/// Generate the population and priors from `cfg.seed` and run `policy`.
pub fn run_policy(cfg: &SimConfig, policy: Policy, objective: &Objective, exec: Execution) -> Result<ExperimentTrace> {
    let pop = super::env::generate_population(cfg, &mut stream_rng(cfg.seed, stream::POPULATION, 0))?;
    run_policy_on(cfg, &pop, policy, objective, exec)
}

pub fn run_policy_on(
    cfg: &SimConfig,
    pop: &Population,
    policy: Policy,
    objective: &Objective,
    exec: Execution,
) -> Result<ExperimentTrace> {
    match policy {
        Policy::Ols => {
            let priors = make_priors(&pop.truth, cfg.delta, cfg.sigma, &mut stream_rng(cfg.seed, stream::PRIOR, 0))?;
            run_ols(cfg, pop, priors, objective, exec)
        }
        Policy::Ucb => run_ucb(cfg, pop, objective, exec),
        Policy::Random => run_random(cfg, pop, objective),
        Policy::Oracle => run_oracle(cfg, pop, objective),
    }
}

/// Random fill: visit customers in random order and keep each one that
/// still fits the budget (or count limit) and, with a network, keeps the
/// selection feasible.
fn random_fill(view: &EventView<'_>, objective: &Objective, rng: &mut ChaCha8Rng) -> Result<Solution> {
    let events = view.events;
    let mut order: Vec<usize> = (0..events.len()).filter(|&i| events[i].participates).collect();
    order.shuffle(rng);
    let limit = budget_limit(view.budget);
    let mut chosen: Vec<usize> = Vec::new();
    let mut spend = 0.0;
    let net = match objective {
        Objective::BudgetNetwork(net) => {
            if !check_network(&Selection::empty(), events, net)?.feasible {
                return Err(Error::Infeasible);
            }
            Some(net)
        }
        _ => None,
    };
    let count_limited = matches!(objective, Objective::Target | Objective::TargetOneSided);
    for i in order {
        if count_limited {
            if chosen.len() >= view.max_count() {
                break;
            }
        } else if spend + events[i].r > limit {
            continue;
        }
        chosen.push(i);
        if let Some(net) = net {
            let sel = Selection::new(chosen.clone(), events.len())?;
            if !check_network(&sel, events, net)?.feasible {
                chosen.pop();
                continue;
            }
        }
        spend += events[i].r;
    }
    let selection = Selection::new(chosen, events.len())?;
    let cost = selection.cost(events);
    Ok(Solution {
        selection,
        objective: f64::NAN,
        cost,
        optimal: false,
    })
}

fn build_contexts(cfg: &SimConfig, raw: &[Vec<f64>], fatigue: Option<&[f64]>) -> Vec<Context> {
    (0..cfg.n_customers)
        .map(|i| {
            let mut x = raw[if raw.len() == 1 { 0 } else { i }].clone();
            if let Some(f) = fatigue {
                x.push(f[i]);
            }
            Context::new(x)
        })
        .collect()
}

fn run_loop(
    cfg: &SimConfig,
    pop: &Population,
    policy: Policy,
    mut learner: Learner,
    objective: &Objective,
    exec: Execution,
) -> Result<ExperimentTrace> {
    cfg.validate()?;
    let n = cfg.n_customers;
    if pop.d.len() != n || pop.truth.thetas.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: pop.d.len(),
        });
    }
    if let Objective::BudgetNetwork(net) = objective {
        if net.n_customers() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: net.n_customers(),
            });
        }
    }
    let mut trace = ExperimentTrace::new(policy, cfg.seed);
    let mut cum = 0.0;
    let mut warned = false;
    let mut fatigue_hist: VecDeque<Vec<usize>> = VecDeque::new();
    let mut fatigue_counts = vec![0usize; n];
    let total_load: f64 = pop.d.iter().sum();

    for t in 1..=cfg.horizon {
        let draw = draw_event(cfg, cfg.seed, t);
        let fatigue: Option<Vec<f64>> = cfg
            .fatigue_window
            .map(|w| fatigue_counts.iter().map(|&c| c as f64 / w as f64).collect());
        let contexts = build_contexts(cfg, &draw.features, fatigue.as_deref());
        if let (Some(bound), false) = (cfg.context_bound, warned) {
            if contexts.iter().any(|c| !c.within_bound(bound)) {
                log::warn!("context exceeds the configured bound {bound} (first at event {t})");
                warned = true;
            }
        }
        let events: Vec<CustomerEvent> = contexts
            .into_iter()
            .enumerate()
            .map(|(i, ctx)| CustomerEvent {
                customer_id: i,
                d: pop.d[i],
                r: pop.r[i],
                participates: true,
                ctx,
            })
            .collect();
        let true_probs = exec
            .map(&events, |e| pop.truth.prob(e.customer_id, &e.ctx))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let view = EventView {
            events: &events,
            budget: draw.budget,
            target: draw.target,
            mc_seed: stream_rng(cfg.seed, stream::POLICY, t as u64).random(),
            mc_samples: cfg.mc_samples,
        };

        // sample
        let t0 = Instant::now();
        let policy_probs: Option<Vec<f64>> = match &mut learner {
            Learner::Ols { beliefs, rngs, .. } => {
                let beliefs = &*beliefs;
                let probs = exec.map_mut(rngs, |i, rng| beliefs[i].sample_prob(&events[i].ctx, rng));
                Some(probs.into_iter().collect::<Result<Vec<_>>>()?)
            }
            Learner::Ucb(state) => Some((0..n).map(|i| state.index(i, t)).collect()),
            Learner::Oracle => Some(true_probs.clone()),
            Learner::Random => None,
        };
        let sample_s = t0.elapsed().as_secs_f64();

        // solve
        let t1 = Instant::now();
        let solved = match &policy_probs {
            Some(p) => view.solve(objective, p),
            None => random_fill(
                &view,
                objective,
                &mut stream_rng(cfg.seed, stream::POLICY, (t as u64) << 1 | 1),
            ),
        };
        let solve_s = t1.elapsed().as_secs_f64();
        let (selection, infeasible, solver_optimal) = match solved {
            Ok(sol) => (sol.selection, false, sol.optimal),
            Err(Error::Infeasible) => (Selection::empty(), true, false),
            Err(e) => return Err(e),
        };

        let outcomes = step_environment(
            &selection,
            &pop.truth,
            &events.iter().map(|e| e.ctx.clone()).collect::<Vec<_>>(),
            &mut stream_rng(cfg.seed, stream::OUTCOME, t as u64),
        )?;

        // learn
        let t2 = Instant::now();
        match &mut learner {
            Learner::Ols { beliefs, iters, .. } => {
                let iters = *iters;
                let snapshot = &*beliefs;
                let updated = exec.map(&outcomes, |&(i, z)| snapshot[i].observe(&events[i].ctx, z, iters));
                for (&(i, _), post) in outcomes.iter().zip(updated) {
                    beliefs[i] = post?;
                }
            }
            Learner::Ucb(state) => {
                for &(i, z) in &outcomes {
                    state.update(i, z);
                }
            }
            Learner::Random | Learner::Oracle => {}
        }
        let update_s = t2.elapsed().as_secs_f64();

        if let Some(w) = cfg.fatigue_window {
            for &i in selection.indices() {
                fatigue_counts[i] += 1;
            }
            fatigue_hist.push_back(selection.indices().to_vec());
            if fatigue_hist.len() > w {
                for i in fatigue_hist.pop_front().unwrap() {
                    fatigue_counts[i] -= 1;
                }
            }
        }

        // score against the clairvoyant choice on the same event
        let expected_reward = view.value(objective, &selection, &true_probs)?;
        let oracle_value = if policy == Policy::Oracle {
            expected_reward
        } else {
            match view.solve(objective, &true_probs) {
                Ok(sol) => view.value(objective, &sol.selection, &true_probs)?,
                Err(Error::Infeasible) => expected_reward,
                Err(e) => return Err(e),
            }
        };
        debug_assert!(oracle_value <= total_load + 1e-9 || !matches!(objective, Objective::Budget));
        let step_regret = oracle_value - expected_reward;
        cum += step_regret;
        let reward = outcomes.iter().filter(|o| o.1).map(|&(i, _)| pop.d[i]).sum();
        let policy_sel: Vec<f64> = match &policy_probs {
            Some(p) => selection.indices().iter().map(|&i| p[i]).collect(),
            None => Vec::new(),
        };
        trace.steps.push(StepRecord {
            t,
            spend: selection.cost(&events),
            true_probs: selection.indices().iter().map(|&i| true_probs[i]).collect(),
            policy_probs: policy_sel,
            outcomes: outcomes.iter().map(|o| o.1).collect(),
            selected: selection.indices().to_vec(),
            reward,
            expected_reward,
            oracle_value,
            step_regret,
            cum_regret: cum,
            infeasible,
            solver_optimal,
        });
        trace.timings.push(StepTiming {
            sample_s,
            solve_s,
            update_s,
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::Range;
    use crate::sim::env::generate_population;

    fn small(n: usize, t: usize) -> SimConfig {
        let mut c = SimConfig::scaled(n, t);
        c.seed = 3;
        c
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
        assert!("thompson".parse::<Policy>().is_err());
    }

    #[test]
    fn zero_horizon_is_empty() {
        let cfg = small(10, 0);
        for p in Policy::ALL {
            let tr = run_policy(&cfg, p, &Objective::Budget, Execution::default()).unwrap();
            assert!(tr.steps.is_empty());
        }
    }

    #[test]
    fn ucb_cold_start_and_decay() {
        let mut s = UcbState::new(2);
        assert_eq!(s.raw_index(0, 1), f64::INFINITY);
        assert_eq!(s.index(0, 1), 1.0);
        for k in 0..10_000 {
            s.update(0, k % 4 != 0);
        }
        assert_eq!(s.count(0), 10_000);
        let bonus = s.raw_index(0, 10_000) - s.mean(0);
        assert!(bonus > 0.0 && bonus < 0.04, "{bonus}");
        assert_eq!(s.mean(0), 0.75);
    }

    #[test]
    fn regret_is_non_negative_and_prefix_summed() {
        let cfg = small(30, 40);
        for p in Policy::ALL {
            let tr = run_policy(&cfg, p, &Objective::Budget, Execution::default()).unwrap();
            let mut acc = 0.0;
            for s in &tr.steps {
                assert!(s.step_regret >= -1e-9, "{p}: {}", s.step_regret);
                acc += s.step_regret;
                assert_eq!(acc, s.cum_regret);
                assert!(s.spend <= budget_limit(draw_event(&cfg, cfg.seed, s.t).budget));
                assert!(s.oracle_value <= s.true_probs.len() as f64 + 30.0);
            }
            if p == Policy::Oracle {
                assert_eq!(tr.final_cum_regret(), 0.0);
            }
        }
    }

    #[test]
    fn traces_are_reproducible_and_execution_independent() {
        let cfg = small(40, 30);
        let a = run_policy(&cfg, Policy::Ols, &Objective::Budget, Execution::Parallel).unwrap();
        let b = run_policy(&cfg, Policy::Ols, &Objective::Budget, Execution::Sequential).unwrap();
        assert_eq!(a.steps, b.steps);
    }

    #[test]
    fn zero_budget_random_selects_nothing() {
        let mut cfg = small(20, 10);
        cfg.budget = Range::new(0.0, 0.0);
        let tr = run_policy(&cfg, Policy::Random, &Objective::Budget, Execution::default()).unwrap();
        assert!(tr.steps.iter().all(|s| s.selected.is_empty()));
    }

    #[test]
    fn near_degenerate_prior_has_no_regret() {
        let cfg = small(30, 20);
        let pop = generate_population(&cfg, &mut stream_rng(cfg.seed, stream::POPULATION, 0)).unwrap();
        let priors = make_priors(&pop.truth, 0.0, 1e-6, &mut stream_rng(0, 0, 0)).unwrap();
        let tr = run_ols(&cfg, &pop, priors, &Objective::Budget, Execution::default()).unwrap();
        assert!(tr.final_cum_regret() < 1e-3, "{}", tr.final_cum_regret());
    }

    #[test]
    fn oracle_select_matches_knapsack_on_truth() {
        let cfg = small(12, 1);
        let pop = generate_population(&cfg, &mut stream_rng(1, 1, 0)).unwrap();
        let ctx = Context::new(vec![1.0; 9]);
        let events: Vec<CustomerEvent> = (0..12)
            .map(|i| CustomerEvent::new(i, pop.d[i], pop.r[i], ctx.clone()).unwrap())
            .collect();
        let sol = oracle_select(&pop.truth, &events, 2.0).unwrap();
        let p: Vec<f64> = (0..12).map(|i| pop.truth.prob(i, &ctx).unwrap()).collect();
        assert_eq!(sol, solve_budget(&events, &p, 2.0).unwrap());
    }

    #[test]
    fn target_objectives_run() {
        let mut cfg = small(30, 15);
        cfg.budget = Range::new(8.0, 10.0);
        cfg.target = Range::new(4.0, 6.0);
        for obj in [Objective::Target, Objective::TargetOneSided] {
            for p in [Policy::Ols, Policy::Random] {
                let tr = run_policy(&cfg, p, &obj, Execution::default()).unwrap();
                assert_eq!(tr.steps.len(), 15);
                assert!(tr.steps.iter().all(|s| s.selected.len() <= 10));
            }
        }
    }

    #[test]
    fn fatigue_feature_extends_the_model() {
        let mut cfg = small(15, 10);
        cfg.fatigue_window = Some(3);
        let tr = run_policy(&cfg, Policy::Ols, &Objective::Budget, Execution::default()).unwrap();
        assert_eq!(tr.steps.len(), 10);
        let pop = generate_population(&cfg, &mut stream_rng(0, 1, 0)).unwrap();
        assert_eq!(pop.truth.thetas[0].dim(), 11);
    }
}
