//! Target-tracking selection under a cardinality limit.
//!
//! Two objectives:
//! * squared deviation `E(Σ d_i z_i - D)²`, which for independent Bernoulli
//!   outcomes equals `(Σ d_i p_i - D)² + Σ d_i² p_i (1 - p_i)`;
//! * one-sided shortfall `E[max(D - Σ d_i z_i, 0)]`.
//!
//! Small candidate pools are searched exhaustively; larger ones use greedy
//! insertion followed by add/drop/swap local search, and the result is
//! flagged non-optimal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_aligned, compare_candidates, CustomerEvent, Selection, Solution, TIE_REL};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct TargetOptions {
    /// Candidate pools up to this size are searched exhaustively.
    pub exact_limit: usize,
    /// Cap on local-search improvement rounds.
    pub max_passes: usize,
}

impl Default for TargetOptions {
    fn default() -> Self {
        TargetOptions {
            exact_limit: 20,
            max_passes: 10_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OneSidedOptions {
    /// Pools up to this size are searched exhaustively with exact outcome
    /// enumeration; larger pools use local search on a Monte Carlo estimate.
    pub exact_limit: usize,
    pub mc_samples: usize,
    /// Seed for the common random numbers shared by all candidate evaluations.
    pub seed: u64,
    pub max_passes: usize,
}

impl Default for OneSidedOptions {
    fn default() -> Self {
        OneSidedOptions {
            exact_limit: 12,
            mc_samples: 256,
            seed: 0,
            max_passes: 200,
        }
    }
}

/// `(Σ d p - D)² + Σ d² p (1 - p)` over the selection.
pub fn target_objective(sel: &Selection, events: &[CustomerEvent], probs: &[f64], target: f64) -> Result<f64> {
    check_aligned(events, probs)?;
    let (mut mean, mut var) = (0.0, 0.0);
    for &i in sel.indices() {
        let (d, p) = (events[i].d, probs[i]);
        mean += d * p;
        var += d * d * p * (1.0 - p);
    }
    Ok((mean - target).powi(2) + var)
}

/// `E[max(D - Σ d z, 0)]` by enumerating outcomes; branches whose partial
/// reduction already reaches `D` contribute nothing and are cut.
pub fn expected_shortfall_exact(
    sel: &Selection,
    events: &[CustomerEvent],
    probs: &[f64],
    target: f64,
) -> Result<f64> {
    check_aligned(events, probs)?;
    let items: Vec<(f64, f64)> = sel.indices().iter().map(|&i| (events[i].d, probs[i])).collect();
    Ok(shortfall(&items, target))
}

/// Monte Carlo estimate of the expected shortfall from `samples` outcome
/// draws seeded with `seed`.
pub fn expected_shortfall_mc(
    sel: &Selection,
    events: &[CustomerEvent],
    probs: &[f64],
    target: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_aligned(events, probs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..samples {
        let got: f64 = sel
            .indices()
            .iter()
            .filter(|&&i| rng.random::<f64>() < probs[i])
            .map(|&i| events[i].d)
            .sum();
        acc += (target - got).max(0.0);
    }
    Ok(acc / samples.max(1) as f64)
}

fn shortfall(items: &[(f64, f64)], target: f64) -> f64 {
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    fn rec(items: &[(f64, f64)], k: usize, sum: f64, prob: f64, target: f64) -> f64 {
        if sum >= target || prob == 0.0 {
            return 0.0;
        }
        if k == items.len() {
            return prob * (target - sum);
        }
        let (d, p) = items[k];
        rec(items, k + 1, sum + d, prob * p, target) + rec(items, k + 1, sum, prob * (1.0 - p), target)
    }
    rec(&sorted, 0, 0.0, 1.0, target)
}

fn validate(events: &[CustomerEvent], probs: &[f64], target: f64) -> Result<()> {
    check_aligned(events, probs)?;
    if !(target >= 0.0 && target.is_finite()) {
        return Err(Error::invalid(format!("target must be non-negative, got {target}")));
    }
    Ok(())
}

pub fn solve_target(
    events: &[CustomerEvent],
    probs: &[f64],
    target: f64,
    max_count: usize,
    opts: &TargetOptions,
) -> Result<Solution> {
    validate(events, probs, target)?;
    let obj = SquaredDeviation { events, probs, target };
    let pool = candidates(events);
    let (selection, optimal) = if pool.len() <= opts.exact_limit {
        (exhaustive(&obj, events, &pool, max_count), true)
    } else {
        (local_search(&obj, events, &pool, max_count, opts.max_passes), false)
    };
    let objective = target_objective(&selection, events, probs, target)?;
    let cost = selection.cost(events);
    Ok(Solution {
        selection,
        objective,
        cost,
        optimal,
    })
}

pub fn solve_target_one_sided(
    events: &[CustomerEvent],
    probs: &[f64],
    target: f64,
    max_count: usize,
    opts: &OneSidedOptions,
) -> Result<Solution> {
    validate(events, probs, target)?;
    let pool = candidates(events);
    let (selection, objective, optimal) = if pool.len() <= opts.exact_limit {
        let obj = ExactShortfall { events, probs, target };
        let sel = exhaustive(&obj, events, &pool, max_count);
        let v = expected_shortfall_exact(&sel, events, probs, target)?;
        (sel, v, true)
    } else {
        if opts.mc_samples == 0 {
            return Err(Error::invalid("mc_samples must be positive"));
        }
        let obj = McShortfall::new(events, probs, target, opts.mc_samples, opts.seed);
        let sel = local_search(&obj, events, &pool, max_count, opts.max_passes);
        let mut state = obj.empty();
        for &i in sel.indices() {
            obj.add(&mut state, i);
        }
        let v = obj.value(&state);
        (sel, v, false)
    };
    let cost = selection.cost(events);
    Ok(Solution {
        selection,
        objective,
        cost,
        optimal,
    })
}

fn candidates(events: &[CustomerEvent]) -> Vec<usize> {
    events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.participates)
        .map(|(i, _)| i)
        .collect()
}

/// Incrementally evaluable minimisation objective over subsets.
trait SetObjective {
    type State: Clone;
    fn empty(&self) -> Self::State;
    fn add(&self, s: &mut Self::State, i: usize);
    fn remove(&self, s: &mut Self::State, i: usize);
    fn value(&self, s: &Self::State) -> f64;
}

struct SquaredDeviation<'a> {
    events: &'a [CustomerEvent],
    probs: &'a [f64],
    target: f64,
}

impl SetObjective for SquaredDeviation<'_> {
    type State = (f64, f64);
    fn empty(&self) -> (f64, f64) {
        (0.0, 0.0)
    }
    fn add(&self, s: &mut (f64, f64), i: usize) {
        let (d, p) = (self.events[i].d, self.probs[i]);
        s.0 += d * p;
        s.1 += d * d * p * (1.0 - p);
    }
    fn remove(&self, s: &mut (f64, f64), i: usize) {
        let (d, p) = (self.events[i].d, self.probs[i]);
        s.0 -= d * p;
        s.1 -= d * d * p * (1.0 - p);
    }
    fn value(&self, s: &(f64, f64)) -> f64 {
        (s.0 - self.target).powi(2) + s.1.max(0.0)
    }
}

struct ExactShortfall<'a> {
    events: &'a [CustomerEvent],
    probs: &'a [f64],
    target: f64,
}

impl SetObjective for ExactShortfall<'_> {
    type State = Vec<usize>;
    fn empty(&self) -> Vec<usize> {
        Vec::new()
    }
    fn add(&self, s: &mut Vec<usize>, i: usize) {
        s.push(i);
    }
    fn remove(&self, s: &mut Vec<usize>, i: usize) {
        s.retain(|&j| j != i);
    }
    fn value(&self, s: &Vec<usize>) -> f64 {
        let items: Vec<(f64, f64)> = s.iter().map(|&i| (self.events[i].d, self.probs[i])).collect();
        shortfall(&items, self.target)
    }
}

/// Shortfall estimated on a fixed matrix of outcome draws, so that every
/// candidate set is scored against the same scenarios.
struct McShortfall<'a> {
    events: &'a [CustomerEvent],
    /// `outcomes[i][s]`: does customer i stay in under scenario s.
    outcomes: Vec<Vec<bool>>,
    target: f64,
}

impl<'a> McShortfall<'a> {
    fn new(events: &'a [CustomerEvent], probs: &[f64], target: f64, samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcomes = probs
            .iter()
            .map(|&p| (0..samples).map(|_| rng.random::<f64>() < p).collect())
            .collect();
        McShortfall {
            events,
            outcomes,
            target,
        }
    }
}

impl SetObjective for McShortfall<'_> {
    type State = Vec<f64>;
    fn empty(&self) -> Vec<f64> {
        vec![0.0; self.outcomes.first().map_or(0, |o| o.len())]
    }
    fn add(&self, s: &mut Vec<f64>, i: usize) {
        let d = self.events[i].d;
        for (acc, &z) in s.iter_mut().zip(&self.outcomes[i]) {
            if z {
                *acc += d;
            }
        }
    }
    fn remove(&self, s: &mut Vec<f64>, i: usize) {
        let d = self.events[i].d;
        for (acc, &z) in s.iter_mut().zip(&self.outcomes[i]) {
            if z {
                *acc -= d;
            }
        }
    }
    fn value(&self, s: &Vec<f64>) -> f64 {
        s.iter().map(|&v| (self.target - v).max(0.0)).sum::<f64>() / s.len().max(1) as f64
    }
}

/// Every subset of `pool` with at most `max_count` members.
fn exhaustive<O: SetObjective>(obj: &O, events: &[CustomerEvent], pool: &[usize], max_count: usize) -> Selection {
    struct Best {
        value: f64,
        cost: f64,
        set: Vec<usize>,
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<O: SetObjective>(
        obj: &O,
        events: &[CustomerEvent],
        pool: &[usize],
        from: usize,
        max_count: usize,
        state: &mut O::State,
        stack: &mut Vec<usize>,
        cost: f64,
        best: &mut Best,
    ) {
        let v = obj.value(state);
        if compare_candidates(false, (v, cost, stack), (best.value, best.cost, &best.set)).is_lt() {
            best.value = v;
            best.cost = cost;
            best.set = stack.clone();
        }
        if stack.len() == max_count {
            return;
        }
        for k in from..pool.len() {
            let i = pool[k];
            obj.add(state, i);
            stack.push(i);
            rec(obj, events, pool, k + 1, max_count, state, stack, cost + events[i].r, best);
            stack.pop();
            obj.remove(state, i);
        }
    }
    let mut state = obj.empty();
    let mut best = Best {
        value: obj.value(&state),
        cost: 0.0,
        set: Vec::new(),
    };
    let mut stack = Vec::new();
    rec(obj, events, pool, 0, max_count, &mut state, &mut stack, 0.0, &mut best);
    Selection::from_sorted(best.set)
}

enum Move {
    Add(usize),
    Drop(usize),
    Swap(usize, usize),
}

fn local_search<O: SetObjective>(
    obj: &O,
    events: &[CustomerEvent],
    pool: &[usize],
    max_count: usize,
    max_passes: usize,
) -> Selection {
    let mut inside = vec![false; events.len()];
    let mut state = obj.empty();
    let mut current = obj.value(&state);
    let improves = |new: f64, cur: f64| new < cur - TIE_REL * cur.abs().max(1.0);
    let mut count = 0;

    // greedy insertion
    while count < max_count {
        let mut best: Option<(f64, usize)> = None;
        for &i in pool.iter().filter(|&&i| !inside[i]) {
            let mut s = state.clone();
            obj.add(&mut s, i);
            let v = obj.value(&s);
            if best.is_none_or(|(bv, bi)| v < bv || (v == bv && events[i].r < events[bi].r)) {
                best = Some((v, i));
            }
        }
        match best {
            Some((v, i)) if improves(v, current) => {
                obj.add(&mut state, i);
                inside[i] = true;
                count += 1;
                current = v;
            }
            _ => break,
        }
    }

    // best-improvement add / drop / swap
    for _ in 0..max_passes {
        let mut best: Option<(f64, Move)> = None;
        let offer = |v: f64, m: Move, best: &mut Option<(f64, Move)>| {
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                *best = Some((v, m));
            }
        };
        let (ins, outs): (Vec<usize>, Vec<usize>) = pool.iter().partition(|&&i| inside[i]);
        for &i in &ins {
            let mut s = state.clone();
            obj.remove(&mut s, i);
            offer(obj.value(&s), Move::Drop(i), &mut best);
            for &j in &outs {
                let mut t = s.clone();
                obj.add(&mut t, j);
                offer(obj.value(&t), Move::Swap(i, j), &mut best);
            }
        }
        if count < max_count {
            for &j in &outs {
                let mut s = state.clone();
                obj.add(&mut s, j);
                offer(obj.value(&s), Move::Add(j), &mut best);
            }
        }
        match best {
            Some((v, m)) if improves(v, current) => {
                match m {
                    Move::Add(j) => {
                        obj.add(&mut state, j);
                        inside[j] = true;
                        count += 1;
                    }
                    Move::Drop(i) => {
                        obj.remove(&mut state, i);
                        inside[i] = false;
                        count -= 1;
                    }
                    Move::Swap(i, j) => {
                        obj.remove(&mut state, i);
                        obj.add(&mut state, j);
                        inside[i] = false;
                        inside[j] = true;
                    }
                }
                current = v;
            }
            _ => break,
        }
    }
    Selection::from_sorted((0..events.len()).filter(|&i| inside[i]).collect())
}
