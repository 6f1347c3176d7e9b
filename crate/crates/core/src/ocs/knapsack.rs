//! Exact 0/1 knapsack for the budgeted expected-reduction objective.
//!
//! Weights (revenues) are continuous, so instead of a capacity DP this is a
//! depth-first branch and bound over items in decreasing profit density
//! with the Dantzig fractional bound.

use super::{budget_limit, check_aligned, compare_candidates, CustomerEvent, Selection, Solution, TIE_REL};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct KnapsackOptions {
    /// Search nodes before the search gives up and reports the incumbent
    /// with `optimal = false`.
    pub node_limit: u64,
}

impl Default for KnapsackOptions {
    fn default() -> Self {
        KnapsackOptions {
            node_limit: 20_000_000,
        }
    }
}

/// Maximise `Σ d_i p_i y_i` subject to `Σ r_i y_i ≤ budget`.
pub fn solve_budget(events: &[CustomerEvent], probs: &[f64], budget: f64) -> Result<Solution> {
    solve_budget_with(events, probs, budget, &KnapsackOptions::default())
}

pub fn solve_budget_with(
    events: &[CustomerEvent],
    probs: &[f64],
    budget: f64,
    opts: &KnapsackOptions,
) -> Result<Solution> {
    check_aligned(events, probs)?;
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::invalid(format!("budget must be non-negative, got {budget}")));
    }

    let mut forced = Vec::new();
    let mut items = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        let profit = ev.d * probs[i];
        if !ev.participates || profit <= 0.0 || ev.r > budget_limit(budget) {
            continue;
        }
        if ev.r == 0.0 {
            forced.push(i);
        } else {
            items.push(Item {
                index: i,
                profit,
                weight: ev.r,
            });
        }
    }
    items.sort_by(|a, b| {
        (b.profit / b.weight)
            .partial_cmp(&(a.profit / a.weight))
            .unwrap()
            .then(a.index.cmp(&b.index))
    });

    let mut search = Search::new(items, forced, opts.node_limit);
    search.dfs(0, budget_limit(budget), 0.0, 0.0);
    let truncated = search.truncated;
    let selection = Selection::from_sorted(search.best_set);
    let objective = selection.indices().iter().map(|&i| events[i].d * probs[i]).sum();
    let cost = selection.cost(events);
    Ok(Solution {
        selection,
        objective,
        cost,
        optimal: !truncated,
    })
}

struct Item {
    index: usize,
    profit: f64,
    weight: f64,
}

struct Search {
    items: Vec<Item>,
    forced: Vec<usize>,
    prefix_w: Vec<f64>,
    prefix_p: Vec<f64>,
    suffix_min_w: Vec<f64>,
    /// Item positions by decreasing profit.
    by_profit: Vec<usize>,
    stack: Vec<usize>,
    best_value: f64,
    best_cost: f64,
    best_set: Vec<usize>,
    have_best: bool,
    nodes: u64,
    node_limit: u64,
    truncated: bool,
}

impl Search {
    fn new(items: Vec<Item>, forced: Vec<usize>, node_limit: u64) -> Self {
        let n = items.len();
        let mut prefix_w = vec![0.0; n + 1];
        let mut prefix_p = vec![0.0; n + 1];
        for (k, it) in items.iter().enumerate() {
            prefix_w[k + 1] = prefix_w[k] + it.weight;
            prefix_p[k + 1] = prefix_p[k] + it.profit;
        }
        let mut suffix_min_w = vec![f64::INFINITY; n + 1];
        for k in (0..n).rev() {
            suffix_min_w[k] = suffix_min_w[k + 1].min(items[k].weight);
        }
        let mut by_profit: Vec<usize> = (0..n).collect();
        by_profit.sort_by(|&a, &b| items[b].profit.partial_cmp(&items[a].profit).unwrap());
        Search {
            items,
            forced,
            prefix_w,
            prefix_p,
            suffix_min_w,
            by_profit,
            stack: Vec::with_capacity(n),
            best_value: f64::NEG_INFINITY,
            best_cost: 0.0,
            best_set: Vec::new(),
            have_best: false,
            nodes: 0,
            node_limit,
            truncated: false,
        }
    }

    /// Fractional-relaxation value of items `k..` with capacity `cap`.
    fn bound(&self, k: usize, cap: f64) -> f64 {
        let base_w = self.prefix_w[k];
        let rest = &self.prefix_w[k..];
        // number of whole items that fit, counted from k
        let whole = rest.partition_point(|&w| w - base_w <= cap) - 1;
        let j = k + whole;
        let mut value = self.prefix_p[j] - self.prefix_p[k];
        if j < self.items.len() {
            let left = cap - (self.prefix_w[j] - base_w);
            value += left.max(0.0) * self.items[j].profit / self.items[j].weight;
        }
        value
    }

    /// At most `cap / min weight` of items `k..` fit, so the largest that
    /// many profits bound the rest. Tight when weights are (nearly) equal.
    fn count_bound(&self, k: usize, cap: f64) -> f64 {
        let room = (cap / self.suffix_min_w[k]).floor();
        let left = self.items.len() - k;
        if room >= left as f64 {
            return f64::INFINITY;
        }
        let mut take = room as usize;
        let mut value = 0.0;
        for &pos in &self.by_profit {
            if take == 0 {
                break;
            }
            if pos >= k {
                value += self.items[pos].profit;
                take -= 1;
            }
        }
        value
    }

    fn dfs(&mut self, k: usize, cap: f64, value: f64, cost: f64) {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            self.truncated = true;
            return;
        }
        if k == self.items.len() || self.suffix_min_w[k] > cap {
            self.consider(value, cost);
            return;
        }
        if self.have_best {
            let tol = TIE_REL * self.best_value.abs().max(1.0);
            let floor = self.best_value - tol;
            if value + self.bound(k, cap) < floor || value + self.count_bound(k, cap) < floor {
                return;
            }
        }
        let w = self.items[k].weight;
        if w <= cap {
            self.stack.push(k);
            let p = self.items[k].profit;
            self.dfs(k + 1, cap - w, value + p, cost + w);
            self.stack.pop();
            if self.truncated {
                return;
            }
        }
        self.dfs(k + 1, cap, value, cost);
    }

    fn consider(&mut self, value: f64, cost: f64) {
        if self.have_best {
            let tol = TIE_REL * self.best_value.abs().max(1.0);
            if value < self.best_value - tol {
                return;
            }
        }
        let mut set: Vec<usize> = self
            .stack
            .iter()
            .map(|&k| self.items[k].index)
            .chain(self.forced.iter().copied())
            .collect();
        set.sort_unstable();
        if !self.have_best
            || compare_candidates(
                true,
                (value, cost, &set),
                (self.best_value, self.best_cost, &self.best_set),
            )
            .is_lt()
        {
            self.best_value = value;
            self.best_cost = cost;
            self.best_set = set;
            self.have_best = true;
        }
    }
}
