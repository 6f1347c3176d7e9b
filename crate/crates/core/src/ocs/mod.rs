//! Offline customer-selection oracles.
//!
//! Given event data and opt-in probabilities, each solver returns a
//! [`Solution`]. Probabilities come from Thompson samples, UCB indices or
//! the ground truth, the solvers do not care which.

mod instance;
mod knapsack;
mod network;
mod target;

use std::cmp::Ordering;

use crate::belief::Context;
use crate::{Error, Result};

pub use instance::{CustomerSpec, Instance};
pub use knapsack::{solve_budget, solve_budget_with, KnapsackOptions};
pub use network::{
    check_network, solve_budget_network, solve_budget_network_with, Bus, Line, LineFlow, NetworkOptions,
    NetworkReport, NetworkSpec, RadialNetwork, Violation,
};
pub use target::{
    expected_shortfall_exact, expected_shortfall_mc, solve_target, solve_target_one_sided, target_objective, OneSidedOptions,
    TargetOptions,
};

/// Values closer than this (relative to their magnitude) count as ties.
pub(crate) const TIE_REL: f64 = 1e-12;

/// Largest total revenue accepted under `budget`; absorbs rounding in sums
/// such as `0.4 + 0.2 > 0.6`.
pub fn budget_limit(budget: f64) -> f64 {
    budget + TIE_REL * budget.abs().max(1.0)
}

/// Data reported by one customer for one event.
#[derive(Clone, Debug, PartialEq)]
pub struct CustomerEvent {
    pub customer_id: usize,
    /// Reducible load.
    pub d: f64,
    /// Revenue paid if selected.
    pub r: f64,
    /// Non-participating customers are never selected.
    pub participates: bool,
    pub ctx: Context,
}

impl CustomerEvent {
    pub fn new(customer_id: usize, d: f64, r: f64, ctx: Context) -> Result<Self> {
        let ev = CustomerEvent {
            customer_id,
            d,
            r,
            participates: true,
            ctx,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::invalid(format!(
                "customer {}: reducible load must be positive, got {}",
                self.customer_id, self.d
            )));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::invalid(format!(
                "customer {}: revenue must be non-negative, got {}",
                self.customer_id, self.r
            )));
        }
        Ok(())
    }
}

/// Chosen customers, as sorted distinct positions into the event list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Selection {
    chosen: Vec<usize>,
}

impl Selection {
    pub fn new(mut chosen: Vec<usize>, population: usize) -> Result<Self> {
        chosen.sort_unstable();
        if let Some(&i) = chosen.iter().find(|&&i| i >= population) {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: population,
            });
        }
        if chosen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("selection contains duplicate customers"));
        }
        Ok(Selection { chosen })
    }

    pub fn empty() -> Self {
        Selection::default()
    }

    pub(crate) fn from_sorted(chosen: Vec<usize>) -> Self {
        debug_assert!(chosen.windows(2).all(|w| w[0] < w[1]));
        Selection { chosen }
    }

    pub fn indices(&self) -> &[usize] {
        &self.chosen
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.chosen.binary_search(&i).is_ok()
    }

    /// 0/1 indicator vector of length `population`.
    pub fn indicator(&self, population: usize) -> Vec<bool> {
        let mut y = vec![false; population];
        for &i in &self.chosen {
            y[i] = true;
        }
        y
    }

    pub fn cost(&self, events: &[CustomerEvent]) -> f64 {
        self.chosen.iter().map(|&i| events[i].r).sum()
    }
}

/// Solver output.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub selection: Selection,
    /// Objective in the solver's own sense (maximised for budget solvers,
    /// minimised for target solvers).
    pub objective: f64,
    /// Total revenue of the selection.
    pub cost: f64,
    /// False when the result comes from a heuristic or a truncated search.
    pub optimal: bool,
}

/// `Σ_{i∈sel} d_i p_i`.
pub fn expected_reduction(sel: &Selection, events: &[CustomerEvent], probs: &[f64]) -> Result<f64> {
    check_aligned(events, probs)?;
    let mut acc = 0.0;
    for &i in sel.indices() {
        if i >= events.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: events.len(),
            });
        }
        acc += events[i].d * probs[i];
    }
    Ok(acc)
}

pub(crate) fn check_aligned(events: &[CustomerEvent], probs: &[f64]) -> Result<()> {
    if events.len() != probs.len() {
        return Err(Error::DimensionMismatch {
            expected: events.len(),
            got: probs.len(),
        });
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Ordering of candidate selections: better objective first (in the given
/// sense), then lower cost, then lexicographically smaller index list.
pub(crate) fn compare_candidates(
    maximize: bool,
    (va, ca, sa): (f64, f64, &[usize]),
    (vb, cb, sb): (f64, f64, &[usize]),
) -> Ordering {
    let tol = TIE_REL * va.abs().max(vb.abs()).max(1.0);
    if (va - vb).abs() > tol {
        let better_a = if maximize { va > vb } else { va < vb };
        return if better_a { Ordering::Less } else { Ordering::Greater };
    }
    let ctol = TIE_REL * ca.abs().max(cb.abs()).max(1.0);
    if (ca - cb).abs() > ctol {
        return ca.partial_cmp(&cb).unwrap();
    }
    sa.cmp(sb)
}
