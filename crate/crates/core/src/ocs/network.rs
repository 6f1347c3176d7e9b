//! Linearised DistFlow on radial networks.
//!
//! On a tree the branch flows are fixed by the bus injections, so checking a
//! selection is a leaf-to-root accumulation followed by a root-to-leaf
//! voltage sweep. Sign conventions at every non-root bus `k`:
//!
//! ```text
//! Σ P_out(k) - P_in(k) = P_in_k + Σ_{i at k} y_i d_i
//! Σ Q_out(k) - Q_in(k) = Q_in_k + Σ_{i at k} y_i η_i d_i
//! U_j - U_k = 2 (R_jk P_jk + X_jk Q_jk)
//! ```
//!
//! so a pure load reduction at a leaf shows up as a negative (reverse) flow
//! on its feeder line.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{budget_limit, check_aligned, compare_candidates, CustomerEvent, Selection, Solution, TIE_REL};
use crate::{Error, Result};

const FEAS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Squared-voltage limits.
    pub u_min: f64,
    pub u_max: f64,
    /// Net injections before the event.
    #[serde(default)]
    pub p_in: f64,
    #[serde(default)]
    pub q_in: f64,
}

/// Line from parent bus `from` to child bus `to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub s_cap: f64,
}

fn default_root_u() -> f64 {
    1.0
}

/// File form of a network (per-unit quantities, bus ids as in the file).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub root: usize,
    /// Fixed squared voltage at the root.
    #[serde(default = "default_root_u")]
    pub root_u: f64,
    /// Bus id of each customer, in customer order.
    pub customer_bus: Vec<usize>,
    /// Constant power-factor ratio of each customer.
    pub eta: Vec<f64>,
}

/// Validated radial network with bus ids resolved to positions.
#[derive(Clone, Debug)]
pub struct RadialNetwork {
    spec: NetworkSpec,
    root: usize,
    /// Incoming line of each bus (`None` for the root).
    parent_line: Vec<Option<usize>>,
    /// Line endpoints as positions.
    ends: Vec<(usize, usize)>,
    /// Buses in breadth-first order from the root.
    order: Vec<usize>,
    customer_bus: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineFlow {
    pub from: usize,
    pub to: usize,
    pub p: f64,
    pub q: f64,
}

impl LineFlow {
    pub fn apparent(&self) -> f64 {
        self.p.hypot(self.q)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// `slack` is how far the apparent flow exceeds the cap.
    Thermal {
        line: usize,
        apparent: f64,
        cap: f64,
        slack: f64,
    },
    /// `slack` is the distance outside `[u_min, u_max]`.
    Voltage { bus: usize, u: f64, u_min: f64, u_max: f64, slack: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkReport {
    pub feasible: bool,
    /// Indexed like the network's line list.
    pub flows: Vec<LineFlow>,
    /// Squared voltages, indexed like the network's bus list.
    pub voltages: Vec<f64>,
    pub violations: Vec<Violation>,
}

impl RadialNetwork {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let nb = spec.buses.len();
        let bad = |m: String| Err(Error::InvalidNetwork(m));
        let mut pos = HashMap::with_capacity(nb);
        for (k, b) in spec.buses.iter().enumerate() {
            if pos.insert(b.id, k).is_some() {
                return bad(format!("duplicate bus id {}", b.id));
            }
            if !(b.u_min < b.u_max) {
                return bad(format!("bus {}: u_min must be below u_max", b.id));
            }
        }
        let Some(&root) = pos.get(&spec.root) else {
            return bad(format!("root bus {} not found", spec.root));
        };
        if spec.lines.len() + 1 != nb {
            return bad(format!("{} buses need {} lines, found {}", nb, nb.saturating_sub(1), spec.lines.len()));
        }
        let mut parent_line = vec![None; nb];
        let mut children = vec![Vec::new(); nb];
        let mut ends = Vec::with_capacity(spec.lines.len());
        for (l, line) in spec.lines.iter().enumerate() {
            let (Some(&j), Some(&k)) = (pos.get(&line.from), pos.get(&line.to)) else {
                return bad(format!("line {l} references an unknown bus"));
            };
            if !(line.s_cap > 0.0) || line.r < 0.0 || line.x < 0.0 {
                return bad(format!("line {l}: need s_cap > 0 and non-negative impedance"));
            }
            if k == root || parent_line[k].is_some() {
                return bad(format!("bus {} has more than one feeding line", line.to));
            }
            parent_line[k] = Some(l);
            children[j].push(k);
            ends.push((j, k));
        }
        let mut order = Vec::with_capacity(nb);
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let b = order[head];
            head += 1;
            order.extend(children[b].iter().copied());
        }
        if order.len() != nb {
            return bad("lines do not form a tree rooted at the root bus".into());
        }
        if spec.eta.len() != spec.customer_bus.len() {
            return bad("eta and customer_bus lengths differ".into());
        }
        let customer_bus = spec
            .customer_bus
            .iter()
            .map(|id| pos.get(id).copied().ok_or_else(|| Error::InvalidNetwork(format!("customer bus {id} not found"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(RadialNetwork {
            spec,
            root,
            parent_line,
            ends,
            order,
            customer_bus,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn n_customers(&self) -> usize {
        self.customer_bus.len()
    }

    fn check_customers(&self, events: &[CustomerEvent]) -> Result<()> {
        if events.len() != self.customer_bus.len() {
            return Err(Error::DimensionMismatch {
                expected: self.customer_bus.len(),
                got: events.len(),
            });
        }
        Ok(())
    }

    /// Line flows `(P, Q)` for per-bus injections.
    fn flows(&self, inj_p: &[f64], inj_q: &[f64]) -> Vec<(f64, f64)> {
        let mut sub_p = inj_p.to_vec();
        let mut sub_q = inj_q.to_vec();
        let mut flows = vec![(0.0, 0.0); self.ends.len()];
        for &b in self.order.iter().rev() {
            if let Some(l) = self.parent_line[b] {
                flows[l] = (-sub_p[b], -sub_q[b]);
                let parent = self.ends[l].0;
                sub_p[parent] += sub_p[b];
                sub_q[parent] += sub_q[b];
            }
        }
        flows
    }

    fn voltages(&self, flows: &[(f64, f64)]) -> Vec<f64> {
        let mut u = vec![0.0; self.spec.buses.len()];
        u[self.root] = self.spec.root_u;
        for &b in self.order.iter().skip(1) {
            let l = self.parent_line[b].unwrap();
            let line = &self.spec.lines[l];
            let (p, q) = flows[l];
            u[b] = u[self.ends[l].0] - 2.0 * (line.r * p + line.x * q);
        }
        u
    }

    fn injections(&self, sel: &[usize], events: &[CustomerEvent]) -> (Vec<f64>, Vec<f64>) {
        let mut p: Vec<f64> = self.spec.buses.iter().map(|b| b.p_in).collect();
        let mut q: Vec<f64> = self.spec.buses.iter().map(|b| b.q_in).collect();
        for &i in sel {
            let b = self.customer_bus[i];
            p[b] += events[i].d;
            q[b] += self.spec.eta[i] * events[i].d;
        }
        (p, q)
    }

    fn evaluate(&self, sel: &[usize], events: &[CustomerEvent]) -> NetworkReport {
        let (ip, iq) = self.injections(sel, events);
        let raw = self.flows(&ip, &iq);
        let voltages = self.voltages(&raw);
        let mut violations = Vec::new();
        let flows: Vec<LineFlow> = raw
            .iter()
            .zip(&self.spec.lines)
            .map(|(&(p, q), line)| LineFlow {
                from: line.from,
                to: line.to,
                p,
                q,
            })
            .collect();
        for (l, (f, line)) in flows.iter().zip(&self.spec.lines).enumerate() {
            let s2 = f.p * f.p + f.q * f.q;
            if s2 > line.s_cap * line.s_cap * (1.0 + FEAS_TOL) {
                let apparent = s2.sqrt();
                violations.push(Violation::Thermal {
                    line: l,
                    apparent,
                    cap: line.s_cap,
                    slack: apparent - line.s_cap,
                });
            }
        }
        for (k, (&u, bus)) in voltages.iter().zip(&self.spec.buses).enumerate() {
            let tol = FEAS_TOL * bus.u_max.abs().max(1.0);
            let slack = if u < bus.u_min - tol {
                bus.u_min - u
            } else if u > bus.u_max + tol {
                u - bus.u_max
            } else {
                continue;
            };
            violations.push(Violation::Voltage {
                bus: k,
                u,
                u_min: bus.u_min,
                u_max: bus.u_max,
                slack,
            });
        }
        NetworkReport {
            feasible: violations.is_empty(),
            flows,
            voltages,
            violations,
        }
    }

    /// Sound infeasibility test for every completion of a partial decision:
    /// `fixed` are included customers, `free` are still undecided. Uses
    /// interval bounds on flows and voltages; `true` means no completion
    /// can be feasible.
    fn partial_infeasible(&self, fixed: &[usize], free: &[usize], events: &[CustomerEvent]) -> bool {
        let (ip, iq) = self.injections(fixed, events);
        let nb = ip.len();
        let (mut p_lo, mut p_hi) = (ip.clone(), ip);
        let (mut q_lo, mut q_hi) = (iq.clone(), iq);
        for &i in free {
            let b = self.customer_bus[i];
            let dq = self.spec.eta[i] * events[i].d;
            p_hi[b] += events[i].d;
            if dq >= 0.0 {
                q_hi[b] += dq;
            } else {
                q_lo[b] += dq;
            }
        }
        let mut flow_iv = vec![(0.0, 0.0, 0.0, 0.0); self.ends.len()];
        for &b in self.order.iter().rev() {
            if let Some(l) = self.parent_line[b] {
                // P = -subtree injection
                flow_iv[l] = (-p_hi[b], -p_lo[b], -q_hi[b], -q_lo[b]);
                let j = self.ends[l].0;
                p_lo[j] += p_lo[b];
                p_hi[j] += p_hi[b];
                q_lo[j] += q_lo[b];
                q_hi[j] += q_hi[b];
            }
        }
        let min_abs = |lo: f64, hi: f64| if lo > 0.0 { lo } else if hi < 0.0 { -hi } else { 0.0 };
        for (l, line) in self.spec.lines.iter().enumerate() {
            let (plo, phi, qlo, qhi) = flow_iv[l];
            let mp = min_abs(plo, phi);
            let mq = min_abs(qlo, qhi);
            if mp * mp + mq * mq > line.s_cap * line.s_cap * (1.0 + FEAS_TOL) {
                return true;
            }
        }
        let mut u_lo = vec![0.0; nb];
        let mut u_hi = vec![0.0; nb];
        u_lo[self.root] = self.spec.root_u;
        u_hi[self.root] = self.spec.root_u;
        for &b in &self.order {
            if let Some(l) = self.parent_line[b] {
                let line = &self.spec.lines[l];
                let (plo, phi, qlo, qhi) = flow_iv[l];
                let j = self.ends[l].0;
                u_lo[b] = u_lo[j] - 2.0 * (line.r * phi + line.x * qhi);
                u_hi[b] = u_hi[j] - 2.0 * (line.r * plo + line.x * qlo);
            }
            let bus = &self.spec.buses[b];
            let tol = FEAS_TOL * bus.u_max.abs().max(1.0);
            if u_lo[b] > bus.u_max + tol || u_hi[b] < bus.u_min - tol {
                return true;
            }
        }
        false
    }
}

impl TryFrom<NetworkSpec> for RadialNetwork {
    type Error = Error;
    fn try_from(spec: NetworkSpec) -> Result<Self> {
        RadialNetwork::new(spec)
    }
}

/// Power flow and limit check for one selection.
pub fn check_network(sel: &Selection, events: &[CustomerEvent], net: &RadialNetwork) -> Result<NetworkReport> {
    net.check_customers(events)?;
    if let Some(&i) = sel.indices().iter().find(|&&i| i >= events.len()) {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: events.len(),
        });
    }
    Ok(net.evaluate(sel.indices(), events))
}

#[derive(Clone, Debug)]
pub struct NetworkOptions {
    pub node_limit: u64,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions { node_limit: 5_000_000 }
    }
}

pub fn solve_budget_network(
    events: &[CustomerEvent],
    probs: &[f64],
    budget: f64,
    net: &RadialNetwork,
) -> Result<Solution> {
    solve_budget_network_with(events, probs, budget, net, &NetworkOptions::default())
}

/// Budgeted expected-reduction selection restricted to network-feasible
/// subsets. Branch and bound with the fractional knapsack bound and interval
/// feasibility pruning; every leaf is checked exactly.
///
/// Returns [`Error::Infeasible`] when no subset (not even the empty one)
/// satisfies the network limits.
pub fn solve_budget_network_with(
    events: &[CustomerEvent],
    probs: &[f64],
    budget: f64,
    net: &RadialNetwork,
    opts: &NetworkOptions,
) -> Result<Solution> {
    check_aligned(events, probs)?;
    net.check_customers(events)?;
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::invalid(format!("budget must be non-negative, got {budget}")));
    }
    // Zero-profit customers stay in the pool: they can restore feasibility.
    let mut items: Vec<(usize, f64, f64)> = events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.participates && e.r <= budget_limit(budget))
        .map(|(i, e)| (i, e.d * probs[i], e.r))
        .collect();
    let density = |&(_, p, w): &(usize, f64, f64)| {
        if w == 0.0 {
            if p > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            p / w
        }
    };
    items.sort_by(|a, b| density(b).partial_cmp(&density(a)).unwrap().then(a.0.cmp(&b.0)));

    let mut bb = NetBb {
        net,
        events,
        items,
        chosen: Vec::new(),
        best: None,
        nodes: 0,
        node_limit: opts.node_limit,
        truncated: false,
    };
    bb.dfs(0, budget_limit(budget), 0.0, 0.0);
    let truncated = bb.truncated;
    let (_, _, set) = bb.best.ok_or(Error::Infeasible)?;
    let selection = Selection::from_sorted(set);
    let objective = selection.indices().iter().map(|&i| events[i].d * probs[i]).sum();
    let cost = selection.cost(events);
    Ok(Solution {
        selection,
        objective,
        cost,
        optimal: !truncated,
    })
}

struct NetBb<'a> {
    net: &'a RadialNetwork,
    events: &'a [CustomerEvent],
    /// (customer, profit, weight) in branching order.
    items: Vec<(usize, f64, f64)>,
    chosen: Vec<usize>,
    best: Option<(f64, f64, Vec<usize>)>,
    nodes: u64,
    node_limit: u64,
    truncated: bool,
}

impl NetBb<'_> {
    fn bound(&self, k: usize, mut cap: f64) -> f64 {
        let mut v = 0.0;
        for &(_, p, w) in &self.items[k..] {
            if w <= cap {
                v += p;
                cap -= w;
            } else {
                v += p * cap / w;
                break;
            }
        }
        v
    }

    fn dfs(&mut self, k: usize, cap: f64, value: f64, cost: f64) {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            self.truncated = true;
            return;
        }
        if let Some((bv, _, _)) = &self.best {
            let tol = TIE_REL * bv.abs().max(1.0);
            if value + self.bound(k, cap) < bv - tol {
                return;
            }
        }
        if k == self.items.len() {
            let mut set = self.chosen.clone();
            set.sort_unstable();
            if !self.net.evaluate(&set, self.events).feasible {
                return;
            }
            let better = match &self.best {
                None => true,
                Some((bv, bc, bs)) => compare_candidates(true, (value, cost, &set), (*bv, *bc, bs)).is_lt(),
            };
            if better {
                self.best = Some((value, cost, set));
            }
            return;
        }
        let free: Vec<usize> = self.items[k..].iter().map(|t| t.0).collect();
        if self.net.partial_infeasible(&self.chosen, &free, self.events) {
            return;
        }
        let (i, p, w) = self.items[k];
        if w <= cap {
            self.chosen.push(i);
            self.dfs(k + 1, cap - w, value + p, cost + w);
            self.chosen.pop();
            if self.truncated {
                return;
            }
        }
        self.dfs(k + 1, cap, value, cost);
    }
}
