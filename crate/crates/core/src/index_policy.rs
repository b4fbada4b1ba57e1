//! Repair statistics, the stay/move/wait indices, the idling score and
//! the two index heuristics built from them.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::instance::InstanceParameters;
use crate::mdp::{Action, DecisionRule, SystemState};
use crate::network::NodeId;

/// Relative tolerance under which two index values count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// `a > b` beyond the tie tolerance.
pub fn clearly_greater(a: f64, b: f64) -> bool {
    a - b > TIE_TOL * a.abs().max(b.abs())
}

/// `a ≥ b` up to the tie tolerance.
pub fn at_least(a: f64, b: f64) -> bool {
    !clearly_greater(b, a)
}

/// Expected reward and duration of an uninterrupted repair, by start level.
#[derive(Clone, Debug, PartialEq)]
pub struct RepairStatistics {
    /// `E[R(k)]` for `k = 0..=K`.
    pub expected_reward: Vec<f64>,
    /// `E[T(k)]` for `k = 0..=K`.
    pub expected_time: Vec<f64>,
}

impl RepairStatistics {
    pub fn ratio(&self, k: u32) -> f64 {
        let k = k as usize;
        if k == 0 {
            0.0
        } else {
            self.expected_reward[k] / self.expected_time[k]
        }
    }
}

/// Expected time spent at level `p` before reaching 0, starting from `k`,
/// while the machine is repaired without interruption.
fn occupation_time(lambda: f64, mu: f64, k: u32, p: u32) -> f64 {
    let q = lambda / mu;
    let top = p.min(k);
    (0..top).map(|r| q.powi((p - 1 - r) as i32)).sum::<f64>() / mu
}

pub fn repair_statistics(inst: &InstanceParameters, machine: usize) -> RepairStatistics {
    let cap = inst.cap[machine];
    let (lambda, mu) = (inst.lambda[machine], inst.mu[machine]);
    let rates: Vec<f64> = (1..=cap).map(|p| inst.reward_rate(machine, p)).collect();
    let mut expected_reward = vec![0.0; cap as usize + 1];
    let mut expected_time = vec![0.0; cap as usize + 1];
    for k in 1..=cap {
        for p in 1..=cap {
            let c = occupation_time(lambda, mu, k, p);
            expected_time[k as usize] += c;
            expected_reward[k as usize] += c * rates[p as usize - 1];
        }
    }
    RepairStatistics {
        expected_reward,
        expected_time,
    }
}

/// Law of the machine level on arrival, and the conditional travel time.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalDistribution {
    /// Level at departure; entry `n` of the vectors is level `first + n`.
    pub first: u32,
    pub pmf: Vec<f64>,
    pub expected_travel: Vec<f64>,
}

impl ArrivalDistribution {
    pub fn levels(&self) -> impl Iterator<Item = (u32, f64, f64)> + '_ {
        self.pmf
            .iter()
            .zip(&self.expected_travel)
            .enumerate()
            .map(move |(n, (&p, &d))| (self.first + n as u32, p, d))
    }

    pub fn mean_travel(&self) -> f64 {
        self.pmf
            .iter()
            .zip(&self.expected_travel)
            .map(|(p, d)| p * d)
            .sum()
    }
}

/// Arrival law after `hops` edges at switching rate `tau` toward a machine
/// with rate `lambda`, starting level `x` and cap `cap`.
pub fn arrival_law(lambda: f64, tau: f64, hops: u32, x: u32, cap: u32) -> ArrivalDistribution {
    let d = f64::from(hops);
    if x >= cap {
        return ArrivalDistribution {
            first: cap,
            pmf: vec![1.0],
            expected_travel: vec![d / tau],
        };
    }
    let a = tau / (lambda + tau);
    let b = lambda / (lambda + tau);
    let mut pmf = Vec::with_capacity((cap - x + 1) as usize);
    let mut travel = Vec::with_capacity(pmf.capacity());
    let mut p = a.powi(hops as i32);
    for k in x..cap {
        let n = f64::from(k - x);
        pmf.push(p);
        travel.push((d + n) / (tau + lambda));
        p *= b * (d + n) / (n + 1.0);
    }
    // reaching the cap: the n-th degradation comes after s < d switches
    let n = f64::from(cap - x);
    let mut term = b.powi((cap - x) as i32);
    let mut mass = 0.0;
    let mut weighted = 0.0;
    for s in 0..hops {
        let s = f64::from(s);
        mass += term;
        weighted += term * ((n + s) / (lambda + tau) + (d - s) / tau);
        term *= (n + s) / (s + 1.0) * a;
    }
    pmf.push(mass);
    travel.push(weighted / mass);
    ArrivalDistribution {
        first: x,
        pmf,
        expected_travel: travel,
    }
}

pub fn arrival_distribution(
    inst: &InstanceParameters,
    from: NodeId,
    to: NodeId,
    x: u32,
) -> Result<ArrivalDistribution> {
    if from == to {
        return Err(Error::Other(format!(
            "arrival law from machine {to} to itself"
        )));
    }
    if !inst.layout.is_machine(to) {
        return Err(Error::Other(format!("node {to} is not a machine")));
    }
    let j = to.0;
    Ok(arrival_law(
        inst.lambda[j],
        inst.tau,
        inst.layout.dist(from, to),
        x,
        inst.cap[j],
    ))
}

fn move_value(stats: &RepairStatistics, law: &ArrivalDistribution) -> f64 {
    law.levels()
        .map(|(k, p, d)| {
            let k = k as usize;
            p * stats.expected_reward[k] / (d + stats.expected_time[k])
        })
        .sum()
}

fn wait_value(stats: &RepairStatistics, law: &ArrivalDistribution, lambda: f64, cap: u32) -> f64 {
    law.levels()
        .map(|(k, p, d)| {
            let k = (k + u32::from(k < cap)) as usize;
            p * stats.expected_reward[k] / (1.0 / lambda + d + stats.expected_time[k])
        })
        .sum()
}

pub fn stay_index(inst: &InstanceParameters, machine: usize, x: u32) -> f64 {
    repair_statistics(inst, machine).ratio(x)
}

pub fn move_index(inst: &InstanceParameters, from: NodeId, to: NodeId, x: u32) -> Result<f64> {
    let law = arrival_distribution(inst, from, to, x)?;
    Ok(move_value(&repair_statistics(inst, to.0), &law))
}

pub fn wait_index(inst: &InstanceParameters, from: NodeId, to: NodeId, x: u32) -> Result<f64> {
    let law = arrival_distribution(inst, from, to, x)?;
    let j = to.0;
    Ok(wait_value(
        &repair_statistics(inst, j),
        &law,
        inst.lambda[j],
        inst.cap[j],
    ))
}

/// `Ψ(v)`: expected travel time from `v` to the next machine to degrade.
pub fn idle_score(inst: &InstanceParameters, node: NodeId) -> f64 {
    let total = inst.lambda_sum();
    inst.layout
        .machines()
        .map(|j| inst.lambda[j.0] / total * f64::from(inst.layout.dist(node, j)) / inst.tau)
        .sum()
}

/// Smallest index attaining the maximum, with tie tolerance.
fn argmax_by(values: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if best.is_none_or(|(_, b)| clearly_greater(v, b)) {
            best = Some((i, v));
        }
    }
    best
}

/// All index values of an instance, precomputed.
#[derive(Clone, Debug)]
pub struct IndexTables {
    machines: usize,
    stats: Vec<RepairStatistics>,
    /// `[node][machine][level]`; empty where node == machine.
    move_idx: Vec<Vec<Vec<f64>>>,
    wait_idx: Vec<Vec<Vec<f64>>>,
    psi: Vec<f64>,
    idle_target: NodeId,
    full_target: NodeId,
}

impl IndexTables {
    pub fn new(inst: &InstanceParameters) -> Self {
        let m = inst.machine_count();
        let stats: Vec<RepairStatistics> = (0..m).map(|j| repair_statistics(inst, j)).collect();
        let mut move_idx = Vec::with_capacity(inst.node_count());
        let mut wait_idx = Vec::with_capacity(inst.node_count());
        for v in inst.layout.nodes() {
            let mut mv_row = Vec::with_capacity(m);
            let mut wt_row = Vec::with_capacity(m);
            for (j, st) in stats.iter().enumerate() {
                if v.0 == j {
                    mv_row.push(Vec::new());
                    wt_row.push(Vec::new());
                    continue;
                }
                let cap = inst.cap[j];
                let hops = inst.layout.dist(v, NodeId(j));
                let (mv, wt): (Vec<f64>, Vec<f64>) = (0..=cap)
                    .map(|x| {
                        let law = arrival_law(inst.lambda[j], inst.tau, hops, x, cap);
                        (
                            move_value(st, &law),
                            wait_value(st, &law, inst.lambda[j], cap),
                        )
                    })
                    .unzip();
                mv_row.push(mv);
                wt_row.push(wt);
            }
            move_idx.push(mv_row);
            wait_idx.push(wt_row);
        }
        let psi: Vec<f64> = inst.layout.nodes().map(|v| idle_score(inst, v)).collect();
        let mut idle = 0;
        for (v, &s) in psi.iter().enumerate() {
            if clearly_greater(psi[idle], s) {
                idle = v;
            }
        }
        let (full, _) = argmax_by((0..m).map(|j| (j, stats[j].ratio(inst.cap[j]))))
            .expect("at least one machine");
        IndexTables {
            machines: m,
            stats,
            move_idx,
            wait_idx,
            psi,
            idle_target: NodeId(idle),
            full_target: NodeId(full),
        }
    }

    pub fn stats(&self, machine: usize) -> &RepairStatistics {
        &self.stats[machine]
    }

    pub fn stay(&self, machine: usize, x: u32) -> f64 {
        self.stats[machine].ratio(x)
    }

    /// Move index from `node` to machine `j` at level `x`; `node != j`.
    pub fn move_index(&self, node: NodeId, j: usize, x: u32) -> f64 {
        self.move_idx[node.0][j][x as usize]
    }

    pub fn wait_index(&self, node: NodeId, j: usize, x: u32) -> f64 {
        self.wait_idx[node.0][j][x as usize]
    }

    pub fn psi(&self, node: NodeId) -> f64 {
        self.psi[node.0]
    }

    /// Node minimizing `Ψ` (smallest id on ties).
    pub fn idle_target(&self) -> NodeId {
        self.idle_target
    }

    /// Machine maximizing `E[R(K)]/E[T(K)]` (smallest id on ties).
    pub fn full_target(&self) -> NodeId {
        self.full_target
    }

    pub fn machine_count(&self) -> usize {
        self.machines
    }
}

/// The index heuristic, optionally with the all-failed override.
#[derive(Clone, Debug)]
pub struct IndexPolicy<'a> {
    inst: &'a InstanceParameters,
    tables: IndexTables,
    modified: bool,
}

impl<'a> IndexPolicy<'a> {
    pub fn new(inst: &'a InstanceParameters) -> Self {
        IndexPolicy {
            inst,
            tables: IndexTables::new(inst),
            modified: false,
        }
    }

    /// Variant that heads for the best full-repair machine when every
    /// machine is at its cap, which makes the induced chain unichain.
    pub fn modified(inst: &'a InstanceParameters) -> Self {
        IndexPolicy {
            modified: true,
            ..Self::new(inst)
        }
    }

    pub fn is_modified(&self) -> bool {
        self.modified
    }

    pub fn tables(&self) -> &IndexTables {
        &self.tables
    }

    pub fn instance(&self) -> &'a InstanceParameters {
        self.inst
    }

    pub fn action(&self, x: &SystemState) -> Action {
        if self.modified && x.all_failed(self.inst) {
            modified_rule(self.inst, &self.tables, x)
        } else {
            index_rule(self.inst, &self.tables, x)
        }
    }

    /// Human-readable table of every index at `x`.
    pub fn describe(&self, x: &SystemState) -> String {
        let t = &self.tables;
        let i = x.location;
        let mut out = String::new();
        let _ = writeln!(out, "state {x}");
        if self.inst.layout.is_machine(i) {
            let xi = u32::from(x.conditions[i.0]);
            let _ = writeln!(out, "stay  machine {i}: {:.6}", t.stay(i.0, xi));
        }
        let _ = writeln!(out, "machine      x     move     wait  in J");
        for j in 0..t.machine_count() {
            if j == i.0 {
                continue;
            }
            let xj = u32::from(x.conditions[j]);
            let mv = t.move_index(i, j, xj);
            let wt = t.wait_index(i, j, xj);
            let _ = writeln!(
                out,
                "{:>7} {:>6} {:>8.6} {:>8.6} {:>5}",
                NodeId(j),
                xj,
                mv,
                wt,
                at_least(mv, wt)
            );
        }
        let _ = writeln!(
            out,
            "psi here {:.6}, idle node {}",
            t.psi(i),
            t.idle_target()
        );
        let _ = writeln!(out, "action {}", self.action(x).0);
        out
    }
}

impl DecisionRule for IndexPolicy<'_> {
    fn decide(&mut self, x: &SystemState) -> Action {
        self.action(x)
    }

    fn name(&self) -> String {
        if self.modified {
            "modified_index"
        } else {
            "index"
        }
        .to_string()
    }
}

fn index_rule(inst: &InstanceParameters, t: &IndexTables, x: &SystemState) -> Action {
    let layout = &inst.layout;
    let i = x.location;
    if x.all_pristine() {
        return Action(layout.step_toward(i, t.idle_target));
    }
    if layout.is_machine(i) {
        let candidates = (0..t.machines).filter(|&j| j != i.0).filter_map(|j| {
            let xj = u32::from(x.conditions[j]);
            let mv = t.move_index(i, j, xj);
            at_least(mv, t.wait_index(i, j, xj)).then_some((j, mv))
        });
        match argmax_by(candidates) {
            Some((j, mv)) if clearly_greater(mv, t.stay(i.0, u32::from(x.conditions[i.0]))) => {
                Action(layout.step_toward(i, NodeId(j)))
            }
            _ => Action(i),
        }
    } else {
        let (j, _) =
            argmax_by((0..t.machines).map(|j| (j, t.move_index(i, j, u32::from(x.conditions[j])))))
                .expect("at least one machine");
        Action(layout.step_toward(i, NodeId(j)))
    }
}

fn modified_rule(inst: &InstanceParameters, t: &IndexTables, x: &SystemState) -> Action {
    Action(inst.layout.step_toward(x.location, t.full_target))
}

/// Index heuristic action at `x`.
pub fn index_decision(inst: &InstanceParameters, x: &SystemState) -> Action {
    index_rule(inst, &IndexTables::new(inst), x)
}

/// Modified index heuristic action at `x`.
pub fn modified_index_decision(inst: &InstanceParameters, x: &SystemState) -> Action {
    IndexPolicy::modified(inst).action(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, CostModel, GenerateOptions};
    use crate::mdp::StateKey;
    use crate::mdp::StateSpace;
    use crate::network::NetworkLayout;
    use proptest::prelude::*;

    /// Solves the first-step equations for uninterrupted repair:
    /// `y_k = w_k/(λ+μ) + λ/(λ+μ) y_{k+1} + μ/(λ+μ) y_{k−1}` for `k < K`,
    /// `y_K = w_K/μ + y_{K−1}`, `y_0 = 0`, with the Thomas algorithm.
    fn tridiagonal_oracle(lambda: f64, mu: f64, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        let (mut a, mut b, mut c, mut d) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for k in 0..n {
            if k + 1 < n {
                b[k] = lambda + mu;
                a[k] = -mu;
                c[k] = -lambda;
                d[k] = w[k];
            } else {
                b[k] = mu;
                a[k] = -mu;
                d[k] = w[k];
            }
        }
        for k in 1..n {
            let f = a[k] / b[k - 1];
            b[k] -= f * c[k - 1];
            d[k] -= f * d[k - 1];
        }
        let mut y = vec![0.0; n];
        y[n - 1] = d[n - 1] / b[n - 1];
        for k in (0..n - 1).rev() {
            y[k] = (d[k] - c[k] * y[k + 1]) / b[k];
        }
        let mut out = vec![0.0];
        out.extend(y);
        out
    }

    fn star_a() -> InstanceParameters {
        InstanceParameters::homogeneous(
            NetworkLayout::star(3, 1).unwrap(),
            0.04,
            0.12,
            0.024,
            1,
            CostModel::linear(vec![1.0; 3]),
        )
        .unwrap()
    }

    fn complete_k1(lambda: f64, mu: f64, tau: f64) -> InstanceParameters {
        InstanceParameters::homogeneous(
            NetworkLayout::complete(3).unwrap(),
            lambda,
            mu,
            tau,
            1,
            CostModel::linear(vec![1.0; 3]),
        )
        .unwrap()
    }

    #[test]
    fn single_level_closed_forms() {
        let s = star_a();
        let st = repair_statistics(&s, 0);
        assert_eq!(st.expected_reward[0], 0.0);
        assert_eq!(st.expected_time[0], 0.0);
        assert!((st.expected_time[1] - 1.0 / 0.12).abs() < 1e-12);
        assert!((st.expected_reward[1] - 1.0 / 0.04).abs() < 1e-9);
        assert!((stay_index(&s, 0, 1) - 3.0).abs() < 1e-12);
        assert_eq!(stay_index(&s, 0, 0), 0.0);
    }

    #[test]
    fn move_and_wait_closed_forms() {
        let (l, u, t) = (0.04, 0.12, 0.024);
        let c = complete_k1(l, u, t);
        let mv = move_index(&c, NodeId(0), NodeId(1), 1).unwrap();
        assert!((mv - 0.5).abs() < 1e-12);
        let wt = wait_index(&c, NodeId(0), NodeId(1), 1).unwrap();
        assert!((wt - 1.0 / 3.0).abs() < 1e-12);
        assert!((wt - u * t / ((u + l) * t + u * l)).abs() < 1e-12);
        let mv0 = move_index(&c, NodeId(0), NodeId(1), 0).unwrap();
        assert!((mv0 - u * t / (t * t + (2.0 * u + l) * t + u * l)).abs() < 1e-12);
        assert!(move_index(&c, NodeId(1), NodeId(1), 0).is_err());
    }

    #[test]
    fn arrival_first_term() {
        let s = star_a();
        let law = arrival_distribution(&s, NodeId(0), NodeId(1), 0).unwrap();
        assert!((law.pmf[0] - 0.140625).abs() < 1e-15);
        let full = arrival_distribution(&s, NodeId(0), NodeId(1), 1).unwrap();
        assert_eq!(full.pmf, vec![1.0]);
    }

    #[test]
    fn small_lambda_move_limit() {
        // rewards scale with 1/λ, so the index tends to μf/(τ+2μ) rather than 0
        let c = complete_k1(1e-9, 0.5, 0.5);
        let mv = move_index(&c, NodeId(0), NodeId(1), 0).unwrap();
        assert!((mv - 0.5 / 1.5).abs() < 1e-6);
    }

    #[test]
    fn psi_symmetry() {
        let s = InstanceParameters::homogeneous(
            NetworkLayout::star(4, 2).unwrap(),
            0.1,
            0.5,
            0.7,
            2,
            CostModel::linear(vec![1.0; 4]),
        )
        .unwrap();
        assert!((idle_score(&s, NodeId(4)) - 2.0 / 0.7).abs() < 1e-12);
        let t = IndexTables::new(&s);
        assert_eq!(t.idle_target(), NodeId(4));
        let c = complete_k1(0.1, 0.5, 0.3);
        let p: Vec<f64> = c.layout.nodes().map(|v| idle_score(&c, v)).collect();
        assert!(p.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-15));
    }

    #[test]
    fn psi_on_three_machine_lattice_lattice() {
        let layout = NetworkLayout::lattice(5, &[(1, 3), (2, 5), (3, 1)]).unwrap();
        let inst = InstanceParameters::new(
            layout,
            vec![0.1, 0.2, 0.3],
            vec![0.5; 3],
            2.0,
            vec![1; 3],
            CostModel::linear(vec![1.0; 3]),
        )
        .unwrap();
        // machine 1 at (1,3): distances 0, 3, 4
        let want = (0.1 * 0.0 + 0.2 * 3.0 + 0.3 * 4.0) / 0.6 / 2.0;
        assert!((idle_score(&inst, NodeId(0)) - want).abs() < 1e-12);
    }

    #[test]
    fn decisions_on_special_cases() {
        let s = star_a();
        let mut p = IndexPolicy::new(&s);
        // all pristine on a star: go to or stay at the centre
        assert_eq!(
            p.decide(&SystemState::new(NodeId(0), &[0, 0, 0])),
            Action(NodeId(3))
        );
        assert_eq!(
            p.decide(&SystemState::new(NodeId(3), &[0, 0, 0])),
            Action(NodeId(3))
        );

        let c = complete_k1(0.1, 0.4, 0.5);
        let mut q = IndexPolicy::new(&c);
        assert_eq!(
            q.decide(&SystemState::new(NodeId(0), &[1, 1, 1])),
            Action(NodeId(0))
        );
        assert_eq!(
            q.decide(&SystemState::new(NodeId(0), &[1, 1, 0])),
            Action(NodeId(0))
        );
        assert_eq!(
            q.decide(&SystemState::new(NodeId(0), &[0, 0, 1])),
            Action(NodeId(2))
        );
        assert_eq!(
            q.decide(&SystemState::new(NodeId(0), &[0, 1, 1])),
            Action(NodeId(1))
        );
    }

    #[test]
    fn modified_rule_targets() {
        let c = complete_k1(0.1, 0.4, 0.5);
        let failed = SystemState::failed_at(NodeId(2), &c);
        assert_eq!(modified_index_decision(&c, &failed), Action(NodeId(0)));
        let c2 = InstanceParameters::new(
            NetworkLayout::complete(3).unwrap(),
            vec![0.056; 3],
            vec![0.82, 0.12, 0.63],
            0.15,
            vec![1; 3],
            CostModel::linear(vec![1.0; 3]),
        )
        .unwrap();
        assert_eq!(
            modified_index_decision(&c2, &SystemState::failed_at(NodeId(1), &c2)),
            Action(NodeId(0))
        );
        // away from the all-failed state both rules agree
        let x = SystemState::new(NodeId(1), &[1, 0, 1]);
        assert_eq!(modified_index_decision(&c2, &x), index_decision(&c2, &x));
    }

    #[test]
    fn describe_mentions_every_other_machine() {
        let c = complete_k1(0.1, 0.4, 0.5);
        let text = IndexPolicy::new(&c).describe(&SystemState::new(NodeId(0), &[1, 0, 1]));
        assert!(text.contains("stay"));
        assert_eq!(
            text.lines()
                .filter(|l| l.trim_start().starts_with(['2', '3']))
                .count(),
            2
        );
    }

    proptest! {
        #[test]
        fn repair_statistics_match_linear_system(
            lambda in 0.01f64..1.0, mu in 0.05f64..1.0, cap in 1u32..8, kind in 0usize..3, c in 0.1f64..2.0
        ) {
            let inst = InstanceParameters::new(
                NetworkLayout::complete(2).unwrap(),
                vec![lambda, 0.3],
                vec![mu, 0.4],
                0.5,
                vec![cap, 1],
                CostModel::new(crate::instance::CostKind::ALL[kind], vec![c, 1.0]),
            ).unwrap();
            let st = repair_statistics(&inst, 0);
            let w: Vec<f64> = (1..=cap).map(|k| inst.reward_rate(0, k)).collect();
            let r = tridiagonal_oracle(lambda, mu, &w);
            let t = tridiagonal_oracle(lambda, mu, &vec![1.0; cap as usize]);
            // The oracle loses about (λ/μ)^K in relative accuracy.
            let tol = 1e-10f64.max(1e-14 * (lambda / mu).max(1.0).powi(cap as i32));
            for k in 0..=cap as usize {
                prop_assert!((st.expected_reward[k] - r[k]).abs() <= tol * r[k].abs().max(1.0));
                prop_assert!((st.expected_time[k] - t[k]).abs() <= tol * t[k].abs().max(1.0));
                if k > 0 {
                    prop_assert!(st.expected_time[k] > st.expected_time[k - 1]);
                    prop_assert!(st.expected_reward[k] > st.expected_reward[k - 1]);
                }
            }
        }

        #[test]
        fn arrival_law_identities(
            lambda in 0.01f64..2.0, tau in 0.01f64..5.0, hops in 1u32..9, cap in 1u32..6, x in 0u32..6
        ) {
            let x = x.min(cap);
            let law = arrival_law(lambda, tau, hops, x, cap);
            let total: f64 = law.pmf.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let mean = law.mean_travel();
            prop_assert!((mean - f64::from(hops) / tau).abs() < 1e-12 * (f64::from(hops) / tau).max(1.0));
            prop_assert!(law.pmf.iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn wait_below_move_at_cap(seed in 0u64..300) {
            let inst = generate_instance(seed, &GenerateOptions::default()).unwrap();
            let t = IndexTables::new(&inst);
            for v in inst.layout.nodes() {
                for j in 0..inst.machine_count() {
                    if v.0 != j {
                        let k = inst.cap[j];
                        prop_assert!(t.move_index(v, j, k) > t.wait_index(v, j, k));
                    }
                }
            }
        }

        #[test]
        fn decisions_are_scale_covariant(seed in 0u64..200, factor in 0.01f64..100.0, pick in 0u64..u64::MAX) {
            let inst = generate_instance(seed, &GenerateOptions::default()).unwrap();
            let mut scaled = inst.clone();
            scaled.cost.c.iter_mut().for_each(|c| *c *= factor);
            let space = StateSpace::new(&inst).unwrap();
            let p = IndexPolicy::modified(&inst);
            let q = IndexPolicy::modified(&scaled);
            for k in 0..50u64 {
                let x = space.decode(StateKey(pick.wrapping_add(k * 7919) % space.size()));
                prop_assert_eq!(p.action(&x), q.action(&x));
            }
        }

        #[test]
        fn decisions_are_available_actions(seed in 0u64..200, pick in 0u64..u64::MAX) {
            let inst = generate_instance(seed, &GenerateOptions::default()).unwrap();
            let space = StateSpace::new(&inst).unwrap();
            let p = IndexPolicy::new(&inst);
            for k in 0..50u64 {
                let x = space.decode(StateKey(pick.wrapping_add(k * 104_729) % space.size()));
                prop_assert!(crate::mdp::check_action(&inst, &x, p.action(&x)).is_ok());
            }
        }
    }
}
