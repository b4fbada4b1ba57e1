//! The uniformized discrete-time chain: states, actions, transition
//! kernel, cost and reward, and a step simulator driven by one uniform
//! per step.
//!
//! Event layout inside `[0, 1)` for a uniform `u` at state `x` under
//! action `a`:
//!
//! ```text
//! [0, λ_1Δ) [.., +λ_2Δ) … [.., +λ_mΔ) [.., +μ_iΔ or +τΔ) [.., 1)
//!  machine 1   machine 2     machine m   repair / switch   self-loop
//! ```
//!
//! Each machine keeps its slot even when it is at its cap (the slot then
//! maps to the self-loop), so two runs fed the same uniforms see a
//! degradation of machine `j` at the same step whenever `j` is degradable
//! in both.

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::instance::InstanceParameters;
use crate::network::NodeId;

/// Degradation levels, one entry per machine.
pub type Conditions = SmallVec<[u8; 8]>;

/// Default bound on the number of states that may be enumerated.
pub const DEFAULT_STATE_BOUND: u64 = 5_000_000;

/// Repairer location plus machine conditions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemState {
    pub location: NodeId,
    pub conditions: Conditions,
}

impl SystemState {
    pub fn new(location: NodeId, conditions: &[u8]) -> Self {
        SystemState {
            location,
            conditions: Conditions::from_slice(conditions),
        }
    }

    /// `(location, (0, …, 0))`.
    pub fn pristine_at(location: NodeId, machines: usize) -> Self {
        SystemState {
            location,
            conditions: SmallVec::from_elem(0, machines),
        }
    }

    /// All machines at their caps.
    pub fn failed_at(location: NodeId, inst: &InstanceParameters) -> Self {
        SystemState {
            location,
            conditions: inst.cap.iter().map(|&k| k as u8).collect(),
        }
    }

    pub fn all_pristine(&self) -> bool {
        self.conditions.iter().all(|&c| c == 0)
    }

    pub fn all_failed(&self, inst: &InstanceParameters) -> bool {
        self.conditions
            .iter()
            .zip(&inst.cap)
            .all(|(&c, &k)| u32::from(c) == k)
    }

    /// Same state with the repairer moved to `node`.
    pub fn moved_to(&self, node: NodeId) -> Self {
        SystemState {
            location: node,
            conditions: self.conditions.clone(),
        }
    }

    /// Same state with machine `j` one level better. Caller checks `x_j ≥ 1`.
    pub fn repaired(&self, j: usize) -> Self {
        let mut s = self.clone();
        s.conditions[j] -= 1;
        s
    }

    pub fn degraded(&self, j: usize) -> Self {
        let mut s = self.clone();
        s.conditions[j] += 1;
        s
    }

    pub fn is_valid(&self, inst: &InstanceParameters) -> bool {
        self.location.0 < inst.node_count()
            && self.conditions.len() == inst.machine_count()
            && self
                .conditions
                .iter()
                .zip(&inst.cap)
                .all(|(&c, &k)| u32::from(c) <= k)
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},(", self.location)?;
        for (k, c) in self.conditions.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "))")
    }
}

/// Node the repairer attempts to occupy next; equal to the current
/// location when it stays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action(pub NodeId);

impl Action {
    pub fn target(self) -> NodeId {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransitionEvent {
    Degrade(usize),
    Repair,
    Switch(NodeId),
    SelfLoop,
}

/// Actions available at `x`, sorted by node id.
pub fn available_actions(inst: &InstanceParameters, x: &SystemState) -> Vec<Action> {
    let i = x.location;
    let nbrs = inst.layout.neighbors(i);
    let mut out = Vec::with_capacity(nbrs.len() + 1);
    let mut placed = false;
    for &k in nbrs {
        if !placed && i < k {
            out.push(Action(i));
            placed = true;
        }
        out.push(Action(k));
    }
    if !placed {
        out.push(Action(i));
    }
    out
}

pub fn check_action(inst: &InstanceParameters, x: &SystemState, a: Action) -> Result<()> {
    if a.0 == x.location || inst.layout.are_adjacent(x.location, a.0) {
        Ok(())
    } else {
        Err(Error::InvalidAction {
            state: x.to_string(),
            action: a.0.label(),
        })
    }
}

/// Whether `a` at `x` is a repair step (stay at a damaged machine).
pub fn is_repair(inst: &InstanceParameters, x: &SystemState, a: Action) -> bool {
    let i = x.location;
    a.0 == i && inst.layout.is_machine(i) && x.conditions[i.0] >= 1
}

/// Non-zero events and their probabilities; the self-loop is always last
/// and takes the residual mass.
pub fn step_probabilities(
    inst: &InstanceParameters,
    x: &SystemState,
    a: Action,
) -> Result<Vec<(TransitionEvent, f64)>> {
    check_action(inst, x, a)?;
    let delta = inst.delta();
    let mut out = Vec::with_capacity(inst.machine_count() + 2);
    let mut total = 0.0;
    for j in 0..inst.machine_count() {
        if u32::from(x.conditions[j]) < inst.cap[j] {
            let p = inst.lambda[j] * delta;
            total += p;
            out.push((TransitionEvent::Degrade(j), p));
        }
    }
    if a.0 != x.location {
        let p = inst.tau * delta;
        total += p;
        out.push((TransitionEvent::Switch(a.0), p));
    } else if is_repair(inst, x, a) {
        let p = inst.mu[x.location.0] * delta;
        total += p;
        out.push((TransitionEvent::Repair, p));
    }
    out.push((TransitionEvent::SelfLoop, (1.0 - total).max(0.0)));
    Ok(out)
}

/// Maps a uniform to an event using the fixed slot layout. `a` must be
/// available at `x`.
pub fn draw_event(
    inst: &InstanceParameters,
    x: &SystemState,
    a: Action,
    u: f64,
) -> TransitionEvent {
    let delta = inst.delta();
    let mut acc = 0.0;
    for j in 0..inst.machine_count() {
        acc += inst.lambda[j] * delta;
        if u < acc {
            return if u32::from(x.conditions[j]) < inst.cap[j] {
                TransitionEvent::Degrade(j)
            } else {
                TransitionEvent::SelfLoop
            };
        }
    }
    if a.0 != x.location {
        if u < acc + inst.tau * delta {
            return TransitionEvent::Switch(a.0);
        }
    } else if is_repair(inst, x, a) && u < acc + inst.mu[x.location.0] * delta {
        return TransitionEvent::Repair;
    }
    TransitionEvent::SelfLoop
}

pub fn apply_event(x: &SystemState, event: TransitionEvent) -> SystemState {
    match event {
        TransitionEvent::Degrade(j) => x.degraded(j),
        TransitionEvent::Repair => x.repaired(x.location.0),
        TransitionEvent::Switch(n) => x.moved_to(n),
        TransitionEvent::SelfLoop => x.clone(),
    }
}

/// In-place variant of [`apply_event`].
pub fn apply_event_mut(x: &mut SystemState, event: TransitionEvent) {
    match event {
        TransitionEvent::Degrade(j) => x.conditions[j] += 1,
        TransitionEvent::Repair => x.conditions[x.location.0] -= 1,
        TransitionEvent::Switch(n) => x.location = n,
        TransitionEvent::SelfLoop => {}
    }
}

/// `c(x) = Σ_i f_i(x_i)`.
pub fn step_cost(inst: &InstanceParameters, x: &SystemState) -> f64 {
    x.conditions
        .iter()
        .enumerate()
        .map(|(j, &c)| inst.f(j, u32::from(c)))
        .sum()
}

/// `r(x, a)`: the reward rate of the repaired machine when repairing, else 0.
pub fn step_reward(inst: &InstanceParameters, x: &SystemState, a: Action) -> Result<f64> {
    check_action(inst, x, a)?;
    Ok(reward_unchecked(inst, x, a))
}

pub(crate) fn reward_unchecked(inst: &InstanceParameters, x: &SystemState, a: Action) -> f64 {
    if is_repair(inst, x, a) {
        inst.reward_rate(x.location.0, u32::from(x.conditions[x.location.0]))
    } else {
        0.0
    }
}

/// Opaque integer code of a state under a [`StateSpace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey(pub u64);

/// Mixed-radix coding of the state space.
///
/// Codes run location-major, then machine 1 down to machine m, so code
/// order is the lexicographic state order and `code == index` in
/// [`StateSpace::states`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    caps: Vec<u32>,
    strides: Vec<u64>,
    loc_stride: u64,
    node_count: usize,
    size: u64,
}

impl StateSpace {
    pub fn new(inst: &InstanceParameters) -> Result<Self> {
        let m = inst.machine_count();
        let mut strides = vec![0u64; m];
        let mut acc: u128 = 1;
        for j in (0..m).rev() {
            strides[j] = acc as u64;
            acc *= u128::from(inst.cap[j]) + 1;
        }
        let size = acc * inst.node_count() as u128;
        if size > u128::from(u64::MAX) {
            return Err(Error::Capacity {
                size,
                bound: u64::MAX,
            });
        }
        Ok(StateSpace {
            caps: inst.cap.clone(),
            strides,
            loc_stride: acc as u64,
            node_count: inst.node_count(),
            size: size as u64,
        })
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn machine_stride(&self, j: usize) -> u64 {
        self.strides[j]
    }

    pub fn location_stride(&self) -> u64 {
        self.loc_stride
    }

    pub fn encode(&self, x: &SystemState) -> StateKey {
        let mut code = x.location.0 as u64 * self.loc_stride;
        for (j, &c) in x.conditions.iter().enumerate() {
            code += u64::from(c) * self.strides[j];
        }
        StateKey(code)
    }

    pub fn decode(&self, key: StateKey) -> SystemState {
        let loc = key.0 / self.loc_stride;
        let mut rest = key.0 % self.loc_stride;
        let mut conditions = Conditions::with_capacity(self.strides.len());
        for &s in &self.strides {
            conditions.push((rest / s) as u8);
            rest %= s;
        }
        SystemState {
            location: NodeId(loc as usize),
            conditions,
        }
    }

    pub fn check_bound(&self, bound: u64) -> Result<()> {
        if self.size > bound {
            Err(Error::Capacity {
                size: u128::from(self.size),
                bound,
            })
        } else {
            Ok(())
        }
    }

    /// All states in code order.
    pub fn states(&self) -> impl Iterator<Item = SystemState> + '_ {
        (0..self.size).map(|c| self.decode(StateKey(c)))
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn caps(&self) -> &[u32] {
        &self.caps
    }
}

/// Every state, location-major, conditions in lexicographic order.
pub fn enumerate_states(inst: &InstanceParameters, bound: u64) -> Result<Vec<SystemState>> {
    let size = inst.state_count();
    if size > u128::from(bound) {
        return Err(Error::Capacity { size, bound });
    }
    let space = StateSpace::new(inst)?;
    Ok(space.states().collect())
}

/// A rule that picks an action at each visited state. Rules may keep
/// internal state (a polling tour position, for instance).
pub trait DecisionRule {
    fn decide(&mut self, x: &SystemState) -> Action;

    /// Clears internal state before a fresh run.
    fn reset(&mut self) {}

    fn name(&self) -> String {
        "policy".to_string()
    }
}

/// Never moves and never repairs anything it is not standing on.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassivePolicy;

impl DecisionRule for PassivePolicy {
    fn decide(&mut self, x: &SystemState) -> Action {
        Action(x.location)
    }

    fn name(&self) -> String {
        "passive".to_string()
    }
}

/// Outcome of one simulated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub policy: String,
    pub steps: u64,
    pub total_cost: f64,
    pub total_reward: f64,
    /// `g`: total cost per step.
    pub avg_cost: f64,
    /// `u`: total reward per step.
    pub avg_reward: f64,
    /// Steps started at each node.
    pub node_visits: Vec<u64>,
    /// Steps at which the rollout rule fell back to the base action.
    pub safe_actions: Option<u64>,
    /// Fraction of fallback steps in each quarter of the run.
    pub safe_quartiles: Option<[f64; 4]>,
}

impl SimulationReport {
    pub fn safe_fraction(&self) -> Option<f64> {
        self.safe_actions.map(|s| s as f64 / self.steps as f64)
    }
}

/// Running totals shared by the simulators.
#[derive(Clone, Debug)]
pub struct RunAccumulator {
    steps: u64,
    cost: f64,
    reward: f64,
    visits: Vec<u64>,
}

impl RunAccumulator {
    pub fn new(node_count: usize) -> Self {
        RunAccumulator {
            steps: 0,
            cost: 0.0,
            reward: 0.0,
            visits: vec![0; node_count],
        }
    }

    pub fn record(&mut self, inst: &InstanceParameters, x: &SystemState, a: Action) {
        self.steps += 1;
        self.cost += step_cost(inst, x);
        self.reward += reward_unchecked(inst, x, a);
        self.visits[x.location.0] += 1;
    }

    pub fn finish(self, policy: String) -> SimulationReport {
        let n = self.steps.max(1) as f64;
        SimulationReport {
            policy,
            steps: self.steps,
            total_cost: self.cost,
            total_reward: self.reward,
            avg_cost: self.cost / n,
            avg_reward: self.reward / n,
            node_visits: self.visits,
            safe_actions: None,
            safe_quartiles: None,
        }
    }
}

/// Runs `steps` steps from `x0`, one uniform from `crn` per step.
pub fn simulate(
    inst: &InstanceParameters,
    policy: &mut dyn DecisionRule,
    x0: &SystemState,
    steps: u64,
    crn: &[f64],
) -> Result<SimulationReport> {
    if steps == 0 {
        return Err(Error::Other("a simulation needs at least one step".into()));
    }
    if (crn.len() as u64) < steps {
        return Err(Error::ShortCrn {
            len: crn.len(),
            needed: steps,
        });
    }
    if !x0.is_valid(inst) {
        return Err(Error::Other(format!(
            "initial state {x0} is not valid for this instance"
        )));
    }
    policy.reset();
    let mut acc = RunAccumulator::new(inst.node_count());
    let mut x = x0.clone();
    for &u in &crn[..steps as usize] {
        let a = policy.decide(&x);
        check_action(inst, &x, a)?;
        acc.record(inst, &x, a);
        let ev = draw_event(inst, &x, a, u);
        apply_event_mut(&mut x, ev);
    }
    Ok(acc.finish(policy.name()))
}

/// Default initial state `(1, (0, …, 0))`.
pub fn default_initial_state(inst: &InstanceParameters) -> SystemState {
    SystemState::pristine_at(NodeId(0), inst.machine_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::CostModel;
    use crate::network::NetworkLayout;
    use crate::rng::crn_list;
    use proptest::prelude::*;

    fn ex1() -> InstanceParameters {
        InstanceParameters::new(
            NetworkLayout::complete(2).unwrap(),
            vec![0.4, 0.4],
            vec![1.1, 1.0],
            100.0,
            vec![2, 2],
            CostModel::linear(vec![1.0, 1.0]),
        )
        .unwrap()
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

    fn prob_of(list: &[(TransitionEvent, f64)], ev: TransitionEvent) -> f64 {
        list.iter().filter(|(e, _)| *e == ev).map(|(_, p)| p).sum()
    }

    #[test]
    fn two_machine_stay_probabilities() {
        let e = ex1();
        let x = SystemState::new(NodeId(0), &[1, 0]);
        let p = step_probabilities(&e, &x, Action(NodeId(0))).unwrap();
        assert!((prob_of(&p, TransitionEvent::Repair) - 1.1 / 100.8).abs() < 1e-15);
        assert!((prob_of(&p, TransitionEvent::Degrade(0)) - 0.4 / 100.8).abs() < 1e-15);
        assert!((prob_of(&p, TransitionEvent::Degrade(1)) - 0.4 / 100.8).abs() < 1e-15);
        let total: f64 = p.iter().map(|(_, q)| q).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn failed_idle_at_stage_is_self_loop() {
        let s = star_a();
        let x = SystemState::failed_at(NodeId(3), &s);
        let p = step_probabilities(&s, &x, Action(NodeId(3))).unwrap();
        assert_eq!(p, vec![(TransitionEvent::SelfLoop, 1.0)]);
    }

    #[test]
    fn switch_probability_ignores_conditions() {
        let s = star_a();
        for c in [[0u8, 0, 0], [1, 0, 1], [1, 1, 1]] {
            let x = SystemState::new(NodeId(0), &c);
            let p = step_probabilities(&s, &x, Action(NodeId(3))).unwrap();
            assert!(
                (prob_of(&p, TransitionEvent::Switch(NodeId(3))) - 0.024 * s.delta()).abs() < 1e-15
            );
        }
        let x = SystemState::new(NodeId(0), &[0, 0, 0]);
        assert!(matches!(
            step_probabilities(&s, &x, Action(NodeId(1))),
            Err(Error::InvalidAction { .. })
        ));
    }

    #[test]
    fn costs_and_rewards() {
        let e = ex1();
        assert_eq!(step_cost(&e, &SystemState::new(NodeId(0), &[0, 0])), 0.0);
        assert_eq!(step_cost(&e, &SystemState::new(NodeId(0), &[2, 1])), 3.0);
        let x = SystemState::new(NodeId(0), &[2, 1]);
        assert!((step_reward(&e, &x, Action(NodeId(0))).unwrap() - 2.75).abs() < 1e-12);
        assert_eq!(step_reward(&e, &x, Action(NodeId(1))).unwrap(), 0.0);
        let s = star_a();
        let y = SystemState::new(NodeId(0), &[1, 0, 0]);
        assert!((step_reward(&s, &y, Action(NodeId(0))).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn state_counts_and_order() {
        let e = ex1();
        let all = enumerate_states(&e, DEFAULT_STATE_BOUND).unwrap();
        assert_eq!(all.len(), 18);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(all[0], SystemState::new(NodeId(0), &[0, 0]));
        assert_eq!(all[17], SystemState::new(NodeId(1), &[2, 2]));
        assert_eq!(
            enumerate_states(&star_a(), DEFAULT_STATE_BOUND)
                .unwrap()
                .len(),
            32
        );
        match enumerate_states(&e, 10) {
            Err(Error::Capacity { size, .. }) => assert_eq!(size, 18),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn display_uses_labels() {
        assert_eq!(
            SystemState::new(NodeId(0), &[2, 1]).to_string(),
            "(1,(2,1))"
        );
    }

    #[test]
    fn passive_from_failed_costs_full() {
        let s = star_a();
        let crn = crn_list(1, 5_000);
        let x0 = SystemState::failed_at(NodeId(3), &s);
        let r = simulate(&s, &mut PassivePolicy, &x0, 5_000, &crn).unwrap();
        assert_eq!(r.avg_cost, s.full_cost());
        assert_eq!(r.avg_reward, 0.0);
        assert_eq!(r.node_visits[3], 5_000);
    }

    #[test]
    fn simulate_preconditions() {
        let e = ex1();
        let x0 = default_initial_state(&e);
        assert!(simulate(&e, &mut PassivePolicy, &x0, 0, &[0.5]).is_err());
        assert!(matches!(
            simulate(&e, &mut PassivePolicy, &x0, 3, &[0.5]),
            Err(Error::ShortCrn { len: 1, needed: 3 })
        ));
    }

    /// Two rules that never repair have the same degradable set at every
    /// step, so shared uniforms give them identical degradation sequences.
    #[test]
    fn crn_aligns_degradations() {
        let s = star_a();
        let x0 = SystemState::pristine_at(NodeId(3), 3);
        let crn = crn_list(9, 20_000);
        let trace = |walk: bool| {
            let mut x = x0.clone();
            let mut out = Vec::new();
            for (t, &u) in crn.iter().enumerate() {
                let a = match (walk, x.location) {
                    (false, here) => Action(here),
                    (true, NodeId(3)) => Action(NodeId(0)),
                    (true, _) => Action(NodeId(3)),
                };
                let ev = draw_event(&s, &x, a, u);
                if let TransitionEvent::Degrade(j) = ev {
                    out.push((t, j));
                }
                apply_event_mut(&mut x, ev);
            }
            out
        };
        let idle = trace(false);
        assert_eq!(idle.len(), 3);
        assert_eq!(idle, trace(true));
    }

    proptest! {
        #[test]
        fn kernel_rows_are_distributions(seed in 0u64..300, pick in 0usize..1000) {
            let inst = crate::instance::generate_instance(seed, &Default::default()).unwrap();
            let space = StateSpace::new(&inst).unwrap();
            let x = space.decode(StateKey(pick as u64 % space.size()));
            let degr: Vec<(TransitionEvent, f64)> = step_probabilities(&inst, &x, Action(x.location)).unwrap()
                .into_iter().filter(|(e, _)| matches!(e, TransitionEvent::Degrade(_))).collect();
            for a in available_actions(&inst, &x) {
                let p = step_probabilities(&inst, &x, a).unwrap();
                let total: f64 = p.iter().map(|(_, q)| q).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(p.iter().all(|(_, q)| (0.0..=1.0).contains(q)));
                let d: Vec<_> = p.iter().copied().filter(|(e, _)| matches!(e, TransitionEvent::Degrade(_))).collect();
                prop_assert_eq!(&d, &degr);
                // the uniform slot map reproduces the same probabilities
                let mut mass = std::collections::HashMap::new();
                let n = 20_000;
                for k in 0..n {
                    let u = (k as f64 + 0.5) / n as f64;
                    *mass.entry(format!("{:?}", draw_event(&inst, &x, a, u))).or_insert(0.0) += 1.0 / n as f64;
                }
                for (e, q) in &p {
                    let got = mass.get(&format!("{e:?}")).copied().unwrap_or(0.0);
                    // the self-loop may be split over several slots
                    prop_assert!((got - q).abs() < 2.0 * (inst.machine_count() + 2) as f64 / n as f64);
                }
            }
        }

        #[test]
        fn encode_decode_round_trip(seed in 0u64..200, code in 0u64..u64::MAX) {
            let inst = crate::instance::generate_instance(seed, &Default::default()).unwrap();
            let space = StateSpace::new(&inst).unwrap();
            let key = StateKey(code % space.size());
            let x = space.decode(key);
            prop_assert!(x.is_valid(&inst));
            prop_assert_eq!(space.encode(&x), key);
        }
    }
}
