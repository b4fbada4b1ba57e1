//! Average-cost policy evaluation by successive approximation, and
//! policy iteration.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::index_policy::IndexPolicy;
use crate::instance::InstanceParameters;
use crate::mdp::{
    available_actions, check_action, default_initial_state, is_repair, reward_unchecked, step_cost,
    Action, DecisionRule, StateKey, StateSpace, SystemState,
};

/// Sweeps run in parallel above this many states.
const PARALLEL_THRESHOLD: usize = 20_000;

#[derive(Clone, Debug)]
pub struct DpOptions {
    /// Stop when successive gain estimates differ by less than this everywhere.
    pub tol: f64,
    pub max_sweeps: u64,
    pub max_policy_iterations: u32,
    /// Largest state space the solver will enumerate.
    pub state_bound: u64,
    /// State at which gains are read and values pinned to zero.
    pub reference: Option<SystemState>,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            tol: 1e-9,
            max_sweeps: 10_000_000,
            max_policy_iterations: 1_000,
            state_bound: crate::mdp::DEFAULT_STATE_BOUND,
            reference: None,
        }
    }
}

impl DpOptions {
    fn reference_for(&self, inst: &InstanceParameters) -> SystemState {
        self.reference
            .clone()
            .unwrap_or_else(|| default_initial_state(inst))
    }
}

/// One action per state, indexed by state code.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPolicy {
    space: StateSpace,
    actions: Vec<Action>,
    name: String,
}

impl StationaryPolicy {
    /// Tabulates a rule that does not depend on history.
    pub fn from_rule(
        inst: &InstanceParameters,
        rule: &mut dyn DecisionRule,
        state_bound: u64,
    ) -> Result<Self> {
        let space = StateSpace::new(inst)?;
        space.check_bound(state_bound)?;
        rule.reset();
        let mut actions = Vec::with_capacity(space.size() as usize);
        for x in space.states() {
            let a = rule.decide(&x);
            check_action(inst, &x, a)?;
            actions.push(a);
        }
        Ok(StationaryPolicy {
            space,
            actions,
            name: rule.name(),
        })
    }

    pub fn from_actions(
        inst: &InstanceParameters,
        actions: Vec<Action>,
        name: &str,
    ) -> Result<Self> {
        let space = StateSpace::new(inst)?;
        if actions.len() as u64 != space.size() {
            return Err(Error::Other(format!(
                "{} actions given for {} states",
                actions.len(),
                space.size()
            )));
        }
        for (c, &a) in actions.iter().enumerate() {
            check_action(inst, &space.decode(StateKey(c as u64)), a)?;
        }
        Ok(StationaryPolicy {
            space,
            actions,
            name: name.to_string(),
        })
    }

    pub fn modified_index(inst: &InstanceParameters, state_bound: u64) -> Result<Self> {
        Self::from_rule(inst, &mut IndexPolicy::modified(inst), state_bound)
    }

    pub fn index(inst: &InstanceParameters, state_bound: u64) -> Result<Self> {
        Self::from_rule(inst, &mut IndexPolicy::new(inst), state_bound)
    }

    pub fn action(&self, x: &SystemState) -> Action {
        self.actions[self.space.encode(x).0 as usize]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn set_name(&mut self, name: &str) {
        self.name = name.to_string();
    }
}

impl DecisionRule for StationaryPolicy {
    fn decide(&mut self, x: &SystemState) -> Action {
        self.action(x)
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Sparse transition rows of a fixed policy, self-loops left implicit.
struct PolicyChain {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
    stay: Vec<f64>,
    cost: Vec<f64>,
}

fn action_transition(
    inst: &InstanceParameters,
    space: &StateSpace,
    x: &SystemState,
    code: u64,
    a: Action,
) -> Option<(u64, f64)> {
    let delta = inst.delta();
    let i = x.location;
    if a.0 != i {
        let shift = (a.0 .0 as i64 - i.0 as i64) * space.location_stride() as i64;
        Some(((code as i64 + shift) as u64, inst.tau * delta))
    } else if is_repair(inst, x, a) {
        Some((code - space.machine_stride(i.0), inst.mu[i.0] * delta))
    } else {
        None
    }
}

fn build_chain(
    inst: &InstanceParameters,
    policy: &StationaryPolicy,
    stage: impl Fn(&SystemState, Action) -> f64,
) -> PolicyChain {
    let space = &policy.space;
    let n = space.size() as usize;
    let delta = inst.delta();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::with_capacity(n * (inst.machine_count() + 1));
    let mut probs = Vec::with_capacity(targets.capacity());
    let mut stay = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(n);
    offsets.push(0);
    for (code, x) in space.states().enumerate() {
        let code = code as u64;
        let mut out = 0.0;
        for j in 0..inst.machine_count() {
            if u32::from(x.conditions[j]) < inst.cap[j] {
                let p = inst.lambda[j] * delta;
                targets.push((code + space.machine_stride(j)) as u32);
                probs.push(p);
                out += p;
            }
        }
        let a = policy.actions[code as usize];
        if let Some((t, p)) = action_transition(inst, space, &x, code, a) {
            targets.push(t as u32);
            probs.push(p);
            out += p;
        }
        offsets.push(targets.len());
        stay.push(1.0 - out);
        cost.push(stage(&x, a));
    }
    PolicyChain {
        offsets,
        targets,
        probs,
        stay,
        cost,
    }
}

/// Result of evaluating one stationary policy.
#[derive(Clone, Debug)]
pub struct PolicyEvaluation {
    /// Average cost from the reference state.
    pub gain: f64,
    /// Average cost from every state (equal for unichain policies).
    pub gains: Vec<f64>,
    /// Relative values, zero at the reference state.
    pub values: Vec<f64>,
    pub sweeps: u64,
}

fn evaluate_chain(
    chain: &PolicyChain,
    reference: usize,
    start: Option<&[f64]>,
    opts: &DpOptions,
) -> Result<PolicyEvaluation> {
    let n = chain.cost.len();
    let mut v: Vec<f64> = start.map_or_else(|| vec![0.0; n], |s| s.to_vec());
    let mut g = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut next_g = vec![0.0; n];
    let mut first = true;
    let mut sweeps = 0u64;
    loop {
        let update = |x: usize, vx: &mut f64, gx: &mut f64| {
            let mut acc = chain.cost[x] + chain.stay[x] * v[x];
            for k in chain.offsets[x]..chain.offsets[x + 1] {
                acc += chain.probs[k] * v[chain.targets[k] as usize];
            }
            *vx = acc;
            *gx = acc - v[x];
        };
        if n >= PARALLEL_THRESHOLD {
            next.par_iter_mut()
                .zip(next_g.par_iter_mut())
                .enumerate()
                .for_each(|(x, (vx, gx))| update(x, vx, gx));
        } else {
            for (x, (vx, gx)) in next.iter_mut().zip(next_g.iter_mut()).enumerate() {
                update(x, vx, gx);
            }
        }
        sweeps += 1;
        let err = if first {
            f64::INFINITY
        } else {
            next_g
                .iter()
                .zip(&g)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        first = false;
        let pin = next[reference];
        for (vx, nx) in v.iter_mut().zip(&next) {
            *vx = nx - pin;
        }
        std::mem::swap(&mut g, &mut next_g);
        if err < opts.tol {
            break;
        }
        if sweeps >= opts.max_sweeps {
            return Err(Error::NoConvergence { sweeps, error: err });
        }
    }
    Ok(PolicyEvaluation {
        gain: g[reference],
        gains: g,
        values: v,
        sweeps,
    })
}

/// Average cost and relative values of `policy`.
pub fn evaluate_policy(
    inst: &InstanceParameters,
    policy: &StationaryPolicy,
    opts: &DpOptions,
) -> Result<PolicyEvaluation> {
    let reference = opts.reference_for(inst);
    if !reference.is_valid(inst) {
        return Err(Error::Other(format!(
            "reference state {reference} is not valid"
        )));
    }
    let r = policy.space.encode(&reference).0 as usize;
    evaluate_chain(
        &build_chain(inst, policy, |x, _| step_cost(inst, x)),
        r,
        None,
        opts,
    )
}

/// Average reward of `policy` under the repair-reward formulation. The
/// `gain` field holds the reward rather than a cost.
pub fn evaluate_policy_reward(
    inst: &InstanceParameters,
    policy: &StationaryPolicy,
    opts: &DpOptions,
) -> Result<PolicyEvaluation> {
    let reference = opts.reference_for(inst);
    if !reference.is_valid(inst) {
        return Err(Error::Other(format!(
            "reference state {reference} is not valid"
        )));
    }
    let r = policy.space.encode(&reference).0 as usize;
    evaluate_chain(
        &build_chain(inst, policy, |x, a| reward_unchecked(inst, x, a)),
        r,
        None,
        opts,
    )
}

/// Long-run reward `Σ_j f_j(K_j) − g`.
pub fn reward_from_cost(inst: &InstanceParameters, gain: f64) -> f64 {
    inst.full_cost() - gain
}

/// Output of policy iteration.
#[derive(Clone, Debug)]
pub struct DpSolution {
    pub g_star: f64,
    /// Relative values of the optimal policy, zero at the reference.
    pub values: Vec<f64>,
    pub policy: StationaryPolicy,
    pub iterations: u32,
    /// Gain of each evaluated policy, base first.
    pub gain_history: Vec<f64>,
    pub reference: SystemState,
}

impl DpSolution {
    pub fn value(&self, x: &SystemState) -> f64 {
        self.values[self.policy.space.encode(x).0 as usize]
    }

    /// `u* = Σ_j f_j(K_j) − g*`.
    pub fn u_star(&self, inst: &InstanceParameters) -> f64 {
        reward_from_cost(inst, self.g_star)
    }

    /// JSON table of the optimal policy, one row per state, labels 1-based.
    pub fn policy_json(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            state: String,
            action: usize,
        }
        #[derive(Serialize)]
        struct Table {
            g_star: f64,
            reference: String,
            policy: Vec<Row>,
        }
        let t = Table {
            g_star: self.g_star,
            reference: self.reference.to_string(),
            policy: self
                .policy
                .space
                .states()
                .zip(&self.policy.actions)
                .map(|(x, a)| Row {
                    state: x.to_string(),
                    action: a.0.label(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&t).expect("table serializes")
    }
}

pub fn reward_optimum(inst: &InstanceParameters, sol: &DpSolution) -> f64 {
    sol.u_star(inst)
}

/// Relative tolerance for treating two Q-values as equal.
const Q_TIE: f64 = 1e-12;

/// Greedy action at `x` under values `v`. The incumbent is kept when it
/// is within the tie tolerance of the minimum; otherwise the smallest
/// node id among the minimizers wins.
fn greedy_action(
    inst: &InstanceParameters,
    space: &StateSpace,
    v: &[f64],
    x: &SystemState,
    code: u64,
    incumbent: Action,
) -> Action {
    let vx = v[code as usize];
    let q = |a: Action| match action_transition(inst, space, x, code, a) {
        Some((t, p)) => p * (v[t as usize] - vx),
        None => 0.0,
    };
    let actions = available_actions(inst, x);
    let scores: Vec<f64> = actions.iter().map(|&a| q(a)).collect();
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let eps = Q_TIE * (1.0 + vx.abs());
    let q_inc = q(incumbent);
    if q_inc <= best + eps {
        return incumbent;
    }
    actions
        .iter()
        .zip(&scores)
        .find(|(_, &s)| s <= best + eps)
        .map(|(&a, _)| a)
        .expect("non-empty action set")
}

/// Policy iteration from `base` (the modified index policy when `None`).
pub fn policy_iteration(
    inst: &InstanceParameters,
    base: Option<&StationaryPolicy>,
    opts: &DpOptions,
) -> Result<DpSolution> {
    let mut policy = match base {
        Some(p) => p.clone(),
        None => StationaryPolicy::modified_index(inst, opts.state_bound)?,
    };
    policy.space.check_bound(opts.state_bound)?;
    let reference = opts.reference_for(inst);
    if !reference.is_valid(inst) {
        return Err(Error::Other(format!(
            "reference state {reference} is not valid"
        )));
    }
    let r = policy.space.encode(&reference).0 as usize;
    let space = policy.space.clone();
    let mut eval = evaluate_chain(
        &build_chain(inst, &policy, |x, _| step_cost(inst, x)),
        r,
        None,
        opts,
    )?;
    let mut history = vec![eval.gain];
    let mut iterations = 0;
    loop {
        let improved: Vec<Action> = if space.size() as usize >= PARALLEL_THRESHOLD {
            (0..space.size())
                .into_par_iter()
                .map(|c| {
                    let x = space.decode(StateKey(c));
                    greedy_action(
                        inst,
                        &space,
                        &eval.values,
                        &x,
                        c,
                        policy.actions[c as usize],
                    )
                })
                .collect()
        } else {
            (0..space.size())
                .map(|c| {
                    let x = space.decode(StateKey(c));
                    greedy_action(
                        inst,
                        &space,
                        &eval.values,
                        &x,
                        c,
                        policy.actions[c as usize],
                    )
                })
                .collect()
        };
        if improved == policy.actions {
            break;
        }
        iterations += 1;
        if iterations > opts.max_policy_iterations {
            return Err(Error::Other(format!(
                "policy iteration did not settle after {} improvement steps",
                opts.max_policy_iterations
            )));
        }
        policy.actions = improved;
        eval = evaluate_chain(
            &build_chain(inst, &policy, |x, _| step_cost(inst, x)),
            r,
            Some(&eval.values),
            opts,
        )?;
        history.push(eval.gain);
    }
    policy.set_name("optimal");
    Ok(DpSolution {
        g_star: eval.gain,
        values: eval.values,
        policy,
        iterations,
        gain_history: history,
        reference,
    })
}

/// `max_x |g + v(x) − min_a Q(x, a)|` for a solution.
pub fn optimality_residual(inst: &InstanceParameters, sol: &DpSolution) -> f64 {
    let space = &sol.policy.space;
    let v = &sol.values;
    let delta = inst.delta();
    space
        .states()
        .enumerate()
        .map(|(c, x)| {
            let code = c as u64;
            let mut base = step_cost(inst, &x) + v[c];
            for j in 0..inst.machine_count() {
                if u32::from(x.conditions[j]) < inst.cap[j] {
                    let t = (code + space.machine_stride(j)) as usize;
                    base += inst.lambda[j] * delta * (v[t] - v[c]);
                }
            }
            let best = available_actions(inst, &x)
                .into_iter()
                .map(|a| match action_transition(inst, space, &x, code, a) {
                    Some((t, p)) => p * (v[t as usize] - v[c]),
                    None => 0.0,
                })
                .fold(f64::INFINITY, f64::min);
            (sol.g_star + v[c] - (base + best)).abs()
        })
        .fold(0.0, f64::max)
}
