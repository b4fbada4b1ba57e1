//! Rollout-based online policy improvement.
//!
//! An offline phase estimates relative values of the base policy at a
//! growing set of exemplar states by running variable-length trajectories
//! that stop on reaching a stored state. The online phase then picks, at
//! each visited state, an action that beats every alternative for all
//! values inside the confidence intervals of the neighbouring states, and
//! falls back to the base action otherwise. Between real transitions it
//! keeps refining estimates near the likely next state.
//!
//! Estimates are bootstrapped: an observation uses the current estimate
//! at the stopping state, even if that entry was created moments earlier
//! and still holds zeros.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dp::StationaryPolicy;
use crate::error::{Error, Result};
use crate::index_policy::IndexPolicy;
use crate::instance::InstanceParameters;
use crate::mdp::{
    apply_event, apply_event_mut, available_actions, default_initial_state, draw_event, is_repair,
    step_cost, Action, RunAccumulator, SimulationReport, StateKey, StateSpace, SystemState,
};
use crate::network::NodeId;
use crate::rng::{stream_rng, StreamRng, STREAM_NESTED, STREAM_OFFLINE, STREAM_ONLINE};

/// Normal 97.5% quantile used for the intervals.
pub const Z_975: f64 = 1.96;

/// Deterministic stationary rule that drives trajectories.
pub trait BasePolicy: Sync {
    fn base_action(&self, x: &SystemState) -> Action;
}

impl BasePolicy for IndexPolicy<'_> {
    fn base_action(&self, x: &SystemState) -> Action {
        self.action(x)
    }
}

impl BasePolicy for StationaryPolicy {
    fn base_action(&self, x: &SystemState) -> Action {
        self.action(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    /// Time limits apply alongside the counts.
    WallClock,
    /// Counts only; runs are bit-reproducible.
    StepCount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpiBudget {
    /// Steps per machine when picking core states.
    pub r1: u64,
    /// Steps of the run that estimates the base gain.
    pub r2: u64,
    /// Trajectories per start state in each offline stage.
    pub r_off: u64,
    /// Time limit per start state in each offline stage (wall-clock mode).
    pub tau_max_secs: f64,
    /// Real transitions in the online phase.
    pub r_on: u64,
    /// Time spent refining estimates between real transitions (wall-clock mode).
    pub delta_secs: f64,
    /// Hypothetical next states sampled per decision (step-count mode).
    pub nested_per_decision: u64,
    /// A trajectory longer than this is an error.
    pub trajectory_step_cap: u64,
    pub mode: BudgetMode,
}

impl OpiBudget {
    /// Scaled-down budgets for routine runs.
    pub fn desk() -> Self {
        OpiBudget {
            r1: 10_000,
            r2: 100_000,
            r_off: 2_000,
            tau_max_secs: 100.0,
            r_on: 50_000,
            delta_secs: 0.01,
            nested_per_decision: 2,
            trajectory_step_cap: 10_000_000,
            mode: BudgetMode::StepCount,
        }
    }

    /// Full-size budgets with wall-clock limits.
    pub fn paper_scale() -> Self {
        OpiBudget {
            r1: 10_000,
            r2: 500_000,
            r_off: 100_000,
            tau_max_secs: 100.0,
            r_on: 500_000,
            delta_secs: 0.01,
            nested_per_decision: 2,
            trajectory_step_cap: 100_000_000,
            mode: BudgetMode::WallClock,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("r1", self.r1),
            ("r2", self.r2),
            ("r_off", self.r_off),
            ("r_on", self.r_on),
            ("trajectory_step_cap", self.trajectory_step_cap),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Budget(format!("{name} must be positive")));
            }
        }
        if self.mode == BudgetMode::WallClock && !(self.tau_max_secs > 0.0 && self.delta_secs > 0.0)
        {
            return Err(Error::Budget("time limits must be positive".into()));
        }
        Ok(())
    }
}

impl Default for OpiBudget {
    fn default() -> Self {
        Self::desk()
    }
}

/// Statistics kept for one state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub h: f64,
    /// Weighted mean of squared observations.
    pub ss: f64,
    /// Sum of squared implicit weights.
    pub w: f64,
    pub s: u64,
}

impl Entry {
    /// Entry of the reference state before any observation.
    pub const REFERENCE: Entry = Entry {
        h: 0.0,
        ss: 0.0,
        w: 1.0,
        s: 1,
    };

    pub fn learning_rate(s: u64) -> f64 {
        10.0 / (10.0 + s as f64 - 1.0)
    }

    /// Folds in one observation.
    pub fn observe(&mut self, obs: f64) {
        self.s += 1;
        let a = Self::learning_rate(self.s);
        self.h = (1.0 - a) * self.h + a * obs;
        self.ss = (1.0 - a) * self.ss + a * obs * obs;
        self.w = (1.0 - a) * (1.0 - a) * self.w + a * a;
    }

    /// The same statistics with every observation shifted by `c`.
    pub fn shifted(&self, c: f64) -> Entry {
        Entry {
            h: self.h + c,
            ss: self.ss + 2.0 * c * self.h + c * c,
            w: self.w,
            s: self.s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }
}

/// 95% interval for the value of a state. Unbounded when fewer than two
/// observations exist, when all weight sits on one observation, or when
/// the variance estimate is negative beyond rounding.
pub fn confidence_interval(entry: Option<&Entry>) -> Interval {
    let Some(e) = entry else {
        return Interval::UNBOUNDED;
    };
    if e.s < 2 || e.w >= 1.0 - 1e-12 {
        return Interval::UNBOUNDED;
    }
    let mut var = e.ss - e.h * e.h;
    if var < 0.0 {
        if var < -1e-12 * e.ss.abs().max(1.0) {
            return Interval::UNBOUNDED;
        }
        var = 0.0;
    }
    let half = Z_975 * (var / (1.0 - e.w) * e.w).sqrt();
    Interval {
        lo: e.h - half,
        hi: e.h + half,
    }
}

/// Value estimates keyed by state code.
#[derive(Clone, Debug)]
pub struct ValueStore {
    space: StateSpace,
    entries: HashMap<StateKey, Entry>,
    reference: StateKey,
    g_base: f64,
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    g_base: f64,
    reference: u64,
    entries: Vec<StoreRow>,
}

#[derive(Serialize, Deserialize)]
struct StoreRow {
    code: u64,
    state: String,
    h: f64,
    ss: f64,
    w: f64,
    s: u64,
}

impl ValueStore {
    /// Store holding only the reference entry.
    pub fn new(space: StateSpace, reference: &SystemState, g_base: f64) -> Self {
        let reference = space.encode(reference);
        let mut entries = HashMap::new();
        entries.insert(reference, Entry::REFERENCE);
        ValueStore {
            space,
            entries,
            reference,
            g_base,
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn g_base(&self) -> f64 {
        self.g_base
    }

    pub fn reference(&self) -> SystemState {
        self.space.decode(self.reference)
    }

    pub fn reference_key(&self) -> StateKey {
        self.reference
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, x: &SystemState) -> bool {
        self.entries.contains_key(&self.space.encode(x))
    }

    pub fn get(&self, x: &SystemState) -> Option<&Entry> {
        self.entries.get(&self.space.encode(x))
    }

    pub fn get_key(&self, k: StateKey) -> Option<&Entry> {
        self.entries.get(&k)
    }

    pub fn interval(&self, x: &SystemState) -> Interval {
        confidence_interval(self.get(x))
    }

    /// Entries sorted by state code.
    pub fn sorted_entries(&self) -> Vec<(SystemState, Entry)> {
        let mut keys: Vec<_> = self.entries.keys().copied().collect();
        keys.sort_unstable();
        keys.into_iter()
            .map(|k| (self.space.decode(k), self.entries[&k]))
            .collect()
    }

    /// Adds `c` to every estimate.
    pub fn shift_all(&mut self, c: f64) {
        for e in self.entries.values_mut() {
            *e = e.shifted(c);
        }
    }

    pub fn to_json(&self) -> String {
        let mut keys: Vec<_> = self.entries.keys().copied().collect();
        keys.sort_unstable();
        let file = StoreFile {
            g_base: self.g_base,
            reference: self.reference.0,
            entries: keys
                .into_iter()
                .map(|k| {
                    let e = self.entries[&k];
                    StoreRow {
                        code: k.0,
                        state: self.space.decode(k).to_string(),
                        h: e.h,
                        ss: e.ss,
                        w: e.w,
                        s: e.s,
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("store serializes")
    }

    pub fn from_json(inst: &InstanceParameters, text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: StoreFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })?;
        let space = StateSpace::new(inst)?;
        let check = |code: u64, path: String| -> Result<()> {
            if code >= space.size() {
                return Err(Error::Schema {
                    path,
                    msg: format!("state code {code} out of range"),
                });
            }
            Ok(())
        };
        check(file.reference, "reference".into())?;
        let mut entries = HashMap::with_capacity(file.entries.len());
        for (n, row) in file.entries.iter().enumerate() {
            check(row.code, format!("entries[{n}].code"))?;
            let decoded = space.decode(StateKey(row.code)).to_string();
            if decoded != row.state {
                return Err(Error::Schema {
                    path: format!("entries[{n}].state"),
                    msg: format!("code {} is {decoded}, not {}", row.code, row.state),
                });
            }
            entries.insert(
                StateKey(row.code),
                Entry {
                    h: row.h,
                    ss: row.ss,
                    w: row.w,
                    s: row.s,
                },
            );
        }
        let reference = StateKey(file.reference);
        if !entries.contains_key(&reference) {
            return Err(Error::Schema {
                path: "entries".into(),
                msg: "reference state has no entry".into(),
            });
        }
        Ok(ValueStore {
            space,
            entries,
            reference,
            g_base: file.g_base,
        })
    }
}

/// Outcome of one trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub stopping_state: SystemState,
    pub total_cost: f64,
    pub total_steps: u64,
    /// First `p` distinct states with the cost and step count on arrival.
    pub visited_prefix: Vec<(SystemState, f64, u64)>,
}

/// Runs the base policy from `z` until it enters a stored state other
/// than `z` (or the reference), then updates the first `p` distinct
/// visited states. The stopping test follows each transition, so at
/// least one step is taken.
#[allow(clippy::too_many_arguments)]
pub fn sample_trajectory(
    inst: &InstanceParameters,
    base: &dyn BasePolicy,
    z: &SystemState,
    store: &mut ValueStore,
    p: usize,
    rng: &mut StreamRng,
    step_cap: u64,
) -> Result<TrajectoryResult> {
    let space = store.space.clone();
    let z_key = space.encode(z);
    let u0 = store.reference;
    if !store.entries.contains_key(&u0) {
        return Err(Error::Other("value store has no reference entry".into()));
    }
    let mut cost = 0.0;
    let mut steps = 0u64;
    let mut cur = z.clone();
    let mut visited = vec![(z.clone(), 0.0, 0u64)];
    let mut seen: HashSet<StateKey> = HashSet::from([z_key]);
    let stop = loop {
        cost += step_cost(inst, &cur);
        steps += 1;
        let a = base.base_action(&cur);
        let ev = draw_event(inst, &cur, a, rng.gen::<f64>());
        apply_event_mut(&mut cur, ev);
        let k = space.encode(&cur);
        if (k != z_key || k == u0) && store.entries.contains_key(&k) {
            break cur;
        }
        if visited.len() < p && seen.insert(k) {
            visited.push((cur.clone(), cost, steps));
        }
        if steps >= step_cap {
            return Err(Error::TrajectoryCap(step_cap));
        }
    };
    let u_key = space.encode(&stop);
    visited.truncate(p);
    for (x, cx, tx) in &visited {
        let h_u = store.entries[&u_key].h;
        let obs = (cost - cx) + h_u - store.g_base * (steps - tx) as f64;
        store
            .entries
            .entry(space.encode(x))
            .or_default()
            .observe(obs);
    }
    Ok(TrajectoryResult {
        stopping_state: stop,
        total_cost: cost,
        total_steps: steps,
        visited_prefix: visited,
    })
}

/// States whose values decide the action at `x`: `x` itself, the
/// repairer moved to each neighbour, and `x` with the current machine
/// repaired once.
pub fn neighborhood(inst: &InstanceParameters, x: &SystemState) -> Vec<SystemState> {
    let i = x.location;
    let mut out = vec![x.clone()];
    out.extend(inst.layout.neighbors(i).iter().map(|&j| x.moved_to(j)));
    if inst.layout.is_machine(i) && x.conditions[i.0] >= 1 {
        out.push(x.repaired(i.0));
    }
    out
}

/// Output of the preparatory phase.
#[derive(Clone, Debug)]
pub struct Preparation {
    pub g_base: f64,
    pub reference: SystemState,
    /// One state per machine, the reference first.
    pub z_core: Vec<SystemState>,
    pub z: Vec<SystemState>,
    /// Machines never visited in their core-state run, for which the
    /// pristine state at the machine was used instead.
    pub fallback_machines: Vec<usize>,
}

/// Picks core states, estimates the base gain and builds the start set.
pub fn offline_preparatory(
    inst: &InstanceParameters,
    base: &dyn BasePolicy,
    budget: &OpiBudget,
    rng: &mut StreamRng,
) -> Result<Preparation> {
    budget.validate()?;
    let space = StateSpace::new(inst)?;
    let m = inst.machine_count();
    let mut z_core = Vec::with_capacity(m);
    let mut fallback_machines = Vec::new();
    for i in 0..m {
        let mut x = SystemState::pristine_at(NodeId(i), m);
        let mut counts: HashMap<StateKey, u64> = HashMap::new();
        for _ in 0..budget.r1 {
            let a = base.base_action(&x);
            let ev = draw_event(inst, &x, a, rng.gen::<f64>());
            apply_event_mut(&mut x, ev);
            if x.location == NodeId(i) {
                *counts.entry(space.encode(&x)).or_default() += 1;
            }
        }
        let best = counts
            .iter()
            .map(|(&k, &n)| (n, std::cmp::Reverse(k)))
            .max();
        match best {
            Some((_, std::cmp::Reverse(k))) => z_core.push(space.decode(k)),
            None => {
                fallback_machines.push(i);
                z_core.push(SystemState::pristine_at(NodeId(i), m));
            }
        }
    }
    let mut x = default_initial_state(inst);
    let mut cost = 0.0;
    let mut visits = vec![0u64; m];
    for _ in 0..budget.r2 {
        cost += step_cost(inst, &x);
        let a = base.base_action(&x);
        let ev = draw_event(inst, &x, a, rng.gen::<f64>());
        apply_event_mut(&mut x, ev);
        if inst.layout.is_machine(x.location) {
            visits[x.location.0] += 1;
        }
    }
    let g_base = cost / budget.r2 as f64;
    let j_star = (0..m).fold(0, |b, j| if visits[j] > visits[b] { j } else { b });
    let reference = z_core[j_star].clone();
    let zc = z_core.remove(j_star);
    z_core.insert(0, zc);
    let mut z = Vec::new();
    let mut seen = HashSet::new();
    let mut add = |s: SystemState, z: &mut Vec<SystemState>| {
        if seen.insert(space.encode(&s)) {
            z.push(s);
        }
    };
    for zi in &z_core {
        let i = zi.location;
        add(zi.clone(), &mut z);
        for &j in inst.layout.neighbors(i) {
            add(zi.moved_to(j), &mut z);
        }
        if zi.conditions[i.0] >= 1 {
            add(zi.repaired(i.0), &mut z);
        }
    }
    Ok(Preparation {
        g_base,
        reference,
        z_core,
        z,
        fallback_machines,
    })
}

fn within_budget(budget: &OpiBudget, count: u64, started: Instant) -> bool {
    count < budget.r_off
        && (budget.mode == BudgetMode::StepCount
            || started.elapsed().as_secs_f64() < budget.tau_max_secs)
}

/// Fills a fresh store: restarts from every start state with `p = 1`,
/// then chains trajectories from every core state with `p = 5`.
pub fn offline_main(
    inst: &InstanceParameters,
    base: &dyn BasePolicy,
    prep: &Preparation,
    budget: &OpiBudget,
    rng: &mut StreamRng,
) -> Result<ValueStore> {
    budget.validate()?;
    let mut store = ValueStore::new(StateSpace::new(inst)?, &prep.reference, prep.g_base);
    for z in &prep.z {
        let started = Instant::now();
        let mut r = 0;
        while within_budget(budget, r, started) {
            sample_trajectory(
                inst,
                base,
                z,
                &mut store,
                1,
                rng,
                budget.trajectory_step_cap,
            )?;
            r += 1;
        }
    }
    for z0 in &prep.z_core {
        let started = Instant::now();
        let mut z = z0.clone();
        let mut r = 0;
        while within_budget(budget, r, started) {
            z = sample_trajectory(
                inst,
                base,
                &z,
                &mut store,
                5,
                rng,
                budget.trajectory_step_cap,
            )?
            .stopping_state;
            r += 1;
        }
    }
    Ok(store)
}

/// Preparatory and main phases on the offline stream of `seed`.
pub fn offline(
    inst: &InstanceParameters,
    base: &dyn BasePolicy,
    budget: &OpiBudget,
    seed: u64,
) -> Result<(Preparation, ValueStore)> {
    let mut rng = stream_rng(seed, STREAM_OFFLINE);
    let prep = offline_preparatory(inst, base, budget, &mut rng)?;
    let store = offline_main(inst, base, &prep, budget, &mut rng)?;
    Ok((prep, store))
}

/// Linear form in state values: `Σ coef · h(state)`.
type Delta = Vec<(StateKey, f64)>;

/// Value change of `a` at `x` relative to idling, as a linear form.
fn action_delta(
    inst: &InstanceParameters,
    space: &StateSpace,
    x: &SystemState,
    a: Action,
) -> Delta {
    let d = inst.delta();
    let kx = space.encode(x);
    if a.0 != x.location {
        let c = inst.tau * d;
        vec![(space.encode(&x.moved_to(a.0)), c), (kx, -c)]
    } else if is_repair(inst, x, a) {
        let c = inst.mu[x.location.0] * d;
        vec![(space.encode(&x.repaired(x.location.0)), c), (kx, -c)]
    } else {
        Vec::new()
    }
}

/// Largest value of `d1 − d2` over the interval box; infinite when a
/// variable with non-zero coefficient has an unbounded interval.
fn max_difference(store: &ValueStore, d1: &Delta, d2: &Delta) -> f64 {
    let mut coefs: Vec<(StateKey, f64)> = Vec::with_capacity(d1.len() + d2.len());
    for &(k, c) in d1 {
        coefs.push((k, c));
    }
    for &(k, c) in d2 {
        match coefs.iter_mut().find(|(k2, _)| *k2 == k) {
            Some(e) => e.1 -= c,
            None => coefs.push((k, -c)),
        }
    }
    let mut total = 0.0;
    for (k, c) in coefs {
        if c == 0.0 {
            continue;
        }
        let iv = confidence_interval(store.get_key(k));
        let v = if c > 0.0 { iv.hi } else { iv.lo };
        if !v.is_finite() {
            return f64::INFINITY;
        }
        total += c * v;
    }
    total
}

/// True when `a1` is better than `a2` for every value in the intervals.
pub fn beats(
    inst: &InstanceParameters,
    store: &ValueStore,
    x: &SystemState,
    a1: Action,
    a2: Action,
) -> bool {
    let space = &store.space;
    max_difference(
        store,
        &action_delta(inst, space, x, a1),
        &action_delta(inst, space, x, a2),
    ) < 0.0
}

/// Action that beats every alternative, or the base action with the
/// fallback flag set.
pub fn improving_action(
    inst: &InstanceParameters,
    store: &ValueStore,
    x: &SystemState,
    base: &dyn BasePolicy,
) -> (Action, bool) {
    let space = &store.space;
    let actions = available_actions(inst, x);
    let deltas: Vec<Delta> = actions
        .iter()
        .map(|&a| action_delta(inst, space, x, a))
        .collect();
    for (n, d1) in deltas.iter().enumerate() {
        if deltas
            .iter()
            .enumerate()
            .all(|(k, d2)| k == n || max_difference(store, d1, d2) < 0.0)
        {
            return (actions[n], false);
        }
    }
    (base.base_action(x), true)
}

/// Source of the uniforms driving real transitions online.
pub enum OnlineStream<'a> {
    Crn(&'a [f64]),
    Seeded(u64),
}

/// Online phase: `budget.r_on` real transitions from `x0`, refining the
/// store between them. Nested simulations draw from the nested stream of
/// `seed`.
pub fn online_run(
    inst: &InstanceParameters,
    base: &dyn BasePolicy,
    store: &mut ValueStore,
    x0: &SystemState,
    budget: &OpiBudget,
    stream: OnlineStream<'_>,
    seed: u64,
) -> Result<SimulationReport> {
    budget.validate()?;
    if !x0.is_valid(inst) {
        return Err(Error::Other(format!(
            "initial state {x0} is not valid for this instance"
        )));
    }
    let steps = budget.r_on;
    let mut real_rng = None;
    let crn = match stream {
        OnlineStream::Crn(c) => {
            if (c.len() as u64) < steps {
                return Err(Error::ShortCrn {
                    len: c.len(),
                    needed: steps,
                });
            }
            Some(c)
        }
        OnlineStream::Seeded(s) => {
            real_rng = Some(stream_rng(s, STREAM_ONLINE));
            None
        }
    };
    let mut nested_rng = stream_rng(seed, STREAM_NESTED);
    let mut acc = RunAccumulator::new(inst.node_count());
    let mut safe = 0u64;
    let mut quarter_safe = [0u64; 4];
    let mut quarter_len = [0u64; 4];
    let mut x = x0.clone();
    for r in 0..steps {
        let (a, fallback) = improving_action(inst, store, &x, base);
        let q = ((r * 4) / steps) as usize;
        quarter_len[q] += 1;
        if fallback {
            safe += 1;
            quarter_safe[q] += 1;
        }
        acc.record(inst, &x, a);
        refine(inst, base, store, &x, a, budget, &mut nested_rng)?;
        let u = match crn {
            Some(c) => c[r as usize],
            None => real_rng.as_mut().expect("seeded stream").gen::<f64>(),
        };
        let ev = draw_event(inst, &x, a, u);
        apply_event_mut(&mut x, ev);
    }
    let mut report = acc.finish("opi".to_string());
    report.safe_actions = Some(safe);
    let mut quartiles = [0.0; 4];
    for q in 0..4 {
        if quarter_len[q] > 0 {
            quartiles[q] = quarter_safe[q] as f64 / quarter_len[q] as f64;
        }
    }
    report.safe_quartiles = Some(quartiles);
    Ok(report)
}

/// Nested simulations between two real transitions.
fn refine(
    inst: &InstanceParameters,
    base: &dyn BasePolicy,
    store: &mut ValueStore,
    x: &SystemState,
    a: Action,
    budget: &OpiBudget,
    rng: &mut StreamRng,
) -> Result<()> {
    match budget.mode {
        BudgetMode::StepCount => {
            for _ in 0..budget.nested_per_decision {
                let next = apply_event(x, draw_event(inst, x, a, rng.gen::<f64>()));
                for y in neighborhood(inst, &next) {
                    sample_trajectory(inst, base, &y, store, 1, rng, budget.trajectory_step_cap)?;
                }
            }
        }
        BudgetMode::WallClock => {
            let started = Instant::now();
            'outer: while started.elapsed().as_secs_f64() < budget.delta_secs {
                let next = apply_event(x, draw_event(inst, x, a, rng.gen::<f64>()));
                for y in neighborhood(inst, &next) {
                    sample_trajectory(inst, base, &y, store, 1, rng, budget.trajectory_step_cap)?;
                    if started.elapsed().as_secs_f64() >= budget.delta_secs {
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Result of a full offline and online run.
#[derive(Clone, Debug)]
pub struct OpiOutcome {
    pub report: SimulationReport,
    pub preparation: Preparation,
    pub store: ValueStore,
}

/// Offline phase then online phase with the modified index policy as
/// base, starting online from `(1, (0, …, 0))`.
pub fn run_opi(
    inst: &InstanceParameters,
    budget: &OpiBudget,
    stream: OnlineStream<'_>,
    seed: u64,
) -> Result<OpiOutcome> {
    let base = IndexPolicy::modified(inst);
    let (preparation, mut store) = offline(inst, &base, budget, seed)?;
    let report = online_run(
        inst,
        &base,
        &mut store,
        &default_initial_state(inst),
        budget,
        stream,
        seed,
    )?;
    Ok(OpiOutcome {
        report,
        preparation,
        store,
    })
}
