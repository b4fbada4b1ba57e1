//! Cyclic exhaustive-service tours over machine subsets.
//!
//! The repairer visits the machines of a subset in a fixed cyclic order
//! along shortest paths and repairs each one until it is pristine before
//! moving on. Machines outside the subset are never served.

use std::fmt::Write as _;

use itertools::Itertools;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance::InstanceParameters;
use crate::mdp::{simulate, Action, DecisionRule, SimulationReport, SystemState};
use crate::network::{NetworkLayout, NodeId};

/// Largest subset for which tours are found by enumeration.
pub const MAX_TOUR_MACHINES: usize = 8;

/// Default limit on the machine count for the polling benchmark.
pub const DEFAULT_POLLING_MACHINES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PollingTour {
    /// Machine indices in visiting order, starting at the smallest.
    pub sequence: Vec<usize>,
    pub cycle_length: u32,
}

impl PollingTour {
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn label(&self) -> String {
        let ids: Vec<String> = self.sequence.iter().map(|&j| (j + 1).to_string()).collect();
        format!("{{{}}}", ids.join(","))
    }
}

pub fn cycle_length(layout: &NetworkLayout, sequence: &[usize]) -> u32 {
    if sequence.len() < 2 {
        return 0;
    }
    sequence
        .iter()
        .zip(sequence.iter().cycle().skip(1))
        .map(|(&a, &b)| layout.dist(NodeId(a), NodeId(b)))
        .sum()
}

/// Shortest cyclic tour through `subset`. Among equally short tours the
/// lexicographically smallest sequence starting at the smallest machine
/// is returned.
pub fn best_tour(layout: &NetworkLayout, subset: &[usize]) -> Result<PollingTour> {
    let mut machines = subset.to_vec();
    machines.sort_unstable();
    machines.dedup();
    if machines.is_empty() {
        return Err(Error::Other(
            "a polling tour needs at least one machine".into(),
        ));
    }
    if machines.len() > MAX_TOUR_MACHINES {
        return Err(Error::Other(format!(
            "tours are enumerated for at most {MAX_TOUR_MACHINES} machines, got {}",
            machines.len()
        )));
    }
    if let Some(&j) = machines.iter().find(|&&j| j >= layout.machine_count()) {
        return Err(Error::Other(format!(
            "machine {} is not in the layout",
            j + 1
        )));
    }
    let first = machines[0];
    let rest = &machines[1..];
    let mut best: Option<PollingTour> = None;
    for perm in rest.iter().copied().permutations(rest.len()) {
        let mut seq = Vec::with_capacity(machines.len());
        seq.push(first);
        seq.extend(perm);
        let len = cycle_length(layout, &seq);
        if best.as_ref().is_none_or(|b| len < b.cycle_length) {
            best = Some(PollingTour {
                sequence: seq,
                cycle_length: len,
            });
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// Polling heuristic for one tour. The position in the tour is internal
/// state, so the rule is not stationary on the system state alone.
#[derive(Clone, Debug)]
pub struct PollingPolicy<'a> {
    inst: &'a InstanceParameters,
    tour: PollingTour,
    progress: usize,
}

impl<'a> PollingPolicy<'a> {
    pub fn new(inst: &'a InstanceParameters, tour: PollingTour) -> Self {
        PollingPolicy {
            inst,
            tour,
            progress: 0,
        }
    }

    pub fn tour(&self) -> &PollingTour {
        &self.tour
    }

    /// Index into the tour of the machine currently targeted.
    pub fn progress(&self) -> usize {
        self.progress
    }
}

/// One polling decision. Advances `progress` when the target has just
/// been left pristine.
pub fn polling_decision(
    inst: &InstanceParameters,
    tour: &PollingTour,
    x: &SystemState,
    progress: &mut usize,
) -> Action {
    let layout = &inst.layout;
    let mut target = NodeId(tour.sequence[*progress]);
    if x.location == target {
        if x.conditions[target.0] > 0 {
            return Action(target);
        }
        *progress = (*progress + 1) % tour.len();
        target = NodeId(tour.sequence[*progress]);
    }
    Action(layout.step_toward(x.location, target))
}

impl DecisionRule for PollingPolicy<'_> {
    fn decide(&mut self, x: &SystemState) -> Action {
        polling_decision(self.inst, &self.tour, x, &mut self.progress)
    }

    fn reset(&mut self) {
        self.progress = 0;
    }

    fn name(&self) -> String {
        format!("polling{}", self.tour.label())
    }
}

/// Averages of one subset's run.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetResult {
    pub tour: PollingTour,
    pub avg_cost: f64,
    pub avg_reward: f64,
}

#[derive(Clone, Debug)]
pub struct PollingReport {
    /// Report of the subset with the smallest average cost.
    pub best: SimulationReport,
    pub best_tour: PollingTour,
    /// All subsets in bitmask order.
    pub subsets: Vec<SubsetResult>,
}

impl PollingReport {
    pub fn subsets_csv(&self) -> String {
        let mut out = String::from("subset,cycle_length,avg_cost,avg_reward\n");
        for s in &self.subsets {
            let _ = writeln!(
                out,
                "\"{}\",{},{},{}",
                s.tour.label(),
                s.tour.cycle_length,
                s.avg_cost,
                s.avg_reward
            );
        }
        out
    }
}

/// Simulates the polling heuristic for every non-empty machine subset on
/// the same random numbers and keeps the cheapest. Refuses more than
/// `max_machines` machines.
pub fn best_polling_report(
    inst: &InstanceParameters,
    x0: &SystemState,
    steps: u64,
    crn: &[f64],
    max_machines: usize,
) -> Result<PollingReport> {
    let m = inst.machine_count();
    if m > max_machines {
        return Err(Error::Other(format!(
            "polling benchmark limited to {max_machines} machines, instance has {m}"
        )));
    }
    if m >= usize::BITS as usize {
        return Err(Error::Other(
            "too many machines for subset enumeration".into(),
        ));
    }
    let runs: Vec<(PollingTour, SimulationReport)> = (1u64..(1 << m))
        .into_par_iter()
        .map(|mask| {
            let subset: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
            let tour = best_tour(&inst.layout, &subset)?;
            let mut rule = PollingPolicy::new(inst, tour.clone());
            let report = simulate(inst, &mut rule, x0, steps, crn)?;
            Ok((tour, report))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, (_, r)) in runs.iter().enumerate() {
        if r.avg_cost < runs[best].1.avg_cost {
            best = k;
        }
    }
    let subsets = runs
        .iter()
        .map(|(t, r)| SubsetResult {
            tour: t.clone(),
            avg_cost: r.avg_cost,
            avg_reward: r.avg_reward,
        })
        .collect();
    let (best_tour, mut best_report) = runs.into_iter().nth(best).expect("non-empty");
    best_report.policy = "polling".to_string();
    Ok(PollingReport {
        best: best_report,
        best_tour,
        subsets,
    })
}
