//! Benchmark batches: every heuristic on the same random numbers per
//! instance, optimal values where the state space is small enough, and
//! bucketed summary tables.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{policy_iteration, DpOptions};
use crate::error::{Error, Result};
use crate::index_policy::IndexPolicy;
use crate::instance::{generate_instance, CostKind, GenerateOptions, InstanceParameters};
use crate::mdp::{default_initial_state, simulate};
use crate::opi::{run_opi, OnlineStream, OpiBudget};
use crate::polling::{best_polling_report, DEFAULT_POLLING_MACHINES};
use crate::rng::crn_list;

pub const DESK_STEPS: u64 = 50_000;
pub const PAPER_STEPS: u64 = 500_000;
pub const DEFAULT_DP_STATE_LIMIT: u64 = 200_000;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub generate: GenerateOptions,
    /// Machine count per seed, overriding `generate.machines` when set.
    pub machines_for_seed: Option<fn(u64) -> usize>,
    /// Simulated steps per heuristic.
    pub steps: u64,
    /// Online steps are always `steps`; the other fields apply as given.
    pub budget: OpiBudget,
    pub run_opi: bool,
    pub run_polling: bool,
    pub polling_max_machines: usize,
    /// Largest state space solved exactly.
    pub dp_state_limit: u64,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn desk(seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            seeds,
            generate: GenerateOptions::default(),
            machines_for_seed: None,
            steps: DESK_STEPS,
            budget: OpiBudget::desk(),
            run_opi: true,
            run_polling: true,
            polling_max_machines: DEFAULT_POLLING_MACHINES,
            dp_state_limit: DEFAULT_DP_STATE_LIMIT,
            threads: None,
        }
    }

    pub fn paper_scale(seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            steps: PAPER_STEPS,
            budget: OpiBudget::paper_scale(),
            ..Self::desk(seeds)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Other("steps must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Other("no instance seeds given".into()));
        }
        Ok(())
    }

    fn options_for(&self, seed: u64) -> GenerateOptions {
        let mut o = self.generate;
        if let Some(f) = self.machines_for_seed {
            o.machines = Some(f(seed));
        }
        o
    }
}

/// One instance's results. Costs and rewards are per-step averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuboptimalityRecord {
    pub seed: u64,
    pub machines: usize,
    pub cap: u32,
    pub cost_kind: CostKind,
    pub rho: f64,
    pub eta: f64,
    pub states: u64,
    pub full_cost: f64,
    pub g_index: f64,
    pub u_index: f64,
    pub g_opi: Option<f64>,
    pub u_opi: Option<f64>,
    pub safe_fraction: Option<f64>,
    pub g_polling: Option<f64>,
    pub u_polling: Option<f64>,
    pub g_star: Option<f64>,
    pub u_star: Option<f64>,
}

impl SuboptimalityRecord {
    /// `100 (g − g*) / g*`.
    pub fn cost_suboptimality(&self, g: Option<f64>) -> Option<f64> {
        let (g, gs) = (g?, self.g_star?);
        Some(100.0 * (g - gs) / gs)
    }

    /// `100 (u* − u) / u*`.
    pub fn reward_suboptimality(&self, u: Option<f64>) -> Option<f64> {
        let (u, us) = (u?, self.u_star?);
        Some(100.0 * (us - u) / us)
    }

    /// `100 (g_IND − g_OPI) / g_IND`.
    pub fn opi_cost_improvement(&self) -> Option<f64> {
        Some(100.0 * (self.g_index - self.g_opi?) / self.g_index)
    }

    /// `100 (u_OPI − u_IND) / u_IND`.
    pub fn opi_reward_improvement(&self) -> Option<f64> {
        Some(100.0 * (self.u_opi? - self.u_index) / self.u_index)
    }

    /// `|g + u − Σ f(K)|` of the index run; zero in the long run.
    pub fn identity_gap(&self) -> f64 {
        (self.g_index + self.u_index - self.full_cost).abs()
    }
}

/// Per-instance failure kept alongside successful records.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub records: Vec<SuboptimalityRecord>,
    pub failures: Vec<InstanceFailure>,
}

pub fn run_instance(
    inst: &InstanceParameters,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<SuboptimalityRecord> {
    let steps = config.steps;
    let crn = crn_list(seed, steps as usize);
    let x0 = default_initial_state(inst);
    let ind = simulate(inst, &mut IndexPolicy::new(inst), &x0, steps, &crn)?;
    let (g_opi, u_opi, safe_fraction) = if config.run_opi {
        let budget = OpiBudget {
            r_on: steps,
            ..config.budget.clone()
        };
        let out = run_opi(inst, &budget, OnlineStream::Crn(&crn), seed)?;
        (
            Some(out.report.avg_cost),
            Some(out.report.avg_reward),
            out.report.safe_fraction(),
        )
    } else {
        (None, None, None)
    };
    let m = inst.machine_count();
    let (g_polling, u_polling) = if config.run_polling && m <= config.polling_max_machines {
        let r = best_polling_report(inst, &x0, steps, &crn, config.polling_max_machines)?;
        // Best reward over all subsets.
        let u = r
            .subsets
            .iter()
            .map(|s| s.avg_reward)
            .fold(f64::NEG_INFINITY, f64::max);
        (Some(r.best.avg_cost), Some(u))
    } else {
        (None, None)
    };
    let states = inst.state_count();
    let (g_star, u_star) = if states <= u128::from(config.dp_state_limit) {
        let opts = DpOptions {
            state_bound: config.dp_state_limit,
            ..Default::default()
        };
        let sol = policy_iteration(inst, None, &opts)?;
        (Some(sol.g_star), Some(sol.u_star(inst)))
    } else {
        (None, None)
    };
    Ok(SuboptimalityRecord {
        seed,
        machines: m,
        cap: inst.cap[0],
        cost_kind: inst.cost.kind,
        rho: inst.nominal_rho.unwrap_or_else(|| inst.rho()),
        eta: inst.eta(),
        states: u64::try_from(states).unwrap_or(u64::MAX),
        full_cost: inst.full_cost(),
        g_index: ind.avg_cost,
        u_index: ind.avg_reward,
        g_opi,
        u_opi,
        safe_fraction,
        g_polling,
        u_polling,
        g_star,
        u_star,
    })
}

/// Runs every seed of the batch. Failures are collected, not fatal.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<BenchmarkOutcome> {
    config.validate()?;
    let work = || -> Vec<(u64, Result<SuboptimalityRecord>)> {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let r = generate_instance(seed, &config.options_for(seed))
                    .and_then(|inst| run_instance(&inst, seed, config));
                (seed, r)
            })
            .collect()
    };
    let results = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Other(e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(InstanceFailure {
                seed,
                message: e.to_string(),
            }),
        }
    }
    Ok(BenchmarkOutcome { records, failures })
}

pub fn records_to_csv(records: &[SuboptimalityRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| Error::Other(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Other(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Other(e.to_string()))
}

pub fn records_from_csv(text: &str) -> Result<Vec<SuboptimalityRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .enumerate()
        .map(|(n, row)| {
            row.map_err(|e| Error::Schema {
                path: format!("row {}", n + 1),
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Ratio-sum bins.
pub const RHO_BINS: [(f64, f64); 7] = [
    (0.1, 0.3),
    (0.3, 0.5),
    (0.5, 0.7),
    (0.7, 0.9),
    (0.9, 1.1),
    (1.1, 1.3),
    (1.3, 1.5),
];

/// Switching-to-degradation ratio bins.
pub const ETA_BINS: [(f64, f64); 6] = [
    (0.1, 0.4),
    (0.4, 0.7),
    (0.7, 1.0),
    (1.0, 4.0),
    (4.0, 7.0),
    (7.0, 10.0),
];

/// Index of the half-open bin holding `v`; the last bin is closed.
pub fn bin_index(bins: &[(f64, f64)], v: f64) -> Option<usize> {
    let last = bins.len() - 1;
    bins.iter()
        .position(|&(lo, hi)| v >= lo && v < hi)
        .or_else(|| (v == bins[last].1).then_some(last))
}

fn bin_label(bins: &[(f64, f64)], v: f64) -> String {
    match bin_index(bins, v) {
        Some(k) => format!("[{},{})", bins[k].0, bins[k].1),
        None => "other".to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum BucketKind {
    All,
    Machines,
    Rho,
    Eta,
    CostKind,
    Cap,
}

impl BucketKind {
    pub const ALL: [BucketKind; 6] = [
        BucketKind::All,
        BucketKind::Machines,
        BucketKind::Rho,
        BucketKind::Eta,
        BucketKind::CostKind,
        BucketKind::Cap,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BucketKind::All => "all",
            BucketKind::Machines => "m",
            BucketKind::Rho => "rho",
            BucketKind::Eta => "eta",
            BucketKind::CostKind => "cost",
            BucketKind::Cap => "K",
        }
    }

    /// Sort key and printed label of a record's bucket.
    fn key(self, r: &SuboptimalityRecord) -> (usize, String) {
        match self {
            BucketKind::All => (0, "all".into()),
            BucketKind::Machines => (r.machines, r.machines.to_string()),
            BucketKind::Rho => (
                bin_index(&RHO_BINS, r.rho).unwrap_or(usize::MAX),
                bin_label(&RHO_BINS, r.rho),
            ),
            BucketKind::Eta => (
                bin_index(&ETA_BINS, r.eta).unwrap_or(usize::MAX),
                bin_label(&ETA_BINS, r.eta),
            ),
            BucketKind::CostKind => (
                CostKind::ALL
                    .iter()
                    .position(|&k| k == r.cost_kind)
                    .unwrap_or(usize::MAX),
                r.cost_kind.label().to_string(),
            ),
            BucketKind::Cap => (r.cap as usize, r.cap.to_string()),
        }
    }
}

/// Quantities summarized per bucket.
pub const METRICS: [&str; 10] = [
    "cost_subopt_index",
    "cost_subopt_opi",
    "cost_subopt_polling",
    "reward_subopt_index",
    "reward_subopt_opi",
    "reward_subopt_polling",
    "opi_cost_improvement",
    "opi_reward_improvement",
    "safe_fraction",
    "identity_gap",
];

fn metric(r: &SuboptimalityRecord, name: &str) -> Option<f64> {
    match name {
        "cost_subopt_index" => r.cost_suboptimality(Some(r.g_index)),
        "cost_subopt_opi" => r.cost_suboptimality(r.g_opi),
        "cost_subopt_polling" => r.cost_suboptimality(r.g_polling),
        "reward_subopt_index" => r.reward_suboptimality(Some(r.u_index)),
        "reward_subopt_opi" => r.reward_suboptimality(r.u_opi),
        "reward_subopt_polling" => r.reward_suboptimality(r.u_polling),
        "opi_cost_improvement" => r.opi_cost_improvement(),
        "opi_reward_improvement" => r.opi_reward_improvement(),
        "safe_fraction" => r.safe_fraction.map(|s| 100.0 * s),
        "identity_gap" => Some(r.identity_gap()),
        _ => None,
    }
}

/// Mean with a 95% normal half-width; the half-width is zero for one value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub half_width: f64,
}

pub fn mean_ci(values: &[f64]) -> Option<MeanCi> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half_width = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * (var / n as f64).sqrt()
    };
    Some(MeanCi {
        n,
        mean,
        half_width,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub kind: BucketKind,
    pub bucket: String,
    pub metric: &'static str,
    pub ci: MeanCi,
}

/// Summary rows in a fixed order: bucket kind, bucket, metric.
pub fn summarize(records: &[SuboptimalityRecord]) -> Result<Vec<TableRow>> {
    if records.is_empty() {
        return Err(Error::Other("no records to summarize".into()));
    }
    let mut rows = Vec::new();
    for kind in BucketKind::ALL {
        let mut keys: Vec<(usize, String)> = records.iter().map(|r| kind.key(r)).collect();
        keys.sort();
        keys.dedup();
        for key in keys {
            let members: Vec<&SuboptimalityRecord> =
                records.iter().filter(|r| kind.key(r) == key).collect();
            for name in METRICS {
                let vals: Vec<f64> = members.iter().filter_map(|r| metric(r, name)).collect();
                if let Some(ci) = mean_ci(&vals) {
                    rows.push(TableRow {
                        kind,
                        bucket: key.1.clone(),
                        metric: name,
                        ci,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn summary_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("bucket_kind,bucket,metric,n,mean,half_width\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},\"{}\",{},{},{},{}",
            r.kind.label(),
            r.bucket,
            r.metric,
            r.ci.n,
            r.ci.mean,
            r.ci.half_width
        );
    }
    out
}

/// Plain-text tables, one per bucket kind, metrics as columns.
pub fn summary_text(rows: &[TableRow]) -> String {
    let shown = [
        ("cost_subopt_index", "IND %"),
        ("cost_subopt_opi", "OPI %"),
        ("cost_subopt_polling", "POL %"),
        ("reward_subopt_index", "IND r%"),
        ("reward_subopt_opi", "OPI r%"),
        ("reward_subopt_polling", "POL r%"),
        ("opi_cost_improvement", "OPI vs IND %"),
        ("safe_fraction", "safe %"),
    ];
    let mut out = String::new();
    for kind in BucketKind::ALL {
        let mine: Vec<&TableRow> = rows.iter().filter(|r| r.kind == kind).collect();
        if mine.is_empty() {
            continue;
        }
        let _ = write!(out, "\nby {}\n{:<12}", kind.label(), "bucket");
        for (_, h) in shown {
            let _ = write!(out, " {h:>18}");
        }
        out.push('\n');
        let mut buckets: Vec<&String> = Vec::new();
        for r in &mine {
            if !buckets.contains(&&r.bucket) {
                buckets.push(&r.bucket);
            }
        }
        for b in buckets {
            let _ = write!(out, "{b:<12}");
            for (name, _) in shown {
                let cell = mine
                    .iter()
                    .find(|r| &r.bucket == b && r.metric == name)
                    .map(|r| format!("{:.2} ± {:.2} ({})", r.ci.mean, r.ci.half_width, r.ci.n))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, " {cell:>18}");
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64) -> SuboptimalityRecord {
        SuboptimalityRecord {
            seed,
            machines: 2,
            cap: 1,
            cost_kind: CostKind::Linear,
            rho: 0.45,
            eta: 4.0,
            states: 100,
            full_cost: 3.0,
            g_index: 2.37,
            u_index: 0.63,
            g_opi: Some(2.30),
            u_opi: Some(0.70),
            safe_fraction: Some(0.25),
            g_polling: None,
            u_polling: None,
            g_star: Some(2.25),
            u_star: Some(0.75),
        }
    }

    #[test]
    fn suboptimality_forms() {
        let r = record(1);
        assert!(
            (r.cost_suboptimality(Some(r.g_index)).unwrap() - 100.0 * 0.12 / 2.25).abs() < 1e-12
        );
        assert!((r.reward_suboptimality(Some(r.u_index)).unwrap() - 16.0).abs() < 1e-9);
        assert!(r.identity_gap() < 1e-12);
        assert!(r.cost_suboptimality(r.g_polling).is_none());
    }

    #[test]
    fn bins() {
        assert_eq!(bin_index(&RHO_BINS, 0.1), Some(0));
        assert_eq!(bin_index(&RHO_BINS, 0.3), Some(1));
        assert_eq!(bin_index(&RHO_BINS, 1.5), Some(6));
        assert_eq!(bin_index(&RHO_BINS, 1.6), None);
        assert_eq!(bin_index(&ETA_BINS, 0.99), Some(2));
        assert_eq!(bin_index(&ETA_BINS, 10.0), Some(5));
    }

    #[test]
    fn single_record_ci() {
        let rows = summarize(&[record(1)]).unwrap();
        let r = rows
            .iter()
            .find(|r| r.metric == "cost_subopt_index")
            .unwrap();
        assert_eq!((r.ci.n, r.ci.half_width), (1, 0.0));
        assert!(summarize(&[]).is_err());
        assert!(summary_text(&rows).contains("by eta"));
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![record(1), record(2)];
        let text = records_to_csv(&recs).unwrap();
        assert_eq!(records_from_csv(&text).unwrap(), recs);
        assert!(text
            .lines()
            .next()
            .unwrap()
            .starts_with("seed,machines,cap,cost_kind"));
    }

    #[test]
    fn small_batch_is_deterministic() {
        let mut cfg = ExperimentConfig::desk(vec![3, 4]);
        cfg.generate = GenerateOptions {
            machines: Some(2),
            cap: Some(1),
            cost_kind: None,
        };
        cfg.steps = 3_000;
        cfg.budget = OpiBudget {
            r1: 1_000,
            r2: 5_000,
            r_off: 50,
            ..OpiBudget::desk()
        };
        let a = run_benchmark(&cfg).unwrap();
        let b = run_benchmark(&cfg).unwrap();
        assert!(a.failures.is_empty());
        assert_eq!(
            records_to_csv(&a.records).unwrap(),
            records_to_csv(&b.records).unwrap()
        );
        for r in &a.records {
            let gs = r.g_star.unwrap();
            // No simulated heuristic sits far below the optimum.
            assert!(r.g_index > 0.8 * gs);
            assert!(r.g_polling.is_some() && r.g_opi.is_some());
        }
    }
}
