//! Problem instances: rates, caps, cost model, the random generator and
//! the JSON file format.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkLayout, NodeId};
use crate::rng::{stream_rng, STREAM_INSTANCE};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest supported degradation cap.
pub const MAX_CAP: u32 = 255;

/// Side of the lattice used by the generator.
pub const GENERATOR_GRID: u32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Linear,
    Quadratic,
    PiecewiseLinear,
}

impl CostKind {
    pub const ALL: [CostKind; 3] = [
        CostKind::Linear,
        CostKind::Quadratic,
        CostKind::PiecewiseLinear,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CostKind::Linear => "linear",
            CostKind::Quadratic => "quadratic",
            CostKind::PiecewiseLinear => "piecewise_linear",
        }
    }

    pub fn parse(s: &str) -> Option<CostKind> {
        CostKind::ALL.into_iter().find(|k| k.label() == s)
    }
}

/// Per-machine cost rate `f_i(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    pub kind: CostKind,
    pub c: Vec<f64>,
}

impl CostModel {
    pub fn new(kind: CostKind, c: Vec<f64>) -> Self {
        CostModel { kind, c }
    }

    pub fn linear(c: Vec<f64>) -> Self {
        CostModel::new(CostKind::Linear, c)
    }

    /// `f_i(x)` for machine `i` with cap `cap`.
    pub fn value(&self, machine: usize, x: u32, cap: u32) -> f64 {
        let c = self.c[machine];
        let x = f64::from(x);
        match self.kind {
            CostKind::Linear => c * x,
            CostKind::Quadratic => c * x * x,
            CostKind::PiecewiseLinear => {
                let bump = if x == f64::from(cap) { 10.0 } else { 0.0 };
                c * (x + bump)
            }
        }
    }
}

/// One problem instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceParameters {
    pub layout: NetworkLayout,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau: f64,
    pub cap: Vec<u32>,
    pub cost: CostModel,
    /// Seed the instance was generated from, if any.
    pub seed: Option<u64>,
    /// Sampled traffic intensity before rate rounding.
    pub nominal_rho: Option<f64>,
}

impl InstanceParameters {
    pub fn new(
        layout: NetworkLayout,
        lambda: Vec<f64>,
        mu: Vec<f64>,
        tau: f64,
        cap: Vec<u32>,
        cost: CostModel,
    ) -> Result<Self> {
        let inst = InstanceParameters {
            layout,
            lambda,
            mu,
            tau,
            cap,
            cost,
            seed: None,
            nominal_rho: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Instance whose machines all share the same rates, cap and cost coefficient.
    pub fn homogeneous(
        layout: NetworkLayout,
        lambda: f64,
        mu: f64,
        tau: f64,
        cap: u32,
        cost: CostModel,
    ) -> Result<Self> {
        let m = layout.machine_count();
        Self::new(
            layout,
            vec![lambda; m],
            vec![mu; m],
            tau,
            vec![cap; m],
            cost,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.layout.machine_count();
        let check_len = |name: &str, len: usize| {
            if len != m {
                Err(Error::Instance(format!(
                    "{name} has {len} entries for {m} machines"
                )))
            } else {
                Ok(())
            }
        };
        check_len("lambda", self.lambda.len())?;
        check_len("mu", self.mu.len())?;
        check_len("K", self.cap.len())?;
        check_len("cost.c", self.cost.c.len())?;
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            for (i, &x) in v.iter().enumerate() {
                if !(x.is_finite() && x > 0.0) {
                    return Err(Error::Instance(format!(
                        "{name}[{i}] = {x} is not a positive number"
                    )));
                }
            }
            Ok(())
        };
        positive("lambda", &self.lambda)?;
        positive("mu", &self.mu)?;
        positive("cost.c", &self.cost.c)?;
        positive("tau", &[self.tau])?;
        for (i, &k) in self.cap.iter().enumerate() {
            if !(1..=MAX_CAP).contains(&k) {
                return Err(Error::Instance(format!(
                    "K[{i}] = {k} outside 1..={MAX_CAP}"
                )));
            }
        }
        Ok(())
    }

    pub fn machine_count(&self) -> usize {
        self.layout.machine_count()
    }

    pub fn node_count(&self) -> usize {
        self.layout.node_count()
    }

    pub fn lambda_sum(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// `Λ = Σλ_j + max(μ_1, …, μ_m, τ)`.
    pub fn uniformization_rate(&self) -> f64 {
        let top = self.mu.iter().copied().fold(self.tau, f64::max);
        self.lambda_sum() + top
    }

    /// Step length `Δ = 1/Λ`.
    pub fn delta(&self) -> f64 {
        1.0 / self.uniformization_rate()
    }

    /// Traffic intensity `Σ λ_i/μ_i`.
    pub fn rho(&self) -> f64 {
        self.lambda.iter().zip(&self.mu).map(|(l, u)| l / u).sum()
    }

    /// `τ / Σλ`.
    pub fn eta(&self) -> f64 {
        self.tau / self.lambda_sum()
    }

    /// Cost rate `f_i(x)`.
    pub fn f(&self, machine: usize, x: u32) -> f64 {
        self.cost.value(machine, x, self.cap[machine])
    }

    /// `Σ_j f_j(K_j)`, the average cost of never repairing anything.
    pub fn full_cost(&self) -> f64 {
        (0..self.machine_count())
            .map(|j| self.f(j, self.cap[j]))
            .sum()
    }

    /// Reward rate `s_i(k) = μ_i [f_i(K_i) − f_i(k−1)] / λ_i` for `k ≥ 1`.
    pub fn reward_rate(&self, machine: usize, k: u32) -> f64 {
        debug_assert!(k >= 1);
        let i = machine;
        self.mu[i] * (self.f(i, self.cap[i]) - self.f(i, k - 1)) / self.lambda[i]
    }

    /// Machines with `λ_i ≥ μ_i`.
    pub fn overloaded_machines(&self) -> Vec<usize> {
        (0..self.machine_count())
            .filter(|&i| self.lambda[i] >= self.mu[i])
            .collect()
    }

    /// `|V| · Π (K_j + 1)`.
    pub fn state_count(&self) -> u128 {
        self.cap.iter().fold(self.node_count() as u128, |acc, &k| {
            acc.saturating_mul(u128::from(k) + 1)
        })
    }

    pub fn is_homogeneous(&self) -> bool {
        let same = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
        same(&self.lambda)
            && same(&self.mu)
            && same(&self.cost.c)
            && self.cap.windows(2).all(|w| w[0] == w[1])
    }
}

/// Fixed values for some of the generator's draws.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenerateOptions {
    pub machines: Option<usize>,
    pub cap: Option<u32>,
    pub cost_kind: Option<CostKind>,
}

/// Rounds a positive number to two significant figures, ties to even.
pub fn round_sig2(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mut e = x.abs().log10().floor() as i32;
    let mut mant = (x.abs() / 10f64.powi(e - 1)).round_ties_even();
    if mant >= 100.0 {
        mant = (mant / 10.0).round_ties_even();
        e += 1;
    } else if mant < 10.0 {
        mant = (x.abs() / 10f64.powi(e - 2)).round_ties_even();
        e -= 1;
    }
    let v: f64 = format!("{}e{}", mant as i64, e - 1)
        .parse()
        .expect("valid float literal");
    v.copysign(x)
}

/// Draws one random instance on the 5×5 lattice.
///
/// Draw order: cost kind, cap, machine count, coordinates, traffic
/// intensity, repair rates, initial degradation rates, cost coefficients,
/// then the switching-rate branch and its ratio. Overridden quantities
/// are still drawn so the remaining draws do not shift.
pub fn generate_instance(seed: u64, options: &GenerateOptions) -> Result<InstanceParameters> {
    let mut rng = stream_rng(seed, STREAM_INSTANCE);
    let kind = CostKind::ALL[rng.gen_range(0..3)];
    let cap: u32 = rng.gen_range(1..=5);
    let m: usize = rng.gen_range(2..=8);
    let kind = options.cost_kind.unwrap_or(kind);
    let cap = options.cap.unwrap_or(cap);
    let m = options.machines.unwrap_or(m);
    let cells = (GENERATOR_GRID * GENERATOR_GRID) as usize;
    if m < 1 || m > cells {
        return Err(Error::Instance(format!(
            "cannot place {m} machines on the lattice"
        )));
    }

    let mut coords: Vec<(u32, u32)> = Vec::with_capacity(m);
    while coords.len() < m {
        let c = (
            rng.gen_range(1..=GENERATOR_GRID),
            rng.gen_range(1..=GENERATOR_GRID),
        );
        if !coords.contains(&c) {
            coords.push(c);
        }
    }
    // machine ids follow (a, b) order; the rate draws below are per new id
    coords.sort_unstable();

    let rho: f64 = rng.gen_range(0.1..1.5);
    let mu_raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..0.9)).collect();
    let lambda_init: Vec<f64> = mu_raw.iter().map(|&u| rng.gen_range(0.1 * u..u)).collect();
    let ratio_sum: f64 = lambda_init.iter().zip(&mu_raw).map(|(l, u)| l / u).sum();
    let lambda_raw: Vec<f64> = lambda_init
        .iter()
        .zip(&mu_raw)
        .map(|(l, u)| (l / u) / ratio_sum * rho * u)
        .collect();
    let c: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..0.9)).collect();
    let branch: f64 = rng.gen();
    let eta: f64 = if branch < 0.5 {
        rng.gen_range(0.1..1.0)
    } else {
        rng.gen_range(1.0..10.0)
    };

    let lambda: Vec<f64> = lambda_raw.into_iter().map(round_sig2).collect();
    let mu: Vec<f64> = mu_raw.into_iter().map(round_sig2).collect();
    let tau = eta * lambda.iter().sum::<f64>();

    let layout = NetworkLayout::lattice(GENERATOR_GRID, &coords)?;
    let mut inst = InstanceParameters::new(
        layout,
        lambda,
        mu,
        tau,
        vec![cap; m],
        CostModel::new(kind, c),
    )?;
    inst.seed = Some(seed);
    inst.nominal_rho = Some(rho);
    Ok(inst)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostFile {
    kind: CostKind,
    c: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    schema_version: u32,
    seed: Option<u64>,
    grid: Option<u32>,
    machine_coords: Option<Vec<[u32; 2]>>,
    adjacency: Vec<Vec<usize>>,
    lambda: Vec<String>,
    mu: Vec<String>,
    tau: String,
    #[serde(rename = "K")]
    cap: Vec<u32>,
    cost: CostFile,
    #[serde(default)]
    nominal_rho: Option<String>,
}

fn schema(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        msg: msg.into(),
    }
}

fn parse_decimal(path: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| schema(path, format!("`{s}` is not a decimal number ({e})")))
}

fn parse_decimals(name: &str, v: &[String]) -> Result<Vec<f64>> {
    v.iter()
        .enumerate()
        .map(|(i, s)| parse_decimal(&format!("{name}[{i}]"), s))
        .collect()
}

impl InstanceParameters {
    pub fn to_json(&self) -> String {
        let m = self.machine_count();
        let dec = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let file = InstanceFile {
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            grid: self.layout.grid_side(),
            machine_coords: self
                .layout
                .coords()
                .map(|c| c[..m].iter().map(|&(a, b)| [a, b]).collect()),
            adjacency: self
                .layout
                .adjacency()
                .iter()
                .map(|nbrs| nbrs.iter().map(|n| n.label()).collect())
                .collect(),
            lambda: dec(&self.lambda),
            mu: dec(&self.mu),
            tau: self.tau.to_string(),
            cap: self.cap.clone(),
            cost: CostFile {
                kind: self.cost.kind,
                c: dec(&self.cost.c),
            },
            nominal_rho: self.nominal_rho.map(|r| r.to_string()),
        };
        serde_json::to_string_pretty(&file).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: InstanceFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            schema(path, e.into_inner().to_string())
        })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", file.schema_version),
            ));
        }
        let m = file.lambda.len();
        let mut adjacency = Vec::with_capacity(file.adjacency.len());
        for (i, nbrs) in file.adjacency.iter().enumerate() {
            let mut row = Vec::with_capacity(nbrs.len());
            for (k, &label) in nbrs.iter().enumerate() {
                let id = NodeId::from_label(label).ok_or_else(|| {
                    schema(format!("adjacency[{i}][{k}]"), "node labels start at 1")
                })?;
                row.push(id);
            }
            adjacency.push(row);
        }
        let layout = match (file.grid, &file.machine_coords) {
            (Some(grid), Some(coords)) => {
                if coords.len() != m {
                    return Err(schema(
                        "machine_coords",
                        format!("{} coordinates for {m} machines", coords.len()),
                    ));
                }
                let pts: Vec<(u32, u32)> = coords.iter().map(|c| (c[0], c[1])).collect();
                let mut sorted = pts.clone();
                sorted.sort_unstable();
                if sorted != pts {
                    return Err(schema(
                        "machine_coords",
                        "machines must be listed in (a, b) order",
                    ));
                }
                let layout = NetworkLayout::lattice(grid, &pts)
                    .map_err(|e| schema("machine_coords", e.to_string()))?;
                let mut given = adjacency.clone();
                given.iter_mut().for_each(|r| r.sort_unstable());
                if given != layout.adjacency() {
                    return Err(schema(
                        "adjacency",
                        "does not match the lattice described by grid and machine_coords",
                    ));
                }
                layout
            }
            (None, None) => NetworkLayout::from_adjacency(m, adjacency, None, None)
                .map_err(|e| schema("adjacency", e.to_string()))?,
            _ => {
                return Err(schema(
                    "grid",
                    "grid and machine_coords must both be present or both null",
                ))
            }
        };
        let lambda = parse_decimals("lambda", &file.lambda)?;
        let mu = parse_decimals("mu", &file.mu)?;
        let tau = parse_decimal("tau", &file.tau)?;
        let c = parse_decimals("cost.c", &file.cost.c)?;
        let nominal_rho = file
            .nominal_rho
            .as_deref()
            .map(|s| parse_decimal("nominal_rho", s))
            .transpose()?;
        let mut inst = InstanceParameters::new(
            layout,
            lambda,
            mu,
            tau,
            file.cap,
            CostModel::new(file.cost.kind, c),
        )
        .map_err(|e| schema("", e.to_string()))?;
        inst.seed = file.seed;
        inst.nominal_rho = nominal_rho;
        Ok(inst)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn cost_kinds() {
        let lin = CostModel::linear(vec![2.0]);
        let quad = CostModel::new(CostKind::Quadratic, vec![2.0]);
        let pw = CostModel::new(CostKind::PiecewiseLinear, vec![2.0]);
        assert_eq!(lin.value(0, 3, 4), 6.0);
        assert_eq!(quad.value(0, 3, 4), 18.0);
        assert_eq!(pw.value(0, 3, 4), 6.0);
        assert_eq!(pw.value(0, 4, 4), 28.0);
        for m in [&lin, &quad, &pw] {
            assert_eq!(m.value(0, 0, 4), 0.0);
            for x in 0..4 {
                assert!(m.value(0, x + 1, 4) > m.value(0, x, 4));
            }
        }
    }

    #[test]
    fn derived_quantities() {
        let e = ex1();
        assert!((e.rho() - (0.4 / 1.1 + 0.4)).abs() < 1e-15);
        assert!((e.uniformization_rate() - 100.8).abs() < 1e-12);
        assert_eq!(e.f(0, 2), 2.0);
        assert_eq!(e.full_cost(), 4.0);
        assert_eq!(e.state_count(), 18);
        assert!((e.reward_rate(0, 2) - 1.1 / 0.4).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let l = NetworkLayout::complete(2).unwrap();
        let c = CostModel::linear(vec![1.0, 1.0]);
        assert!(InstanceParameters::new(
            l.clone(),
            vec![0.4],
            vec![1.0, 1.0],
            1.0,
            vec![1, 1],
            c.clone()
        )
        .is_err());
        assert!(InstanceParameters::new(
            l.clone(),
            vec![0.4, -1.0],
            vec![1.0, 1.0],
            1.0,
            vec![1, 1],
            c.clone()
        )
        .is_err());
        assert!(InstanceParameters::new(
            l.clone(),
            vec![0.4, 0.4],
            vec![1.0, 1.0],
            0.0,
            vec![1, 1],
            c.clone()
        )
        .is_err());
        assert!(
            InstanceParameters::new(l, vec![0.4, 0.4], vec![1.0, 1.0], 1.0, vec![0, 1], c).is_err()
        );
    }

    #[test]
    fn sig2_rounding() {
        assert_eq!(round_sig2(0.1234), 0.12);
        assert_eq!(round_sig2(0.125), 0.12);
        assert_eq!(round_sig2(0.135), 0.14);
        assert_eq!(round_sig2(0.0996), 0.1);
        assert_eq!(round_sig2(1.0), 1.0);
        assert_eq!(round_sig2(0.89999), 0.9);
        assert_eq!(round_sig2(123.0), 120.0);
        assert_eq!(round_sig2(0.0305), 0.03);
    }

    #[test]
    fn overrides_apply() {
        let o = GenerateOptions {
            machines: Some(2),
            cap: Some(1),
            cost_kind: Some(CostKind::Quadratic),
        };
        let inst = generate_instance(11, &o).unwrap();
        assert_eq!(inst.machine_count(), 2);
        assert_eq!(inst.cap, vec![1, 1]);
        assert_eq!(inst.cost.kind, CostKind::Quadratic);
        assert_eq!(inst.state_count(), 25 * 4);
    }

    #[test]
    fn generation_is_pure() {
        let o = GenerateOptions::default();
        assert_eq!(
            generate_instance(5, &o).unwrap(),
            generate_instance(5, &o).unwrap()
        );
        assert_ne!(
            generate_instance(5, &o).unwrap(),
            generate_instance(6, &o).unwrap()
        );
    }

    #[test]
    fn generated_ranges_over_many_seeds() {
        let slack_lo = 0.95 / 1.05;
        let slack_hi = 1.05 / 0.95;
        let o = GenerateOptions::default();
        for seed in 0..10_000 {
            let inst = generate_instance(seed, &o).unwrap();
            inst.validate().unwrap();
            let m = inst.machine_count();
            assert!((2..=8).contains(&m));
            assert!((1..=5).contains(&inst.cap[0]));
            let eta = inst.eta();
            assert!(
                (0.1 - 1e-12..=10.0 + 1e-12).contains(&eta),
                "seed {seed} eta {eta}"
            );
            let rho = inst.rho();
            assert!(
                rho >= 0.1 * slack_lo && rho <= 1.5 * slack_hi,
                "seed {seed} rho {rho}"
            );
            let nominal = inst.nominal_rho.unwrap();
            assert!(rho >= nominal * slack_lo - 1e-12 && rho <= nominal * slack_hi + 1e-12);
            let coords = inst.layout.coords().unwrap();
            assert!(coords[..m].windows(2).all(|w| w[0] < w[1]));
            for i in 0..m {
                assert!(inst.mu[i] >= 0.1 && inst.mu[i] <= 0.9);
                assert!((0.1..0.9).contains(&inst.cost.c[i]));
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let e = ex1();
        assert_eq!(InstanceParameters::from_json(&e.to_json()).unwrap(), e);
        let s = InstanceParameters::new(
            NetworkLayout::star(3, 1).unwrap(),
            vec![0.04; 3],
            vec![0.12; 3],
            0.024,
            vec![1; 3],
            CostModel::linear(vec![1.0; 3]),
        )
        .unwrap();
        assert_eq!(InstanceParameters::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn json_errors_carry_paths() {
        let mut v: serde_json::Value = serde_json::from_str(&ex1().to_json()).unwrap();
        v["lambda"][1] = serde_json::json!("abc");
        match InstanceParameters::from_json(&v.to_string()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "lambda[1]"),
            other => panic!("unexpected {other:?}"),
        }
        let mut v: serde_json::Value = serde_json::from_str(&ex1().to_json()).unwrap();
        v["cost"]["c"][0] = serde_json::json!(3);
        match InstanceParameters::from_json(&v.to_string()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "cost.c[0]"),
            other => panic!("unexpected {other:?}"),
        }
        let mut v: serde_json::Value = serde_json::from_str(&ex1().to_json()).unwrap();
        v["schema_version"] = serde_json::json!(99);
        assert!(matches!(
            InstanceParameters::from_json(&v.to_string()),
            Err(Error::Schema { path, .. }) if path == "schema_version"
        ));
        assert!(InstanceParameters::from_json("{ not json").is_err());
    }

    proptest! {
        #[test]
        fn generated_round_trip(seed in 0u64..5_000) {
            let inst = generate_instance(seed, &GenerateOptions::default()).unwrap();
            let back = InstanceParameters::from_json(&inst.to_json()).unwrap();
            prop_assert_eq!(back, inst);
        }

        #[test]
        fn sig2_relative_error(x in 1e-4f64..1e4) {
            let r = round_sig2(x);
            prop_assert!(((r - x) / x).abs() <= 0.05 + 1e-12);
            let s = format!("{:e}", r);
            let digits: String = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect();
            prop_assert!(digits.trim_end_matches('0').len() <= 2);
        }
    }
}
