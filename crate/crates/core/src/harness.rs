//! Experiment runner: sweeps over supply levels and policies, ratios against
//! the offline optimum, structural audits of threshold-policy traces and CSV
//! output.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advice::{gamma_from_predictions, make_predictions, AdviceError, Predictions};
use crate::engine::{run, EngineError, Policy, Trace};
use crate::instances::{
    default_rho_grid, ingest_taxi, ingest_taxi_zones, sample_synthetic, InstanceError,
    SyntheticConfig, TaxiOptions,
};
use crate::model::{GammaVector, Instance, ModelError};
use crate::offline::{solve_offline, OfflineSolution};
use crate::policies::{
    default_gamma, AlwaysFill, Backlog, Gpa, NeverRequest, PolicyError, PolicyKind, RhoCoinFlip,
    RhoGreedy,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("no results to summarize")]
    EmptyResults,
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Advice(#[from] AdviceError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

/// Environment variable that overrides a sweep's base seed.
pub const SEED_ENV: &str = "OSSA_SEED";

/// `4/3 * opt + sum_i 3 p (b_i + c_i)`.
pub fn gpa_bound(instance: &Instance, opt_relaxed: f64) -> f64 {
    4.0 / 3.0 * opt_relaxed + 3.0 * instance.additive_slack()
}

/// `(1 + lambda) * opt + 3 eta p + sum_i 3 p (b_i + c_i)`.
pub fn consistency_bound(instance: &Instance, lambda: f64, eta: f64, opt_relaxed: f64) -> f64 {
    (1.0 + lambda) * opt_relaxed + 3.0 * eta * instance.penalty() + 3.0 * instance.additive_slack()
}

/// `(1 + (1 - lambda)^2 / (4 lambda)) * opt + sum_i 3 p (b_i + c_i)`.
pub fn robustness_bound(instance: &Instance, lambda: f64, opt_relaxed: f64) -> f64 {
    let factor = 1.0 + (1.0 - lambda).powi(2) / (4.0 * lambda);
    factor * opt_relaxed + 3.0 * instance.additive_slack()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    TerminalStock,
    CumulativeUpper,
    CumulativeLower,
    ExhaustedPenaltyGap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub site_id: Option<usize>,
    pub t: Option<usize>,
    pub detail: String,
}

/// Slack for evaluating `gamma * D` in floating point.
const AUDIT_EPS: f64 = 1e-9;

/// Structural checks for a threshold-policy trace run with thresholds
/// `gamma`. An empty result means every check passed.
///
/// Per site: terminal stock at most `b + c`; `L^t <= gamma D^t + b + c` at
/// every step; `L >= gamma D` when the hub still has supply at the end.
/// When the hub ran dry, total lost units exceed the offline optimum's by at
/// most `sum_i (b_i + c_i)`.
pub fn audit_invariants(
    trace: &Trace,
    instance: &Instance,
    gamma: &GammaVector,
    opt: &OfflineSolution,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, site) in instance.sites().iter().enumerate() {
        let totals = &trace.totals[i];
        let cap = site.b + site.c;
        if totals.terminal_stock > cap {
            out.push(Violation {
                kind: ViolationKind::TerminalStock,
                site_id: Some(site.site_id),
                t: None,
                detail: format!("terminal stock {} > {cap}", totals.terminal_stock),
            });
        }
        for (t, (l, d)) in trace.cumulative(i).into_iter().enumerate() {
            let limit = gamma[i] * d as f64 + cap as f64;
            if l as f64 > limit + AUDIT_EPS {
                out.push(Violation {
                    kind: ViolationKind::CumulativeUpper,
                    site_id: Some(site.site_id),
                    t: Some(t + 1),
                    detail: format!("granted {l} > {limit}"),
                });
                break;
            }
        }
        if trace.supply_end > 0 {
            let floor = gamma[i] * totals.demand as f64;
            if (totals.granted as f64) < floor - AUDIT_EPS {
                out.push(Violation {
                    kind: ViolationKind::CumulativeLower,
                    site_id: Some(site.site_id),
                    t: None,
                    detail: format!("granted {} < {floor}", totals.granted),
                });
            }
        }
    }
    if trace.supply_end == 0 {
        let lost: u64 = trace.totals.iter().map(|t| t.unmet_units).sum();
        let opt_lost: u64 = opt
            .net_demand
            .iter()
            .zip(&opt.allocation)
            .map(|(n, l)| n - l)
            .sum();
        let slack: u64 = instance.sites().iter().map(|s| s.b + s.c).sum();
        if lost as i128 - opt_lost as i128 > slack as i128 {
            out.push(Violation {
                kind: ViolationKind::ExhaustedPenaltyGap,
                site_id: None,
                t: None,
                detail: format!("lost {lost} units vs optimum {opt_lost}, slack {slack}"),
            });
        }
    }
    out
}

/// Where sweep instances come from. Synthetic sources draw a fresh instance
/// per replication; file and taxi sources reuse one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSource {
    Synthetic {
        #[serde(flatten)]
        config: SyntheticConfig,
    },
    File {
        path: PathBuf,
    },
    Taxi {
        demand: PathBuf,
        geo: PathBuf,
        #[serde(default)]
        zones: bool,
        #[serde(default)]
        options: TaxiOptions,
    },
}

/// How the supply-aware baselines learn `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineRho {
    /// `s / sum_i D_i` of the instance being run.
    #[default]
    Actual,
    /// The sweep grid value.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub policy: PolicyKind,
    /// Distrust level; required for `la-gpa`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Absolute prediction error target.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Prediction error target as a multiple of the supply `s`.
    #[serde(default)]
    pub eta_supply_multiple: Option<f64>,
    /// Uniform threshold overriding the default for `gpa`.
    #[serde(default)]
    pub gamma: Option<f64>,
}

impl PolicySpec {
    pub fn plain(policy: PolicyKind) -> Self {
        Self {
            policy,
            lambda: None,
            eta: None,
            eta_supply_multiple: None,
            gamma: None,
        }
    }

    pub fn la_gpa(lambda: f64, eta_supply_multiple: f64) -> Self {
        Self {
            lambda: Some(lambda),
            eta_supply_multiple: Some(eta_supply_multiple),
            ..Self::plain(PolicyKind::LaGpa)
        }
    }

    /// Series name used to group rows, e.g. `la-gpa[lambda=0.1,eta=10s]`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(g) = self.gamma {
            parts.push(format!("gamma={g}"));
        }
        if let Some(l) = self.lambda {
            parts.push(format!("lambda={}", fmt_short(l)));
        }
        if let Some(e) = self.eta {
            parts.push(format!("eta={e}"));
        }
        if let Some(m) = self.eta_supply_multiple {
            parts.push(format!("eta={m}s"));
        }
        if parts.is_empty() {
            self.policy.to_string()
        } else {
            format!("{}[{}]", self.policy, parts.join(","))
        }
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let cfg = |m: String| Err(HarnessError::Config(m));
        let is_la = self.policy == PolicyKind::LaGpa;
        if is_la != self.lambda.is_some() {
            return cfg(format!(
                "{}: lambda is required for la-gpa and only for it",
                self.label()
            ));
        }
        if self.eta.is_some() && self.eta_supply_multiple.is_some() {
            return cfg(format!(
                "{}: give eta or eta_supply_multiple, not both",
                self.label()
            ));
        }
        if !is_la && (self.eta.is_some() || self.eta_supply_multiple.is_some()) {
            return cfg(format!(
                "{}: prediction error applies to la-gpa only",
                self.label()
            ));
        }
        if self.gamma.is_some() && self.policy != PolicyKind::Gpa {
            return cfg(format!("{}: gamma applies to gpa only", self.label()));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return cfg(format!("gamma {g} outside [0, 1]"));
            }
        }
        for v in [self.eta, self.eta_supply_multiple].into_iter().flatten() {
            if !(v >= 0.0) || !v.is_finite() {
                return cfg(format!("eta target {v} must be non-negative"));
            }
        }
        if let Some(l) = self.lambda {
            crate::advice::tau_of_lambda(l)?;
        }
        Ok(())
    }

    pub fn eta_target(&self, instance: &Instance) -> Option<f64> {
        match (self.eta, self.eta_supply_multiple) {
            (Some(e), _) => Some(e),
            (None, Some(m)) => Some(m * instance.supply() as f64),
            (None, None) if self.policy == PolicyKind::LaGpa => Some(0.0),
            _ => None,
        }
    }
}

fn fmt_short(x: f64) -> String {
    if (x - 1.0 / 3.0).abs() < 1e-15 {
        "1/3".into()
    } else {
        format!("{x}")
    }
}

/// The baseline set plus the advice-free threshold policy.
pub fn default_policies() -> Vec<PolicySpec> {
    [
        PolicyKind::Gpa,
        PolicyKind::AlwaysFill,
        PolicyKind::RhoGreedy,
        PolicyKind::RhoCoinFlip,
        PolicyKind::Backlog,
    ]
    .into_iter()
    .map(PolicySpec::plain)
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub source: InstanceSource,
    /// Defaults to the synthetic config's grid, else `0.1..=1.2`.
    #[serde(default)]
    pub rho_grid: Option<Vec<f64>>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicySpec>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub baseline_rho: BaselineRho,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl SweepConfig {
    pub fn new(source: InstanceSource) -> Self {
        Self {
            source,
            rho_grid: None,
            policies: default_policies(),
            replications: 1,
            base_seed: 0,
            baseline_rho: BaselineRho::Actual,
            output: None,
        }
    }

    /// Parses a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut config: SweepConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut config.source {
            InstanceSource::File { path } => fix(path),
            InstanceSource::Taxi { demand, geo, .. } => {
                fix(demand);
                fix(geo);
            }
            InstanceSource::Synthetic { .. } => {}
        }
        if let Some(out) = &mut config.output {
            fix(out);
        }
        Ok(config)
    }

    /// Replaces the base seed with `OSSA_SEED` when it is set.
    pub fn apply_env_seed(&mut self) -> Result<(), HarnessError> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.base_seed = raw
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{SEED_ENV}={raw:?} is not a u64")))?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        match (&self.rho_grid, &self.source) {
            (Some(g), _) => g.clone(),
            (None, InstanceSource::Synthetic { config }) => config.rho_grid.clone(),
            (None, _) => default_rho_grid(),
        }
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.replications == 0 {
            return Err(HarnessError::Config(
                "replications must be at least 1".into(),
            ));
        }
        if self.policies.is_empty() {
            return Err(HarnessError::Config("no policies".into()));
        }
        let grid = self.grid();
        if grid.is_empty() || grid.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(HarnessError::Config(
                "rho grid must be non-empty and positive".into(),
            ));
        }
        for spec in &self.policies {
            spec.check()?;
        }
        if let InstanceSource::Synthetic { config } = &self.source {
            config.check()?;
        }
        Ok(())
    }
}

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one run, a hash of the base seed and the run's coordinates.
pub fn run_seed(base: u64, rho_idx: usize, policy_idx: usize, replication: usize) -> u64 {
    [rho_idx as u64, policy_idx as u64, replication as u64]
        .into_iter()
        .fold(mix64(base), |acc, k| mix64(acc ^ k))
}

/// Seed for the synthetic instance of one replication.
pub fn instance_seed(base: u64, replication: usize) -> u64 {
    mix64(mix64(base ^ 0x005E_ED0F_1257_A4CE) ^ replication as u64)
}

/// A constructed policy and what it was built from.
pub struct BuiltPolicy {
    pub policy: Box<dyn Policy + Send>,
    pub gamma: Option<GammaVector>,
    pub predictions: Option<Predictions>,
    pub baseline_rho: Option<f64>,
}

/// `s / sum_i D_i`, or 1 when there is no demand.
pub fn actual_rho(instance: &Instance) -> f64 {
    let total: u64 = instance.total_demands().iter().sum();
    if total == 0 {
        1.0
    } else {
        instance.supply() as f64 / total as f64
    }
}

/// Builds the policy for `spec` on `instance`. `seed` drives coin flips and
/// prediction noise.
pub fn build_policy(
    instance: &Instance,
    spec: &PolicySpec,
    baseline_rho: f64,
    seed: u64,
) -> Result<BuiltPolicy, HarnessError> {
    spec.check()?;
    let mut built = BuiltPolicy {
        policy: Box::new(NeverRequest),
        gamma: None,
        predictions: None,
        baseline_rho: None,
    };
    match spec.policy {
        PolicyKind::Gpa => {
            let gamma = match spec.gamma {
                Some(g) => GammaVector::uniform(instance.n(), g)?,
                None => default_gamma(instance),
            };
            built.policy = Box::new(Gpa::for_instance(instance, gamma.clone())?);
            built.gamma = Some(gamma);
        }
        PolicyKind::LaGpa => {
            let lambda = spec.lambda.expect("checked");
            let target = spec.eta_target(instance).unwrap_or(0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let preds = make_predictions(instance, target, &mut rng);
            let gamma = gamma_from_predictions(instance, &preds, lambda)?;
            built.policy = Box::new(Gpa::new(gamma.clone()).with_label("la-gpa"));
            built.gamma = Some(gamma);
            built.predictions = Some(preds);
        }
        PolicyKind::AlwaysFill => built.policy = Box::new(AlwaysFill),
        PolicyKind::RhoGreedy => {
            built.policy = Box::new(RhoGreedy::new(baseline_rho)?);
            built.baseline_rho = Some(baseline_rho);
        }
        PolicyKind::RhoCoinFlip => {
            let rho = baseline_rho.min(1.0);
            built.policy = Box::new(RhoCoinFlip::new(rho, seed)?);
            built.baseline_rho = Some(rho);
        }
        PolicyKind::Backlog => built.policy = Box::new(Backlog::new(instance.n())),
        PolicyKind::Never => built.policy = Box::new(NeverRequest),
    }
    Ok(built)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub rho: f64,
    pub policy: String,
    pub series: String,
    pub seed: u64,
    pub replication: usize,
    pub lambda: Option<f64>,
    pub eta_target: Option<f64>,
    pub eta_realized: Option<f64>,
    pub supply: u64,
    pub baseline_rho: Option<f64>,
    pub transport: f64,
    pub penalty: f64,
    pub total: f64,
    pub opt_relaxed: f64,
    pub opt_rounded: f64,
    pub ratio_relaxed: Option<f64>,
    pub invariant_violations: usize,
}

/// Runs one policy on one instance and scores it.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    instance: &Instance,
    opt: &OfflineSolution,
    spec: &PolicySpec,
    rho: f64,
    grid_rho_for_baselines: Option<f64>,
    seed: u64,
    replication: usize,
) -> Result<(ResultRow, Trace), HarnessError> {
    let baseline = grid_rho_for_baselines.unwrap_or_else(|| actual_rho(instance));
    let mut built = build_policy(instance, spec, baseline, seed)?;
    let trace = run(instance, &mut built.policy)?;
    let violations = match &built.gamma {
        Some(gamma) if spec.policy.is_threshold_family() => {
            audit_invariants(&trace, instance, gamma, opt).len()
        }
        _ => 0,
    };
    let cost = trace.cost;
    let row = ResultRow {
        rho,
        policy: spec.policy.to_string(),
        series: spec.label(),
        seed,
        replication,
        lambda: spec.lambda,
        eta_target: spec.eta_target(instance),
        eta_realized: built.predictions.as_ref().map(|p| p.eta),
        supply: instance.supply(),
        baseline_rho: built.baseline_rho,
        transport: cost.transport,
        penalty: cost.penalty,
        total: cost.total,
        opt_relaxed: opt.cost_relaxed,
        opt_rounded: opt.cost_rounded,
        ratio_relaxed: (opt.cost_relaxed > 0.0).then(|| cost.total / opt.cost_relaxed),
        invariant_violations: violations,
    };
    Ok((row, trace))
}

fn load_fixed(source: &InstanceSource) -> Result<Option<Instance>, HarnessError> {
    match source {
        InstanceSource::Synthetic { .. } => Ok(None),
        InstanceSource::File { path } => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            Ok(Some(Instance::from_json(&text)?))
        }
        InstanceSource::Taxi {
            demand,
            geo,
            zones,
            options,
        } => {
            let d = File::open(demand).map_err(|e| io_err(demand, e))?;
            let g = File::open(geo).map_err(|e| io_err(geo, e))?;
            let taxi = if *zones {
                ingest_taxi_zones(d, g, options)?
            } else {
                ingest_taxi(d, g, options)?
            };
            Ok(Some(taxi.instance))
        }
    }
}

/// Runs every `(rho, replication, policy)` combination. Rows come back
/// sorted by `(rho, policy, seed)` regardless of scheduling.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<ResultRow>, HarnessError> {
    config.check()?;
    let grid = config.grid();
    let fixed = load_fixed(&config.source)?;

    let bases: Vec<Instance> = match (&fixed, &config.source) {
        (Some(inst), _) => vec![inst.clone()],
        (None, InstanceSource::Synthetic { config: synth }) => (0..config.replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(config.base_seed, rep));
                sample_synthetic(synth, &mut rng)
            })
            .collect::<Result<_, _>>()?,
        (None, _) => unreachable!("non-synthetic sources load a fixed instance"),
    };

    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|r| (0..config.replications).map(move |rep| (r, rep)))
        .collect();
    let chunks: Vec<Vec<ResultRow>> = tasks
        .par_iter()
        .map(|&(rho_idx, rep)| {
            let rho = grid[rho_idx];
            let base = &bases[if fixed.is_some() { 0 } else { rep }];
            let instance = base.with_supply(base.supply_for_rho(rho));
            let opt = solve_offline(&instance);
            let grid_rho = (config.baseline_rho == BaselineRho::Grid).then_some(rho);
            config
                .policies
                .iter()
                .enumerate()
                .map(|(pi, spec)| {
                    let seed = run_seed(config.base_seed, rho_idx, pi, rep);
                    evaluate(&instance, &opt, spec, rho, grid_rho, seed, rep).map(|(row, _)| row)
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let mut rows: Vec<ResultRow> = chunks.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.rho
            .total_cmp(&b.rho)
            .then_with(|| a.policy.cmp(&b.policy))
            .then_with(|| a.seed.cmp(&b.seed))
            .then_with(|| a.series.cmp(&b.series))
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub rho: f64,
    pub series: String,
    pub policy: String,
    pub runs: usize,
    pub mean_total: f64,
    pub std_total: f64,
    pub mean_ratio: Option<f64>,
    pub std_ratio: Option<f64>,
    pub ratio_runs: usize,
    pub max_invariant_violations: usize,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Per `(rho, series)` statistics, ordered by rho then series. Ratios are
/// averaged over rows where they are defined.
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<SummaryRow>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    let mut groups: BTreeMap<(u64, String), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        // rho values are positive, so their bit patterns order like the values
        groups
            .entry((row.rho.to_bits(), row.series.clone()))
            .or_default()
            .push(row);
    }
    Ok(groups
        .into_values()
        .map(|group| {
            let totals: Vec<f64> = group.iter().map(|r| r.total).collect();
            let ratios: Vec<f64> = group.iter().filter_map(|r| r.ratio_relaxed).collect();
            let (mean_total, std_total) = mean_std(&totals).expect("non-empty group");
            let ratio = mean_std(&ratios);
            SummaryRow {
                rho: group[0].rho,
                series: group[0].series.clone(),
                policy: group[0].policy.clone(),
                runs: group.len(),
                mean_total,
                std_total,
                mean_ratio: ratio.map(|r| r.0),
                std_ratio: ratio.map(|r| r.1),
                ratio_runs: ratios.len(),
                max_invariant_violations: group
                    .iter()
                    .map(|r| r.invariant_violations)
                    .max()
                    .unwrap_or(0),
            }
        })
        .collect())
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), HarnessError> {
    let mut wtr = csv::Writer::from_writer(out);
    for row in rows {
        wtr.serialize(row)
            .map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    wtr.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

/// Writes `results.csv` plus the three summary tables into `dir`:
/// `costs.csv` (every series), `ratios_baselines.csv` (everything except the
/// prediction-guided series) and `ratios_la_gpa.csv` (gpa and la-gpa).
/// Files are rendered in memory first so a failure leaves no partial output.
pub fn write_outputs(rows: &[ResultRow], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let summary = summarize(rows)?;
    let baselines: Vec<&SummaryRow> = summary.iter().filter(|s| s.policy != "la-gpa").collect();
    let advice: Vec<&SummaryRow> = summary
        .iter()
        .filter(|s| s.policy == "la-gpa" || s.policy == "gpa")
        .collect();

    let mut rendered: Vec<(&str, Vec<u8>)> = Vec::new();
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    rendered.push(("results.csv", buf));
    let mut buf = Vec::new();
    write_csv(&summary, &mut buf)?;
    rendered.push(("costs.csv", buf));
    let mut buf = Vec::new();
    write_csv(&baselines, &mut buf)?;
    rendered.push(("ratios_baselines.csv", buf));
    let mut buf = Vec::new();
    write_csv(&advice, &mut buf)?;
    rendered.push(("ratios_la_gpa.csv", buf));

    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    for (name, bytes) in rendered {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
