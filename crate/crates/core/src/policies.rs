//! Replenishment policies: the threshold-proportional policy (GPA) and the
//! baselines it is compared against.
//!
//! Every policy that refills a site asks for whole shipments: enough of them
//! to lift the post-demand remainder back to at least `b`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Policy, StateView};
use crate::model::{GammaVector, Instance, SiteSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("rho {0} is out of range")]
    RhoOutOfRange(f64),
    #[error("threshold vector has {found} entries for {expected} sites")]
    GammaLength { expected: usize, found: usize },
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
}

/// Units requested to bring remainder `r` back to at least `b` in full
/// shipments of `c`; zero once `r >= b`.
pub fn refill_request(remainder: u64, site: &SiteSpec) -> u64 {
    if remainder >= site.b {
        0
    } else {
        site.c * (site.b - remainder).div_ceil(site.c)
    }
}

/// `min(1, a * p * c / w)`, or 1 for free shipping.
pub fn threshold_fraction(aggressiveness: f64, site: &SiteSpec, penalty: f64) -> f64 {
    if site.w == 0.0 {
        1.0
    } else {
        (aggressiveness * penalty * site.c as f64 / site.w).min(1.0)
    }
}

/// Thresholds `min(1, p c_i / (3 w_i))`, the advice-free setting with the
/// 4/3 guarantee.
pub fn default_gamma(instance: &Instance) -> GammaVector {
    let values = instance
        .sites()
        .iter()
        .map(|s| threshold_fraction(1.0 / 3.0, s, instance.penalty()))
        .collect();
    GammaVector::new(values).expect("threshold fractions lie in [0, 1]")
}

/// Threshold-proportional allocation.
///
/// A site is refilled at step `t` when its remainder is below `b` and its
/// cumulative grants through `t - 1` are at most `gamma` times its cumulative
/// demand through `t`.
#[derive(Debug, Clone)]
pub struct Gpa {
    gamma: GammaVector,
    cum_grants: Vec<u64>,
    cum_demand: Vec<u64>,
    label: String,
}

impl Gpa {
    pub fn new(gamma: GammaVector) -> Self {
        let n = gamma.len();
        Self {
            gamma,
            cum_grants: vec![0; n],
            cum_demand: vec![0; n],
            label: "gpa".into(),
        }
    }

    pub fn for_instance(instance: &Instance, gamma: GammaVector) -> Result<Self, PolicyError> {
        if gamma.len() != instance.n() {
            return Err(PolicyError::GammaLength {
                expected: instance.n(),
                found: gamma.len(),
            });
        }
        Ok(Self::new(gamma))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn gamma(&self) -> &GammaVector {
        &self.gamma
    }

    /// Eligibility and request for one site. `cum_grants` is pre-step,
    /// `cum_demand` includes this step.
    pub fn site_request(
        gamma: f64,
        remainder: u64,
        cum_grants: u64,
        cum_demand: u64,
        site: &SiteSpec,
    ) -> u64 {
        if remainder < site.b && cum_grants as f64 <= gamma * cum_demand as f64 {
            refill_request(remainder, site)
        } else {
            0
        }
    }
}

impl Policy for Gpa {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn requests(&mut self, view: &StateView<'_>, demands: &[u64], out: &mut [i64]) {
        for i in 0..out.len() {
            self.cum_demand[i] += demands[i];
            debug_assert_eq!(self.cum_demand[i], view.cum_demand[i]);
            debug_assert_eq!(self.cum_grants[i], view.cum_grants[i]);
            out[i] = Self::site_request(
                self.gamma[i],
                view.remainder[i],
                self.cum_grants[i],
                self.cum_demand[i],
                &view.sites[i],
            ) as i64;
        }
    }

    fn notify_grants(&mut self, grants: &[u64]) {
        for (total, g) in self.cum_grants.iter_mut().zip(grants) {
            *total += g;
        }
    }
}

/// Refill every site below `b` at every step.
#[derive(Debug, Clone, Default)]
pub struct AlwaysFill;

impl Policy for AlwaysFill {
    fn name(&self) -> String {
        "always-fill".into()
    }

    fn requests(&mut self, view: &StateView<'_>, _: &[u64], out: &mut [i64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = refill_request(view.remainder[i], &view.sites[i]) as i64;
        }
    }
}

/// Never requests anything.
#[derive(Debug, Clone, Default)]
pub struct NeverRequest;

impl Policy for NeverRequest {
    fn name(&self) -> String {
        "never".into()
    }

    fn requests(&mut self, _: &StateView<'_>, _: &[u64], _: &mut [i64]) {}
}

/// Keeps cumulative grants proportional to `rho` times cumulative demand,
/// with `rho` supplied from outside (it is not something an online policy
/// could know).
#[derive(Debug, Clone)]
pub struct RhoGreedy {
    rho: f64,
}

impl RhoGreedy {
    pub fn new(rho: f64) -> Result<Self, PolicyError> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(PolicyError::RhoOutOfRange(rho));
        }
        Ok(Self { rho })
    }
}

impl Policy for RhoGreedy {
    fn name(&self) -> String {
        "rho-greedy".into()
    }

    fn requests(&mut self, view: &StateView<'_>, _: &[u64], out: &mut [i64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            let eligible = view.cum_grants[i] as f64 <= self.rho * view.cum_demand[i] as f64;
            *slot = if eligible {
                refill_request(view.remainder[i], &view.sites[i]) as i64
            } else {
                0
            };
        }
    }
}

/// Refills each site below `b` independently with probability `rho`.
///
/// One uniform draw is consumed per site per step, in site order, whether or
/// not the site needs stock, so a seed reproduces the run exactly.
#[derive(Debug, Clone)]
pub struct RhoCoinFlip {
    rho: f64,
    rng: ChaCha8Rng,
}

impl RhoCoinFlip {
    pub fn new(rho: f64, seed: u64) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(PolicyError::RhoOutOfRange(rho));
        }
        Ok(Self {
            rho,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Policy for RhoCoinFlip {
    fn name(&self) -> String {
        "rho-coinflip".into()
    }

    fn requests(&mut self, view: &StateView<'_>, _: &[u64], out: &mut [i64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            let heads = self.rng.random::<f64>() < self.rho;
            *slot = if heads {
                refill_request(view.remainder[i], &view.sites[i]) as i64
            } else {
                0
            };
        }
    }
}

/// Waits until the penalty on demand lost since the last successful resupply
/// reaches the shipment cost, then refills.
#[derive(Debug, Clone)]
pub struct Backlog {
    unmet_since_refill: Vec<u64>,
}

impl Backlog {
    pub fn new(n: usize) -> Self {
        Self {
            unmet_since_refill: vec![0; n],
        }
    }
}

impl Policy for Backlog {
    fn name(&self) -> String {
        "backlog".into()
    }

    fn requests(&mut self, view: &StateView<'_>, demands: &[u64], out: &mut [i64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            let site = &view.sites[i];
            let acc = &mut self.unmet_since_refill[i];
            *acc += demands[i].saturating_sub(view.stock[i]);
            let due = *acc > 0 && view.penalty * *acc as f64 >= site.w;
            *slot = if due {
                refill_request(view.remainder[i], site) as i64
            } else {
                0
            };
        }
    }

    fn notify_grants(&mut self, grants: &[u64]) {
        for (acc, &g) in self.unmet_since_refill.iter_mut().zip(grants) {
            if g > 0 {
                *acc = 0;
            }
        }
    }
}

/// Policy names accepted on the command line and in sweep configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Gpa,
    LaGpa,
    AlwaysFill,
    RhoGreedy,
    #[serde(rename = "rho-coinflip")]
    RhoCoinFlip,
    Backlog,
    Never,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Gpa,
        PolicyKind::LaGpa,
        PolicyKind::AlwaysFill,
        PolicyKind::RhoGreedy,
        PolicyKind::RhoCoinFlip,
        PolicyKind::Backlog,
        PolicyKind::Never,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Gpa => "gpa",
            PolicyKind::LaGpa => "la-gpa",
            PolicyKind::AlwaysFill => "always-fill",
            PolicyKind::RhoGreedy => "rho-greedy",
            PolicyKind::RhoCoinFlip => "rho-coinflip",
            PolicyKind::Backlog => "backlog",
            PolicyKind::Never => "never",
        }
    }

    /// Whether traces of this policy are subject to the structural audit.
    pub fn is_threshold_family(&self) -> bool {
        matches!(self, PolicyKind::Gpa | PolicyKind::LaGpa)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PolicyError::UnknownPolicy(s.to_string()))
    }
}
