//! Domain types for the shared-supply model: sites, instances, threshold
//! vectors, and the validation that puts an instance into canonical form.
//!
//! A validated [`Instance`] always has its sites sorted by per-unit shipping
//! cost `w / c` (ties broken by ascending original site id), every demand
//! bounded by its site's `b`, and `w <= p * c` at every site. Every site
//! starts with `b` units on hand; that initial stock is a model constant and
//! is not stored.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("site {site_id}: shipment capacity must be at least 1")]
    CapacityZero { site_id: usize },
    #[error("site {site_id}: per-step demand bound must be at least 1")]
    BoundZero { site_id: usize },
    #[error("site {site_id}: shipment cost {w} must be finite and non-negative")]
    InvalidWeight { site_id: usize, w: f64 },
    #[error("penalty {0} must be finite and non-negative")]
    InvalidPenalty(f64),
    #[error("site {site_id}: shipment cost {w} exceeds penalty {p} times capacity {c}")]
    PenaltyDominated {
        site_id: usize,
        w: f64,
        c: u64,
        p: f64,
    },
    #[error("site {site_id}, step {t}: demand {demand} exceeds bound {bound}")]
    DemandBoundViolated {
        site_id: usize,
        t: usize,
        demand: u64,
        bound: u64,
    },
    #[error("instance has no sites")]
    NoSites,
    #[error("duplicate site id {0}")]
    DuplicateSiteId(usize),
    #[error("expected {expected} demand rows (one per site), found {found}")]
    DemandRowCount { expected: usize, found: usize },
    #[error("site {site_id}: demand row has {found} steps, expected {expected}")]
    RaggedDemand {
        site_id: usize,
        expected: usize,
        found: usize,
    },
    #[error("gamma[{index}] = {value} is outside [0, 1]")]
    GammaOutOfRange { index: usize, value: f64 },
    #[error("demand csv: {0}")]
    DemandCsv(String),
    #[error("instance json: {0}")]
    Json(String),
}

/// One site's fixed-charge shipment cost `w`, shipment capacity `c` and
/// per-step demand bound `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    #[serde(rename = "id")]
    pub site_id: usize,
    pub w: f64,
    pub c: u64,
    pub b: u64,
}

impl SiteSpec {
    pub fn new(site_id: usize, w: f64, c: u64, b: u64) -> Self {
        Self { site_id, w, c, b }
    }

    /// Shipping cost per unit of capacity, the key sites are ordered by.
    pub fn unit_cost(&self) -> f64 {
        self.w / self.c as f64
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.c < 1 {
            return Err(ModelError::CapacityZero {
                site_id: self.site_id,
            });
        }
        if self.b < 1 {
            return Err(ModelError::BoundZero {
                site_id: self.site_id,
            });
        }
        if !self.w.is_finite() || self.w < 0.0 {
            return Err(ModelError::InvalidWeight {
                site_id: self.site_id,
                w: self.w,
            });
        }
        Ok(())
    }
}

/// Unvalidated instance record, the on-disk JSON shape.
///
/// `demand[i]` is the demand row of `sites[i]` in the order given here;
/// validation re-sorts both together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInstance {
    pub penalty: f64,
    pub supply: u64,
    pub sites: Vec<SiteSpec>,
    pub demand: Vec<Vec<u64>>,
}

impl RawInstance {
    pub fn validate(self) -> Result<Instance, ModelError> {
        validate(self)
    }
}

/// A validated instance. Immutable once built; cheap to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawInstance", try_from = "RawInstance")]
pub struct Instance {
    sites: Vec<SiteSpec>,
    penalty: f64,
    supply: u64,
    horizon: usize,
    demand: Vec<Vec<u64>>,
}

impl TryFrom<RawInstance> for Instance {
    type Error = ModelError;

    fn try_from(raw: RawInstance) -> Result<Self, Self::Error> {
        validate(raw)
    }
}

impl From<Instance> for RawInstance {
    fn from(inst: Instance) -> Self {
        RawInstance {
            penalty: inst.penalty,
            supply: inst.supply,
            sites: inst.sites,
            demand: inst.demand,
        }
    }
}

/// Checks every model assumption and returns the instance in canonical site
/// order. Errors name the offending site (and step, for demand violations).
pub fn validate(raw: RawInstance) -> Result<Instance, ModelError> {
    let RawInstance {
        penalty,
        supply,
        sites,
        demand,
    } = raw;

    if !penalty.is_finite() || penalty < 0.0 {
        return Err(ModelError::InvalidPenalty(penalty));
    }
    if sites.is_empty() {
        return Err(ModelError::NoSites);
    }
    let mut seen = HashSet::with_capacity(sites.len());
    for site in &sites {
        site.check()?;
        if !seen.insert(site.site_id) {
            return Err(ModelError::DuplicateSiteId(site.site_id));
        }
        if site.w > penalty * site.c as f64 {
            return Err(ModelError::PenaltyDominated {
                site_id: site.site_id,
                w: site.w,
                c: site.c,
                p: penalty,
            });
        }
    }
    if demand.len() != sites.len() {
        return Err(ModelError::DemandRowCount {
            expected: sites.len(),
            found: demand.len(),
        });
    }
    let horizon = demand[0].len();
    for (site, row) in sites.iter().zip(&demand) {
        if row.len() != horizon {
            return Err(ModelError::RaggedDemand {
                site_id: site.site_id,
                expected: horizon,
                found: row.len(),
            });
        }
        if let Some((t, &d)) = row.iter().enumerate().find(|(_, &d)| d > site.b) {
            return Err(ModelError::DemandBoundViolated {
                site_id: site.site_id,
                t: t + 1,
                demand: d,
                bound: site.b,
            });
        }
    }

    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|&a, &b| canonical_order(&sites[a], &sites[b]));
    let mut demand = demand.into_iter().map(Some).collect::<Vec<_>>();
    let sorted_demand = order
        .iter()
        .map(|&i| demand[i].take().expect("each row moved once"))
        .collect();
    let sorted_sites = order.iter().map(|&i| sites[i]).collect();

    Ok(Instance {
        sites: sorted_sites,
        penalty,
        supply,
        horizon,
        demand: sorted_demand,
    })
}

fn canonical_order(a: &SiteSpec, b: &SiteSpec) -> Ordering {
    a.unit_cost()
        .total_cmp(&b.unit_cost())
        .then(a.site_id.cmp(&b.site_id))
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let raw: RawInstance =
            serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        validate(raw)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn sites(&self) -> &[SiteSpec] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &SiteSpec {
        &self.sites[i]
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn supply(&self) -> u64 {
        self.supply
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Demand row of the `i`-th site in canonical order.
    pub fn demand_row(&self, i: usize) -> &[u64] {
        &self.demand[i]
    }

    pub fn demand_matrix(&self) -> &[Vec<u64>] {
        &self.demand
    }

    /// Total demand `D_i` over the horizon.
    pub fn total_demand(&self, i: usize) -> u64 {
        self.demand[i].iter().sum()
    }

    pub fn total_demands(&self) -> Vec<u64> {
        (0..self.n()).map(|i| self.total_demand(i)).collect()
    }

    /// Demand not covered by the initial stock, `(D_i - b_i)_+`.
    pub fn net_demands(&self) -> Vec<u64> {
        self.sites
            .iter()
            .zip(&self.demand)
            .map(|(site, row)| row.iter().sum::<u64>().saturating_sub(site.b))
            .collect()
    }

    /// Same sites and demand with a different hub supply. Supply does not
    /// enter validation, so the result is still canonical.
    pub fn with_supply(&self, supply: u64) -> Instance {
        Instance {
            supply,
            ..self.clone()
        }
    }

    /// `sum_i p (b_i + c_i)`, the per-site additive slack that appears in
    /// every guarantee for the threshold policies.
    pub fn additive_slack(&self) -> f64 {
        self.sites
            .iter()
            .map(|s| self.penalty * (s.b + s.c) as f64)
            .sum()
    }

    /// Supply for a sweep point: `floor(rho * (sum D - sum b))`, clamped at 0.
    pub fn supply_for_rho(&self, rho: f64) -> u64 {
        let total: u64 = self.demand.iter().flatten().sum();
        let initial: u64 = self.sites.iter().map(|s| s.b).sum();
        let excess = total as f64 - initial as f64;
        (rho * excess).floor().max(0.0) as u64
    }
}

/// Per-site threshold fractions, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GammaVector(Vec<f64>);

impl GammaVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ModelError::GammaOutOfRange { index, value });
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self, ModelError> {
        Self::new(vec![value; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for GammaVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for GammaVector {
    type Error = ModelError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<GammaVector> for Vec<f64> {
    fn from(g: GammaVector) -> Self {
        g.0
    }
}

#[derive(Debug, Deserialize)]
struct DemandCsvRow {
    t: usize,
    site_id: usize,
    demand: u64,
}

/// Builds a demand matrix from CSV rows `(t, site_id, demand)` with a header.
///
/// Steps are 1-based; the horizon is the largest step seen unless `horizon`
/// is given. Missing `(t, site)` cells are zero. Rows are returned in the
/// order of `site_ids`, ready to pair with the same site list in a
/// [`RawInstance`].
pub fn demand_from_csv<R: Read>(
    reader: R,
    site_ids: &[usize],
    horizon: Option<usize>,
) -> Result<Vec<Vec<u64>>, ModelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut cells = Vec::new();
    for row in rdr.deserialize::<DemandCsvRow>() {
        let row = row.map_err(|e| ModelError::DemandCsv(e.to_string()))?;
        if row.t == 0 {
            return Err(ModelError::DemandCsv("steps are 1-based".into()));
        }
        cells.push(row);
    }
    let horizon = horizon.unwrap_or_else(|| cells.iter().map(|r| r.t).max().unwrap_or(0));
    let mut matrix = vec![vec![0u64; horizon]; site_ids.len()];
    let mut filled = HashSet::new();
    for row in cells {
        let i = site_ids
            .iter()
            .position(|&id| id == row.site_id)
            .ok_or_else(|| ModelError::DemandCsv(format!("unknown site id {}", row.site_id)))?;
        if row.t > horizon {
            return Err(ModelError::DemandCsv(format!(
                "step {} beyond horizon {horizon}",
                row.t
            )));
        }
        if !filled.insert((row.t, row.site_id)) {
            return Err(ModelError::DemandCsv(format!(
                "duplicate row for step {} site {}",
                row.t, row.site_id
            )));
        }
        matrix[i][row.t - 1] = row.demand;
    }
    Ok(matrix)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two sites, p = 1, s = 3, T = 3; site 1 (w 0.1) and site 2 (w 0.5),
    /// both with c = b = 1; demands (1,1,1) and (1,1,0).
    pub fn instance_e() -> Instance {
        RawInstance {
            penalty: 1.0,
            supply: 3,
            sites: vec![SiteSpec::new(1, 0.1, 1, 1), SiteSpec::new(2, 0.5, 1, 1)],
            demand: vec![vec![1, 1, 1], vec![1, 1, 0]],
        }
        .validate()
        .unwrap()
    }
}
