//! Instance generators: a random synthetic family, the hard two-scenario
//! constructions used to probe lower bounds, and ingestion of aggregated
//! taxi pickup counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advice::{tau_of_lambda, AdviceError, Predictions};
use crate::model::{Instance, ModelError, RawInstance, SiteSpec};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("number of sites must be even, got {0}")]
    OddN(usize),
    #[error("supply must be at least 2, got {0}")]
    SupplyTooSmall(u64),
    #[error("unknown case {0}")]
    UnknownCase(u8),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("site {0} has demand but no coordinates")]
    MissingGeo(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("bad dates: {0}")]
    NonPositiveDates(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Advice(#[from] AdviceError),
}

fn invalid(msg: impl Into<String>) -> InstanceError {
    InstanceError::InvalidParameter(msg.into())
}

/// `p = 1e-6 + max_i w_i / c_i`, just above the largest unit cost.
pub fn penalty_above(sites: &[SiteSpec]) -> f64 {
    1e-6 + sites.iter().map(|s| s.unit_cost()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    pub horizon: usize,
    pub capacity: u64,
    pub alpha: f64,
    pub beta: f64,
    pub b_mean: f64,
    pub rho_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 50,
            horizon: 10_000,
            capacity: 10,
            alpha: 1.0,
            beta: 1.0,
            b_mean: 10.0,
            rho_grid: default_rho_grid(),
            seed: 0,
        }
    }
}

/// `0.1, 0.2, ..., 1.2`.
pub fn default_rho_grid() -> Vec<f64> {
    (1..=12).map(|k| k as f64 / 10.0).collect()
}

impl SyntheticConfig {
    pub fn check(&self) -> Result<(), InstanceError> {
        if self.n == 0 || self.capacity == 0 {
            return Err(invalid("n and capacity must be positive"));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.b_mean > 0.0) {
            return Err(invalid("alpha, beta and b_mean must be positive"));
        }
        if let Some(r) = self
            .rho_grid
            .iter()
            .find(|r| !(**r > 0.0) || !r.is_finite())
        {
            return Err(invalid(format!("rho {r} must be positive")));
        }
        Ok(())
    }
}

/// One instance shared by every sweep point, and its supply per `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFamily {
    pub base: Instance,
    pub members: Vec<(f64, Instance)>,
}

impl InstanceFamily {
    pub fn from_base(base: Instance, rho_grid: &[f64]) -> Self {
        let members = rho_grid
            .iter()
            .map(|&rho| (rho, base.with_supply(base.supply_for_rho(rho))))
            .collect();
        Self { base, members }
    }
}

/// Draws one synthetic instance (supply left at 0) from `rng`.
pub fn sample_synthetic<R: Rng + ?Sized>(
    config: &SyntheticConfig,
    rng: &mut R,
) -> Result<Instance, InstanceError> {
    config.check()?;
    let weight = Beta::new(config.alpha, config.beta).map_err(|e| invalid(e.to_string()))?;
    let bound = Poisson::new(config.b_mean).map_err(|e| invalid(e.to_string()))?;

    let mut sites = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let w = weight.sample(rng);
        let b = loop {
            let draw = bound.sample(rng) as u64;
            if draw > 0 {
                break draw;
            }
        };
        sites.push(SiteSpec::new(i + 1, w, config.capacity, b));
    }
    let demand = sites
        .iter()
        .map(|site| {
            let arrivals = Poisson::new(site.b as f64).expect("positive mean");
            (0..config.horizon)
                .map(|_| (arrivals.sample(rng) as u64).min(site.b))
                .collect()
        })
        .collect();
    let penalty = penalty_above(&sites);
    Ok(RawInstance {
        penalty,
        supply: 0,
        sites,
        demand,
    }
    .validate()?)
}

pub fn gen_synthetic(config: &SyntheticConfig) -> Result<InstanceFamily, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base = sample_synthetic(config, &mut rng)?;
    Ok(InstanceFamily::from_base(base, &config.rho_grid))
}

/// Two-step instance where half the sites, chosen at random, see a second
/// wave of demand. Returns the instance and the ids of that half.
pub fn gen_lower1(
    n: usize,
    gamma_units: u64,
    epsilon: f64,
    k_const: f64,
    seed: u64,
) -> Result<(Instance, Vec<usize>), InstanceError> {
    if n == 0 || n % 2 == 1 {
        return Err(InstanceError::OddN(n));
    }
    if gamma_units == 0 {
        return Err(invalid("gamma_units must be at least 1"));
    }
    if !(epsilon > 0.0) || !(k_const >= 0.0) {
        return Err(invalid("epsilon must be positive and k non-negative"));
    }
    let p = 1.0;
    let w = p * gamma_units as f64 * epsilon / (2.0 * (k_const + 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hot: Vec<usize> = rand::seq::index::sample(&mut rng, n, n / 2).into_vec();
    hot.sort_unstable();

    let sites = (0..n)
        .map(|i| SiteSpec::new(i + 1, w, gamma_units, gamma_units))
        .collect();
    let demand = (0..n)
        .map(|i| {
            let second = if hot.binary_search(&i).is_ok() {
                gamma_units
            } else {
                0
            };
            vec![gamma_units, second]
        })
        .collect();
    let inst = RawInstance {
        penalty: p,
        supply: n as u64 * gamma_units / 2,
        sites,
        demand,
    }
    .validate()?;
    Ok((inst, hot.into_iter().map(|i| i + 1).collect()))
}

fn unit_sites(weights: &[f64]) -> Vec<SiteSpec> {
    weights
        .iter()
        .enumerate()
        .map(|(i, &w)| SiteSpec::new(i + 1, w, 1, 1))
        .collect()
}

/// Two scenarios sharing a prefix: a cheap site idles while an expensive one
/// sees demand through step `s`; in the second scenario the cheap site then
/// sees `s` more units.
pub fn gen_lower2(s: u64, p: f64) -> Result<(Instance, Instance), InstanceError> {
    if s < 2 {
        return Err(InstanceError::SupplyTooSmall(s));
    }
    let horizon = 2 * s as usize;
    let sites = unit_sites(&[0.0, p / 2.0]);
    let mut cheap = vec![0u64; horizon];
    let mut dear = vec![0u64; horizon];
    cheap[0] = 1;
    dear[..s as usize].fill(1);
    let e1 = RawInstance {
        penalty: p,
        supply: s,
        sites: sites.clone(),
        demand: vec![cheap.clone(), dear.clone()],
    }
    .validate()?;
    cheap[s as usize..].fill(1);
    let e2 = RawInstance {
        penalty: p,
        supply: s,
        sites,
        demand: vec![cheap, dear],
    }
    .validate()?;
    Ok((e1, e2))
}

/// Scenario pairs that perfect advice of a weaker kind cannot tell apart.
///
/// Case 1: identical demand streams (middle site for `k` steps, then the
/// free site for `k` steps), supply `k` versus `2k`. Case 2: supply `k` in
/// both, with the tail at the free site versus the most expensive one.
pub fn gen_advice_weak(case_id: u8, k: u64, p: f64) -> Result<(Instance, Instance), InstanceError> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let k_us = k as usize;
    let horizon = 2 * k_us + 1;
    let sites = unit_sites(&[0.0, p / 2.0, p]);
    let stream = |tail_site: usize| {
        let mut rows = vec![vec![0u64; horizon]; 3];
        for row in rows.iter_mut() {
            row[0] = 1;
        }
        rows[1][1..=k_us].fill(1);
        rows[tail_site][k_us + 1..].fill(1);
        rows
    };
    let build = |supply: u64, demand: Vec<Vec<u64>>| {
        RawInstance {
            penalty: p,
            supply,
            sites: sites.clone(),
            demand,
        }
        .validate()
    };
    match case_id {
        1 => Ok((build(k, stream(0))?, build(2 * k, stream(0))?)),
        2 => Ok((build(k, stream(0))?, build(k, stream(2))?)),
        other => Err(InstanceError::UnknownCase(other)),
    }
}

/// Accurate and inaccurate scenarios sharing one set of predictions.
#[derive(Debug, Clone)]
pub struct ParetoPair {
    pub accurate: Instance,
    pub inaccurate: Instance,
    pub predictions_accurate: Predictions,
    pub predictions_inaccurate: Predictions,
    /// Aggressiveness `lambda * epsilon` the construction is tuned against.
    pub tau: f64,
    pub k: u64,
}

/// `(1 + x)^2 / (4x)`.
pub fn robust_ratio(x: f64) -> f64 {
    (1.0 + x).powi(2) / (4.0 * x)
}

/// Smallest integer `K` above the threshold that makes the two guarantees
/// incompatible for additive constant `c_const`.
pub fn pareto_k(lambda: f64, epsilon: f64, c_const: f64) -> Result<u64, InstanceError> {
    tau_of_lambda(lambda)?;
    if !(epsilon > 0.0 && epsilon < 1.0) || !(c_const > 0.0) {
        return Err(invalid("need 0 < epsilon < 1 and C > 0"));
    }
    let tau = lambda * epsilon;
    let delta = robust_ratio(tau) - robust_ratio(lambda);
    let bound = c_const * (1.0 + tau) / (2.0 * tau * delta) * (4.0 + 2.0 * (1.0 - tau) / tau);
    if !bound.is_finite() || bound > 1e9 {
        return Err(invalid(format!("K threshold {bound} is too large")));
    }
    Ok(bound.floor() as u64 + 1)
}

pub fn gen_pareto(lambda: f64, epsilon: f64, c_const: f64) -> Result<ParetoPair, InstanceError> {
    let k = pareto_k(lambda, epsilon, c_const)?;
    let tau = lambda * epsilon;
    let p = 1.0;
    let sites = unit_sites(&[0.0, 2.0 * tau / (1.0 + tau) * p]);
    let horizon = 2 * k as usize + 1;
    let mut cheap = vec![0u64; horizon];
    let mut dear = vec![0u64; horizon];
    cheap[0] = 1;
    dear[..=k as usize].fill(1);
    let inaccurate = RawInstance {
        penalty: p,
        supply: k,
        sites: sites.clone(),
        demand: vec![cheap.clone(), dear.clone()],
    }
    .validate()?;
    cheap[k as usize + 1..].fill(1);
    let accurate = RawInstance {
        penalty: p,
        supply: k,
        sites,
        demand: vec![cheap, dear],
    }
    .validate()?;
    let d_hat = vec![(k + 1) as f64; 2];
    Ok(ParetoPair {
        predictions_accurate: Predictions::new(&accurate, k as f64, d_hat.clone())?,
        predictions_inaccurate: Predictions::new(&inaccurate, k as f64, d_hat)?,
        accurate,
        inaccurate,
        tau,
        k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteGeo {
    pub site_id: usize,
    pub x: f64,
    pub y: f64,
    pub total_pickups: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaxiOptions {
    pub capacity: u64,
    /// Rescale distances so that `max_i w_i / c_i <= 1`.
    pub normalize_distances: bool,
    /// Zones mode only: split this site at the pickup-weighted median `y`;
    /// zones strictly north of it form a new site.
    pub split_site: Option<usize>,
}

impl Default for TaxiOptions {
    fn default() -> Self {
        Self {
            capacity: 10,
            normalize_distances: true,
            split_site: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaxiInstance {
    /// Supply is 0; use [`InstanceFamily::from_base`] for sweep points.
    pub instance: Instance,
    pub geo: Vec<SiteGeo>,
    pub warehouse: (f64, f64),
    pub dates: Vec<NaiveDate>,
    /// Factor applied to raw distances to obtain `w`.
    pub distance_scale: f64,
}

#[derive(Debug, Deserialize)]
struct PickupRow {
    date: String,
    #[serde(alias = "zone_id")]
    site_id: String,
    pickups: u64,
}

#[derive(Debug, Deserialize)]
struct SiteGeoRow {
    site_id: String,
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
struct ZoneGeoRow {
    zone_id: String,
    x: f64,
    y: f64,
    site_id: usize,
}

fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(
    reader: R,
    what: &str,
) -> Result<Vec<T>, InstanceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let rows = rdr
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| InstanceError::Csv(format!("{what}: {e}")))?;
    if rows.is_empty() {
        return Err(InstanceError::EmptyInput(what.into()));
    }
    Ok(rows)
}

fn parse_site_id(raw: &str) -> Result<usize, InstanceError> {
    raw.parse()
        .map_err(|_| InstanceError::Csv(format!("site id {raw:?} is not a non-negative integer")))
}

type PickupCounts = BTreeMap<(NaiveDate, String), u64>;

/// Pickups per `(date, key)`, summing duplicate rows, with the sorted dates.
fn pickups_by_date(rows: Vec<PickupRow>) -> Result<(Vec<NaiveDate>, PickupCounts), InstanceError> {
    let mut counts = BTreeMap::new();
    let mut dates = BTreeSet::new();
    for row in rows {
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|_| {
            InstanceError::NonPositiveDates(format!("unparseable date {:?}", row.date))
        })?;
        dates.insert(date);
        *counts.entry((date, row.site_id)).or_insert(0) += row.pickups;
    }
    if dates.is_empty() {
        return Err(InstanceError::NonPositiveDates("no dates".into()));
    }
    Ok((dates.into_iter().collect(), counts))
}

/// Demand per site, pickups per site (canonical by id) and coordinates, then
/// the warehouse and weights.
fn assemble(
    mut geo: Vec<SiteGeo>,
    demand: BTreeMap<usize, Vec<u64>>,
    dates: Vec<NaiveDate>,
    options: &TaxiOptions,
) -> Result<TaxiInstance, InstanceError> {
    if options.capacity == 0 {
        return Err(invalid("capacity must be positive"));
    }
    geo.sort_by_key(|g| g.site_id);
    let total: u64 = geo.iter().map(|g| g.total_pickups).sum();
    let warehouse = if total > 0 {
        let t = total as f64;
        (
            geo.iter()
                .map(|g| g.total_pickups as f64 * g.x)
                .sum::<f64>()
                / t,
            geo.iter()
                .map(|g| g.total_pickups as f64 * g.y)
                .sum::<f64>()
                / t,
        )
    } else {
        let n = geo.len() as f64;
        (
            geo.iter().map(|g| g.x).sum::<f64>() / n,
            geo.iter().map(|g| g.y).sum::<f64>() / n,
        )
    };
    let raw_w: Vec<f64> = geo
        .iter()
        .map(|g| (g.x - warehouse.0).hypot(g.y - warehouse.1))
        .collect();
    let c = options.capacity as f64;
    let max_ratio = raw_w.iter().fold(0.0, |m: f64, w| m.max(w / c));
    let distance_scale = if options.normalize_distances && max_ratio > 1.0 {
        1.0 / max_ratio
    } else {
        1.0
    };

    let horizon = dates.len();
    let mut sites = Vec::with_capacity(geo.len());
    let mut rows = Vec::with_capacity(geo.len());
    for (g, w) in geo.iter().zip(&raw_w) {
        let row = demand
            .get(&g.site_id)
            .cloned()
            .unwrap_or_else(|| vec![0; horizon]);
        let b = row.iter().copied().max().unwrap_or(0).max(1);
        sites.push(SiteSpec::new(
            g.site_id,
            w * distance_scale,
            options.capacity,
            b,
        ));
        rows.push(row);
    }
    let penalty = penalty_above(&sites);
    let instance = RawInstance {
        penalty,
        supply: 0,
        sites,
        demand: rows,
    }
    .validate()?;
    Ok(TaxiInstance {
        instance,
        geo,
        warehouse,
        dates,
        distance_scale,
    })
}

/// Site-level ingestion: pickups `(date, site_id, pickups)` and coordinates
/// `(site_id, x, y)`.
pub fn ingest_taxi<R1: Read, R2: Read>(
    demand_csv: R1,
    geo_csv: R2,
    options: &TaxiOptions,
) -> Result<TaxiInstance, InstanceError> {
    if options.split_site.is_some() {
        return Err(invalid("site splitting needs zone-level input"));
    }
    let (dates, counts) = pickups_by_date(read_rows(demand_csv, "demand")?)?;
    let coords: Vec<SiteGeoRow> = read_rows(geo_csv, "geo")?;
    let mut by_id = HashMap::new();
    for row in coords {
        let id = parse_site_id(&row.site_id)?;
        if by_id.insert(id, (row.x, row.y)).is_some() {
            return Err(InstanceError::Csv(format!(
                "duplicate coordinates for site {id}"
            )));
        }
    }

    let index: HashMap<NaiveDate, usize> = dates.iter().enumerate().map(|(t, d)| (*d, t)).collect();
    let mut demand: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for ((date, raw_id), q) in counts {
        let id = parse_site_id(&raw_id)?;
        if !by_id.contains_key(&id) {
            return Err(InstanceError::MissingGeo(raw_id));
        }
        demand.entry(id).or_insert_with(|| vec![0; dates.len()])[index[&date]] += q;
    }
    let geo = by_id
        .into_iter()
        .map(|(site_id, (x, y))| SiteGeo {
            site_id,
            x,
            y,
            total_pickups: demand.get(&site_id).map_or(0, |r| r.iter().sum()),
        })
        .collect();
    assemble(geo, demand, dates, options)
}

/// Zone-level ingestion: pickups `(date, zone_id, pickups)` and zone
/// coordinates with their site `(zone_id, x, y, site_id)`. Site centroids are
/// pickup-weighted means of their zones.
pub fn ingest_taxi_zones<R1: Read, R2: Read>(
    demand_csv: R1,
    zone_csv: R2,
    options: &TaxiOptions,
) -> Result<TaxiInstance, InstanceError> {
    let (dates, counts) = pickups_by_date(read_rows(demand_csv, "demand")?)?;
    let zones: Vec<ZoneGeoRow> = read_rows(zone_csv, "zones")?;
    let mut zone_site: HashMap<String, usize> = HashMap::new();
    for z in &zones {
        if zone_site.insert(z.zone_id.clone(), z.site_id).is_some() {
            return Err(InstanceError::Csv(format!("duplicate zone {}", z.zone_id)));
        }
    }
    let mut zone_total: HashMap<&str, u64> = HashMap::new();
    for ((_, zone), q) in &counts {
        if !zone_site.contains_key(zone) {
            return Err(InstanceError::MissingGeo(zone.clone()));
        }
        *zone_total.entry(zone.as_str()).or_insert(0) += q;
    }

    if let Some(target) = options.split_site {
        let mut members: Vec<(&ZoneGeoRow, u64)> = zones
            .iter()
            .filter(|z| z.site_id == target)
            .map(|z| (z, zone_total.get(z.zone_id.as_str()).copied().unwrap_or(0)))
            .collect();
        if members.is_empty() {
            return Err(invalid(format!("split site {target} has no zones")));
        }
        members.sort_by(|a, b| a.0.y.total_cmp(&b.0.y));
        let weight: u64 = members.iter().map(|m| m.1).sum();
        let mut running = 0u64;
        let mut median = members.last().unwrap().0.y;
        for (z, q) in &members {
            running += q;
            if 2 * running >= weight {
                median = z.y;
                break;
            }
        }
        let north_id = zones.iter().map(|z| z.site_id).max().unwrap() + 1;
        for (z, _) in members.iter().filter(|(z, _)| z.y > median) {
            zone_site.insert(z.zone_id.clone(), north_id);
        }
    }

    let index: HashMap<NaiveDate, usize> = dates.iter().enumerate().map(|(t, d)| (*d, t)).collect();
    let mut demand: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for ((date, zone), q) in &counts {
        let site = zone_site[zone];
        demand.entry(site).or_insert_with(|| vec![0; dates.len()])[index[date]] += q;
    }

    // weighted sums per site: (sum q x, sum q y, sum q, plain x, plain y, count)
    let mut acc: BTreeMap<usize, [f64; 6]> = BTreeMap::new();
    for z in &zones {
        let q = zone_total.get(z.zone_id.as_str()).copied().unwrap_or(0) as f64;
        let a = acc.entry(zone_site[&z.zone_id]).or_insert([0.0; 6]);
        a[0] += q * z.x;
        a[1] += q * z.y;
        a[2] += q;
        a[3] += z.x;
        a[4] += z.y;
        a[5] += 1.0;
    }
    let geo = acc
        .into_iter()
        .map(|(site_id, a)| {
            let (x, y) = if a[2] > 0.0 {
                (a[0] / a[2], a[1] / a[2])
            } else {
                (a[3] / a[5], a[4] / a[5])
            };
            SiteGeo {
                site_id,
                x,
                y,
                total_pickups: a[2] as u64,
            }
        })
        .collect();
    assemble(geo, demand, dates, options)
}
