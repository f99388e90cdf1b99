//! Exact online event engine.
//!
//! Each step runs, for every site: demand is served from on-hand stock and
//! any shortfall is charged `p` per unit; the policy then names a request per
//! site; the hub grants sites in ascending (canonical) index order, each
//! receiving `min(remaining supply, request)`; granted units join the
//! post-demand remainder as next step's stock. Every non-zero grant pays
//! `w * ceil(grant / c)`, so a truncated final shipment still costs one `w`.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Instance, SiteSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("policy {policy} requested {value} units for site {site_id} at step {t}")]
    NegativeRequest {
        policy: String,
        t: usize,
        site_id: usize,
        value: i64,
    },
    #[error("accounting mismatch in {what}: engine {engine}, recomputed {recomputed}")]
    AccountingMismatch {
        what: String,
        engine: f64,
        recomputed: f64,
    },
    #[error("trace export: {0}")]
    Export(String),
}

/// What a policy may observe at step `t`, after demand has been realized and
/// before replenishment. Remaining hub supply is deliberately absent.
#[derive(Debug, Clone, Copy)]
pub struct StateView<'a> {
    /// Current step, 1-based.
    pub t: usize,
    pub sites: &'a [SiteSpec],
    pub penalty: f64,
    /// Stock on hand when this step's demand arrived (`k_i^t`).
    pub stock: &'a [u64],
    /// Post-demand remainder (`r_i^t`).
    pub remainder: &'a [u64],
    /// Cumulative grants through the previous step (`L_i^{t-1}`).
    pub cum_grants: &'a [u64],
    /// Cumulative demand including this step (`D_i^t`).
    pub cum_demand: &'a [u64],
    /// Grants made at the previous step.
    pub last_grants: &'a [u64],
}

/// A replenishment policy driven by the engine.
///
/// `requests` fills `out` (pre-zeroed, one slot per site) with the units to
/// request from the hub. `notify_grants` reports what was actually granted,
/// which is the only way a policy learns that the hub ran dry.
pub trait Policy {
    fn name(&self) -> String;

    fn requests(&mut self, view: &StateView<'_>, demands: &[u64], out: &mut [i64]);

    fn notify_grants(&mut self, _grants: &[u64]) {}
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn requests(&mut self, view: &StateView<'_>, demands: &[u64], out: &mut [i64]) {
        (**self).requests(view, demands, out)
    }

    fn notify_grants(&mut self, grants: &[u64]) {
        (**self).notify_grants(grants)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub site_id: usize,
    pub demand: u64,
    pub penalty_units: u64,
    pub request: u64,
    pub grant: u64,
    pub stock_after: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteTotals {
    pub site_id: usize,
    pub shipments: u64,
    pub unmet_units: u64,
    /// `L_i`, total units granted.
    pub granted: u64,
    /// `D_i`, total demand.
    pub demand: u64,
    /// Stock left at the end of the horizon (`s_i^end`).
    pub terminal_stock: u64,
    pub transport: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub transport: f64,
    pub penalty: f64,
    pub total: f64,
}

/// Complete record of one run. Sites appear in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub policy: String,
    pub sites: Vec<SiteSpec>,
    pub penalty: f64,
    pub supply: u64,
    pub horizon: usize,
    /// Step-major: record for step `t` (1-based), site `i` lives at
    /// `(t - 1) * n + i`.
    pub records: Vec<StepRecord>,
    pub totals: Vec<SiteTotals>,
    /// Hub supply left at the end (`s^end`).
    pub supply_end: u64,
    /// First step at which some grant fell short of its request.
    pub exhausted_at: Option<usize>,
    pub cost: CostBreakdown,
}

impl Trace {
    pub fn n(&self) -> usize {
        self.sites.len()
    }

    /// Records of step `t` (1-based), one per site.
    pub fn step(&self, t: usize) -> &[StepRecord] {
        let n = self.n();
        &self.records[(t - 1) * n..t * n]
    }

    pub fn record(&self, t: usize, i: usize) -> &StepRecord {
        &self.records[(t - 1) * self.n() + i]
    }

    /// Cumulative `(L_i^t, D_i^t)` for `t = 1..=T` at site `i`.
    pub fn cumulative(&self, i: usize) -> Vec<(u64, u64)> {
        let mut granted = 0;
        let mut demand = 0;
        (1..=self.horizon)
            .map(|t| {
                let rec = self.record(t, i);
                granted += rec.grant;
                demand += rec.demand;
                (granted, demand)
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.cost.total
    }

    /// Step records as CSV: `t,site_id,demand,penalty_units,request,grant,stock_after`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EngineError> {
        let mut wtr = csv::Writer::from_writer(out);
        for rec in &self.records {
            wtr.serialize(rec)
                .map_err(|e| EngineError::Export(e.to_string()))?;
        }
        wtr.flush().map_err(|e| EngineError::Export(e.to_string()))
    }

    /// Per-site totals as CSV: `site_id,transport,penalty`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<(), EngineError> {
        #[derive(Serialize)]
        struct Row {
            site_id: usize,
            transport: f64,
            penalty: f64,
        }
        let mut wtr = csv::Writer::from_writer(out);
        for tot in &self.totals {
            wtr.serialize(Row {
                site_id: tot.site_id,
                transport: tot.transport,
                penalty: tot.penalty,
            })
            .map_err(|e| EngineError::Export(e.to_string()))?;
        }
        wtr.flush().map_err(|e| EngineError::Export(e.to_string()))
    }
}

fn shipments(grant: u64, capacity: u64) -> u64 {
    grant.div_ceil(capacity)
}

/// Runs `policy` over the whole horizon of `instance`.
pub fn run<P: Policy + ?Sized>(instance: &Instance, policy: &mut P) -> Result<Trace, EngineError> {
    let n = instance.n();
    let sites = instance.sites();
    let horizon = instance.horizon();
    let name = policy.name();

    let mut stock: Vec<u64> = sites.iter().map(|s| s.b).collect();
    let mut remainder = vec![0u64; n];
    let mut cum_grants = vec![0u64; n];
    let mut cum_demand = vec![0u64; n];
    let mut grants = vec![0u64; n];
    let mut demands = vec![0u64; n];
    let mut unmet = vec![0u64; n];
    let mut requests = vec![0i64; n];
    let mut shipment_count = vec![0u64; n];
    let mut unmet_units = vec![0u64; n];
    let mut supply_left = instance.supply();
    let mut exhausted_at = None;
    let mut records = Vec::with_capacity(n * horizon);

    for t in 1..=horizon {
        for i in 0..n {
            let d = instance.demand_row(i)[t - 1];
            demands[i] = d;
            unmet[i] = d.saturating_sub(stock[i]);
            remainder[i] = stock[i].saturating_sub(d);
            cum_demand[i] += d;
            unmet_units[i] += unmet[i];
        }

        requests.fill(0);
        let view = StateView {
            t,
            sites,
            penalty: instance.penalty(),
            stock: &stock,
            remainder: &remainder,
            cum_grants: &cum_grants,
            cum_demand: &cum_demand,
            last_grants: &grants,
        };
        policy.requests(&view, &demands, &mut requests);

        for i in 0..n {
            let request = requests[i];
            if request < 0 {
                return Err(EngineError::NegativeRequest {
                    policy: name,
                    t,
                    site_id: sites[i].site_id,
                    value: request,
                });
            }
            let request = request as u64;
            let grant = request.min(supply_left);
            supply_left -= grant;
            if grant < request && exhausted_at.is_none() {
                exhausted_at = Some(t);
            }
            if grant > 0 {
                shipment_count[i] += shipments(grant, sites[i].c);
            }
            grants[i] = grant;
            cum_grants[i] += grant;
            stock[i] = remainder[i] + grant;
            records.push(StepRecord {
                t,
                site_id: sites[i].site_id,
                demand: demands[i],
                penalty_units: unmet[i],
                request,
                grant,
                stock_after: stock[i],
            });
        }
        policy.notify_grants(&grants);
    }

    let p = instance.penalty();
    let totals: Vec<SiteTotals> = (0..n)
        .map(|i| SiteTotals {
            site_id: sites[i].site_id,
            shipments: shipment_count[i],
            unmet_units: unmet_units[i],
            granted: cum_grants[i],
            demand: cum_demand[i],
            terminal_stock: stock[i],
            transport: sites[i].w * shipment_count[i] as f64,
            penalty: p * unmet_units[i] as f64,
        })
        .collect();
    let cost = sum_costs(totals.iter().map(|t| (t.transport, t.penalty)));

    Ok(Trace {
        policy: name,
        sites: sites.to_vec(),
        penalty: p,
        supply: instance.supply(),
        horizon,
        records,
        totals,
        supply_end: supply_left,
        exhausted_at,
        cost,
    })
}

fn sum_costs(per_site: impl Iterator<Item = (f64, f64)>) -> CostBreakdown {
    let mut cost = CostBreakdown {
        transport: 0.0,
        penalty: 0.0,
        total: 0.0,
    };
    for (transport, penalty) in per_site {
        cost.transport += transport;
        cost.penalty += penalty;
        cost.total += transport + penalty;
    }
    cost
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Replays the raw event log, recomputes the objective from scratch and
/// checks it against the totals the engine accumulated.
pub fn cost_of(trace: &Trace) -> Result<CostBreakdown, EngineError> {
    let n = trace.n();
    let mismatch = |what: String, engine: f64, recomputed: f64| EngineError::AccountingMismatch {
        what,
        engine,
        recomputed,
    };
    if trace.records.len() != n * trace.horizon {
        return Err(mismatch(
            "record count".into(),
            trace.records.len() as f64,
            (n * trace.horizon) as f64,
        ));
    }

    let mut stock: Vec<u64> = trace.sites.iter().map(|s| s.b).collect();
    let mut ships = vec![0u64; n];
    let mut unmet = vec![0u64; n];
    let mut granted = 0u64;
    for t in 1..=trace.horizon {
        for (i, rec) in trace.step(t).iter().enumerate() {
            let expect_unmet = rec.demand.saturating_sub(stock[i]);
            if rec.penalty_units != expect_unmet {
                return Err(mismatch(
                    format!("penalty units at step {t} site {}", rec.site_id),
                    rec.penalty_units as f64,
                    expect_unmet as f64,
                ));
            }
            let after = stock[i].saturating_sub(rec.demand) + rec.grant;
            if rec.stock_after != after || rec.grant > rec.request {
                return Err(mismatch(
                    format!("stock at step {t} site {}", rec.site_id),
                    rec.stock_after as f64,
                    after as f64,
                ));
            }
            stock[i] = after;
            unmet[i] += expect_unmet;
            granted += rec.grant;
            if rec.grant > 0 {
                ships[i] += shipments(rec.grant, trace.sites[i].c);
            }
        }
    }
    if granted + trace.supply_end != trace.supply {
        return Err(mismatch(
            "supply conservation".into(),
            (granted + trace.supply_end) as f64,
            trace.supply as f64,
        ));
    }

    let recomputed = sum_costs((0..n).map(|i| {
        (
            trace.sites[i].w * ships[i] as f64,
            trace.penalty * unmet[i] as f64,
        )
    }));
    for (what, engine, again) in [
        ("transport", trace.cost.transport, recomputed.transport),
        ("penalty", trace.cost.penalty, recomputed.penalty),
        ("total", trace.cost.total, recomputed.total),
    ] {
        if !close(engine, again) {
            return Err(mismatch(what.into(), engine, again));
        }
    }
    Ok(recomputed)
}
