//! Offline optimum.
//!
//! With the full demand stream known, it is optimal to ship everything at the
//! first step and to fill net demand greedily in increasing unit-cost order.
//! The relaxed objective charges transport fractionally (`w L / c`) and is a
//! lower bound on any feasible offline schedule.

use serde::Serialize;
use thiserror::Error;

use crate::model::Instance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OfflineError {
    #[error("enumeration needs {needed} candidates, budget is {budget}")]
    EnumerationBudgetExceeded { needed: f64, budget: u64 },
}

/// Default cap on the number of allocations the brute-force oracle visits.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineSolution {
    pub site_ids: Vec<usize>,
    /// Net demand `(D_i - b_i)_+`.
    pub net_demand: Vec<u64>,
    /// Pivotal site, 1-based; 0 when there is no supply at all.
    pub pivotal_index: usize,
    pub pivotal_value: f64,
    pub allocation: Vec<u64>,
    pub gamma_star: Vec<f64>,
    pub transport_relaxed: f64,
    pub penalty: f64,
    pub cost_relaxed: f64,
    pub cost_rounded: f64,
}

impl OfflineSolution {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }
}

/// Greedy pivot over an ordered list of net demands: `(i*, zeta)` with `i*`
/// 1-based. Surplus gives `(n, 1)`; `budget == 0` gives `(0, 0)`.
pub(crate) fn pivot(net: &[u64], budget: u64) -> (usize, f64) {
    let total: u64 = net.iter().sum();
    if budget >= total {
        return (net.len(), 1.0);
    }
    if budget == 0 {
        return (0, 0.0);
    }
    let mut before = 0u64;
    for (i, &n_i) in net.iter().enumerate() {
        if before + n_i >= budget {
            return (i + 1, (budget - before) as f64 / n_i as f64);
        }
        before += n_i;
    }
    unreachable!("budget below total must be crossed")
}

pub fn solve_offline(instance: &Instance) -> OfflineSolution {
    let net = instance.net_demands();
    let s = instance.supply();
    let n = net.len();
    let (pivotal_index, pivotal_value) = pivot(&net, s);

    let mut allocation = vec![0u64; n];
    let mut gamma_star = vec![0.0; n];
    let mut left = s;
    for i in 0..n {
        let give = net[i].min(left);
        allocation[i] = give;
        left -= give;
        gamma_star[i] = match (i + 1).cmp(&pivotal_index) {
            std::cmp::Ordering::Less => 1.0,
            std::cmp::Ordering::Equal => pivotal_value,
            std::cmp::Ordering::Greater => 0.0,
        };
    }

    let p = instance.penalty();
    let sites = instance.sites();
    let mut transport_relaxed = 0.0;
    let mut transport_rounded = 0.0;
    let mut unmet = 0u64;
    for i in 0..n {
        let site = &sites[i];
        transport_relaxed += site.w * allocation[i] as f64 / site.c as f64;
        transport_rounded += site.w * allocation[i].div_ceil(site.c) as f64;
        unmet += net[i] - allocation[i];
    }
    let penalty = p * unmet as f64;

    OfflineSolution {
        site_ids: sites.iter().map(|s| s.site_id).collect(),
        net_demand: net,
        pivotal_index,
        pivotal_value,
        allocation,
        gamma_star,
        transport_relaxed,
        penalty,
        cost_relaxed: transport_relaxed + penalty,
        cost_rounded: transport_rounded + penalty,
    }
}

pub fn relaxed_lower_bound(instance: &Instance) -> f64 {
    solve_offline(instance).cost_relaxed
}

/// Exhaustive minimizer of the relaxed objective over integer allocations
/// `L_i <= N_i`, `sum L_i <= s`. Returns the best allocation found first in
/// lexicographic order and its cost.
pub fn brute_force_offline(
    instance: &Instance,
    budget: u64,
) -> Result<(Vec<u64>, f64), OfflineError> {
    let net = instance.net_demands();
    let s = instance.supply();
    let caps: Vec<u64> = net.iter().map(|&n_i| n_i.min(s)).collect();
    let needed: f64 = caps.iter().map(|&c| c as f64 + 1.0).product();
    if needed > budget as f64 {
        return Err(OfflineError::EnumerationBudgetExceeded { needed, budget });
    }

    let p = instance.penalty();
    let unit: Vec<f64> = instance
        .sites()
        .iter()
        .map(|site| site.w / site.c as f64)
        .collect();
    let score = |alloc: &[u64]| -> f64 {
        alloc
            .iter()
            .enumerate()
            .map(|(i, &l)| unit[i] * l as f64 + p * (net[i] - l) as f64)
            .sum()
    };

    let n = net.len();
    let mut current = vec![0u64; n];
    let mut best = (current.clone(), score(&current));
    // odometer over the box, skipping points above the supply
    loop {
        let used: u64 = current.iter().sum();
        if used <= s {
            let cost = score(&current);
            if cost < best.1 {
                best = (current.clone(), cost);
            }
        }
        let mut k = 0;
        while k < n && current[k] == caps[k] {
            current[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
        current[k] += 1;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::instance_e;
    use crate::model::{RawInstance, SiteSpec};

    #[test]
    fn instance_e_optimum() {
        let sol = solve_offline(&instance_e());
        assert_eq!(sol.net_demand, vec![2, 1]);
        assert_eq!(sol.pivotal_index, 2);
        assert_eq!(sol.pivotal_value, 1.0);
        assert_eq!(sol.allocation, vec![2, 1]);
        assert!((sol.cost_relaxed - 0.7).abs() < 1e-12);
        assert_eq!(sol.penalty, 0.0);
        let (alloc, cost) = brute_force_offline(&instance_e(), DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(alloc, vec![2, 1]);
        assert!((cost - sol.cost_relaxed).abs() < 1e-9);
    }

    #[test]
    fn zero_supply_pays_full_penalty() {
        let sol = solve_offline(&instance_e().with_supply(0));
        assert_eq!(sol.allocation, vec![0, 0]);
        assert_eq!(sol.gamma_star, vec![0.0, 0.0]);
        assert_eq!(sol.pivotal_index, 0);
        assert_eq!(sol.cost_relaxed, 3.0);
    }

    #[test]
    fn one_unit_goes_to_cheapest_site() {
        let e = instance_e().with_supply(1);
        let sol = solve_offline(&e);
        assert_eq!(sol.allocation, vec![1, 0]);
        assert_eq!(sol.pivotal_index, 1);
        assert_eq!(sol.pivotal_value, 0.5);
        assert!((sol.cost_relaxed - 2.1).abs() < 1e-12);
        let (alloc, cost) = brute_force_offline(&e, 100).unwrap();
        assert_eq!(alloc, vec![1, 0]);
        assert!((cost - 2.1).abs() < 1e-12);
    }

    #[test]
    fn surplus_marks_last_site_pivotal() {
        let sol = solve_offline(&instance_e().with_supply(50));
        assert_eq!((sol.pivotal_index, sol.pivotal_value), (2, 1.0));
        assert_eq!(sol.gamma_star, vec![1.0, 1.0]);
        assert_eq!(sol.penalty, 0.0);
    }

    #[test]
    fn no_net_demand_costs_nothing() {
        let inst = RawInstance {
            penalty: 1.0,
            supply: 7,
            sites: vec![SiteSpec::new(0, 0.3, 2, 4), SiteSpec::new(1, 0.9, 1, 2)],
            demand: vec![vec![4, 0], vec![1, 1]],
        }
        .validate()
        .unwrap();
        assert_eq!(solve_offline(&inst).cost_relaxed, 0.0);
        assert_eq!(brute_force_offline(&inst, 10).unwrap().1, 0.0);
    }

    #[test]
    fn rounded_charges_whole_shipments() {
        let inst = RawInstance {
            penalty: 1.0,
            supply: 5,
            sites: vec![SiteSpec::new(0, 2.0, 4, 1)],
            demand: vec![vec![1, 1, 1, 1, 1, 1]],
        }
        .validate()
        .unwrap();
        let sol = solve_offline(&inst);
        assert_eq!(sol.allocation, vec![5]);
        assert!((sol.cost_relaxed - 2.5).abs() < 1e-12);
        assert!((sol.cost_rounded - 4.0).abs() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let err = brute_force_offline(&instance_e(), 5).unwrap_err();
        assert!(matches!(
            err,
            OfflineError::EnumerationBudgetExceeded { .. }
        ));
    }

    #[test]
    fn solution_exports_as_json() {
        let text = solve_offline(&instance_e()).to_json_pretty();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["pivotal_index"], 2);
        assert_eq!(v["allocation"], serde_json::json!([2, 1]));
    }
}
