#![allow(dead_code)]

use ossa_core::model::{Instance, RawInstance, SiteSpec};
use rand::Rng;

/// Shape limits for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_n: usize,
    pub max_t: usize,
    pub max_b: u64,
    pub max_c: u64,
}

pub const SMALL: Shape = Shape {
    max_n: 10,
    max_t: 200,
    max_b: 8,
    max_c: 6,
};

/// A valid instance with random costs, bursty demand and a supply level
/// anywhere from empty to surplus.
pub fn random_instance<R: Rng>(rng: &mut R, shape: Shape) -> Instance {
    let n = rng.random_range(1..=shape.max_n);
    let horizon = rng.random_range(1..=shape.max_t);
    let penalty = rng.random_range(0.2..4.0);
    let sites: Vec<SiteSpec> = (0..n)
        .map(|i| {
            let c = rng.random_range(1..=shape.max_c);
            let b = rng.random_range(1..=shape.max_b);
            let w = if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random_range(0.0..=1.0) * penalty * c as f64
            };
            SiteSpec::new(i + 1, w, c, b)
        })
        .collect();
    let demand: Vec<Vec<u64>> = sites
        .iter()
        .map(|s| {
            let busy = rng.random_range(0.0..=1.0);
            (0..horizon)
                .map(|_| {
                    if rng.random_bool(busy) {
                        rng.random_range(0..=s.b)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let total: u64 = demand.iter().flatten().sum();
    let initial: u64 = sites.iter().map(|s| s.b).sum();
    let excess = total.saturating_sub(initial);
    let supply = match rng.random_range(0..10) {
        0 => 0,
        1 => excess + rng.random_range(0..=20),
        _ => (rng.random_range(0.0..1.3) * excess as f64) as u64,
    };
    RawInstance {
        penalty,
        supply,
        sites,
        demand,
    }
    .validate()
    .expect("generated instance is valid")
}
