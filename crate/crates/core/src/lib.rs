//! Online shared supply allocation: many sites draw stock from one finite hub,
//! pay a fixed charge per shipment and lose every unit of demand they cannot
//! serve.

// `!(x >= 0.0)` rejects NaN along with negatives; keep it that way.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advice;
pub mod engine;
pub mod harness;
pub mod instances;
pub mod model;
pub mod offline;
pub mod policies;

pub use engine::{cost_of, run, CostBreakdown, Policy, StateView, Trace};
pub use model::{GammaVector, Instance, ModelError, RawInstance, SiteSpec};
