//! Day-ahead electricity market clearing over DC-approximated networks.
//!
//! The crate clears markets under national, zonal and nodal network
//! representations, restores physical feasibility through redispatch and
//! prices the cleared allocation under IP, convex hull and Join pricing, or
//! runs a simplified iterative uniform-pricing clearing that rejects loss-making
//! sellers.

pub mod lpmilp;
pub mod grid;
pub mod market;
pub mod clearing;
pub mod fixtures;
pub mod redispatch;
pub mod pricing;
pub mod euphemia;
pub mod report;
pub mod ingest;
pub mod pipeline;
