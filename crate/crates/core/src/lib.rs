//! Labor flow network analytics.
//!
//! The crate turns job-history records into a directed, weighted network of
//! firms, extracts its core, detects a hierarchy of firm clusters with
//! recursive Louvain, and measures how those clusters line up with industry,
//! region and skill metadata. It also aggregates flows between arbitrary firm
//! groupings, fits influx/outflux and market-cap trends, and generates
//! synthetic data with planted structure to check all of the above.

pub mod features;
pub mod flows;
pub mod graph;
pub mod hierarchy;
pub mod metrics;
pub mod month;
pub mod overrep;
pub mod records;
pub mod seed;
pub mod synth;
pub mod trends;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use graph::{build_network, extract_core, firm_size, LaborFlowNetwork};
pub use hierarchy::{detect_hierarchy, louvain, modularity, CommunityTree, Partition};
pub use month::{Month, MonthWindow};
pub use records::{EmploymentSpell, MarketCapRecord, Profile, TransitionRecord};
