//! Regional solar PV capacity modelling.
//!
//! The crate covers the full pipeline: region × year panel data and its
//! normalization ([`panel`]), correlation statistics and error metrics
//! ([`stats`]), correlation-based feature selection ([`select`]), a
//! second-order gradient-boosted regression-tree learner ([`gbtree`]),
//! TreeSHAP attributions and PCA feature clustering ([`explain`]), and the
//! capacity applications: scaling to national totals, allocation of
//! unallocated capacity and the deployment index ([`apps`]).

pub mod panel;
pub mod stats;
pub mod gbtree;
pub mod select;
pub mod explain;
pub mod apps;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
