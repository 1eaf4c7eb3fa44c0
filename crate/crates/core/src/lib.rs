//! Cluster-robust inference for linear regression: cluster-robust variance
//! estimators, wild and pairs cluster bootstraps, leverage diagnostics,
//! tests for the clustering level, randomization inference and Monte Carlo
//! experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod crve;
pub mod data;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod estimation;
pub mod io;
pub mod level_tests;
pub mod linalg;
pub mod par;
pub mod randomization;
pub mod rng;
pub mod simulation;

pub use data::{build_partition, is_nested, within_transform, Absorbed, ClusterPartition, CrossedPartition, Dataset};
pub use error::{Error, Result};
pub use estimation::{fit_ols, fit_restricted, ClusterBlock, RegressionFit, Restriction, RestrictedPart};
pub use crve::{cv1, cv2, cv3, cv3_jackknife, hc1, t_test, twoway_cv1, wald_test, CovEstimate, CovKind, Jackknife, Reference, TestResult};
pub use bootstrap::{boot_p_value, AuxDistribution, BootstrapResult, PValueKind, Studentization, WildOptions, WildVariant};
