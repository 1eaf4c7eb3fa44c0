#![allow(dead_code)]

use std::sync::Arc;

use clusterinf::{fit_ols, ClusterPartition, Dataset, RegressionFit, Restriction};
use clusterinf_testkit::Instance;
use nalgebra::{DMatrix, DVector};

pub fn names(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("x{j}")).collect()
}

pub fn dataset(y: &DVector<f64>, x: &DMatrix<f64>) -> Dataset {
    Dataset::from_matrix(y.clone(), x.clone(), names(x.ncols())).unwrap()
}

pub fn fit_with(y: &DVector<f64>, x: &DMatrix<f64>, assign: &[usize]) -> RegressionFit {
    let p = ClusterPartition::from_labels(assign).unwrap();
    fit_ols(Arc::new(dataset(y, x)), Arc::new(p)).unwrap()
}

pub fn fit(inst: &Instance) -> RegressionFit {
    fit_with(&inst.y, &inst.x, &inst.clusters)
}

pub fn restricted(inst: &Instance, rest: &Restriction) -> RegressionFit {
    fit(inst).with_restriction(rest).unwrap()
}

pub fn unit(k: usize, j: usize) -> DVector<f64> {
    let mut a = DVector::zeros(k);
    a[j] = 1.0;
    a
}

pub fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
