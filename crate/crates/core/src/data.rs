//! Datasets, cluster partitions and fixed-effect absorption.

use std::collections::HashMap;
use std::fmt::Display;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Outcome vector and named regressor matrix for an unweighted linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    names: Vec<String>,
    absorbed: usize,
}

impl Dataset {
    /// Builds a dataset from an outcome and named columns.
    pub fn new(y: Vec<f64>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = y.len();
        let k = columns.len();
        let mut x = DMatrix::zeros(n, k);
        let mut names = Vec::with_capacity(k);
        for (j, (name, col)) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(Error::LengthMismatch {
                    what: "regressor column",
                    expected: n,
                    found: col.len(),
                });
            }
            x.set_column(j, &DVector::from_vec(col));
            names.push(name);
        }
        Self::from_matrix(DVector::from_vec(y), x, names)
    }

    pub fn from_matrix(y: DVector<f64>, x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Empty("dataset has no observations"));
        }
        if x.ncols() == 0 {
            return Err(Error::Empty("dataset has no regressors"));
        }
        if x.nrows() != n {
            return Err(Error::LengthMismatch {
                what: "regressor rows",
                expected: n,
                found: x.nrows(),
            });
        }
        if names.len() != x.ncols() {
            return Err(Error::LengthMismatch {
                what: "column names",
                expected: x.ncols(),
                found: names.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "outcome".into(), row: i });
        }
        for (j, col) in x.column_iter().enumerate() {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: names[j].clone(), row: i });
            }
        }
        Ok(Self { y, x, names, absorbed: 0 })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Number of fixed-effect parameters absorbed into this dataset.
    pub fn absorbed_fe(&self) -> usize {
        self.absorbed
    }

    /// Overrides the absorbed-parameter count used for degrees of freedom.
    pub fn with_absorbed_fe(mut self, absorbed: usize) -> Self {
        self.absorbed = absorbed;
        self
    }

    /// Same regressors, new outcome.
    pub fn with_outcome(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n_obs() {
            return Err(Error::LengthMismatch {
                what: "outcome",
                expected: self.n_obs(),
                found: y.len(),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "outcome".into(), row: i });
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Appends a regressor column.
    pub fn with_column(&self, name: &str, values: &[f64]) -> Result<Self> {
        if values.len() != self.n_obs() {
            return Err(Error::LengthMismatch {
                what: "appended column",
                expected: self.n_obs(),
                found: values.len(),
            });
        }
        let k = self.n_regressors();
        let x = self.x.clone().insert_column(k, 0.0);
        let mut names = self.names.clone();
        names.push(name.to_string());
        let mut out = Self::from_matrix(self.y.clone(), x, names)?;
        out.x.set_column(k, &DVector::from_column_slice(values));
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: name.into(), row: i });
        }
        out.absorbed = self.absorbed;
        Ok(out)
    }

    /// Replaces column `j` in place.
    pub fn with_replaced_column(&self, j: usize, values: &[f64]) -> Result<Self> {
        if values.len() != self.n_obs() {
            return Err(Error::LengthMismatch {
                what: "replacement column",
                expected: self.n_obs(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: self.names[j].clone(), row: i });
        }
        let mut out = self.clone();
        out.x.set_column(j, &DVector::from_column_slice(values));
        Ok(out)
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let x = self.x.select_columns(cols);
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        let mut out = Self::from_matrix(self.y.clone(), x, names)?;
        out.absorbed = self.absorbed;
        Ok(out)
    }

    /// Keeps the listed rows (used by the pairs bootstrap oracle and tests).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        let mut out = Self::from_matrix(y, x, self.names.clone())?;
        out.absorbed = self.absorbed;
        Ok(out)
    }
}

/// Assignment of N observations to G disjoint clusters, indexed in order of
/// first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    assignment: Vec<usize>,
    labels: Vec<String>,
    sizes: Vec<usize>,
    members: Vec<Vec<usize>>,
}

/// Builds a partition from per-observation labels.
pub fn build_partition<L: Hash + Eq + Display>(labels: &[L]) -> Result<ClusterPartition> {
    ClusterPartition::from_labels(labels)
}

impl ClusterPartition {
    pub fn from_labels<L: Hash + Eq + Display>(labels: &[L]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("cluster labels"));
        }
        let mut index: HashMap<&L, usize> = HashMap::new();
        let mut names = Vec::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = index.len();
                *index.entry(l).or_insert_with(|| {
                    names.push(l.to_string());
                    next
                })
            })
            .collect();
        Ok(Self::from_dense(assignment, names))
    }

    /// Every observation in its own cluster.
    pub fn singletons(n: usize) -> Self {
        Self::from_dense((0..n).collect(), (0..n).map(|i| i.to_string()).collect())
    }

    /// One cluster holding everything.
    pub fn single(n: usize) -> Self {
        Self::from_dense(vec![0; n], vec!["all".to_string()])
    }

    /// `assignment` must already use first-appearance indices `0..G`.
    fn from_dense(assignment: Vec<usize>, labels: Vec<String>) -> Self {
        let g = labels.len();
        let mut members = vec![Vec::new(); g];
        for (i, &c) in assignment.iter().enumerate() {
            members[c].push(i);
        }
        let sizes = members.iter().map(Vec::len).collect();
        Self { assignment, labels, sizes, members }
    }

    pub fn n_obs(&self) -> usize {
        self.assignment.len()
    }

    pub fn g_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Cluster index of every observation.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, g: usize) -> &str {
        &self.labels[g]
    }

    /// Observation indices of cluster `g`, ascending.
    pub fn members(&self, g: usize) -> &[usize] {
        &self.members[g]
    }

    pub fn is_singletons(&self) -> bool {
        self.g_count() == self.n_obs()
    }

    pub fn require_clusters(&self, required: usize) -> Result<()> {
        if self.g_count() < required {
            Err(Error::TooFewClusters { found: self.g_count(), required })
        } else {
            Ok(())
        }
    }
}

/// True iff every fine cluster lies inside a single coarse cluster.
pub fn is_nested(fine: &ClusterPartition, coarse: &ClusterPartition) -> Result<bool> {
    if fine.n_obs() != coarse.n_obs() {
        return Err(Error::LengthMismatch {
            what: "partition",
            expected: fine.n_obs(),
            found: coarse.n_obs(),
        });
    }
    Ok((0..fine.g_count()).all(|g| {
        let m = fine.members(g);
        let c = coarse.assignment[m[0]];
        m.iter().all(|&i| coarse.assignment[i] == c)
    }))
}

/// Two clustering dimensions and their intersection.
#[derive(Debug, Clone)]
pub struct CrossedPartition {
    pub dim_a: ClusterPartition,
    pub dim_b: ClusterPartition,
    pub intersection: ClusterPartition,
}

impl CrossedPartition {
    pub fn new(dim_a: ClusterPartition, dim_b: ClusterPartition) -> Result<Self> {
        if dim_a.n_obs() != dim_b.n_obs() {
            return Err(Error::LengthMismatch {
                what: "partition",
                expected: dim_a.n_obs(),
                found: dim_b.n_obs(),
            });
        }
        let cells: Vec<String> = dim_a
            .assignment
            .iter()
            .zip(&dim_b.assignment)
            .map(|(&a, &b)| format!("{}|{}", dim_a.labels[a], dim_b.labels[b]))
            .collect();
        let intersection = ClusterPartition::from_labels(&cells)?;
        Ok(Self { dim_a, dim_b, intersection })
    }
}

/// Output of [`within_transform`].
#[derive(Debug, Clone)]
pub struct Absorbed {
    pub data: Dataset,
    /// Number of fixed-effect clusters absorbed.
    pub absorbed_count: usize,
    /// Regressors that were constant within every fixed-effect cluster.
    pub dropped: Vec<String>,
}

/// Subtracts fixed-effect cluster means in place.
pub fn demean(values: &mut [f64], fe: &ClusterPartition) {
    for g in 0..fe.g_count() {
        let m = fe.members(g);
        let mean = m.iter().map(|&i| values[i]).sum::<f64>() / m.len() as f64;
        for &i in m {
            values[i] -= mean;
        }
    }
}

/// Replaces the outcome and every regressor by deviations from their
/// fixed-effect cluster means, dropping regressors that vanish.
pub fn within_transform(data: &Dataset, fe: &ClusterPartition) -> Result<Absorbed> {
    if fe.n_obs() != data.n_obs() {
        return Err(Error::LengthMismatch {
            what: "fixed-effect partition",
            expected: data.n_obs(),
            found: fe.n_obs(),
        });
    }
    let mut y: Vec<f64> = data.y.iter().copied().collect();
    demean(&mut y, fe);

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in data.names.iter().enumerate() {
        let mut col: Vec<f64> = data.x.column(j).iter().copied().collect();
        let scale = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        demean(&mut col, fe);
        let resid = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || resid < 1e-10 * scale {
            dropped.push(name.clone());
        } else {
            kept.push((name.clone(), col));
        }
    }
    if kept.is_empty() {
        return Err(Error::AllRegressorsAbsorbed);
    }
    let mut out = Dataset::new(y, kept)?;
    out.absorbed = data.absorbed + fe.g_count();
    Ok(Absorbed {
        data: out,
        absorbed_count: fe.g_count(),
        dropped,
    })
}

/// Expands a categorical column into 0/1 dummies (levels in first-appearance
/// order), omitting the first level.
pub fn dummy_columns<L: Hash + Eq + Display>(prefix: &str, labels: &[L]) -> Result<Vec<(String, Vec<f64>)>> {
    let p = ClusterPartition::from_labels(labels)?;
    Ok((1..p.g_count())
        .map(|g| {
            let mut col = vec![0.0; p.n_obs()];
            for &i in p.members(g) {
                col[i] = 1.0;
            }
            (format!("{prefix}={}", p.label(g)), col)
        })
        .collect())
}
