//! OLS and linearly restricted OLS with cached per-cluster blocks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::{ClusterPartition, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{rcond_equilibrated, spd_factor, symmetrize, RCOND_MIN};
use crate::par;

/// Linear hypothesis `R β = r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    matrix: DMatrix<f64>,
    target: DVector<f64>,
}

impl Restriction {
    pub fn new(matrix: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        let r = matrix.nrows();
        if r == 0 {
            return Err(Error::InvalidRestriction("no rows".into()));
        }
        if target.len() != r {
            return Err(Error::InvalidRestriction(format!(
                "{r} rows but {} target values",
                target.len()
            )));
        }
        if r > matrix.ncols() {
            return Err(Error::InvalidRestriction(format!(
                "{r} restrictions on {} coefficients",
                matrix.ncols()
            )));
        }
        if matrix.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidRestriction("non-finite entry".into()));
        }
        let rrt = &matrix * matrix.transpose();
        if rcond_equilibrated(&rrt) <= RCOND_MIN {
            return Err(Error::InvalidRestriction("R does not have full row rank".into()));
        }
        Ok(Self { matrix, target })
    }

    /// `β_j = value` among `k` coefficients.
    pub fn single(k: usize, j: usize, value: f64) -> Result<Self> {
        if j >= k {
            return Err(Error::InvalidRestriction(format!("coefficient {j} out of range 0..{k}")));
        }
        let mut a = DVector::zeros(k);
        a[j] = 1.0;
        Self::combination(&a, value)
    }

    /// `a'β = value`.
    pub fn combination(a: &DVector<f64>, value: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, a.len(), a.as_slice()), DVector::from_element(1, value))
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// Same `R`, different `r`.
    pub fn with_target(&self, target: DVector<f64>) -> Result<Self> {
        Self::new(self.matrix.clone(), target)
    }

    /// The row of a single restriction.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.matrix.row(i).transpose()
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if self.matrix.ncols() != k {
            return Err(Error::InvalidRestriction(format!(
                "R has {} columns but the model has {k} coefficients",
                self.matrix.ncols()
            )));
        }
        Ok(())
    }
}

/// Cached sufficient statistics of one cluster.
#[derive(Debug, Clone)]
pub struct ClusterBlock {
    /// `X_g'X_g`
    pub xtx: DMatrix<f64>,
    /// `X_g'y_g`
    pub xty: DVector<f64>,
    /// Empirical score `X_g'û_g`.
    pub score: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct RestrictedPart {
    pub restriction: Restriction,
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Restricted scores `X_g'ũ_g`, one per cluster.
    pub scores: Vec<DVector<f64>>,
}

/// OLS fit plus everything downstream estimators need.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    data: Arc<Dataset>,
    clusters: Arc<ClusterPartition>,
    beta: DVector<f64>,
    residuals: DVector<f64>,
    xtx: DMatrix<f64>,
    xtx_inv: DMatrix<f64>,
    blocks: Vec<ClusterBlock>,
    restricted: Option<RestrictedPart>,
    absorbed_in_dof: bool,
}

/// Unrestricted OLS.
pub fn fit_ols(data: Arc<Dataset>, clusters: Arc<ClusterPartition>) -> Result<RegressionFit> {
    RegressionFit::new(data, clusters)
}

/// OLS together with the fit subject to `rest`.
pub fn fit_restricted(
    data: Arc<Dataset>,
    clusters: Arc<ClusterPartition>,
    rest: &Restriction,
) -> Result<RegressionFit> {
    RegressionFit::new(data, clusters)?.with_restriction(rest)
}

fn cluster_scores(data: &Dataset, clusters: &ClusterPartition, u: &DVector<f64>) -> Vec<DVector<f64>> {
    let x = data.x();
    let k = x.ncols();
    par::map_indexed(clusters.g_count(), |g| {
        let mut s = DVector::zeros(k);
        for &i in clusters.members(g) {
            for j in 0..k {
                s[j] += x[(i, j)] * u[i];
            }
        }
        s
    })
}

impl RegressionFit {
    fn new(data: Arc<Dataset>, clusters: Arc<ClusterPartition>) -> Result<Self> {
        let n = data.n_obs();
        let k = data.n_regressors();
        if clusters.n_obs() != n {
            return Err(Error::LengthMismatch {
                what: "cluster partition",
                expected: n,
                found: clusters.n_obs(),
            });
        }
        let params = k + data.absorbed_fe();
        if n <= params {
            return Err(Error::TooFewObservations { n, params });
        }

        let x = data.x();
        let y = data.y();
        let partial: Vec<(DMatrix<f64>, DVector<f64>)> = par::map_indexed(clusters.g_count(), |g| {
            let rows = clusters.members(g);
            let xg = x.select_rows(rows);
            let yg = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
            let mut xtx = xg.tr_mul(&xg);
            symmetrize(&mut xtx);
            (xtx, xg.tr_mul(&yg))
        });
        let mut xtx = DMatrix::zeros(k, k);
        let mut xty = DVector::zeros(k);
        for (a, b) in &partial {
            xtx += a;
            xty += b;
        }

        let chol = spd_factor(&xtx, data.names())?;
        let beta = chol.solve(&xty);
        let mut xtx_inv = chol.inverse();
        symmetrize(&mut xtx_inv);
        let residuals = y - x * &beta;
        let scores = cluster_scores(&data, &clusters, &residuals);
        let blocks = partial
            .into_iter()
            .zip(scores)
            .map(|((xtx, xty), score)| ClusterBlock { xtx, xty, score })
            .collect();

        Ok(Self {
            data,
            clusters,
            beta,
            residuals,
            xtx,
            xtx_inv,
            blocks,
            restricted: None,
            absorbed_in_dof: true,
        })
    }

    /// Adds the fit subject to `R β = r`.
    pub fn with_restriction(mut self, rest: &Restriction) -> Result<Self> {
        rest.check_k(self.k())?;
        let r = rest.matrix();
        let ar = &self.xtx_inv * r.transpose();
        let rar = r * &ar;
        let chol = spd_factor(&rar, &(0..rest.rows()).map(|i| format!("restriction {i}")).collect::<Vec<_>>())?;
        let gap = r * &self.beta - rest.target();
        let beta = &self.beta - ar * chol.solve(&gap);
        let residuals = self.data.y() - self.data.x() * &beta;
        let scores = cluster_scores(&self.data, &self.clusters, &residuals);
        self.restricted = Some(RestrictedPart {
            restriction: rest.clone(),
            beta,
            residuals,
            scores,
        });
        Ok(self)
    }

    /// The same regression with a different clustering.
    pub fn recluster(&self, clusters: Arc<ClusterPartition>) -> Result<Self> {
        let mut out = Self::new(self.data.clone(), clusters)?;
        out.absorbed_in_dof = self.absorbed_in_dof;
        match &self.restricted {
            Some(rp) => out.with_restriction(&rp.restriction),
            None => Ok(out),
        }
    }

    /// Whether absorbed fixed effects count towards `k` in small-sample factors.
    pub fn with_absorbed_in_dof(mut self, on: bool) -> Self {
        self.absorbed_in_dof = on;
        self
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn clusters(&self) -> &Arc<ClusterPartition> {
        &self.clusters
    }

    pub fn n_obs(&self) -> usize {
        self.data.n_obs()
    }

    /// Number of estimated coefficients.
    pub fn k(&self) -> usize {
        self.beta.len()
    }

    /// Parameter count used in degrees-of-freedom corrections.
    pub fn dof_k(&self) -> usize {
        if self.absorbed_in_dof {
            self.k() + self.data.absorbed_fe()
        } else {
            self.k()
        }
    }

    pub fn g_count(&self) -> usize {
        self.clusters.g_count()
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn residuals(&self) -> &DVector<f64> {
        &self.residuals
    }

    pub fn xtx(&self) -> &DMatrix<f64> {
        &self.xtx
    }

    pub fn xtx_inv(&self) -> &DMatrix<f64> {
        &self.xtx_inv
    }

    pub fn blocks(&self) -> &[ClusterBlock] {
        &self.blocks
    }

    pub fn restricted(&self) -> Option<&RestrictedPart> {
        self.restricted.as_ref()
    }

    pub fn require_restricted(&self) -> Result<&RestrictedPart> {
        self.restricted.as_ref().ok_or(Error::MissingRestriction)
    }

    /// Sum of squared OLS residuals.
    pub fn ssr(&self) -> f64 {
        self.residuals.norm_squared()
    }

    /// Rows of `X` belonging to cluster `g`.
    pub fn cluster_x(&self, g: usize) -> DMatrix<f64> {
        self.data.x().select_rows(self.clusters.members(g))
    }
}
