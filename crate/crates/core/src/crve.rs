//! Cluster-robust variance estimators and the t and Wald tests built on them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::is_nested;
use crate::dist::{chi2_sf, f_sf, normal_two_sided_p, t_two_sided_p};
use crate::error::{Error, Result};
use crate::estimation::{RegressionFit, Restriction};
use crate::linalg::{add_outer, is_psd, quad_form, spd_factor, sym_sqrt, symmetrize};
use crate::par;

pub use crate::dist::student_t_cdf;

/// Floor on the eigenvalues of `I - X_g (X'X)^-1 X_g'`.
pub const MGG_EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    Hc1,
    Cv1,
    Cv2,
    Cv3,
    TwoWayCv1,
}

impl CovKind {
    pub fn name(self) -> &'static str {
        match self {
            CovKind::Hc1 => "HC1",
            CovKind::Cv1 => "CV1",
            CovKind::Cv2 => "CV2",
            CovKind::Cv3 => "CV3",
            CovKind::TwoWayCv1 => "CV1 two-way",
        }
    }
}

/// Reference distribution for a single-coefficient t statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Normal,
    StudentT(f64),
}

impl Reference {
    pub fn two_sided_p(self, t: f64) -> f64 {
        match self {
            Reference::Normal => normal_two_sided_p(t),
            Reference::StudentT(d) => t_two_sided_p(t, d),
        }
    }

    pub fn dof(self) -> Option<f64> {
        match self {
            Reference::Normal => None,
            Reference::StudentT(d) => Some(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub matrix: DMatrix<f64>,
    pub kind: CovKind,
    pub reference: Reference,
    pub psd: bool,
}

impl CovEstimate {
    fn new(mut matrix: DMatrix<f64>, kind: CovKind, reference: Reference) -> Self {
        symmetrize(&mut matrix);
        let psd = is_psd(&matrix);
        Self { matrix, kind, reference, psd }
    }

    pub fn std_error(&self, j: usize) -> f64 {
        self.matrix[(j, j)].max(0.0).sqrt()
    }

    /// Same matrix, different reference distribution.
    pub fn with_reference(mut self, reference: Reference) -> Self {
        self.reference = reference;
        self
    }
}

/// `A (Σ s s') A` for `A = (X'X)^-1`, accumulated in the order given.
fn sandwich<'a>(a: &DMatrix<f64>, scores: impl IntoIterator<Item = &'a DVector<f64>>, scale: f64) -> DMatrix<f64> {
    let k = a.nrows();
    let mut meat = DMatrix::zeros(k, k);
    for s in scores {
        add_outer(&mut meat, s, 1.0);
    }
    a * meat * a * scale
}

pub fn cv1_factor(g: usize, n: usize, k: usize) -> f64 {
    (g as f64 * (n as f64 - 1.0)) / ((g as f64 - 1.0) * (n as f64 - k as f64))
}

/// CV1 with reference t(G-1).
pub fn cv1(fit: &RegressionFit) -> Result<CovEstimate> {
    let g = fit.g_count();
    fit.clusters().require_clusters(2)?;
    let c = cv1_factor(g, fit.n_obs(), fit.dof_k());
    let m = sandwich(fit.xtx_inv(), fit.blocks().iter().map(|b| &b.score), c);
    Ok(CovEstimate::new(m, CovKind::Cv1, Reference::StudentT(g as f64 - 1.0)))
}

/// Heteroskedasticity-robust HC1 with a normal reference, ignoring the
/// fit's clustering.
pub fn hc1(fit: &RegressionFit) -> Result<CovEstimate> {
    let n = fit.n_obs();
    let k = fit.k();
    let x = fit.data().x();
    let u = fit.residuals();
    let scores: Vec<DVector<f64>> = (0..n).map(|i| x.row(i).transpose() * u[i]).collect();
    let c = n as f64 / (n as f64 - fit.dof_k() as f64);
    let m = sandwich(fit.xtx_inv(), &scores, c);
    debug_assert_eq!(m.nrows(), k);
    Ok(CovEstimate::new(m, CovKind::Hc1, Reference::Normal))
}

/// `X_g' M_gg^-½ û_g` computed from k×k blocks.
///
/// With `C = A^½ X_g'X_g A^½ = Q Λ Q'`, the nonzero spectrum of
/// `X_g A X_g'` is `Λ`, so `f(I - X_g A X_g') = I + X_g A^½ Q D Q' A^½ X_g'`
/// with `D_i = (f(1 - λ_i) - 1) / λ_i`.
fn cv2_scores(fit: &RegressionFit) -> Result<Vec<DVector<f64>>> {
    let a_half = sym_sqrt(fit.xtx_inv());
    par::try_map_indexed(fit.g_count(), |g| {
        let block = &fit.blocks()[g];
        let c = &a_half * &block.xtx * &a_half;
        let eig = SymmetricEigen::new(c);
        let lmax = eig.eigenvalues.max();
        if 1.0 - lmax < MGG_EIGEN_FLOOR {
            return Err(Error::SingularClusterBlock {
                cluster: fit.clusters().label(g).to_string(),
                min_eigenvalue: 1.0 - lmax,
            });
        }
        let d = eig.eigenvalues.map(|l| {
            if l.abs() < 1e-8 {
                0.5 + 0.375 * l
            } else {
                ((1.0 - l).powf(-0.5) - 1.0) / l
            }
        });
        let q = &eig.eigenvectors;
        let inner = q.tr_mul(&(&a_half * &block.score)).component_mul(&d);
        Ok(&block.score + &block.xtx * (&a_half * (q * inner)))
    })
}

/// CV2 (no scalar factor), reference t(G-1).
pub fn cv2(fit: &RegressionFit) -> Result<CovEstimate> {
    fit.clusters().require_clusters(2)?;
    let scores = cv2_scores(fit)?;
    let m = sandwich(fit.xtx_inv(), &scores, 1.0);
    Ok(CovEstimate::new(m, CovKind::Cv2, Reference::StudentT(fit.g_count() as f64 - 1.0)))
}

#[derive(Debug, Clone)]
pub struct Jackknife {
    pub cov: CovEstimate,
    /// `β̂^(g)`, the estimate with cluster `g` deleted, in cluster order.
    pub deleted: Vec<DVector<f64>>,
}

/// `(X'X - X_g'X_g)^-1` for every cluster.
pub(crate) fn deleted_inverses(fit: &RegressionFit) -> Result<Vec<DMatrix<f64>>> {
    let names: Vec<String> = fit.data().names().to_vec();
    par::try_map_indexed(fit.g_count(), |g| {
        let ag = fit.xtx() - &fit.blocks()[g].xtx;
        let ch = spd_factor(&ag, &names).map_err(|_| Error::DeletionSingular {
            cluster: fit.clusters().label(g).to_string(),
        })?;
        let mut inv = ch.inverse();
        symmetrize(&mut inv);
        Ok(inv)
    })
}

/// CV3 computed as the delete-one-cluster jackknife around `β̂`.
pub fn cv3_jackknife(fit: &RegressionFit) -> Result<Jackknife> {
    let g = fit.g_count();
    fit.clusters().require_clusters(2)?;
    let inverses = deleted_inverses(fit)?;
    // (X'X - X_g'X_g)(β̂^(g) - β̂) = -ŝ_g
    let shifts: Vec<DVector<f64>> = inverses
        .iter()
        .zip(fit.blocks())
        .map(|(inv, b)| -(inv * &b.score))
        .collect();
    let k = fit.k();
    let mut m = DMatrix::zeros(k, k);
    for d in &shifts {
        add_outer(&mut m, d, 1.0);
    }
    m *= (g as f64 - 1.0) / g as f64;
    let deleted = shifts.into_iter().map(|d| fit.beta() + d).collect();
    Ok(Jackknife {
        cov: CovEstimate::new(m, CovKind::Cv3, Reference::StudentT(g as f64 - 1.0)),
        deleted,
    })
}

/// Convenience wrapper returning only the CV3 matrix.
pub fn cv3(fit: &RegressionFit) -> Result<CovEstimate> {
    cv3_jackknife(fit).map(|j| j.cov)
}

/// Small-sample factors for the three terms of the two-way meat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TwoWayFactors {
    /// `c/(c-1)` for each term, `c` its cluster count.
    #[default]
    PerTerm,
    /// The CV1 factor `c(N-1)/((c-1)(N-k))` for each term.
    Cv1Style,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TwoWayOptions {
    pub factors: TwoWayFactors,
    /// Leave out the intersection term, which guarantees a PSD result when
    /// the two single-dimension terms are PSD.
    pub drop_intersection: bool,
    /// Reference degrees of freedom; `min(G, H) - 1` when unset.
    pub dof: Option<f64>,
}

/// Two-way CV1 from fits of the same regression clustered by each
/// dimension and by their intersection. Non-PSD results are flagged.
pub fn twoway_cv1(
    fit_a: &RegressionFit,
    fit_b: &RegressionFit,
    fit_ab: &RegressionFit,
    opts: TwoWayOptions,
) -> Result<CovEstimate> {
    for other in [fit_b, fit_ab] {
        if other.n_obs() != fit_a.n_obs() || (other.beta() - fit_a.beta()).amax() > 1e-8 * (1.0 + fit_a.beta().amax()) {
            return Err(Error::InvalidArgument("two-way fits must share the same regression".into()));
        }
    }
    if !is_nested(fit_ab.clusters(), fit_a.clusters())? || !is_nested(fit_ab.clusters(), fit_b.clusters())? {
        return Err(Error::NotNested);
    }
    fit_a.clusters().require_clusters(2)?;
    fit_b.clusters().require_clusters(2)?;
    let n = fit_a.n_obs();
    let kdof = fit_a.dof_k();
    let factor = |c: usize| match opts.factors {
        TwoWayFactors::PerTerm => c as f64 / (c as f64 - 1.0),
        TwoWayFactors::Cv1Style => cv1_factor(c, n, kdof),
        TwoWayFactors::None => 1.0,
    };
    let k = fit_a.k();
    let meat = |fit: &RegressionFit| {
        let mut m = DMatrix::zeros(k, k);
        for b in fit.blocks() {
            add_outer(&mut m, &b.score, 1.0);
        }
        m * factor(fit.g_count())
    };
    let mut middle = meat(fit_a) + meat(fit_b);
    if !opts.drop_intersection {
        if fit_ab.g_count() < 2 {
            return Err(Error::TooFewClusters { found: fit_ab.g_count(), required: 2 });
        }
        middle -= meat(fit_ab);
    }
    let a = fit_a.xtx_inv();
    let dof = opts
        .dof
        .unwrap_or((fit_a.g_count().min(fit_b.g_count()) - 1) as f64);
    Ok(CovEstimate::new(a * middle * a, CovKind::TwoWayCv1, Reference::StudentT(dof)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    T,
    Wald,
}

/// Distribution the reported P value comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestReference {
    Normal,
    StudentT(f64),
    F(f64, f64),
    ChiSquare(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub reference: TestReference,
    pub p_value: f64,
    /// `a'β̂` for a t test.
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
}

/// Two-sided test of `a'β = beta0`.
pub fn t_test(fit: &RegressionFit, cov: &CovEstimate, a: &DVector<f64>, beta0: f64) -> Result<TestResult> {
    if a.len() != fit.k() {
        return Err(Error::LengthMismatch { what: "contrast vector", expected: fit.k(), found: a.len() });
    }
    let var = quad_form(&cov.matrix, a);
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let se = var.sqrt();
    let est = a.dot(fit.beta());
    let t = (est - beta0) / se;
    let (reference, p) = match cov.reference {
        Reference::Normal => (TestReference::Normal, normal_two_sided_p(t)),
        Reference::StudentT(d) => (TestReference::StudentT(d), t_two_sided_p(t, d)),
    };
    Ok(TestResult {
        kind: TestKind::T,
        statistic: t,
        reference,
        p_value: p,
        estimate: Some(est),
        std_error: Some(se),
    })
}

/// Wald test of `Rβ = r`. With a t(d) reference the P value comes from
/// `F(r, d+1-r)` applied to `W (d+1-r) / (r d)`; with a normal reference
/// from chi-square(r).
pub fn wald_test(fit: &RegressionFit, cov: &CovEstimate, rest: &Restriction) -> Result<TestResult> {
    let r = rest.rows();
    if rest.matrix().ncols() != fit.k() {
        return Err(Error::InvalidRestriction(format!(
            "R has {} columns but the model has {} coefficients",
            rest.matrix().ncols(),
            fit.k()
        )));
    }
    let rm = rest.matrix();
    let gap = rm * fit.beta() - rest.target();
    let mid = rm * &cov.matrix * rm.transpose();
    if let Reference::StudentT(d) = cov.reference {
        if r as f64 > d {
            return Err(Error::TooManyRestrictions { r, max: d as usize });
        }
    }
    let labels: Vec<String> = (0..r).map(|i| format!("restriction {i}")).collect();
    let ch = spd_factor(&mid, &labels).map_err(|_| Error::ZeroVariance)?;
    let w = gap.dot(&ch.solve(&gap));
    let rf = r as f64;
    let (reference, p) = match cov.reference {
        Reference::Normal => (TestReference::ChiSquare(rf), chi2_sf(w, rf)),
        Reference::StudentT(d) => {
            let g = d + 1.0;
            let adj = w * (g - rf) / (rf * d);
            (TestReference::F(rf, g - rf), f_sf(adj, rf, g - rf))
        }
    };
    Ok(TestResult {
        kind: TestKind::Wald,
        statistic: w,
        reference,
        p_value: p,
        estimate: None,
        std_error: None,
    })
}
