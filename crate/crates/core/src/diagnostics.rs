//! Cluster-level leverage, partial leverage, influence and cluster-size
//! summaries.

use nalgebra::DVector;

use crate::crve::cv3_jackknife;
use crate::data::ClusterPartition;
use crate::error::{Error, Result};
use crate::estimation::RegressionFit;

/// `Tr(X_g'X_g (X'X)^-1)` per cluster; these sum to `k`.
pub fn leverage(fit: &RegressionFit) -> Vec<f64> {
    let a = fit.xtx_inv();
    fit.blocks().iter().map(|b| b.xtx.component_mul(a).sum()).collect()
}

/// Share of the partialled-out variation of regressor `j` held by each
/// cluster. With `w = (X'X)^-1 e_j` the partialled column is `X w / w_j`,
/// so the share of cluster `g` is `w'X_g'X_g w / w_j`.
pub fn partial_leverage(fit: &RegressionFit, j: usize) -> Result<Vec<f64>> {
    let k = fit.k();
    if j >= k {
        return Err(Error::InvalidArgument(format!("coefficient index {j} out of range 0..{k}")));
    }
    let a = fit.xtx_inv();
    let ajj = a[(j, j)];
    let rsq_complement = 1.0 / (ajj * fit.xtx()[(j, j)]);
    if !(rsq_complement >= 1e-12) {
        return Err(Error::RankDeficient {
            columns: vec![fit.data().names()[j].clone()],
            rcond: rsq_complement,
        });
    }
    let w: DVector<f64> = a.column(j).into_owned();
    Ok(fit.blocks().iter().map(|b| w.dot(&(&b.xtx * &w)) / ajj).collect())
}

/// Estimates with each cluster deleted (shared with the CV3 jackknife).
pub fn influence(fit: &RegressionFit) -> Result<Vec<DVector<f64>>> {
    Ok(cv3_jackknife(fit)?.deleted)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveClusters {
    /// Squared coefficient of variation of the partial leverages.
    pub v_s: f64,
    /// `G / (1 + V_s)`.
    pub g_star0: f64,
}

pub fn effective_clusters(partial: &[f64]) -> Result<EffectiveClusters> {
    let g = partial.len();
    if g == 0 {
        return Err(Error::Empty("partial leverages"));
    }
    let gf = g as f64;
    let mean = partial.iter().sum::<f64>() / gf;
    if !(mean > 0.0) {
        return Err(Error::InvalidArgument("mean partial leverage must be positive".into()));
    }
    let v_s = partial.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (gf * mean * mean);
    Ok(EffectiveClusters { v_s, g_star0: gf / (1.0 + v_s) })
}

/// Variance inflation `1 + (M - 1) ρ` for equal clusters of size `M`.
pub fn moulton_factor(m: f64, rho: f64) -> f64 {
    1.0 + (m - 1.0) * rho
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeSummary {
    pub g: usize,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Quantile by linear interpolation between order statistics at position
/// `p (n - 1)` of the sorted data.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn size_summary(p: &ClusterPartition) -> SizeSummary {
    let mut s: Vec<f64> = p.sizes().iter().map(|&x| x as f64).collect();
    s.sort_by(f64::total_cmp);
    SizeSummary {
        g: p.g_count(),
        n: p.n_obs(),
        min: s[0],
        q1: quantile_linear(&s, 0.25),
        median: quantile_linear(&s, 0.5),
        q3: quantile_linear(&s, 0.75),
        max: s[s.len() - 1],
        mean: p.n_obs() as f64 / p.g_count() as f64,
    }
}

/// Values sorted ascending and rescaled to sum to one, for EDF plots.
pub fn edf_points(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    let mut v: Vec<f64> = values.iter().map(|x| x / total).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Per-coefficient part of a [`DiagnosticsReport`].
#[derive(Debug, Clone)]
pub struct CoefficientDiagnostics {
    pub index: usize,
    pub name: String,
    pub partial_leverage: Vec<f64>,
    /// `β̂_j^(g)` per cluster.
    pub deleted: Vec<f64>,
    pub effective: EffectiveClusters,
}

#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub sizes: Vec<usize>,
    pub labels: Vec<String>,
    pub summary: SizeSummary,
    pub leverage: Vec<f64>,
    pub coefficients: Vec<CoefficientDiagnostics>,
}

/// Everything above for the requested coefficients.
pub fn diagnose(fit: &RegressionFit, coefs: &[usize]) -> Result<DiagnosticsReport> {
    let deleted = influence(fit)?;
    let coefficients = coefs
        .iter()
        .map(|&j| {
            let pl = partial_leverage(fit, j)?;
            let effective = effective_clusters(&pl)?;
            Ok(CoefficientDiagnostics {
                index: j,
                name: fit.data().names()[j].clone(),
                partial_leverage: pl,
                deleted: deleted.iter().map(|b| b[j]).collect(),
                effective,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsReport {
        sizes: fit.clusters().sizes().to_vec(),
        labels: fit.clusters().labels().to_vec(),
        summary: size_summary(fit.clusters()),
        leverage: leverage(fit),
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::Dataset;
    use crate::estimation::fit_ols;

    #[test]
    fn effective_cluster_examples() {
        let e = effective_clusters(&[0.5, 0.25, 0.25]).unwrap();
        assert!((e.v_s - 0.125).abs() < 1e-15);
        assert!((e.g_star0 - 8.0 / 3.0).abs() < 1e-12);
        let e = effective_clusters(&[0.2; 5]).unwrap();
        assert!(e.v_s.abs() < 1e-15);
        assert!((e.g_star0 - 5.0).abs() < 1e-12);
        let mut conc = vec![0.0; 10];
        conc[3] = 1.0;
        let e = effective_clusters(&conc).unwrap();
        assert!((e.v_s - 9.0).abs() < 1e-12);
        assert!((e.g_star0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moulton() {
        assert_eq!(moulton_factor(11.0, 0.1), 2.0);
        assert_eq!(moulton_factor(1.0, 0.7), 1.0);
        assert_eq!(moulton_factor(40.0, 0.0), 1.0);
    }

    #[test]
    fn sizes() {
        let p = ClusterPartition::from_labels(&[0, 1, 1, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4, 4]).unwrap();
        let s = size_summary(&p);
        assert_eq!((s.min, s.median, s.mean, s.max), (1.0, 3.0, 3.0, 5.0));
        assert_eq!((s.q1, s.q3), (2.0, 4.0));
        let eq = size_summary(&ClusterPartition::from_labels(&[0, 0, 1, 1, 2, 2]).unwrap());
        assert_eq!((eq.min, eq.mean, eq.max), (2.0, 2.0, 2.0));
    }

    #[test]
    fn balanced_identical_clusters() {
        let block = [0.0, 1.0, 3.0];
        let g = 4;
        let x: Vec<f64> = (0..g).flat_map(|_| block).collect();
        let y: Vec<f64> = (0..3 * g).map(|i| (i as f64 * 0.7).sin()).collect();
        let labels: Vec<usize> = (0..3 * g).map(|i| i / 3).collect();
        let d = Dataset::new(y, vec![("c".into(), vec![1.0; 3 * g]), ("x".into(), x)]).unwrap();
        let fit = fit_ols(Arc::new(d), Arc::new(ClusterPartition::from_labels(&labels).unwrap())).unwrap();
        for l in leverage(&fit) {
            assert!((l - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_regressor_partial_leverage() {
        let x = vec![1.0, 2.0, -1.0, 3.0, 0.5];
        let d = Dataset::new(vec![0.3, 0.1, 0.4, 1.0, 0.2], vec![("x".into(), x.clone())]).unwrap();
        let fit = fit_ols(Arc::new(d), Arc::new(ClusterPartition::from_labels(&[0, 0, 1, 1, 1]).unwrap())).unwrap();
        let pl = partial_leverage(&fit, 0).unwrap();
        let total: f64 = x.iter().map(|v| v * v).sum();
        assert!((pl[0] - 5.0 / total).abs() < 1e-14);
        assert!((pl[1] - 10.25 / total).abs() < 1e-14);
    }

    #[test]
    fn edf_rescaling() {
        assert_eq!(edf_points(&[3.0, 1.0]), vec![0.25, 0.75]);
    }
}
