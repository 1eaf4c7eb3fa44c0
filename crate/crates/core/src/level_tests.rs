//! Tests of the clustering level and placebo-regression experiments.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use crate::data::{demean, is_nested, ClusterPartition, Dataset};
use crate::dist::normal_sf;
use crate::error::{Error, Result};
use crate::estimation::{fit_ols, RegressionFit};
use crate::par;
use crate::rng::{self, Domain};
use crate::simulation::{gen_ar1_placebo, gen_did_placebo, method_p_value, tally, Method, MethodRate, PanelLayout};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelTestOptions {
    pub reps: usize,
    pub seed: u64,
    /// Multiplies the variance estimate `Σ_g θ̂_g²`.
    pub variance_scale: f64,
}

impl Default for LevelTestOptions {
    fn default() -> Self {
        Self { reps: 999, seed: 0, variance_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelTestResult {
    /// Coarse-minus-fine variance contribution for the tested combination.
    pub theta_hat: f64,
    pub tau: f64,
    /// `1 - Φ(τ)`.
    pub p_asymptotic: f64,
    pub p_bootstrap: f64,
    pub reps: usize,
    pub enumerated: bool,
    /// Set when the variance estimate is zero; `τ = 0` and both P values are 1.
    pub degenerate: bool,
    pub fine_g: usize,
    pub coarse_g: usize,
}

/// `(θ̂, V̂)` from fine-cluster projected scores grouped by coarse cluster.
fn theta_and_variance(z: &[f64], coarse_of_fine: &[usize], coarse_g: usize, scale: f64) -> (f64, f64) {
    let mut sum = vec![0.0; coarse_g];
    let mut sq = vec![0.0; coarse_g];
    for (h, &c) in coarse_of_fine.iter().enumerate() {
        sum[c] += z[h];
        sq[c] += z[h] * z[h];
    }
    let mut theta = 0.0;
    let mut var = 0.0;
    for c in 0..coarse_g {
        let t = sum[c] * sum[c] - sq[c];
        theta += t;
        var += t * t;
    }
    (theta, scale * var)
}

fn studentize(theta: f64, var: f64) -> f64 {
    if var > 0.0 {
        theta / var.sqrt()
    } else {
        0.0
    }
}

/// One-sided score-variance test of clustering at `fine` against `coarse`
/// for the combination `a'β`.
pub fn score_variance_test(
    fit: &RegressionFit,
    fine: &ClusterPartition,
    coarse: &ClusterPartition,
    a: &DVector<f64>,
    opts: LevelTestOptions,
) -> Result<LevelTestResult> {
    let n = fit.n_obs();
    if fine.n_obs() != n || coarse.n_obs() != n {
        return Err(Error::LengthMismatch { what: "partition", expected: n, found: fine.n_obs().min(coarse.n_obs()) });
    }
    if a.len() != fit.k() {
        return Err(Error::LengthMismatch { what: "contrast vector", expected: fit.k(), found: a.len() });
    }
    if !is_nested(fine, coarse)? {
        return Err(Error::NotNested);
    }
    coarse.require_clusters(2)?;
    if opts.reps == 0 {
        return Err(Error::InvalidArgument("the number of bootstrap replicates must be at least 1".into()));
    }

    let w = fit.xtx_inv() * a;
    let xw = fit.data().x() * &w;
    let u = fit.residuals();
    let h = fine.g_count();
    let z: Vec<f64> = (0..h).map(|f| fine.members(f).iter().map(|&i| xw[i] * u[i]).sum()).collect();
    let coarse_of_fine: Vec<usize> = (0..h).map(|f| coarse.assignment()[fine.members(f)[0]]).collect();
    let cg = coarse.g_count();

    let (theta_hat, var) = theta_and_variance(&z, &coarse_of_fine, cg, opts.variance_scale);
    let base = LevelTestResult {
        theta_hat,
        tau: 0.0,
        p_asymptotic: 1.0,
        p_bootstrap: 1.0,
        reps: 0,
        enumerated: false,
        degenerate: true,
        fine_g: h,
        coarse_g: cg,
    };
    if !(var > 0.0) {
        return Ok(base);
    }
    let tau = studentize(theta_hat, var);

    let enumerate = u32::try_from(h).ok().and_then(|e| 2u64.checked_pow(e)).is_some_and(|c| c <= opts.reps as u64);
    let count = if enumerate { 1usize << h } else { opts.reps };
    let exceed: Vec<bool> = par::map_indexed_with(
        count,
        || vec![0.0; h],
        |zs, b| {
            if enumerate {
                for (f, zf) in zs.iter_mut().enumerate() {
                    *zf = if (b >> f) & 1 == 0 { z[f] } else { -z[f] };
                }
            } else {
                let mut r = rng::stream(opts.seed, Domain::LevelTest, b as u64);
                for (f, zf) in zs.iter_mut().enumerate() {
                    *zf = if r.random::<bool>() { z[f] } else { -z[f] };
                }
            }
            let (t, v) = theta_and_variance(zs, &coarse_of_fine, cg, opts.variance_scale);
            studentize(t, v) > tau
        },
    );
    let p_bootstrap = exceed.iter().filter(|&&e| e).count() as f64 / count as f64;
    Ok(LevelTestResult {
        tau,
        p_asymptotic: normal_sf(tau),
        p_bootstrap,
        reps: count,
        enumerated: enumerate,
        degenerate: false,
        ..base
    })
}

/// All tests between nested pairs of `levels` (ordered fine to coarse),
/// reported without choosing a level.
pub fn pairwise_level_tests(
    fit: &RegressionFit,
    levels: &[(String, ClusterPartition)],
    a: &DVector<f64>,
    opts: LevelTestOptions,
) -> Result<Vec<(String, String, LevelTestResult)>> {
    let mut out = Vec::new();
    for i in 0..levels.len() {
        for j in (i + 1)..levels.len() {
            if is_nested(&levels[i].1, &levels[j].1)? {
                let r = score_variance_test(fit, &levels[i].1, &levels[j].1, a, opts)?;
                out.push((levels[i].0.clone(), levels[j].0.clone(), r));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlaceboDesign {
    /// Independent N(0,1) per observation.
    Iid,
    /// Treatment dummy switching on at a random period for a random number
    /// of groups in the inclusive range.
    Did { treated_min: usize, treated_max: usize },
    /// `δ v_st + (1 - δ) ε` with AR(1) group-level `v`.
    Ar1 { rho: f64, delta: f64 },
}

#[derive(Debug, Clone)]
pub struct PlaceboSpec {
    pub layout: PanelLayout,
    pub design: PlaceboDesign,
    /// Fixed effects already absorbed from `data`; the placebo column is
    /// demeaned the same way.
    pub absorb: Option<ClusterPartition>,
    /// Named clustering levels.
    pub levels: Vec<(String, ClusterPartition)>,
    /// Nominal level of each test.
    pub alpha: f64,
}

/// A method applied at one clustering level (an index into `levels`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaceboTest {
    pub method: Method,
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboReport {
    /// One row per test, named `method @ level`.
    pub rows: Vec<MethodRate>,
    pub reps: usize,
    /// Placebo draws rejected because they vanished after absorbing the
    /// fixed effects or made the regression singular.
    pub redraws: usize,
}

const MAX_REDRAWS: usize = 100;

/// Repeatedly appends a placebo regressor to `data` and records how often
/// each test rejects that its coefficient is zero.
pub fn placebo_experiment(
    data: &Dataset,
    spec: &PlaceboSpec,
    tests: &[PlaceboTest],
    reps: usize,
    seed: u64,
) -> Result<PlaceboReport> {
    if tests.is_empty() {
        return Err(Error::InvalidArgument("no tests requested".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    if spec.layout.group.len() != data.n_obs() {
        return Err(Error::LengthMismatch { what: "panel layout", expected: data.n_obs(), found: spec.layout.group.len() });
    }
    for t in tests {
        if t.level >= spec.levels.len() {
            return Err(Error::InvalidArgument(format!("clustering level {} is not defined", t.level)));
        }
    }
    let j = data.n_regressors();
    let levels: Vec<Arc<ClusterPartition>> = spec.levels.iter().map(|(_, p)| Arc::new(p.clone())).collect();

    let per_rep: Vec<(Vec<Option<f64>>, usize)> = par::try_map_indexed(reps, |r| {
        let mut rng = rng::stream(seed, Domain::Placebo, r as u64);
        let mut redraws = 0;
        loop {
            let mut col = match spec.design {
                PlaceboDesign::Iid => (0..data.n_obs()).map(|_| rng.sample(rand_distr::StandardNormal)).collect(),
                PlaceboDesign::Did { treated_min, treated_max } => gen_did_placebo(&spec.layout, (treated_min, treated_max), &mut rng)?,
                PlaceboDesign::Ar1 { rho, delta } => gen_ar1_placebo(&spec.layout, rho, delta, &mut rng)?,
            };
            let scale = col.iter().fold(0.0_f64, |m: f64, v: &f64| m.max(v.abs()));
            if let Some(fe) = &spec.absorb {
                demean(&mut col, fe);
            }
            let resid = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let fits = if scale == 0.0 || resid < 1e-10 * scale {
                None
            } else {
                let aug = Arc::new(data.with_column("placebo", &col)?);
                levels
                    .iter()
                    .map(|p| fit_ols(aug.clone(), p.clone()))
                    .collect::<Result<Vec<_>>>()
                    .ok()
            };
            match fits {
                Some(fits) => {
                    let inner = rng::child_seed(seed, Domain::Placebo, r as u64);
                    let ps = tests
                        .iter()
                        .map(|t| method_p_value(&fits[t.level], t.method, j, 0.0, inner).ok())
                        .collect();
                    return Ok((ps, redraws));
                }
                None => {
                    redraws += 1;
                    if redraws > MAX_REDRAWS {
                        return Err(Error::InvalidArgument(
                            "placebo regressor is collinear with the fixed effects in every draw".into(),
                        ));
                    }
                }
            }
        }
    })?;
    let redraws = per_rep.iter().map(|(_, d)| d).sum();
    let outcomes: Vec<Vec<Option<f64>>> = per_rep.into_iter().map(|(p, _)| p).collect();
    let methods: Vec<Method> = tests.iter().map(|t| t.method).collect();
    let mut rows = tally(&methods, &outcomes, spec.alpha);
    for (row, t) in rows.iter_mut().zip(tests) {
        row.method = format!("{} @ {}", row.method, spec.levels[t.level].0);
    }
    Ok(PlaceboReport { rows, reps, redraws })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit() -> RegressionFit {
        let n = 16;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 11) % 7) as f64 + 0.1 * x[i]).collect();
        let d = Dataset::new(y, vec![("c".into(), vec![1.0; n]), ("x".into(), x)]).unwrap();
        fit_ols(Arc::new(d), Arc::new(ClusterPartition::singletons(n))).unwrap()
    }

    #[test]
    fn equal_partitions_are_degenerate() {
        let f = fit();
        let p = ClusterPartition::from_labels(&(0..16).map(|i| i / 4).collect::<Vec<_>>()).unwrap();
        let r = score_variance_test(&f, &p, &p, &DVector::from_vec(vec![0.0, 1.0]), LevelTestOptions::default()).unwrap();
        assert_eq!(r.theta_hat, 0.0);
        assert_eq!(r.tau, 0.0);
        assert_eq!(r.p_asymptotic, 1.0);
        assert_eq!(r.p_bootstrap, 1.0);
        assert!(r.degenerate);
    }

    #[test]
    fn not_nested_is_an_error() {
        let f = fit();
        let fine = ClusterPartition::from_labels(&(0..16).map(|i| i / 4).collect::<Vec<_>>()).unwrap();
        let coarse = ClusterPartition::from_labels(&(0..16).map(|i| i % 2).collect::<Vec<_>>()).unwrap();
        let e = score_variance_test(&f, &fine, &coarse, &DVector::from_vec(vec![0.0, 1.0]), LevelTestOptions::default());
        assert_eq!(e.unwrap_err(), Error::NotNested);
    }

    #[test]
    fn enumeration_small() {
        let f = fit();
        let fine = ClusterPartition::from_labels(&(0..16).map(|i| i / 2).collect::<Vec<_>>()).unwrap();
        let coarse = ClusterPartition::from_labels(&(0..16).map(|i| i / 8).collect::<Vec<_>>()).unwrap();
        let opts = LevelTestOptions { reps: 256, ..Default::default() };
        let r = score_variance_test(&f, &fine, &coarse, &DVector::from_vec(vec![0.0, 1.0]), opts).unwrap();
        assert!(r.enumerated);
        assert_eq!(r.reps, 256);
        let again = score_variance_test(&f, &fine, &coarse, &DVector::from_vec(vec![0.0, 1.0]), LevelTestOptions { seed: 99, ..opts }).unwrap();
        assert_eq!(r, again);
    }
}
