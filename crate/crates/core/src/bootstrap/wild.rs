//! Wild bootstrap on cached cluster blocks.
//!
//! With `A = (X'X)^-1`, `Q = R A` and base scores `b_u` (restricted or
//! unrestricted, per cluster or per observation), a replicate with weights
//! `v` has `β̂* - β_base = A Σ v_u b_u = δ`, bootstrap cluster scores
//! `S_g - X_g'X_g δ` and therefore
//!
//! * numerator `R δ`,
//! * `R V_CV1 R' = c Σ_g z_g z_g'` with `z_g = Q S_g - (Q X_g'X_g) δ`,
//! * `R V_CV3 R' = ((G-1)/G) Σ_g d_g d_g'` with
//!   `d_g = J_g S_g - (J_g X_g'X_g) δ` and `J_g = R (X'X - X_g'X_g)^-1`.
//!
//! Everything indexed by `g` is precomputed, so a replicate costs
//! `O(units·k + G·r·k)` and never touches the raw data.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{draw_weights, ratio, reps_notice, AuxDistribution, BootVariant, BootstrapResult, Studentization, WildOptions, WildVariant};
use crate::crve::{cv1_factor, deleted_inverses};
use crate::error::{Error, Result};
use crate::estimation::{RegressionFit, Restriction};
use crate::par;

/// Precomputed wild bootstrap for one fit, restriction and variant.
#[derive(Debug, Clone)]
pub struct WildBootstrap {
    variant: WildVariant,
    studentization: Studentization,
    restriction: Restriction,
    g: usize,
    a: DMatrix<f64>,
    rmat: DMatrix<f64>,
    /// Base scores, one column per weight unit.
    base: DMatrix<f64>,
    /// Cluster of each weight unit.
    unit_cluster: Vec<usize>,
    /// Per-unit projections added into the per-cluster accumulators
    /// (`Q b_u` for CV1, `J_g b_u` for CV3).
    unit_proj: DMatrix<f64>,
    /// Per-cluster `Q X_g'X_g` or `J_g X_g'X_g`.
    cluster_proj: Vec<DMatrix<f64>>,
    scale: f64,
    /// `Rβ` of the base coefficients, to turn numerators into `Rβ̂*`.
    offset: DVector<f64>,
    /// `Rβ̂ - r`.
    actual_gap: DVector<f64>,
    observed: f64,
}

struct Scratch {
    v: Vec<f64>,
    s: DVector<f64>,
    delta: DVector<f64>,
    acc: DMatrix<f64>,
    var: DMatrix<f64>,
}

impl WildBootstrap {
    /// Precomputes everything for `variant` under the fit's own restriction.
    pub fn prepare(fit: &RegressionFit, variant: WildVariant, studentization: Studentization) -> Result<Self> {
        let rp = fit.require_restricted()?;
        let restriction = rp.restriction.clone();
        let g = fit.g_count();
        fit.clusters().require_clusters(2)?;
        let r = restriction.rows();
        if r > g - 1 {
            return Err(Error::TooManyRestrictions { r, max: g - 1 });
        }
        let k = fit.k();
        let a = fit.xtx_inv().clone();
        let rmat = restriction.matrix().clone();
        let q = &rmat * &a;

        let (base, unit_cluster) = if variant.is_cluster_level() {
            let scores: Vec<&DVector<f64>> = if variant.is_restricted() {
                rp.scores.iter().collect()
            } else {
                fit.blocks().iter().map(|b| &b.score).collect()
            };
            let mut base = DMatrix::zeros(k, g);
            for (j, s) in scores.into_iter().enumerate() {
                base.set_column(j, s);
            }
            (base, (0..g).collect::<Vec<_>>())
        } else {
            let u = if variant.is_restricted() { &rp.residuals } else { fit.residuals() };
            let x = fit.data().x();
            let n = fit.n_obs();
            let mut base = x.transpose();
            for i in 0..n {
                base.column_mut(i).scale_mut(u[i]);
            }
            (base, fit.clusters().assignment().to_vec())
        };

        let (unit_proj, cluster_proj, scale) = match studentization {
            Studentization::Cv1 => {
                let proj: Vec<DMatrix<f64>> = fit.blocks().iter().map(|b| &q * &b.xtx).collect();
                (&q * &base, proj, cv1_factor(g, fit.n_obs(), fit.dof_k()))
            }
            Studentization::Cv3 => {
                let j: Vec<DMatrix<f64>> = deleted_inverses(fit)?.iter().map(|inv| &rmat * inv).collect();
                let mut up = DMatrix::zeros(r, base.ncols());
                for (c, &cl) in unit_cluster.iter().enumerate() {
                    up.set_column(c, &(&j[cl] * base.column(c)));
                }
                let proj = j.iter().zip(fit.blocks()).map(|(jg, b)| jg * &b.xtx).collect();
                (up, proj, (g as f64 - 1.0) / g as f64)
            }
        };

        let base_beta = if variant.is_restricted() { &rp.beta } else { fit.beta() };
        let offset = &rmat * base_beta;
        let actual_gap = &rmat * fit.beta() - restriction.target();
        let mut wb = Self {
            variant,
            studentization,
            restriction,
            g,
            a,
            rmat,
            base,
            unit_cluster,
            unit_proj,
            cluster_proj,
            scale,
            offset,
            actual_gap,
            observed: f64::NAN,
        };
        wb.observed = if variant.is_restricted() {
            wb.evaluate(&vec![1.0; wb.units()])
        } else {
            wb.unrestricted_observed(fit)?
        };
        Ok(wb)
    }

    /// Actual statistic when the base scores are the unrestricted ones.
    fn unrestricted_observed(&self, fit: &RegressionFit) -> Result<f64> {
        let r = self.rmat.nrows();
        let mut acc = DMatrix::zeros(r, self.g);
        match self.studentization {
            Studentization::Cv1 => {
                let q = &self.rmat * &self.a;
                for (g, b) in fit.blocks().iter().enumerate() {
                    acc.set_column(g, &(&q * &b.score));
                }
            }
            Studentization::Cv3 => {
                let inv = deleted_inverses(fit)?;
                for (g, b) in fit.blocks().iter().enumerate() {
                    acc.set_column(g, &(&self.rmat * (&inv[g] * &b.score)));
                }
            }
        }
        let var = &acc * acc.transpose() * self.scale;
        Ok(statistic(&self.actual_gap, &var))
    }

    /// Number of weights per replicate (clusters or observations).
    pub fn units(&self) -> usize {
        self.base.ncols()
    }

    pub fn observed(&self) -> f64 {
        self.observed
    }

    pub fn variant(&self) -> WildVariant {
        self.variant
    }

    fn scratch(&self) -> Scratch {
        let (k, r) = (self.a.nrows(), self.rmat.nrows());
        Scratch {
            v: Vec::with_capacity(self.units()),
            s: DVector::zeros(k),
            delta: DVector::zeros(k),
            acc: DMatrix::zeros(r, self.g),
            var: DMatrix::zeros(r, r),
        }
    }

    /// Statistic for one weight vector (one weight per unit).
    pub fn evaluate(&self, v: &[f64]) -> f64 {
        let mut sc = self.scratch();
        sc.v.extend_from_slice(v);
        self.eval(&mut sc).0
    }

    /// Returns the statistic and the numerator `R δ`.
    fn eval(&self, sc: &mut Scratch) -> (f64, DVector<f64>) {
        let v = DVector::from_column_slice(&sc.v);
        sc.s.gemv(1.0, &self.base, &v, 0.0);
        sc.delta.gemv(1.0, &self.a, &sc.s, 0.0);
        let num = &self.rmat * &sc.delta;

        sc.acc.fill(0.0);
        for (u, &cl) in self.unit_cluster.iter().enumerate() {
            let w = sc.v[u];
            let mut col = sc.acc.column_mut(cl);
            col.axpy(w, &self.unit_proj.column(u), 1.0);
        }
        for (g, p) in self.cluster_proj.iter().enumerate() {
            let mut col = sc.acc.column_mut(g);
            col.gemv(-1.0, p, &sc.delta, 1.0);
        }
        sc.var.gemm(self.scale, &sc.acc, &sc.acc.transpose(), 0.0);
        (statistic(&num, &sc.var), num)
    }

    /// Runs `reps` replicates (or enumerates when possible).
    pub fn run(&self, aux: AuxDistribution, reps: usize, seed: u64) -> Result<BootstrapResult> {
        if reps == 0 {
            return Err(Error::InvalidArgument("the number of bootstrap replicates must be at least 1".into()));
        }
        let units = self.units();
        let enumerate = aux.draw_count(units).is_some_and(|c| c <= reps as u64);
        let count = if enumerate { aux.draw_count(units).unwrap_or(0) as usize } else { reps };
        let single = self.restriction.rows() == 1;
        let out: Vec<(f64, f64)> = par::map_indexed_with(
            count,
            || self.scratch(),
            |sc, b| {
                draw_weights(aux, seed, b, units, enumerate, &mut sc.v);
                let (t, num) = self.eval(sc);
                (t, if single { self.offset[0] + num[0] } else { f64::NAN })
            },
        );
        let (replicates, coefs): (Vec<f64>, Vec<f64>) = out.into_iter().unzip();
        let estimate = single.then(|| self.actual_gap[0] + self.restriction.target()[0]);
        let mut res = BootstrapResult::assemble(
            BootVariant::Wild(self.variant),
            self.studentization,
            Some(aux),
            self.restriction.clone(),
            self.observed,
            replicates,
            single.then_some(coefs),
            estimate,
            enumerate,
            seed,
            self.variant.is_restricted(),
        );
        if !enumerate {
            res.notices.extend(reps_notice(reps));
        }
        Ok(res)
    }
}

/// t statistic for one restriction, Wald statistic otherwise.
fn statistic(num: &DVector<f64>, var: &DMatrix<f64>) -> f64 {
    if num.len() == 1 {
        return ratio(num[0], var[(0, 0)]);
    }
    if num.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    match Cholesky::new(var.clone()) {
        Some(ch) => num.dot(&ch.solve(num)),
        None => f64::INFINITY,
    }
}

/// Wild bootstrap test of the fit's restriction.
pub fn wild_test(fit: &RegressionFit, variant: WildVariant, opts: WildOptions) -> Result<BootstrapResult> {
    let wb = WildBootstrap::prepare(fit, variant, opts.studentization)?;
    let (aux, notice) = match opts.aux {
        Some(a) => (a, None),
        None => AuxDistribution::default_for(fit.g_count()),
    };
    let mut res = wb.run(aux, opts.reps, opts.seed)?;
    res.notices.splice(0..0, notice);
    Ok(res)
}

pub fn wcr_test(fit: &RegressionFit, opts: WildOptions) -> Result<BootstrapResult> {
    wild_test(fit, WildVariant::Wcr, opts)
}

pub fn wcu_test(fit: &RegressionFit, opts: WildOptions) -> Result<BootstrapResult> {
    wild_test(fit, WildVariant::Wcu, opts)
}

pub fn wr_test(fit: &RegressionFit, opts: WildOptions) -> Result<BootstrapResult> {
    wild_test(fit, WildVariant::Wr, opts)
}

pub fn wu_test(fit: &RegressionFit, opts: WildOptions) -> Result<BootstrapResult> {
    wild_test(fit, WildVariant::Wu, opts)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::crve::{cv1, t_test};
    use crate::data::{ClusterPartition, Dataset};
    use crate::estimation::fit_restricted;

    fn fit(g: usize, per: usize) -> RegressionFit {
        let n = g * per;
        let labels: Vec<usize> = (0..n).map(|i| i / per).collect();
        let x: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 / 3.0 + (i / per) as f64 * 0.2).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * x[i] + ((i * 17) % 13) as f64 / 6.0 - 1.0).collect();
        let d = Dataset::new(y, vec![("const".into(), vec![1.0; n]), ("x".into(), x)]).unwrap();
        let c = ClusterPartition::from_labels(&labels).unwrap();
        fit_restricted(Arc::new(d), Arc::new(c), &Restriction::single(2, 1, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn observed_matches_cv1_t() {
        let f = fit(9, 4);
        let t = t_test(&f, &cv1(&f).unwrap(), &DVector::from_vec(vec![0.0, 1.0]), 0.0).unwrap();
        for v in [WildVariant::Wcr, WildVariant::Wcu, WildVariant::Wr, WildVariant::Wu] {
            let wb = WildBootstrap::prepare(&f, v, Studentization::Cv1).unwrap();
            assert!((wb.observed() - t.statistic).abs() < 1e-10 * t.statistic.abs().max(1.0), "{v:?}");
        }
    }

    #[test]
    fn sign_flips_are_exact() {
        let f = fit(7, 3);
        let wb = WildBootstrap::prepare(&f, WildVariant::Wcr, Studentization::Cv1).unwrap();
        assert_eq!(wb.evaluate(&[1.0; 7]), wb.observed());
        assert_eq!(wb.evaluate(&[-1.0; 7]), -wb.observed());
        let wu = WildBootstrap::prepare(&f, WildVariant::Wcu, Studentization::Cv1).unwrap();
        assert!(wu.evaluate(&[1.0; 7]).abs() < 1e-12);
    }

    #[test]
    fn enumeration_count() {
        let f = fit(5, 3);
        let opts = WildOptions { aux: Some(AuxDistribution::Rademacher), reps: 999, seed: 3, ..Default::default() };
        let r = wcr_test(&f, opts).unwrap();
        assert!(r.enumerated);
        assert_eq!(r.reps, 32);
        assert_eq!(r.replicates[0], r.tau);
        let opts = WildOptions { aux: Some(AuxDistribution::Rademacher), reps: 31, seed: 3, ..Default::default() };
        assert!(!wcr_test(&f, opts).unwrap().enumerated);
    }

    #[test]
    fn webb_notice_for_few_clusters() {
        let f = fit(6, 3);
        let r = wcr_test(&f, WildOptions { reps: 99, ..Default::default() }).unwrap();
        assert_eq!(r.aux, Some(AuxDistribution::Webb6));
        assert!(r.notices[0].contains("Webb"));
    }

    #[test]
    fn requires_restriction() {
        let n = 12;
        let d = Dataset::new((0..n).map(|i| i as f64 * 0.3 + (i % 3) as f64).collect(), vec![("x".into(), (0..n).map(|i| 1.0 + i as f64).collect())]).unwrap();
        let f = crate::estimation::fit_ols(Arc::new(d), Arc::new(ClusterPartition::from_labels(&(0..n).map(|i| i / 3).collect::<Vec<_>>()).unwrap())).unwrap();
        assert_eq!(wcr_test(&f, WildOptions::default()).unwrap_err(), Error::MissingRestriction);
    }
}
