//! Pairs cluster bootstrap: resample whole clusters with replacement and
//! refit from the cached blocks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{ratio, reps_notice, BootVariant, BootstrapResult, Studentization};
use crate::crve::cv1_factor;
use crate::error::{Error, Result};
use crate::estimation::{RegressionFit, Restriction};
use crate::linalg::spd_factor;
use crate::par;
use crate::rng::{self, Domain};

/// Largest tolerated share of singular replicates.
pub const MAX_DISCARD_SHARE: f64 = 0.10;

/// Cluster multiplicities of replicate `b`.
fn draw_counts(g: usize, seed: u64, b: usize, enumerate: bool) -> Vec<usize> {
    let mut counts = vec![0usize; g];
    if enumerate {
        let mut rest = b;
        for _ in 0..g {
            counts[rest % g] += 1;
            rest /= g;
        }
    } else {
        let mut r = rng::stream(seed, Domain::PairsDraws, b as u64);
        for _ in 0..g {
            counts[r.random_range(0..g)] += 1;
        }
    }
    counts
}

fn wald_or_t(num: &DVector<f64>, var: &DMatrix<f64>) -> f64 {
    if num.len() == 1 {
        return ratio(num[0], var[(0, 0)]);
    }
    if num.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    match nalgebra::Cholesky::new(var.clone()) {
        Some(ch) => num.dot(&ch.solve(num)),
        None => f64::INFINITY,
    }
}

/// Pairs cluster bootstrap test of `rest`, CV1-studentized, with replicate
/// statistics centered at `β̂`. All `G^G` ordered draws are enumerated when
/// that does not exceed `reps`.
pub fn pairs_cluster_test(fit: &RegressionFit, rest: &Restriction, reps: usize, seed: u64) -> Result<BootstrapResult> {
    if reps == 0 {
        return Err(Error::InvalidArgument("the number of bootstrap replicates must be at least 1".into()));
    }
    let k = fit.k();
    if rest.matrix().ncols() != k {
        return Err(Error::InvalidRestriction(format!("R has {} columns but the model has {k} coefficients", rest.matrix().ncols())));
    }
    let g = fit.g_count();
    let rmat = rest.matrix();
    let beta = fit.beta();
    let rbeta = rmat * beta;
    let tol: Vec<f64> = (0..rest.rows())
        .map(|i| 1e-12 * (1.0 + (0..k).map(|j| (rmat[(i, j)] * beta[j]).abs()).sum::<f64>()))
        .collect();
    let sizes = fit.clusters().sizes();
    let kdof = fit.dof_k();
    let names = fit.data().names().to_vec();

    let observed = {
        let q = rmat * fit.xtx_inv();
        let mut acc = DMatrix::zeros(rest.rows(), g);
        for (c, b) in fit.blocks().iter().enumerate() {
            acc.set_column(c, &(&q * &b.score));
        }
        let var = &acc * acc.transpose() * cv1_factor(g, fit.n_obs(), kdof);
        wald_or_t(&(&rbeta - rest.target()), &var)
    };

    let total_draws = u32::try_from(g).ok().and_then(|gg| (g as u64).checked_pow(gg));
    let enumerate = total_draws.is_some_and(|c| c <= reps as u64);
    let count = if enumerate { total_draws.unwrap_or(0) as usize } else { reps };

    let draws: Vec<Option<(f64, f64)>> = par::map_indexed(count, |b| {
        let m = draw_counts(g, seed, b, enumerate);
        let mut xtx = DMatrix::zeros(k, k);
        let mut sum_scores = DVector::zeros(k);
        let mut n_star = 0usize;
        for (c, blk) in fit.blocks().iter().enumerate() {
            if m[c] > 0 {
                let w = m[c] as f64;
                xtx += &blk.xtx * w;
                sum_scores.axpy(w, &blk.score, 1.0);
                n_star += m[c] * sizes[c];
            }
        }
        let ch = spd_factor(&xtx, &names).ok()?;
        let delta = ch.solve(&sum_scores);
        let mut num = rmat * &delta;
        for (x, t) in num.iter_mut().zip(&tol) {
            if x.abs() <= *t {
                *x = 0.0;
            }
        }
        let q = rmat * ch.inverse();
        let mut acc = DMatrix::zeros(rest.rows(), g);
        for (c, blk) in fit.blocks().iter().enumerate() {
            if m[c] > 0 {
                let z = &q * (&blk.score - &blk.xtx * &delta);
                acc.set_column(c, &(z * (m[c] as f64).sqrt()));
            }
        }
        let var = &acc * acc.transpose() * cv1_factor(g, n_star, kdof);
        Some((wald_or_t(&num, &var), rbeta[0] + num[0]))
    });

    let discarded = draws.iter().filter(|d| d.is_none()).count();
    if discarded as f64 > MAX_DISCARD_SHARE * count as f64 {
        return Err(Error::BootstrapUnreliable { discarded, total: count });
    }
    let (replicates, coefs): (Vec<f64>, Vec<f64>) = draws.into_iter().flatten().unzip();
    let single = rest.rows() == 1;
    let mut res = BootstrapResult::assemble(
        BootVariant::Pairs,
        Studentization::Cv1,
        None,
        rest.clone(),
        observed,
        replicates,
        single.then_some(coefs),
        single.then(|| rbeta[0]),
        enumerate,
        seed,
        false,
    );
    res.discarded = discarded;
    if discarded > 0 {
        res.notices.push(format!("{discarded} of {count} pairs bootstrap replicates were singular and discarded"));
    }
    if !enumerate {
        res.notices.extend(reps_notice(reps));
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::{ClusterPartition, Dataset};
    use crate::estimation::fit_ols;

    #[test]
    fn one_cluster_gives_zero_statistics() {
        let d = Dataset::new(
            vec![1.0, 2.5, 2.0, 4.0, 3.5],
            vec![("c".into(), vec![1.0; 5]), ("x".into(), vec![0.0, 1.0, 2.0, 3.0, 4.0])],
        )
        .unwrap();
        let f = fit_ols(Arc::new(d), Arc::new(ClusterPartition::single(5))).unwrap();
        let r = pairs_cluster_test(&f, &Restriction::single(2, 1, 0.0).unwrap(), 50, 1).unwrap();
        assert!(r.enumerated);
        assert_eq!(r.reps, 1);
        assert!(r.replicates.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn identical_clusters_give_zero_statistics() {
        let block_x = [0.0, 1.0, 3.0];
        let block_y = [1.0, 1.5, 4.0];
        let g = 4;
        let x: Vec<f64> = (0..g).flat_map(|_| block_x).collect();
        let y: Vec<f64> = (0..g).flat_map(|_| block_y).collect();
        let labels: Vec<usize> = (0..3 * g).map(|i| i / 3).collect();
        let d = Dataset::new(y, vec![("c".into(), vec![1.0; 3 * g]), ("x".into(), x)]).unwrap();
        let f = fit_ols(Arc::new(d), Arc::new(ClusterPartition::from_labels(&labels).unwrap())).unwrap();
        let r = pairs_cluster_test(&f, &Restriction::single(2, 1, 0.0).unwrap(), 99, 5).unwrap();
        assert!(r.replicates.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn enumeration_for_tiny_g() {
        let n = 9;
        let d = Dataset::new(
            (0..n).map(|i| ((i * 5) % 7) as f64).collect(),
            vec![("c".into(), vec![1.0; n]), ("x".into(), (0..n).map(|i| i as f64).collect())],
        )
        .unwrap();
        let f = fit_ols(Arc::new(d), Arc::new(ClusterPartition::from_labels(&(0..n).map(|i| i / 3).collect::<Vec<_>>()).unwrap())).unwrap();
        let r = pairs_cluster_test(&f, &Restriction::single(2, 1, 0.0).unwrap(), 27, 0).unwrap();
        assert!(r.enumerated);
        assert_eq!(r.reps, 27);
    }
}
