mod common;

use std::sync::Arc;

use clusterinf::crve::{TwoWayFactors, TwoWayOptions};
use clusterinf::diagnostics::{effective_clusters, influence, leverage, partial_leverage};
use clusterinf::level_tests::{score_variance_test, LevelTestOptions};
use clusterinf::linalg::min_eigenvalue;
use clusterinf::randomization::{count_assignments, ri_p_values, Tail};
use clusterinf::{
    boot_p_value, cv1, cv2, cv3, cv3_jackknife, fit_ols, is_nested, par, t_test, twoway_cv1, wald_test,
    within_transform, AuxDistribution, ClusterPartition, PValueKind, Restriction, Studentization, WildOptions,
};
use clusterinf::bootstrap::wcr_test;
use clusterinf_testkit as tk;
use common::{dataset, fit, fit_with, restricted, unit};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = tk::Instance> {
    (any::<u64>(), 3usize..=8, 2usize..=4, 0usize..=30)
        .prop_map(|(seed, g, k, extra)| tk::random_instance(seed, 4 * g + extra, g, k))
}

fn labels(n: usize, g: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0..g, n)
}

fn psd_within(m: &DMatrix<f64>) -> bool {
    min_eigenvalue(m) >= -1e-10 * m.trace().abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn within_transform_centers_and_is_idempotent(inst in instance(), fe in labels(60, 5)) {
        let n = inst.y.len();
        let fe = &fe[..n.min(fe.len())];
        prop_assume!(fe.len() == n);
        let p = ClusterPartition::from_labels(fe).unwrap();
        let Ok(abs) = within_transform(&dataset(&inst.y, &inst.x), &p) else { return Ok(()) };
        for j in 0..abs.data.n_regressors() {
            let col = abs.data.x().column(j);
            let scale = col.amax().max(1.0);
            for g in 0..p.g_count() {
                let m = p.members(g);
                let s: f64 = m.iter().map(|&i| col[i]).sum();
                prop_assert!(s.abs() < 1e-9 * m.len() as f64 * scale);
            }
        }
        let again = within_transform(&abs.data, &p).unwrap();
        prop_assert!((again.data.x() - abs.data.x()).amax() < 1e-12);
        prop_assert!((again.data.y() - abs.data.y()).amax() < 1e-12);
    }

    #[test]
    fn mutual_nesting_means_relabeling(a in labels(30, 4), perm in Just(vec![3usize, 0, 2, 1]), b in labels(30, 3)) {
        let pa = ClusterPartition::from_labels(&a).unwrap();
        let relabeled: Vec<usize> = a.iter().map(|&l| perm[l]).collect();
        let pr = ClusterPartition::from_labels(&relabeled).unwrap();
        prop_assert!(is_nested(&pa, &pr).unwrap() && is_nested(&pr, &pa).unwrap());
        let pb = ClusterPartition::from_labels(&b).unwrap();
        if is_nested(&pa, &pb).unwrap() && is_nested(&pb, &pa).unwrap() {
            prop_assert_eq!(pa.assignment(), pb.assignment());
        }
    }

    #[test]
    fn restricted_fit_properties(inst in instance(), target in -2.0f64..2.0, w in -1.0f64..1.0) {
        let k = inst.x.ncols();
        let mut row = DVector::zeros(k);
        row[k - 1] = 1.0;
        row[0] = w;
        let rest = Restriction::combination(&row, target).unwrap();
        let f = restricted(&inst, &rest);
        let rp = f.restricted().unwrap();
        prop_assert!((rest.matrix() * &rp.beta - rest.target()).amax() < 1e-10 * (1.0 + target.abs()));
        let ssr_r = rp.residuals.norm_squared();
        prop_assert!(ssr_r >= f.ssr() * (1.0 - 1e-12));
        let total: DVector<f64> = rp.scores.iter().fold(DVector::zeros(k), |acc, s| acc + s);
        let proj = &row * (row.dot(&total) / row.norm_squared());
        let scale = inst.x.amax() * rp.residuals.amax() * inst.y.len() as f64;
        prop_assert!((&total - proj).norm() < 1e-8 * scale);
    }

    #[test]
    fn crves_are_psd(inst in instance()) {
        let f = fit(&inst);
        prop_assert!(psd_within(&cv1(&f).unwrap().matrix));
        if let Ok(v) = cv2(&f) {
            prop_assert!(psd_within(&v.matrix));
        }
        if let Ok(v) = cv3(&f) {
            prop_assert!(psd_within(&v.matrix));
        }
    }

    #[test]
    fn twoway_on_one_partition_is_unscaled_cv1(inst in instance()) {
        let f = fit(&inst);
        let opts = TwoWayOptions { factors: TwoWayFactors::None, ..Default::default() };
        let v = twoway_cv1(&f, &f, &f, opts).unwrap();
        let c = clusterinf::crve::cv1_factor(f.g_count(), f.n_obs(), f.dof_k());
        let base = cv1(&f).unwrap().matrix / c;
        prop_assert!(tk::rel_frobenius(&v.matrix, &base) < 1e-10);
    }

    #[test]
    fn wald_and_t_agree(inst in instance(), beta0 in -1.0f64..1.0) {
        let f = fit(&inst);
        let k = f.k();
        let v = cv1(&f).unwrap();
        let t = t_test(&f, &v, &unit(k, 1), beta0).unwrap();
        let w = wald_test(&f, &v, &Restriction::single(k, 1, beta0).unwrap()).unwrap();
        prop_assert!((t.p_value - w.p_value).abs() < 1e-12);
    }

    #[test]
    fn leverage_accounting(inst in instance(), factor in 0.01f64..100.0) {
        let f = fit(&inst);
        let k = f.k();
        prop_assert!((leverage(&f).iter().sum::<f64>() - k as f64).abs() < 1e-9);
        for j in 0..k {
            let p = partial_leverage(&f, j).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let ec = effective_clusters(&p).unwrap();
            let g = f.g_count() as f64;
            prop_assert!(ec.g_star0 > 0.0 && ec.g_star0 <= g + 1e-9);
            prop_assert_eq!(ec.v_s == 0.0, ec.g_star0 == g);
        }
        let (j, other) = (0, k - 1);
        if k > 1 {
            let mut x = inst.x.clone();
            x.column_mut(other).scale_mut(factor);
            let g = fit_with(&inst.y, &x, &inst.clusters);
            let (a, b) = (partial_leverage(&f, j).unwrap(), partial_leverage(&g, j).unwrap());
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn influence_is_the_jackknife(inst in instance()) {
        let f = fit(&inst);
        if let Ok(jk) = cv3_jackknife(&f) {
            prop_assert_eq!(influence(&f).unwrap(), jk.deleted);
        }
    }

    #[test]
    fn ri_p2_identity(obs in -3.0f64..3.0, reps in proptest::collection::vec(-3.0f64..3.0, 1..50), upper in any::<bool>()) {
        let tail = if upper { Tail::Upper } else { Tail::TwoSided };
        let (p1, p2) = ri_p_values(obs, &reps, tail);
        let s = reps.len() as f64;
        prop_assert_eq!(p2, (1.0 + s * p1) / (s + 1.0));
        prop_assert!(p2 >= p1 || p1 == 1.0);
    }

    #[test]
    fn assignment_counts(g in 1usize..70, frac in 0.0f64..=1.0) {
        let g1 = ((g as f64) * frac).floor() as usize;
        let exact = tk::binomial_u128(g as u128, g1 as u128);
        match count_assignments(g, g1) {
            Ok(c) => prop_assert_eq!(c as u128, exact),
            Err(_) => prop_assert!(exact > u64::MAX as u128),
        }
    }

    #[test]
    fn bootstrap_p_is_order_free(tau in -3.0f64..3.0, mut reps in proptest::collection::vec(-3.0f64..3.0, 1..60)) {
        let before: Vec<f64> = [PValueKind::Symmetric, PValueKind::EqualTail, PValueKind::Upper]
            .iter().map(|&k| boot_p_value(tau, &reps, k)).collect();
        reps.reverse();
        let third = reps.len() / 3;
        reps.rotate_left(third);
        let after: Vec<f64> = [PValueKind::Symmetric, PValueKind::EqualTail, PValueKind::Upper]
            .iter().map(|&k| boot_p_value(tau, &reps, k)).collect();
        prop_assert_eq!(before, after);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn enumeration_ignores_the_seed(inst in instance(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let k = inst.x.ncols();
        let f = restricted(&inst, &Restriction::single(k, 1, 0.0).unwrap());
        let opts = |seed| WildOptions { aux: Some(AuxDistribution::Rademacher), reps: 1 << 8, seed, studentization: Studentization::Cv1 };
        let a = wcr_test(&f, opts(s1)).unwrap();
        let b = wcr_test(&f, opts(s2)).unwrap();
        prop_assert!(a.enumerated);
        prop_assert_eq!(a.replicates, b.replicates);
    }

    #[test]
    fn worker_count_does_not_matter(inst in instance(), seed in any::<u64>()) {
        let k = inst.x.ncols();
        let f = restricted(&inst, &Restriction::single(k, 1, 0.0).unwrap());
        let opts = WildOptions { aux: Some(AuxDistribution::Webb6), reps: 499, seed, studentization: Studentization::Cv3 };
        let a = wcr_test(&f, opts);
        let b = par::sequential(|| wcr_test(&f, opts));
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.replicates, b.replicates),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn level_test_enumeration_matches_exhaustive_oracle(seed in any::<u64>()) {
        let inst = tk::random_instance(seed, 48, 8, 2);
        let f = fit(&inst);
        let fine = ClusterPartition::from_labels(&inst.clusters).unwrap();
        let coarse_of_fine = [0usize, 0, 0, 1, 1, 2, 2, 2];
        let coarse_labels: Vec<usize> = inst.clusters.iter().map(|&c| coarse_of_fine[c]).collect();
        let coarse = ClusterPartition::from_labels(&coarse_labels).unwrap();
        let a = unit(2, 1);
        let res = score_variance_test(&f, &fine, &coarse, &a, LevelTestOptions { reps: 256, seed: 1, variance_scale: 1.0 }).unwrap();
        prop_assert!(res.enumerated);

        let (_, u) = tk::ols(&inst.y, &inst.x).unwrap();
        let w = (inst.x.transpose() * &inst.x).try_inverse().unwrap() * &a;
        let xw = &inst.x * w;
        let z: Vec<f64> = tk::groups(&inst.clusters).iter().map(|m| m.iter().map(|&i| xw[i] * u[i]).sum()).collect();
        let stat = |z: &[f64]| {
            let theta = tk::cross_product_sum(z, &coarse_of_fine);
            let var: f64 = (0..3).map(|c| {
                let masked: Vec<f64> = z.iter().enumerate().map(|(h, v)| if coarse_of_fine[h] == c { *v } else { 0.0 }).collect();
                tk::cross_product_sum(&masked, &coarse_of_fine).powi(2)
            }).sum();
            (theta, var)
        };
        let (theta, var) = stat(&z);
        prop_assert!((res.theta_hat - theta).abs() < 1e-10 * theta.abs().max(1e-300) + 1e-14);
        let tau = theta / var.sqrt();
        let mut hits = 0;
        for b in 0..256usize {
            let zs: Vec<f64> = (0..8).map(|h| if (b >> h) & 1 == 0 { z[h] } else { -z[h] }).collect();
            let (t, v) = stat(&zs);
            if v > 0.0 && t / v.sqrt() > tau {
                hits += 1;
            }
        }
        prop_assert_eq!(res.p_bootstrap, hits as f64 / 256.0);
    }
}

#[test]
fn theta_is_the_difference_of_meats() {
    for seed in 0..10 {
        let inst = tk::random_instance(40 + seed, 60, 10, 3);
        let f = fit(&inst);
        let coarse_labels: Vec<usize> = inst.clusters.iter().map(|&c| c / 3).collect();
        let fine = ClusterPartition::from_labels(&inst.clusters).unwrap();
        let coarse = ClusterPartition::from_labels(&coarse_labels).unwrap();
        let a = DVector::from_vec(vec![0.0, 1.0, -0.5]);
        let res = score_variance_test(&f, &fine, &coarse, &a, LevelTestOptions::default()).unwrap();
        let (_, u) = tk::ols(&inst.y, &inst.x).unwrap();
        let inv = (inst.x.transpose() * &inst.x).try_inverse().unwrap();
        let meat = |labels: &[usize]| {
            tk::cluster_scores(&inst.x, &u, &tk::groups(labels)).iter().fold(DMatrix::zeros(3, 3), |m, s| m + s * s.transpose())
        };
        let d = &inv * (meat(&coarse_labels) - meat(&inst.clusters)) * &inv;
        let oracle = a.dot(&(d * &a));
        assert_close(res.theta_hat, oracle);
    }
}

fn assert_close(a: f64, b: f64) {
    assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-12), "{a} vs {b}");
}

#[test]
fn identical_levels_give_zero() {
    let inst = tk::random_instance(3, 40, 8, 2);
    let data = Arc::new(dataset(&inst.y, &inst.x));
    let p = Arc::new(ClusterPartition::from_labels(&inst.clusters).unwrap());
    let f = fit_ols(data, p.clone()).unwrap();
    let r = score_variance_test(&f, &p, &p, &unit(2, 1), LevelTestOptions::default()).unwrap();
    assert_eq!(r.theta_hat, 0.0);
    assert_eq!(r.tau, 0.0);
    assert!(r.degenerate);
}
