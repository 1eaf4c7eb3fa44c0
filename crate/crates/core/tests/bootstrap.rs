mod common;

use clusterinf::bootstrap::{ci_bootstrap_se, ci_inversion, ci_percentile_t};
use clusterinf::bootstrap::pairs_cluster_test;
use clusterinf::bootstrap::{wcr_test, wild_test, WildBootstrap};
use clusterinf::bootstrap::draw_weights;
use clusterinf::{cv1, t_test, AuxDistribution, Restriction, Studentization, WildOptions, WildVariant};
use clusterinf_testkit as tk;
use common::{fit, fit_with, restricted, unit};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Relative error, measured against 1 for statistics near zero (the WCU
/// statistic at the all-ones draw is zero up to rounding).
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn naive(inst: &tk::Instance, rest: &Restriction, variant: WildVariant, v_unit: &[f64], student: tk::Student) -> f64 {
    let v: Vec<f64> = if variant.is_cluster_level() {
        inst.clusters.iter().map(|&c| v_unit[c]).collect()
    } else {
        v_unit.to_vec()
    };
    let k = inst.x.ncols();
    tk::wild_replicate(&inst.y, &inst.x, &inst.clusters, rest.matrix(), rest.target(), variant.is_restricted(), &v, student, k)
}

#[test]
fn fast_path_matches_refitting() {
    let mut draw = tk::rng(1);
    for seed in 0..20 {
        let inst = tk::random_instance(500 + seed, 40, 8, 3);
        let rest = Restriction::single(3, 1, 0.2).unwrap();
        let f = restricted(&inst, &rest);
        for variant in [WildVariant::Wcr, WildVariant::Wcu] {
            let wb = WildBootstrap::prepare(&f, variant, Studentization::Cv1).unwrap();
            for _ in 0..199 {
                let v: Vec<f64> = (0..wb.units()).map(|_| if draw.random::<bool>() { 1.0 } else { -1.0 }).collect();
                let fast = wb.evaluate(&v);
                let slow = naive(&inst, &rest, variant, &v, tk::Student::Cv1);
                assert!(rel(fast, slow) < 1e-10, "{variant:?} seed {seed}: {fast} vs {slow}");
            }
        }
    }
}

#[test]
fn fast_path_matches_refitting_for_other_variants() {
    let mut draw = tk::rng(2);
    let webb = AuxDistribution::Webb6.support();
    for seed in 0..6 {
        let inst = tk::random_instance(600 + seed, 36, 6, 3);
        let rest = Restriction::single(3, 2, -0.1).unwrap();
        let f = restricted(&inst, &rest);
        let cases = [
            (WildVariant::Wr, Studentization::Cv1, tk::Student::Cv1),
            (WildVariant::Wu, Studentization::Cv1, tk::Student::Cv1),
            (WildVariant::Wcr, Studentization::Cv3, tk::Student::Cv3),
            (WildVariant::Wcu, Studentization::Cv3, tk::Student::Cv3),
        ];
        for (variant, stud, student) in cases {
            let wb = WildBootstrap::prepare(&f, variant, stud).unwrap();
            for _ in 0..25 {
                let v: Vec<f64> = (0..wb.units()).map(|_| webb[draw.random_range(0..6)]).collect();
                let fast = wb.evaluate(&v);
                let slow = naive(&inst, &rest, variant, &v, student);
                assert!(rel(fast, slow) < 1e-9, "{variant:?}/{stud:?}: {fast} vs {slow}");
            }
        }
    }
}

#[test]
fn wald_replicates_match_refitting() {
    let mut draw = tk::rng(3);
    let inst = tk::random_instance(700, 60, 9, 4);
    let r = DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]);
    let rest = Restriction::new(r, DVector::from_vec(vec![0.1, 0.0])).unwrap();
    let f = restricted(&inst, &rest);
    for variant in [WildVariant::Wcr, WildVariant::Wcu] {
        let wb = WildBootstrap::prepare(&f, variant, Studentization::Cv1).unwrap();
        for _ in 0..50 {
            let v: Vec<f64> = (0..9).map(|_| if draw.random::<bool>() { 1.0 } else { -1.0 }).collect();
            assert!(rel(wb.evaluate(&v), naive(&inst, &rest, variant, &v, tk::Student::Cv1)) < 1e-9);
        }
    }
}

#[test]
fn run_uses_the_published_weight_streams() {
    let inst = tk::random_instance(800, 50, 14, 3);
    let rest = Restriction::single(3, 1, 0.0).unwrap();
    let f = restricted(&inst, &rest);
    let opts = WildOptions { aux: Some(AuxDistribution::Rademacher), reps: 99, seed: 42, studentization: Studentization::Cv1 };
    let res = wcr_test(&f, opts).unwrap();
    assert!(!res.enumerated);
    let mut v = Vec::new();
    for b in [0usize, 17, 98] {
        draw_weights(AuxDistribution::Rademacher, 42, b, 14, false, &mut v);
        assert!(rel(res.replicates[b], naive(&inst, &rest, WildVariant::Wcr, &v, tk::Student::Cv1)) < 1e-10);
    }
}

#[test]
fn observation_level_equals_cluster_level_with_singletons() {
    let inst = tk::random_instance(900, 14, 4, 2);
    let single: Vec<usize> = (0..14).collect();
    let rest = Restriction::single(2, 1, 0.0).unwrap();
    let f = fit_with(&inst.y, &inst.x, &single).with_restriction(&rest).unwrap();
    let opts = WildOptions { aux: Some(AuxDistribution::Rademacher), reps: 999, seed: 5, studentization: Studentization::Cv1 };
    let a = wild_test(&f, WildVariant::Wcr, opts).unwrap();
    let b = wild_test(&f, WildVariant::Wr, opts).unwrap();
    assert_eq!(a.replicates, b.replicates);
    assert_eq!(a.p_symmetric, b.p_symmetric);
}

#[test]
fn enumeration_identities() {
    let inst = tk::random_instance(1000, 64, 16, 3);
    let rest = Restriction::single(3, 1, 0.0).unwrap();
    let f = restricted(&inst, &rest);
    let opts = WildOptions { aux: Some(AuxDistribution::Rademacher), reps: 65_536, seed: 0, studentization: Studentization::Cv1 };
    let res = wcr_test(&f, opts).unwrap();
    assert!(res.enumerated);
    assert_eq!(res.replicates.len(), 65_536);
    assert_eq!(res.replicates[0], res.tau);
    assert_eq!(res.replicates[65_535], -res.tau);
    let mut sorted = res.replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let mut flipped: Vec<f64> = sorted.iter().map(|x| -x).collect();
    flipped.reverse();
    assert_eq!(sorted, flipped);
    let t = t_test(&fit(&inst), &cv1(&fit(&inst)).unwrap(), &unit(3, 1), 0.0).unwrap();
    assert!(rel(res.tau, t.statistic) < 1e-10);
}

#[test]
fn pairs_enumeration_matches_exact_distribution() {
    let mut rng = tk::rng(11);
    let n = 18;
    let assign: Vec<usize> = (0..n).map(|i| i / 6).collect();
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { tk::normal(&mut rng) });
    let y = DVector::from_fn(n, |i, _| 0.5 * x[(i, 1)] + tk::normal(&mut rng));
    let f = fit_with(&y, &x, &assign);
    let res = pairs_cluster_test(&f, &Restriction::single(2, 1, 0.0).unwrap(), 100, 0).unwrap();
    assert!(res.enumerated);
    assert_eq!(res.reps, 27);
    let coefs = res.coef_replicates.as_ref().unwrap();
    for (value, prob) in tk::pairs_distribution(&y, &x, &assign, 1) {
        let hits = coefs.iter().filter(|c| (*c - value).abs() < 1e-9 * (1.0 + value.abs())).count();
        assert!((hits as f64 / 27.0 - prob).abs() < 1e-12, "value {value}");
    }
}

#[test]
fn interval_coherence() {
    let inst = tk::random_instance(1200, 80, 12, 3);
    let f = fit(&inst);
    let reps = 399;
    let opts = WildOptions { aux: Some(AuxDistribution::Webb6), reps, seed: 9, studentization: Studentization::Cv1 };
    let inv = ci_inversion(&f, 1, opts, 0.05).unwrap();
    let (pl, pu) = inv.p_at_bounds.unwrap();
    assert!((pl - 0.05).abs() <= 1.0 / reps as f64 + 1e-12, "{pl}");
    assert!((pu - 0.05).abs() <= 1.0 / reps as f64 + 1e-12, "{pu}");
    assert!(inv.lower <= f.beta()[1] && f.beta()[1] <= inv.upper);

    let rest = Restriction::single(3, 1, 0.0).unwrap();
    let fr = f.clone().with_restriction(&rest).unwrap();
    let ropts = WildOptions { aux: Some(AuxDistribution::Rademacher), reps: 4096, seed: 0, studentization: Studentization::Cv1 };
    let wcu = wild_test(&fr, WildVariant::Wcu, ropts).unwrap();
    assert!(wcu.enumerated);
    let cov = cv1(&f).unwrap();
    let pt = ci_percentile_t(&cov, &wcu, 0.05).unwrap();
    let mut sorted = wcu.replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let (_, hi) = clusterinf::bootstrap::percentile_positions(4096, 0.05);
    let c = sorted[hi - 1];
    let s = cov.std_error(1);
    assert_eq!(pt.lower, f.beta()[1] - s * c);
    assert_eq!(pt.upper, f.beta()[1] + s * c);

    let se = ci_bootstrap_se(&f, &wcu, 0.05).unwrap();
    for ci in [&inv, &pt, &se] {
        assert!(ci.lower <= ci.upper);
    }
}
