use std::sync::Arc;

use clusterinf::bootstrap::wcr_test;
use clusterinf::randomization::{ri_test, RiOptions, StatisticKind, TreatmentSpec};
use clusterinf::{cv3, fit_ols, par, AuxDistribution, ClusterPartition, Dataset, Restriction, Studentization, WildOptions};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn panel(n: usize, g: usize, k: usize) -> (Dataset, ClusterPartition) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let labels: Vec<usize> = (0..n).map(|i| i * g / n).collect();
    let mut cols = vec![("const".to_string(), vec![1.0; n])];
    for j in 1..k {
        cols.push((format!("x{j}"), (0..n).map(|_| rng.random::<f64>() - 0.5).collect()));
    }
    let y = (0..n).map(|i| cols[1].1[i] + rng.random::<f64>()).collect();
    (Dataset::new(y, cols).unwrap(), ClusterPartition::from_labels(&labels).unwrap())
}

fn modes(c: &mut Criterion, name: &str, mut f: impl FnMut()) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("mode", "parallel"), |b| b.iter(&mut f));
    group.bench_function(BenchmarkId::new("mode", "sequential"), |b| b.iter(|| par::sequential(&mut f)));
    group.finish();
}

fn wild(c: &mut Criterion) {
    let (data, clusters) = panel(50_000, 50, 10);
    let fit = fit_ols(Arc::new(data), Arc::new(clusters))
        .unwrap()
        .with_restriction(&Restriction::single(10, 1, 0.0).unwrap())
        .unwrap();
    for stud in [Studentization::Cv1, Studentization::Cv3] {
        let opts = WildOptions { aux: Some(AuxDistribution::Rademacher), reps: 9_999, seed: 1, studentization: stud };
        modes(c, &format!("wcr_{}", stud.name()), || {
            wcr_test(&fit, opts).unwrap();
        });
    }
    modes(c, "cv3_jackknife", || {
        cv3(&fit).unwrap();
    });
}

fn randomization(c: &mut Criterion) {
    let (data, clusters) = panel(2_000, 20, 3);
    let treated: Vec<usize> = (0..8).collect();
    let labels = clusters.assignment().to_vec();
    let col: Vec<f64> = labels.iter().map(|&g| (g < 8) as u8 as f64).collect();
    let data = data.with_replaced_column(1, &col).unwrap();
    let spec = TreatmentSpec::Cluster { treated };
    let opts = RiOptions { kind: StatisticKind::T, reps: 999, ..Default::default() };
    modes(c, "ri_t", || {
        ri_test(&data, &clusters, 1, &spec, None, opts).unwrap();
    });
}

criterion_group!(benches, wild, randomization);
criterion_main!(benches);
