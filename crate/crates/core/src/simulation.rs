//! Data-generating processes with cluster dependence and a Monte Carlo
//! runner for rejection frequencies.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal, StudentT};

use crate::bootstrap::{wild_test, AuxDistribution, Studentization, WildOptions, WildVariant};
use crate::crve::{cv1, cv3, hc1, t_test};
use crate::data::{ClusterPartition, Dataset};
use crate::error::{Error, Result};
use crate::estimation::{fit_ols, RegressionFit, Restriction};
use crate::par;
use crate::rng::{self, Domain};

/// How observations are spread over clusters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizePattern {
    Equal { size: usize },
    /// Sizes `max(1, round(exp(μ + σ Z)))` with `μ` chosen so the median is `median`.
    Lognormal { median: f64, sigma: f64 },
    /// Cluster 0 holds `share` of all observations; the others have `other_size` each.
    OneDominant { share: f64, other_size: usize },
}

pub const DEFAULT_LOGNORMAL_SIGMA: f64 = 1.0;

pub fn cluster_sizes(g: usize, pattern: SizePattern, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if g == 0 {
        return Err(Error::InvalidArgument("at least one cluster is required".into()));
    }
    Ok(match pattern {
        SizePattern::Equal { size } => {
            if size == 0 {
                return Err(Error::InvalidArgument("cluster size must be positive".into()));
            }
            vec![size; g]
        }
        SizePattern::Lognormal { median, sigma } => {
            let d = LogNormal::new(median.ln(), sigma)
                .map_err(|e| Error::InvalidArgument(format!("lognormal sizes: {e}")))?;
            (0..g).map(|_| (d.sample(rng).round() as usize).max(1)).collect()
        }
        SizePattern::OneDominant { share, other_size } => {
            if !(share > 0.0 && share < 1.0) || other_size == 0 {
                return Err(Error::InvalidArgument("dominant share must lie in (0, 1)".into()));
            }
            let rest = (g - 1) * other_size;
            let big = ((share / (1.0 - share)) * rest as f64).round().max(1.0) as usize;
            let mut s = vec![other_size; g];
            s[0] = big;
            s
        }
    })
}

/// Cluster index of each observation for contiguous clusters.
pub fn labels_from_sizes(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(g, s)).collect()
}

/// Factor loadings `λ_gi`.
#[derive(Debug, Clone, PartialEq)]
pub enum Loadings {
    Constant(f64),
    /// Independent `N(mean, sd²)` draws per observation.
    Normal { mean: f64, sd: f64 },
    /// One loading per observation.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Disturbance {
    Iid,
    /// `λ ε_g + ε_gi`.
    RandomEffects { lambda: f64 },
    /// `λ_gi ε_g + ε_gi`.
    Factor { loadings: Loadings },
}

/// A standard normal, or a t(5) scaled to unit variance.
fn shock(rng: &mut impl Rng, heavy: bool) -> f64 {
    if heavy {
        let t: f64 = StudentT::new(5.0).expect("valid dof").sample(rng);
        t * (3.0_f64 / 5.0).sqrt()
    } else {
        rng.sample(StandardNormal)
    }
}

/// Disturbances for contiguous clusters of the given sizes; `ε_gi` has
/// standard deviation `omega`.
pub fn gen_disturbances(
    kind: &Disturbance,
    omega: f64,
    sizes: &[usize],
    heavy_tails: bool,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument("omega must be positive".into()));
    }
    let n: usize = sizes.iter().sum();
    if let Disturbance::Factor { loadings: Loadings::Explicit(l) } = kind {
        if l.len() != n {
            return Err(Error::LengthMismatch { what: "factor loadings", expected: n, found: l.len() });
        }
    }
    let mut u = Vec::with_capacity(n);
    for &s in sizes {
        let common = shock(rng, heavy_tails);
        for _ in 0..s {
            let i = u.len();
            let lambda = match kind {
                Disturbance::Iid => 0.0,
                Disturbance::RandomEffects { lambda } => *lambda,
                Disturbance::Factor { loadings } => match loadings {
                    Loadings::Constant(l) => *l,
                    Loadings::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
                    Loadings::Explicit(l) => l[i],
                },
            };
            u.push(lambda * common + omega * shock(rng, heavy_tails));
        }
    }
    Ok(u)
}

/// Analytic within-cluster covariance of factor-model disturbances after
/// subtracting the cluster mean.
#[derive(Debug, Clone)]
pub struct DemeanedCovariance {
    /// `(λ_i - λ̄)(λ_j - λ̄)`
    pub factor: DMatrix<f64>,
    /// `ω² (1{i=j} - 1/n)`
    pub idiosyncratic: DMatrix<f64>,
}

impl DemeanedCovariance {
    pub fn total(&self) -> DMatrix<f64> {
        &self.factor + &self.idiosyncratic
    }
}

pub fn demeaned_covariance(loadings: &[f64], omega: f64) -> DemeanedCovariance {
    let n = loadings.len();
    let mean = loadings.iter().sum::<f64>() / n as f64;
    let dev = DVector::from_iterator(n, loadings.iter().map(|l| l - mean));
    let factor = &dev * dev.transpose();
    let idiosyncratic = DMatrix::from_fn(n, n, |i, j| omega * omega * ((i == j) as u8 as f64 - 1.0 / n as f64));
    DemeanedCovariance { factor, idiosyncratic }
}

/// Group-by-period panel layout for placebo regressors.
#[derive(Debug, Clone)]
pub struct PanelLayout {
    /// Group (e.g. state) of each observation, `0..groups`.
    pub group: Vec<usize>,
    /// Period of each observation, `0..periods`.
    pub period: Vec<usize>,
    pub groups: usize,
    pub periods: usize,
}

impl PanelLayout {
    pub fn new(group: Vec<usize>, period: Vec<usize>) -> Result<Self> {
        if group.len() != period.len() {
            return Err(Error::LengthMismatch { what: "period column", expected: group.len(), found: period.len() });
        }
        if group.is_empty() {
            return Err(Error::Empty("panel layout"));
        }
        let groups = group.iter().max().map_or(0, |m| m + 1);
        let periods = period.iter().max().map_or(0, |m| m + 1);
        Ok(Self { group, period, groups, periods })
    }

    /// Builds dense indices from arbitrary labels (first appearance for
    /// groups, sorted order for periods).
    pub fn from_labels<G, P>(groups: &[G], periods: &[P]) -> Result<Self>
    where
        G: std::hash::Hash + Eq + std::fmt::Display,
        P: Ord + Clone,
    {
        let gp = ClusterPartition::from_labels(groups)?;
        let mut levels: Vec<P> = periods.to_vec();
        levels.sort();
        levels.dedup();
        let period = periods
            .iter()
            .map(|p| levels.binary_search(p).unwrap_or(0))
            .collect();
        Self::new(gp.assignment().to_vec(), period)
    }
}

/// `x = δ v_st + (1 - δ) ε` with independent stationary AR(1) processes
/// `v_st = ρ v_s,t-1 + e_st` per group.
pub fn gen_ar1_placebo(layout: &PanelLayout, rho: f64, delta: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rho) || !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument("need 0 <= rho < 1 and 0 <= delta <= 1".into()));
    }
    let v = ar1_paths(layout.groups, layout.periods, rho, rng);
    Ok((0..layout.group.len())
        .map(|i| {
            let e: f64 = rng.sample(StandardNormal);
            delta * v[layout.group[i]][layout.period[i]] + (1.0 - delta) * e
        })
        .collect())
}

/// `groups` independent AR(1) paths of length `periods`, started from the
/// stationary distribution `N(0, 1/(1-ρ²))`.
pub fn ar1_paths(groups: usize, periods: usize, rho: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let sd0 = (1.0 / (1.0 - rho * rho)).sqrt();
    (0..groups)
        .map(|_| {
            let mut path = Vec::with_capacity(periods);
            let mut v = sd0 * rng.sample::<f64, _>(StandardNormal);
            for t in 0..periods {
                if t > 0 {
                    v = rho * v + rng.sample::<f64, _>(StandardNormal);
                }
                path.push(v);
            }
            path
        })
        .collect()
}

/// Difference-in-differences placebo: a random number of treated groups in
/// `treated_range`, each switching on at a period drawn uniformly from all
/// but the first and staying on.
pub fn gen_did_placebo(
    layout: &PanelLayout,
    treated_range: (usize, usize),
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let (lo, hi) = treated_range;
    if lo == 0 || lo > hi || hi > layout.groups {
        return Err(Error::InvalidArgument(format!(
            "treated-group range {lo}..={hi} is not valid for {} groups",
            layout.groups
        )));
    }
    if layout.periods < 2 {
        return Err(Error::InvalidArgument("a difference-in-differences placebo needs at least two periods".into()));
    }
    let g1 = rng.random_range(lo..=hi);
    let mut start = vec![usize::MAX; layout.groups];
    for s in sample(rng, layout.groups, g1).into_iter() {
        start[s] = rng.random_range(1..layout.periods);
    }
    Ok((0..layout.group.len())
        .map(|i| (layout.period[i] >= start[layout.group[i]]) as u8 as f64)
        .collect())
}

/// Inference procedure for one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// HC1 ignoring clustering, N(0,1) reference.
    Hc1Normal,
    Cv1T,
    Cv3T,
    /// Restricted wild cluster bootstrap (CV1-studentized, symmetric P value).
    Wcr { reps: usize, aux: Option<AuxDistribution> },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Hc1Normal => "HC1+N(0,1)".into(),
            Method::Cv1T => "CV1+t(G-1)".into(),
            Method::Cv3T => "CV3+t(G-1)".into(),
            Method::Wcr { .. } => "WCR".into(),
        }
    }
}

/// Two-sided P value for `β_j = beta0` under `method`.
pub fn method_p_value(fit: &RegressionFit, method: Method, j: usize, beta0: f64, seed: u64) -> Result<f64> {
    let k = fit.k();
    let mut a = DVector::zeros(k);
    a[j] = 1.0;
    match method {
        Method::Hc1Normal => Ok(t_test(fit, &hc1(fit)?, &a, beta0)?.p_value),
        Method::Cv1T => Ok(t_test(fit, &cv1(fit)?, &a, beta0)?.p_value),
        Method::Cv3T => Ok(t_test(fit, &cv3(fit)?, &a, beta0)?.p_value),
        Method::Wcr { reps, aux } => {
            let f = fit.clone().with_restriction(&Restriction::single(k, j, beta0)?)?;
            let opts = WildOptions { aux, reps, seed, studentization: Studentization::Cv1 };
            Ok(wild_test(&f, WildVariant::Wcr, opts)?.p_symmetric)
        }
    }
}

/// Design of the tested regressor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressorDesign {
    /// One N(0,1) value per cluster.
    ClusterInvariant,
    /// 1 for a random `share` of the clusters, 0 otherwise.
    ClusterDummy { share: f64 },
    /// Independent N(0,1) per observation.
    Observation,
    /// Cluster-level N(0,1) plus observation-level noise with weight `1 - delta`.
    Mixed { delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub g: usize,
    pub sizes: SizePattern,
    pub disturbance: Disturbance,
    pub omega: f64,
    pub heavy_tails: bool,
    pub regressor: RegressorDesign,
    /// Additional N(0,1) control regressors (an intercept is always included).
    pub controls: usize,
    /// True coefficient on the tested regressor.
    pub beta: f64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            g: 50,
            sizes: SizePattern::Equal { size: 20 },
            disturbance: Disturbance::Iid,
            omega: 1.0,
            heavy_tails: false,
            regressor: RegressorDesign::Observation,
            controls: 0,
            beta: 0.0,
        }
    }
}

/// Index of the tested regressor in generated datasets.
pub const TESTED_COLUMN: usize = 1;

/// One simulated sample with its cluster partition.
pub fn gen_sample(spec: &DgpSpec, sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<(Dataset, ClusterPartition)> {
    let labels = labels_from_sizes(sizes);
    let n = labels.len();
    let g = sizes.len();
    let x: Vec<f64> = match spec.regressor {
        RegressorDesign::ClusterInvariant => {
            let lv: Vec<f64> = (0..g).map(|_| rng.sample(StandardNormal)).collect();
            labels.iter().map(|&c| lv[c]).collect()
        }
        RegressorDesign::ClusterDummy { share } => {
            let g1 = ((share * g as f64).round() as usize).clamp(1, g.saturating_sub(1).max(1));
            let mut on = vec![0.0; g];
            for c in sample(rng, g, g1).into_iter() {
                on[c] = 1.0;
            }
            labels.iter().map(|&c| on[c]).collect()
        }
        RegressorDesign::Observation => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        RegressorDesign::Mixed { delta } => {
            let lv: Vec<f64> = (0..g).map(|_| rng.sample(StandardNormal)).collect();
            labels
                .iter()
                .map(|&c| delta * lv[c] + (1.0 - delta) * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
    };
    let mut columns = vec![("const".to_string(), vec![1.0; n]), ("x".to_string(), x)];
    for c in 0..spec.controls {
        columns.push((format!("z{}", c + 1), (0..n).map(|_| rng.sample(StandardNormal)).collect()));
    }
    let u = gen_disturbances(&spec.disturbance, spec.omega, sizes, spec.heavy_tails, rng)?;
    let y: Vec<f64> = (0..n).map(|i| 1.0 + spec.beta * columns[1].1[i] + u[i]).collect();
    Ok((Dataset::new(y, columns)?, ClusterPartition::from_labels(&labels)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRate {
    pub method: String,
    pub rejections: usize,
    /// Replications in which the method produced a P value.
    pub reps: usize,
    pub failures: usize,
    /// Rejection frequency in percent.
    pub rate: f64,
    /// Binomial Monte Carlo standard error, in percent.
    pub mc_se: f64,
}

impl MethodRate {
    pub fn from_counts(method: String, rejections: usize, reps: usize, failures: usize) -> Self {
        let p = if reps > 0 { rejections as f64 / reps as f64 } else { f64::NAN };
        Self {
            method,
            rejections,
            reps,
            failures,
            rate: 100.0 * p,
            mc_se: 100.0 * (p * (1.0 - p) / reps as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub rows: Vec<MethodRate>,
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
    pub g: usize,
    /// Cluster sizes of the design, fixed across replications.
    pub sizes: Vec<usize>,
}

/// Tallies rejections at `level` from per-replication P values.
pub(crate) fn tally(methods: &[Method], outcomes: &[Vec<Option<f64>>], level: f64) -> Vec<MethodRate> {
    methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let ps: Vec<f64> = outcomes.iter().filter_map(|o| o[m]).collect();
            let rej = ps.iter().filter(|&&p| p < level).count();
            MethodRate::from_counts(method.name(), rej, ps.len(), outcomes.len() - ps.len())
        })
        .collect()
}

/// Rejection frequencies of `methods` for `H0: β_x = 0` at `level`.
pub fn run_size_experiment(spec: &DgpSpec, methods: &[Method], level: f64, reps: usize, seed: u64) -> Result<MonteCarloReport> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    let mut design_rng = rng::stream(seed, Domain::Simulation, u64::MAX);
    let sizes = cluster_sizes(spec.g, spec.sizes, &mut design_rng)?;
    let outcomes: Vec<Vec<Option<f64>>> = par::try_map_indexed(reps, |r| {
        let mut rng = rng::stream(seed, Domain::Simulation, r as u64);
        let (data, clusters) = gen_sample(spec, &sizes, &mut rng)?;
        let fit = match fit_ols(Arc::new(data), Arc::new(clusters)) {
            Ok(f) => f,
            Err(e) if e.is_numerical() => return Ok(vec![None; methods.len()]),
            Err(e) => return Err(e),
        };
        let inner = rng::child_seed(seed, Domain::Simulation, r as u64);
        Ok(methods
            .iter()
            .map(|&m| method_p_value(&fit, m, TESTED_COLUMN, 0.0, inner).ok())
            .collect())
    })?;
    Ok(MonteCarloReport {
        rows: tally(methods, &outcomes, level),
        reps,
        level,
        seed,
        g: spec.g,
        sizes,
    })
}
