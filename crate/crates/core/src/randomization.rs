//! Randomization inference for cluster-level treatment assignments.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::DVector;
use num_bigint::BigUint;
use rand::seq::index::sample;
use rand::Rng;

use crate::bootstrap::Studentization;
use crate::crve::{cv1, cv3, t_test};
use crate::data::{demean, ClusterPartition, Dataset};
use crate::error::{Error, Result};
use crate::estimation::fit_ols;
use crate::par;
use crate::rng::{self, Domain};

/// Above this many re-randomizations duplicates are negligible and draws
/// are taken with replacement.
pub const WITH_REPLACEMENT_ABOVE: u64 = 1 << 50;

/// `C(g, g1)` in 64 bits, or [`Error::CountOverflow`].
pub fn count_assignments(g: usize, g1: usize) -> Result<u64> {
    if g1 > g {
        return Err(Error::InvalidArgument(format!("cannot treat {g1} of {g} clusters")));
    }
    let k = g1.min(g - g1) as u128;
    let n = g as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
        if acc > u64::MAX as u128 {
            return Err(Error::CountOverflow { n: g, k: g1 });
        }
    }
    Ok(acc as u64)
}

/// `C(g, g1)` without overflow.
pub fn count_assignments_big(g: usize, g1: usize) -> BigUint {
    let k = g1.min(g.saturating_sub(g1));
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(g - i) / BigUint::from(i + 1);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatisticKind {
    Beta,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tail {
    /// Compare `|stat|`.
    #[default]
    TwoSided,
    Upper,
}

/// How the treatment column is built from a set of treated clusters.
#[derive(Debug, Clone, PartialEq)]
pub enum TreatmentSpec {
    /// Every observation of a treated cluster is treated.
    Cluster { treated: Vec<usize> },
    /// Treated clusters are treated from their start period on.
    Staggered {
        /// `(cluster, start period)` of the actually treated clusters.
        starts: Vec<(usize, usize)>,
        /// Period of each observation, `0..periods`.
        period: Vec<usize>,
        periods: usize,
        /// Draw new start periods (uniform over all but the first period)
        /// instead of handing the actual starts to the new treated clusters.
        redraw_starts: bool,
    },
}

impl TreatmentSpec {
    fn treated(&self) -> Vec<usize> {
        let mut t: Vec<usize> = match self {
            TreatmentSpec::Cluster { treated } => treated.clone(),
            TreatmentSpec::Staggered { starts, .. } => starts.iter().map(|s| s.0).collect(),
        };
        t.sort_unstable();
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiOptions {
    pub kind: StatisticKind,
    pub tail: Tail,
    pub reps: usize,
    pub seed: u64,
    pub studentization: Studentization,
}

impl Default for RiOptions {
    fn default() -> Self {
        Self {
            kind: StatisticKind::T,
            tail: Tail::TwoSided,
            reps: 9_999,
            seed: 0,
            studentization: Studentization::Cv1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiResult {
    pub kind: StatisticKind,
    pub tail: Tail,
    pub observed: f64,
    pub replicates: Vec<f64>,
    pub p1: f64,
    pub p2: f64,
    /// Re-randomizations that entered the P values.
    pub s: usize,
    /// `C(G, G1) - 1`, in decimal.
    pub possible: String,
    pub enumerated: bool,
    /// Re-randomizations dropped because the regression was singular.
    pub skipped: usize,
    pub notices: Vec<String>,
}

/// `P1 = (1/S) Σ 1(τ* >= τ)`, `P2 = (1 + S P1) / (S + 1)`.
pub fn ri_p_values(observed: f64, replicates: &[f64], tail: Tail) -> (f64, f64) {
    let s = replicates.len() as f64;
    let hits = match tail {
        Tail::TwoSided => replicates.iter().filter(|r| r.abs() >= observed.abs()).count(),
        Tail::Upper => replicates.iter().filter(|&&r| r >= observed).count(),
    };
    let p1 = hits as f64 / s;
    (p1, (1.0 + s * p1) / (s + 1.0))
}

/// Next subset in lexicographic order, `false` after the last.
fn next_combination(c: &mut [usize], g: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < g - k + i {
            c[i] += 1;
            for j in (i + 1)..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Randomization test of the coefficient on column `j` of `data`, whose
/// values are rebuilt from `treatment` for every re-randomization. With
/// `absorb`, the rebuilt column is demeaned by those fixed effects.
pub fn ri_test(
    data: &Dataset,
    clusters: &ClusterPartition,
    j: usize,
    treatment: &TreatmentSpec,
    absorb: Option<&ClusterPartition>,
    opts: RiOptions,
) -> Result<RiResult> {
    let g = clusters.g_count();
    if j >= data.n_regressors() {
        return Err(Error::InvalidArgument(format!("column index {j} out of range")));
    }
    if clusters.n_obs() != data.n_obs() {
        return Err(Error::LengthMismatch { what: "cluster partition", expected: data.n_obs(), found: clusters.n_obs() });
    }
    let actual = treatment.treated();
    let g1 = actual.len();
    if actual.windows(2).any(|w| w[0] == w[1]) || actual.last().is_some_and(|&c| c >= g) {
        return Err(Error::InvalidArgument("treated clusters must be distinct cluster indices".into()));
    }
    if g1 == 0 || g1 >= g {
        return Err(Error::NoRerandomizations { g, g1 });
    }
    if let TreatmentSpec::Staggered { period, periods, .. } = treatment {
        if period.len() != data.n_obs() {
            return Err(Error::LengthMismatch { what: "period column", expected: data.n_obs(), found: period.len() });
        }
        if *periods < 2 {
            return Err(Error::InvalidArgument("staggered treatment needs at least two periods".into()));
        }
    }
    if opts.reps == 0 {
        return Err(Error::InvalidArgument("at least one re-randomization is required".into()));
    }

    let big = count_assignments_big(g, g1) - BigUint::from(1u32);
    let possible = big.to_string();
    let s_total: Option<u64> = u64::try_from(&big).ok();
    let enumerate = s_total.is_some_and(|s| s <= opts.reps as u64);

    let mut rng = rng::stream(opts.seed, Domain::Rerandomization, 0);
    let mut sets: Vec<Vec<usize>> = Vec::new();
    if enumerate {
        let mut c: Vec<usize> = (0..g1).collect();
        loop {
            if c != actual {
                sets.push(c.clone());
            }
            if !next_combination(&mut c, g) {
                break;
            }
        }
    } else if s_total.is_some_and(|s| s <= WITH_REPLACEMENT_ABOVE) {
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        seen.insert(actual.clone());
        while sets.len() < opts.reps {
            let mut c = sample(&mut rng, g, g1).into_vec();
            c.sort_unstable();
            if seen.insert(c.clone()) {
                sets.push(c);
            }
        }
    } else {
        while sets.len() < opts.reps {
            let mut c = sample(&mut rng, g, g1).into_vec();
            c.sort_unstable();
            if c != actual {
                sets.push(c);
            }
        }
    }

    let assignments: Vec<Vec<(usize, usize)>> = sets
        .into_iter()
        .enumerate()
        .map(|(b, set)| match treatment {
            TreatmentSpec::Cluster { .. } => set.into_iter().map(|c| (c, 0)).collect(),
            TreatmentSpec::Staggered { starts, periods, redraw_starts, .. } => {
                if *redraw_starts {
                    let mut r = rng::stream(opts.seed, Domain::StartPeriods, b as u64);
                    set.into_iter().map(|c| (c, r.random_range(1..*periods))).collect()
                } else {
                    set.into_iter().zip(starts.iter().map(|s| s.1)).collect()
                }
            }
        })
        .collect();

    let build = |assign: &[(usize, usize)]| -> Vec<f64> {
        let mut start = vec![usize::MAX; g];
        for &(c, s) in assign {
            start[c] = s;
        }
        let mut col: Vec<f64> = (0..data.n_obs())
            .map(|i| {
                let c = clusters.assignment()[i];
                let on = match treatment {
                    TreatmentSpec::Cluster { .. } => start[c] != usize::MAX,
                    TreatmentSpec::Staggered { period, .. } => period[i] >= start[c],
                };
                on as u8 as f64
            })
            .collect();
        if let Some(fe) = absorb {
            demean(&mut col, fe);
        }
        col
    };
    let cl = Arc::new(clusters.clone());
    let statistic = |d: Dataset| -> Result<f64> {
        let fit = fit_ols(Arc::new(d), cl.clone())?;
        match opts.kind {
            StatisticKind::Beta => Ok(fit.beta()[j]),
            StatisticKind::T => {
                let cov = match opts.studentization {
                    Studentization::Cv1 => cv1(&fit)?,
                    Studentization::Cv3 => cv3(&fit)?,
                };
                let mut a = DVector::zeros(fit.k());
                a[j] = 1.0;
                Ok(t_test(&fit, &cov, &a, 0.0)?.statistic)
            }
        }
    };

    let observed = statistic(data.clone())?;
    let evaluated: Vec<Option<f64>> = par::try_map_indexed(assignments.len(), |b| {
        let d = data.with_replaced_column(j, &build(&assignments[b]))?;
        match statistic(d) {
            Ok(v) => Ok(Some(v)),
            Err(e) if e.is_numerical() => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let skipped = evaluated.iter().filter(|v| v.is_none()).count();
    let replicates: Vec<f64> = evaluated.into_iter().flatten().collect();
    if replicates.is_empty() {
        return Err(Error::NoRerandomizations { g, g1 });
    }
    let (p1, p2) = ri_p_values(observed, &replicates, opts.tail);
    let mut notices = Vec::new();
    if opts.kind == StatisticKind::T && (g1 == 1 || g - g1 == 1) {
        notices.push(format!(
            "only {} treated or control cluster: the cluster-robust P value is unreliable; the randomization P value remains valid",
            g1.min(g - g1)
        ));
    }
    if skipped > 0 {
        notices.push(format!("{skipped} re-randomizations made the regression singular and were skipped"));
    }
    Ok(RiResult {
        kind: opts.kind,
        tail: opts.tail,
        observed,
        s: replicates.len(),
        replicates,
        p1,
        p2,
        possible,
        enumerated: enumerate,
        skipped,
        notices,
    })
}
