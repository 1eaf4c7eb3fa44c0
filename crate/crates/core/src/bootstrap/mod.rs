//! Wild and pairs cluster bootstraps, bootstrap P values and confidence
//! intervals.

mod ci;
mod pairs;
mod wild;

use rand::Rng;

use crate::estimation::Restriction;
use crate::rng::{self, Domain};

pub use ci::{ci_bootstrap_se, ci_inversion, ci_percentile_t, percentile_positions, CiMethod, ConfidenceInterval};
pub use pairs::pairs_cluster_test;
pub use wild::{wcr_test, wcu_test, wild_test, wr_test, wu_test, WildBootstrap};

/// Default number of bootstrap replicates.
pub const DEFAULT_REPS: usize = 9_999;

/// Cluster count at or below which the six-point distribution is the default.
pub const WEBB_MAX_CLUSTERS: usize = 12;

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;
const SQRT_THREE_HALVES: f64 = 1.224_744_871_391_589;

/// Auxiliary distribution of the wild bootstrap weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxDistribution {
    Rademacher,
    Webb6,
}

impl AuxDistribution {
    /// Equally likely support points; index 0 is always `+1` and index 1 `-1`.
    pub fn support(self) -> &'static [f64] {
        match self {
            AuxDistribution::Rademacher => &[1.0, -1.0],
            AuxDistribution::Webb6 => &[1.0, -1.0, SQRT_THREE_HALVES, -SQRT_THREE_HALVES, SQRT_HALF, -SQRT_HALF],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AuxDistribution::Rademacher => "rademacher",
            AuxDistribution::Webb6 => "webb",
        }
    }

    /// Default choice for `g` clusters and the notice to show, if any.
    pub fn default_for(g: usize) -> (Self, Option<String>) {
        if g <= WEBB_MAX_CLUSTERS {
            (
                AuxDistribution::Webb6,
                Some(format!(
                    "only {g} clusters: using the Webb six-point distribution instead of Rademacher"
                )),
            )
        } else {
            (AuxDistribution::Rademacher, None)
        }
    }

    /// Number of distinct weight vectors for `units` draws, if it fits in a `u64`.
    pub fn draw_count(self, units: usize) -> Option<u64> {
        u32::try_from(units)
            .ok()
            .and_then(|u| (self.support().len() as u64).checked_pow(u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WildVariant {
    /// Cluster weights, restricted residuals.
    Wcr,
    /// Cluster weights, unrestricted residuals.
    Wcu,
    /// Observation weights, restricted residuals.
    Wr,
    /// Observation weights, unrestricted residuals.
    Wu,
}

impl WildVariant {
    pub fn is_restricted(self) -> bool {
        matches!(self, WildVariant::Wcr | WildVariant::Wr)
    }

    pub fn is_cluster_level(self) -> bool {
        matches!(self, WildVariant::Wcr | WildVariant::Wcu)
    }

    pub fn name(self) -> &'static str {
        match self {
            WildVariant::Wcr => "WCR",
            WildVariant::Wcu => "WCU",
            WildVariant::Wr => "WR",
            WildVariant::Wu => "WU",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootVariant {
    Wild(WildVariant),
    Pairs,
}

impl BootVariant {
    pub fn name(self) -> &'static str {
        match self {
            BootVariant::Wild(v) => v.name(),
            BootVariant::Pairs => "pairs",
        }
    }
}

/// Variance estimator used in the actual and bootstrap test statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Studentization {
    #[default]
    Cv1,
    Cv3,
}

impl Studentization {
    pub fn name(self) -> &'static str {
        match self {
            Studentization::Cv1 => "CV1",
            Studentization::Cv3 => "CV3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WildOptions {
    /// `None` picks Webb for few clusters and Rademacher otherwise.
    pub aux: Option<AuxDistribution>,
    pub reps: usize,
    pub seed: u64,
    pub studentization: Studentization,
}

impl Default for WildOptions {
    fn default() -> Self {
        Self {
            aux: None,
            reps: DEFAULT_REPS,
            seed: 0,
            studentization: Studentization::Cv1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PValueKind {
    Symmetric,
    EqualTail,
    Upper,
}

/// Bootstrap P value with strict exceedances.
pub fn boot_p_value(tau: f64, replicates: &[f64], kind: PValueKind) -> f64 {
    p_value(tau, replicates, kind, false)
}

/// Bootstrap P value; with `ties_exceed`, replicates equal to `tau` count
/// as exceedances.
pub fn p_value(tau: f64, replicates: &[f64], kind: PValueKind, ties_exceed: bool) -> f64 {
    let b = replicates.len();
    if b == 0 {
        return f64::NAN;
    }
    let above = |x: f64, t: f64| x > t || (ties_exceed && x == t);
    let count = match kind {
        PValueKind::Symmetric => replicates.iter().filter(|&&x| above(x.abs(), tau.abs())).count(),
        PValueKind::Upper => replicates.iter().filter(|&&x| above(x, tau)).count(),
        PValueKind::EqualTail => {
            let up = replicates.iter().filter(|&&x| above(x, tau)).count();
            let down = replicates.iter().filter(|&&x| x <= tau).count();
            return (2.0 * up.min(down) as f64 / b as f64).min(1.0);
        }
    };
    count as f64 / b as f64
}

/// Weights for replicate `b`: either digit `g` of `b` in base
/// `support.len()` (enumeration, so `b = 0` is all `+1`) or independent
/// draws from the replicate's own stream.
pub fn draw_weights(aux: AuxDistribution, seed: u64, b: usize, units: usize, enumerate: bool, out: &mut Vec<f64>) {
    let support = aux.support();
    let m = support.len();
    out.clear();
    if enumerate {
        let mut rest = b;
        for _ in 0..units {
            out.push(support[rest % m]);
            rest /= m;
        }
    } else {
        let mut r = rng::stream(seed, Domain::WildWeights, b as u64);
        out.extend((0..units).map(|_| support[r.random_range(0..m)]));
    }
}

/// Outcome of a bootstrap test.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub variant: BootVariant,
    pub studentization: Studentization,
    pub aux: Option<AuxDistribution>,
    pub restriction: Restriction,
    /// Actual t statistic (one restriction) or Wald statistic.
    pub tau: f64,
    pub replicates: Vec<f64>,
    /// `a'β̂*` per replicate (one restriction only).
    pub coef_replicates: Option<Vec<f64>>,
    pub estimate: Option<f64>,
    pub p_symmetric: f64,
    pub p_equal_tail: f64,
    pub p_upper: f64,
    pub reps: usize,
    pub enumerated: bool,
    pub seed: u64,
    /// Replicates dropped as singular (pairs bootstrap).
    pub discarded: usize,
    pub notices: Vec<String>,
}

impl BootstrapResult {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        variant: BootVariant,
        studentization: Studentization,
        aux: Option<AuxDistribution>,
        restriction: Restriction,
        tau: f64,
        replicates: Vec<f64>,
        coef_replicates: Option<Vec<f64>>,
        estimate: Option<f64>,
        enumerated: bool,
        seed: u64,
        ties_exceed: bool,
    ) -> Self {
        let p_upper = p_value(tau, &replicates, PValueKind::Upper, ties_exceed);
        let (p_symmetric, p_equal_tail) = if restriction.rows() == 1 {
            (
                p_value(tau, &replicates, PValueKind::Symmetric, ties_exceed),
                p_value(tau, &replicates, PValueKind::EqualTail, ties_exceed),
            )
        } else {
            (p_upper, p_upper)
        };
        Self {
            variant,
            studentization,
            aux,
            restriction,
            tau,
            reps: replicates.len(),
            replicates,
            coef_replicates,
            estimate,
            p_symmetric,
            p_equal_tail,
            p_upper,
            enumerated,
            seed,
            discarded: 0,
            notices: Vec::new(),
        }
    }
}

/// Notice for replicate counts where `0.05 (B + 1)` is not an integer.
pub(crate) fn reps_notice(reps: usize) -> Option<String> {
    if !(reps + 1).is_multiple_of(20) {
        Some(format!(
            "B = {reps}: 0.05(B+1) is not an integer, so the 5% test is not exact in the bootstrap sense"
        ))
    } else {
        None
    }
}

/// `τ = n / sqrt(v)` with the conventions for a vanishing variance.
pub(crate) fn ratio(n: f64, v: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else if v > 0.0 {
        n / v.sqrt()
    } else {
        f64::INFINITY.copysign(n)
    }
}
