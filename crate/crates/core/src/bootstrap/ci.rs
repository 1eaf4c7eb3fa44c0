//! Bootstrap confidence intervals for a single coefficient or contrast.

use super::{AuxDistribution, BootstrapResult, WildBootstrap, WildOptions, WildVariant};
use crate::crve::{cv1, CovEstimate};
use crate::dist::t_quantile;
use crate::error::{Error, Result};
use crate::estimation::{RegressionFit, Restriction};
use crate::linalg::quad_form;

/// Bracket expansions allowed before giving up on an endpoint.
pub const MAX_EXPANSIONS: usize = 60;
/// Bisection stops when the bracket is narrower than this many standard errors.
pub const BISECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiMethod {
    Inversion,
    BootstrapSe,
    PercentileT,
}

impl CiMethod {
    pub fn name(self) -> &'static str {
        match self {
            CiMethod::Inversion => "inversion",
            CiMethod::BootstrapSe => "bootstrap_se",
            CiMethod::PercentileT => "percentile_t",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    /// Coverage `1 - α`.
    pub level: f64,
    pub method: CiMethod,
    /// Bootstrap evaluations used (inversion only).
    pub iterations: Option<usize>,
    /// Equal-tail P values at the reported endpoints (inversion only).
    pub p_at_bounds: Option<(f64, f64)>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// Interval of all `β_c` whose equal-tail WCR P value for `β_j = β_c`
/// exceeds `alpha`. Every candidate reuses the same seed, so the P value is
/// a step function of `β_c` driven by one set of weight draws.
pub fn ci_inversion(fit: &RegressionFit, j: usize, opts: WildOptions, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let k = fit.k();
    if j >= k {
        return Err(Error::InvalidArgument(format!("coefficient index {j} out of range 0..{k}")));
    }
    let se = cv1(fit)?.std_error(j);
    if !(se > 0.0) || !se.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let aux = opts.aux.unwrap_or_else(|| AuxDistribution::default_for(fit.g_count()).0);
    let mut evals = 0usize;
    let mut p_at = |b: f64| -> Result<f64> {
        evals += 1;
        let f = fit.clone().with_restriction(&Restriction::single(k, j, b)?)?;
        let wb = WildBootstrap::prepare(&f, WildVariant::Wcr, opts.studentization)?;
        Ok(wb.run(aux, opts.reps, opts.seed)?.p_equal_tail)
    };
    let bhat = fit.beta()[j];
    let p_hat = p_at(bhat)?;
    if p_hat <= alpha {
        return Err(Error::EndpointNotFound(format!(
            "the P value at the estimate ({p_hat}) does not exceed alpha = {alpha}"
        )));
    }

    let mut ends = [(0.0, 0.0); 2];
    for (slot, side) in [-1.0, 1.0].into_iter().enumerate() {
        let (mut inner, mut p_inner) = (bhat, p_hat);
        let mut width = 3.0 * se;
        let mut outer = bhat + side * width;
        let mut p_outer = p_at(outer)?;
        let mut expansions = 0;
        while p_outer > alpha {
            expansions += 1;
            if expansions > MAX_EXPANSIONS {
                let which = if side < 0.0 { "lower" } else { "upper" };
                return Err(Error::EndpointNotFound(format!(
                    "no {which} crossing of alpha = {alpha} within {MAX_EXPANSIONS} bracket expansions"
                )));
            }
            inner = outer;
            p_inner = p_outer;
            width *= 2.0;
            outer = bhat + side * width;
            p_outer = p_at(outer)?;
        }
        while (outer - inner).abs() >= BISECTION_TOL * se {
            let mid = 0.5 * (inner + outer);
            let p = p_at(mid)?;
            if p > alpha {
                inner = mid;
                p_inner = p;
            } else {
                outer = mid;
                p_outer = p;
            }
        }
        ends[slot] = if (p_inner - alpha).abs() <= (p_outer - alpha).abs() {
            (inner, p_inner)
        } else {
            (outer, p_outer)
        };
    }
    Ok(ConfidenceInterval {
        lower: ends[0].0,
        upper: ends[1].0,
        level: 1.0 - alpha,
        method: CiMethod::Inversion,
        iterations: Some(evals),
        p_at_bounds: Some((ends[0].1, ends[1].1)),
    })
}

fn single_replicates(res: &BootstrapResult) -> Result<(f64, &[f64])> {
    match (res.estimate, &res.coef_replicates) {
        (Some(e), Some(c)) => Ok((e, c)),
        _ => Err(Error::InvalidArgument("confidence intervals need a single-restriction bootstrap".into())),
    }
}

/// `a'β̂ ± t_{1-α/2}(G-1) · sd(a'β̂*)`, with the `B-1` divisor.
pub fn ci_bootstrap_se(fit: &RegressionFit, res: &BootstrapResult, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let (est, coefs) = single_replicates(res)?;
    let b = coefs.len();
    if b < 2 {
        return Err(Error::InvalidArgument("at least two replicates are needed for a standard error".into()));
    }
    let mean = coefs.iter().sum::<f64>() / b as f64;
    let sd = (coefs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (b as f64 - 1.0)).sqrt();
    let q = t_quantile(1.0 - alpha / 2.0, fit.g_count() as f64 - 1.0);
    let half = q * sd;
    Ok(ConfidenceInterval {
        lower: est - half,
        upper: est + half,
        level: 1.0 - alpha,
        method: CiMethod::BootstrapSe,
        iterations: None,
        p_at_bounds: None,
    })
}

/// 1-based order-statistic positions `(low, high)` for the percentile-t
/// quantiles: `low = round(α/2 (B+1))` clamped to `[1, B]`, `high = B + 1 - low`.
pub fn percentile_positions(b: usize, alpha: f64) -> (usize, usize) {
    let low = ((alpha / 2.0 * (b as f64 + 1.0)).round() as usize).clamp(1, b);
    (low, (b + 1 - low).clamp(1, b))
}

/// `[β̂ - s c*_{1-α/2}, β̂ - s c*_{α/2}]` from the sorted replicate t statistics
/// of an unrestricted bootstrap, with `s` the standard error under `cov`.
pub fn ci_percentile_t(cov: &CovEstimate, res: &BootstrapResult, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let (est, _) = single_replicates(res)?;
    let a = res.restriction.row(0);
    let s = quad_form(&cov.matrix, &a).max(0.0).sqrt();
    let mut sorted = res.replicates.clone();
    if sorted.is_empty() {
        return Err(Error::InvalidArgument("no bootstrap replicates".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = percentile_positions(sorted.len(), alpha);
    Ok(ConfidenceInterval {
        lower: est - s * sorted[hi - 1],
        upper: est - s * sorted[lo - 1],
        level: 1.0 - alpha,
        method: CiMethod::PercentileT,
        iterations: None,
        p_at_bounds: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistic_positions() {
        assert_eq!(percentile_positions(99, 0.10), (5, 95));
        assert_eq!(percentile_positions(999, 0.05), (25, 975));
        assert_eq!(percentile_positions(9, 0.01), (1, 9));
    }
}
