//! Reference distributions used for P values and critical values.
//!
//! Student-t and F tail probabilities go through the regularized incomplete
//! beta function directly, which keeps the small tails accurate instead of
//! forming `1 - cdf`.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_ur;

/// Two-sided tail probability `P(|T| >= |t|)` for `T ~ t(dof)`.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    debug_assert!(dof > 0.0);
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    let x = dof / (dof + t * t);
    beta_reg(0.5 * dof, 0.5, x).clamp(0.0, 1.0)
}

/// Student-t distribution function.
pub fn student_t_cdf(x: f64, dof: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    let half_tail = 0.5 * t_two_sided_p(x, dof);
    if x > 0.0 {
        1.0 - half_tail
    } else {
        half_tail
    }
}

fn student_t_pdf(x: f64, dof: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_c = ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * std::f64::consts::PI).ln();
    (ln_c - 0.5 * (dof + 1.0) * (1.0 + x * x / dof).ln()).exp()
}

/// Quantile of t(dof), polished with Newton steps on [`student_t_cdf`].
pub fn t_quantile(p: f64, dof: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    if p == 0.5 {
        return 0.0;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p < 0.5 {
        return -t_quantile(1.0 - p, dof);
    }
    let mut x = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(p))
        .unwrap_or_else(|_| normal_quantile(p));
    for _ in 0..4 {
        let f = student_t_cdf(x, dof) - p;
        let d = student_t_pdf(x, dof);
        if d <= 0.0 || !f.is_finite() {
            break;
        }
        let step = f / d;
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

pub fn normal_cdf(z: f64) -> f64 {
    normal_sf(-z)
}

/// Upper tail `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == 0.0 {
        return 0.5;
    }
    if z == f64::INFINITY {
        return 0.0;
    }
    if z < 0.0 {
        return 1.0 - normal_sf(-z);
    }
    0.5 * gamma_ur(0.5, 0.5 * z * z)
}

pub fn normal_two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    (2.0 * normal_sf(z.abs())).min(1.0)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Upper tail of F(d1, d2) at `x`.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    beta_reg(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * x)).clamp(0.0, 1.0)
}

/// Upper tail of chi-square(k) at `x`.
pub fn chi2_sf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(0.5 * k, 0.5 * x).clamp(0.0, 1.0)
}
