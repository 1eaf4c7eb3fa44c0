//! `fit` / `test`: estimates, cluster-robust tests and bootstrap P values
//! for every clustering level and method.

use std::sync::Arc;

use clusterinf::bootstrap::{ci_inversion, pairs_cluster_test, wild_test, BootstrapResult};
use clusterinf::crve::{TestReference, TwoWayOptions};
use clusterinf::{
    cv1, cv2, cv3, fit_ols, hc1, t_test, twoway_cv1, wald_test, CovEstimate, RegressionFit, Restriction, TestResult,
    WildOptions, WildVariant,
};
use nalgebra::DVector;

use super::{describe_levels, hypotheses, levels, load_model, require_clusters, Level};
use crate::config::{field, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{cell, num, Json, Report, Table};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodName {
    Hc1,
    Cv1,
    Cv2,
    Cv3,
    Wild(WildVariant),
    Pairs,
}

impl MethodName {
    pub fn parse(s: &str) -> CliResult<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "hc1" => Self::Hc1,
            "cv1" => Self::Cv1,
            "cv2" => Self::Cv2,
            "cv3" => Self::Cv3,
            "wcr" => Self::Wild(WildVariant::Wcr),
            "wcu" => Self::Wild(WildVariant::Wcu),
            "wr" => Self::Wild(WildVariant::Wr),
            "wu" => Self::Wild(WildVariant::Wu),
            "pairs" => Self::Pairs,
            other => return Err(field("methods", format!("unknown method '{other}' (hc1, cv1, cv2, cv3, wcr, wcu, wr, wu, pairs)"))),
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Hc1 => "HC1",
            Self::Cv1 => "CV1",
            Self::Cv2 => "CV2",
            Self::Cv3 => "CV3",
            Self::Wild(v) => v.name(),
            Self::Pairs => "pairs",
        }
    }

    pub fn is_clustered(self) -> bool {
        self != Self::Hc1
    }
}

pub fn parse_methods(names: &[String]) -> CliResult<Vec<MethodName>> {
    if names.is_empty() {
        return Err(field("methods", "at least one method is required"));
    }
    names.iter().map(|n| MethodName::parse(n)).collect()
}

fn reference_label(r: TestReference) -> String {
    match r {
        TestReference::Normal => "N(0,1)".into(),
        TestReference::StudentT(d) => format!("t({})", num(d)),
        TestReference::F(a, b) => format!("F({}, {})", num(a), num(b)),
        TestReference::ChiSquare(d) => format!("chi2({})", num(d)),
    }
}

/// One row of the results table.
struct Row {
    level: String,
    method: &'static str,
    test: &'static str,
    estimate: Option<f64>,
    std_error: Option<f64>,
    statistic: f64,
    reference: String,
    p_value: f64,
    boot: Option<BootstrapResult>,
}

impl Row {
    fn analytic(level: &str, method: MethodName, r: TestResult) -> Self {
        Row {
            level: level.into(),
            method: method.label(),
            test: if r.estimate.is_some() { "t" } else { "wald" },
            estimate: r.estimate,
            std_error: r.std_error,
            statistic: r.statistic,
            reference: reference_label(r.reference),
            p_value: r.p_value,
            boot: None,
        }
    }

    fn bootstrap(level: &str, method: MethodName, single: bool, res: BootstrapResult) -> Self {
        Row {
            level: level.into(),
            method: method.label(),
            test: if single { "t" } else { "wald" },
            estimate: res.estimate,
            std_error: None,
            statistic: res.tau,
            reference: "bootstrap".into(),
            p_value: res.p_symmetric,
            boot: Some(res),
        }
    }

    fn json(&self) -> Json {
        let boot = self.boot.as_ref().map(|b| {
            Json::obj()
                .with("reps", b.reps)
                .with("enumerated", b.enumerated)
                .with("aux", b.aux.map(|a| a.name()))
                .with("studentization", b.studentization.name())
                .with("p_equal_tail", b.p_equal_tail)
                .with("p_upper", b.p_upper)
                .with("discarded", b.discarded)
                .with("seed", b.seed)
        });
        Json::obj()
            .with("level", self.level.as_str())
            .with("method", self.method)
            .with("test", self.test)
            .with("estimate", self.estimate)
            .with("std_error", self.std_error)
            .with("statistic", self.statistic)
            .with("reference", self.reference.as_str())
            .with("p_value", self.p_value)
            .with("bootstrap", boot.unwrap_or(Json::Null))
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.level.clone(),
            self.method.to_string(),
            self.test.to_string(),
            cell(self.estimate),
            cell(self.std_error),
            num(self.statistic),
            self.reference.clone(),
            num(self.p_value),
            self.boot.as_ref().map_or("-".into(), |b| {
                format!("{}{}", b.reps, if b.enumerated { " (all)" } else { "" })
            }),
        ]
    }
}

fn analytic_rows(
    rows: &mut Vec<Row>,
    level: &str,
    method: MethodName,
    fit: &RegressionFit,
    cov: &CovEstimate,
    t: Option<(usize, f64)>,
    wald: Option<&Restriction>,
) -> CliResult<()> {
    if let Some((j, v)) = t {
        let mut a = DVector::zeros(fit.k());
        a[j] = 1.0;
        rows.push(Row::analytic(level, method, t_test(fit, cov, &a, v)?));
    }
    if let Some(rest) = wald {
        rows.push(Row::analytic(level, method, wald_test(fit, cov, rest)?));
    }
    Ok(())
}

pub fn run(cfg: &RunConfig) -> CliResult<Report> {
    let methods = parse_methods(&cfg.methods)?;
    let model = load_model(cfg)?;
    let hyp = hypotheses(cfg, &model)?;
    if hyp.t.is_none() && hyp.wald.is_none() {
        return Err(field("hypothesis", "give a coefficient for a t test or restrictions for a Wald test"));
    }
    let n = model.data.n_obs();
    let mut lv = levels(cfg, &model.table, n)?;
    if lv.is_empty() {
        if let Some(m) = methods.iter().find(|m| m.is_clustered()) {
            return Err(field("data.cluster", format!("method {} needs a clustering column", m.label())));
        }
        lv.push(Level::One { name: "observation".into(), p: Arc::new(clusterinf::ClusterPartition::singletons(n)) });
    }
    let opts = WildOptions {
        aux: cfg.aux()?,
        reps: cfg.reps()?,
        seed: cfg.bootstrap.seed,
        studentization: cfg.studentization()?,
    };
    let confidence = cfg.bootstrap.confidence;
    if let Some(c) = confidence {
        if !(c > 0.0 && c < 1.0) {
            return Err(field("bootstrap.confidence", "must lie strictly between 0 and 1"));
        }
    }

    let mut report = Report::new("fit");
    let mut rows: Vec<Row> = Vec::new();
    let mut intervals = Table::new("Confidence intervals", &["level", "method", "coverage", "lower", "upper", "evaluations"]);
    let mut interval_json = Vec::new();
    let mut all_parts = Vec::new();
    let mut first_fit: Option<RegressionFit> = None;

    for level in &lv {
        let name = level.name().to_string();
        match level {
            Level::One { p, .. } => {
                for m in &methods {
                    if m.is_clustered() {
                        require_clusters(&name, p, m.label())?;
                    }
                }
                let fit = fit_ols(model.data.clone(), p.clone())?.with_absorbed_in_dof(cfg.data.absorbed_in_dof);
                for &m in &methods {
                    match m {
                        MethodName::Hc1 | MethodName::Cv1 | MethodName::Cv2 | MethodName::Cv3 => {
                            let cov = match m {
                                MethodName::Hc1 => hc1(&fit)?,
                                MethodName::Cv1 => cv1(&fit)?,
                                MethodName::Cv2 => cv2(&fit)?,
                                _ => cv3(&fit)?,
                            };
                            if !cov.psd {
                                report.notices.push(format!("{} at {name} is not positive semidefinite", m.label()));
                            }
                            analytic_rows(&mut rows, &name, m, &fit, &cov, hyp.t, hyp.wald.as_ref())?;
                        }
                        MethodName::Wild(v) => {
                            let mut tests: Vec<(bool, Restriction)> = Vec::new();
                            if let Some((j, val)) = hyp.t {
                                tests.push((true, Restriction::single(fit.k(), j, val)?));
                            }
                            if let Some(w) = &hyp.wald {
                                tests.push((false, w.clone()));
                            }
                            for (single, rest) in tests {
                                let f = fit.clone().with_restriction(&rest)?;
                                let res = wild_test(&f, v, opts)?;
                                report.notices.extend(res.notices.iter().cloned());
                                rows.push(Row::bootstrap(&name, m, single, res));
                            }
                        }
                        MethodName::Pairs => {
                            if let Some((j, val)) = hyp.t {
                                let res = pairs_cluster_test(&fit, &Restriction::single(fit.k(), j, val)?, opts.reps, opts.seed)?;
                                report.notices.extend(res.notices.iter().cloned());
                                rows.push(Row::bootstrap(&name, m, true, res));
                            }
                            if let Some(w) = &hyp.wald {
                                let res = pairs_cluster_test(&fit, w, opts.reps, opts.seed)?;
                                report.notices.extend(res.notices.iter().cloned());
                                rows.push(Row::bootstrap(&name, m, false, res));
                            }
                        }
                    }
                }
                if let (Some(c), Some((j, _))) = (confidence, hyp.t) {
                    if methods.contains(&MethodName::Wild(WildVariant::Wcr)) {
                        let ci = ci_inversion(&fit, j, opts, 1.0 - c)?;
                        intervals.push(vec![
                            name.clone(),
                            "WCR inversion".into(),
                            num(c),
                            num(ci.lower),
                            num(ci.upper),
                            ci.iterations.map_or("-".into(), |i| i.to_string()),
                        ]);
                        interval_json.push(
                            Json::obj()
                                .with("level", name.as_str())
                                .with("method", "WCR inversion")
                                .with("coverage", c)
                                .with("lower", ci.lower)
                                .with("upper", ci.upper)
                                .with("evaluations", ci.iterations),
                        );
                    }
                }
                first_fit.get_or_insert(fit);
            }
            Level::Two { a, b, ab, .. } => {
                for m in &methods {
                    match m {
                        MethodName::Hc1 | MethodName::Cv1 => {}
                        other => {
                            return Err(field(
                                "methods",
                                format!("method {} is not available with two-way clustering ({name}); use hc1 or cv1", other.label()),
                            ))
                        }
                    }
                }
                let fa = fit_ols(model.data.clone(), a.clone())?.with_absorbed_in_dof(cfg.data.absorbed_in_dof);
                let fb = fa.recluster(b.clone())?;
                let fab = fa.recluster(ab.clone())?;
                require_clusters(&name, a, "CV1")?;
                require_clusters(&name, b, "CV1")?;
                for &m in &methods {
                    let cov = if m == MethodName::Hc1 { hc1(&fa)? } else { twoway_cv1(&fa, &fb, &fab, TwoWayOptions::default())? };
                    if !cov.psd {
                        report.notices.push(format!("two-way CV1 at {name} is not positive semidefinite"));
                    }
                    analytic_rows(&mut rows, &name, m, &fa, &cov, hyp.t, hyp.wald.as_ref())?;
                }
                first_fit.get_or_insert(fa);
            }
        }
        all_parts.extend(level.partitions().into_iter().map(|(n, p)| (n, p.clone())));
    }

    let fit = first_fit.ok_or_else(|| CliError::Validation("no clustering level".into()))?;
    let mut coef_table = Table::new("Estimates", &["coefficient", "estimate"]);
    let mut coef_json = Vec::new();
    for (name, b) in model.data.names().iter().zip(fit.beta().iter()) {
        coef_table.push(vec![name.clone(), num(*b)]);
        coef_json.push(Json::obj().with("name", name.as_str()).with("estimate", *b));
    }
    let mut results = Table::new("Tests", &["level", "method", "test", "estimate", "s.e.", "statistic", "reference", "P", "reps"]);
    for r in &rows {
        results.push(r.cells());
        if let Some(b) = &r.boot {
            let mut t = Table::new("", &["replicate", "statistic", "coefficient"]);
            for (i, s) in b.replicates.iter().enumerate() {
                let c = b.coef_replicates.as_ref().map(|c| c[i]);
                t.push(vec![(i + 1).to_string(), num(*s), cell(c)]);
            }
            report.arrays.push((format!("replicates_{}_{}_{}", r.level.replace(',', "+"), r.method, r.test), t));
        }
    }

    let refs: Vec<(String, &clusterinf::ClusterPartition)> = all_parts.iter().map(|(n, p)| (n.clone(), p)).collect();
    let clustered = methods.iter().any(|m| m.is_clustered());
    report.preamble.push(format!("N = {n}, k = {}", model.data.n_regressors()));
    if clustered {
        describe_levels(&mut report, &refs);
    } else {
        report.json = std::mem::replace(&mut report.json, Json::Null).with("clusterings", Json::Arr(Vec::new()));
    }
    if !model.dropped.is_empty() {
        report.notices.push(format!("absorbed by the fixed effects: {}", model.dropped.join(", ")));
    }
    report.json = std::mem::replace(&mut report.json, Json::Null)
        .with("N", n)
        .with("coefficients", Json::Arr(coef_json))
        .with("absorb", cfg.data.absorb.clone())
        .with(
            "hypothesis",
            Json::obj()
                .with("coefficient", cfg.hypothesis.coefficient.clone())
                .with("value", cfg.hypothesis.value)
                .with("restrictions", hyp.wald.as_ref().map(|w| w.rows())),
        )
        .with("results", Json::Arr(rows.iter().map(Row::json).collect()))
        .with("intervals", Json::Arr(interval_json));
    report.tables.push(results);
    report.tables.push(coef_table);
    if !intervals.rows.is_empty() {
        report.tables.push(intervals);
    }
    Ok(report)
}
