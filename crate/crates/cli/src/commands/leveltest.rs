//! `leveltest`: score-variance tests between nested clustering levels.

use std::sync::Arc;

use clusterinf::fit_ols;
use clusterinf::level_tests::{pairwise_level_tests, LevelTestOptions};
use nalgebra::DVector;

use super::{coefficient_index, describe_levels, load_model, partition_for};
use crate::config::{field, RunConfig};
use crate::error::CliResult;
use crate::report::{num, Json, Report, Table};

pub fn run(cfg: &RunConfig) -> CliResult<Report> {
    let model = load_model(cfg)?;
    let n = model.data.n_obs();
    if cfg.leveltest.levels.len() < 2 {
        return Err(field("leveltest.levels", "list at least two clustering columns, fine to coarse"));
    }
    let coef = cfg
        .hypothesis
        .coefficient
        .as_deref()
        .ok_or_else(|| field("hypothesis.coefficient", "the level test needs a coefficient"))?;
    let j = coefficient_index(&model.data, coef, "hypothesis.coefficient", &model.dropped)?;
    let parts = cfg
        .leveltest
        .levels
        .iter()
        .map(|c| Ok((c.clone(), partition_for(&model.table, c, n).map_err(|e| field("leveltest.levels", e))?)))
        .collect::<CliResult<Vec<_>>>()?;
    let reps = cfg.leveltest.reps.unwrap_or(cfg.reps()?);
    if reps == 0 {
        return Err(field("leveltest.reps", "must be at least 1"));
    }
    let fit = fit_ols(model.data.clone(), Arc::new(parts[0].1.clone()))?;
    let mut a = DVector::zeros(fit.k());
    a[j] = 1.0;
    let opts = LevelTestOptions { reps, seed: cfg.bootstrap.seed, variance_scale: 1.0 };
    let results = pairwise_level_tests(&fit, &parts, &a, opts)?;
    if results.is_empty() {
        return Err(field("leveltest.levels", "no pair of the listed levels is nested"));
    }

    let mut report = Report::new("leveltest");
    let mut table = Table::new(
        &format!("Score-variance tests for {coef}"),
        &["fine", "coarse", "G fine", "G coarse", "theta", "tau", "P asymptotic", "P bootstrap", "reps"],
    );
    let mut rows = Vec::new();
    for (fine, coarse, r) in &results {
        table.push(vec![
            fine.clone(),
            coarse.clone(),
            r.fine_g.to_string(),
            r.coarse_g.to_string(),
            num(r.theta_hat),
            num(r.tau),
            num(r.p_asymptotic),
            num(r.p_bootstrap),
            format!("{}{}", r.reps, if r.enumerated { " (all)" } else { "" }),
        ]);
        if r.degenerate {
            report.notices.push(format!("{fine} vs {coarse}: the variance estimate is zero, so tau is set to 0"));
        }
        rows.push(
            Json::obj()
                .with("fine", fine.as_str())
                .with("coarse", coarse.as_str())
                .with("G_fine", r.fine_g)
                .with("G_coarse", r.coarse_g)
                .with("theta", r.theta_hat)
                .with("tau", r.tau)
                .with("p_asymptotic", r.p_asymptotic)
                .with("p_bootstrap", r.p_bootstrap)
                .with("reps", r.reps)
                .with("enumerated", r.enumerated)
                .with("degenerate", r.degenerate),
        );
    }
    let refs: Vec<(String, &clusterinf::ClusterPartition)> = parts.iter().map(|(n, p)| (n.clone(), p)).collect();
    describe_levels(&mut report, &refs);
    report.json = std::mem::replace(&mut report.json, Json::Null)
        .with("N", n)
        .with("coefficient", coef)
        .with("seed", cfg.bootstrap.seed)
        .with("tests", Json::Arr(rows));
    report.tables.push(table);
    Ok(report)
}
