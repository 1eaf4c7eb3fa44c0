//! `ri`: randomization inference over cluster-level treatment assignments.

use clusterinf::randomization::{ri_test, RiOptions, StatisticKind, Tail, TreatmentSpec};
use clusterinf::ClusterPartition;

use super::{coefficient_index, describe_levels, levels, load_model, Level};
use crate::config::{field, RunConfig};
use crate::error::CliResult;
use crate::report::{num, Json, Report, Table};

/// Treated clusters from a 0/1 column that is constant within clusters.
fn cluster_treatment(treat: &[f64], p: &ClusterPartition, col: &str) -> CliResult<Vec<usize>> {
    let mut treated = Vec::new();
    for g in 0..p.g_count() {
        let m = p.members(g);
        let v = treat[m[0]];
        if !(v == 0.0 || v == 1.0) || m.iter().any(|&i| treat[i] != v) {
            return Err(field(
                "hypothesis.coefficient",
                format!("'{col}' must be 0/1 and constant within each cluster (cluster {})", p.label(g)),
            ));
        }
        if v == 1.0 {
            treated.push(g);
        }
    }
    Ok(treated)
}

/// Treated clusters with their first treated period from a staggered 0/1 column.
fn staggered_treatment(treat: &[f64], period: &[usize], p: &ClusterPartition, col: &str) -> CliResult<Vec<(usize, usize)>> {
    let mut starts = Vec::new();
    for g in 0..p.g_count() {
        let m = p.members(g);
        let start = m.iter().filter(|&&i| treat[i] == 1.0).map(|&i| period[i]).min();
        for &i in m {
            let expect = start.is_some_and(|s| period[i] >= s);
            if treat[i] != expect as u8 as f64 {
                return Err(field(
                    "hypothesis.coefficient",
                    format!("'{col}' must switch from 0 to 1 once and stay on within each cluster (cluster {})", p.label(g)),
                ));
            }
        }
        if let Some(s) = start {
            if s == 0 {
                return Err(field("ri.period", format!("cluster {} is treated in the first period", p.label(g))));
            }
            starts.push((g, s));
        }
    }
    Ok(starts)
}

pub fn run(cfg: &RunConfig) -> CliResult<Report> {
    let model = load_model(cfg)?;
    let n = model.data.n_obs();
    let coef = cfg
        .hypothesis
        .coefficient
        .as_deref()
        .ok_or_else(|| field("hypothesis.coefficient", "randomization inference needs the treatment coefficient"))?;
    if cfg.hypothesis.value != 0.0 {
        return Err(field("hypothesis.value", "randomization inference tests the sharp null of no effect (value = 0)"));
    }
    let j = coefficient_index(&model.data, coef, "hypothesis.coefficient", &model.dropped)?;
    let lv = levels(cfg, &model.table, n)?;
    let Some(Level::One { name, p }) = lv.first() else {
        return Err(field("data.cluster", "randomization inference needs one clustering column"));
    };
    let kind = match cfg.ri.statistic.as_str() {
        "t" => StatisticKind::T,
        "beta" => StatisticKind::Beta,
        other => return Err(field("ri.statistic", format!("unknown statistic '{other}' (t, beta)"))),
    };
    let tail = match cfg.ri.tail.as_str() {
        "two-sided" => Tail::TwoSided,
        "upper" => Tail::Upper,
        other => return Err(field("ri.tail", format!("unknown tail '{other}' (two-sided, upper)"))),
    };
    let raw = model.table.numeric(coef).map_err(|e| field("hypothesis.coefficient", e))?;
    let spec = match &cfg.ri.period {
        None => TreatmentSpec::Cluster { treated: cluster_treatment(&raw, p, coef)? },
        Some(col) => {
            let values = model.table.numeric(col).map_err(|e| field("ri.period", e))?;
            let mut levels: Vec<f64> = values.clone();
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            let period: Vec<usize> = values.iter().map(|v| levels.partition_point(|l| l < v)).collect();
            let starts = staggered_treatment(&raw, &period, p, coef)?;
            TreatmentSpec::Staggered { starts, period, periods: levels.len(), redraw_starts: cfg.ri.redraw_starts }
        }
    };
    let reps = cfg.ri.reps.unwrap_or(cfg.reps()?);
    let opts = RiOptions { kind, tail, reps, seed: cfg.bootstrap.seed, studentization: cfg.studentization()? };
    let res = ri_test(&model.data, p, j, &spec, model.absorb.as_ref(), opts)?;
    let g1 = match &spec {
        TreatmentSpec::Cluster { treated } => treated.len(),
        TreatmentSpec::Staggered { starts, .. } => starts.len(),
    };

    let mut report = Report::new("ri");
    report.notices.extend(res.notices.iter().cloned());
    let stat = if kind == StatisticKind::T { "t" } else { "beta" };
    let mut table = Table::new(
        &format!("Randomization inference for {coef}"),
        &["level", "statistic", "tail", "G", "G1", "observed", "P1", "P2", "S", "possible", "skipped"],
    );
    table.push(vec![
        name.clone(),
        stat.into(),
        cfg.ri.tail.clone(),
        p.g_count().to_string(),
        g1.to_string(),
        num(res.observed),
        num(res.p1),
        num(res.p2),
        format!("{}{}", res.s, if res.enumerated { " (all)" } else { "" }),
        res.possible.clone(),
        res.skipped.to_string(),
    ]);
    let mut reps_table = Table::new("", &["replicate", "statistic"]);
    for (i, r) in res.replicates.iter().enumerate() {
        reps_table.push(vec![(i + 1).to_string(), num(*r)]);
    }
    report.arrays.push((format!("ri_replicates_{name}"), reps_table));
    describe_levels(&mut report, &[(name.clone(), p.as_ref())]);
    report.json = std::mem::replace(&mut report.json, Json::Null)
        .with("N", n)
        .with("coefficient", coef)
        .with(
            "result",
            Json::obj()
                .with("level", name.as_str())
                .with("statistic", stat)
                .with("tail", cfg.ri.tail.as_str())
                .with("studentization", opts.studentization.name())
                .with("G", p.g_count())
                .with("G1", g1)
                .with("observed", res.observed)
                .with("p1", res.p1)
                .with("p2", res.p2)
                .with("S", res.s)
                .with("possible", res.possible.as_str())
                .with("enumerated", res.enumerated)
                .with("skipped", res.skipped)
                .with("seed", cfg.bootstrap.seed),
        );
    report.tables.push(table);
    Ok(report)
}
