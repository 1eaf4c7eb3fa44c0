//! `diagnose`: cluster sizes, leverage, partial leverage, deleted-cluster
//! estimates and the effective number of clusters.

use clusterinf::diagnostics::diagnose;
use clusterinf::fit_ols;

use super::{coefficient_index, describe_levels, levels, load_model, require_clusters, Level};
use crate::config::{field, RunConfig};
use crate::error::CliResult;
use crate::report::{num, size_json, Json, Report, Table};

pub fn run(cfg: &RunConfig) -> CliResult<Report> {
    let model = load_model(cfg)?;
    let n = model.data.n_obs();
    let lv = levels(cfg, &model.table, n)?;
    if lv.is_empty() {
        return Err(field("data.cluster", "diagnose needs a clustering column"));
    }
    let names: Vec<String> = if !cfg.diagnose.coefficients.is_empty() {
        cfg.diagnose.coefficients.clone()
    } else if let Some(c) = &cfg.hypothesis.coefficient {
        vec![c.clone()]
    } else {
        model.data.names().to_vec()
    };
    let coefs = names
        .iter()
        .map(|c| coefficient_index(&model.data, c, "diagnose.coefficients", &model.dropped))
        .collect::<CliResult<Vec<_>>>()?;

    let mut report = Report::new("diagnose");
    let mut summary = Table::new("Effective clusters", &["level", "coefficient", "G", "V_s", "G*(0)"]);
    let mut levels_json = Vec::new();
    let mut parts = Vec::new();
    for level in &lv {
        let Level::One { name, p } = level else {
            return Err(field("data.cluster", format!("diagnose works one clustering at a time, not '{}'", level.name())));
        };
        require_clusters(name, p, "diagnose")?;
        let fit = fit_ols(model.data.clone(), p.clone())?;
        let d = diagnose(&fit, &coefs)?;
        let mut header = vec!["cluster".to_string(), "size".into(), "leverage".into()];
        for c in &d.coefficients {
            header.push(format!("partial[{}]", c.name));
            header.push(format!("deleted[{}]", c.name));
        }
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut per_cluster = Table::new(&format!("Clusters by {name}"), &header_refs);
        let mut cluster_json = Vec::new();
        for g in 0..d.sizes.len() {
            let mut row = vec![d.labels[g].clone(), d.sizes[g].to_string(), num(d.leverage[g])];
            let mut partial = Json::obj();
            let mut deleted = Json::obj();
            for c in &d.coefficients {
                row.push(num(c.partial_leverage[g]));
                row.push(num(c.deleted[g]));
                partial = partial.with(&c.name, c.partial_leverage[g]);
                deleted = deleted.with(&c.name, c.deleted[g]);
            }
            per_cluster.push(row);
            cluster_json.push(
                Json::obj()
                    .with("label", d.labels[g].as_str())
                    .with("size", d.sizes[g])
                    .with("leverage", d.leverage[g])
                    .with("partial_leverage", partial)
                    .with("deleted_estimate", deleted),
            );
        }
        let mut coef_json = Vec::new();
        for c in &d.coefficients {
            summary.push(vec![name.clone(), c.name.clone(), d.summary.g.to_string(), num(c.effective.v_s), num(c.effective.g_star0)]);
            coef_json.push(
                Json::obj()
                    .with("name", c.name.as_str())
                    .with("estimate", fit.beta()[c.index])
                    .with("V_s", c.effective.v_s)
                    .with("G_star0", c.effective.g_star0),
            );
        }
        let max_lev = d.leverage.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        levels_json.push(
            size_json(name, &d.summary)
                .with("k", fit.k())
                .with("max_leverage", max_lev)
                .with("coefficients", Json::Arr(coef_json))
                .with("clusters", Json::Arr(cluster_json)),
        );
        report.arrays.push((format!("clusters_{name}"), per_cluster.clone()));
        report.tables.push(per_cluster);
        parts.push((name.clone(), p.clone()));
    }
    report.tables.insert(0, summary);
    let refs: Vec<(String, &clusterinf::ClusterPartition)> = parts.iter().map(|(n, p)| (n.clone(), p.as_ref())).collect();
    describe_levels(&mut report, &refs);
    report.json = std::mem::replace(&mut report.json, Json::Null)
        .with("N", n)
        .with("levels", Json::Arr(levels_json));
    Ok(report)
}
