//! `simulate`: rejection frequencies under a configurable cluster DGP.

use clusterinf::diagnostics::size_summary;
use clusterinf::simulation::{labels_from_sizes, run_size_experiment, DgpSpec, Disturbance, Loadings, Method, RegressorDesign, SizePattern};
use clusterinf::ClusterPartition;

use crate::config::{field, RunConfig};
use crate::error::CliResult;
use crate::report::{num, size_json, size_line, Json, Report, Table};

pub fn dgp(cfg: &RunConfig) -> CliResult<DgpSpec> {
    let s = &cfg.simulate;
    let sizes = match s.sizes.as_str() {
        "equal" => SizePattern::Equal { size: s.size },
        "lognormal" => SizePattern::Lognormal { median: s.median, sigma: s.sigma },
        "one-dominant" => SizePattern::OneDominant { share: s.share, other_size: s.other_size },
        other => return Err(field("simulate.sizes", format!("unknown pattern '{other}' (equal, lognormal, one-dominant)"))),
    };
    let disturbance = match s.disturbance.as_str() {
        "iid" => Disturbance::Iid,
        "random-effects" => Disturbance::RandomEffects { lambda: s.lambda },
        "factor" if s.loading_sd > 0.0 => Disturbance::Factor { loadings: Loadings::Normal { mean: s.lambda, sd: s.loading_sd } },
        "factor" => Disturbance::Factor { loadings: Loadings::Constant(s.lambda) },
        other => return Err(field("simulate.disturbance", format!("unknown disturbance '{other}' (iid, random-effects, factor)"))),
    };
    let regressor = match s.regressor.as_str() {
        "cluster-invariant" => RegressorDesign::ClusterInvariant,
        "cluster-dummy" => RegressorDesign::ClusterDummy { share: s.regressor_share },
        "observation" => RegressorDesign::Observation,
        "mixed" => RegressorDesign::Mixed { delta: s.delta },
        other => {
            return Err(field(
                "simulate.regressor",
                format!("unknown design '{other}' (cluster-invariant, cluster-dummy, observation, mixed)"),
            ))
        }
    };
    if s.clusters < 2 {
        return Err(field("simulate.clusters", "at least 2 clusters are needed"));
    }
    Ok(DgpSpec {
        g: s.clusters,
        sizes,
        disturbance,
        omega: s.omega,
        heavy_tails: s.heavy_tails,
        regressor,
        controls: s.controls,
        beta: s.beta,
    })
}

pub fn methods(cfg: &RunConfig) -> CliResult<Vec<Method>> {
    let aux = cfg.aux()?;
    if cfg.simulate.methods.is_empty() {
        return Err(field("simulate.methods", "at least one method is required"));
    }
    cfg.simulate
        .methods
        .iter()
        .map(|m| match m.as_str() {
            "hc1" => Ok(Method::Hc1Normal),
            "cv1" => Ok(Method::Cv1T),
            "cv3" => Ok(Method::Cv3T),
            "wcr" => Ok(Method::Wcr { reps: cfg.simulate.boot_reps.max(1), aux }),
            other => Err(field("simulate.methods", format!("unknown method '{other}' (hc1, cv1, cv3, wcr)"))),
        })
        .collect()
}

pub fn run(cfg: &RunConfig) -> CliResult<Report> {
    let spec = dgp(cfg)?;
    let methods = methods(cfg)?;
    let s = &cfg.simulate;
    if !(s.level > 0.0 && s.level < 1.0) {
        return Err(field("simulate.level", "must lie strictly between 0 and 1"));
    }
    if s.reps == 0 {
        return Err(field("simulate.reps", "must be at least 1"));
    }
    let rep = run_size_experiment(&spec, &methods, s.level, s.reps, cfg.bootstrap.seed)?;
    let partition = ClusterPartition::from_labels(&labels_from_sizes(&rep.sizes))?;
    let summary = size_summary(&partition);

    let mut report = Report::new("simulate");
    report.preamble.push(size_line("simulated clusters", &summary));
    report.preamble.push(format!(
        "{} replications at nominal level {}, disturbance {}, regressor {}, seed {}",
        rep.reps, num(rep.level), s.disturbance, s.regressor, rep.seed
    ));
    let mut table = Table::new("Rejection frequencies (%)", &["method", "rate", "MC s.e.", "rejections", "reps", "failures"]);
    let mut rows = Vec::new();
    for r in &rep.rows {
        table.push(vec![r.method.clone(), num(r.rate), num(r.mc_se), r.rejections.to_string(), r.reps.to_string(), r.failures.to_string()]);
        rows.push(
            Json::obj()
                .with("method", r.method.as_str())
                .with("rate", r.rate)
                .with("mc_se", r.mc_se)
                .with("rejections", r.rejections)
                .with("reps", r.reps)
                .with("failures", r.failures),
        );
        if r.failures > 0 {
            report.notices.push(format!("{}: {} replications produced no P value", r.method, r.failures));
        }
    }
    report.json = std::mem::replace(&mut report.json, Json::Null)
        .with("clusterings", Json::Arr(vec![size_json("simulated clusters", &summary)]))
        .with("N", summary.n)
        .with("reps", rep.reps)
        .with("level", rep.level)
        .with("seed", rep.seed)
        .with(
            "design",
            Json::obj()
                .with("sizes", s.sizes.as_str())
                .with("disturbance", s.disturbance.as_str())
                .with("regressor", s.regressor.as_str())
                .with("heavy_tails", s.heavy_tails)
                .with("lambda", s.lambda)
                .with("omega", s.omega)
                .with("beta", s.beta),
        )
        .with("rows", Json::Arr(rows));
    report.tables.push(table);
    Ok(report)
}
