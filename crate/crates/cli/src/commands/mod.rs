pub mod diagnose;
pub mod fit;
pub mod generate;
pub mod leveltest;
pub mod ri;
pub mod simulate;

use std::sync::Arc;

use clusterinf::diagnostics::size_summary;
use clusterinf::io::{build_dataset, ModelColumns, Table};
use clusterinf::{within_transform, ClusterPartition, CrossedPartition, Dataset, Restriction};
use nalgebra::{DMatrix, DVector};

use crate::config::{field, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{size_json, size_line, Json, Report};

/// The loaded regression data, after absorbing fixed effects.
pub struct Model {
    pub table: Table,
    pub data: Arc<Dataset>,
    pub absorb: Option<ClusterPartition>,
    pub dropped: Vec<String>,
}

pub fn load_model(cfg: &RunConfig) -> CliResult<Model> {
    let (path, outcome) = cfg.require_data()?;
    let table = Table::from_path(path).map_err(|e| field("data.path", e))?;
    if cfg.data.regressors.is_empty() && !cfg.data.intercept && cfg.data.dummies.is_empty() {
        return Err(field("data.regressors", "no regressors given"));
    }
    let cols = ModelColumns {
        outcome: outcome.to_string(),
        regressors: cfg.data.regressors.clone(),
        dummies: cfg.data.dummies.clone(),
        intercept: cfg.data.intercept,
    };
    let data = build_dataset(&table, &cols).map_err(|e| field("data", e))?;
    let (data, absorb, dropped) = match &cfg.data.absorb {
        Some(col) => {
            let fe = table.partition(col).map_err(|e| field("data.absorb", e))?;
            let abs = within_transform(&data, &fe)?;
            (abs.data, Some(fe), abs.dropped)
        }
        None => (data, None, Vec::new()),
    };
    Ok(Model { table, data: Arc::new(data), absorb, dropped })
}

/// One clustering level: a single dimension or a two-way pair.
pub enum Level {
    One { name: String, p: Arc<ClusterPartition> },
    Two { name: String, a: Arc<ClusterPartition>, b: Arc<ClusterPartition>, ab: Arc<ClusterPartition> },
}

impl Level {
    pub fn name(&self) -> &str {
        match self {
            Level::One { name, .. } | Level::Two { name, .. } => name,
        }
    }

    pub fn partitions(&self) -> Vec<(String, &ClusterPartition)> {
        match self {
            Level::One { name, p } => vec![(name.clone(), p)],
            Level::Two { name, a, b, .. } => {
                let (na, nb) = name.split_once(',').unwrap_or((name, name));
                vec![(na.to_string(), a), (nb.to_string(), b)]
            }
        }
    }
}

pub fn partition_for(table: &Table, col: &str, n: usize) -> CliResult<ClusterPartition> {
    if col == "observation" {
        return Ok(ClusterPartition::singletons(n));
    }
    table.partition(col).map_err(|e| field("data.cluster", e))
}

pub fn levels(cfg: &RunConfig, table: &Table, n: usize) -> CliResult<Vec<Level>> {
    cfg.data
        .cluster
        .iter()
        .map(|spec| {
            let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
            match parts.as_slice() {
                [one] => Ok(Level::One { name: one.to_string(), p: Arc::new(partition_for(table, one, n)?) }),
                [a, b] => {
                    let cross = CrossedPartition::new(partition_for(table, a, n)?, partition_for(table, b, n)?)?;
                    Ok(Level::Two {
                        name: format!("{a},{b}"),
                        a: Arc::new(cross.dim_a),
                        b: Arc::new(cross.dim_b),
                        ab: Arc::new(cross.intersection),
                    })
                }
                _ => Err(field("data.cluster", format!("'{spec}' must name one column or two comma-separated columns"))),
            }
        })
        .collect()
}

/// Adds the cluster count and size summary of every clustering to a report.
pub fn describe_levels(report: &mut Report, levels: &[(String, &ClusterPartition)]) {
    let mut arr = Vec::new();
    for (name, p) in levels {
        let s = size_summary(p);
        report.preamble.push(size_line(name, &s));
        arr.push(size_json(name, &s));
        if p.g_count() < 2 {
            report.notices.push(format!("clustering {name} has a single cluster"));
        }
    }
    let json = std::mem::replace(&mut report.json, Json::Null);
    report.json = json.with("clusterings", Json::Arr(arr));
}

pub fn coefficient_index(data: &Dataset, name: &str, key: &str, dropped: &[String]) -> CliResult<usize> {
    if dropped.iter().any(|d| d == name) {
        return Err(field(key, format!("'{name}' is absorbed by the fixed effects")));
    }
    data.column_index(name).map_err(|_| field(key, format!("'{name}' is not a regressor")))
}

/// The t-test hypothesis `(index, value)` and the joint Wald restriction.
pub struct Hypotheses {
    pub t: Option<(usize, f64)>,
    pub wald: Option<Restriction>,
}

pub fn hypotheses(cfg: &RunConfig, model: &Model) -> CliResult<Hypotheses> {
    let data = &model.data;
    let t = match &cfg.hypothesis.coefficient {
        Some(c) => Some((coefficient_index(data, c, "hypothesis.coefficient", &model.dropped)?, cfg.hypothesis.value)),
        None => None,
    };
    let rows = &cfg.hypothesis.restrictions;
    let wald = if rows.is_empty() {
        None
    } else {
        let k = data.n_regressors();
        let mut r = DMatrix::zeros(rows.len(), k);
        let mut target = DVector::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.coefficients.is_empty() {
                return Err(field(&format!("hypothesis.restrictions[{i}]"), "no coefficients"));
            }
            for (name, w) in &row.coefficients {
                let j = coefficient_index(data, name, &format!("hypothesis.restrictions[{i}]"), &model.dropped)?;
                r[(i, j)] = *w;
            }
            target[i] = row.value;
        }
        Some(Restriction::new(r, target).map_err(|e| field("hypothesis.restrictions", e))?)
    };
    Ok(Hypotheses { t, wald })
}

pub fn require_clusters(level: &str, p: &ClusterPartition, method: &str) -> CliResult<()> {
    if p.g_count() < 2 {
        return Err(CliError::Validation(format!(
            "method {method} needs at least 2 clusters but clustering by {level} gives G = {}",
            p.g_count()
        )));
    }
    Ok(())
}
