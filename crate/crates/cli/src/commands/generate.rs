//! `generate`: a synthetic state-by-year panel of individuals, grouped into
//! regions, for trying out the other commands.

use clusterinf::rng::{self, Domain};
use clusterinf::simulation::ar1_paths;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{field, RunConfig};
use crate::error::CliResult;
use crate::report::{num, Table};

const FIRST_YEAR: usize = 2001;

pub fn panel(cfg: &RunConfig) -> CliResult<Table> {
    let g = &cfg.generate;
    if g.states < 2 || g.years < 2 || g.regions == 0 || g.regions > g.states || g.individuals == 0 {
        return Err(field("generate", "need at least 2 states and 2 years, 1..=states regions and 1 or more individuals"));
    }
    let seed = cfg.bootstrap.seed;
    let mut r = rng::stream(seed, Domain::Simulation, 0);
    let normal = |r: &mut rand_chacha::ChaCha8Rng| -> f64 { r.sample(StandardNormal) };

    let region: Vec<usize> = (0..g.states).map(|s| s * g.regions / g.states).collect();
    let state_effect: Vec<f64> = (0..g.states).map(|_| normal(&mut r)).collect();
    let year_effect: Vec<f64> = (0..g.years).map(|_| 0.3 * normal(&mut r)).collect();
    let region_year: Vec<Vec<f64>> = (0..g.regions).map(|_| (0..g.years).map(|_| 0.3 * normal(&mut r)).collect()).collect();
    let persistent = ar1_paths(g.states, g.years, 0.7, &mut r);
    let per_cell: Vec<usize> = (0..g.states)
        .map(|_| ((g.individuals as f64) * (0.8 * normal(&mut r)).exp()).round().max(2.0) as usize)
        .collect();
    let treated = g.states * 2 / 5;
    let mut start = vec![usize::MAX; g.states];
    for s in rand::seq::index::sample(&mut r, g.states, treated).into_iter() {
        start[s] = r.random_range(1..g.years);
    }

    let mut t = Table::new("", &["state", "region", "year", "y", "treat", "x1", "x2"]);
    for s in 0..g.states {
        for y in 0..g.years {
            let treat = (y >= start[s]) as u8;
            for _ in 0..per_cell[s] {
                let x1 = normal(&mut r) + 0.5 * state_effect[s];
                let x2 = (r.random::<f64>() < 0.4) as u8 as f64;
                let outcome = 1.0 + 0.5 * x1 - 0.3 * x2
                    + state_effect[s]
                    + year_effect[y]
                    + region_year[region[s]][y]
                    + 0.5 * persistent[s][y]
                    + normal(&mut r);
                t.push(vec![
                    format!("S{:02}", s + 1),
                    format!("R{}", region[s] + 1),
                    (FIRST_YEAR + y).to_string(),
                    num(outcome),
                    treat.to_string(),
                    num(x1),
                    num(x2),
                ]);
            }
        }
    }
    Ok(t)
}
