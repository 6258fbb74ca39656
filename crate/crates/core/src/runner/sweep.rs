//! Cartesian-product sweeps over λ, ε, shots, client count and data
//! fraction.

use std::fs;

use rayon::prelude::*;

use super::config::{Epsilon, ExperimentConfig};
use super::run::{run, RunSummary};
use crate::error::{Error, Result};

pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

/// One point of the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Directory name, `axis=value` pairs joined by `_`.
    pub name: String,
    pub settings: Vec<(&'static str, String)>,
    pub config: ExperimentConfig,
}

/// Expands the sweep axes into one config per grid point, earlier axes
/// varying slowest. Each point writes to `output_dir/<name>`. Without a
/// `[sweep]` table the base config is the single point `base`.
pub fn expand(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let mut base = cfg.clone();
    base.sweep = None;
    let mut points = vec![SweepPoint {
        name: String::new(),
        settings: Vec::new(),
        config: base,
    }];
    let Some(axes) = &cfg.sweep else {
        points[0].name = "base".into();
        points[0].config.output_dir = cfg.output_dir.join("base");
        return Ok(points);
    };
    axes.validate()?;

    type Setter = Box<dyn Fn(&mut ExperimentConfig)>;
    let mut grid: Vec<(&'static str, Vec<(String, Setter)>)> = Vec::new();
    if let Some(v) = &axes.lambda {
        grid.push(("lambda", v.iter().map(|&x| (x.to_string(), Box::new(move |c: &mut ExperimentConfig| c.training.lambda = x) as Setter)).collect()));
    }
    if let Some(v) = &axes.epsilon {
        grid.push(("epsilon", v.iter().map(|&x| (x.to_string(), Box::new(move |c: &mut ExperimentConfig| c.quantum.epsilon = Epsilon::Shared(x)) as Setter)).collect()));
    }
    if let Some(v) = &axes.shots {
        grid.push(("shots", v.iter().map(|&x| (x.to_string(), Box::new(move |c: &mut ExperimentConfig| c.quantum.shots = x) as Setter)).collect()));
    }
    if let Some(v) = &axes.n_clients {
        grid.push(("n_clients", v.iter().map(|&x| (x.to_string(), Box::new(move |c: &mut ExperimentConfig| {
            c.federation.n_clients = x;
            c.federation.client_weights = None;
            if let Epsilon::PerClient(list) = &c.quantum.epsilon {
                let mean = list.iter().sum::<f64>() / list.len().max(1) as f64;
                c.quantum.epsilon = Epsilon::Shared(mean);
            }
        }) as Setter)).collect()));
    }
    if let Some(v) = &axes.data_fraction {
        grid.push(("data_fraction", v.iter().map(|&x| (x.to_string(), Box::new(move |c: &mut ExperimentConfig| c.dataset.data_fraction = x) as Setter)).collect()));
    }

    for (axis, values) in &grid {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for (label, set) in values {
                let mut q = p.clone();
                set(&mut q.config);
                q.settings.push((axis, label.clone()));
                next.push(q);
            }
        }
        points = next;
    }
    for p in &mut points {
        p.name = p
            .settings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("_");
        p.config.output_dir = cfg.output_dir.join(&p.name);
        p.config.validate().map_err(|e| match e {
            Error::Config { key, msg } => Error::config(key, format!("at sweep point {}: {msg}", p.name)),
            other => other,
        })?;
    }
    Ok(points)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Runs every point (concurrently; each owns its directory) and writes
/// `sweep_summary.csv` in grid order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<(SweepPoint, RunSummary)>> {
    let points = expand(cfg)?;
    let summaries = points
        .par_iter()
        .map(|p| run(&p.config).map(|r| r.summary))
        .collect::<Result<Vec<_>>>()?;

    let axes: Vec<&str> = points[0].settings.iter().map(|(k, _)| *k).collect();
    let mut table = String::from("point");
    for a in &axes {
        table.push(',');
        table.push_str(a);
    }
    table.push_str(",val_loss,fe_pct,me_pct,auroc,aupr,rounds_to_target,total_payload_bits\n");
    for (p, s) in points.iter().zip(&summaries) {
        table.push_str(&p.name);
        for (_, v) in &p.settings {
            table.push(',');
            table.push_str(v);
        }
        let m = &s.final_metrics;
        table.push_str(&format!(
            ",{},{},{},{},{},{},{}\n",
            cell(m.val_loss),
            cell(m.fe_pct),
            cell(m.me_pct),
            cell(m.auroc),
            cell(m.aupr),
            s.rounds_to_target.map_or_else(String::new, |r| r.to_string()),
            s.total_payload_bits
        ));
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let path = cfg.output_dir.join(SWEEP_SUMMARY_FILE);
    fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    Ok(points.into_iter().zip(summaries).collect())
}
