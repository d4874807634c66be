//! bergmanlab: config-driven experiments over the Bergman-space operator
//! laboratory. `run` executes one experiment, `sweep` repeats it over a
//! declared variable and adds trend verdicts, `validate` checks a config.

pub mod config;
pub mod experiments;
pub mod report;

use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::config::{ExperimentConfig, RunConfig, SweepConfig, SCHEMA_VERSION};
use crate::report::{Meta, Payload, RunReport, Software, Table, Verdict};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("experiment '{context}': {source}")]
    Experiment {
        context: String,
        #[source]
        source: bergmanlab_core::Error,
    },

    #[error(transparent)]
    Core(#[from] bergmanlab_core::Error),
}

/// Golden reference values shipped with the repository.
pub mod golden {
    use bergmanlab_core::geometry::BallPoint;
    use serde::Deserialize;

    use crate::config::to_point;
    use crate::RunError;

    #[derive(Deserialize)]
    struct GramFloorFile {
        points: Vec<Vec<[f64; 2]>>,
        floor_frobenius: f64,
        grid_step: f64,
        grid_max: f64,
    }

    const GRAM_FLOOR_JSON: &str = include_str!("../golden/gram_m2_floor.json");

    fn parsed() -> GramFloorFile {
        serde_json::from_str(GRAM_FLOOR_JSON).expect("golden gram floor file is valid JSON")
    }

    /// Reference points of the two-point infeasibility case.
    pub fn gram_floor_points() -> Result<Vec<BallPoint>, RunError> {
        parsed().points.iter().map(|p| to_point(p)).collect()
    }

    /// Frobenius floor established once by exhaustive grid search.
    pub fn gram_floor_value() -> f64 {
        parsed().floor_frobenius
    }

    /// Grid used to establish the floor (step, max), for reproduction.
    pub fn gram_floor_grid() -> (f64, f64) {
        let g = parsed();
        (g.grid_step, g.grid_max)
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn assemble(config: &RunConfig, tables: Vec<Table>, verdicts: Vec<Verdict>, wall_ms: f64) -> RunReport {
    RunReport {
        payload: Payload {
            schema_version: SCHEMA_VERSION,
            software: Software::current(),
            experiment: config.experiment_name().to_string(),
            config: config.clone(),
            tables,
            verdicts,
        },
        meta: Meta {
            timestamp_unix_ms: now_ms(),
            wall_ms,
        },
    }
}

/// Executes the configured experiment once.
pub fn run(config: &RunConfig) -> Result<RunReport, RunError> {
    config.validate()?;
    let start = std::time::Instant::now();
    let (tables, verdicts) = experiments::dispatch(config)?;
    Ok(assemble(config, tables, verdicts, start.elapsed().as_secs_f64() * 1e3))
}

fn apply_sweep_value(config: &mut RunConfig, variable: &str, value: f64) -> Result<(), RunError> {
    match variable {
        "seed" => {
            config.seed = value as u64;
            Ok(())
        }
        "degree" => {
            let as_degree = value.round() as u32;
            if (value - as_degree as f64).abs() > 1e-9 {
                return Err(RunError::Config(format!(
                    "degree sweep values must be integers, got {value}"
                )));
            }
            match &mut config.experiment {
                ExperimentConfig::HyperplaneIdentity { degree, .. }
                | ExperimentConfig::Spectrum { degree, .. } => {
                    *degree = as_degree;
                    Ok(())
                }
                _ => Err(RunError::Config(format!(
                    "experiment '{}' has no scalar degree to sweep",
                    config.experiment_name()
                ))),
            }
        }
        "ball-radius" => match &mut config.experiment {
            ExperimentConfig::Carleson { ball_radius, .. }
            | ExperimentConfig::Flattening { ball_radius, .. }
            | ExperimentConfig::MeanValue { ball_radius, .. } => {
                *ball_radius = value;
                Ok(())
            }
            _ => Err(RunError::Config(format!(
                "experiment '{}' has no ball radius to sweep",
                config.experiment_name()
            ))),
        },
        other => Err(RunError::Config(format!("unknown sweep variable '{other}'"))),
    }
}

fn trend_verdicts(sweep: &SweepConfig, table: &Table) -> Result<Vec<Verdict>, RunError> {
    let mut verdicts = Vec::new();
    for trend in &sweep.trends {
        if trend.table != table.name {
            continue;
        }
        let column = table.column(&trend.column).ok_or_else(|| {
            RunError::Config(format!(
                "trend column '{}' missing from sweep table",
                trend.column
            ))
        })?;
        let name = format!("trend-{}-{}", trend.column, trend.kind);
        match trend.kind.as_str() {
            "monotone-decreasing" => {
                let ok = column.windows(2).all(|w| w[1] < w[0]);
                verdicts.push(Verdict::at_most(
                    &name,
                    "sweep",
                    if ok { 0.0 } else { 1.0 },
                    0.0,
                ));
            }
            "monotone-increasing" => {
                let ok = column.windows(2).all(|w| w[1] > w[0]);
                verdicts.push(Verdict::at_most(
                    &name,
                    "sweep",
                    if ok { 0.0 } else { 1.0 },
                    0.0,
                ));
            }
            "drift-below" => {
                let drift = column
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs() / w[0].abs().max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max);
                verdicts.push(Verdict::less_than(&name, "sweep", drift, trend.tolerance));
            }
            _ => unreachable!("validated"),
        }
    }
    Ok(verdicts)
}

/// Runs the experiment once per sweep value and appends trend verdicts
/// computed between consecutive sweep rows. Values execute in parallel; the
/// merge is an ordered, deterministic reduction.
pub fn sweep(config: &RunConfig) -> Result<RunReport, RunError> {
    use rayon::prelude::*;

    config.validate()?;
    let sweep_cfg = config
        .sweep
        .clone()
        .ok_or_else(|| RunError::Config("sweep requires a sweep section".into()))?;
    let start = std::time::Instant::now();

    let runs: Vec<(f64, (Vec<Table>, Vec<Verdict>))> = sweep_cfg
        .values
        .par_iter()
        .map(|&value| {
            let mut cfg = config.clone();
            cfg.sweep = None;
            apply_sweep_value(&mut cfg, &sweep_cfg.variable, value)?;
            Ok((value, experiments::dispatch(&cfg)?))
        })
        .collect::<Result<_, RunError>>()?;

    let mut all_tables: Vec<Table> = Vec::new();
    let mut all_verdicts: Vec<Verdict> = Vec::new();
    // per-table accumulation of summary rows (last row of each run's table)
    let mut sweep_tables: Vec<Table> = Vec::new();
    for (value, (tables, verdicts)) in runs {
        for v in verdicts {
            all_verdicts.push(Verdict {
                name: format!("{}={}::{}", sweep_cfg.variable, value, v.name),
                ..v
            });
        }
        for table in tables {
            let Some(last_row) = table.rows.last() else {
                continue;
            };
            match sweep_tables.iter_mut().find(|t| t.name == table.name) {
                Some(acc) => {
                    let mut row = vec![value];
                    row.extend_from_slice(last_row);
                    acc.rows.push(row);
                }
                None => {
                    let mut columns = vec![sweep_cfg.variable.clone()];
                    columns.extend(table.columns.iter().cloned());
                    let mut row = vec![value];
                    row.extend_from_slice(last_row);
                    sweep_tables.push(Table {
                        name: table.name.clone(),
                        operation: table.operation.clone(),
                        columns,
                        rows: vec![row],
                    });
                }
            }
        }
    }
    for table in &sweep_tables {
        all_verdicts.extend(trend_verdicts(&sweep_cfg, table)?);
    }
    all_tables.extend(sweep_tables);
    Ok(assemble(config, all_tables, all_verdicts, start.elapsed().as_secs_f64() * 1e3))
}
