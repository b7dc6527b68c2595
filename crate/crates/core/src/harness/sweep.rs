use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{run_experiment, RunReport};
use super::{ExperimentConfig, HarnessError, Method};
use crate::numfmt::fmt_g;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub c: f64,
    #[serde(rename = "W")]
    pub w: usize,
    pub report: Option<RunReport>,
    /// Set when the cell could not run at all, or any of its seeds failed.
    pub error: Option<String>,
    pub mean_final_return: Option<f64>,
    pub stderr_final_return: Option<f64>,
}

impl SweepCell {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn label(&self) -> String {
        cell_label(self.c, self.w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub method: Method,
    pub cells: Vec<SweepCell>,
    /// Index of the cell with the highest mean final return.
    ///
    /// A config covers one environment, so the best cell for that environment
    /// and the best cell overall are the same; aggregating across environments
    /// is left to the caller.
    pub best_cell: Option<usize>,
    /// max − min of cell means over the cells that completed.
    pub spread: Option<f64>,
}

impl SweepReport {
    /// `c W mean stderr` rows, one per cell.
    pub fn table(&self) -> String {
        let mut out = String::from("c\tW\tmean\tstderr\tstatus\n");
        for cell in &self.cells {
            let num = |x: Option<f64>| x.map_or("-".to_string(), fmt_g);
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                fmt_g(cell.c),
                cell.w,
                num(cell.mean_final_return),
                num(cell.stderr_final_return),
                cell.error.as_deref().unwrap_or("ok")
            ));
        }
        out
    }
}

pub fn cell_label(c: f64, w: usize) -> String {
    format!("c{}_w{}", fmt_g(c), w)
}

/// One [`run_experiment`] per (c, W) cell; cells run in parallel and a failing
/// cell is reported without stopping the others.
pub fn run_sweep(config: &ExperimentConfig, cs: &[f64], ws: &[usize]) -> Result<SweepReport, HarnessError> {
    if cs.is_empty() || ws.is_empty() {
        return Err(HarnessError::Config("sweep grid is empty".into()));
    }
    if !matches!(config.method, Method::Ultho | Method::Relay) {
        return Err(HarnessError::Config(format!(
            "sweeping c and W needs a scheduling method, not '{}'",
            config.method
        )));
    }
    let grid: Vec<(f64, usize)> = cs.iter().flat_map(|&c| ws.iter().map(move |&w| (c, w))).collect();
    let cells: Vec<SweepCell> = grid
        .par_iter()
        .map(|&(c, w)| {
            let mut cell_cfg = config.clone();
            cell_cfg.scheduler.exploration_coefficient = c;
            cell_cfg.scheduler.window_capacity = w;
            cell_cfg.output_dir = config.output_dir.as_ref().map(|d| d.join(cell_label(c, w)));
            match run_experiment(&cell_cfg) {
                Ok(report) => {
                    let error = (report.failed_seeds > 0).then(|| {
                        let first = report.seeds.iter().find_map(|s| s.failure.as_ref()).expect("a failed seed");
                        format!(
                            "{} seed(s) failed; first at episode {}: {}",
                            report.failed_seeds, first.episode, first.message
                        )
                    });
                    SweepCell {
                        c,
                        w,
                        mean_final_return: report.mean_final_return,
                        stderr_final_return: report.stderr_final_return,
                        report: Some(report),
                        error,
                    }
                }
                Err(e) => SweepCell {
                    c,
                    w,
                    report: None,
                    error: Some(e.to_string()),
                    mean_final_return: None,
                    stderr_final_return: None,
                },
            }
        })
        .collect();

    let completed: Vec<(usize, f64)> = cells
        .iter()
        .enumerate()
        .filter(|(_, cell)| !cell.failed())
        .filter_map(|(k, cell)| cell.mean_final_return.map(|m| (k, m)))
        .collect();
    let mut best_cell = None;
    for &(k, m) in &completed {
        if best_cell.is_none_or(|b: usize| m > cells[b].mean_final_return.unwrap_or(f64::NEG_INFINITY)) {
            best_cell = Some(k);
        }
    }
    let spread = (!completed.is_empty()).then(|| {
        let max = completed.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let min = completed.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        max - min
    });
    let report = SweepReport {
        method: config.method,
        cells,
        best_cell,
        spread,
    };
    if let Some(out) = &config.output_dir {
        super::log::write_json(&out.join("sweep.json"), &report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "seeds": [3],
                "method": "ultho",
                "clusters": [{"name": "LR", "values": [0.05, 0.2]}],
                "ppo": {"num_envs": 1, "rollout_length": 16, "batch_size": 16},
                "env": {"kind": "gridworld", "width": 3, "height": 3, "horizon": 10, "goal": [2, 2]},
                "total_episodes": 6
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn one_by_one_grid_equals_run_experiment() {
        let mut cfg = config();
        let sweep = run_sweep(&cfg, &[1.0], &[10]).unwrap();
        cfg.scheduler.exploration_coefficient = 1.0;
        cfg.scheduler.window_capacity = 10;
        let direct = run_experiment(&cfg).unwrap();
        assert_eq!(sweep.cells.len(), 1);
        assert_eq!(sweep.cells[0].report.as_ref().unwrap(), &direct);
        assert_eq!(sweep.spread, Some(0.0));
        assert_eq!(sweep.best_cell, Some(0));
    }

    #[test]
    fn bad_cells_do_not_abort_the_sweep() {
        let sweep = run_sweep(&config(), &[1.0, -1.0], &[10, 50]).unwrap();
        assert_eq!(sweep.cells.len(), 4);
        let failed: Vec<bool> = sweep.cells.iter().map(|c| c.failed()).collect();
        assert_eq!(failed, vec![false, false, true, true]);
        assert!(sweep.table().lines().count() == 5);
    }

    #[test]
    fn empty_grid_is_a_config_error() {
        assert!(run_sweep(&config(), &[], &[10]).unwrap_err().is_config_error());
    }

    #[test]
    fn labels() {
        assert_eq!(cell_label(1.0, 10), "c1_w10");
        assert_eq!(cell_label(0.5, 100), "c0.5_w100");
    }
}
