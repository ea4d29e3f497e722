use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{EvalReport, Split};

use super::cell::{CellKey, Experiment};
use super::config::ExperimentConfig;
use super::plot::{line_plot, Series};
use super::report::{format_rows, parse_rows, write_atomic};

/// Relative-MSE values above this are drawn on the plot's top edge.
const PLOT_CLIP: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub results: PathBuf,
    pub plot: PathBuf,
    pub rows: Vec<EvalReport>,
    /// Cells fitted in this run; the rest were read back from disk.
    pub computed: Vec<CellKey>,
}

fn load_cell(exp: &Experiment, key: &CellKey) -> Option<Vec<EvalReport>> {
    let path = exp.cell_path(key);
    let text = fs::read_to_string(&path).ok()?;
    let rows = parse_rows(&text, &path.display().to_string()).ok()?;
    (rows.len() == 2).then_some(rows)
}

fn sort_key(exp: &Experiment, r: &EvalReport) -> (String, usize, usize, u64, Split) {
    let m = exp.config.methods.iter().position(|m| m.name() == r.method).unwrap_or(usize::MAX);
    (r.generator.clone(), m, r.n_train, r.replicate, r.split)
}

/// Runs every cell that has no result file yet, then writes the combined
/// `results.csv` and one plot for the generator.
pub fn sweep_with_outcome(config: &ExperimentConfig) -> Result<SweepOutcome> {
    let exp = Experiment::new(config)?;
    let out = &config.out_dir;
    fs::create_dir_all(out.join("cells")).map_err(|e| Error::io(out, e))?;
    let keys = exp.cells();
    let pending: Vec<CellKey> = keys.iter().copied().filter(|k| load_cell(&exp, k).is_none()).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.jobs)))?;
    pool.install(|| pending.par_iter().map(|k| exp.run_cell(k).map(|_| ())).collect::<Result<Vec<()>>>())?;

    let mut rows = Vec::with_capacity(keys.len() * 2);
    for k in &keys {
        rows.extend(load_cell(&exp, k).ok_or_else(|| Error::format(exp.cell_path(k).display().to_string(), "unreadable cell result"))?);
    }
    rows.sort_by_key(|a| sort_key(&exp, a));
    let results = out.join("results.csv");
    write_atomic(&results, &format_rows(&rows))?;

    let kind = exp.kind();
    let series: Vec<Series> = config
        .methods
        .iter()
        .map(|m| {
            let points = config
                .grid
                .iter()
                .map(|&n| {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.method == m.name() && r.n_train == n && r.split == Split::Test)
                        .map(|r| r.relative_mse)
                        .collect();
                    let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
                    (n as f64, mean)
                })
                .collect();
            Series {
                label: m.name().to_string(),
                points,
            }
        })
        .collect();
    let plot = out.join(format!("plot_{kind}.svg"));
    let svg = line_plot(
        &format!("{kind}: test relative MSE"),
        "training size",
        "relative MSE",
        &series,
        Some(PLOT_CLIP),
    );
    write_atomic(&plot, &svg)?;
    Ok(SweepOutcome {
        results,
        plot,
        rows,
        computed: pending,
    })
}

/// [`sweep_with_outcome`], returning the results CSV path.
pub fn sweep(config: &ExperimentConfig) -> Result<PathBuf> {
    Ok(sweep_with_outcome(config)?.results)
}
