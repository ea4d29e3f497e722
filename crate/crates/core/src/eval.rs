//! Scoring of effect estimates against the hidden truth.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

fn check_pair(estimates: &[f64], truths: &[f64]) -> Result<()> {
    if estimates.len() != truths.len() {
        return Err(Error::Data(format!(
            "{} estimates for {} true values",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::Data("cannot score an empty set of estimates".into()));
    }
    Ok(())
}

/// Mean of `(τ̂ − τ)²`.
pub fn mse_cate(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    check_pair(estimates, truths)?;
    let ss: f64 = estimates.iter().zip(truths).map(|(e, t)| (e - t) * (e - t)).sum();
    Ok(ss / estimates.len() as f64)
}

/// Population variance (divide by n).
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// MSE divided by the variance of the true values; 1 matches predicting
/// their mean.
pub fn relative_mse(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    let mse = mse_cate(estimates, truths)?;
    let var = variance(truths);
    if var <= 0.0 {
        return Err(Error::Degenerate("true effects have zero variance".into()));
    }
    Ok(mse / var)
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Writes `true_tau,est_tau` rows with 17 significant digits and returns
/// the number of data rows.
pub fn scatter_export(estimates: &[f64], truths: &[f64], path: &Path) -> Result<usize> {
    scatter_export_as(estimates, truths, "true_tau", path)
}

/// [`scatter_export`] with a custom name for the target column, such as
/// `tau_substitute` when the target is not the exact CATE.
pub fn scatter_export_as(estimates: &[f64], truths: &[f64], target: &str, path: &Path) -> Result<usize> {
    if estimates.len() != truths.len() {
        return Err(Error::Data(format!(
            "{} estimates for {} true values",
            estimates.len(),
            truths.len()
        )));
    }
    let mut out = format!("{target},est_tau\n");
    for (e, t) in estimates.iter().zip(truths) {
        let _ = writeln!(out, "{t:.16e},{e:.16e}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(estimates.len())
}

/// Reads a scatter file back as `(target, estimate)` pairs.
pub fn read_scatter(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let mut lines = text.lines();
    if !lines.next().is_some_and(|h| h.ends_with(",est_tau") && !h.starts_with(',')) {
        return Err(Error::format(&origin, "missing `<target>,est_tau` header"));
    }
    lines
        .map(|l| {
            let (a, b) = l
                .split_once(',')
                .ok_or_else(|| Error::format(&origin, format!("bad row `{l}`")))?;
            match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(Error::format(&origin, format!("bad row `{l}`"))),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One scored (method, generator, size, replicate, split) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub generator: String,
    pub n_train: usize,
    pub replicate: u64,
    pub split: Split,
    pub mse: f64,
    pub relative_mse: f64,
    pub failed: bool,
    pub seconds: f64,
}

impl EvalReport {
    #[allow(clippy::too_many_arguments)]
    pub fn score(
        method: &str,
        generator: &str,
        n_train: usize,
        replicate: u64,
        split: Split,
        estimates: &[f64],
        truths: &[f64],
        seconds: f64,
    ) -> Result<Self> {
        Ok(Self {
            method: method.to_string(),
            generator: generator.to_string(),
            n_train,
            replicate,
            split,
            mse: mse_cate(estimates, truths)?,
            relative_mse: relative_mse(estimates, truths)?,
            failed: false,
            seconds,
        })
    }
}
