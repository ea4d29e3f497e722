//! Dataset files: `#`-prefixed header lines, then a comma-separated table
//! with one row per record. Columns whose names start with `*` hold hidden
//! truth; [`read_observed`] drops them.
//!
//! ```text
//! # causal-dataset 1
//! # kind: circle-noiseless
//! # spec: kind=circle-noiseless
//! # seed: 7
//! # n: 2
//! # covariate_shape: 1x32x32
//! x0,x1,...,x1023,t,y,*y0,*y1,*tau,*radius,*origin_x,*origin_y
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{CausalDataset, Circle, GeneratorKind, HiddenTruth, ObservedData};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "# causal-dataset";

fn tau_column(kind: GeneratorKind) -> &'static str {
    if kind.tau_is_substitute() {
        "*tau_substitute"
    } else {
        "*tau"
    }
}

/// Renders `data` in the dataset file format.
pub fn dataset_to_string(data: &CausalDataset) -> String {
    let (obs, truth) = (data.observed(), data.truth());
    let shape: Vec<String> = obs.covariate_shape.iter().map(|d| d.to_string()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {DATASET_FORMAT_VERSION}");
    let _ = writeln!(out, "# kind: {}", data.kind);
    let _ = writeln!(out, "# spec: {}", data.spec);
    let _ = writeln!(out, "# seed: {}", data.seed);
    let _ = writeln!(out, "# n: {}", data.len());
    let _ = writeln!(out, "# covariate_shape: {}", shape.join("x"));
    let mut header: Vec<String> = (0..obs.dim()).map(|j| format!("x{j}")).collect();
    header.extend(["t", "y", "*y0", "*y1", tau_column(data.kind)].map(String::from));
    if truth.circles.is_some() {
        header.extend(["*radius", "*origin_x", "*origin_y"].map(String::from));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..data.len() {
        for v in obs.row(i) {
            let _ = write!(out, "{v},");
        }
        let _ = write!(
            out,
            "{},{},{},{},{}",
            obs.t[i], obs.y[i], truth.y0[i], truth.y1[i], truth.tau[i]
        );
        if let Some(c) = &truth.circles {
            let _ = write!(out, ",{},{},{}", c[i].radius, c[i].origin_x, c[i].origin_y);
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(data: &CausalDataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_string(data)).map_err(|e| Error::io(path, e))
}

/// Parses a dataset file, hidden truth included.
pub fn parse_dataset(text: &str, origin: &str) -> Result<CausalDataset> {
    let bad = |d: String| Error::format(origin, d);
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let version = first
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| bad(format!("expected `{MAGIC}` header")))?;
    if version != DATASET_FORMAT_VERSION.to_string() {
        return Err(bad(format!("unsupported format version `{version}`")));
    }
    let mut meta = std::collections::HashMap::new();
    let header = loop {
        let line = lines.next().ok_or_else(|| bad("missing column header".into()))?;
        match line.strip_prefix("# ") {
            Some(kv) => {
                let (k, v) = kv.split_once(": ").ok_or_else(|| bad(format!("bad header line `{line}`")))?;
                meta.insert(k.to_string(), v.to_string());
            }
            None => break line,
        }
    };
    let field = |k: &str| meta.get(k).ok_or_else(|| bad(format!("missing `{k}` header")));
    let kind: GeneratorKind = field("kind")?.parse().map_err(|e: Error| bad(e.to_string()))?;
    let spec = field("spec")?.clone();
    let seed: u64 = field("seed")?.parse().map_err(|_| bad("bad seed".into()))?;
    let n: usize = field("n")?.parse().map_err(|_| bad("bad record count".into()))?;
    let shape: Vec<usize> = field("covariate_shape")?
        .split('x')
        .map(|d| d.parse().map_err(|_| bad(format!("bad covariate shape extent `{d}`"))))
        .collect::<Result<_>>()?;
    let dim: usize = shape.iter().product();

    let columns: Vec<&str> = header.split(',').collect();
    let mut expected: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    expected.extend(["t", "y", "*y0", "*y1", tau_column(kind)].map(String::from));
    let with_circles = columns.len() == expected.len() + 3;
    if with_circles {
        expected.extend(["*radius", "*origin_x", "*origin_y"].map(String::from));
    }
    if columns != expected {
        return Err(bad(format!(
            "column header does not match kind `{kind}` with {dim} covariates"
        )));
    }
    let width = columns.len();
    let mut x = Vec::with_capacity(n * dim);
    let (mut t, mut y, mut y0, mut y1, mut tau, mut circles) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut rows = 0;
    for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("unparsable value on data row {}", lineno + 1)))?;
        if vals.len() != width {
            return Err(bad(format!("data row {} has {} of {width} columns", lineno + 1, vals.len())));
        }
        x.extend_from_slice(&vals[..dim]);
        t.push(vals[dim]);
        y.push(vals[dim + 1]);
        y0.push(vals[dim + 2]);
        y1.push(vals[dim + 3]);
        tau.push(vals[dim + 4]);
        if with_circles {
            circles.push(Circle {
                radius: vals[dim + 5],
                origin_x: vals[dim + 6],
                origin_y: vals[dim + 7],
            });
        }
        rows += 1;
    }
    if rows != n {
        return Err(bad(format!("header declares {n} records, found {rows}")));
    }
    let observed = ObservedData::new(shape, x, t, y).map_err(|e| bad(e.to_string()))?;
    let truth = HiddenTruth {
        y0,
        y1,
        tau,
        circles: with_circles.then_some(circles),
    };
    CausalDataset::new(kind, spec, seed, observed, truth)
}

pub fn read_dataset(path: &Path) -> Result<CausalDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, &path.display().to_string())
}

/// Reads only the estimator-facing columns of a dataset file.
pub fn read_observed(path: &Path) -> Result<ObservedData> {
    Ok(read_dataset(path)?.into_parts().0)
}
