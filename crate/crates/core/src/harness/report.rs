use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::eval::{EvalReport, Split};

pub const RESULTS_HEADER: &str = "generator,method,n_train,replicate,split,mse,relative_mse,failed,seconds";

/// Header plus one CSV line per report. Metrics use the shortest
/// round-trip formatting, so identical values print identically.
pub fn format_rows(rows: &[EvalReport]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.3}",
            r.generator,
            r.method,
            r.n_train,
            r.replicate,
            r.split.name(),
            r.mse,
            r.relative_mse,
            r.failed,
            r.seconds
        );
    }
    out
}

/// Inverse of [`format_rows`]; `#` lines are comments.
pub fn parse_rows(text: &str, origin: &str) -> Result<Vec<EvalReport>> {
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(Error::format(origin, "missing results header"));
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let bad = || Error::format(origin, format!("bad results row `{line}`"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad());
        }
        let split = match f[4] {
            "train" => Split::Train,
            "test" => Split::Test,
            _ => return Err(bad()),
        };
        rows.push(EvalReport {
            generator: f[0].to_string(),
            method: f[1].to_string(),
            n_train: f[2].parse().map_err(|_| bad())?,
            replicate: f[3].parse().map_err(|_| bad())?,
            split,
            mse: f[5].parse().map_err(|_| bad())?,
            relative_mse: f[6].parse().map_err(|_| bad())?,
            failed: f[7].parse().map_err(|_| bad())?,
            seconds: f[8].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// Writes through a uniquely named temporary file in the same directory and
/// renames it into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.{n}.tmp", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(split: Split, mse: f64) -> EvalReport {
        EvalReport {
            method: "adj".into(),
            generator: "linear".into(),
            n_train: 500,
            replicate: 0,
            split,
            mse,
            relative_mse: mse / 3.0,
            failed: mse.is_nan(),
            seconds: 1.25,
        }
    }

    #[test]
    fn rows_round_trip() {
        let rows = vec![row(Split::Train, 0.1 + 0.2), row(Split::Test, f64::NAN)];
        let text = format_rows(&rows);
        let back = parse_rows(&text, "<mem>").unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].mse.is_nan() && back[1].failed);
        assert!(parse_rows("a,b\n", "<mem>").is_err());
        assert!(parse_rows(&format!("{RESULTS_HEADER}\n1,2,3\n"), "<mem>").is_err());
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cell.csv");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
