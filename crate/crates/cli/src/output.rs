//! Report and CSV writing. Files are staged in a sibling directory and renamed into place at
//! the end, so a crashed run never leaves a half-written report behind.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kbstab::check::Series;
use serde_json::{json, Value};

use crate::commands::{Command, Outcome};

pub const REPORT_FILE: &str = "report.json";

/// The JSON report document.
pub fn report_json(
    command: Command,
    scenario: &Path,
    out: &Outcome,
    artifacts: &[String],
) -> Value {
    json!({
        "command": command.name(),
        "scenario": scenario.display().to_string(),
        "passed": out.passed(),
        "checks": out.checks,
        "replication": out.replication,
        "results": out.results,
        "artifacts": artifacts,
    })
}

/// CSV file names, disambiguated when several series share a name.
fn csv_names(series: &[Series]) -> Vec<String> {
    let mut names: Vec<String> = Vec::with_capacity(series.len());
    for s in series {
        let base = s.name.replace(['/', ' '], "_");
        let mut name = format!("{base}.csv");
        let mut k = 1;
        while names.contains(&name) {
            name = format!("{base}-{k}.csv");
            k += 1;
        }
        names.push(name);
    }
    names
}

fn write_csv(path: &Path, s: &Series) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(s.header())?;
    for row in s.csv_rows() {
        w.write_record(row.iter().map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json` and, when `csv` is set, one CSV per series into `dir`. Returns the
/// report path.
pub fn write_all(
    dir: &Path,
    command: Command,
    scenario: &Path,
    out: &Outcome,
    csv: bool,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let staging = dir.join(format!(".kbstab-staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir(&staging).with_context(|| format!("creating {}", staging.display()))?;
    let names = if csv {
        csv_names(&out.series)
    } else {
        Vec::new()
    };
    let staged = (|| -> Result<()> {
        for (s, name) in out.series.iter().zip(&names) {
            write_csv(&staging.join(name), s)?;
        }
        let doc = report_json(command, scenario, out, &names);
        fs::write(
            staging.join(REPORT_FILE),
            serde_json::to_string_pretty(&doc)? + "\n",
        )?;
        Ok(())
    })();
    if let Err(e) = staged {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    for name in names.iter().map(String::as_str).chain([REPORT_FILE]) {
        fs::rename(staging.join(name), dir.join(name))
            .with_context(|| format!("moving {name} into place"))?;
    }
    fs::remove_dir(&staging)?;
    Ok(dir.join(REPORT_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_series_names_are_disambiguated() {
        let s = vec![
            Series::new("a", &["x"]),
            Series::new("a", &["x"]),
            Series::new("b/c", &["x"]),
        ];
        assert_eq!(csv_names(&s), ["a.csv", "a-1.csv", "b_c.csv"]);
    }

    #[test]
    fn writes_report_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outcome::default();
        let mut s = Series::new("decay", &["norm"]);
        s.push(0.0, vec![0.5], 1.0);
        out.series.push(s);
        let path = write_all(dir.path(), Command::Bounds, Path::new("m.toml"), &out, true).unwrap();
        let doc: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(doc["passed"], true);
        assert_eq!(doc["artifacts"][0], "decay.csv");
        let csv = fs::read_to_string(dir.path().join("decay.csv")).unwrap();
        assert!(csv.starts_with("t,norm,bound,margin\n"));
        assert!(csv.contains("5e-1"));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
