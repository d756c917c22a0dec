//! Pass/fail bookkeeping shared by every certification routine.

use serde::Serialize;

/// Outcome of one inequality checked over many samples.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// The inequality being certified, in words.
    pub statement: String,
    /// Relative slack: `measured ≤ bound·(1 + rel_tol) + abs_tol`.
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `bound − measured` seen.
    pub worst_margin: f64,
    /// Largest `measured / bound` seen.
    pub worst_ratio: f64,
    /// Logged-only checks never fail a run.
    pub asserted: bool,
}

impl CheckRecord {
    pub fn new(name: &str, statement: &str, rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            name: name.into(),
            statement: statement.into(),
            rel_tol,
            abs_tol,
            samples: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            worst_ratio: 0.0,
            asserted: true,
        }
    }

    pub fn logged_only(mut self) -> Self {
        self.asserted = false;
        self
    }

    /// Records one sample; returns whether it satisfied the bound.
    pub fn record(&mut self, measured: f64, bound: f64) -> bool {
        self.samples += 1;
        let ok = measured.is_finite() && measured <= bound * (1.0 + self.rel_tol) + self.abs_tol;
        if !ok {
            self.violations += 1;
        }
        let margin = bound - measured;
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
        if bound > 0.0 {
            self.worst_ratio = self.worst_ratio.max(measured / bound);
        } else if measured > 0.0 {
            self.worst_ratio = f64::INFINITY;
        }
        ok
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Passed, or not asserted.
    pub fn acceptable(&self) -> bool {
        !self.asserted || self.passed()
    }

    pub fn merge(&mut self, other: &CheckRecord) {
        self.samples += other.samples;
        self.violations += other.violations;
        self.worst_margin = self.worst_margin.min(other.worst_margin);
        self.worst_ratio = self.worst_ratio.max(other.worst_ratio);
    }
}

/// Time-indexed series written as CSV with columns `t, value…, bound, margin`.
#[derive(Clone, Debug, Serialize)]
pub struct Series {
    pub name: String,
    pub value_columns: Vec<String>,
    pub rows: Vec<SeriesRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub values: Vec<f64>,
    pub bound: f64,
}

impl Series {
    pub fn new(name: &str, value_columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            value_columns: value_columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, values: Vec<f64>, bound: f64) {
        self.rows.push(SeriesRow { t, values, bound });
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.value_columns.iter().cloned());
        h.push("bound".into());
        h.push("margin".into());
        h
    }

    /// Rows with the margin `bound − first value` appended.
    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![r.t];
                row.extend(&r.values);
                row.push(r.bound);
                row.push(r.bound - r.values.first().copied().unwrap_or(f64::NAN));
                row
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_counts_violations() {
        let mut c = CheckRecord::new("x", "a ≤ b", 1e-8, 0.0);
        assert!(c.record(1.0, 2.0));
        assert!(c.record(1.0, 1.0));
        assert!(!c.record(1.1, 1.0));
        assert_eq!((c.samples, c.violations), (3, 1));
        assert!((c.worst_margin + 0.1).abs() < 1e-12);
        assert!(!c.passed());
        assert!(c.clone().logged_only().acceptable());
    }

    #[test]
    fn non_finite_measurements_fail() {
        let mut c = CheckRecord::new("x", "", 0.0, 0.0);
        assert!(!c.record(f64::NAN, 1.0));
        assert!(c.record(1e300, f64::INFINITY));
    }

    #[test]
    fn series_margin_column() {
        let mut s = Series::new("e", &["norm"]);
        s.push(0.5, vec![1.0], 3.0);
        assert_eq!(s.header(), ["t", "norm", "bound", "margin"]);
        assert_eq!(s.csv_rows(), vec![vec![0.5, 1.0, 3.0, 2.0]]);
    }
}
