//! Trial reports: the uniform output of every Monte-Carlo checker.
//!
//! A report is a summary block (configuration echo, thresholds,
//! flags, rates) plus one row per individual check. Serialization is
//! deliberately boring and byte-stable: rerunning a checker with the
//! same seed must produce the same CSV.

use crate::fmt::g17;

/// One checked condition inside one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub check: &'static str,
    pub pass: bool,
    /// The quantity the check looked at (a rate, a margin, a mass);
    /// which one is named by `check`.
    pub value: f64,
}

/// Full output of a checker run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    kind: &'static str,
    summary: Vec<(String, String)>,
    rows: Vec<TrialRow>,
}

impl TrialReport {
    pub fn new(kind: &'static str) -> Self {
        TrialReport { kind, summary: Vec::new(), rows: Vec::new() }
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn push_summary(&mut self, key: &str, value: impl Into<String>) {
        self.summary.push((key.to_owned(), value.into()));
    }

    /// Adds a float summary entry in the crate's 17-digit format.
    pub fn push_summary_f64(&mut self, key: &str, value: f64) {
        self.push_summary(key, g17(value));
    }

    pub fn push_row(&mut self, trial: usize, check: &'static str, pass: bool, value: f64) {
        self.rows.push(TrialRow { trial, check, pass, value });
    }

    pub fn extend_rows(&mut self, rows: impl IntoIterator<Item = TrialRow>) {
        self.rows.extend(rows);
    }

    pub fn summary(&self) -> &[(String, String)] {
        &self.summary
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn rows(&self) -> &[TrialRow] {
        &self.rows
    }

    /// Rows carrying the named check.
    pub fn rows_for<'a>(&'a self, check: &'a str) -> impl Iterator<Item = &'a TrialRow> + 'a {
        self.rows.iter().filter(move |r| r.check == check)
    }

    /// Fraction of rows with the named check that passed, or `None`
    /// when no row carries it.
    pub fn pass_rate(&self, check: &str) -> Option<f64> {
        let mut total = 0usize;
        let mut passed = 0usize;
        for row in self.rows_for(check) {
            total += 1;
            if row.pass {
                passed += 1;
            }
        }
        (total > 0).then(|| passed as f64 / total as f64)
    }

    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Renders the report: `# key: value` summary lines, then a
    /// `trial,check,pass,value` CSV body. Floats use 17 significant
    /// digits, so equal reports render to equal bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# kind: {}\n", self.kind));
        for (key, value) in &self.summary {
            out.push_str(&format!("# {key}: {value}\n"));
        }
        out.push_str("trial,check,pass,value\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.trial,
                row.check,
                row.pass,
                g17(row.value)
            ));
        }
        out
    }
}
