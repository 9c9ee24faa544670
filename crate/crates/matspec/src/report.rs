//! Verification reports: per-check records with machine (JSON) and human
//! (aligned text) renderings.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

/// One executed check. `anchor` is the stable identifier of the underlying
/// theorem-check; failing records carry reproduction parameters.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: String,
    pub status: CheckStatus,
    pub value: f64,
    pub tolerance: f64,
    pub runtime_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repro: Option<serde_json::Value>,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub skip: usize,
}

/// A full verification report for one scenario and suite selection.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub version: String,
    pub scenario_digest: String,
    /// Wall-clock stamp; the only nondeterministic field, kept isolated so
    /// reports are otherwise byte-identical for identical inputs.
    pub timestamp_unix_ms: u128,
    pub suite: String,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
}

impl Report {
    pub fn new(scenario_digest: String, suite: String, checks: Vec<CheckRecord>) -> Self {
        let mut summary = Summary::default();
        for c in &checks {
            match c.status {
                CheckStatus::Pass => summary.pass += 1,
                CheckStatus::Fail => summary.fail += 1,
                CheckStatus::Skip => summary.skip += 1,
            }
        }
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_digest,
            timestamp_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            suite,
            checks,
            summary,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.summary.fail == 0
    }

    /// 0 when every check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let name_w = self
            .checks
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(4)
            .max(5);
        let anchor_w = self
            .checks
            .iter()
            .map(|c| c.anchor.len())
            .max()
            .unwrap_or(6)
            .max(6);
        out.push_str(&format!(
            "{:<name_w$}  {:<anchor_w$}  {:<6}  {:>13}  {:>13}  {:>9}\n",
            "check", "anchor", "status", "value", "tolerance", "ms"
        ));
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skip => "skip",
            };
            out.push_str(&format!(
                "{:<name_w$}  {:<anchor_w$}  {:<6}  {:>13.6e}  {:>13.6e}  {:>9.2}\n",
                c.name, c.anchor, status, c.value, c.tolerance, c.runtime_ms
            ));
            if let (CheckStatus::Fail, Some(d)) = (c.status, &c.details) {
                out.push_str(&format!("    ↳ {d}\n"));
            }
        }
        out.push_str(&format!(
            "summary: {} pass, {} fail, {} skip (suite {}, toolkit {})\n",
            self.summary.pass, self.summary.fail, self.summary.skip, self.suite, self.version
        ));
        out
    }
}

/// Helper that times a check body and turns its outcome into a record.
pub struct CheckRunner {
    pub checks: Vec<CheckRecord>,
}

impl CheckRunner {
    pub fn new() -> Self {
        Self { checks: Vec::new() }
    }

    /// Run a check producing `(value, details, repro)`; pass when
    /// `value ≤ tolerance`. Errors become failing records.
    pub fn check(
        &mut self,
        name: &str,
        anchor: &str,
        tolerance: f64,
        body: impl FnOnce() -> crate::error::Result<(f64, Option<String>, Option<serde_json::Value>)>,
    ) {
        let start = std::time::Instant::now();
        let rec = match body() {
            Ok((value, details, repro)) => {
                let status = if value <= tolerance {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                };
                CheckRecord {
                    name: name.into(),
                    anchor: anchor.into(),
                    status,
                    value,
                    tolerance,
                    runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                    details,
                    repro,
                }
            }
            Err(e) => CheckRecord {
                name: name.into(),
                anchor: anchor.into(),
                status: CheckStatus::Fail,
                value: f64::NAN,
                tolerance,
                runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                details: Some(format!("error: {e}")),
                repro: None,
            },
        };
        self.checks.push(rec);
    }

    pub fn skip(&mut self, name: &str, anchor: &str, reason: &str) {
        self.checks.push(CheckRecord {
            name: name.into(),
            anchor: anchor.into(),
            status: CheckStatus::Skip,
            value: f64::NAN,
            tolerance: f64::NAN,
            runtime_ms: 0.0,
            details: Some(reason.into()),
            repro: None,
        });
    }
}

impl Default for CheckRunner {
    fn default() -> Self {
        Self::new()
    }
}
