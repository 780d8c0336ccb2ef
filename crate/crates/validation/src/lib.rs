//! Pass/fail bookkeeping for the acceptance run.

use std::fmt;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {} | {} | {:.1} s",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Runs `check`, which returns `(passed, detail)`, and times it.
pub fn timed<F>(id: &str, title: &str, check: F) -> Outcome
where
    F: FnOnce() -> (bool, String),
{
    let start = Instant::now();
    let (passed, detail) = check();
    Outcome {
        id: id.to_string(),
        title: title.to_string(),
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

#[derive(Debug, Default)]
pub struct Report {
    outcomes: Vec<Outcome>,
}

impl Report {
    /// Records and immediately prints the line, so progress is visible.
    pub fn record(&mut self, o: Outcome) {
        println!("{o}");
        self.outcomes.push(o);
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn failed(&self) -> Vec<&Outcome> {
        self.outcomes.iter().filter(|o| !o.passed).collect()
    }

    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self.failed().iter().map(|o| o.id.as_str()).collect();
        if failed.is_empty() {
            format!("acceptance: {} of {} passed", self.outcomes.len(), self.outcomes.len())
        } else {
            format!(
                "acceptance: {} of {} passed; failed: {}",
                self.outcomes.len() - failed.len(),
                self.outcomes.len(),
                failed.join(", ")
            )
        }
    }
}
