//! Experiment harness around the `varsmooth` solvers.
//!
//! The `varsmooth-bench` binary exposes four subcommands: `run` executes a
//! configured experiment and writes a CSV trace plus the final image, `rate`
//! fits a log–log slope to a trace, `check` runs the property suite and
//! `opnorm` estimates operator norms.

pub mod config;
pub mod opnorm;
pub mod rate;
pub mod run;
pub mod trace_csv;

use std::io::{self, Write};

use varsmooth::checks;

/// Runs every registered property, printing one line each; on failure the
/// first counterexample follows as JSON. Returns whether all passed.
pub fn check_report<W: Write>(seed: u64, trials: usize, out: &mut W) -> io::Result<bool> {
    let mut first_failure = None;
    for (name, outcome) in checks::run_all(seed, trials) {
        let status = if outcome.passed() { "PASS" } else { "FAIL" };
        writeln!(out, "{status} {name:<30} trials={:<5} worst={:.3e} {}", outcome.trials, outcome.worst, outcome.detail)?;
        if first_failure.is_none() {
            first_failure = outcome.counterexample;
        }
    }
    match first_failure {
        None => Ok(true),
        Some(cx) => {
            writeln!(out, "{}", serde_json::to_string_pretty(&cx).expect("counterexample serializes"))?;
            Ok(false)
        }
    }
}
