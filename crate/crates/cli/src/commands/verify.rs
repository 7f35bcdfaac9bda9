//! `vapo verify`: run the numerical oracle suites and report per-check lines.

use anyhow::Result;
use std::process::ExitCode;
use vapo_core::verify::{self, Suite};

pub fn run(suite: &str) -> Result<ExitCode> {
    let suite = Suite::parse(suite)?;
    let reports = verify::run(suite);
    let mut all_passed = true;
    for report in &reports {
        for c in &report.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            println!("[{tag}] {}/{}: {}", report.suite, c.name, c.detail);
            all_passed &= c.passed;
        }
        println!(
            "suite {}: {} in {:.2}s",
            report.suite,
            if report.passed() { "ok" } else { "FAILED" },
            report.elapsed_s
        );
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
