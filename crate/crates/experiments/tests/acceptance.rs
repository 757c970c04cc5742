//! Full-tier acceptance run: one line per criterion, nonzero exit on any
//! failure.

use std::process::ExitCode;

use shockrep::verify::{verify_suite, Tier, VerifyOptions};

fn main() -> ExitCode {
    // `cargo test -- --list` and filters address libtest targets; there is
    // nothing to list here.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    println!("acceptance criteria, full tier");
    let report = verify_suite(&VerifyOptions::new(Tier::Full), |c| println!("{c}"));
    let passed = report.criteria.iter().filter(|c| c.passed).count();
    println!("{passed} of {} criteria passed", report.criteria.len());
    if report.criteria.len() == 12 && report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
