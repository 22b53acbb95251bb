//! One PASS/FAIL line per acceptance criterion, plus the mutation check.
//! Exits non-zero when any line fails.

use std::process::ExitCode;

use floquet_ep::verify::{run_criterion, VerifyOptions};

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for id in 1..=12 {
        let report = run_criterion(id, &VerifyOptions::default());
        println!("{report}");
        if !report.passed {
            failed.push(id.to_string());
        }
    }
    // A Z-sign error fed only to the integrate oracle must be detected.
    let mutant = run_criterion(7, &VerifyOptions { mutate_z_sign: true });
    let detected = !mutant.passed;
    println!(
        "mutation     [{}] corrupted Z sign caught by the engine cross-check: {}",
        if detected { "PASS" } else { "FAIL" },
        mutant.detail
    );
    if !detected {
        failed.push("mutation".into());
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
