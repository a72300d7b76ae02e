//! End-to-end checks. Prints one PASS/FAIL line per check and exits non-zero
//! if any fails.

use std::process::ExitCode;
use std::thread;

use cqed_core::acceptance::{self, CheckOutcome};

fn main() -> ExitCode {
    let checks: [fn() -> CheckOutcome; 10] = [
        acceptance::oracle_equivalence,
        acceptance::cooperativity_check,
        acceptance::sqrt_n_round_trip,
        acceptance::beat_geometry,
        acceptance::thermal_averages,
        acceptance::loading_statistics,
        acceptance::error_budget,
        acceptance::empty_cavity,
        acceptance::fit_recovery,
        acceptance::inhomogeneity,
    ];
    let outcomes: Vec<CheckOutcome> = thread::scope(|s| {
        let handles: Vec<_> = checks.iter().map(|f| s.spawn(f)).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for c in &outcomes {
        println!("{c}");
    }
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        outcomes.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
