//! Runs the ten acceptance criteria on the desk profile, one line each.

use std::process::ExitCode;

use mitosim_core::acceptance::{run_all, Profile};

fn main() -> ExitCode {
    let outcomes = run_all(Profile::Desk);
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
