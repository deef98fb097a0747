//! Runs the ten acceptance criteria and prints one line per criterion.

use dephasing::verify::{run_criterion, VerifyConfig, CRITERIA};

fn main() {
    let cfg = VerifyConfig::default();
    let mut failed = 0;
    for id in 1..=CRITERIA.len() {
        let r = run_criterion(id, &cfg);
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("[{status}] {:>2}. {} ({:.2} s): {}", r.id, r.title, r.seconds, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} of {} acceptance criteria failed", CRITERIA.len());
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", CRITERIA.len());
}
