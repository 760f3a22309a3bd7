//! Acceptance criteria at full scale, one PASS/FAIL line each. Run with
//! `cargo test --test acceptance`; extra arguments select criteria by id.

use mlanet::datasets::bundled_toy_set;
use mlanet::verify::{
    check_bench, check_bessel, check_equivariance, check_gradcheck, check_learning_curve, check_md, check_oracles,
    check_overfit, check_persistence, CheckReport, SuiteScale,
};

fn main() {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let run = |id: &str| wanted.is_empty() || wanted.iter().any(|w| w == id);
    let scale = SuiteScale::full();
    let mut reports: Vec<CheckReport> = Vec::new();
    let mut push = |r: CheckReport| {
        println!("{}", r.line());
        reports.push(r);
    };
    if run("1") {
        let r = check_equivariance(scale.equivariance_structures, scale.equivariance_motions);
        let in_time = r.seconds < 120.0;
        push(CheckReport {
            passed: r.passed && in_time,
            detail: format!("{}, runtime {:.1} s (< 120)", r.detail, r.seconds),
            ..r
        });
    }
    if run("2") {
        let r = check_gradcheck();
        let in_time = r.seconds < 60.0;
        push(CheckReport {
            passed: r.passed && in_time,
            detail: format!("{}, runtime {:.1} s (< 60)", r.detail, r.seconds),
            ..r
        });
    }
    if run("3") {
        push(check_oracles(scale.neighbor_structures));
    }
    if run("4") {
        push(check_bessel());
    }
    if run("5") {
        let toy = bundled_toy_set().expect("bundled toy set parses");
        push(check_overfit(&toy, scale.overfit_epochs));
    }
    if run("6") {
        push(check_learning_curve(&scale.curve_sizes, scale.curve_test, scale.curve_epochs));
    }
    if run("7") {
        push(check_md(scale.md_steps, scale.nve_steps));
    }
    if run("8") {
        push(check_bench(&scale.bench_sides, scale.bench_repeat));
    }
    if run("9") {
        push(check_persistence());
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", reports.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
