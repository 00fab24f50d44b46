mod support;

use support::grad_cases::{cases, TOLERANCE};

#[test]
fn every_case_matches_central_differences() {
    let mut failures = Vec::new();
    for case in cases() {
        for seed in [1, 2] {
            let report = (case.run)(seed).unwrap_or_else(|e| panic!("{}: {e}", case.name));
            assert!(report.checked > 0, "{}", case.name);
            if report.max_rel_error > TOLERANCE {
                failures.push(format!(
                    "{} (seed {seed}): {:.3e} at {:?}",
                    case.name, report.max_rel_error, report.worst
                ));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
