//! Branch-and-bound against brute force: every tick-aligned offset vector
//! is enumerated, infeasible partial vectors are cut only on link
//! conflicts, and the best weighted tardiness must match exactly.

mod common;

#[test]
fn branch_and_bound_matches_enumeration() {
    let r = common::solver_oracle(50, 2024);
    assert!(r.mismatches.is_empty(), "{:?}", r.mismatches);
    assert!(r.feasible >= 25, "only {} feasible cases; generator too tight", r.feasible);
    assert!(r.tardy >= 3, "only {} cases with positive tardiness", r.tardy);
    assert!(r.elapsed.as_secs() < 60);
}
