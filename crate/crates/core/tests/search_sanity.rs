//! Sanity checks that the desk-scale search families in the acceptance suite
//! contain implementing members at all (guarding against a vacuous pass of
//! the optimality and implementability criteria).

use careerwage::envgen::{self, CovSign};
use careerwage::oracle;
use careerwage::policy::WagePolicy;
use careerwage::uninformed;

#[test]
fn step_family_contains_an_implementing_member() {
    // the overshoot wage one grid step above the deterministic
    // full-implementation level is in the criterion-4 family and implements
    let mut rng = envgen::seeded_rng(4004);
    let lin0 = envgen::linear_worked_example();
    let lin = envgen::random_linear_env(&mut rng, CovSign::Positive);
    let zig = envgen::random_zigzag_env(&mut rng);
    let deep = envgen::random_deep_zigzag_env(&mut rng);
    for env in [lin0, lin, zig, deep] {
        let sol = uninformed::robust_policy(&env).unwrap();
        let step = (sol.w_high - sol.w_low) / 24.0;
        let overshoot = WagePolicy::degenerate(sol.w_high + step);
        let verdict = oracle::fully_implements(&env, &overshoot, 1.0).unwrap();
        assert!(
            verdict.fully_implements,
            "overshoot policy must implement; witnesses {:?}",
            verdict.witnesses
        );
    }
}

#[test]
fn no_step_policy_capped_at_the_fd_wage_implements() {
    // with support weakly below the FD wage, either full shirking survives or
    // a mixed equilibrium sits where the binding curve meets the support top;
    // the overshoot wages in the search family exist precisely for this
    let mut rng = envgen::seeded_rng(4004);
    let _ = envgen::random_linear_env(&mut rng, CovSign::Positive);
    let _ = envgen::random_zigzag_env(&mut rng);
    let env = envgen::random_deep_zigzag_env(&mut rng);
    let sol = uninformed::robust_policy(&env).unwrap();
    // the degenerate FD-wage policy itself leaves an equilibrium alive
    let capped = WagePolicy::degenerate(sol.w_high);
    let verdict = oracle::fully_implements(&env, &capped, 1.0).unwrap();
    assert!(!verdict.fully_implements);
}

#[test]
fn informed_grid_family_contains_implementing_members_for_implementable_targets() {
    use careerwage::informed;
    let env = envgen::informed_example();
    let target = [0.4, 0.8];
    assert!(
        informed::implementable(&env, &target)
            .unwrap()
            .implementable
    );
    // the solver's shifted policy certifies implementability through the oracle
    let sol = informed::robust_policy_informed_q(&env, &target).unwrap();
    let shifted = sol.approximating_policy(5e-4, false).unwrap();
    let verdict = oracle::fully_implements_informed(&env, &shifted, &target).unwrap();
    assert!(verdict.fully_implements);
}
