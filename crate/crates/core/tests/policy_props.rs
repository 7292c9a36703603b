//! Property suites: distribution-object invariants under random mixed
//! policies, model invariants under random environments, and the purification
//! construction.

use proptest::prelude::*;

use careerwage::envgen::{self, CovSign};
use careerwage::environment::Complementarity;
use careerwage::informed;
use careerwage::oracle;
use careerwage::policy::{TailWagePolicy, WagePolicy};
use careerwage::uninformed;

/// Random mixed policies: a few atoms plus a few linear CDF pieces.
fn arb_policy() -> impl Strategy<Value = WagePolicy> {
    let atoms = prop::collection::vec((0.0..2.0f64, 0.05..1.0f64), 0..4);
    let pieces = prop::collection::vec((0.0..2.0f64, 0.01..0.8f64, 0.05..1.0f64), 0..3);
    (atoms, pieces).prop_filter_map("needs some mass", |(atoms, raw_pieces)| {
        let mut mass: f64 = atoms.iter().map(|a| a.1).sum();
        // space pieces out so they cannot overlap: each starts after the previous
        let mut pieces: Vec<Vec<(f64, f64)>> = Vec::new();
        let mut cursor = 2.5;
        for (offset, width, m) in raw_pieces {
            let start = cursor + offset;
            let end = start + width;
            pieces.push(vec![(start, 0.0), (0.5 * (start + end), 0.6 * m), (end, m)]);
            mass += m;
            cursor = end + 0.01;
        }
        if mass < 0.1 {
            return None;
        }
        // normalize to total 1
        let atoms: Vec<(f64, f64)> = atoms.iter().map(|&(w, m)| (w, m / mass)).collect();
        let pieces: Vec<Vec<(f64, f64)>> = pieces
            .into_iter()
            .map(|p| p.into_iter().map(|(w, c)| (w, c / mass)).collect())
            .collect();
        WagePolicy::new(atoms, pieces).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mean_matches_tail_integral(policy in arb_policy()) {
        let stats = policy.stats();
        let (lo, hi) = policy.support_bounds();
        let mean_from_tail = lo + policy.tail_integral(lo, hi);
        prop_assert!((stats.mean - mean_from_tail).abs() < 1e-9);
    }

    #[test]
    fn inverse_set_agrees_with_cdf(policy in arb_policy(), q in 0.0..1.0f64) {
        let t = 1.0 - q;
        let (lo, hi) = policy.inverse_set(t).unwrap();
        prop_assert!(lo <= hi + 1e-12);
        // every sampled wage of the interval attains the quantile
        let probes = [lo, 0.5 * (lo + hi.min(lo + 10.0)), hi.min(lo + 10.0)];
        for w in probes {
            prop_assert!(policy.cdf_minus(w) <= t + 1e-9, "F(w-) > t at {w}");
            prop_assert!(policy.cdf(w) >= t - 1e-9, "F(w) < t at {w}");
        }
    }

    #[test]
    fn tail_round_trip_is_identity(policy in arb_policy()) {
        let tail = TailWagePolicy::new(policy.clone());
        // reconstruct the tail polyline from structural points and rebuild
        let mut knots: Vec<(f64, f64)> = vec![(policy.min_support(), 1.0)];
        for w in policy.breakpoints() {
            let left = policy.tail(w);
            let right = 1.0 - policy.cdf(w);
            if knots.last().map(|&(lw, lr)| (lw - w).abs() > 1e-15 || (lr - left).abs() > 1e-15).unwrap_or(true) {
                knots.push((w, left));
            }
            if right < left {
                knots.push((w, right));
            }
        }
        let back = WagePolicy::from_tail_curve(&knots).unwrap();
        let (lo, hi) = policy.support_bounds();
        for i in 0..=40 {
            let w = lo + (hi - lo) * i as f64 / 40.0;
            prop_assert!((back.tail(w) - tail.eval(w)).abs() < 1e-12);
            prop_assert!((back.cdf(w) - policy.cdf(w)).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_preserves_cdf(policy in arb_policy()) {
        let back = WagePolicy::from_json(&policy.to_json()).unwrap();
        let (lo, hi) = policy.support_bounds();
        for i in 0..=25 {
            let w = lo - 0.1 + (hi - lo + 0.2) * i as f64 / 25.0;
            prop_assert!((back.cdf(w) - policy.cdf(w)).abs() < 1e-12);
        }
    }
}

#[test]
fn martingale_holds_on_random_environments() {
    let mut rng = envgen::seeded_rng(2024);
    for _ in 0..40 {
        let env = envgen::random_linear_env(&mut rng, CovSign::Any);
        for i in 0..=50 {
            let q = i as f64 / 50.0;
            let post = env.posteriors(q);
            for k in 0..env.num_types() {
                let recon = post.success_prob * post.success[k]
                    + (1.0 - post.success_prob) * post.failure[k];
                assert!(
                    (recon - env.prior()[k]).abs() < 1e-10,
                    "martingale violated at q={q}, type {k}"
                );
            }
        }
    }
}

#[test]
fn complementary_environments_have_increasing_career_value() {
    // complementarity direction: an FOSD-increasing value makes D strictly
    // increasing on a thousand-point grid
    let mut rng = envgen::seeded_rng(5150);
    let mut seen = 0;
    while seen < 25 {
        let env = envgen::random_linear_env(&mut rng, CovSign::Positive);
        let rep = env.complementarity_check().unwrap();
        if rep.verdict != Complementarity::Complementary {
            continue;
        }
        seen += 1;
        let mut prev = env.career_value(0.0);
        for i in 1..=1000 {
            let d = env.career_value(i as f64 / 1000.0);
            assert!(d > prev, "D not strictly increasing in a complementary env");
            prev = d;
        }
    }
}

#[test]
fn career_value_guarantee_above_largest_root() {
    // for sampled interior wages, D stays strictly above D(qbar(w)) beyond the
    // largest root - the guarantee the improving construction relies on
    let mut rng = envgen::seeded_rng(99);
    for _ in 0..10 {
        let env = envgen::random_linear_env(&mut rng, CovSign::Positive);
        let a = uninformed::UninformedAnalysis::new(&env, 2048).unwrap();
        if !a.strategic_uncertainty() {
            continue;
        }
        for i in 1..10 {
            let w = a.w_low() + (a.w_high() - a.w_low()) * i as f64 / 10.0;
            let qt = match a.qbar(w) {
                Ok(q) => q,
                Err(_) => continue,
            };
            let dt = env.career_value(qt);
            let mut q = qt + 1e-3;
            while q < 1.0 {
                assert!(env.career_value(q) > dt - 1e-12);
                q += 0.02;
            }
        }
    }
}

#[test]
fn eb_direction_holds_for_implementing_policies() {
    // any policy that passes the full-implementation verdict satisfies the
    // aggressive-direction inequality at every scanned expectation
    let mut rng = envgen::seeded_rng(321);
    for _ in 0..8 {
        let env = envgen::random_linear_env(&mut rng, CovSign::Positive);
        let sol = uninformed::robust_policy(&env).unwrap();
        let shifted = oracle::approximating_policy_uninformed(&sol.policy, 1e-3).unwrap();
        let verdict = oracle::fully_implements(&env, &shifted, 1.0).unwrap();
        assert!(verdict.fully_implements);
        assert!(oracle::eb_direction_violation(&env, &shifted, 2000).unwrap() <= 1e-7);
    }
}

#[test]
fn greedy_tail_agrees_across_resolutions() {
    // greedy-tail uniqueness: two grid resolutions produce the same tail
    // within interpolation error, and knot steps shrink with the grid
    let env = envgen::informed_example();
    let coarse = informed::greedy_tail(
        &env,
        informed::InformedConfig {
            steps_per_gap: 1024,
        },
    )
    .unwrap();
    let fine = informed::greedy_tail(
        &env,
        informed::InformedConfig {
            steps_per_gap: 2048,
        },
    )
    .unwrap();
    let mut sup: f64 = 0.0;
    for i in 0..=500 {
        let w = coarse.w_l + (coarse.w_top - coarse.w_l) * i as f64 / 500.0;
        sup = sup.max((coarse.eval(w) - fine.eval(w)).abs());
    }
    assert!(sup < 1e-5, "resolutions disagree by {sup}");
    let max_step = |t: &informed::GreedyTail| {
        t.knots
            .windows(2)
            .map(|w| (w[0].1 - w[1].1).abs())
            .fold(0.0, f64::max)
    };
    let step_coarse = max_step(&coarse);
    let step_fine = max_step(&fine);
    assert!(
        step_fine < 0.75 * step_coarse,
        "continuity: knot jumps must shrink"
    );
    assert!(step_coarse < 0.02);
}

#[test]
fn purification_makes_the_target_equilibrium_pure() {
    let env = envgen::informed_example();
    let target = [0.4, 0.8];
    let sol = informed::robust_policy_informed_q(&env, &target).unwrap();
    let eps = 5e-4;
    let purified = sol.approximating_policy(eps, true).unwrap();
    // the purified policy carries no atom at the target thresholds
    for &(w_k, _) in &sol.atom_list {
        assert!(purified.atom_mass_at(w_k) == 0.0);
    }
    // and the tail still passes through the targets there
    let d_q = env.career_value_profile(&target);
    let w_bar_h = sol.lambdas[1] - d_q;
    let w_bar_l = sol.lambdas[0] - d_q;
    assert!((purified.tail(w_bar_h) - target[1]).abs() < 1e-9);
    assert!((purified.tail(w_bar_l) - target[0]).abs() < 1e-9);
    // full implementation survives purification, with no interior mixing at
    // the target thresholds in any record
    let verdict = oracle::fully_implements_informed(&env, &purified, &target).unwrap();
    assert!(
        verdict.fully_implements,
        "witnesses: {:?}",
        verdict.witnesses
    );
    let records = oracle::enumerate_informed(&env, &purified, 4000).unwrap();
    for r in &records {
        for (t, m) in r.thresholds.iter().zip(&r.mixing) {
            if (t - w_bar_h).abs() < 1e-9 || (t - w_bar_l).abs() < 1e-9 {
                if let Some(sigma) = m {
                    assert!(*sigma <= 1e-6 || *sigma >= 1.0 - 1e-6);
                }
            }
        }
    }
}

#[test]
fn shifted_q_policy_passes_oracle() {
    let env = envgen::informed_example();
    let target = [0.4, 0.8];
    let sol = informed::robust_policy_informed_q(&env, &target).unwrap();
    let shifted = sol.approximating_policy(5e-4, false).unwrap();
    let verdict = oracle::fully_implements_informed(&env, &shifted, &target).unwrap();
    assert!(
        verdict.fully_implements,
        "witnesses: {:?}",
        verdict.witnesses
    );
}

#[test]
fn informed_dispersion_criterion_equivalence() {
    // dispersion shows up in the optimal policy iff the career-value span
    // exceeds the effective-cost gap, on 200 random informed environments
    let mut rng = envgen::seeded_rng(1500);
    let mut with_dispersion = 0;
    for _ in 0..200 {
        let env = envgen::random_informed_binary_env(&mut rng);
        let span = env.career_value_profile(&[1.0, 1.0]) - env.career_value_profile(&[0.0, 0.0]);
        let gap = env.lambdas()[0] - env.lambdas()[1];
        let criterion = span > gap + 1e-10;
        let sol = informed::robust_policy_informed(&env).unwrap();
        let dispersed = sol.policy.support_bounds().1 - sol.policy.support_bounds().0 > 1e-9;
        assert_eq!(
            criterion, dispersed,
            "span {span:.6} vs gap {gap:.6} disagrees with the policy shape"
        );
        assert_eq!(sol.dispersion, criterion);
        if dispersed {
            with_dispersion += 1;
        }
    }
    // the draw must exercise both branches
    assert!(with_dispersion > 20 && with_dispersion < 180);
}

#[test]
fn multi_type_fd_wage_tops_the_candidate_continuum() {
    // the FD wage equals the max over the one-dimensional candidate profiles
    // (0,...,0,q,1,...,1), attained at a k-zeros corner
    let env = envgen::k3_assumption_env();
    let (w_low, w_high) = informed::critical_wages_informed(&env).unwrap();
    let lambdas = env.lambdas();
    let mut best_scan = w_low;
    for k in 0..3 {
        for i in 0..=200 {
            let q = i as f64 / 200.0;
            let mut profile = vec![1.0; 3];
            for p in profile.iter_mut().take(k) {
                *p = 0.0;
            }
            profile[k] = q;
            best_scan = best_scan.max(lambdas[k] - env.career_value_profile(&profile));
        }
    }
    assert!(
        best_scan <= w_high + 1e-9,
        "scan {best_scan} vs corner {w_high}"
    );
    assert!((best_scan - w_high).abs() < 1e-6);
}

#[test]
fn partial_target_stretch_keeps_the_outcome_on_target() {
    // the firing atom must stay at zero or the implemented probability drifts
    let env = envgen::linear_worked_example();
    let sol = uninformed::robust_policy_partial(&env, 0.5).unwrap();
    let shifted = sol.approximating_policy(1e-3).unwrap();
    assert!((shifted.cdf(0.0) - 0.5).abs() < 1e-12, "firing mass moved");
    let verdict = oracle::fully_implements(&env, &shifted, 0.5).unwrap();
    assert!(
        verdict.fully_implements,
        "witnesses: {:?}",
        verdict.witnesses
    );
}

#[test]
fn three_type_shifted_policy_passes_the_oracle() {
    let env = envgen::k3_assumption_env();
    let sol = informed::greedy_policy_multi(&env).unwrap();
    let shifted = sol.approximating_policy(1e-3, false).unwrap();
    let verdict = oracle::fully_implements_informed(&env, &shifted, &[1.0, 1.0, 1.0]).unwrap();
    assert!(
        verdict.fully_implements,
        "witnesses: {:?}",
        verdict.witnesses
    );
    // a wage below every break level leaves full shirking alive
    let low = WagePolicy::degenerate(0.5);
    let bad = oracle::fully_implements_informed(&env, &low, &[1.0, 1.0, 1.0]).unwrap();
    assert!(!bad.fully_implements);
    assert!(bad.witnesses.iter().any(|r| r.qs.iter().all(|&q| q == 0.0)));
}

#[test]
fn linear_career_value_matches_covariance_formula_on_random_envs() {
    let mut rng = envgen::seeded_rng(777);
    for _ in 0..20 {
        let env = envgen::random_linear_env(&mut rng, CovSign::Any);
        let (cov, _) = env.linear_criterion().unwrap();
        let p0 = env.shirk_rate()[0];
        let ep: f64 = env
            .prior()
            .iter()
            .zip(env.work_gain())
            .map(|(m, p)| m * p)
            .sum();
        for i in 0..=1000 {
            let q = i as f64 / 1000.0;
            let t = q / ((p0 + ep * q) * (1.0 - p0 - ep * q));
            assert!(
                (env.career_value(q) - cov * t).abs() < 1e-10,
                "formula mismatch at q={q}"
            );
        }
    }
}

#[test]
fn stretched_mass_point_policies_pass_the_oracle() {
    // the atomless stretch must break every equilibrium even when the
    // solution carries atoms (jumps become steep ramps strictly below them)
    let mut rng = envgen::seeded_rng(909);
    for i in 0..12 {
        let env = if i % 3 == 2 {
            envgen::random_deep_zigzag_env(&mut rng)
        } else {
            envgen::random_zigzag_env(&mut rng)
        };
        let sol = uninformed::robust_policy(&env).unwrap();
        assert!(!sol.mass_points.is_empty());
        let shifted = sol.approximating_policy(1e-3).unwrap();
        assert!(shifted.atoms().is_empty());
        let verdict = oracle::fully_implements(&env, &shifted, 1.0).unwrap();
        assert!(
            verdict.fully_implements,
            "env {i}: witnesses {:?}",
            verdict.witnesses
        );
    }
}

#[test]
fn solver_mean_matches_quadrature_of_the_career_value() {
    // with strictly increasing D, a change of variables turns the optimal
    // mean wage into lambda minus the integral of D over [0, 1]; Simpson
    // quadrature of D is fully independent of the policy machinery
    let mut rng = envgen::seeded_rng(1212);
    for _ in 0..15 {
        let env = envgen::random_linear_env(&mut rng, CovSign::Positive);
        let sol = uninformed::robust_policy(&env).unwrap();
        let n = 2000; // even
        let h = 1.0 / n as f64;
        let mut integral = env.career_value(0.0) + env.career_value(1.0);
        for i in 1..n {
            let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
            integral += weight * env.career_value(i as f64 * h);
        }
        integral *= h / 3.0;
        let expect = sol.lambda - integral;
        let mean = sol.policy.stats().mean;
        assert!(
            (mean - expect).abs() < 1e-6,
            "mean {mean} vs quadrature {expect}"
        );
    }
}

#[test]
fn four_type_machinery_runs_end_to_end() {
    use careerwage::environment::{Environment, EnvironmentSpec, InfoMode, ValueFn};
    let spec = EnvironmentSpec {
        types: (1..=4).map(|i| i.to_string()).collect(),
        prior: vec![0.25; 4],
        shirk_rate: vec![0.52; 4],
        work_gain: vec![0.08, 0.14, 0.2, 0.26],
        cost: vec![0.0888, 0.1494, 0.2076, 0.26],
        value_fn: ValueFn::Linear(vec![0.0, 0.3, 0.65, 1.0]),
        info_mode: InfoMode::Informed,
    };
    let env = Environment::new(spec).unwrap();
    assert_eq!(env.num_types(), 4);
    let (w_low, w_high) = informed::critical_wages_informed(&env).unwrap();
    assert!(w_high >= w_low);
    let report = informed::assumptions_check(&env).unwrap();
    assert_eq!(report.a2_ordered_partials.worst_sample.len(), 4);
    assert!(report.all_hold(), "{report}");
    let sol = informed::greedy_policy_multi(&env).unwrap();
    assert_eq!(sol.lambdas.len(), 4);
    assert!(sol.dispersion);
    assert_eq!(sol.atom_list.len(), 1);
    assert!(sol.binding_residual_max <= 1e-6);
    let shifted = sol.approximating_policy(1e-3, false).unwrap();
    let verdict = oracle::fully_implements_informed(&env, &shifted, &[1.0; 4]).unwrap();
    assert!(
        verdict.fully_implements,
        "witnesses: {:?}",
        verdict.witnesses
    );
}

#[test]
fn informed_solver_handles_kinked_values_and_type_dependent_shirk_rates() {
    use careerwage::environment::{Environment, InfoMode, ValueFn};
    // kinked but monotone market value
    let mut spec = envgen::informed_example().to_spec();
    spec.value_fn = ValueFn::Pwl(vec![(0.0, 0.0), (0.5, 0.4), (1.0, 1.0)]);
    let env = Environment::new(spec).unwrap();
    let sol = informed::robust_policy_informed(&env).unwrap();
    assert!(sol.binding_residual_max <= 1e-7);
    if sol.dispersion {
        let shifted = sol.approximating_policy(1e-3, false).unwrap();
        let verdict = oracle::fully_implements_informed(&env, &shifted, &[1.0, 1.0]).unwrap();
        assert!(
            verdict.fully_implements,
            "witnesses: {:?}",
            verdict.witnesses
        );
    }
    // type-dependent shirk rates: success carries information even at zero work
    let mut spec2 = envgen::informed_example().to_spec();
    spec2.shirk_rate = vec![0.08, 0.16];
    spec2.info_mode = InfoMode::Informed;
    let env2 = Environment::new(spec2).unwrap();
    let d00 = env2.career_value_profile(&[0.0, 0.0]);
    assert!(
        d00 > 0.0,
        "baseline beliefs must already separate the types"
    );
    let sol2 = informed::robust_policy_informed(&env2).unwrap();
    assert!((sol2.greedy.w_top - (sol2.lambdas[1] - d00)).abs() < 1e-9);
    assert!(sol2.binding_residual_max <= 1e-7);
    if sol2.dispersion {
        let shifted = sol2.approximating_policy(1e-3, false).unwrap();
        let verdict = oracle::fully_implements_informed(&env2, &shifted, &[1.0, 1.0]).unwrap();
        assert!(
            verdict.fully_implements,
            "witnesses: {:?}",
            verdict.witnesses
        );
    }
}
