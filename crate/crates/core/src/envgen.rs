//! Named example environments and seeded random environment families,
//! shared by the comparative sweeps, the property suites, and the CLI.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::environment::{Environment, EnvironmentSpec, InfoMode, ValueFn};

/// Binary linear worked example: uniform prior, v = mu_H, shirk rate 0.1,
/// work gains (0.7, 0.3), effective cost 1. Career value 10q/((1+5q)(9-5q)),
/// PR wage 7/12, FD wage 1.
pub fn linear_worked_example() -> Environment {
    Environment::new(EnvironmentSpec {
        types: vec!["H".into(), "L".into()],
        prior: vec![0.5, 0.5],
        shirk_rate: vec![0.1, 0.1],
        work_gain: vec![0.7, 0.3],
        cost: vec![0.5, 0.5],
        value_fn: ValueFn::Linear(vec![1.0, 0.0]),
        info_mode: InfoMode::Uninformed,
    })
    .expect("worked example environment is valid")
}

/// The informed worked example: lambda_H = 1, lambda_L = 1.2, v = mu_H.
pub fn informed_example() -> Environment {
    Environment::new(EnvironmentSpec {
        types: vec!["L".into(), "H".into()],
        prior: vec![0.5, 0.5],
        shirk_rate: vec![0.1, 0.1],
        work_gain: vec![0.3, 0.7],
        cost: vec![0.36, 0.7],
        value_fn: ValueFn::Linear(vec![0.0, 1.0]),
        info_mode: InfoMode::Informed,
    })
    .expect("informed example environment is valid")
}

/// A three-type informed environment that passes the multi-type assumption
/// checks: high shirk rate (keeps every career-value section single-peaked),
/// gently increasing work gains, and effective-cost gaps squeezed between the
/// career-value span and the span-plus-minimum-gap budget.
pub fn k3_assumption_env() -> Environment {
    Environment::new(EnvironmentSpec {
        types: vec!["1".into(), "2".into(), "3".into()],
        prior: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        shirk_rate: vec![0.52, 0.52, 0.52],
        work_gain: vec![0.1, 0.2, 0.3],
        cost: vec![0.112, 0.213, 0.3],
        value_fn: ValueFn::Linear(vec![0.0, 0.5, 1.0]),
        info_mode: InfoMode::Informed,
    })
    .expect("three-type assumption environment is valid")
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sorted_distinct(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64, min_gap: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(lo..hi)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if v.windows(2).all(|w| w[1] - w[0] >= min_gap) {
            return v;
        }
    }
}

fn random_prior(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.25..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut prior: Vec<f64> = raw.iter().map(|x| x / sum).collect();
    // keep the sum exactly 1 at f64 precision
    let correction: f64 = 1.0 - prior.iter().sum::<f64>();
    prior[0] += correction;
    prior
}

/// How the market value weights relate to productivity in a random draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovSign {
    /// u strictly co-sorted with p: Cov(u, p) > 0.
    Positive,
    /// u randomly permuted (any sign) or constant (exactly zero).
    Any,
}

/// Random uninformed linear environment with a type-independent shirk rate.
/// With `CovSign::Positive` the draw has strictly positive skill-wage
/// covariance; validity (lambda above the top career value) is enforced by
/// resampling.
pub fn random_linear_env(rng: &mut ChaCha8Rng, cov: CovSign) -> Environment {
    loop {
        let k = rng.gen_range(2..=5usize);
        let p0: f64 = rng.gen_range(0.02..0.3);
        let p_max = (1.0 - p0 - 0.03).min(0.9);
        let p = sorted_distinct(rng, k, 0.05, p_max, 0.25 / k as f64);
        let mut u = sorted_distinct(rng, k, 0.05, 2.0, 0.3 / k as f64);
        match cov {
            CovSign::Positive => {}
            CovSign::Any => {
                let style = rng.gen_range(0..3u8);
                if style == 0 {
                    let level = rng.gen_range(0.2..1.5);
                    u = vec![level; k];
                } else {
                    // random permutation
                    for i in (1..k).rev() {
                        let j = rng.gen_range(0..=i);
                        u.swap(i, j);
                    }
                }
            }
        }
        let prior = random_prior(rng, k);
        let c_level = rng.gen_range(0.4..1.2);
        let spec = EnvironmentSpec {
            types: (0..k).map(|i| format!("t{i}")).collect(),
            prior,
            shirk_rate: vec![p0; k],
            work_gain: p,
            cost: vec![c_level; k],
            value_fn: ValueFn::Linear(u),
            info_mode: InfoMode::Uninformed,
        };
        let Ok(env) = Environment::new(spec) else {
            continue;
        };
        let (cov_value, _) = env.linear_criterion().unwrap();
        if cov == CovSign::Positive && cov_value < 1e-5 {
            continue;
        }
        if cov == CovSign::Any && cov_value.abs() < 1e-6 && cov_value != 0.0 {
            continue; // dodge the numerical boundary; exact zero stays in
        }
        // maintained assumption: lambda above every career value
        let lambda = env.lambda_uninformed();
        let max_d = (0..=512)
            .map(|i| env.career_value(i as f64 / 512.0))
            .fold(f64::NEG_INFINITY, f64::max);
        if lambda > max_d + 0.05 {
            return env;
        }
    }
}

/// Random informed binary environment with v = u_H * mu_H, type-independent
/// shirk rate, strictly ordered effective costs, per-type monotone career
/// value, and lambda_H above the top career value.
pub fn random_informed_binary_env(rng: &mut ChaCha8Rng) -> Environment {
    loop {
        let p0: f64 = rng.gen_range(0.03..0.25);
        let p_l: f64 = rng.gen_range(0.15..0.45);
        let p_h = rng.gen_range((p_l + 0.15).max(0.5)..(1.0 - p0 - 0.02).max(0.52));
        if p_h <= p_l + 0.1 || p0 + p_h > 1.0 {
            continue;
        }
        let lambda_h = rng.gen_range(0.8..1.3);
        let gap = rng.gen_range(0.02..0.6);
        let lambda_l = lambda_h + gap;
        let u_h = rng.gen_range(0.5..1.6);
        let spec = EnvironmentSpec {
            types: vec!["L".into(), "H".into()],
            prior: random_prior(rng, 2),
            shirk_rate: vec![p0, p0],
            work_gain: vec![p_l, p_h],
            cost: vec![lambda_l * p_l, lambda_h * p_h],
            value_fn: ValueFn::Linear(vec![0.0, u_h]),
            info_mode: InfoMode::Informed,
        };
        let Ok(env) = Environment::new(spec) else {
            continue;
        };
        // maintained assumption and per-type monotonicity on a coarse grid
        let mut max_d = f64::NEG_INFINITY;
        let mut monotone = true;
        let n = 16;
        for i in 0..=n {
            let ql = i as f64 / n as f64;
            let mut prev = f64::NEG_INFINITY;
            for j in 0..=n {
                let qh = j as f64 / n as f64;
                let d = env.career_value_profile(&[ql, qh]);
                max_d = max_d.max(d);
                if d <= prev {
                    monotone = false;
                }
                prev = d;
            }
        }
        if monotone && lambda_h > max_d + 0.03 {
            return env;
        }
    }
}

/// Random binary piecewise-linear environment whose career value rises to a
/// local maximum, dips to a strictly positive local minimum, then rises to
/// D(1): the construction that puts a mass point in the optimal policy.
///
/// The returned environment is verified (on the career-value grid) to have an
/// interior local minimum strictly between min D and D(1), which is exactly
/// the condition for a jump of the binding-constraint inversion.
pub fn random_zigzag_env(rng: &mut ChaCha8Rng) -> Environment {
    loop {
        let p0 = rng.gen_range(0.06..0.14);
        let p_l = rng.gen_range(0.2..0.38);
        let p_h = rng.gen_range(0.55..0.78);
        let mu_h1 = {
            // success posterior at q = 1 under the uniform prior
            let s_l = p0 + p_l;
            let s_h = p0 + p_h;
            s_h / (s_l + s_h)
        };
        let v0 = rng.gen_range(0.05..0.2);
        let reach = mu_h1 - 0.5;
        let x1 = 0.5 + reach * rng.gen_range(0.15..0.4);
        let x2 = 0.5 + reach * rng.gen_range(0.55..0.8);
        if x2 - x1 < 0.2 * reach {
            continue;
        }
        let hump = rng.gen_range(0.25..0.5);
        let dip = rng.gen_range(0.08..0.5 * hump);
        let rise = rng.gen_range(0.2..0.45);
        // top knot so that v at the q = 1 posterior sits `rise` above the dip
        let top = v0 + dip + rise * (1.0 - x2) / (mu_h1 - x2);
        let e_p = 0.5 * (p_l + p_h);
        let c = e_p * (v0 + hump + rng.gen_range(0.1..0.4));
        let spec = EnvironmentSpec {
            types: vec!["L".into(), "H".into()],
            prior: vec![0.5, 0.5],
            shirk_rate: vec![p0, p0],
            work_gain: vec![p_l, p_h],
            cost: vec![c, c],
            value_fn: ValueFn::Pwl(vec![
                (0.0, v0),
                (0.5, v0),
                (x1, v0 + hump),
                (x2, v0 + dip),
                (1.0, top),
            ]),
            info_mode: InfoMode::Uninformed,
        };
        let Ok(env) = Environment::new(spec) else {
            continue;
        };
        let d = env.career_value_fn(2048);
        let lambda = env.lambda_uninformed();
        if lambda <= d.max_value() + 0.03 {
            continue;
        }
        let d1 = d.eval(1.0);
        // an interior local minimum strictly inside (min D, D(1)) forces a
        // jump of the binding inversion, hence a mass point
        let has_interior_shelf = d
            .local_minima()
            .iter()
            .any(|&(_, v)| v > d.min_value() + 1e-4 && v < d1 - 1e-4);
        if has_interior_shelf && d.min_value() < d1 - 1e-3 {
            return env;
        }
    }
}

/// Like [`random_zigzag_env`] but with the dip descending below the career
/// value at zero, so the global argmin is interior. The deterministic wage
/// that breaks full shirking then sits strictly below the top of the optimal
/// support, which makes the step-policy families of the desk-scale searches
/// non-empty.
pub fn random_deep_zigzag_env(rng: &mut ChaCha8Rng) -> Environment {
    loop {
        let p0: f64 = rng.gen_range(0.06..0.14);
        let p_l = rng.gen_range(0.2..0.38);
        let p_h = rng.gen_range(0.55..0.78);
        let mu_h1 = {
            let s_l = p0 + p_l;
            let s_h = p0 + p_h;
            s_h / (s_l + s_h)
        };
        let v0: f64 = rng.gen_range(0.3..0.5);
        let reach = mu_h1 - 0.5;
        let x1 = 0.5 + reach * rng.gen_range(0.15..0.4);
        let x2 = 0.5 + reach * rng.gen_range(0.55..0.8);
        if x2 - x1 < 0.2 * reach {
            continue;
        }
        let hump = rng.gen_range(0.2..0.4);
        let below = rng.gen_range(0.08..(v0 - 0.05).min(0.3));
        let rise = rng.gen_range(0.25..0.5);
        let valley = v0 - below;
        let top = valley + rise * (1.0 - x2) / (mu_h1 - x2);
        let e_p = 0.5 * (p_l + p_h);
        let c = e_p * (v0 + hump + rng.gen_range(0.1..0.4));
        let spec = EnvironmentSpec {
            types: vec!["L".into(), "H".into()],
            prior: vec![0.5, 0.5],
            shirk_rate: vec![p0, p0],
            work_gain: vec![p_l, p_h],
            cost: vec![c, c],
            value_fn: ValueFn::Pwl(vec![
                (0.0, v0),
                (0.5, v0),
                (x1, v0 + hump),
                (x2, valley),
                (1.0, top),
            ]),
            info_mode: InfoMode::Uninformed,
        };
        let Ok(env) = Environment::new(spec) else {
            continue;
        };
        let d = env.career_value_fn(2048);
        let lambda = env.lambda_uninformed();
        if lambda <= d.max_value() + 0.03 {
            continue;
        }
        let d1 = d.eval(1.0);
        // interior global argmin strictly below D(0), with dispersion
        if d.argmin_q() > 0.05 && d.min_value() < -1e-3 && d.min_value() < d1 - 1e-3 {
            return env;
        }
    }
}
