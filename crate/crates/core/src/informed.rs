//! Solvers for the privately informed worker: the greedy tail policy via
//! backward root-finding on a wage grid, the robustly optimal policies for
//! full and partial working, the implementability test, and the multi-type
//! greedy construction gated on differentiability/ordering/spacing checks.

use serde::Serialize;
use thiserror::Error;

use crate::environment::{EnvError, Environment, InfoMode};
use crate::numeric::{bisect, pwl_eval};
use crate::policy::{PolicyError, TailWagePolicy, WagePolicy};

/// Dispersion margin for the informed strategic-uncertainty criterion.
const SU_TOL: f64 = 1e-10;
/// Bisection tolerance in the q coordinate.
const Q_TOL: f64 = 1e-10;
/// Binding-residual target for constructed policies.
const BINDING_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum InformedError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("operation needs a binary type space, got {0} types")]
    NotBinary(usize),
    #[error(
        "career value is not strictly monotone per type on the grid ({0}); \
         use the multi-type path with assumption checks"
    )]
    NotMonotone(String),
    #[error("target profile {0:?} invalid: {1}")]
    BadTarget(Vec<f64>, String),
    #[error("profile {0:?} is not implementable: Q_L = {1} <= R^G(w_bar_L) = {2} with w_bar_L = {3} inside supp(R^G)")]
    NotImplementable(Vec<f64>, f64, f64, f64),
    #[error("assumption checks failed:\n{0}")]
    AssumptionsFailed(Box<AssumptionReport>),
    #[error("{0}")]
    Numeric(String),
}

#[derive(Debug, Clone, Copy)]
pub struct InformedConfig {
    /// Grid steps per smallest effective-cost gap (so binary offset lookups
    /// land exactly on grid points).
    pub steps_per_gap: usize,
}

impl Default for InformedConfig {
    fn default() -> Self {
        InformedConfig {
            steps_per_gap: 1024,
        }
    }
}

/// Greedy tail policy data: knots of R^G from (w_l, 1) down to (w_top, 0).
#[derive(Debug, Clone)]
pub struct GreedyTail {
    /// (wage, tail) knots, wages ascending, tail strictly decreasing.
    pub knots: Vec<(f64, f64)>,
    pub w_l: f64,
    pub w_top: f64,
    pub grid_step: f64,
}

impl GreedyTail {
    pub fn eval(&self, w: f64) -> f64 {
        if w <= self.w_l {
            1.0
        } else if w >= self.w_top {
            0.0
        } else {
            pwl_eval(&self.knots, w).clamp(0.0, 1.0)
        }
    }

    /// Exact wage where the greedy tail crosses a level (None if outside).
    pub fn wage_at_level(&self, level: f64) -> Option<f64> {
        if !(0.0..=1.0).contains(&level) {
            return None;
        }
        if level >= 1.0 {
            return Some(self.w_l);
        }
        if level <= 0.0 {
            return Some(self.w_top);
        }
        // tail values descend as wages ascend
        let idx = self.knots.partition_point(|&(_, r)| r > level);
        if idx == 0 || idx >= self.knots.len() {
            return None;
        }
        let (w0, r0) = self.knots[idx - 1];
        let (w1, r1) = self.knots[idx];
        if (r0 - r1).abs() < 1e-15 {
            Some(w1)
        } else {
            Some(w0 + (r0 - level) * (w1 - w0) / (r0 - r1))
        }
    }
}

/// Informed-solver output.
#[derive(Debug, Clone)]
pub struct InformedSolution {
    /// Effective costs in internal order (decreasing).
    pub lambdas: Vec<f64>,
    /// PR wage: lambda_1 - D(1, ..., 1).
    pub w_low_tilde: f64,
    /// FD wage per the k-zeros corner formula, floored at the PR wage.
    pub w_high_tilde: f64,
    /// Whether dispersion is robustly optimal (strategic uncertainty).
    pub dispersion: bool,
    pub greedy: GreedyTail,
    pub policy: WagePolicy,
    /// Mass points of the policy at positive wages.
    pub atom_list: Vec<(f64, f64)>,
    /// Max |w + D(tails at offsets) - lambda_pivot| over the dispersed range.
    pub binding_residual_max: f64,
    /// Per-type working probabilities the policy implements.
    pub target: Vec<f64>,
    /// On-path threshold wages lambda_k - D(target), internal order.
    pub target_thresholds: Vec<f64>,
    pub grid_step: f64,
}

impl InformedSolution {
    pub fn greedy_tail_policy(&self) -> Result<TailWagePolicy, PolicyError> {
        let mut knots = vec![(self.greedy.w_l, 1.0)];
        knots.extend(
            self.greedy
                .knots
                .iter()
                .copied()
                .filter(|&(w, _)| w > self.greedy.w_l),
        );
        Ok(TailWagePolicy::new(WagePolicy::from_tail_curve(&knots)?))
    }

    /// Right-shifted (and purified) feasible approximation of the policy.
    pub fn approximating_policy(
        &self,
        eps: f64,
        purify: bool,
    ) -> Result<WagePolicy, crate::oracle::OracleError> {
        let positive_atoms: Vec<(f64, f64)> = self.atom_list.clone();
        let double_shift_below = if positive_atoms.len() >= 2 {
            Some(positive_atoms[positive_atoms.len() - 1].0)
        } else {
            None
        };
        let purify_at: Vec<(f64, f64)> = if purify {
            self.target_thresholds
                .iter()
                .copied()
                .zip(self.target.iter().copied())
                .collect()
        } else {
            Vec::new()
        };
        crate::oracle::approximating_policy_informed(
            &self.policy,
            eps,
            double_shift_below,
            &purify_at,
        )
    }
}

fn require_informed(env: &Environment) -> Result<(), InformedError> {
    if env.info_mode() != InfoMode::Informed {
        return Err(EnvError::WrongMode {
            expected: InfoMode::Informed,
            actual: env.info_mode(),
        }
        .into());
    }
    Ok(())
}

/// Critical wages (PR, FD): lambda_1 - D(1,...,1) and the best k-zeros corner
/// max_k lambda_k - D(0,...,0,1,...,1), floored at the PR wage.
pub fn critical_wages_informed(env: &Environment) -> Result<(f64, f64), InformedError> {
    require_informed(env)?;
    let k = env.num_types();
    let lambdas = env.lambdas();
    let ones = vec![1.0; k];
    let w_low = lambdas[0] - env.career_value_profile(&ones);
    let mut w_high = w_low;
    for zeros in 1..=k {
        let mut profile = vec![1.0; k];
        for q in profile.iter_mut().take(zeros) {
            *q = 0.0;
        }
        w_high = w_high.max(lambdas[zeros - 1] - env.career_value_profile(&profile));
    }
    Ok((w_low, w_high))
}

/// Verify strict per-coordinate monotonicity of the binary career value:
/// increasing in q_H, decreasing in q_L (sampled on a grid).
fn verify_binary_monotone(env: &Environment) -> Result<(), InformedError> {
    let n = 32;
    for i in 0..=n {
        let a = i as f64 / n as f64;
        let mut prev_h = env.career_value_profile(&[a, 0.0]);
        let mut prev_l = env.career_value_profile(&[0.0, a]);
        for j in 1..=n {
            let b = j as f64 / n as f64;
            let d_h = env.career_value_profile(&[a, b]);
            if d_h <= prev_h {
                return Err(InformedError::NotMonotone(format!(
                    "D({a}, q_H) not strictly increasing near q_H = {b}"
                )));
            }
            prev_h = d_h;
            let d_l = env.career_value_profile(&[b, a]);
            if d_l >= prev_l {
                return Err(InformedError::NotMonotone(format!(
                    "D(q_L, {a}) not strictly decreasing near q_L = {b}"
                )));
            }
            prev_l = d_l;
        }
    }
    Ok(())
}

/// Backward recursion for the greedy tail: at each wage the pivotal type's
/// equilibrium-breaking condition binds given the already-solved tail at the
/// offset wages. Offsets are looked up by monotone clamped interpolation; the
/// binary grid step divides the cost gap so those lookups are exact.
fn greedy_recursion(env: &Environment, cfg: InformedConfig) -> Result<GreedyTail, InformedError> {
    let k = env.num_types();
    let lambdas = env.lambdas();
    let lambda_piv = lambdas[k - 1];
    let offsets: Vec<f64> = lambdas.iter().map(|l| l - lambda_piv).collect();
    let min_gap = lambdas
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min);
    let h = min_gap / cfg.steps_per_gap as f64;
    let w_top = lambda_piv - env.career_value_profile(&vec![0.0; k]);

    // knots in descending wage order while building
    let mut desc: Vec<(f64, f64)> = vec![(w_top, 0.0)];
    let lookup = |desc: &Vec<(f64, f64)>, w: f64| -> f64 {
        if w >= w_top {
            return 0.0;
        }
        let last = desc[desc.len() - 1];
        if w <= last.0 {
            return last.1;
        }
        // binary search in descending wage order
        let idx = desc.partition_point(|&(kw, _)| kw > w);
        // desc[idx - 1].0 > w >= desc[idx].0
        let (w1, r1) = desc[idx - 1];
        let (w0, r0) = desc[idx];
        let t = if w1 > w0 { (w - w0) / (w1 - w0) } else { 0.5 };
        (r0 + t * (r1 - r0))
            .clamp(r1.min(r0), r0.max(r1))
            .clamp(0.0, 1.0)
    };

    let max_iters = cfg.steps_per_gap * 256;
    let mut j = 1usize;
    let w_l;
    loop {
        if j > max_iters {
            return Err(InformedError::Numeric(
                "greedy recursion did not reach the full-tail boundary".into(),
            ));
        }
        let w = w_top - j as f64 * h;
        let qs_known: Vec<f64> = offsets[..k - 1]
            .iter()
            .map(|off| lookup(&desc, w + off))
            .collect();
        let f = |x: f64| {
            let mut qs = qs_known.clone();
            qs.push(x);
            w + env.career_value_profile(&qs) - lambda_piv
        };
        if f(1.0) < 0.0 {
            // the binding tail would exceed 1: the support bottom sits in the
            // last cell; refine the wage where the x = 1 condition binds
            let w_prev = w_top - (j - 1) as f64 * h;
            let g = |wx: f64| {
                let mut qs: Vec<f64> = offsets[..k - 1]
                    .iter()
                    .map(|off| lookup(&desc, wx + off))
                    .collect();
                qs.push(1.0);
                wx + env.career_value_profile(&qs) - lambda_piv
            };
            let root = bisect(g, w, w_prev, 1e-13);
            w_l = root;
            desc.push((w_l, 1.0));
            break;
        }
        let x = bisect(f, 0.0, 1.0, Q_TOL);
        let prev_r = desc[desc.len() - 1].1;
        desc.push((w, x.max(prev_r)));
        j += 1;
    }

    let mut knots: Vec<(f64, f64)> = desc.into_iter().rev().collect();
    knots.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-15);
    Ok(GreedyTail {
        knots,
        w_l,
        w_top,
        grid_step: h,
    })
}

/// Greedy tail policy for the binary informed worker (Definition of the
/// greedy wage policy; unique, continuous, fully supported on [w_l, w_top]).
pub fn greedy_policy(env: &Environment) -> Result<TailWagePolicy, InformedError> {
    greedy_policy_with(env, InformedConfig::default())
}

pub fn greedy_policy_with(
    env: &Environment,
    cfg: InformedConfig,
) -> Result<TailWagePolicy, InformedError> {
    require_informed(env)?;
    if env.num_types() != 2 {
        return Err(InformedError::NotBinary(env.num_types()));
    }
    verify_binary_monotone(env)?;
    let tail = greedy_recursion(env, cfg)?;
    let mut knots = vec![(tail.w_l, 1.0)];
    knots.extend(tail.knots.iter().copied().filter(|&(w, _)| w > tail.w_l));
    Ok(TailWagePolicy::new(WagePolicy::from_tail_curve(&knots)?))
}

/// Greedy tail data (knots and support), shared by the policy builders.
pub fn greedy_tail(env: &Environment, cfg: InformedConfig) -> Result<GreedyTail, InformedError> {
    require_informed(env)?;
    greedy_recursion(env, cfg)
}

/// Max binding residual of the constructed policy over the dispersed range.
fn binding_residual(env: &Environment, policy: &WagePolicy, w_lo: f64, w_hi: f64) -> f64 {
    let k = env.num_types();
    let lambdas = env.lambdas();
    let lambda_piv = lambdas[k - 1];
    let offsets: Vec<f64> = lambdas.iter().map(|l| l - lambda_piv).collect();
    let atom_wages: Vec<f64> = policy.atoms().iter().map(|a| a.0).collect();
    let span = w_hi - w_lo;
    let guard = span * 1e-9 + 1e-12;
    let mut worst: f64 = 0.0;
    let samples = 1200;
    for i in 0..samples {
        let w = w_lo + span * (i as f64 + 0.5) / samples as f64;
        if atom_wages
            .iter()
            .any(|&a| offsets.iter().any(|off| (a - (w + off)).abs() <= guard))
        {
            continue;
        }
        let qs: Vec<f64> = offsets.iter().map(|off| policy.tail(w + off)).collect();
        worst = worst.max((w + env.career_value_profile(&qs) - lambda_piv).abs());
    }
    worst
}

/// Robustly optimal policy fully implementing full working (binary types):
/// a mass point at the PR wage plus the greedy tail above it.
pub fn robust_policy_informed(env: &Environment) -> Result<InformedSolution, InformedError> {
    robust_policy_informed_with(env, InformedConfig::default())
}

pub fn robust_policy_informed_with(
    env: &Environment,
    cfg: InformedConfig,
) -> Result<InformedSolution, InformedError> {
    require_informed(env)?;
    if env.num_types() != 2 {
        return Err(InformedError::NotBinary(env.num_types()));
    }
    verify_binary_monotone(env)?;
    build_full_working(env, cfg)
}

fn build_full_working(
    env: &Environment,
    cfg: InformedConfig,
) -> Result<InformedSolution, InformedError> {
    let k = env.num_types();
    let lambdas = env.lambdas();
    let (w_low, w_high) = critical_wages_informed(env)?;
    let dispersion = w_high > w_low + SU_TOL;
    let solve = |steps: usize| -> Result<InformedSolution, InformedError> {
        let tail = greedy_recursion(
            env,
            InformedConfig {
                steps_per_gap: steps,
            },
        )?;
        let policy = if dispersion {
            // R = 1 below the PR wage, greedy above: one atom at the PR wage
            let mut knots: Vec<(f64, f64)> = vec![(w_low, 1.0), (w_low, tail.eval(w_low))];
            knots.extend(tail.knots.iter().copied().filter(|&(w, _)| w > w_low));
            WagePolicy::from_tail_curve(&knots)?
        } else {
            WagePolicy::degenerate(w_low)
        };
        let atom_list: Vec<(f64, f64)> = policy
            .atoms()
            .iter()
            .copied()
            .filter(|&(w, _)| w > 0.0)
            .collect();
        let residual = if dispersion {
            binding_residual(env, &policy, w_low, tail.w_top)
        } else {
            0.0
        };
        let d_ones = env.career_value_profile(&vec![1.0; k]);
        Ok(InformedSolution {
            lambdas: lambdas.clone(),
            w_low_tilde: w_low,
            w_high_tilde: w_high,
            dispersion,
            greedy: tail,
            policy,
            atom_list,
            binding_residual_max: residual,
            target: vec![1.0; k],
            target_thresholds: lambdas.iter().map(|l| l - d_ones).collect(),
            grid_step: 0.0,
        })
    };
    let mut steps = cfg.steps_per_gap;
    let mut best = solve(steps)?;
    best.grid_step = best.greedy.grid_step;
    let mut attempt = 0;
    while best.binding_residual_max > 0.5 * BINDING_TOL && attempt < 2 {
        steps *= 2;
        best = solve(steps)?;
        best.grid_step = best.greedy.grid_step;
        attempt += 1;
    }
    Ok(best)
}

/// Implementability data for a target profile (Q_L, Q_H).
#[derive(Debug, Clone, Serialize)]
pub struct Implementability {
    pub implementable: bool,
    /// Low type's on-path threshold wage lambda_L - D(Q).
    pub w_bar_low: f64,
    /// Greedy tail at that threshold.
    pub greedy_at_threshold: f64,
    /// Whether the threshold lies in supp(R^G).
    pub in_greedy_support: bool,
}

/// A profile (Q_L, Q_H) with Q_H >= Q_L is NOT implementable iff
/// Q_L <= R^G(w_bar_L) and w_bar_L lies in the greedy support.
pub fn implementable(env: &Environment, target: &[f64]) -> Result<Implementability, InformedError> {
    implementable_with(env, target, InformedConfig::default())
}

pub fn implementable_with(
    env: &Environment,
    target: &[f64],
    cfg: InformedConfig,
) -> Result<Implementability, InformedError> {
    require_informed(env)?;
    if env.num_types() != 2 {
        return Err(InformedError::NotBinary(env.num_types()));
    }
    let (q_l, q_h) = validate_binary_target(target)?;
    verify_binary_monotone(env)?;
    let tail = greedy_recursion(env, cfg)?;
    let lambdas = env.lambdas();
    let w_bar_low = lambdas[0] - env.career_value_profile(&[q_l, q_h]);
    let greedy_at = tail.eval(w_bar_low);
    let in_support = w_bar_low >= tail.w_l - 1e-12 && w_bar_low <= tail.w_top + 1e-12;
    Ok(Implementability {
        implementable: !(q_l <= greedy_at + 1e-12 && in_support),
        w_bar_low,
        greedy_at_threshold: greedy_at,
        in_greedy_support: in_support,
    })
}

fn validate_binary_target(target: &[f64]) -> Result<(f64, f64), InformedError> {
    if target.len() != 2 {
        return Err(InformedError::BadTarget(
            target.to_vec(),
            "need exactly (Q_L, Q_H)".into(),
        ));
    }
    let (q_l, q_h) = (target[0], target[1]);
    if !(0.0..=1.0).contains(&q_l) || !(0.0..=1.0).contains(&q_h) {
        return Err(InformedError::BadTarget(
            target.to_vec(),
            "entries must lie in [0, 1]".into(),
        ));
    }
    if q_h < q_l {
        return Err(InformedError::BadTarget(
            target.to_vec(),
            "the high type must work at least as much (Q_H >= Q_L)".into(),
        ));
    }
    Ok((q_l, q_h))
}

/// Robustly optimal policy implementing the profile (Q_L, Q_H): the pointwise
/// max of the capped greedy tail and the target-keeping step tail. Shapes:
/// two atoms (Q_H > Q_L > 0), one atom (Q_H = Q_L > 0), none (Q_L = 0),
/// not counting the firing atom at wage zero when Q_H < 1.
pub fn robust_policy_informed_q(
    env: &Environment,
    target: &[f64],
) -> Result<InformedSolution, InformedError> {
    robust_policy_informed_q_with(env, target, InformedConfig::default())
}

pub fn robust_policy_informed_q_with(
    env: &Environment,
    target: &[f64],
    cfg: InformedConfig,
) -> Result<InformedSolution, InformedError> {
    require_informed(env)?;
    if env.num_types() != 2 {
        return Err(InformedError::NotBinary(env.num_types()));
    }
    let (q_l, q_h) = validate_binary_target(target)?;
    if q_h >= 1.0 && q_l >= 1.0 {
        return robust_policy_informed_with(env, cfg);
    }
    verify_binary_monotone(env)?;
    let imp = implementable_with(env, target, cfg)?;
    if !imp.implementable {
        return Err(InformedError::NotImplementable(
            target.to_vec(),
            q_l,
            imp.greedy_at_threshold,
            imp.w_bar_low,
        ));
    }
    let tail = greedy_recursion(env, cfg)?;
    let lambdas = env.lambdas();
    let d_q = env.career_value_profile(&[q_l, q_h]);
    let w_bar_h = lambdas[1] - d_q;
    let w_bar_l = lambdas[0] - d_q;
    let (w_low, w_high) = critical_wages_informed(env)?;

    // left-continuous keep tail (and its exact right limit) plus the capped
    // greedy tail, which is continuous
    let r_keep = |w: f64| -> f64 {
        if w <= 0.0 {
            1.0
        } else if w <= w_bar_h {
            q_h
        } else if w <= w_bar_l {
            q_l
        } else {
            0.0
        }
    };
    let r_keep_plus = |w: f64| -> f64 {
        if w < 0.0 {
            1.0
        } else if w < w_bar_h {
            q_h
        } else if w < w_bar_l {
            q_l
        } else {
            0.0
        }
    };
    let r_greedy = |w: f64| -> f64 { tail.eval(w).min(q_h) };
    let r_dag = |w: f64| -> f64 { r_keep(w).max(r_greedy(w)) };
    let r_dag_plus = |w: f64| -> f64 { r_keep_plus(w).max(r_greedy(w)) };

    // wages where the polyline can change shape
    let mut wages: Vec<f64> = vec![0.0, w_bar_h, w_bar_l, tail.w_l, tail.w_top];
    wages.extend(tail.knots.iter().map(|k| k.0));
    for level in [q_h, q_l] {
        if let Some(w) = tail.wage_at_level(level) {
            wages.push(w);
        }
    }
    wages.retain(|&w| w >= 0.0);
    wages.sort_by(|a, b| a.partial_cmp(b).unwrap());
    wages.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    // assemble tail knots with verticals at genuine jump wages
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(2 * wages.len());
    for (i, &w) in wages.iter().enumerate() {
        let left = if i == 0 { 1.0 } else { r_dag(w) };
        let right = if i + 1 < wages.len() {
            r_dag_plus(w)
        } else {
            0.0
        };
        let push = |knots: &mut Vec<(f64, f64)>, pt: (f64, f64)| {
            if knots
                .last()
                .is_none_or(|&(lw, lr)| (lw - pt.0).abs() > 1e-15 || (lr - pt.1).abs() > 1e-15)
            {
                knots.push(pt);
            }
        };
        push(&mut knots, (w, left));
        if right < left - 1e-12 {
            push(&mut knots, (w, right));
        }
    }
    if let Some(last) = knots.last_mut() {
        if last.1.abs() < 1e-9 {
            last.1 = 0.0;
        }
    }
    let policy = WagePolicy::from_tail_curve(&knots)?;
    let atom_list: Vec<(f64, f64)> = policy
        .atoms()
        .iter()
        .copied()
        .filter(|&(w, _)| w > 0.0)
        .collect();
    // the binding audit applies above the dispersion floor w_bar_l (below it
    // the keep constraints bind instead)
    let residual = if tail.w_top > w_bar_l {
        binding_residual(env, &policy, w_bar_l.max(tail.w_l), tail.w_top)
    } else {
        0.0
    };
    Ok(InformedSolution {
        target_thresholds: vec![w_bar_l, w_bar_h],
        lambdas,
        w_low_tilde: w_low,
        w_high_tilde: w_high,
        dispersion: w_high > w_low + SU_TOL,
        grid_step: tail.grid_step,
        greedy: tail,
        policy,
        atom_list,
        binding_residual_max: residual,
        target: vec![q_l, q_h],
    })
}

// ---------------------------------------------------------------------------
// Multi-type: assumption checks and the greedy construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionVerdict {
    pub holds: bool,
    /// Signed margin: positive means violated by this much.
    pub worst_violation: f64,
    /// Sample (working-probability profile) attaining the worst margin.
    pub worst_sample: Vec<f64>,
    pub detail: String,
}

/// Verdicts for the three multi-type assumptions: differentiable concavity,
/// increasing-in-type effort effects, and the two spacing inequalities.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub a1_smooth_concave: AssumptionVerdict,
    pub a2_ordered_partials: AssumptionVerdict,
    pub a3_narrow_value: AssumptionVerdict,
    pub a3_narrow_dispersion: AssumptionVerdict,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.a1_smooth_concave.holds
            && self.a2_ordered_partials.holds
            && self.a3_narrow_value.holds
            && self.a3_narrow_dispersion.holds
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, v) in [
            ("A1 smooth+concave", &self.a1_smooth_concave),
            ("A2 ordered partials", &self.a2_ordered_partials),
            ("A3 narrow value", &self.a3_narrow_value),
            ("A3 narrow dispersion", &self.a3_narrow_dispersion),
        ] {
            writeln!(
                f,
                "{name}: {} (worst {:+.3e} at {:?}; {})",
                if v.holds { "holds" } else { "VIOLATED" },
                v.worst_violation,
                v.worst_sample,
                v.detail
            )?;
        }
        Ok(())
    }
}

fn gradient(env: &Environment, q: &[f64], h: f64) -> Vec<f64> {
    let k = q.len();
    (0..k)
        .map(|i| {
            let up = (q[i] + h).min(1.0);
            let dn = (q[i] - h).max(0.0);
            let mut qu = q.to_vec();
            qu[i] = up;
            let mut qd = q.to_vec();
            qd[i] = dn;
            (env.career_value_profile(&qu) - env.career_value_profile(&qd)) / (up - dn)
        })
        .collect()
}

fn hessian(env: &Environment, q: &[f64], h: f64) -> Vec<Vec<f64>> {
    let k = q.len();
    let f = |qs: &[f64]| env.career_value_profile(qs);
    let mut out = vec![vec![0.0; k]; k];
    let f0 = f(q);
    for i in 0..k {
        for j in i..k {
            let v = if i == j {
                let mut qp = q.to_vec();
                qp[i] += h;
                let mut qm = q.to_vec();
                qm[i] -= h;
                (f(&qp) - 2.0 * f0 + f(&qm)) / (h * h)
            } else {
                let mut qpp = q.to_vec();
                qpp[i] += h;
                qpp[j] += h;
                let mut qpm = q.to_vec();
                qpm[i] += h;
                qpm[j] -= h;
                let mut qmp = q.to_vec();
                qmp[i] -= h;
                qmp[j] += h;
                let mut qmm = q.to_vec();
                qmm[i] -= h;
                qmm[j] -= h;
                (f(&qpp) - f(&qpm) - f(&qmp) + f(&qmm)) / (4.0 * h * h)
            };
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Largest eigenvalue of a small symmetric matrix (Jacobi sweeps).
#[allow(clippy::needless_range_loop)]
fn sym_max_eigenvalue(mat: &[Vec<f64>]) -> f64 {
    let n = mat.len();
    let mut a: Vec<Vec<f64>> = mat.to_vec();
    for _ in 0..64 {
        // find the largest off-diagonal element
        let (mut p, mut q, mut big) = (0, 1, 0.0_f64);
        for i in 0..n {
            for j in (i + 1)..n {
                if a[i][j].abs() > big {
                    big = a[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if big < 1e-14 {
            break;
        }
        let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        for i in 0..n {
            let aip = a[i][p];
            let aiq = a[i][q];
            a[i][p] = c * aip - s * aiq;
            a[i][q] = s * aip + c * aiq;
        }
        for j in 0..n {
            let apj = a[p][j];
            let aqj = a[q][j];
            a[p][j] = c * apj - s * aqj;
            a[q][j] = s * apj + c * aqj;
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::NEG_INFINITY, f64::max)
}

fn lattice(k: usize, levels: usize) -> impl Iterator<Item = Vec<f64>> {
    let total = (0..k).fold(1usize, |acc, _| acc * levels);
    (0..total).map(move |idx| {
        let mut rem = idx;
        (0..k)
            .map(|_| {
                let s = rem % levels;
                rem /= levels;
                s as f64 / (levels - 1) as f64
            })
            .collect()
    })
}

/// Nondecreasing chains (q_1 <= ... <= q_len) over a level grid.
fn chains(len: usize, levels: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::new();
        for c in &out {
            let start = c
                .last()
                .map_or(0, |&v| (v * (levels - 1) as f64).round() as usize);
            for s in start..levels {
                let mut c2 = c.clone();
                c2.push(s as f64 / (levels - 1) as f64);
                next.push(c2);
            }
        }
        out = next;
    }
    out
}

/// Grid verification of the three multi-type assumptions.
pub fn assumptions_check(env: &Environment) -> Result<AssumptionReport, InformedError> {
    require_informed(env)?;
    let k = env.num_types();
    let lambdas = env.lambdas();
    let levels = if k <= 3 { 9 } else { 5 };
    let fd_h = 1e-4;

    // A1: smoothness (stable second differences) and per-coordinate
    // quasi-concavity (no interior valley in any 1-D section). Joint
    // concavity of a posterior-based career value with a linear market value
    // fails structurally (its Hessian is indefinite wherever the numerator
    // gradient is not parallel to the success-probability gradient), so the
    // gate checks the coordinate-wise form the multi-type criterion uses;
    // the worst joint-Hessian eigenvalue is still reported as a diagnostic.
    let mut joint_eig = f64::NEG_INFINITY;
    let mut smooth_drift: f64 = 0.0;
    for q in lattice(k, 5) {
        let interior: Vec<f64> = q.iter().map(|&x| x.clamp(0.12, 0.88)).collect();
        let h1 = hessian(env, &interior, fd_h);
        let h2 = hessian(env, &interior, fd_h * 0.5);
        joint_eig = joint_eig.max(sym_max_eigenvalue(&h1));
        smooth_drift = smooth_drift.max(
            h1.iter()
                .flatten()
                .zip(h2.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    let mut a1 = AssumptionVerdict {
        holds: true,
        worst_violation: f64::NEG_INFINITY,
        worst_sample: vec![],
        detail: format!(
            "per-coordinate valley depth; smoothness drift {smooth_drift:.2e}, \
             worst joint-Hessian eigenvalue {joint_eig:+.3e}"
        ),
    };
    let section_n = 24;
    for q in lattice(k, levels) {
        for axis in 0..k {
            let mut vals = Vec::with_capacity(section_n + 1);
            for s in 0..=section_n {
                let mut qq = q.clone();
                qq[axis] = s as f64 / section_n as f64;
                vals.push(env.career_value_profile(&qq));
            }
            // quasi-concave section: no fall followed by a rise. Depth of the
            // worst valley = min(drop from the pre-trough peak, rebound).
            let mut peak = vals[0];
            let mut trough = vals[0];
            let mut valley_depth: f64 = 0.0;
            for &v in &vals[1..] {
                if v < trough {
                    trough = v;
                } else {
                    valley_depth = valley_depth.max((v - trough).min(peak - trough));
                }
                if v > peak {
                    peak = v;
                    trough = v;
                }
            }
            if valley_depth > a1.worst_violation {
                a1.worst_violation = valley_depth;
                a1.worst_sample = q.clone();
                a1.worst_sample[axis] = f64::NAN; // the scanned coordinate
            }
        }
    }
    a1.worst_violation = a1.worst_violation.max(smooth_drift * 1e-3 - 1e-6);
    a1.holds = a1.worst_violation <= 1e-9;

    // A2: D_K > 0 and partials increasing in the type index
    let mut a2 = AssumptionVerdict {
        holds: true,
        worst_violation: f64::NEG_INFINITY,
        worst_sample: vec![],
        detail: "min over (D_K, D_{k+1} - D_k) must stay positive".into(),
    };
    for q in lattice(k, levels) {
        let g = gradient(env, &q, fd_h);
        let mut margin = -g[k - 1];
        for i in 0..k - 1 {
            margin = margin.max(g[i] - g[i + 1]);
        }
        if margin > a2.worst_violation {
            a2.worst_violation = margin;
            a2.worst_sample = q.clone();
        }
    }
    a2.holds = a2.worst_violation <= 1e-9;

    // A3 first inequality: D(1,...,1) - D(chain, 1...) < lambda_1 - lambda_k
    let ones = vec![1.0; k];
    let d_ones = env.career_value_profile(&ones);
    let mut a3v = AssumptionVerdict {
        holds: true,
        worst_violation: f64::NEG_INFINITY,
        worst_sample: vec![],
        detail: "narrow career value over ordered chains".into(),
    };
    for chain_len in 1..k {
        for chain in chains(chain_len, 9) {
            if chain_len == 1 && chain[0] >= 1.0 {
                continue; // degenerate equality at the all-ones profile
            }
            let mut profile = ones.clone();
            profile[..chain_len].copy_from_slice(&chain);
            let margin =
                d_ones - env.career_value_profile(&profile) - (lambdas[0] - lambdas[chain_len - 1]);
            if margin > a3v.worst_violation {
                a3v.worst_violation = margin;
                a3v.worst_sample = profile;
            }
        }
    }
    a3v.holds = a3v.worst_violation <= -1e-9;

    // A3 second inequality: total career-value span < full gap + min gap
    let d_zeros = env.career_value_profile(&vec![0.0; k]);
    let min_gap = lambdas
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min);
    let span_margin = (d_ones - d_zeros) - ((lambdas[0] - lambdas[k - 1]) + min_gap);
    let a3d = AssumptionVerdict {
        holds: span_margin <= -1e-9,
        worst_violation: span_margin,
        worst_sample: vec![0.0; k],
        detail: "career-value span vs cost-gap budget".into(),
    };

    Ok(AssumptionReport {
        a1_smooth_concave: a1,
        a2_ordered_partials: a2,
        a3_narrow_value: a3v,
        a3_narrow_dispersion: a3d,
    })
}

/// Multi-type greedy solution (assumptions must pass): a mass point at the PR
/// wage and a continuous greedy tail up to lambda_K - D(0,...,0).
pub fn greedy_policy_multi(env: &Environment) -> Result<InformedSolution, InformedError> {
    greedy_policy_multi_with(env, InformedConfig::default())
}

pub fn greedy_policy_multi_with(
    env: &Environment,
    cfg: InformedConfig,
) -> Result<InformedSolution, InformedError> {
    require_informed(env)?;
    let report = assumptions_check(env)?;
    if !report.all_hold() {
        return Err(InformedError::AssumptionsFailed(Box::new(report)));
    }
    build_full_working(env, cfg)
}

/// On-path payment probability when wages in [w_bar_k, w_bar_{k-1}) realize:
/// types k and above work, the rest shirk.
pub fn payment_coefficients(env: &Environment) -> Vec<f64> {
    let k = env.num_types();
    (0..=k)
        .map(|region| {
            let mut r = 0.0;
            for j in 0..k {
                r += env.prior()[j]
                    * (env.shirk_rate()[j] + if j >= region { env.work_gain()[j] } else { 0.0 });
            }
            r
        })
        .collect()
}

/// Expected on-path wage bill of a policy implementing `target`, computed two
/// ways: directly region by region, and through the objective decomposition
/// V(R) + C_Q (tail integrals plus boundary terms).
pub fn expected_wage_informed(
    env: &Environment,
    policy: &WagePolicy,
    target: &[f64],
) -> Result<(f64, f64), InformedError> {
    require_informed(env)?;
    let k = env.num_types();
    if target.len() != k {
        return Err(InformedError::BadTarget(
            target.to_vec(),
            format!("need {k} entries"),
        ));
    }
    let lambdas = env.lambdas();
    let d_q = env.career_value_profile(target);
    let coeffs = payment_coefficients(env);
    let cap = policy.max_support() + 1.0;
    // region boundaries: w_bar_0 = cap (tail vanishes beyond the support),
    // w_bar_k = lambda_k - D(Q), w_bar_{K+1} = 0
    let mut bounds: Vec<f64> = Vec::with_capacity(k + 2);
    bounds.push(cap);
    for l in &lambdas {
        bounds.push(l - d_q);
    }
    bounds.push(0.0);

    let mut direct = 0.0;
    let mut v_of_r = 0.0;
    let mut c_q = 0.0;
    for region in 0..=k {
        // region index r uses coefficient coeffs[r] on [bounds[r+1], bounds[r])
        let a = bounds[region + 1].max(0.0);
        let b = bounds[region].max(a);
        let r_coef = coeffs[region.min(k)];
        let (_, bill) = policy.restricted_first_moments(a, b);
        direct += r_coef * bill;
        v_of_r += r_coef * policy.tail_integral(a, b);
        c_q += r_coef * (a * policy.tail(a) - b * policy.tail(b));
    }
    Ok((direct, v_of_r + c_q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvironmentSpec, ValueFn};

    pub(crate) fn informed_example_env() -> Environment {
        Environment::new(EnvironmentSpec {
            types: vec!["L".into(), "H".into()],
            prior: vec![0.5, 0.5],
            shirk_rate: vec![0.1, 0.1],
            work_gain: vec![0.3, 0.7],
            cost: vec![0.36, 0.7],
            value_fn: ValueFn::Linear(vec![0.0, 1.0]),
            info_mode: InfoMode::Informed,
        })
        .unwrap()
    }

    /// Hand-written D(0, x) for the example env, independent of the library.
    fn d_zero_x(x: f64) -> f64 {
        let s_l = 0.1;
        let s_h = 0.1 + 0.7 * x;
        let ps = 0.5 * (s_l + s_h);
        let mu_bar_h = 0.5 * s_h / ps;
        let mu_low_h = 0.5 * (1.0 - s_h) / (1.0 - ps);
        mu_bar_h - mu_low_h
    }

    #[test]
    fn critical_wages_example() {
        let env = informed_example_env();
        let (lo, hi) = critical_wages_informed(&env).unwrap();
        assert!((lo - (1.2 - 5.0 / 12.0)).abs() < 1e-12);
        assert!((hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn criterion_failure_floors_at_pr_wage() {
        // widen the cost gap so lambda_L - lambda_H >= D(1,1) - D(0,0)
        let mut spec = informed_example_env().to_spec();
        spec.cost = vec![0.45, 0.7]; // lambda_L = 1.5, gap 0.5 > 5/12
        let env = Environment::new(spec).unwrap();
        let (lo, hi) = critical_wages_informed(&env).unwrap();
        assert!((hi - lo).abs() < 1e-12);
        let sol = robust_policy_informed(&env).unwrap();
        assert!(!sol.dispersion);
        assert_eq!(sol.policy.atoms().len(), 1);
    }

    #[test]
    fn greedy_matches_standalone_bisection_at_0_9() {
        let env = informed_example_env();
        let tail = greedy_policy(&env).unwrap();
        // independent scalar bisection on the hand-written formula
        let target = crate::numeric::bisect(|x| d_zero_x(x) - 0.1, 0.0, 1.0, 1e-12);
        assert!((tail.eval(0.9) - target).abs() < 5e-4);
        assert!((target - 0.0609).abs() < 5e-4);
    }

    #[test]
    fn greedy_endpoint_properties() {
        let env = informed_example_env();
        let sol = robust_policy_informed(&env).unwrap();
        let g = &sol.greedy;
        assert!((g.eval(g.w_top) - 0.0).abs() < 1e-12);
        assert!((g.eval(g.w_l) - 1.0).abs() < 1e-12);
        assert!(
            g.w_l < sol.w_low_tilde,
            "greedy support must start below the PR wage"
        );
        // strictly decreasing knots on the support
        for w in g.knots.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
    }

    #[test]
    fn robust_policy_has_single_atom_at_pr_wage() {
        let env = informed_example_env();
        let sol = robust_policy_informed(&env).unwrap();
        assert!(sol.dispersion);
        assert_eq!(sol.atom_list.len(), 1);
        let (aw, am) = sol.atom_list[0];
        assert!((aw - sol.w_low_tilde).abs() < 1e-9);
        let expected_mass = 1.0 - sol.greedy.eval(sol.w_low_tilde + 0.5 * sol.grid_step);
        assert!((am - expected_mass).abs() < 1e-3);
        let (lo, hi) = sol.policy.support_bounds();
        assert!((lo - sol.w_low_tilde).abs() < 1e-9);
        assert!((hi - 1.0).abs() < 1e-6);
        assert!(sol.binding_residual_max <= BINDING_TOL);
    }

    #[test]
    fn eb_low_side_below_pivot_threshold() {
        // below the high type's on-path threshold (PR wage minus the cost
        // gap) the equilibrium-breaking expression stays under the pivot cost
        let env = informed_example_env();
        let sol = robust_policy_informed(&env).unwrap();
        let lam_h = sol.lambdas[1];
        let lam0 = sol.lambdas[0] - sol.lambdas[1];
        let w_bar_h = sol.w_low_tilde - lam0;
        for i in 1..20 {
            let w = w_bar_h - 0.02 * i as f64;
            if w < 0.0 {
                break;
            }
            let q_l = sol.policy.tail(w + lam0);
            let q_h = sol.policy.tail(w);
            assert!(w + env.career_value_profile(&[q_l, q_h]) < lam_h);
        }
    }

    #[test]
    fn implementability_examples() {
        let env = informed_example_env();
        assert!(implementable(&env, &[1.0, 1.0]).unwrap().implementable);
        // a threshold beyond the greedy support is always implementable
        let imp = implementable(&env, &[0.95, 0.98]).unwrap();
        assert!(imp.implementable);
        // Q_L = 0 with the low threshold inside the support fails
        let imp0 = implementable(&env, &[0.0, 0.5]).unwrap();
        assert_eq!(
            imp0.implementable,
            !(0.0 <= imp0.greedy_at_threshold + 1e-12 && imp0.in_greedy_support)
        );
    }

    #[test]
    fn q_policy_shapes() {
        let env = informed_example_env();
        // two atoms at both on-path thresholds
        let sol2 = robust_policy_informed_q(&env, &[0.4, 0.8]).unwrap();
        assert_eq!(sol2.atom_list.len(), 2, "atoms: {:?}", sol2.atom_list);
        let d_q = env.career_value_profile(&[0.4, 0.8]);
        assert!((sol2.atom_list[0].0 - (sol2.lambdas[1] - d_q)).abs() < 1e-9);
        assert!((sol2.atom_list[1].0 - (sol2.lambdas[0] - d_q)).abs() < 1e-9);
        // equal targets: a single atom at the low type's threshold
        let sol1 = robust_policy_informed_q(&env, &[0.6, 0.6]).unwrap();
        assert_eq!(sol1.atom_list.len(), 1, "atoms: {:?}", sol1.atom_list);
        // Q_L = 0 with an implementable profile: no positive-wage atom
        let mut q_h0 = 0.9;
        let sol0 = loop {
            match robust_policy_informed_q(&env, &[0.0, q_h0]) {
                Ok(s) => break s,
                Err(InformedError::NotImplementable(..)) => q_h0 -= 0.1,
                Err(e) => panic!("{e}"),
            }
        };
        assert_eq!(sol0.atom_list.len(), 0, "atoms: {:?}", sol0.atom_list);
        // only the high type works partially: two positive atoms, but no
        // firing mass since the high type works with probability one
        let sol_h1 = robust_policy_informed_q(&env, &[0.5, 1.0]).unwrap();
        assert_eq!(sol_h1.atom_list.len(), 2);
        assert!(sol_h1.policy.cdf(0.0) < 1e-12);
        // firing atom at zero carries the rest of the mass, and the dispersed
        // part spans [w_bar_H, w_top]
        assert!((sol0.policy.cdf(0.0) - (1.0 - q_h0)).abs() < 1e-9);
        let d0 = env.career_value_profile(&[0.0, q_h0]);
        let intervals = sol0.policy.support_intervals();
        let top_iv = intervals[intervals.len() - 1];
        assert!((top_iv.0 - (sol0.lambdas[1] - d0)).abs() < 1e-6);
        assert!((top_iv.1 - sol0.greedy.w_top).abs() < 1e-6);
    }

    #[test]
    fn q_policy_full_target_delegates() {
        let env = informed_example_env();
        let a = robust_policy_informed(&env).unwrap();
        let b = robust_policy_informed_q(&env, &[1.0, 1.0]).unwrap();
        for w in [0.8, 0.9, 0.95, 1.0] {
            assert!((a.policy.cdf(w) - b.policy.cdf(w)).abs() < 1e-12);
        }
    }

    /// The worked example widened to a 0.25 cost gap so the span inequality
    /// of the multi-type spacing assumption holds (gap < span < 2 gap).
    pub(crate) fn wide_gap_binary_env() -> Environment {
        let mut spec = informed_example_env().to_spec();
        spec.cost = vec![0.375, 0.7]; // lambda_L = 1.25, lambda_H = 1.0
        Environment::new(spec).unwrap()
    }

    #[test]
    fn multi_type_reduces_to_binary() {
        let env = wide_gap_binary_env();
        let rep = assumptions_check(&env).unwrap();
        assert!(rep.all_hold(), "{rep}");
        let multi = greedy_policy_multi(&env).unwrap();
        let binary = robust_policy_informed(&env).unwrap();
        let mut sup: f64 = 0.0;
        for i in 0..=200 {
            let w = 0.7 + 0.35 * i as f64 / 200.0;
            sup = sup.max((multi.policy.cdf(w) - binary.policy.cdf(w)).abs());
        }
        assert!(sup < 1e-6, "sup distance {sup}");
    }

    #[test]
    fn binary_worked_example_violates_multi_spacing() {
        // the binary solver handles it, but the multi-type gate refuses:
        // D(1,1) - D(0,0) = 5/12 exceeds twice the 0.2 cost gap
        let env = informed_example_env();
        let rep = assumptions_check(&env).unwrap();
        assert!(!rep.a3_narrow_dispersion.holds);
    }

    #[test]
    fn assumption_a3_flags_shrunk_gaps() {
        // push the effective costs together so the span inequality fails
        let mut spec = informed_example_env().to_spec();
        spec.cost = vec![0.305, 0.7]; // lambda_L ~ 1.0167: gap 0.0167 << span
        let env = Environment::new(spec).unwrap();
        let rep = assumptions_check(&env).unwrap();
        assert!(!rep.a3_narrow_dispersion.holds);
        assert!(matches!(
            greedy_policy_multi(&env),
            Err(InformedError::AssumptionsFailed(_))
        ));
    }

    #[test]
    fn expected_wage_decomposition_agrees() {
        let env = informed_example_env();
        let sol = robust_policy_informed(&env).unwrap();
        let (direct, decomposed) = expected_wage_informed(&env, &sol.policy, &[1.0, 1.0]).unwrap();
        assert!(
            (direct - decomposed).abs() < 1e-7,
            "{direct} vs {decomposed}"
        );
        // sanity: on-path bill is the policy mean scaled by pay probability
        let pay_prob: f64 = env
            .prior()
            .iter()
            .zip(env.shirk_rate())
            .zip(env.work_gain())
            .map(|((m, p0), p)| m * (p0 + p))
            .sum();
        let mean = sol.policy.stats().mean;
        assert!((direct - pay_prob * mean).abs() < 1e-7);
    }

    #[test]
    fn rejects_nonmonotone_value_function() {
        let mut spec = informed_example_env().to_spec();
        spec.value_fn = ValueFn::Pwl(vec![(0.0, 0.5), (0.5, 0.1), (1.0, 0.6)]);
        let env = Environment::new(spec).unwrap();
        assert!(matches!(
            greedy_policy(&env),
            Err(InformedError::NotMonotone(_))
        ));
    }
}
