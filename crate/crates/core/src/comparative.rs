//! Comparative statics of the robustly optimal policy: dispersion against
//! skill-wage covariance, skill-premium steepening, and discounting.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::environment::{Environment, ValueFn};
use crate::policy::more_dispersed;
use crate::uninformed::{self, SolverError, UninformedSolution};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("covariance and premium axes need a linear environment with uniform prior")]
    NotLinearUniform,
    #[error("the base environment has no wage dispersion to compare against")]
    NoBaseDispersion,
    #[error("axis values must be strictly increasing")]
    AxisNotIncreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    /// Convex mixture from the reversed to the sorted assignment of market
    /// values to skills (uniform prior keeps variances controlled).
    Covariance,
    /// Mean-preserving steepening of the market value profile.
    PremiumSlope,
    /// Scaling of the post-employment value function.
    Discount,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub covariance: Option<f64>,
    pub w_low: f64,
    pub w_high: f64,
    pub range: f64,
    pub variance: f64,
    pub mean: f64,
    pub atom_count: usize,
    pub binding_residual_max: f64,
    /// Populated when the family left the valid parameter region here.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    /// Pairwise verdicts: is point i+1 more dispersed than point i?
    pub more_dispersed_pairwise: Vec<bool>,
}

impl SweepResult {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), std::io::Error> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "axis_value",
            "covariance",
            "w_low",
            "w_high",
            "range",
            "variance",
            "mean",
            "atoms",
            "binding_residual_max",
            "error",
        ])?;
        for p in &self.points {
            wtr.write_record([
                format!("{:.17}", p.axis_value),
                p.covariance.map_or(String::new(), |c| format!("{c:.17}")),
                format!("{:.17}", p.w_low),
                format!("{:.17}", p.w_high),
                format!("{:.17}", p.range),
                format!("{:.17}", p.variance),
                format!("{:.17}", p.mean),
                p.atom_count.to_string(),
                format!("{:.3e}", p.binding_residual_max),
                p.error.clone().unwrap_or_default(),
            ])?;
        }
        wtr.flush()
    }
}

fn point_from_solution(axis_value: f64, cov: Option<f64>, sol: &UninformedSolution) -> SweepPoint {
    let stats = sol.policy.stats();
    SweepPoint {
        axis_value,
        covariance: cov,
        w_low: sol.w_low,
        w_high: sol.w_high,
        range: sol.w_high - sol.w_low,
        variance: stats.variance,
        mean: stats.mean,
        atom_count: sol.mass_points.len(),
        binding_residual_max: sol.binding_residual_max,
        error: None,
    }
}

fn failed_point(axis_value: f64, reason: String) -> SweepPoint {
    SweepPoint {
        axis_value,
        covariance: None,
        w_low: f64::NAN,
        w_high: f64::NAN,
        range: f64::NAN,
        variance: f64::NAN,
        mean: f64::NAN,
        atom_count: 0,
        binding_residual_max: f64::NAN,
        error: Some(reason),
    }
}

fn env_for_axis_value(
    base: &Environment,
    axis: SweepAxis,
    theta: f64,
) -> Result<Environment, String> {
    match axis {
        SweepAxis::Discount => base.with_discounted_value(theta).map_err(|e| e.to_string()),
        SweepAxis::Covariance => {
            let u = match base.value_fn() {
                ValueFn::Linear(u) => u.clone(),
                _ => return Err("covariance axis needs a linear value".into()),
            };
            // theta = 1: market values perfectly co-sorted with productivity;
            // theta = 0: anti-sorted (the worst permutation)
            let k = u.len();
            let mut u_vals = u.clone();
            u_vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut by_p: Vec<usize> = (0..k).collect();
            by_p.sort_by(|&a, &b| {
                base.work_gain()[a]
                    .partial_cmp(&base.work_gain()[b])
                    .unwrap()
            });
            let mut mixed = vec![0.0; k];
            for (rank, &ty) in by_p.iter().enumerate() {
                let aligned = u_vals[rank];
                let reversed = u_vals[k - 1 - rank];
                mixed[ty] = (1.0 - theta) * reversed + theta * aligned;
            }
            base.with_linear_weights(mixed).map_err(|e| e.to_string())
        }
        SweepAxis::PremiumSlope => {
            let u = match base.value_fn() {
                ValueFn::Linear(u) => u.clone(),
                _ => return Err("premium axis needs a linear value".into()),
            };
            let mean: f64 = base.prior().iter().zip(&u).map(|(m, x)| m * x).sum();
            let steep: Vec<f64> = u
                .iter()
                .map(|x| mean + (1.0 + theta) * (x - mean))
                .collect();
            if steep.iter().any(|&x| x < 0.0) {
                return Err(format!("steepening {theta} makes a market value negative"));
            }
            base.with_linear_weights(steep).map_err(|e| e.to_string())
        }
    }
}

/// Solve the robust policy along a parameter axis and record dispersion.
///
/// Axis values must be strictly increasing. Points where the family leaves
/// the valid region carry an error string instead of statistics.
pub fn sweep(
    base: &Environment,
    axis: SweepAxis,
    axis_values: &[f64],
) -> Result<SweepResult, SweepError> {
    if axis_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SweepError::AxisNotIncreasing);
    }
    if matches!(axis, SweepAxis::Covariance | SweepAxis::PremiumSlope) {
        if !base.is_linear_uniform_shirk() {
            return Err(SweepError::NotLinearUniform);
        }
        let k = base.num_types() as f64;
        if matches!(axis, SweepAxis::Covariance)
            && base.prior().iter().any(|&m| (m - 1.0 / k).abs() > 1e-9)
        {
            return Err(SweepError::NotLinearUniform);
        }
    }
    let points: Vec<SweepPoint> = axis_values
        .par_iter()
        .map(|&theta| match env_for_axis_value(base, axis, theta) {
            Err(reason) => failed_point(theta, reason),
            Ok(env) => match uninformed::robust_policy(&env) {
                Err(e) => failed_point(theta, e.to_string()),
                Ok(sol) => {
                    let cov = env.linear_criterion().ok().map(|(c, _)| c);
                    point_from_solution(theta, cov, &sol)
                }
            },
        })
        .collect();

    // pairwise dispersion verdicts on successfully solved adjacent points
    let mut verdicts = Vec::with_capacity(points.len().saturating_sub(1));
    for i in 0..points.len().saturating_sub(1) {
        let verdict = if points[i].error.is_some() || points[i + 1].error.is_some() {
            false
        } else {
            let (Ok(lo), Ok(hi)) = (
                env_for_axis_value(base, axis, points[i].axis_value)
                    .map_err(SweepError::from_reason)
                    .and_then(|e| uninformed::robust_policy(&e).map_err(Into::into)),
                env_for_axis_value(base, axis, points[i + 1].axis_value)
                    .map_err(SweepError::from_reason)
                    .and_then(|e| uninformed::robust_policy(&e).map_err(Into::into)),
            ) else {
                verdicts.push(false);
                continue;
            };
            more_dispersed(&hi.policy, &lo.policy)
        };
        verdicts.push(verdict);
    }
    Ok(SweepResult {
        axis,
        points,
        more_dispersed_pairwise: verdicts,
    })
}

impl SweepError {
    fn from_reason(reason: String) -> Self {
        SweepError::Solver(SolverError::Numeric(reason))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen;

    #[test]
    fn discount_sweep_scales_range_and_variance() {
        let base = envgen::linear_worked_example();
        let deltas = [0.25, 0.5, 0.75, 1.0];
        let result = sweep(&base, SweepAxis::Discount, &deltas).unwrap();
        let base_range = 5.0 / 12.0;
        let full = &result.points[3];
        assert!((full.range - base_range).abs() < 1e-9);
        for p in &result.points {
            assert!(p.error.is_none());
            // range scales linearly, variance quadratically
            assert!((p.range - p.axis_value * base_range).abs() < 1e-9);
            let ratio = p.variance / full.variance;
            assert!(
                (ratio - p.axis_value * p.axis_value).abs() < 1e-7,
                "variance ratio {ratio} at delta {}",
                p.axis_value
            );
        }
        assert!(result.more_dispersed_pairwise.iter().all(|&b| b));
    }

    #[test]
    fn discount_identity_point_matches_base() {
        let base = envgen::linear_worked_example();
        let result = sweep(&base, SweepAxis::Discount, &[1.0]).unwrap();
        let sol = crate::uninformed::robust_policy(&base).unwrap();
        let stats = sol.policy.stats();
        assert!((result.points[0].mean - stats.mean).abs() < 1e-12);
        assert!((result.points[0].variance - stats.variance).abs() < 1e-12);
    }

    #[test]
    fn covariance_sweep_is_monotone() {
        let base = envgen::linear_worked_example(); // u = (1, 0) listed H first; sorted handles order
        let thetas = [0.6, 0.8, 1.0];
        let result = sweep(&base, SweepAxis::Covariance, &thetas).unwrap();
        for p in &result.points {
            assert!(p.error.is_none(), "{:?}", p.error);
        }
        for w in result.points.windows(2) {
            assert!(w[1].covariance.unwrap() > w[0].covariance.unwrap());
            assert!(w[1].range > w[0].range);
            assert!(w[1].variance > w[0].variance);
        }
        assert!(result.more_dispersed_pairwise.iter().all(|&b| b));
    }

    #[test]
    fn premium_sweep_steepens_and_rejects_invalid_points() {
        // an interior market value profile leaves steepening room
        let base = envgen::linear_worked_example()
            .with_linear_weights(vec![1.0, 0.5])
            .unwrap();
        // theta = 2.5 drives the low market value below zero: rejected
        let result = sweep(&base, SweepAxis::PremiumSlope, &[0.0, 0.5, 2.5]).unwrap();
        assert!(result.points[0].error.is_none());
        assert!(result.points[1].error.is_none());
        assert!(result.points[2].error.is_some());
        assert!(result.points[1].range > result.points[0].range);
        // single-crossing construction preserves the mean of u and raises cov
        assert!(result.points[1].covariance.unwrap() > result.points[0].covariance.unwrap());
    }

    #[test]
    fn covariance_axis_rejects_nonuniform_prior() {
        let mut spec = envgen::linear_worked_example().to_spec();
        spec.prior = vec![0.6, 0.4];
        let env = crate::environment::Environment::new(spec).unwrap();
        assert!(matches!(
            sweep(&env, SweepAxis::Covariance, &[0.5, 1.0]),
            Err(SweepError::NotLinearUniform)
        ));
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let result = sweep(
            &envgen::linear_worked_example(),
            SweepAxis::Discount,
            &[0.5, 1.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        result.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
