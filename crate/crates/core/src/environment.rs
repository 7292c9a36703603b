//! Model primitives: type space, monitoring rates, market value functions,
//! Bayesian posteriors, career values, and the structural diagnostics
//! (skill-effort complementarity, skill-wage covariance).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{golden_min, pwl_eval};

/// Default resolution for cached career-value grids.
pub const DEFAULT_GRID_N: usize = 4096;

/// Weak-inequality tolerance for stochastic-dominance comparisons.
const FOSD_WEAK_TOL: f64 = 1e-12;
/// Minimum gap that counts as a strict dominance inequality.
const FOSD_STRICT_GAP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment needs at least two types, got {0}")]
    TooFewTypes(usize),
    #[error("profile `{0}` has length {1}, expected {2}")]
    LengthMismatch(&'static str, usize, usize),
    #[error("prior must be strictly positive and sum to 1 within 1e-12 (sum = {0})")]
    BadPrior(f64),
    #[error("shirk rate p0[{0}] = {1} outside [0, 1]")]
    BadShirkRate(usize, f64),
    #[error("work gain p[{0}] = {1} must be > 0 with p0 + p <= 1")]
    BadWorkGain(usize, f64),
    #[error("cost c[{0}] = {1} must be > 0")]
    BadCost(usize, f64),
    #[error("no type succeeds on path: need some p0_k > 0")]
    NoSuccessOnPath,
    #[error("no type fails on path: need some p0_k + p_k < 1")]
    NoFailureOnPath,
    #[error("invalid value function: {0}")]
    BadValueFn(String),
    #[error("informed mode requires strictly distinct effective costs c_k/p_k")]
    NonStrictLambda,
    #[error("operation requires {expected:?} mode, environment is {actual:?}")]
    WrongMode {
        expected: InfoMode,
        actual: InfoMode,
    },
    #[error("operation requires a linear value function with type-independent shirk rate")]
    NotLinearEnvironment,
    #[error("complementarity test undefined: {0}")]
    ComplementarityUndefined(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoMode {
    /// Neither the worker nor the market observes ability (common prior).
    Uninformed,
    /// The worker privately observes his type before acting.
    Informed,
}

/// Market value of the worker as a function of the posterior belief.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueFn {
    /// v(mu) = sum_k u_k mu_k with nonnegative weights, one per type.
    Linear(Vec<f64>),
    /// Piecewise-linear in the posterior probability of the reference type
    /// (binary type spaces only). Knots are (abscissa, value) pairs spanning
    /// [0, 1] with strictly increasing abscissae.
    Pwl(Vec<(f64, f64)>),
}

/// Raw JSON schema for an environment document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub types: Vec<String>,
    pub prior: Vec<f64>,
    pub shirk_rate: Vec<f64>,
    pub work_gain: Vec<f64>,
    pub cost: Vec<f64>,
    pub value_fn: ValueFn,
    pub info_mode: InfoMode,
}

/// Validated model primitives.
///
/// In informed mode the types are relabeled at construction so the effective
/// cost `c_k / p_k` strictly decreases in the internal index (the last type is
/// the most skilled). Original labels are kept for reporting. Piecewise-linear
/// value functions are evaluated on the posterior probability of the
/// last-*listed* type, and the reference coordinate follows that type through
/// any relabeling.
#[derive(Debug, Clone)]
pub struct Environment {
    labels: Vec<String>,
    prior: Vec<f64>,
    shirk_rate: Vec<f64>,
    work_gain: Vec<f64>,
    cost: Vec<f64>,
    value_fn: ValueFn,
    info_mode: InfoMode,
    /// Internal index of the type whose posterior feeds a `ValueFn::Pwl`.
    pwl_coord: usize,
    /// `original_index[i]` = position of internal type `i` in the input listing.
    original_index: Vec<usize>,
}

/// Bayesian posteriors after observing the project outcome.
#[derive(Debug, Clone)]
pub struct Posteriors {
    /// Belief conditional on success.
    pub success: Vec<f64>,
    /// Belief conditional on failure.
    pub failure: Vec<f64>,
    /// Unconditional probability of project success.
    pub success_prob: f64,
}

/// Effective cost of working, with the limited-liability slack flag.
#[derive(Debug, Clone, Serialize)]
pub enum EffectiveCost {
    Uninformed {
        lambda: f64,
        /// Whether lambda exceeds sup_q D(q), the maintained model assumption.
        exceeds_max_career_value: bool,
    },
    Informed {
        /// Per-type lambda_k = c_k / p_k, in internal (relabeled) order.
        lambdas: Vec<f64>,
        exceeds_max_career_value: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Complementarity {
    /// Effort-effect profile FOSD-dominates both shirking effects.
    Complementary,
    /// The reverse weak dominance holds.
    Dominated,
    Mixed,
}

/// Outcome of the skill-effort complementarity test with the three profiles.
#[derive(Debug, Clone, Serialize)]
pub struct ComplementarityReport {
    pub verdict: Complementarity,
    /// Effort effect on the outcome, one entry per type (internal order).
    pub effort_effect: Vec<f64>,
    /// Shirking effect on success probability.
    pub shirk_success: Vec<f64>,
    /// Shirking effect on failure probability.
    pub shirk_failure: Vec<f64>,
}

impl Environment {
    pub fn new(spec: EnvironmentSpec) -> Result<Self, EnvError> {
        let k = spec.types.len();
        if k < 2 {
            return Err(EnvError::TooFewTypes(k));
        }
        for (name, len) in [
            ("prior", spec.prior.len()),
            ("shirk_rate", spec.shirk_rate.len()),
            ("work_gain", spec.work_gain.len()),
            ("cost", spec.cost.len()),
        ] {
            if len != k {
                return Err(EnvError::LengthMismatch(name, len, k));
            }
        }
        let sum: f64 = spec.prior.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || spec.prior.iter().any(|&m| m <= 0.0) {
            return Err(EnvError::BadPrior(sum));
        }
        for (i, (&p0, &p)) in spec.shirk_rate.iter().zip(&spec.work_gain).enumerate() {
            if !(0.0..=1.0).contains(&p0) {
                return Err(EnvError::BadShirkRate(i, p0));
            }
            if p <= 0.0 || p0 + p > 1.0 + 1e-12 {
                return Err(EnvError::BadWorkGain(i, p));
            }
        }
        for (i, &c) in spec.cost.iter().enumerate() {
            if c <= 0.0 {
                return Err(EnvError::BadCost(i, c));
            }
        }
        if !spec.shirk_rate.iter().any(|&p0| p0 > 0.0) {
            return Err(EnvError::NoSuccessOnPath);
        }
        if !spec
            .shirk_rate
            .iter()
            .zip(&spec.work_gain)
            .any(|(&p0, &p)| p0 + p < 1.0)
        {
            return Err(EnvError::NoFailureOnPath);
        }
        match &spec.value_fn {
            ValueFn::Linear(u) => {
                if u.len() != k {
                    return Err(EnvError::LengthMismatch("value_fn.linear", u.len(), k));
                }
                if u.iter().any(|&x| x < 0.0) {
                    return Err(EnvError::BadValueFn("linear weights must be >= 0".into()));
                }
            }
            ValueFn::Pwl(knots) => {
                if k != 2 {
                    return Err(EnvError::BadValueFn(format!(
                        "piecewise-linear value functions require exactly 2 types, got {k}"
                    )));
                }
                if knots.len() < 2
                    || knots[0].0 != 0.0
                    || knots[knots.len() - 1].0 != 1.0
                    || knots.windows(2).any(|w| w[1].0 <= w[0].0)
                {
                    return Err(EnvError::BadValueFn(
                        "knot abscissae must strictly increase from 0 to 1".into(),
                    ));
                }
                if knots.iter().any(|&(_, v)| v < 0.0) {
                    return Err(EnvError::BadValueFn("knot values must be >= 0".into()));
                }
            }
        }

        // Informed mode: relabel so lambda_k = c_k / p_k strictly decreases.
        let mut order: Vec<usize> = (0..k).collect();
        if spec.info_mode == InfoMode::Informed {
            order.sort_by(|&a, &b| {
                let la = spec.cost[a] / spec.work_gain[a];
                let lb = spec.cost[b] / spec.work_gain[b];
                lb.partial_cmp(&la).unwrap()
            });
            for w in order.windows(2) {
                let hi = spec.cost[w[0]] / spec.work_gain[w[0]];
                let lo = spec.cost[w[1]] / spec.work_gain[w[1]];
                if hi - lo <= 1e-12 {
                    return Err(EnvError::NonStrictLambda);
                }
            }
        }
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let value_fn = match &spec.value_fn {
            ValueFn::Linear(u) => ValueFn::Linear(pick(u)),
            ValueFn::Pwl(knots) => ValueFn::Pwl(knots.clone()),
        };
        let pwl_coord = order.iter().position(|&i| i == k - 1).unwrap_or(k - 1);

        Ok(Environment {
            labels: order.iter().map(|&i| spec.types[i].clone()).collect(),
            prior: pick(&spec.prior),
            shirk_rate: pick(&spec.shirk_rate),
            work_gain: pick(&spec.work_gain),
            cost: pick(&spec.cost),
            value_fn,
            info_mode: spec.info_mode,
            pwl_coord,
            original_index: order,
        })
    }

    pub fn from_json(doc: &str) -> Result<Self, EnvError> {
        let spec: EnvironmentSpec = serde_json::from_str(doc)
            .map_err(|e| EnvError::BadValueFn(format!("schema violation: {e}")))?;
        Self::new(spec)
    }

    pub fn to_spec(&self) -> EnvironmentSpec {
        EnvironmentSpec {
            types: self.labels.clone(),
            prior: self.prior.clone(),
            shirk_rate: self.shirk_rate.clone(),
            work_gain: self.work_gain.clone(),
            cost: self.cost.clone(),
            value_fn: self.value_fn.clone(),
            info_mode: self.info_mode,
        }
    }

    pub fn num_types(&self) -> usize {
        self.prior.len()
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn prior(&self) -> &[f64] {
        &self.prior
    }
    pub fn shirk_rate(&self) -> &[f64] {
        &self.shirk_rate
    }
    pub fn work_gain(&self) -> &[f64] {
        &self.work_gain
    }
    pub fn cost(&self) -> &[f64] {
        &self.cost
    }
    pub fn value_fn(&self) -> &ValueFn {
        &self.value_fn
    }
    pub fn info_mode(&self) -> InfoMode {
        self.info_mode
    }
    pub fn original_index(&self) -> &[usize] {
        &self.original_index
    }

    pub fn is_informed(&self) -> bool {
        self.info_mode == InfoMode::Informed
    }

    /// Whether the environment is linear with a type-independent shirk rate.
    pub fn is_linear_uniform_shirk(&self) -> bool {
        matches!(self.value_fn, ValueFn::Linear(_))
            && self
                .shirk_rate
                .windows(2)
                .all(|w| (w[0] - w[1]).abs() <= 1e-12)
    }

    /// Replace the market value weights (linear environments only).
    pub fn with_linear_weights(&self, u: Vec<f64>) -> Result<Self, EnvError> {
        let mut spec = self.to_spec();
        if !matches!(spec.value_fn, ValueFn::Linear(_)) {
            return Err(EnvError::NotLinearEnvironment);
        }
        spec.value_fn = ValueFn::Linear(u);
        Self::new(spec)
    }

    /// Scale the market value function by `delta` (post-employment discounting).
    pub fn with_discounted_value(&self, delta: f64) -> Result<Self, EnvError> {
        let mut spec = self.to_spec();
        spec.value_fn = match spec.value_fn {
            ValueFn::Linear(u) => ValueFn::Linear(u.into_iter().map(|x| delta * x).collect()),
            ValueFn::Pwl(kn) => ValueFn::Pwl(kn.into_iter().map(|(x, v)| (x, delta * v)).collect()),
        };
        Self::new(spec)
    }

    fn value_at(&self, mu: &[f64]) -> f64 {
        match &self.value_fn {
            ValueFn::Linear(u) => u.iter().zip(mu).map(|(a, b)| a * b).sum(),
            ValueFn::Pwl(knots) => pwl_eval(knots, mu[self.pwl_coord]),
        }
    }

    /// Per-type effective costs c_k / p_k, in internal order.
    pub fn lambdas(&self) -> Vec<f64> {
        self.cost
            .iter()
            .zip(&self.work_gain)
            .map(|(c, p)| c / p)
            .collect()
    }

    /// Prior-weighted effective cost: expected cost over expected work gain.
    pub fn lambda_uninformed(&self) -> f64 {
        let ec: f64 = self.prior.iter().zip(&self.cost).map(|(m, c)| m * c).sum();
        let ep: f64 = self
            .prior
            .iter()
            .zip(&self.work_gain)
            .map(|(m, p)| m * p)
            .sum();
        ec / ep
    }

    /// Effective cost together with the lambda > sup D model-assumption flag.
    pub fn effective_cost(&self) -> EffectiveCost {
        let max_d = self.max_career_value_estimate();
        match self.info_mode {
            InfoMode::Uninformed => {
                let lambda = self.lambda_uninformed();
                EffectiveCost::Uninformed {
                    lambda,
                    exceeds_max_career_value: lambda > max_d,
                }
            }
            InfoMode::Informed => {
                let lambdas = self.lambdas();
                let min_lambda = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
                EffectiveCost::Informed {
                    lambdas,
                    exceeds_max_career_value: min_lambda > max_d,
                }
            }
        }
    }

    /// Bayesian posteriors when the market expects type k to work with total
    /// probability `qs[k]`.
    pub fn posteriors_profile(&self, qs: &[f64]) -> Posteriors {
        debug_assert_eq!(qs.len(), self.num_types());
        let k = self.num_types();
        let mut success = vec![0.0; k];
        let mut failure = vec![0.0; k];
        let mut ps = 0.0;
        for i in 0..k {
            let s_i = self.shirk_rate[i] + qs[i] * self.work_gain[i];
            let joint = self.prior[i] * s_i;
            success[i] = joint;
            failure[i] = self.prior[i] - joint;
            ps += joint;
        }
        for i in 0..k {
            success[i] /= ps;
            failure[i] /= 1.0 - ps;
        }
        Posteriors {
            success,
            failure,
            success_prob: ps,
        }
    }

    /// Uninformed posteriors: all types share the working probability `q`.
    pub fn posteriors(&self, q: f64) -> Posteriors {
        let qs = vec![q; self.num_types()];
        self.posteriors_profile(&qs)
    }

    /// Career value D(q) = v(posterior | success) - v(posterior | failure).
    pub fn career_value(&self, q: f64) -> f64 {
        let post = self.posteriors(q);
        self.value_at(&post.success) - self.value_at(&post.failure)
    }

    /// Career value for a per-type working-probability profile.
    pub fn career_value_profile(&self, qs: &[f64]) -> f64 {
        let post = self.posteriors_profile(qs);
        self.value_at(&post.success) - self.value_at(&post.failure)
    }

    /// Build the cached uninformed career-value function.
    pub fn career_value_fn(&self, grid_n: usize) -> CareerValueFn {
        CareerValueFn::build(self.clone(), grid_n.max(16))
    }

    /// Crude upper estimate of sup D over expectations, for assumption flags.
    fn max_career_value_estimate(&self) -> f64 {
        match self.info_mode {
            InfoMode::Uninformed => {
                let n = 512;
                (0..=n)
                    .map(|i| self.career_value(i as f64 / n as f64))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            InfoMode::Informed => {
                let k = self.num_types();
                let per_axis = if k <= 3 { 9 } else { 4 };
                let mut best = f64::NEG_INFINITY;
                let total = per_axis_pow(per_axis, k);
                let mut qs = vec![0.0; k];
                for idx in 0..total {
                    let mut rem = idx;
                    for q in qs.iter_mut() {
                        *q = (rem % per_axis) as f64 / (per_axis - 1) as f64;
                        rem /= per_axis;
                    }
                    best = best.max(self.career_value_profile(&qs));
                }
                best
            }
        }
    }

    /// Skill-effort complementarity test (effort effect vs shirking effects,
    /// compared in first-order stochastic dominance under a market value that
    /// strictly rewards higher types).
    pub fn complementarity_check(&self) -> Result<ComplementarityReport, EnvError> {
        let k = self.num_types();
        // FOSD order: types sorted so the market value is increasing.
        let fosd_order: Vec<usize> = match &self.value_fn {
            ValueFn::Linear(u) => {
                let mut ord: Vec<usize> = (0..k).collect();
                ord.sort_by(|&a, &b| u[a].partial_cmp(&u[b]).unwrap());
                let sorted: Vec<f64> = ord.iter().map(|&i| u[i]).collect();
                if sorted[k - 1] - sorted[0] <= FOSD_STRICT_GAP {
                    return Err(EnvError::ComplementarityUndefined(
                        "linear value weights are constant; v is not FOSD-increasing".into(),
                    ));
                }
                ord
            }
            ValueFn::Pwl(knots) => {
                let nondecr = knots.windows(2).all(|w| w[1].1 >= w[0].1 - FOSD_WEAK_TOL);
                let noninc = knots.windows(2).all(|w| w[1].1 <= w[0].1 + FOSD_WEAK_TOL);
                let span = knots[knots.len() - 1].1 - knots[0].1;
                if nondecr && span > FOSD_STRICT_GAP {
                    // increasing in the reference coordinate: that type is "high"
                    if self.pwl_coord == 1 {
                        vec![0, 1]
                    } else {
                        vec![1, 0]
                    }
                } else if noninc && -span > FOSD_STRICT_GAP {
                    if self.pwl_coord == 1 {
                        vec![1, 0]
                    } else {
                        vec![0, 1]
                    }
                } else {
                    return Err(EnvError::ComplementarityUndefined(
                        "piecewise-linear value function is not monotone".into(),
                    ));
                }
            }
        };

        let ep: f64 = self
            .prior
            .iter()
            .zip(&self.work_gain)
            .map(|(m, p)| m * p)
            .sum();
        let es: f64 = self
            .prior
            .iter()
            .zip(&self.shirk_rate)
            .map(|(m, p0)| m * p0)
            .sum();
        let ef: f64 = self
            .prior
            .iter()
            .zip(&self.shirk_rate)
            .map(|(m, p0)| m * (1.0 - p0))
            .sum();
        let p: Vec<f64> = (0..k)
            .map(|i| self.prior[i] * self.work_gain[i] / ep)
            .collect();
        let qs: Vec<f64> = (0..k)
            .map(|i| self.prior[i] * self.shirk_rate[i] / es)
            .collect();
        let qf: Vec<f64> = (0..k)
            .map(|i| self.prior[i] * (1.0 - self.shirk_rate[i]) / ef)
            .collect();

        // Cumulative sums in FOSD order; the K-th entry is 1 for all three.
        let cums = |v: &[f64]| -> Vec<f64> {
            let mut acc = 0.0;
            fosd_order[..k - 1]
                .iter()
                .map(|&i| {
                    acc += v[i];
                    acc
                })
                .collect()
        };
        let cp = cums(&p);
        let cs = cums(&qs);
        let cf = cums(&qf);

        let weakly_dominates =
            |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| *x <= *y + FOSD_WEAK_TOL);
        let strict_gap =
            |a: &[f64], b: &[f64]| a.iter().zip(b).any(|(x, y)| *y - *x > FOSD_STRICT_GAP);
        let verdict = if weakly_dominates(&cp, &cs)
            && weakly_dominates(&cp, &cf)
            && (strict_gap(&cp, &cs) || strict_gap(&cp, &cf))
        {
            Complementarity::Complementary
        } else if weakly_dominates(&cs, &cp) && weakly_dominates(&cf, &cp) {
            Complementarity::Dominated
        } else {
            Complementarity::Mixed
        };
        Ok(ComplementarityReport {
            verdict,
            effort_effect: p,
            shirk_success: qs,
            shirk_failure: qf,
        })
    }

    /// Linear-environment criterion: Cov(u, p) and its sign.
    pub fn linear_criterion(&self) -> Result<(f64, bool), EnvError> {
        if !self.is_linear_uniform_shirk() {
            return Err(EnvError::NotLinearEnvironment);
        }
        let u = match &self.value_fn {
            ValueFn::Linear(u) => u,
            _ => unreachable!(),
        };
        let eu: f64 = self.prior.iter().zip(u).map(|(m, x)| m * x).sum();
        let ep: f64 = self
            .prior
            .iter()
            .zip(&self.work_gain)
            .map(|(m, p)| m * p)
            .sum();
        let eup: f64 = self
            .prior
            .iter()
            .zip(u)
            .zip(&self.work_gain)
            .map(|((m, x), p)| m * x * p)
            .sum();
        let cov = eup - eu * ep;
        Ok((cov, cov > 0.0))
    }
}

fn per_axis_pow(base: usize, exp: usize) -> usize {
    let mut out = 1usize;
    for _ in 0..exp {
        out = out.saturating_mul(base);
    }
    out
}

/// Tabulated uninformed career-value function with refined extrema.
#[derive(Debug, Clone)]
pub struct CareerValueFn {
    env: Environment,
    samples: Vec<f64>,
    grid_n: usize,
    min_value: f64,
    argmin_q: f64,
    max_value: f64,
    argmax_q: f64,
    /// Refined interior local minima (q, D(q)), sorted by q. Root finders use
    /// these to catch sign pockets narrower than the grid spacing.
    local_minima: Vec<(f64, f64)>,
}

impl CareerValueFn {
    fn build(env: Environment, grid_n: usize) -> Self {
        let samples: Vec<f64> = (0..=grid_n)
            .map(|i| env.career_value(i as f64 / grid_n as f64))
            .collect();
        let (argmin_q, min_value) = refine_extremum(&env, &samples, grid_n, false);
        let (argmax_q, max_value) = refine_extremum(&env, &samples, grid_n, true);
        let mut local_minima: Vec<(f64, f64)> = Vec::new();
        for i in 1..grid_n {
            if samples[i] <= samples[i - 1] && samples[i] <= samples[i + 1] {
                let a = (i - 1) as f64 / grid_n as f64;
                let b = (i + 1) as f64 / grid_n as f64;
                let (q, v) = golden_min(|q| env.career_value(q), a, b, 1e-13);
                match local_minima.last() {
                    // a flat valley shows up as a run of grid minima
                    Some(&(lq, _)) if q - lq < 0.5 / grid_n as f64 => {}
                    _ => local_minima.push((q, v)),
                }
            }
        }
        CareerValueFn {
            env,
            samples,
            grid_n,
            min_value,
            argmin_q,
            max_value,
            argmax_q,
            local_minima,
        }
    }

    /// Refined interior local minima of D, sorted by q.
    pub fn local_minima(&self) -> &[(f64, f64)] {
        &self.local_minima
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
    pub fn min_value(&self) -> f64 {
        self.min_value
    }
    pub fn argmin_q(&self) -> f64 {
        self.argmin_q
    }
    pub fn max_value(&self) -> f64 {
        self.max_value
    }
    pub fn argmax_q(&self) -> f64 {
        self.argmax_q
    }
    pub fn env(&self) -> &Environment {
        &self.env
    }

    /// Exact evaluation (direct posterior computation, not interpolation).
    pub fn eval(&self, q: f64) -> f64 {
        self.env.career_value(q)
    }

    pub fn at_grid(&self, i: usize) -> f64 {
        self.samples[i]
    }

    pub fn q_at(&self, i: usize) -> f64 {
        i as f64 / self.grid_n as f64
    }

    /// Minimum of D over [lo, 1] (grid scan plus local refinement).
    pub fn min_on_upper_range(&self, lo: f64) -> f64 {
        self.min_on_range(lo, 1.0)
    }

    /// Minimum of D over [lo, hi] (grid scan plus local refinement).
    pub fn min_on_range(&self, lo: f64, hi: f64) -> f64 {
        let n = self.grid_n as f64;
        let i0 = (lo * n).floor().max(0.0) as usize;
        let i1 = (hi * n).ceil().min(n) as usize;
        let mut best = f64::INFINITY;
        for i in i0..=i1 {
            let q = self.q_at(i).clamp(lo, hi);
            best = best.min(self.eval(q));
        }
        for i in i0.saturating_add(1)..i1 {
            if self.samples[i] <= self.samples[i - 1] && self.samples[i] <= self.samples[i + 1] {
                let a = self.q_at(i - 1).max(lo);
                let b = self.q_at(i + 1).min(hi);
                let (_, v) = golden_min(|q| self.eval(q), a, b, 1e-12);
                best = best.min(v);
            }
        }
        best = best.min(self.eval(lo)).min(self.eval(hi));
        best
    }

    /// Estimated Lipschitz constant from grid differences.
    pub fn lipschitz_estimate(&self) -> f64 {
        let h = 1.0 / self.grid_n as f64;
        self.samples
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / h)
            .fold(0.0, f64::max)
    }
}

fn refine_extremum(
    env: &Environment,
    samples: &[f64],
    grid_n: usize,
    maximize: bool,
) -> (f64, f64) {
    let sign = if maximize { -1.0 } else { 1.0 };
    let f = |q: f64| sign * env.career_value(q);
    let n = grid_n;
    let mut best_x = 0.0;
    let mut best_v = sign * samples[0];
    for (i, &s) in samples.iter().enumerate() {
        let v = sign * s;
        if v < best_v {
            best_v = v;
            best_x = i as f64 / n as f64;
        }
    }
    // Refine every interior grid-local optimum; keep the global best.
    for i in 1..n {
        let v = sign * samples[i];
        if v <= sign * samples[i - 1] && v <= sign * samples[i + 1] {
            let a = (i - 1) as f64 / n as f64;
            let b = (i + 1) as f64 / n as f64;
            let (x, fx) = golden_min(f, a, b, 1e-12);
            if fx < best_v {
                best_v = fx;
                best_x = x;
            }
        }
    }
    (best_x, sign * best_v)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn worked_env() -> Environment {
        Environment::new(EnvironmentSpec {
            types: vec!["H".into(), "L".into()],
            prior: vec![0.5, 0.5],
            shirk_rate: vec![0.1, 0.1],
            work_gain: vec![0.7, 0.3],
            cost: vec![0.5, 0.5],
            value_fn: ValueFn::Linear(vec![1.0, 0.0]),
            info_mode: InfoMode::Uninformed,
        })
        .unwrap()
    }

    fn informed_example_env() -> Environment {
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

    /// Independent conditional-probability oracle: enumerate (type, outcome)
    /// joint masses directly and condition by hand.
    fn bayes_oracle(env: &Environment, qs: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let k = env.num_types();
        let mut joint_success = vec![0.0; k];
        let mut joint_failure = vec![0.0; k];
        for i in 0..k {
            // split type i into "works" (prob qs[i]) and "shirks" branches
            let work_mass = env.prior()[i] * qs[i];
            let shirk_mass = env.prior()[i] * (1.0 - qs[i]);
            let p_work = env.shirk_rate()[i] + env.work_gain()[i];
            let p_shirk = env.shirk_rate()[i];
            joint_success[i] = work_mass * p_work + shirk_mass * p_shirk;
            joint_failure[i] = work_mass * (1.0 - p_work) + shirk_mass * (1.0 - p_shirk);
        }
        let ps: f64 = joint_success.iter().sum();
        let pf: f64 = joint_failure.iter().sum();
        (
            joint_success.iter().map(|j| j / ps).collect(),
            joint_failure.iter().map(|j| j / pf).collect(),
            ps,
        )
    }

    #[test]
    fn effective_cost_worked_example_is_one() {
        match worked_env().effective_cost() {
            EffectiveCost::Uninformed {
                lambda,
                exceeds_max_career_value,
            } => {
                assert!((lambda - 1.0).abs() < 1e-15);
                assert!(exceeds_max_career_value);
            }
            _ => panic!("expected uninformed"),
        }
    }

    #[test]
    fn effective_cost_uniform_costs() {
        // all c_k = c gives lambda = c / E[p]
        let env = worked_env();
        assert!((env.lambda_uninformed() - 0.5 / 0.5).abs() < 1e-15);
    }

    #[test]
    fn effective_cost_informed_per_type() {
        let env = informed_example_env();
        // internal order is descending lambda: (L, H)
        let l = env.lambdas();
        assert!((l[0] - 1.2).abs() < 1e-12);
        assert!((l[1] - 1.0).abs() < 1e-12);
        assert_eq!(env.labels(), &["L".to_string(), "H".to_string()]);
    }

    #[test]
    fn posteriors_uninformative_at_q0_with_uniform_shirk() {
        let env = worked_env();
        let post = env.posteriors(0.0);
        for i in 0..2 {
            assert!((post.success[i] - env.prior()[i]).abs() < 1e-15);
            assert!((post.failure[i] - env.prior()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn posteriors_worked_example_q1_match_hand_bayes() {
        let env = worked_env();
        let post = env.posteriors(1.0);
        // H is internal index 0 in this uninformed env
        assert!((post.success[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((post.failure[0] - 0.25).abs() < 1e-14);
        let (s, f, ps) = bayes_oracle(&env, &[1.0, 1.0]);
        for i in 0..2 {
            assert!((post.success[i] - s[i]).abs() < 1e-14);
            assert!((post.failure[i] - f[i]).abs() < 1e-14);
        }
        assert!((post.success_prob - ps).abs() < 1e-14);
    }

    #[test]
    fn posteriors_normalize() {
        let env = informed_example_env();
        let post = env.posteriors_profile(&[0.3, 0.8]);
        assert!((post.success.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((post.failure.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn martingale_identity_on_grid() {
        for env in [worked_env(), informed_example_env()] {
            for i in 0..=40 {
                let q = i as f64 / 40.0;
                let qs = vec![q, (q * 0.7 + 0.2).min(1.0)];
                let post = env.posteriors_profile(&qs);
                for k in 0..2 {
                    let recon = post.success_prob * post.success[k]
                        + (1.0 - post.success_prob) * post.failure[k];
                    assert!(
                        (recon - env.prior()[k]).abs() < 1e-10,
                        "martingale violated at q={q}"
                    );
                }
            }
        }
    }

    #[test]
    fn career_value_worked_example_closed_form() {
        let env = worked_env();
        for i in 0..=100 {
            let q = i as f64 / 100.0;
            let expect = 10.0 * q / ((1.0 + 5.0 * q) * (9.0 - 5.0 * q));
            assert!((env.career_value(q) - expect).abs() < 1e-12);
        }
        assert!((env.career_value(1.0) - 5.0 / 12.0).abs() < 1e-14);
        assert!(env.career_value(0.0).abs() < 1e-14);
    }

    #[test]
    fn career_value_matches_cov_t_formula() {
        let env = worked_env();
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
            assert!((env.career_value(q) - cov * t).abs() < 1e-10);
        }
    }

    #[test]
    fn career_value_informed_example() {
        let env = informed_example_env();
        // D(1,1) via the same Bayes as the uninformed q=1 case
        let d11 = env.career_value_profile(&[1.0, 1.0]);
        assert!((d11 - 5.0 / 12.0).abs() < 1e-13);
        let d00 = env.career_value_profile(&[0.0, 0.0]);
        assert!(d00.abs() < 1e-13);
    }

    #[test]
    fn complementarity_worked_example_is_complementary() {
        let rep = worked_env().complementarity_check().unwrap();
        assert_eq!(rep.verdict, Complementarity::Complementary);
    }

    #[test]
    fn complementarity_constant_p_is_dominated() {
        let env = Environment::new(EnvironmentSpec {
            types: vec!["a".into(), "b".into()],
            prior: vec![0.5, 0.5],
            shirk_rate: vec![0.2, 0.2],
            work_gain: vec![0.4, 0.4],
            cost: vec![0.3, 0.3],
            value_fn: ValueFn::Linear(vec![0.0, 1.0]),
            info_mode: InfoMode::Uninformed,
        })
        .unwrap();
        let rep = env.complementarity_check().unwrap();
        assert_eq!(rep.verdict, Complementarity::Dominated);
        for i in 0..2 {
            assert!((rep.effort_effect[i] - 0.5).abs() < 1e-15);
            assert!((rep.shirk_success[i] - 0.5).abs() < 1e-15);
            assert!((rep.shirk_failure[i] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn complementarity_rejects_nonmonotone_pwl() {
        let env = Environment::new(EnvironmentSpec {
            types: vec!["a".into(), "b".into()],
            prior: vec![0.5, 0.5],
            shirk_rate: vec![0.1, 0.1],
            work_gain: vec![0.7, 0.3],
            cost: vec![0.5, 0.5],
            value_fn: ValueFn::Pwl(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.2)]),
            info_mode: InfoMode::Uninformed,
        })
        .unwrap();
        assert!(matches!(
            env.complementarity_check(),
            Err(EnvError::ComplementarityUndefined(_))
        ));
    }

    #[test]
    fn linear_criterion_worked_example() {
        let (cov, flag) = worked_env().linear_criterion().unwrap();
        assert!((cov - 0.1).abs() < 1e-15);
        assert!(flag);
    }

    #[test]
    fn linear_criterion_constant_u() {
        let env = worked_env().with_linear_weights(vec![0.7, 0.7]).unwrap();
        let (cov, flag) = env.linear_criterion().unwrap();
        assert!(cov.abs() < 1e-15);
        assert!(!flag);
    }

    #[test]
    fn linear_criterion_negative_cov() {
        // swap p to (0.3, 0.7) with u = (1, 0)
        let env = Environment::new(EnvironmentSpec {
            types: vec!["H".into(), "L".into()],
            prior: vec![0.5, 0.5],
            shirk_rate: vec![0.1, 0.1],
            work_gain: vec![0.3, 0.7],
            cost: vec![0.5, 0.5],
            value_fn: ValueFn::Linear(vec![1.0, 0.0]),
            info_mode: InfoMode::Uninformed,
        })
        .unwrap();
        let (cov, flag) = env.linear_criterion().unwrap();
        assert!((cov + 0.1).abs() < 1e-15);
        assert!(!flag);
    }

    #[test]
    fn linear_criterion_rejects_pwl() {
        let env = Environment::new(EnvironmentSpec {
            types: vec!["a".into(), "b".into()],
            prior: vec![0.5, 0.5],
            shirk_rate: vec![0.1, 0.1],
            work_gain: vec![0.7, 0.3],
            cost: vec![0.5, 0.5],
            value_fn: ValueFn::Pwl(vec![(0.0, 0.0), (1.0, 1.0)]),
            info_mode: InfoMode::Uninformed,
        })
        .unwrap();
        assert!(matches!(
            env.linear_criterion(),
            Err(EnvError::NotLinearEnvironment)
        ));
    }

    #[test]
    fn career_value_fn_caches_and_refines() {
        let env = worked_env();
        let d = env.career_value_fn(512);
        assert!(d.min_value().abs() < 1e-12);
        assert!(d.argmin_q().abs() < 1e-9);
        assert!((d.eval(1.0) - 5.0 / 12.0).abs() < 1e-14);
        // cache matches direct computation at every sample
        for i in 0..=512 {
            assert_eq!(d.at_grid(i), env.career_value(i as f64 / 512.0));
        }
        // continuity: grid Lipschitz bound is finite and modest
        assert!(d.lipschitz_estimate() < 10.0);
    }

    #[test]
    fn env_json_round_trip() {
        let env = worked_env();
        let doc = serde_json::to_string(&env.to_spec()).unwrap();
        assert!(doc.contains("\"linear\""));
        let back = Environment::from_json(&doc).unwrap();
        assert_eq!(back.prior(), env.prior());
        assert_eq!(back.labels(), env.labels());
    }

    #[test]
    fn rejects_bad_priors_and_rates() {
        let mut spec = worked_env().to_spec();
        spec.prior = vec![0.6, 0.6];
        assert!(matches!(
            Environment::new(spec.clone()),
            Err(EnvError::BadPrior(_))
        ));
        let mut spec2 = worked_env().to_spec();
        spec2.work_gain = vec![0.95, 0.3];
        spec2.shirk_rate = vec![0.1, 0.1];
        assert!(matches!(
            Environment::new(spec2),
            Err(EnvError::BadWorkGain(0, _))
        ));
        // both success and failure must stay on path
        let mut spec3 = worked_env().to_spec();
        spec3.shirk_rate = vec![0.0, 0.0];
        assert!(matches!(
            Environment::new(spec3),
            Err(EnvError::NoSuccessOnPath)
        ));
        let mut spec4 = worked_env().to_spec();
        spec4.shirk_rate = vec![0.3, 0.7];
        spec4.work_gain = vec![0.7, 0.3];
        assert!(matches!(
            Environment::new(spec4),
            Err(EnvError::NoFailureOnPath)
        ));
    }

    #[test]
    fn informed_requires_distinct_lambdas() {
        let mut spec = informed_example_env().to_spec();
        spec.cost = vec![0.3, 0.7]; // both lambdas become 1.0
        assert!(matches!(
            Environment::new(spec),
            Err(EnvError::NonStrictLambda)
        ));
    }
}
