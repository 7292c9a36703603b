//! Benchmark wages and the robustly optimal wage policy for a worker who does
//! not know his own ability.
//!
//! The solver inverts the binding equilibrium-breaking condition
//! `w + D(qbar(w)) = lambda` on a wage grid, placing mass points exactly where
//! the career value is locally non-increasing (detected as jumps of qbar).

use serde::Serialize;
use thiserror::Error;

use crate::environment::{CareerValueFn, EnvError, Environment, InfoMode, DEFAULT_GRID_N};
use crate::numeric::bisect;
use crate::policy::{PolicyError, WagePolicy};

/// Strategic uncertainty margin: min D must undercut D(1) by this much.
const SU_TOL: f64 = 1e-10;
/// |w + D(q) - lambda| accepted as a touching root in qbar.
const TOUCH_TOL: f64 = 1e-9;
/// Binding-EB residual the construction must satisfy.
const BINDING_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("no root of w + D(q) = lambda for w = {0} (outside [w_low, w_high])")]
    NoRoot(f64),
    #[error("target working probability {0} outside [0, 1]")]
    BadTarget(f64),
    #[error("{0}")]
    Numeric(String),
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Resolution of the cached career-value grid.
    pub q_grid_n: usize,
    /// Breakpoints of the constructed policy per continuous stretch.
    pub w_grid_n: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            q_grid_n: DEFAULT_GRID_N,
            w_grid_n: DEFAULT_GRID_N,
        }
    }
}

/// Solution record for the uninformed problem.
#[derive(Debug, Clone)]
pub struct UninformedSolution {
    pub lambda: f64,
    /// Partial-implementation (PR) wage, lambda - D(target).
    pub w_low: f64,
    /// Full-implementation deterministic (FD) wage, lambda - min D.
    pub w_high: f64,
    pub strategic_uncertainty: bool,
    /// Sampled map w -> qbar(w) over the dispersed support.
    pub qbar_curve: Vec<(f64, f64)>,
    pub policy: WagePolicy,
    /// Mass points of the policy (wage, mass).
    pub mass_points: Vec<(f64, f64)>,
    /// Max |w + D(1 - F(w)) - lambda| over sampled continuity points.
    pub binding_residual_max: f64,
    /// Max violation of F(w_q-) <= 1 - q against the sampled constraint graph.
    pub minorant_violation: f64,
    /// Total working probability the policy implements.
    pub target_q: f64,
}

impl UninformedSolution {
    /// Feasible atomless approximation: the dispersed part is stretched
    /// upward by eps while any firing mass at wage zero stays in place.
    pub fn approximating_policy(&self, eps: f64) -> Result<WagePolicy, crate::oracle::OracleError> {
        crate::oracle::approximating_policy_uninformed_above(&self.policy, eps, 1.0 - self.target_q)
    }

    /// Summary for reports.
    pub fn report(&self) -> SolutionReport {
        let stats = self.policy.stats();
        SolutionReport {
            lambda: self.lambda,
            w_low: self.w_low,
            w_high: self.w_high,
            strategic_uncertainty: self.strategic_uncertainty,
            target_q: self.target_q,
            mean: stats.mean,
            variance: stats.variance,
            support_range: stats.support_range,
            atom_count: self.mass_points.len(),
            binding_residual_max: self.binding_residual_max,
            minorant_violation: self.minorant_violation,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub lambda: f64,
    pub w_low: f64,
    pub w_high: f64,
    pub strategic_uncertainty: bool,
    pub target_q: f64,
    pub mean: f64,
    pub variance: f64,
    pub support_range: f64,
    pub atom_count: usize,
    pub binding_residual_max: f64,
    pub minorant_violation: f64,
}

/// Cached quantities for one uninformed environment.
pub struct UninformedAnalysis {
    d: CareerValueFn,
    lambda: f64,
    w_low: f64,
    w_high: f64,
}

impl UninformedAnalysis {
    pub fn new(env: &Environment, q_grid_n: usize) -> Result<Self, SolverError> {
        if env.info_mode() != InfoMode::Uninformed {
            return Err(EnvError::WrongMode {
                expected: InfoMode::Uninformed,
                actual: env.info_mode(),
            }
            .into());
        }
        let d = env.career_value_fn(q_grid_n);
        let lambda = env.lambda_uninformed();
        let w_low = lambda - d.eval(1.0);
        let w_high = lambda - d.min_value();
        Ok(UninformedAnalysis {
            d,
            lambda,
            w_low,
            w_high,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn w_low(&self) -> f64 {
        self.w_low
    }
    pub fn w_high(&self) -> f64 {
        self.w_high
    }
    pub fn career_value(&self) -> &CareerValueFn {
        &self.d
    }

    pub fn strategic_uncertainty(&self) -> bool {
        self.d.min_value() < self.d.eval(1.0) - SU_TOL
    }

    /// Largest root of w + D(q) = lambda on [0, 1].
    pub fn qbar(&self, w: f64) -> Result<f64, SolverError> {
        self.qbar_upto(w, 1.0)
    }

    /// Largest root of w + D(q) = lambda on [0, cap].
    pub fn qbar_upto(&self, w: f64, cap: f64) -> Result<f64, SolverError> {
        let h = |q: f64| w + self.d.eval(q) - self.lambda;
        let h_cap = h(cap);
        if h_cap < -TOUCH_TOL {
            return Err(SolverError::NoRoot(w));
        }
        if h_cap <= 0.0 {
            return Ok(cap);
        }
        // scan the cached grid downward from the cap for a sign change
        let n = self.d.grid_n();
        let i_cap = ((cap * n as f64).floor() as usize).min(n);
        let mut best: Option<f64> = None;
        let mut upper_q = cap;
        for i in (0..=i_cap).rev() {
            let q_i = self.d.q_at(i);
            if q_i >= cap {
                continue;
            }
            let h_i = w + self.d.at_grid(i) - self.lambda;
            if h_i <= 0.0 {
                best = if h_i == 0.0 {
                    Some(q_i)
                } else {
                    Some(bisect(h, q_i, upper_q, 1e-12))
                };
                break;
            }
            upper_q = q_i;
        }
        // Sign pockets narrower than the grid hide around refined local
        // minima of D; a larger root may live there.
        let floor = best.unwrap_or(0.0);
        for &(q_m, d_m) in self.d.local_minima().iter().rev() {
            if q_m <= floor || q_m >= cap {
                continue;
            }
            let h_m = w + d_m - self.lambda;
            if h_m <= 0.0 {
                // the pocket's right edge: grid neighbor above q_m has h > 0
                let j = ((q_m * n as f64).ceil() as usize).min(n);
                let q_r = self.d.q_at(j).min(cap);
                let root = if h(q_r) > 0.0 && q_r > q_m {
                    bisect(h, q_m, q_r, 1e-12)
                } else {
                    q_m
                };
                best = Some(best.map_or(root, |b: f64| b.max(root)));
                break; // minima are scanned from the top; the first hit is maximal
            } else if h_m.abs() <= TOUCH_TOL {
                // touching root (w at the edge of the range)
                best = Some(best.map_or(q_m, |b: f64| b.max(q_m)));
                break;
            }
        }
        if best.is_none() {
            for q in [0.0, cap] {
                if h(q).abs() <= TOUCH_TOL {
                    best = Some(best.map_or(q, |prev: f64| prev.max(q)));
                }
            }
        }
        best.ok_or(SolverError::NoRoot(w))
    }
}

/// Critical wages (w_low, w_high) = (lambda - D(1), lambda - min D).
pub fn critical_wages(env: &Environment) -> Result<(f64, f64), SolverError> {
    let a = UninformedAnalysis::new(env, DEFAULT_GRID_N)?;
    Ok((a.w_low, a.w_high))
}

/// Whether the PR wage suffers from multiple equilibria.
pub fn strategic_uncertainty(env: &Environment) -> Result<bool, SolverError> {
    Ok(UninformedAnalysis::new(env, DEFAULT_GRID_N)?.strategic_uncertainty())
}

/// Largest q with w + D(q) = lambda.
pub fn qbar(env: &Environment, w: f64) -> Result<f64, SolverError> {
    UninformedAnalysis::new(env, DEFAULT_GRID_N)?.qbar(w)
}

/// Robustly optimal policy fully implementing full working.
pub fn robust_policy(env: &Environment) -> Result<UninformedSolution> {
    robust_policy_with(env, SolverConfig::default())
}

pub type Result<T, E = SolverError> = std::result::Result<T, E>;

pub fn robust_policy_with(env: &Environment, cfg: SolverConfig) -> Result<UninformedSolution> {
    let analysis = UninformedAnalysis::new(env, cfg.q_grid_n)?;
    build_solution(env, &analysis, 1.0, cfg)
}

/// Robustly optimal policy fully implementing total working probability `q`.
///
/// For q < 1 the worker is fired (wage 0) with probability 1 - q and the
/// dispersed part lives on [lambda - D(q), lambda - min_{q' <= q} D(q')].
pub fn robust_policy_partial(env: &Environment, q: f64) -> Result<UninformedSolution> {
    robust_policy_partial_with(env, q, SolverConfig::default())
}

pub fn robust_policy_partial_with(
    env: &Environment,
    q: f64,
    cfg: SolverConfig,
) -> Result<UninformedSolution> {
    if !(0.0..=1.0).contains(&q) {
        return Err(SolverError::BadTarget(q));
    }
    if q == 1.0 {
        return robust_policy_with(env, cfg);
    }
    let analysis = UninformedAnalysis::new(env, cfg.q_grid_n)?;
    build_solution(env, &analysis, q, cfg)
}

fn build_solution(
    _env: &Environment,
    analysis: &UninformedAnalysis,
    target_q: f64,
    cfg: SolverConfig,
) -> Result<UninformedSolution> {
    let lambda = analysis.lambda;
    let d = &analysis.d;
    let (w_lo, w_hi, min_d) = if target_q >= 1.0 {
        (analysis.w_low, analysis.w_high, d.min_value())
    } else {
        let min_d = d.min_on_range(0.0, target_q);
        (lambda - d.eval(target_q), lambda - min_d, min_d)
    };
    let su_scope = min_d < d.eval(target_q) - SU_TOL;
    let strategic_uncertainty = analysis.strategic_uncertainty();

    // degenerate cases: no dispersion needed, or firing everyone (q = 0)
    if target_q == 0.0 || !su_scope {
        let wage = if target_q == 0.0 { 0.0 } else { w_lo };
        let policy = if target_q >= 1.0 || target_q == 0.0 {
            WagePolicy::degenerate(wage)
        } else {
            WagePolicy::new(vec![(0.0, 1.0 - target_q), (w_lo, target_q)], vec![])?
        };
        let mass_points = policy.atoms().to_vec();
        return Ok(UninformedSolution {
            lambda,
            w_low: w_lo,
            w_high: w_hi,
            strategic_uncertainty,
            qbar_curve: vec![(w_lo, target_q)],
            policy,
            mass_points,
            binding_residual_max: 0.0,
            minorant_violation: 0.0,
            target_q,
        });
    }

    let mut w_grid_n = cfg.w_grid_n.max(512);
    let mut attempt = 0;
    loop {
        let built = assemble_policy(analysis, target_q, w_lo, w_hi, w_grid_n)?;
        let residual = binding_residual(analysis, &built.policy, target_q, w_lo, w_hi, 1000);
        if residual <= 0.5 * BINDING_TOL || attempt >= 2 {
            let minorant = minorant_violation(analysis, &built.policy, target_q);
            return Ok(UninformedSolution {
                lambda,
                w_low: w_lo,
                w_high: w_hi,
                strategic_uncertainty,
                qbar_curve: built.qbar_curve,
                policy: built.policy,
                mass_points: built.mass_points,
                binding_residual_max: residual,
                minorant_violation: minorant,
                target_q,
            });
        }
        w_grid_n *= 2;
        attempt += 1;
    }
}

struct BuiltPolicy {
    policy: WagePolicy,
    mass_points: Vec<(f64, f64)>,
    qbar_curve: Vec<(f64, f64)>,
}

enum CurveEvent {
    /// qbar sampled at a wage: CDF knot (w, 1 - q).
    Knot(f64, f64),
    /// Genuine jump of qbar at a wage: atom of mass q_left - q_right.
    Atom(f64, f64, f64),
}

/// Construct F(w) = 1 - qbar(w+) on [w_lo, w_hi]; jumps of qbar become atoms.
fn assemble_policy(
    analysis: &UninformedAnalysis,
    target_q: f64,
    w_lo: f64,
    w_hi: f64,
    w_grid_n: usize,
) -> Result<BuiltPolicy> {
    let span = w_hi - w_lo;
    let jump_tol = 10.0 / analysis.d.grid_n() as f64;
    let eps_w = (span * 1e-12).max(1e-15);

    let mut ws: Vec<f64> = (0..=w_grid_n)
        .map(|i| w_lo + span * i as f64 / w_grid_n as f64)
        .collect();
    ws[w_grid_n] = w_hi;
    let mut qs: Vec<f64> = Vec::with_capacity(ws.len());
    for &w in &ws {
        qs.push(analysis.qbar_upto(w, target_q)?);
    }

    let mut events: Vec<CurveEvent> = vec![CurveEvent::Knot(ws[0], qs[0])];
    for i in 0..w_grid_n {
        split_cell(
            analysis,
            target_q,
            ws[i],
            qs[i],
            ws[i + 1],
            qs[i + 1],
            jump_tol,
            eps_w,
            60,
            &mut events,
        )?;
    }

    let mut atoms: Vec<(f64, f64)> = Vec::new();
    if target_q < 1.0 {
        atoms.push((0.0, 1.0 - target_q));
    }
    let mut pieces: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut cur: Vec<(f64, f64)> = Vec::new();
    for ev in events {
        match ev {
            CurveEvent::Knot(w, q) => {
                push_knot(&mut cur, w, 1.0 - q);
            }
            CurveEvent::Atom(w, q_left, q_right) => {
                push_knot(&mut cur, w, 1.0 - q_left);
                if cur.len() >= 2 {
                    pieces.push(std::mem::take(&mut cur));
                } else {
                    cur.clear();
                }
                atoms.push((w, q_left - q_right));
                cur.push((w, 1.0 - q_right));
            }
        }
    }
    // close at the top: F(w_hi) = 1
    let q_end = qs[w_grid_n];
    if q_end > jump_tol {
        if cur.len() >= 2 {
            pieces.push(std::mem::take(&mut cur));
        }
        atoms.push((w_hi, q_end));
    } else if let Some(last) = cur.last_mut() {
        last.1 = 1.0;
        if cur.len() >= 2 {
            pieces.push(std::mem::take(&mut cur));
        }
    }

    let policy = WagePolicy::new(atoms, pieces)?;
    let mass_points = policy
        .atoms()
        .iter()
        .copied()
        .filter(|&(w, _)| w > 0.0 || target_q >= 1.0)
        .collect();
    let qbar_curve = ws.into_iter().zip(qs).collect();
    Ok(BuiltPolicy {
        policy,
        mass_points,
        qbar_curve,
    })
}

fn push_knot(cur: &mut Vec<(f64, f64)>, w: f64, f: f64) {
    match cur.last() {
        Some(&(lw, lf)) => {
            if w > lw + 1e-15 {
                cur.push((w, f.max(lf)));
            } else if f > lf {
                cur.last_mut().unwrap().1 = f;
            }
        }
        None => cur.push((w, f)),
    }
}

/// Recursively subdivide a cell of the qbar curve. Drops of qbar that keep
/// shrinking under subdivision are steep continuous runs and become knots;
/// drops that persist at vanishing width are genuine jumps and become atoms.
#[allow(clippy::too_many_arguments)]
fn split_cell(
    analysis: &UninformedAnalysis,
    target_q: f64,
    wa: f64,
    qa: f64,
    wb: f64,
    qb: f64,
    jump_tol: f64,
    eps_w: f64,
    depth: usize,
    out: &mut Vec<CurveEvent>,
) -> Result<()> {
    if qa - qb <= jump_tol {
        out.push(CurveEvent::Knot(wb, qb));
        return Ok(());
    }
    if depth == 0 || wb - wa <= eps_w {
        let wj = 0.5 * (wa + wb);
        out.push(CurveEvent::Atom(wj, qa, qb));
        out.push(CurveEvent::Knot(wb, qb));
        return Ok(());
    }
    let wm = 0.5 * (wa + wb);
    let qm = analysis.qbar_upto(wm, target_q)?;
    split_cell(
        analysis,
        target_q,
        wa,
        qa,
        wm,
        qm,
        jump_tol,
        eps_w,
        depth - 1,
        out,
    )?;
    split_cell(
        analysis,
        target_q,
        wm,
        qm,
        wb,
        qb,
        jump_tol,
        eps_w,
        depth - 1,
        out,
    )
}

/// Max |w + D(1 - F(w)) - lambda| over sampled continuity points of F.
fn binding_residual(
    analysis: &UninformedAnalysis,
    policy: &WagePolicy,
    _target_q: f64,
    w_lo: f64,
    w_hi: f64,
    samples: usize,
) -> f64 {
    let atom_wages: Vec<f64> = policy.atoms().iter().map(|a| a.0).collect();
    let span = w_hi - w_lo;
    let guard = span * 1e-9;
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let w = w_lo + span * (i as f64 + 0.5) / samples as f64;
        if atom_wages.iter().any(|&a| (a - w).abs() <= guard) {
            continue;
        }
        // the CDF already carries any firing atom at zero, so the market
        // expectation at threshold w is exactly 1 - F(w)
        let q = 1.0 - policy.cdf(w);
        let r = (w + analysis.d.eval(q) - analysis.lambda).abs();
        worst = worst.max(r);
    }
    worst
}

/// Max of F(w_q -) - (1 - q) over the sampled constraint graph
/// G = { (lambda - D(q), 1 - q) } - the feasibility side of the geometry.
fn minorant_violation(analysis: &UninformedAnalysis, policy: &WagePolicy, target_q: f64) -> f64 {
    let n = analysis.d.grid_n();
    let mut worst: f64 = 0.0;
    for i in 0..=n {
        let q = analysis.d.q_at(i) * target_q;
        let w_q = analysis.lambda - analysis.d.eval(q);
        if w_q <= 0.0 {
            continue;
        }
        worst = worst.max(policy.cdf_minus(w_q) - (1.0 - q));
    }
    worst
}
