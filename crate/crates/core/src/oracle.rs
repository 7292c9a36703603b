//! Independent brute-force equilibrium verifier.
//!
//! The enumerators never call the solvers: they scan candidate threshold
//! equilibria directly from the wage policy (quantile intervals, atom mixing
//! boxes) and the exact career-value function, and report every equilibrium
//! found. `fully_implements` turns the record list into a verdict against a
//! target outcome. The module also builds the feasible approximating policies
//! used to certify solver output (atomless stretch, right shift, purification).

use serde::Serialize;
use thiserror::Error;

use crate::environment::{CareerValueFn, EnvError, Environment, InfoMode, DEFAULT_GRID_N};
use crate::numeric::golden_min;
use crate::policy::{PolicyError, WagePolicy};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("scan grid {0} too coarse; need at least 100 points")]
    GridTooCoarse(usize),
    #[error("target profile has {0} entries, environment has {1} types")]
    TargetLength(usize, usize),
    #[error("epsilon {eps} too large: {reason}")]
    BadEpsilon { eps: f64, reason: String },
}

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Scan resolution (points across the scan coordinate).
    pub grid_n: usize,
    /// Max |w + D - lambda| a reported record may carry.
    pub residual_tol: f64,
    /// Distance to the quantile interval accepted as containment.
    pub containment_tol: f64,
    /// Tolerance for matching an outcome against a target.
    pub match_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid_n: 10_000,
            residual_tol: 1e-7,
            containment_tol: 1e-9,
            match_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    FullWork,
    FullShirk,
    Mixed,
}

/// One threshold-strategy equilibrium candidate that survived verification.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumRecord {
    pub class: Classification,
    /// Working probabilities, one per type (uninformed: a single entry).
    pub qs: Vec<f64>,
    /// Threshold wages, one per type.
    pub thresholds: Vec<f64>,
    /// Mixing weight at each type's threshold when it sits on an atom.
    pub mixing: Vec<Option<f64>>,
    /// |w + D - lambda| at the pivotal type; slack used for corner records.
    pub residual: f64,
    /// Extent of a continuum of equilibria in the scan coordinate
    /// (q for uninformed scans, the pivotal threshold wage for informed).
    pub span: Option<(f64, f64)>,
}

/// Full-implementation verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub fully_implements: bool,
    /// Whether the target outcome itself is supported as an equilibrium.
    pub target_supported: bool,
    pub witnesses: Vec<EquilibriumRecord>,
    pub tolerance: f64,
    pub target: Vec<f64>,
}

/// Write records as CSV, one row per record.
pub fn write_records_csv<W: std::io::Write>(
    out: W,
    records: &[EquilibriumRecord],
) -> Result<(), std::io::Error> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "class",
        "qs",
        "thresholds",
        "mixing",
        "residual",
        "span_lo",
        "span_hi",
    ])?;
    for r in records {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.12}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        wtr.write_record([
            format!("{:?}", r.class),
            join(&r.qs),
            join(&r.thresholds),
            r.mixing
                .iter()
                .map(|m| m.map_or("-".to_string(), |x| format!("{x:.6}")))
                .collect::<Vec<_>>()
                .join(";"),
            format!("{:.3e}", r.residual),
            r.span.map_or(String::new(), |s| format!("{:.12}", s.0)),
            r.span.map_or(String::new(), |s| format!("{:.12}", s.1)),
        ])?;
    }
    wtr.flush()
}

fn classify(qs: &[f64], tol: f64) -> Classification {
    if qs.iter().all(|&q| (q - 1.0).abs() <= tol) {
        Classification::FullWork
    } else if qs.iter().all(|&q| q.abs() <= tol) {
        Classification::FullShirk
    } else {
        Classification::Mixed
    }
}

fn mixing_weight(policy: &WagePolicy, w: f64, q: f64) -> Option<f64> {
    let mass = policy.atom_mass_at(w);
    if mass > 0.0 {
        let sigma = (q - (1.0 - policy.cdf(w))) / mass;
        Some(sigma.clamp(0.0, 1.0))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Uninformed enumeration
// ---------------------------------------------------------------------------

struct UninformedScan<'a> {
    env: &'a Environment,
    policy: &'a WagePolicy,
    d: CareerValueFn,
    lambda: f64,
    cfg: OracleConfig,
}

impl UninformedScan<'_> {
    /// Signed gaps of the indifference wage to the quantile interval:
    /// (over, under) with over > 0 when lambda - D(q) lies below the interval
    /// and under > 0 when it lies above. Containment needs both <= 0.
    fn gaps(&self, q: f64) -> (f64, f64) {
        let w_star = self.lambda - self.env.career_value(q);
        let (lo, hi) = self
            .policy
            .inverse_set(1.0 - q)
            .expect("q in (0,1) maps to a valid quantile");
        (lo - w_star, w_star - hi)
    }

    fn dist(&self, q: f64) -> f64 {
        let (over, under) = self.gaps(q);
        over.max(under).max(0.0)
    }

    fn contained(&self, q: f64) -> bool {
        let (over, under) = self.gaps(q);
        over <= self.cfg.containment_tol && under <= self.cfg.containment_tol
    }

    fn record_at(&self, q: f64, span: Option<(f64, f64)>) -> EquilibriumRecord {
        let w_star = self.lambda - self.env.career_value(q);
        let (lo, hi) = self.policy.inverse_set(1.0 - q).unwrap();
        let w = w_star.clamp(lo, hi.min(f64::MAX));
        EquilibriumRecord {
            class: classify(&[q], self.cfg.match_tol),
            qs: vec![q],
            thresholds: vec![w],
            mixing: vec![mixing_weight(self.policy, w, q)],
            residual: self.dist(q),
            span,
        }
    }
}

/// Enumerate all threshold equilibria the wage policy induces (uninformed).
pub fn enumerate_uninformed(
    env: &Environment,
    policy: &WagePolicy,
    q_grid_n: usize,
) -> Result<Vec<EquilibriumRecord>, OracleError> {
    enumerate_uninformed_with(env, policy, q_grid_n, OracleConfig::default())
}

pub fn enumerate_uninformed_with(
    env: &Environment,
    policy: &WagePolicy,
    q_grid_n: usize,
    cfg: OracleConfig,
) -> Result<Vec<EquilibriumRecord>, OracleError> {
    if env.info_mode() != InfoMode::Uninformed {
        return Err(EnvError::WrongMode {
            expected: InfoMode::Uninformed,
            actual: env.info_mode(),
        }
        .into());
    }
    if q_grid_n < 100 {
        return Err(OracleError::GridTooCoarse(q_grid_n));
    }
    let scan = UninformedScan {
        env,
        policy,
        d: env.career_value_fn(DEFAULT_GRID_N),
        lambda: env.lambda_uninformed(),
        cfg,
    };
    let mut records: Vec<EquilibriumRecord> = Vec::new();

    // corner equilibria, by exact support-bound comparison
    let (min_supp, max_supp) = policy.support_bounds();
    let d1 = scan.d.eval(1.0);
    let d0 = scan.d.eval(0.0);
    if min_supp >= scan.lambda - d1 - cfg.residual_tol {
        records.push(EquilibriumRecord {
            class: Classification::FullWork,
            qs: vec![1.0],
            thresholds: vec![min_supp],
            mixing: vec![mixing_weight(policy, min_supp, 1.0)],
            residual: (scan.lambda - d1 - min_supp).max(0.0),
            span: None,
        });
    }
    if max_supp <= scan.lambda - d0 + cfg.residual_tol {
        records.push(EquilibriumRecord {
            class: Classification::FullShirk,
            qs: vec![0.0],
            thresholds: vec![max_supp],
            mixing: vec![mixing_weight(policy, max_supp, 0.0)],
            residual: (max_supp - (scan.lambda - d0)).max(0.0),
            span: None,
        });
    }

    // interior scan values: uniform grid plus atom-induced breakpoints
    let mut qs: Vec<f64> = (1..q_grid_n).map(|i| i as f64 / q_grid_n as f64).collect();
    for &(a, _) in policy.atoms() {
        for t in [policy.cdf(a), policy.cdf_minus(a)] {
            let q = 1.0 - t;
            if q > 0.0 && q < 1.0 {
                qs.push(q);
            }
        }
    }
    qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    qs.dedup();

    let mask: Vec<bool> = qs.iter().map(|&q| scan.contained(q)).collect();
    let gaps: Vec<(f64, f64)> = qs.iter().map(|&q| scan.gaps(q)).collect();

    // masked runs -> records (point or interval)
    let mut i = 0;
    while i < qs.len() {
        if mask[i] {
            let mut j = i;
            while j + 1 < qs.len() && mask[j + 1] {
                j += 1;
            }
            let q_lo = if i == 0 {
                refine_boundary(&scan, 0.0, qs[i], false)
            } else {
                refine_boundary(&scan, qs[i - 1], qs[i], false)
            };
            let q_hi = if j == qs.len() - 1 {
                refine_boundary(&scan, qs[j], 1.0, true)
            } else {
                refine_boundary(&scan, qs[j], qs[j + 1], true)
            };
            let span = if q_hi - q_lo > 1.0 / q_grid_n as f64 {
                Some((q_lo, q_hi))
            } else {
                None
            };
            records.push(scan.record_at(0.5 * (q_lo + q_hi), span));
            i = j + 1;
        } else {
            i += 1;
        }
    }

    // sign changes of either gap between unmasked neighbors
    for i in 0..qs.len().saturating_sub(1) {
        if mask[i] || mask[i + 1] {
            continue;
        }
        for pick in [0usize, 1usize] {
            let ga = if pick == 0 { gaps[i].0 } else { gaps[i].1 };
            let gb = if pick == 0 {
                gaps[i + 1].0
            } else {
                gaps[i + 1].1
            };
            if ga.signum() != gb.signum() && ga != 0.0 && gb != 0.0 {
                let g = |q: f64| {
                    let (o, u) = scan.gaps(q);
                    if pick == 0 {
                        o
                    } else {
                        u
                    }
                };
                let q_cross = crate::numeric::bisect(g, qs[i], qs[i + 1], 1e-13);
                if scan.contained(q_cross) {
                    records.push(scan.record_at(q_cross, None));
                }
            }
        }
    }

    // tangential touches: local minima of the containment distance
    for i in 1..qs.len().saturating_sub(1) {
        if mask[i - 1] || mask[i] || mask[i + 1] {
            continue;
        }
        let m_prev = scan.dist(qs[i - 1]);
        let m_i = scan.dist(qs[i]);
        let m_next = scan.dist(qs[i + 1]);
        if m_i < m_prev && m_i <= m_next {
            let (q_t, m_t) = golden_min(|q| scan.dist(q), qs[i - 1], qs[i + 1], 1e-12);
            if m_t <= cfg.containment_tol {
                records.push(scan.record_at(q_t, None));
            }
        }
    }

    dedupe_records(&mut records, 1.0 / q_grid_n as f64);
    Ok(records)
}

/// Bisect the boundary of the containment set between a contained and an
/// uncontained point (or clamp at the domain edge).
fn refine_boundary(scan: &UninformedScan, lo: f64, hi: f64, upward: bool) -> f64 {
    // when upward, `lo` is contained and `hi` is not (or is the domain edge);
    // when downward, `hi` is contained
    let mut a = lo;
    let mut b = hi;
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        let inside = mid > 0.0 && mid < 1.0 && scan.contained(mid);
        if upward == inside {
            a = mid;
        } else {
            b = mid;
        }
        if (b - a).abs() < 1e-13 {
            break;
        }
    }
    if upward {
        a
    } else {
        b
    }
}

fn dedupe_records(records: &mut Vec<EquilibriumRecord>, tol: f64) {
    records.sort_by(|a, b| {
        a.qs[0]
            .partial_cmp(&b.qs[0])
            .unwrap()
            .then(a.thresholds[0].partial_cmp(&b.thresholds[0]).unwrap())
    });
    records.dedup_by(|a, b| {
        a.class == b.class
            && a.qs.len() == b.qs.len()
            && a.qs.iter().zip(&b.qs).all(|(x, y)| (x - y).abs() <= tol)
            && a.span.is_none() == b.span.is_none()
    });
}

/// Verdict: does the policy induce the target total working probability in
/// every equilibrium?
pub fn fully_implements(
    env: &Environment,
    policy: &WagePolicy,
    target: f64,
) -> Result<Verdict, OracleError> {
    fully_implements_with(env, policy, target, OracleConfig::default())
}

pub fn fully_implements_with(
    env: &Environment,
    policy: &WagePolicy,
    target: f64,
    cfg: OracleConfig,
) -> Result<Verdict, OracleError> {
    let records = enumerate_uninformed_with(env, policy, cfg.grid_n, cfg)?;
    let mt = cfg.match_tol;
    let matches = |r: &EquilibriumRecord| -> bool {
        let ok_rep = (r.qs[0] - target).abs() <= mt;
        match r.span {
            Some((a, b)) => ok_rep && (a - target).abs() <= mt && (b - target).abs() <= mt,
            None => ok_rep,
        }
    };
    let target_supported = records.iter().any(matches);
    let witnesses: Vec<EquilibriumRecord> = records.into_iter().filter(|r| !matches(r)).collect();
    Ok(Verdict {
        fully_implements: target_supported && witnesses.is_empty(),
        target_supported,
        witnesses,
        tolerance: cfg.residual_tol,
        target: vec![target],
    })
}

/// Max violation of the directional equilibrium-breaking inequality
/// w + D(q) >= lambda over scanned q < 1 (0 for a policy that breaks all bad
/// equilibria in the aggressive direction).
pub fn eb_direction_violation(
    env: &Environment,
    policy: &WagePolicy,
    q_grid_n: usize,
) -> Result<f64, OracleError> {
    if env.info_mode() != InfoMode::Uninformed {
        return Err(EnvError::WrongMode {
            expected: InfoMode::Uninformed,
            actual: env.info_mode(),
        }
        .into());
    }
    let lambda = env.lambda_uninformed();
    let mut worst: f64 = 0.0;
    for i in 0..q_grid_n {
        let q = i as f64 / q_grid_n as f64;
        let (lo, _hi) = policy.inverse_set(1.0 - q)?;
        worst = worst.max(lambda - env.career_value(q) - lo);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Informed enumeration (binary and multi-type, one-dimensional threshold scan)
// ---------------------------------------------------------------------------

struct InformedScan<'a> {
    env: &'a Environment,
    policy: &'a WagePolicy,
    lambdas: Vec<f64>,
    /// offsets of each type's threshold above the pivotal (last) type's
    offsets: Vec<f64>,
    cfg: OracleConfig,
}

impl<'a> InformedScan<'a> {
    fn new(env: &'a Environment, policy: &'a WagePolicy, cfg: OracleConfig) -> Self {
        let lambdas = env.lambdas();
        let last = lambdas[lambdas.len() - 1];
        let offsets = lambdas.iter().map(|l| l - last).collect();
        InformedScan {
            env,
            policy,
            lambdas,
            offsets,
            cfg,
        }
    }

    fn pivot_lambda(&self) -> f64 {
        self.lambdas[self.lambdas.len() - 1]
    }

    /// Per-type working-probability box at pivot threshold w.
    fn profile_box(&self, w: f64) -> Vec<(f64, f64)> {
        self.offsets
            .iter()
            .map(|off| {
                let o = w + off;
                (1.0 - self.policy.cdf(o), 1.0 - self.policy.cdf_minus(o))
            })
            .collect()
    }

    fn residual_at(&self, w: f64, qs: &[f64]) -> f64 {
        w + self.env.career_value_profile(qs) - self.pivot_lambda()
    }

    /// Residual at the lower corner of the box (degenerate almost everywhere).
    fn point_residual(&self, w: f64) -> f64 {
        let qs: Vec<f64> = self.profile_box(w).iter().map(|b| b.0).collect();
        self.residual_at(w, &qs)
    }

    /// Range of the residual over the mixing box, by corner and lattice
    /// sampling with a short coordinate refinement.
    fn residual_range(&self, w: f64) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let boxes = self.profile_box(w);
        let free: Vec<usize> = boxes
            .iter()
            .enumerate()
            .filter(|(_, b)| b.1 - b.0 > 1e-13)
            .map(|(i, _)| i)
            .collect();
        let base: Vec<f64> = boxes.iter().map(|b| b.0).collect();
        if free.is_empty() {
            let r = self.residual_at(w, &base);
            return (r, r, base.clone(), base);
        }
        let levels = if free.len() <= 2 { 9 } else { 4 };
        let mut qmin = base.clone();
        let mut qmax = base.clone();
        let mut rmin = f64::INFINITY;
        let mut rmax = f64::NEG_INFINITY;
        let total = levels_pow(levels, free.len());
        let mut qs = base.clone();
        for idx in 0..total {
            let mut rem = idx;
            for &fi in &free {
                let s = rem % levels;
                rem /= levels;
                let (lo, hi) = boxes[fi];
                qs[fi] = lo + (hi - lo) * s as f64 / (levels - 1) as f64;
            }
            let r = self.residual_at(w, &qs);
            if r < rmin {
                rmin = r;
                qmin.copy_from_slice(&qs);
            }
            if r > rmax {
                rmax = r;
                qmax.copy_from_slice(&qs);
            }
        }
        // short coordinate refinement of both extremes
        let refine = |target_min: bool, qv: &mut Vec<f64>| -> f64 {
            for _ in 0..2 {
                for &fi in &free {
                    let (lo, hi) = boxes[fi];
                    let f = |x: f64| {
                        let mut qq = qv.clone();
                        qq[fi] = x;
                        let r = self.residual_at(w, &qq);
                        if target_min {
                            r
                        } else {
                            -r
                        }
                    };
                    let (x, _) = golden_min(f, lo, hi, 1e-11);
                    qv[fi] = x;
                }
            }
            self.residual_at(w, qv)
        };
        rmin = rmin.min(refine(true, &mut qmin));
        rmax = rmax.max(refine(false, &mut qmax));
        (rmin, rmax, qmin, qmax)
    }

    fn contained(&self, w: f64) -> bool {
        let (rmin, rmax, _, _) = self.residual_range(w);
        rmin <= self.cfg.containment_tol && rmax >= -self.cfg.containment_tol
    }

    /// Saturated boxes parameterize the corner outcomes, handled separately.
    fn saturated(&self, w: f64) -> bool {
        let boxes = self.profile_box(w);
        boxes.iter().all(|b| b.0 >= 1.0 - 1e-15) || boxes.iter().all(|b| b.1 <= 1e-15)
    }

    fn record_at(&self, w: f64, span: Option<(f64, f64)>) -> EquilibriumRecord {
        // pick the box point with the smallest |residual|
        let (rmin, rmax, qmin, qmax) = self.residual_range(w);
        let qs = if rmin > 0.0 {
            qmin
        } else if rmax < 0.0 {
            qmax
        } else {
            self.root_between(w, qmax, qmin)
        };
        let thresholds: Vec<f64> = self.offsets.iter().map(|off| w + off).collect();
        let mixing: Vec<Option<f64>> = thresholds
            .iter()
            .zip(&qs)
            .map(|(&t, &q)| mixing_weight(self.policy, t, q))
            .collect();
        let residual = self.residual_at(w, &qs).abs();
        EquilibriumRecord {
            class: classify(&qs, self.cfg.match_tol),
            qs,
            thresholds,
            mixing,
            residual,
            span,
        }
    }

    /// Line-search a zero of the residual between two box points with
    /// residuals of opposite sign.
    fn root_between(&self, w: f64, q_neg: Vec<f64>, q_pos: Vec<f64>) -> Vec<f64> {
        let f = |t: f64| {
            let qs: Vec<f64> = q_neg
                .iter()
                .zip(&q_pos)
                .map(|(a, b)| a + t * (b - a))
                .collect();
            self.residual_at(w, &qs)
        };
        let t = crate::numeric::bisect(f, 0.0, 1.0, 1e-13);
        q_neg
            .iter()
            .zip(&q_pos)
            .map(|(a, b)| a + t * (b - a))
            .collect()
    }
}

fn levels_pow(base: usize, exp: usize) -> usize {
    let mut out = 1usize;
    for _ in 0..exp {
        out = out.saturating_mul(base);
    }
    out
}

/// Enumerate informed threshold equilibria by scanning the pivotal (lowest
/// effective cost) type's threshold wage. Works for any K >= 2; the binary
/// case is the specialization where the two thresholds differ by the cost gap.
pub fn enumerate_informed(
    env: &Environment,
    policy: &WagePolicy,
    w_grid_n: usize,
) -> Result<Vec<EquilibriumRecord>, OracleError> {
    enumerate_informed_with(env, policy, w_grid_n, OracleConfig::default())
}

pub fn enumerate_informed_with(
    env: &Environment,
    policy: &WagePolicy,
    w_grid_n: usize,
    cfg: OracleConfig,
) -> Result<Vec<EquilibriumRecord>, OracleError> {
    if env.info_mode() != InfoMode::Informed {
        return Err(EnvError::WrongMode {
            expected: InfoMode::Informed,
            actual: env.info_mode(),
        }
        .into());
    }
    if w_grid_n < 100 {
        return Err(OracleError::GridTooCoarse(w_grid_n));
    }
    let scan = InformedScan::new(env, policy, cfg);
    let k = env.num_types();
    let mut records: Vec<EquilibriumRecord> = Vec::new();

    // corners
    let (min_supp, max_supp) = policy.support_bounds();
    let ones = vec![1.0; k];
    let zeros = vec![0.0; k];
    let d_ones = env.career_value_profile(&ones);
    let d_zeros = env.career_value_profile(&zeros);
    let lambda_top = scan.lambdas[0]; // largest effective cost
    let lambda_piv = scan.pivot_lambda();
    if min_supp >= lambda_top - d_ones - cfg.residual_tol {
        records.push(EquilibriumRecord {
            class: Classification::FullWork,
            qs: ones.clone(),
            thresholds: scan.lambdas.iter().map(|l| l - d_ones).collect(),
            mixing: vec![None; k],
            residual: (lambda_top - d_ones - min_supp).max(0.0),
            span: None,
        });
    }
    if max_supp <= lambda_piv - d_zeros + cfg.residual_tol {
        records.push(EquilibriumRecord {
            class: Classification::FullShirk,
            qs: zeros,
            thresholds: scan.lambdas.iter().map(|l| l - d_zeros).collect(),
            mixing: vec![None; k],
            residual: (max_supp - (lambda_piv - d_zeros)).max(0.0),
            span: None,
        });
    }

    // scan range: beyond it, every type's tail is saturated
    let full_gap = scan.offsets[0];
    let margin = 2.0 * (max_supp - min_supp + full_gap + 1.0) / w_grid_n as f64;
    let w_start = min_supp - full_gap - margin;
    let w_end = max_supp + margin;
    let mut wsc: Vec<f64> = (0..=w_grid_n)
        .map(|i| w_start + (w_end - w_start) * i as f64 / w_grid_n as f64)
        .collect();
    for &(a, _) in policy.atoms() {
        for off in &scan.offsets {
            let w = a - off;
            if w > w_start && w < w_end {
                wsc.push(w);
            }
        }
    }
    wsc.sort_by(|a, b| a.partial_cmp(b).unwrap());
    wsc.dedup();
    let wsc: Vec<f64> = wsc.into_iter().filter(|&w| !scan.saturated(w)).collect();

    let mask: Vec<bool> = wsc.iter().map(|&w| scan.contained(w)).collect();
    let point_res: Vec<f64> = wsc.iter().map(|&w| scan.point_residual(w)).collect();

    // masked runs
    let grid_h = (w_end - w_start) / w_grid_n as f64;
    let mut i = 0;
    while i < wsc.len() {
        if mask[i] {
            let mut j = i;
            while j + 1 < wsc.len() && mask[j + 1] {
                j += 1;
            }
            let w_lo = if i == 0 {
                wsc[i]
            } else {
                refine_w_boundary(&scan, wsc[i - 1], wsc[i])
            };
            let w_hi = if j == wsc.len() - 1 {
                wsc[j]
            } else {
                refine_w_boundary(&scan, wsc[j + 1], wsc[j])
            };
            let span = if (w_hi - w_lo).abs() > grid_h {
                Some((w_lo.min(w_hi), w_lo.max(w_hi)))
            } else {
                None
            };
            records.push(scan.record_at(0.5 * (w_lo + w_hi), span));
            i = j + 1;
        } else {
            i += 1;
        }
    }

    // sign changes of the point residual between unmasked neighbors
    for i in 0..wsc.len().saturating_sub(1) {
        if mask[i] || mask[i + 1] {
            continue;
        }
        if point_res[i].signum() != point_res[i + 1].signum() {
            let w_cross =
                crate::numeric::bisect(|w| scan.point_residual(w), wsc[i], wsc[i + 1], 1e-13);
            if scan.contained(w_cross) {
                records.push(scan.record_at(w_cross, None));
            }
        }
    }

    // tangential touches of |point residual|
    for i in 1..wsc.len().saturating_sub(1) {
        if mask[i - 1] || mask[i] || mask[i + 1] {
            continue;
        }
        if point_res[i].abs() < point_res[i - 1].abs()
            && point_res[i].abs() <= point_res[i + 1].abs()
        {
            let (w_t, r_t) = golden_min(
                |w| scan.point_residual(w).abs(),
                wsc[i - 1],
                wsc[i + 1],
                1e-12,
            );
            if r_t <= cfg.containment_tol {
                records.push(scan.record_at(w_t, None));
            }
        }
    }

    dedupe_records(&mut records, grid_h);
    Ok(records)
}

fn refine_w_boundary(scan: &InformedScan, w_out: f64, w_in: f64) -> f64 {
    let mut a = w_out;
    let mut b = w_in;
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if scan.contained(mid) && !scan.saturated(mid) {
            b = mid;
        } else {
            a = mid;
        }
        if (b - a).abs() < 1e-13 {
            break;
        }
    }
    b
}

/// Verdict for an informed target working-probability profile (internal type
/// order: decreasing effective cost).
pub fn fully_implements_informed(
    env: &Environment,
    policy: &WagePolicy,
    target: &[f64],
) -> Result<Verdict, OracleError> {
    fully_implements_informed_with(env, policy, target, OracleConfig::default())
}

pub fn fully_implements_informed_with(
    env: &Environment,
    policy: &WagePolicy,
    target: &[f64],
    cfg: OracleConfig,
) -> Result<Verdict, OracleError> {
    if target.len() != env.num_types() {
        return Err(OracleError::TargetLength(target.len(), env.num_types()));
    }
    let records = enumerate_informed_with(env, policy, cfg.grid_n, cfg)?;
    let mt = cfg.match_tol;
    let scan = InformedScan::new(env, policy, cfg);
    let profile_matches = |w: f64| -> bool {
        scan.profile_box(w)
            .iter()
            .zip(target)
            .all(|(&(lo, hi), &t)| t >= lo - mt && t <= hi + mt)
    };
    let matches = |r: &EquilibriumRecord| -> bool {
        let rep = r.qs.iter().zip(target).all(|(q, t)| (q - t).abs() <= mt);
        match r.span {
            Some((a, b)) => rep && profile_matches(a) && profile_matches(b),
            None => rep,
        }
    };
    let target_supported = records.iter().any(matches);
    let witnesses: Vec<EquilibriumRecord> = records.into_iter().filter(|r| !matches(r)).collect();
    Ok(Verdict {
        fully_implements: target_supported && witnesses.is_empty(),
        target_supported,
        witnesses,
        tolerance: cfg.residual_tol,
        target: target.to_vec(),
    })
}

// ---------------------------------------------------------------------------
// Approximating policies (feasibility certificates)
// ---------------------------------------------------------------------------

fn check_atom_spacing(policy: &WagePolicy, eps: f64) -> Result<(), OracleError> {
    if eps <= 0.0 {
        return Err(OracleError::BadEpsilon {
            eps,
            reason: "must be positive".into(),
        });
    }
    let atoms = policy.atoms();
    for pair in atoms.windows(2) {
        let gap = pair[1].0 - pair[0].0;
        if eps >= gap {
            return Err(OracleError::BadEpsilon {
                eps,
                reason: format!("atoms only {gap} apart"),
            });
        }
    }
    Ok(())
}

/// Atomless policy strictly below the input on the interior of its support:
/// the quantile function is shifted by eps * t, so mass spreads upward and
/// every CDF level is reached strictly later.
pub fn approximating_policy_uninformed(
    policy: &WagePolicy,
    eps: f64,
) -> Result<WagePolicy, OracleError> {
    approximating_policy_uninformed_above(policy, eps, 0.0)
}

/// Like [`approximating_policy_uninformed`] but leaving the policy untouched
/// at CDF levels up to `keep_level`. Partial-working solutions pass their
/// firing mass 1 - Q here so the implemented outcome stays exactly on target;
/// only the dispersed part above is perturbed (and made atomless).
pub fn approximating_policy_uninformed_above(
    policy: &WagePolicy,
    eps: f64,
    keep_level: f64,
) -> Result<WagePolicy, OracleError> {
    check_atom_spacing(policy, eps)?;
    if !(0.0..1.0).contains(&keep_level) {
        return Err(OracleError::BadEpsilon {
            eps,
            reason: format!("keep level {keep_level} outside [0, 1)"),
        });
    }
    let poly = policy.quantile_polyline();
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    let mut cleaned: Vec<(f64, f64)> = Vec::with_capacity(poly.len());
    let stretch = |t: f64| (t - keep_level).max(0.0) / (1.0 - keep_level);
    // kept atoms stay atoms; the polyline above keep_level becomes one piece
    for &(w, m) in policy.atoms() {
        if policy.cdf(w) <= keep_level + 1e-12 {
            atoms.push((w, m));
        }
    }
    for &(t, w) in &poly {
        if t < keep_level - 1e-12 {
            continue;
        }
        let w_shift = w + eps * stretch(t);
        match cleaned.last() {
            Some(&(lw, lt)) => {
                if w_shift > lw + 1e-15 {
                    cleaned.push((w_shift, t.max(lt)));
                } else if t > lt {
                    cleaned.last_mut().unwrap().1 = t;
                }
            }
            None => cleaned.push((w_shift, t)),
        }
    }
    Ok(WagePolicy::new(atoms, vec![cleaned])?)
}

/// Right-shift by eps, with a double shift below `double_shift_below` (the
/// low-type threshold atom of two-mass-point solutions) and an optional
/// linearization at target thresholds making the target equilibrium pure.
pub fn approximating_policy_informed(
    policy: &WagePolicy,
    eps: f64,
    double_shift_below: Option<f64>,
    purify_at: &[(f64, f64)],
) -> Result<WagePolicy, OracleError> {
    check_atom_spacing(policy, eps)?;
    // tail polyline of the input: (wage, tail), verticals encode atoms
    let mut tail_knots: Vec<(f64, f64)> = Vec::new();
    tail_knots.push((policy.min_support(), 1.0));
    for &w in &policy.breakpoints() {
        let r_left = policy.tail(w);
        let r_right = 1.0 - policy.cdf(w);
        if tail_knots
            .last()
            .is_none_or(|&(lw, lr)| (lw - w).abs() > 1e-15 || (lr - r_left).abs() > 1e-15)
        {
            tail_knots.push((w, r_left));
        }
        if r_right < r_left {
            tail_knots.push((w, r_right));
        }
    }

    let mut knots: Vec<(f64, f64)> = match double_shift_below {
        None => tail_knots.iter().map(|&(w, r)| (w + eps, r)).collect(),
        Some(cut) => {
            // knots strictly below the cut atom move by 2 eps; the flat run
            // ending at the cut must be wide enough to absorb the extra shift
            let tail_at_cut = policy.tail(cut);
            let run_start = tail_knots
                .iter()
                .filter(|&&(w, r)| w < cut && (r - tail_at_cut).abs() < 1e-12)
                .map(|&(w, _)| w)
                .fold(f64::INFINITY, f64::min);
            let flat_width = cut - run_start;
            if !(flat_width.is_finite() && flat_width > 2.0 * eps) {
                return Err(OracleError::BadEpsilon {
                    eps,
                    reason: format!(
                        "flat run below the atom at {cut} is only {flat_width} wide;                          the double shift needs twice the shift in slack"
                    ),
                });
            }
            tail_knots
                .iter()
                .map(|&(w, r)| {
                    if w < cut {
                        (w + 2.0 * eps, r)
                    } else {
                        (w + eps, r)
                    }
                })
                .collect()
        }
    };

    // purification ramps: force R(threshold) = Q_k via a linear run
    for &(w_k, q_k) in purify_at {
        let r_before = polyline_tail(&knots, w_k - eps);
        let r_at = polyline_tail(&knots, w_k);
        let r_after = polyline_tail_plus(&knots, w_k);
        if q_k > r_before + 1e-12 || q_k < r_after - 1e-12 {
            return Err(OracleError::BadEpsilon {
                eps,
                reason: format!(
                    "cannot purify at {w_k}: target {q_k} outside [{r_after}, {r_before}]"
                ),
            });
        }
        if (r_at - q_k).abs() <= 1e-15 {
            continue; // already pure at this threshold
        }
        knots.retain(|&(w, _)| w <= w_k - eps || w > w_k);
        knots.push((w_k - eps, r_before));
        knots.push((w_k, q_k));
        if r_after < q_k - 1e-15 {
            knots.push((w_k, r_after));
        }
        knots.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(b.1.partial_cmp(&a.1).unwrap())
        });
    }
    Ok(WagePolicy::from_tail_curve(&knots)?)
}

/// Left-continuous tail of a (wage, tail) polyline with verticals.
fn polyline_tail(knots: &[(f64, f64)], w: f64) -> f64 {
    if w <= knots[0].0 {
        return 1.0;
    }
    if w > knots[knots.len() - 1].0 {
        return 0.0;
    }
    let mut prev = knots[0];
    for &(kw, kr) in knots.iter() {
        if kw >= w {
            if kw == w {
                // at a vertical the left-continuous value is the upper one
                return kr.max(if prev.0 == w { prev.1 } else { kr });
            }
            // strictly inside the segment (prev, (kw, kr))
            if kw > prev.0 {
                return prev.1 + (w - prev.0) * (kr - prev.1) / (kw - prev.0);
            }
            return prev.1;
        }
        prev = (kw, kr);
    }
    prev.1
}

/// Right limit of the tail of a (wage, tail) polyline.
fn polyline_tail_plus(knots: &[(f64, f64)], w: f64) -> f64 {
    if w < knots[0].0 {
        return 1.0;
    }
    if w >= knots[knots.len() - 1].0 {
        return 0.0;
    }
    let mut val = 1.0;
    let mut prev = knots[0];
    for &(kw, kr) in knots.iter() {
        if kw <= w {
            val = kr;
        } else {
            if prev.0 < w && kw > prev.0 {
                return prev.1 + (w - prev.0) * (kr - prev.1) / (kw - prev.0);
            }
            break;
        }
        prev = (kw, kr);
    }
    val
}
