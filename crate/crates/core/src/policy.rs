//! Mixed discrete-continuous wage distributions: atoms plus piecewise-linear
//! CDF pieces, with exact moments, quantile sets, the tail view
//! R(w) = 1 - F(w-), and JSON/CSV export.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Atoms below this mass are dropped at normalization.
pub const ATOM_MIN_MASS: f64 = 1e-12;
/// Gap tolerance when merging growth intervals into support intervals.
pub const SUPPORT_GAP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("total mass {0} differs from 1 beyond tolerance")]
    MassNotOne(f64),
    #[error("invalid atom: {0}")]
    BadAtom(String),
    #[error("invalid piece: {0}")]
    BadPiece(String),
    #[error("quantile {0} outside [0, 1]")]
    QuantileOutOfRange(f64),
    #[error("invalid tail curve: {0}")]
    BadTailCurve(String),
}

/// One absolutely-continuous stretch of the CDF.
///
/// Knots are (wage, cumulative mass within this piece); the first cumulative
/// is 0, cumulatives are nondecreasing, wages strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    knots: Vec<(f64, f64)>,
}

impl Piece {
    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }
    pub fn start(&self) -> f64 {
        self.knots[0].0
    }
    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }
    pub fn mass(&self) -> f64 {
        self.knots[self.knots.len() - 1].1
    }

    /// Cumulative mass of this piece at `w` (0 before start, full after end).
    fn cum_at(&self, w: f64) -> f64 {
        crate::numeric::pwl_eval(&self.knots, w)
    }
}

/// A distribution over nonnegative success-contingent wages.
#[derive(Debug, Clone, PartialEq)]
pub struct WagePolicy {
    atoms: Vec<(f64, f64)>,
    pieces: Vec<Piece>,
    /// prefix sums over atom masses
    atom_cum: Vec<f64>,
    /// total piece mass strictly before each piece
    piece_cum_before: Vec<f64>,
}

impl WagePolicy {
    /// Build and normalize a policy. Atoms lighter than [`ATOM_MIN_MASS`] are
    /// dropped, duplicate atom wages merged, and all masses rescaled so the
    /// total is exactly 1 (rejects inputs off by more than 1e-9).
    pub fn new(atoms: Vec<(f64, f64)>, pieces: Vec<Vec<(f64, f64)>>) -> Result<Self, PolicyError> {
        let mut atoms: Vec<(f64, f64)> = atoms
            .into_iter()
            .filter(|&(_, m)| m >= ATOM_MIN_MASS)
            .collect();
        for &(w, m) in &atoms {
            if !(w.is_finite() && w >= 0.0) || !m.is_finite() {
                return Err(PolicyError::BadAtom(format!("atom ({w}, {m})")));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // merge duplicates
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (w, m) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == w => last.1 += m,
                _ => merged.push((w, m)),
            }
        }
        let atoms = merged;

        let mut built: Vec<Piece> = Vec::with_capacity(pieces.len());
        for knots in pieces {
            if knots.len() < 2 {
                return Err(PolicyError::BadPiece("needs at least two knots".into()));
            }
            let mut knots = knots;
            // trim zero-growth lead/tail knots
            while knots.len() > 2 && (knots[1].1 - knots[0].1).abs() < ATOM_MIN_MASS {
                knots.remove(0);
            }
            while knots.len() > 2
                && (knots[knots.len() - 1].1 - knots[knots.len() - 2].1).abs() < ATOM_MIN_MASS
            {
                knots.pop();
            }
            let base = knots[0].1;
            let mut rel: Vec<(f64, f64)> = Vec::with_capacity(knots.len());
            for (i, &(w, c)) in knots.iter().enumerate() {
                if !(w.is_finite() && w >= 0.0) {
                    return Err(PolicyError::BadPiece(format!("knot wage {w}")));
                }
                if i > 0 {
                    if w <= rel[i - 1].0 {
                        return Err(PolicyError::BadPiece(
                            "knot wages must strictly increase".into(),
                        ));
                    }
                    if c - base < rel[i - 1].1 - 1e-12 {
                        return Err(PolicyError::BadPiece(
                            "cumulative mass must be nondecreasing".into(),
                        ));
                    }
                }
                rel.push((w, (c - base).max(rel.last().map_or(0.0, |k| k.1))));
            }
            if rel[rel.len() - 1].1 >= ATOM_MIN_MASS {
                built.push(Piece { knots: rel });
            }
        }
        built.sort_by(|a, b| a.start().partial_cmp(&b.start()).unwrap());
        for w in built.windows(2) {
            if w[1].start() < w[0].end() - 1e-12 {
                return Err(PolicyError::BadPiece(format!(
                    "pieces overlap near {}",
                    w[1].start()
                )));
            }
        }

        let total: f64 =
            atoms.iter().map(|a| a.1).sum::<f64>() + built.iter().map(|p| p.mass()).sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(PolicyError::MassNotOne(total));
        }
        let scale = 1.0 / total;
        let atoms: Vec<(f64, f64)> = atoms.into_iter().map(|(w, m)| (w, m * scale)).collect();
        let pieces: Vec<Piece> = built
            .into_iter()
            .map(|p| Piece {
                knots: p.knots.into_iter().map(|(w, c)| (w, c * scale)).collect(),
            })
            .collect();

        let mut atom_cum = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for &(_, m) in &atoms {
            acc += m;
            atom_cum.push(acc);
        }
        let mut piece_cum_before = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            piece_cum_before.push(acc);
            acc += p.mass();
        }
        Ok(WagePolicy {
            atoms,
            pieces,
            atom_cum,
            piece_cum_before,
        })
    }

    /// Point mass at a single wage.
    pub fn degenerate(w: f64) -> Self {
        WagePolicy::new(vec![(w, 1.0)], vec![]).expect("degenerate policy is valid")
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }
    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn atom_mass_at(&self, w: f64) -> f64 {
        match self
            .atoms
            .binary_search_by(|a| a.0.partial_cmp(&w).unwrap())
        {
            Ok(i) => self.atoms[i].1,
            Err(_) => 0.0,
        }
    }

    /// Right-continuous CDF.
    pub fn cdf(&self, w: f64) -> f64 {
        let atom_part = {
            let idx = self.atoms.partition_point(|a| a.0 <= w);
            if idx == 0 {
                0.0
            } else {
                self.atom_cum[idx - 1]
            }
        };
        atom_part + self.piece_cdf(w)
    }

    /// Left limit F(w-).
    pub fn cdf_minus(&self, w: f64) -> f64 {
        let atom_part = {
            let idx = self.atoms.partition_point(|a| a.0 < w);
            if idx == 0 {
                0.0
            } else {
                self.atom_cum[idx - 1]
            }
        };
        atom_part + self.piece_cdf(w)
    }

    fn piece_cdf(&self, w: f64) -> f64 {
        let idx = self.pieces.partition_point(|p| p.start() <= w);
        if idx == 0 {
            return 0.0;
        }
        let p = &self.pieces[idx - 1];
        self.piece_cum_before[idx - 1] + p.cum_at(w)
    }

    /// Tail probability R(w) = 1 - F(w-) = mass on [w, infinity).
    pub fn tail(&self, w: f64) -> f64 {
        1.0 - self.cdf_minus(w)
    }

    /// Closed wage interval where quantile `t` is attained:
    /// `{ w : F(w-) <= t <= F(w) }`. The upper end is infinite for t = 1.
    pub fn inverse_set(&self, t: f64) -> Result<(f64, f64), PolicyError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(PolicyError::QuantileOutOfRange(t));
        }
        let bks = self.breakpoints();
        debug_assert!(!bks.is_empty());
        // lo: smallest w with F(w) >= t
        let lo = if t <= 0.0 {
            0.0
        } else {
            let i = bks.partition_point(|&w| self.cdf(w) < t);
            if i >= bks.len() {
                // t above reachable cdf only by rounding; clamp to max support
                bks[bks.len() - 1]
            } else {
                let w_i = bks[i];
                if self.cdf_minus(w_i) >= t && i > 0 {
                    // crossed inside the ramp (w_{i-1}, w_i)
                    let w_prev = bks[i - 1];
                    let f0 = self.cdf(w_prev);
                    let f1 = self.cdf_minus(w_i);
                    if f1 > f0 {
                        w_prev + (t - f0) * (w_i - w_prev) / (f1 - f0)
                    } else {
                        w_i
                    }
                } else {
                    w_i
                }
            }
        };
        // hi: sup{ w : F(w-) <= t }
        let hi = if t >= 1.0 {
            f64::INFINITY
        } else {
            let j = bks.partition_point(|&w| self.cdf_minus(w) <= t);
            if j >= bks.len() {
                // F(w-) saturates at 1 > t just past the last breakpoint
                bks[bks.len() - 1]
            } else {
                let w_j = bks[j]; // first breakpoint with F(w-) > t
                let w_prev = if j > 0 { bks[j - 1] } else { 0.0 };
                let f0 = self.cdf(w_prev);
                if f0 > t {
                    // the jump at w_prev already exceeds t
                    w_prev
                } else {
                    let f1 = self.cdf_minus(w_j);
                    if f1 > f0 {
                        w_prev + (t - f0) * (w_j - w_prev) / (f1 - f0)
                    } else {
                        w_j
                    }
                }
            }
        };
        Ok((lo.max(0.0), hi))
    }

    /// Structural wages: atom positions and piece knot positions, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bks: Vec<f64> = self.atoms.iter().map(|a| a.0).collect();
        for p in &self.pieces {
            bks.extend(p.knots.iter().map(|k| k.0));
        }
        bks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bks.dedup();
        bks
    }

    /// Growth intervals merged with gap tolerance [`SUPPORT_GAP_TOL`].
    pub fn support_intervals(&self) -> Vec<(f64, f64)> {
        let mut grow: Vec<(f64, f64)> = self.atoms.iter().map(|&(w, _)| (w, w)).collect();
        for p in &self.pieces {
            for seg in p.knots.windows(2) {
                if seg[1].1 - seg[0].1 >= ATOM_MIN_MASS {
                    grow.push((seg[0].0, seg[1].0));
                }
            }
        }
        grow.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in grow {
            match out.last_mut() {
                Some(last) if a <= last.1 + SUPPORT_GAP_TOL => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }

    pub fn support_bounds(&self) -> (f64, f64) {
        let iv = self.support_intervals();
        (iv[0].0, iv[iv.len() - 1].1)
    }

    pub fn min_support(&self) -> f64 {
        self.support_bounds().0
    }
    pub fn max_support(&self) -> f64 {
        self.support_bounds().1
    }

    /// Exact mean, variance, support range and bounds.
    pub fn stats(&self) -> PolicyStats {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for &(w, m) in &self.atoms {
            mean += m * w;
            m2 += m * w * w;
        }
        for p in &self.pieces {
            for seg in p.knots.windows(2) {
                let (w0, c0) = seg[0];
                let (w1, c1) = seg[1];
                let dm = c1 - c0;
                mean += dm * 0.5 * (w0 + w1);
                m2 += dm * (w0 * w0 + w0 * w1 + w1 * w1) / 3.0;
            }
        }
        let (lo, hi) = self.support_bounds();
        PolicyStats {
            mean,
            variance: (m2 - mean * mean).max(0.0),
            support_range: hi - lo,
            support_bounds: (lo, hi),
        }
    }

    /// Mass and wage bill restricted to the half-open window [a, b).
    pub fn restricted_first_moments(&self, a: f64, b: f64) -> (f64, f64) {
        let mut mass = 0.0;
        let mut bill = 0.0;
        for &(w, m) in &self.atoms {
            if w >= a && w < b {
                mass += m;
                bill += m * w;
            }
        }
        for p in &self.pieces {
            for seg in p.knots.windows(2) {
                let (w0, c0) = seg[0];
                let (w1, c1) = seg[1];
                if w1 <= a || w0 >= b {
                    continue;
                }
                let lo = w0.max(a);
                let hi = w1.min(b);
                if hi <= lo {
                    continue;
                }
                let density = (c1 - c0) / (w1 - w0);
                let dm = density * (hi - lo);
                mass += dm;
                bill += dm * 0.5 * (lo + hi);
            }
        }
        (mass, bill)
    }

    /// Exact integral of the tail over [a, b].
    pub fn tail_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        // integral of 1 - F(w) over [a, b]; F's jump points have measure zero
        let mut cut: Vec<f64> = vec![a, b];
        for w in self.breakpoints() {
            if w > a && w < b {
                cut.push(w);
            }
        }
        cut.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut acc = 0.0;
        for seg in cut.windows(2) {
            let (lo, hi) = (seg[0], seg[1]);
            // F is linear on (lo, hi): average the one-sided limits
            let f_lo = self.cdf(lo);
            let f_hi = self.cdf_minus(hi);
            acc += (hi - lo) * (1.0 - 0.5 * (f_lo + f_hi));
        }
        acc
    }

    /// Vertices (t, w) of the quantile function as a monotone polyline.
    ///
    /// Flat stretches in t correspond to atoms of F; vertical stretches (same
    /// t, jumping w) correspond to support gaps.
    pub fn quantile_polyline(&self) -> Vec<(f64, f64)> {
        let bks = self.breakpoints();
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(2 * bks.len());
        for &w in &bks {
            let fm = self.cdf_minus(w);
            let fp = self.cdf(w);
            pts.push((fm, w));
            if fp > fm {
                pts.push((fp, w));
            }
        }
        pts.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        pts
    }

    /// Sample the CDF as CSV rows `w,cdf,tail`.
    pub fn write_cdf_csv<W: std::io::Write>(
        &self,
        out: W,
        samples: usize,
    ) -> Result<(), std::io::Error> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["w", "cdf", "tail"])?;
        let (lo, hi) = self.support_bounds();
        let pad = 0.05 * (hi - lo).max(1e-6);
        let (a, b) = ((lo - pad).max(0.0), hi + pad);
        let n = samples.max(2);
        for i in 0..=n {
            let w = a + (b - a) * i as f64 / n as f64;
            wtr.write_record([
                format!("{w:.17}"),
                format!("{:.17}", self.cdf(w)),
                format!("{:.17}", self.tail(w)),
            ])?;
        }
        wtr.flush()
    }

    /// Build a policy from a left-continuous nonincreasing tail polyline.
    ///
    /// Knots are (wage, tail) with wages nondecreasing; repeated wages encode
    /// atoms. The curve must start at tail 1 and end at tail 0.
    pub fn from_tail_curve(knots: &[(f64, f64)]) -> Result<Self, PolicyError> {
        if knots.len() < 2 {
            return Err(PolicyError::BadTailCurve("needs at least 2 knots".into()));
        }
        if (knots[0].1 - 1.0).abs() > 1e-9 {
            return Err(PolicyError::BadTailCurve(format!(
                "tail must start at 1, got {}",
                knots[0].1
            )));
        }
        if knots[knots.len() - 1].1.abs() > 1e-9 {
            return Err(PolicyError::BadTailCurve(format!(
                "tail must end at 0, got {}",
                knots[knots.len() - 1].1
            )));
        }
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        let mut pieces: Vec<Vec<(f64, f64)>> = Vec::new();
        let mut cur: Vec<(f64, f64)> = Vec::new();
        let mut cum = 0.0;
        for seg in knots.windows(2) {
            let (w0, r0) = seg[0];
            let (w1, r1) = seg[1];
            if w1 < w0 - 1e-15 {
                return Err(PolicyError::BadTailCurve(
                    "wages must be nondecreasing".into(),
                ));
            }
            if r1 > r0 + 1e-12 {
                return Err(PolicyError::BadTailCurve(
                    "tail must be nonincreasing".into(),
                ));
            }
            let dm = (r0 - r1).max(0.0);
            if w1 <= w0 + 1e-15 {
                // vertical drop: atom at w0
                if dm > 0.0 {
                    if !cur.is_empty() {
                        if cur.last().unwrap().0 < w0 - 1e-15 {
                            cur.push((w0, cum));
                        }
                        if cur.len() >= 2 {
                            pieces.push(std::mem::take(&mut cur));
                        } else {
                            cur.clear();
                        }
                    }
                    atoms.push((w0, dm));
                }
            } else {
                if cur.is_empty() {
                    cur.push((w0, cum));
                } else if (cur.last().unwrap().0 - w0).abs() > 1e-15 {
                    pieces.push(std::mem::take(&mut cur));
                    cur.push((w0, cum));
                }
                cum += dm;
                cur.push((w1, cum));
            }
        }
        if cur.len() >= 2 {
            pieces.push(cur);
        }
        // re-base each piece's cumulative to start at zero
        let pieces = pieces
            .into_iter()
            .map(|p| {
                let base = p[0].1;
                p.into_iter().map(|(w, c)| (w, c - base)).collect()
            })
            .collect();
        WagePolicy::new(atoms, pieces)
    }

    pub fn to_doc(&self) -> WagePolicyDoc {
        WagePolicyDoc {
            atoms: self.atoms.clone(),
            pieces: self
                .pieces
                .iter()
                .map(|p| {
                    let from = p.start();
                    let to = p.end();
                    PieceDoc {
                        from,
                        to,
                        cdf_from: self.cdf_minus(from) + self.atom_mass_at(from),
                        cdf_to: self.cdf(to),
                        knots: p
                            .knots
                            .iter()
                            .map(|&(w, c)| {
                                let base = self.cdf_minus(from) + self.atom_mass_at(from);
                                (w, base + c)
                            })
                            .collect(),
                    }
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: &WagePolicyDoc) -> Result<Self, PolicyError> {
        let pieces = doc
            .pieces
            .iter()
            .map(|p| p.knots.clone())
            .collect::<Vec<_>>();
        WagePolicy::new(doc.atoms.clone(), pieces)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("policy serializes")
    }

    pub fn from_json(doc: &str) -> Result<Self, PolicyError> {
        let doc: WagePolicyDoc = serde_json::from_str(doc)
            .map_err(|e| PolicyError::BadPiece(format!("schema violation: {e}")))?;
        Self::from_doc(&doc)
    }
}

/// Summary statistics of a wage policy.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PolicyStats {
    pub mean: f64,
    pub variance: f64,
    pub support_range: f64,
    pub support_bounds: (f64, f64),
}

/// True iff `a` has strictly wider range and strictly larger variance than `b`.
pub fn more_dispersed(a: &WagePolicy, b: &WagePolicy) -> bool {
    let sa = a.stats();
    let sb = b.stats();
    sa.support_range > sb.support_range && sa.variance > sb.variance
}

/// JSON document schema for a wage policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WagePolicyDoc {
    pub atoms: Vec<(f64, f64)>,
    pub pieces: Vec<PieceDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceDoc {
    pub from: f64,
    pub to: f64,
    pub cdf_from: f64,
    pub cdf_to: f64,
    /// Knots as (wage, absolute CDF).
    pub knots: Vec<(f64, f64)>,
}

/// The same distribution viewed through its left-continuous tail R(w) = 1 - F(w-).
#[derive(Debug, Clone)]
pub struct TailWagePolicy {
    policy: WagePolicy,
}

impl TailWagePolicy {
    pub fn new(policy: WagePolicy) -> Self {
        TailWagePolicy { policy }
    }

    pub fn eval(&self, w: f64) -> f64 {
        self.policy.tail(w)
    }

    /// Right limit R(w+) = 1 - F(w).
    pub fn eval_plus(&self, w: f64) -> f64 {
        1.0 - self.policy.cdf(w)
    }

    pub fn policy(&self) -> &WagePolicy {
        &self.policy
    }

    pub fn into_policy(self) -> WagePolicy {
        self.policy
    }

    pub fn support_bounds(&self) -> (f64, f64) {
        self.policy.support_bounds()
    }

    /// Exact integral of R over [a, b].
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.policy.tail_integral(a, b)
    }
}

impl From<WagePolicy> for TailWagePolicy {
    fn from(p: WagePolicy) -> Self {
        TailWagePolicy::new(p)
    }
}
