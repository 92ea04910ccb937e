//! Phase retrieval from single-wave and two-wave moduli.
//!
//! The moduli `r = |u(x, d)|`, `r₀ = |u(x, d₀)|` and `p = |u(x, d) + u(x, d₀)|`
//! give the correlation `Re{u ū₀} = (p² − r² − r₀²)/2`, hence the relative
//! phase `θ(x, d) − θ(x, d₀)` up to sign. Continuation in `d` (and a sign
//! alignment across measurement points) produces two global candidates, the
//! relative fields `V = u e^{−iθ₀}` and their conjugates. For each candidate
//! the unknown reference phase `θ₀(x)` is found by requiring
//! `V e^{iθ₀} − u^i` to be a radiating field on the measurement set; only
//! the true branch admits such an extension, which selects it.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FieldsMeta, PhasedFields, PhaselessDataset};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imaging::FarField;
use crate::scene::{Direction, MeasurementSet, Scatterer, Scene};
use crate::special::hankel1_seq;

/// Entries with `r · r₀` below this fraction of the largest product are masked.
pub const MASK_TOLERANCE: f64 = 1e-8;
/// Slack allowed beyond `[−1, 1]` before `arccos` clamps silently.
pub const CLAMP_TOLERANCE: f64 = 1e-9;
/// Stopping threshold on the anchor phase increment.
pub const ANCHOR_TOLERANCE: f64 = 1e-10;
pub const ANCHOR_MAX_ITERATIONS: usize = 500;
/// Minimum residual ratio for a branch decision.
pub const BRANCH_RATIO: f64 = 10.0;
/// Extra orders beyond `kρ` in the radiating expansion.
pub const ORDER_MARGIN: usize = 15;
/// Singular values below this fraction of the largest are dropped.
pub const SVD_CUTOFF: f64 = 1e-10;
const POLISH_ROUNDS: usize = 6;
/// Iterations used to score a candidate before the branch decision.
const SCORE_ITERATIONS: usize = 40;
/// Orders beyond `k|x|` kept when fitting a row in `d`.
const BAND_MARGIN: usize = 25;
/// Tighter margin used when choosing signs of whole runs.
const RUN_BAND_MARGIN: usize = 8;
const REFINE_ROUNDS: usize = 50;
/// `sin δ` below which a local minimum is treated as a possible sign change.
const TOUCH_SINE: f64 = 0.5;
/// Entries this close to a touch are always decided one by one.
const SMALL_SINE: f64 = 0.1;
const GERCHBERG_ROUNDS: usize = 500;
const ALIGN_NEIGHBOURS: usize = 4;
/// Samples in the sliding line fit of the sweep predictor.
const SWEEP_WINDOW: usize = 3;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `c(x_m, d_j) = Re{u(x_m, d_j) ū(x_m, d₀)}` and its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationField {
    pub values: Vec<Vec<f64>>,
    /// `true` where `r · r₀` is large enough for a phase to be defined.
    pub valid: Vec<Vec<bool>>,
}

pub fn extract_correlation(dataset: &PhaselessDataset) -> CorrelationField {
    let max = dataset
        .singles
        .iter()
        .zip(&dataset.reference)
        .flat_map(|(row, r0)| row.iter().map(move |r| r * r0))
        .fold(0.0, f64::max);
    let mut values = Vec::with_capacity(dataset.point_count());
    let mut valid = Vec::with_capacity(dataset.point_count());
    for ((rs, ps), &r0) in dataset.singles.iter().zip(&dataset.pairs).zip(&dataset.reference) {
        values.push(
            rs.iter()
                .zip(ps)
                .map(|(r, p)| 0.5 * (p * p - r * r - r0 * r0))
                .collect(),
        );
        valid.push(rs.iter().map(|r| r * r0 >= MASK_TOLERANCE * max).collect());
    }
    CorrelationField { values, valid }
}

/// Principal relative phase `δ = arccos(c / (r r₀)) ∈ [0, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativePhaseField {
    pub delta: Vec<Vec<f64>>,
    pub valid: Vec<Vec<bool>>,
    pub singles: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
    pub directions: Vec<Direction>,
    pub d0: Direction,
    pub k: f64,
    pub points: Vec<Point>,
    /// Largest excess of `|c|/(r r₀)` over one before clamping.
    pub clamp_excess: f64,
}

pub fn principal_relative_phase(corr: &CorrelationField, dataset: &PhaselessDataset) -> RelativePhaseField {
    let mut excess: f64 = 0.0;
    let delta = corr
        .values
        .iter()
        .zip(&corr.valid)
        .zip(dataset.singles.iter().zip(&dataset.reference))
        .map(|((cs, vs), (rs, &r0))| {
            cs.iter()
                .zip(vs)
                .zip(rs)
                .map(|((c, &ok), r)| {
                    if !ok {
                        return 0.0;
                    }
                    let cos = c / (r * r0);
                    excess = excess.max(cos.abs() - 1.0);
                    cos.clamp(-1.0, 1.0).acos()
                })
                .collect()
        })
        .collect();
    let mut delta: Vec<Vec<f64>> = delta;
    if let Some(j0) = dataset.d0_index() {
        for row in &mut delta {
            row[j0] = 0.0;
        }
    }
    RelativePhaseField {
        delta,
        valid: corr.valid.clone(),
        singles: dataset.singles.clone(),
        reference: dataset.reference.clone(),
        directions: dataset.directions.clone(),
        d0: dataset.meta.d0,
        k: dataset.meta.k,
        points: dataset.points.clone(),
        clamp_excess: excess.max(0.0),
    }
}

/// Which of the two global sign choices a candidate represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn other(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

/// Candidate relative fields `V(x_m, d_j) = r e^{±iδ̃}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchCandidate {
    pub branch: Branch,
    pub values: Vec<Vec<Complex64>>,
    /// Signed continued phase `δ̃(x_m, d_j)`, unwrapped along the sweep.
    pub phase: Vec<Vec<f64>>,
    /// Entries whose sign the continuation could not settle reliably.
    pub ambiguous: Vec<Vec<bool>>,
}

impl BranchCandidate {
    fn conjugate(&self) -> Self {
        Self {
            branch: self.branch.other(),
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| v.conj()).collect())
                .collect(),
            phase: self
                .phase
                .iter()
                .map(|row| row.iter().map(|p| -p).collect())
                .collect(),
            ambiguous: self.ambiguous.clone(),
        }
    }
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

/// Continues the principal phases in `d` from `d₀` and returns the two
/// global candidates (plus first).
pub fn continue_branch(rel: &RelativePhaseField) -> Result<(BranchCandidate, BranchCandidate)> {
    let m_count = rel.delta.len();
    let d_count = rel.directions.len();
    let d0 = rel.d0.angle();
    // Sweep order: grid directions by increasing angle past d₀.
    let mut order: Vec<(usize, f64)> = rel
        .directions
        .iter()
        .enumerate()
        .map(|(j, d)| (j, (d.angle() - d0).rem_euclid(TAU)))
        .collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    for m in 0..m_count {
        if !(rel.reference[m] > 0.0) || rel.valid[m].iter().all(|v| !v) {
            let j = order.first().map_or(0, |o| o.0);
            return Err(Error::Continuation {
                point: m,
                from: j,
                to: j,
                reason: "reference modulus vanishes at this point".into(),
            });
        }
    }
    let equispaced = is_equispaced(&rel.directions);
    let rows: Vec<Result<(Vec<Complex64>, Vec<f64>, Vec<bool>)>> = (0..m_count)
        .into_par_iter()
        .map(|m| {
            let mut values = sweep_row(rel, m, &order);
            let mut ambiguous: Vec<bool> = rel.valid[m].iter().map(|v| !v).collect();
            if equispaced {
                let kx = (rel.k * rel.points[m].norm()).ceil() as usize;
                ambiguous = refine_row(rel, m, kx + RUN_BAND_MARGIN, kx + BAND_MARGIN, &mut values);
            }
            let mut phase = vec![0.0; d_count];
            let mut last_phase = 0.0;
            let mut last_j = order[0].0;
            for &(j, t) in &order {
                if t < 1e-12 {
                    continue;
                }
                let step = wrap(values[j].arg() - last_phase);
                if step.abs() >= PI / 2.0 && !ambiguous[j] {
                    return Err(Error::Continuation {
                        point: m,
                        from: last_j,
                        to: j,
                        reason: format!(
                            "relative phase jumps by {:.3} rad between neighbouring directions",
                            step.abs()
                        ),
                    });
                }
                phase[j] = last_phase + step;
                last_phase = phase[j];
                last_j = j;
            }
            Ok((values, phase, ambiguous))
        })
        .collect();
    let mut values = Vec::with_capacity(m_count);
    let mut phase = Vec::with_capacity(m_count);
    let mut ambiguous = Vec::with_capacity(m_count);
    for row in rows {
        let (v, p, a) = row?;
        values.push(v);
        phase.push(p);
        ambiguous.push(a);
    }
    let j0 = crate::scene::index_of_angle(&rel.directions, d0);
    align_rows(&mut values, &mut phase, &rel.points, j0);
    let plus = BranchCandidate {
        branch: Branch::Plus,
        values,
        phase,
        ambiguous,
    };
    let minus = plus.conjugate();
    Ok((plus, minus))
}

/// Greedy sweep in `d`. The relative field is demodulated by the incident
/// relative phase `k x·(d − d₀)`, extrapolated by a least-squares line
/// through the last few samples, and each sign is the one nearest the
/// prediction.
fn sweep_row(rel: &RelativePhaseField, m: usize, order: &[(usize, f64)]) -> Vec<Complex64> {
    let r0 = rel.reference[m];
    let x = rel.points[m];
    let d0 = rel.d0.unit();
    let carrier = |j: usize| Complex64::from_polar(1.0, rel.k * x.dot(rel.directions[j].unit() - d0));
    let mut values = vec![ZERO; rel.directions.len()];
    let mut ts = vec![0.0];
    let mut ws = vec![Complex64::new(r0, 0.0)];
    for &(j, t) in order {
        let r = rel.singles[m][j];
        if t < 1e-12 {
            values[j] = Complex64::new(r0, 0.0);
            continue;
        }
        let start = ts.len().saturating_sub(SWEEP_WINDOW);
        let pred = line_fit(&ts[start..], &ws[start..], t) * carrier(j);
        let chosen = if !rel.valid[m][j] {
            Complex64::from_polar(r, pred.arg())
        } else {
            let plus = Complex64::from_polar(r, rel.delta[m][j]);
            if (plus - pred).norm() <= (plus.conj() - pred).norm() {
                plus
            } else {
                plus.conj()
            }
        };
        values[j] = chosen;
        ts.push(t);
        ws.push(chosen * carrier(j).conj());
    }
    values
}

/// Least-squares line through `(ts, vs)` evaluated at `t`.
fn line_fit(ts: &[f64], vs: &[Complex64], t: f64) -> Complex64 {
    let n = ts.len() as f64;
    if ts.len() < 2 {
        return vs[0];
    }
    let tm = ts.iter().sum::<f64>() / n;
    let vm = vs.iter().sum::<Complex64>() / n;
    let stt: f64 = ts.iter().map(|a| (a - tm) * (a - tm)).sum();
    let stv: Complex64 = ts.iter().zip(vs).map(|(a, v)| (v - vm) * (a - tm)).sum();
    vm + stv / stt * (t - tm)
}

fn is_equispaced(dirs: &[Direction]) -> bool {
    let n = dirs.len();
    if n < 3 {
        return false;
    }
    let step = TAU / n as f64;
    let a0 = dirs[0].angle();
    dirs.iter()
        .enumerate()
        .all(|(j, d)| wrap(d.angle() - a0 - j as f64 * step).abs() < 1e-9)
}

/// Alternates between the band-limited fit of a row in `d` and the sign
/// choices closest to it. Between touch points (local minima of `sin δ`,
/// where the signed phase may cross 0 or π) the sign is constant, so it is
/// chosen per run; touch points and masked entries are chosen one by one.
/// Returns the entries whose two choices are too close to the fit to be
/// told apart.
fn refine_row(rel: &RelativePhaseField, m: usize, run_band: usize, band: usize, values: &mut [Complex64]) -> Vec<bool> {
    let n = values.len();
    let j0 = crate::scene::index_of_angle(&rel.directions, rel.d0.angle());
    let valid = &rel.valid[m];
    if 2 * band + 1 >= n {
        return valid.iter().map(|v| !v).collect();
    }
    let sines: Vec<f64> = rel.delta[m].iter().map(|d| d.sin()).collect();
    let single: Vec<bool> = (0..n)
        .map(|j| {
            let (prev, next) = (sines[(j + n - 1) % n], sines[(j + 1) % n]);
            !valid[j]
                || Some(j) == j0
                || sines[j] < SMALL_SINE
                || (sines[j] < TOUCH_SINE && sines[j] <= prev && sines[j] <= next)
        })
        .collect();
    let plus: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(rel.singles[m][j], rel.delta[m][j]))
        .collect();
    // Each touch point is its own run; masked entries are filled from the fit.
    let mut runs = periodic_runs(&single);
    runs.extend((0..n).filter(|&j| single[j] && valid[j] && Some(j) != j0).map(|j| vec![j]));
    let mut planner = rustfft::FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    // Component outside the band.
    let defect = |v: &mut Vec<Complex64>, band: usize| {
        forward.process(v);
        for (i, c) in v.iter_mut().enumerate() {
            if i.min(n - i) <= band {
                *c = ZERO;
            }
        }
        inverse.process(v);
        v.iter_mut().for_each(|x| *x /= n as f64);
    };
    // V = c + Σ s_r b_r with c the real parts and b_r the imaginary parts on
    // run r. Conjugation maps a band-limited row to a band-limited row, so the
    // defect ‖Q V‖² reduces to the quadratic form sᵀ A s.
    let imag: Vec<Vec<Complex64>> = runs
        .iter()
        .map(|run| {
            let mut b = vec![ZERO; n];
            for &j in run {
                b[j] = Complex64::new(0.0, plus[j].im);
            }
            b
        })
        .collect();
    let weights: Vec<f64> = imag
        .iter()
        .map(|b| b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    let active: Vec<usize> = (0..runs.len()).filter(|&r| weights[r] > 1e-9 * wmax).collect();
    let size = active.len();
    let mut signs = vec![1.0; runs.len()];
    if size > 0 {
        // Start from the weighted majority of the sweep's choices per run.
        let mut s: Vec<f64> = active
            .iter()
            .map(|&r| {
                let vote: f64 = runs[r]
                    .iter()
                    .map(|&j| if values[j] == plus[j] { sines[j] } else { -sines[j] })
                    .sum();
                if vote >= 0.0 { 1.0 } else { -1.0 }
            })
            .collect();
        // Coarse band first (robust to noise), then the full band for the
        // runs that stay close to a touch, where the choice hinges on kinks.
        let near_touch: Vec<bool> = active
            .iter()
            .map(|&r| runs[r].iter().all(|&j| sines[j] < TOUCH_SINE))
            .collect();
        for (b, fine) in [(run_band, false), (band, true)] {
            let qb: Vec<Vec<Complex64>> = active
                .iter()
                .map(|&r| {
                    let mut v = imag[r].clone();
                    defect(&mut v, b);
                    v
                })
                .collect();
            let mut a = DMatrix::<f64>::zeros(size, size);
            for p in 0..size {
                for q in p..size {
                    let v: f64 = qb[p].iter().zip(&qb[q]).map(|(x, y)| (x * y.conj()).re).sum();
                    a[(p, q)] = v;
                    a[(q, p)] = v;
                }
            }
            let movable: Vec<bool> = near_touch.iter().map(|&t| t || !fine).collect();
            greedy_signs(&a, &mut s, &movable);
        }
        for (p, &r) in active.iter().enumerate() {
            signs[r] = s[p];
        }
    }
    for (run, &sign) in runs.iter().zip(&signs) {
        for &j in run {
            values[j] = if sign > 0.0 { plus[j] } else { plus[j].conj() };
        }
    }
    if let Some(j) = j0 {
        values[j] = Complex64::new(rel.reference[m], 0.0);
    }
    // Entries outside the active runs are treated as missing: the fit is
    // the band-limited interpolant of the run entries, and each of them takes
    // the sign nearest to it.
    let free: Vec<usize> = (0..n)
        .filter(|&j| Some(j) != j0)
        .filter(|&j| !active.iter().any(|&r| runs[r].contains(&j)))
        .collect();
    let mut fit = values.to_vec();
    for _ in 0..GERCHBERG_ROUNDS {
        let mut out = fit.clone();
        defect(&mut out, band);
        let mut change: f64 = 0.0;
        for &j in &free {
            let v = fit[j] - out[j];
            change = change.max((v - fit[j]).norm());
            fit[j] = v;
        }
        if change < 1e-13 {
            break;
        }
    }
    for &j in &free {
        values[j] = if !valid[j] {
            Complex64::from_polar(rel.singles[m][j], fit[j].arg())
        } else if (plus[j] - fit[j]).norm() <= (plus[j].conj() - fit[j]).norm() {
            plus[j]
        } else {
            plus[j].conj()
        };
    }
    (0..n)
        .map(|j| !valid[j] || (single[j] && 2.0 * rel.singles[m][j] * sines[j] < 4.0 * (values[j] - fit[j]).norm()))
        .collect()
}

/// Maximal runs of `false` entries on a periodic index set.
/// Single sign flips of `s` while `sᵀ A s` decreases.
fn greedy_signs(a: &DMatrix<f64>, s: &mut [f64], movable: &[bool]) {
    let size = s.len();
    let mut field: Vec<f64> = (0..size)
        .map(|p| (0..size).filter(|&q| q != p).map(|q| a[(p, q)] * s[q]).sum())
        .collect();
    let floor = 1e-14 * a.diagonal().sum();
    for _ in 0..REFINE_ROUNDS * size {
        let (best, p) = (0..size)
            .filter(|&p| movable[p])
            .map(|p| (-4.0 * s[p] * field[p], p))
            .fold((0.0, usize::MAX), |acc, c| if c.0 < acc.0 { c } else { acc });
        if p == usize::MAX || best > -floor {
            break;
        }
        s[p] = -s[p];
        for (q, f) in field.iter_mut().enumerate() {
            if q != p {
                *f += 2.0 * a[(q, p)] * s[p];
            }
        }
    }
}

fn periodic_runs(cut: &[bool]) -> Vec<Vec<usize>> {
    let n = cut.len();
    let Some(start) = (0..n).find(|&j| cut[j]) else {
        return vec![(0..n).collect()];
    };
    let mut runs = Vec::new();
    let mut cur = Vec::new();
    for i in 1..=n {
        let j = (start + i) % n;
        if cut[j] {
            if !cur.is_empty() {
                runs.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(j);
        }
    }
    runs
}

/// Flips whole rows so that all measurement points carry the same global
/// sign. For neighbouring rows `m, n` the correct relative sign makes
/// `Σ_j V_m V̄_n` more coherent than `Σ_j V̄_m V̄_n`; the pairwise
/// preferences are reconciled through the leading eigenvector of their
/// matrix.
fn align_rows(
    values: &mut [Vec<Complex64>],
    phase: &mut [Vec<f64>],
    points: &[Point],
    j0: Option<usize>,
) {
    let m_count = values.len();
    if m_count < 2 {
        return;
    }
    let mut pref = DMatrix::<f64>::zeros(m_count, m_count);
    for m in 0..m_count {
        let mut near: Vec<usize> = (0..m_count).filter(|&n| n != m).collect();
        near.sort_by(|&a, &b| (points[m] - points[a]).norm().total_cmp(&(points[m] - points[b]).norm()));
        for &n in near.iter().take(ALIGN_NEIGHBOURS) {
            let mut same = ZERO;
            let mut flipped = ZERO;
            for j in 0..values[m].len() {
                if Some(j) == j0 {
                    continue;
                }
                same += values[m][j] * values[n][j].conj();
                flipped += values[m][j].conj() * values[n][j].conj();
            }
            let w = same.norm() - flipped.norm();
            pref[(m, n)] = w;
            pref[(n, m)] = w;
        }
    }
    let eig = pref.symmetric_eigen();
    let lead = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(lead);
    let reference = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    for m in 0..m_count {
        if v[m] * reference < 0.0 {
            values[m].iter_mut().for_each(|x| *x = x.conj());
            phase[m].iter_mut().for_each(|p| *p = -*p);
        }
    }
}

/// Truncated outgoing expansion `Σ_{|n| ≤ N} c_n H_{|n|}(k|x − c|) e^{inφ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiatingExpansion {
    pub k: f64,
    pub center: Point,
    /// Radius of a disk enclosing the scatterer; the expansion is used
    /// outside it.
    pub radius: f64,
    pub order: usize,
    /// `coeffs[n + order]` multiplies the mode of index `n`.
    pub coeffs: Vec<Complex64>,
}

impl RadiatingExpansion {
    pub fn new(k: f64, center: Point, radius: f64, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() % 2 != 1 {
            return Err(Error::Invalid("expansion needs 2N + 1 coefficients".into()));
        }
        let order = coeffs.len() / 2;
        Ok(Self {
            k,
            center,
            radius,
            order,
            coeffs,
        })
    }

    pub fn coeff(&self, n: i64) -> Complex64 {
        self.coeffs[(n + self.order as i64) as usize]
    }

    pub fn eval(&self, x: Point) -> Result<Complex64> {
        let d = x - self.center;
        let r = d.norm();
        if r == 0.0 {
            return Err(Error::Singular("radiating expansion evaluated at its center".into()));
        }
        let h = hankel1_seq(self.order, self.k * r);
        let phi = d.angle();
        let mut s = ZERO;
        for n in -(self.order as i64)..=self.order as i64 {
            s += self.coeff(n) * h[n.unsigned_abs() as usize] * Complex64::from_polar(1.0, n as f64 * phi);
        }
        Ok(s)
    }

    /// Far field `Σ c_n γ_n e^{inφ}` with `γ_n = √(2/(πk)) e^{−i(|n|π/2 + π/4)}`,
    /// including the phase of the expansion center.
    pub fn farfield(&self, angles: &[f64]) -> FarField {
        let k = self.k;
        let amp = (2.0 / (PI * k)).sqrt();
        let values = angles
            .iter()
            .map(|&a| {
                let mut s = ZERO;
                for n in -(self.order as i64)..=self.order as i64 {
                    let gamma = Complex64::from_polar(amp, -(n.unsigned_abs() as f64 * PI / 2.0 + PI / 4.0));
                    s += self.coeff(n) * gamma * Complex64::from_polar(1.0, n as f64 * a);
                }
                s * Complex64::from_polar(1.0, -k * Point::from_angle(a).dot(self.center))
            })
            .collect();
        FarField {
            k,
            angles: angles.to_vec(),
            values,
        }
    }
}

/// The outgoing basis sampled on the measurement points, with its
/// least-squares projector.
pub struct RadiatingBasis {
    pub k: f64,
    pub center: Point,
    pub radius: f64,
    pub order: usize,
    pinv: DMatrix<Complex64>,
    projector: DMatrix<Complex64>,
}

impl RadiatingBasis {
    /// Basis for the measurement set of `scene`: centered at the circle's
    /// center for circular sets, at the scatterer's bounding-box center for
    /// line segments. The truncation order follows the radius enclosing the
    /// scatterer about that center.
    pub fn for_scene(scene: &Scene) -> Result<Self> {
        let k = scene.wavenumber;
        let points = scene.measurement.points();
        let extent = match &scene.scatterer {
            Scatterer::Medium(m) => m.support_box(),
            other => other.bounding_box(),
        };
        let (center, radius) = match &scene.measurement {
            MeasurementSet::Circle { center, .. } => {
                let r = extent
                    .map(|b| b.corners().iter().map(|c| (*c - *center).norm()).fold(0.0, f64::max))
                    .unwrap_or(0.0);
                (*center, r)
            }
            MeasurementSet::LineSegment { .. } => {
                let b = extent.ok_or_else(|| {
                    Error::Invalid("line-segment anchoring needs a scatterer to center the basis".into())
                })?;
                (b.center(), b.diameter() / 2.0)
            }
        };
        let basis = Self::new(k, center, radius, &points)?;
        let nearest = points.iter().map(|p| (*p - center).norm()).fold(f64::INFINITY, f64::min);
        if k * nearest <= basis.order as f64 {
            return Err(Error::Invalid(format!(
                "measurement points at k·distance {:.2} from the expansion center cannot separate \
                 the incident field from {} outgoing orders; move them further out",
                k * nearest,
                basis.order
            )));
        }
        Ok(basis)
    }

    /// Basis of orders up to `⌈kρ⌉ + ORDER_MARGIN` about `center`, where
    /// `radius = ρ` encloses the scatterer.
    pub fn new(k: f64, center: Point, radius: f64, points: &[Point]) -> Result<Self> {
        let order = (k * radius).ceil() as usize + ORDER_MARGIN;
        let cols = 2 * order + 1;
        let m = points.len();
        if m < 2 * cols {
            return Err(Error::Invalid(format!(
                "{m} measurement points are too few for {cols} outgoing modes (need at least {})",
                2 * cols
            )));
        }
        let mut b = DMatrix::<Complex64>::zeros(m, cols);
        for (i, &x) in points.iter().enumerate() {
            let d = x - center;
            let r = d.norm();
            if r == 0.0 {
                return Err(Error::Geometry("measurement point at the expansion center".into()));
            }
            let h = hankel1_seq(order, k * r);
            for n in -(order as i64)..=order as i64 {
                let col = (n + order as i64) as usize;
                b[(i, col)] = h[n.unsigned_abs() as usize] * Complex64::from_polar(1.0, n as f64 * d.angle());
            }
        }
        // Column scaling keeps the high orders from swamping the SVD.
        let scales: Vec<f64> = (0..cols).map(|c| b.column(c).norm()).collect();
        for (c, s) in scales.iter().enumerate() {
            b.column_mut(c).apply(|v| *v /= *s);
        }
        let svd = b.svd(true, true);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > SVD_CUTOFF * smax)
            .collect();
        let mut ur = DMatrix::<Complex64>::zeros(m, keep.len());
        let mut vr = DMatrix::<Complex64>::zeros(cols, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            ur.set_column(c, &u.column(i));
            let s = svd.singular_values[i];
            let vcol = v_t.row(i).adjoint() / Complex64::new(s, 0.0);
            vr.set_column(c, &vcol);
        }
        let mut pinv = &vr * ur.adjoint();
        for (c, s) in scales.iter().enumerate() {
            pinv.row_mut(c).apply(|v| *v /= *s);
        }
        let projector = &ur * ur.adjoint();
        Ok(Self {
            k,
            center,
            radius,
            order,
            pinv,
            projector,
        })
    }

    pub fn project(&self, v: &[Complex64]) -> Vec<Complex64> {
        let out = &self.projector * DVector::from_column_slice(v);
        out.iter().cloned().collect()
    }

    pub fn expansion(&self, v: &[Complex64]) -> RadiatingExpansion {
        let c = &self.pinv * DVector::from_column_slice(v);
        RadiatingExpansion {
            k: self.k,
            center: self.center,
            radius: self.radius,
            order: self.order,
            coeffs: c.iter().cloned().collect(),
        }
    }

    /// `‖(I − P) v‖`.
    pub fn defect(&self, v: &[Complex64]) -> f64 {
        let p = self.project(v);
        v.iter().zip(&p).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Reference phase `θ₀(x_m)` of `u(x_m, d₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorPhase {
    pub theta: Vec<f64>,
    pub iterations: usize,
    /// Last phase increment of the refinement.
    pub increment: f64,
    /// Increment per refinement iteration.
    pub history: Vec<f64>,
}

/// How the anchor phase iteration is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnchorInit {
    /// Joint least squares over all directions for `e^{iθ₀}`.
    #[default]
    LeastSquares,
    /// `θ₀ = arg u^i(x, d₀)`.
    Incident,
}

/// Result of anchoring one candidate.
#[derive(Debug, Clone)]
pub struct AnchoredCandidate {
    pub branch: Branch,
    pub anchor: AnchorPhase,
    /// Worst relative radiating defect over directions.
    pub residual: f64,
    /// Relative radiating defect aggregated over all directions.
    pub aggregate: f64,
    /// Radiating-projected total fields `total[m][j]`.
    pub total: Vec<Vec<Complex64>>,
    pub expansions: Vec<RadiatingExpansion>,
    pub converged: bool,
    /// Entries whose sign was changed by polishing.
    pub polished: usize,
}

struct Problem<'a> {
    basis: &'a RadiatingBasis,
    /// `rel[m][j]`, plus a final column for d₀ when it is off the grid.
    rel: Vec<Vec<Complex64>>,
    incident: Vec<Vec<Complex64>>,
    /// Principal phases and moduli for polishing, same layout as `rel`.
    delta: Vec<Vec<f64>>,
    moduli: Vec<Vec<f64>>,
    directions: usize,
}

impl Problem<'_> {
    fn columns(&self) -> usize {
        self.rel[0].len()
    }

    fn column(&self, src: &[Vec<Complex64>], j: usize) -> Vec<Complex64> {
        src.iter().map(|row| row[j]).collect()
    }

    /// Scattered part of `rel e^{iθ₀}` for column `j`.
    fn scattered(&self, z: &[Complex64], j: usize) -> Vec<Complex64> {
        (0..z.len())
            .map(|m| self.rel[m][j] * z[m] - self.incident[m][j])
            .collect()
    }

    fn least_squares(&self) -> Option<Vec<Complex64>> {
        let m = self.rel.len();
        let q = DMatrix::<Complex64>::identity(m, m) - &self.basis.projector;
        let mut g = DMatrix::<Complex64>::zeros(m, m);
        let mut h = DVector::<Complex64>::zeros(m);
        for j in 0..self.columns() {
            let v = self.column(&self.rel, j);
            let ui = DVector::from_vec(self.column(&self.incident, j));
            let qui = &q * ui;
            for a in 0..m {
                let va = v[a].conj();
                h[a] += va * qui[a];
                for b in 0..m {
                    g[(a, b)] += q[(a, b)] * va * v[b];
                }
            }
        }
        let z = g.lu().solve(&h)?;
        if z.iter().any(|v| !v.norm().is_finite()) {
            return None;
        }
        Some(z.iter().cloned().collect())
    }

    /// Alternating projection on the anchor phase.
    fn refine(&self, theta: &mut [f64], limit: usize) -> (usize, f64, Vec<f64>, bool) {
        let mut history = Vec::new();
        for it in 1..=limit {
            let z: Vec<Complex64> = theta.iter().map(|t| Complex64::from_polar(1.0, *t)).collect();
            let cols = self.columns();
            let fitted: Vec<Vec<Complex64>> = (0..cols)
                .into_par_iter()
                .map(|j| {
                    let s = self.scattered(&z, j);
                    let p = self.basis.project(&s);
                    p.iter().enumerate().map(|(m, v)| v + self.incident[m][j]).collect()
                })
                .collect();
            let mut inc: f64 = 0.0;
            for (m, t) in theta.iter_mut().enumerate() {
                let mut acc = ZERO;
                for (j, col) in fitted.iter().enumerate() {
                    acc += self.rel[m][j].conj() * col[m];
                }
                if acc.norm() == 0.0 {
                    continue;
                }
                let new = acc.arg();
                inc = inc.max(wrap(new - *t).abs());
                *t = new;
            }
            history.push(inc);
            if inc < ANCHOR_TOLERANCE {
                return (it, inc, history, true);
            }
        }
        let last = *history.last().unwrap_or(&f64::INFINITY);
        (limit, last, history, false)
    }

    fn residual(&self, z: &[Complex64]) -> f64 {
        (0..self.columns())
            .map(|j| {
                let s = self.scattered(z, j);
                let w: f64 = (0..z.len())
                    .map(|m| (self.rel[m][j] * z[m]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                self.basis.defect(&s) / w.max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    /// Defect over all directions, each entry weighted by `sin²δ` since the
    /// relative phase error of the data scales like `1/sin δ`.
    fn aggregate(&self, z: &[Complex64]) -> f64 {
        let (mut defect, mut norm) = (0.0, 0.0);
        for j in 0..self.columns() {
            let s = self.scattered(z, j);
            let p = self.basis.project(&s);
            for m in 0..z.len() {
                let d = self.delta[m][j];
                let w = if d.is_nan() { 0.0 } else { d.sin().powi(2) };
                defect += w * (s[m] - p[m]).norm_sqr();
                norm += w * (self.rel[m][j] * z[m]).norm_sqr();
            }
        }
        (defect / norm.max(f64::MIN_POSITIVE)).sqrt()
    }

    /// Re-chooses the sign of every entry against the radiating fit;
    /// returns the number of changes.
    fn polish(&mut self, z: &[Complex64]) -> usize {
        let mut changed = 0;
        for j in 0..self.directions {
            let s = self.scattered(z, j);
            let p = self.basis.project(&s);
            for m in 0..z.len() {
                let target = (p[m] + self.incident[m][j]) * z[m].conj();
                let cur = self.rel[m][j];
                let alt = if self.delta[m][j].is_nan() {
                    // Masked entry: keep the modulus, take the fitted phase.
                    Complex64::from_polar(self.moduli[m][j], target.arg())
                } else {
                    cur.conj()
                };
                if (alt - target).norm() < (cur - target).norm() && (alt - cur).norm() > 0.0 {
                    self.rel[m][j] = alt;
                    changed += 1;
                }
            }
        }
        changed
    }
}

fn incident_matrix(k: f64, points: &[Point], dirs: &[Direction]) -> Vec<Vec<Complex64>> {
    points
        .iter()
        .map(|&x| {
            dirs.iter()
                .map(|d| Complex64::from_polar(1.0, k * x.dot(d.unit())))
                .collect()
        })
        .collect()
}

fn build_problem<'a>(
    candidate: &BranchCandidate,
    rel: &RelativePhaseField,
    dataset: &PhaselessDataset,
    basis: &'a RadiatingBasis,
) -> Problem<'a> {
    let k = dataset.meta.k;
    let mut dirs = dataset.directions.clone();
    let off_grid = dataset.d0_index().is_none();
    if off_grid {
        dirs.push(dataset.meta.d0);
    }
    let incident = incident_matrix(k, &dataset.points, &dirs);
    let mut values = candidate.values.clone();
    let mut delta: Vec<Vec<f64>> = rel
        .delta
        .iter()
        .zip(&rel.valid)
        .map(|(row, ok)| row.iter().zip(ok).map(|(d, &v)| if v { *d } else { f64::NAN }).collect())
        .collect();
    let mut moduli = dataset.singles.clone();
    if off_grid {
        for m in 0..values.len() {
            values[m].push(Complex64::new(dataset.reference[m], 0.0));
            delta[m].push(0.0);
            moduli[m].push(dataset.reference[m]);
        }
    }
    Problem {
        basis,
        rel: values,
        incident,
        delta,
        moduli,
        directions: dataset.directions.len(),
    }
}

fn anchor_inner(
    candidate: &BranchCandidate,
    rel: &RelativePhaseField,
    dataset: &PhaselessDataset,
    basis: &RadiatingBasis,
    init: AnchorInit,
    limit: usize,
) -> AnchoredCandidate {
    let mut problem = build_problem(candidate, rel, dataset, basis);
    let k = dataset.meta.k;
    let d0 = dataset.meta.d0.unit();
    let incident_theta: Vec<f64> = dataset.points.iter().map(|x| k * x.dot(d0)).collect();
    let start = |p: &Problem, init: AnchorInit| -> Vec<f64> {
        match init {
            AnchorInit::Incident => incident_theta.clone(),
            AnchorInit::LeastSquares => match p.least_squares() {
                Some(z) => z
                    .iter()
                    .zip(&incident_theta)
                    .map(|(v, t)| if v.norm() > 0.0 { v.arg() } else { *t })
                    .collect(),
                None => incident_theta.clone(),
            },
        }
    };
    let mut theta = start(&problem, init);
    let (mut iterations, mut increment, mut history, mut converged) = problem.refine(&mut theta, limit);
    let mut polished = 0;
    let rounds = if limit < ANCHOR_MAX_ITERATIONS { 0 } else { POLISH_ROUNDS };
    for _ in 0..rounds {
        let z: Vec<Complex64> = theta.iter().map(|t| Complex64::from_polar(1.0, *t)).collect();
        let changed = problem.polish(&z);
        if changed == 0 {
            break;
        }
        polished += changed;
        theta = start(&problem, AnchorInit::LeastSquares);
        let (it, inc, hist, conv) = problem.refine(&mut theta, limit);
        iterations += it;
        increment = inc;
        history.extend(hist);
        converged = conv;
    }
    let z: Vec<Complex64> = theta.iter().map(|t| Complex64::from_polar(1.0, *t)).collect();
    let residual = problem.residual(&z);
    let aggregate = problem.aggregate(&z);
    let d_count = problem.directions;
    let mut total = vec![vec![ZERO; d_count]; z.len()];
    let mut expansions = Vec::with_capacity(d_count);
    for j in 0..d_count {
        let s = problem.scattered(&z, j);
        let p = basis.project(&s);
        for m in 0..z.len() {
            total[m][j] = p[m] + problem.incident[m][j];
        }
        expansions.push(basis.expansion(&s));
    }
    AnchoredCandidate {
        branch: candidate.branch,
        anchor: AnchorPhase {
            theta: theta.iter().map(|t| t.rem_euclid(TAU)).collect(),
            iterations,
            increment,
            history,
        },
        residual,
        aggregate,
        total,
        expansions,
        converged,
        polished,
    }
}

/// Finds the reference phase for one candidate; fails if the refinement
/// does not settle.
pub fn anchor_phase(
    candidate: &BranchCandidate,
    rel: &RelativePhaseField,
    dataset: &PhaselessDataset,
    basis: &RadiatingBasis,
    init: AnchorInit,
) -> Result<AnchoredCandidate> {
    let out = anchor_inner(candidate, rel, dataset, basis, init, ANCHOR_MAX_ITERATIONS);
    if !out.converged {
        return Err(Error::Anchoring {
            final_increment: out.anchor.increment,
            history: out.anchor.history,
        });
    }
    Ok(out)
}

/// Aggregate weighted residuals of both candidates and the decision. The
/// chosen candidate is anchored to convergence with sign polishing, the
/// other one only scored with a short anchoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub residual_plus: f64,
    pub residual_minus: f64,
    pub chosen: Branch,
}

impl BranchReport {
    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn ratio(&self) -> f64 {
        let (a, b) = (self.residual_plus, self.residual_minus);
        a.max(b) / a.min(b).max(f64::MIN_POSITIVE)
    }
}

/// Anchors both candidates and keeps the one with the radiating extension.
pub fn disambiguate_branch(
    candidates: (&BranchCandidate, &BranchCandidate),
    rel: &RelativePhaseField,
    dataset: &PhaselessDataset,
    basis: &RadiatingBasis,
) -> Result<(AnchoredCandidate, BranchReport)> {
    // Both candidates are scored with a short anchoring; only the chosen
    // one is iterated to convergence.
    let score = |c: &BranchCandidate| anchor_inner(c, rel, dataset, basis, AnchorInit::LeastSquares, SCORE_ITERATIONS);
    let (a, b) = rayon::join(|| score(candidates.0), || score(candidates.1));
    let (plus, minus) = if a.branch == Branch::Plus { (a, b) } else { (b, a) };
    let chosen = if plus.aggregate <= minus.aggregate { Branch::Plus } else { Branch::Minus };
    let winner = if candidates.0.branch == chosen { candidates.0 } else { candidates.1 };
    let best = anchor_inner(winner, rel, dataset, basis, AnchorInit::LeastSquares, ANCHOR_MAX_ITERATIONS);
    let report = match chosen {
        Branch::Plus => BranchReport {
            residual_plus: best.aggregate,
            residual_minus: minus.aggregate,
            chosen,
        },
        Branch::Minus => BranchReport {
            residual_plus: plus.aggregate,
            residual_minus: best.aggregate,
            chosen,
        },
    };
    if report.ratio() < BRANCH_RATIO {
        return Err(Error::Ambiguous {
            ratio: report.ratio(),
            required: BRANCH_RATIO,
        });
    }
    if !best.converged {
        return Err(Error::Anchoring {
            final_increment: best.anchor.increment,
            history: best.anchor.history,
        });
    }
    Ok((best, report))
}

/// Output of the full retrieval.
#[derive(Debug, Clone)]
pub struct Retrieval {
    /// Retrieved phased total fields on the measurement set.
    pub fields: PhasedFields,
    pub expansions: Vec<RadiatingExpansion>,
    pub anchor: AnchorPhase,
    pub report: BranchReport,
}

impl Retrieval {
    /// Header for writing the retrieved fields, with the expansion center
    /// and radius needed to refit them.
    pub fn fields_meta(&self, dataset: &PhaselessDataset) -> FieldsMeta {
        let mut meta = FieldsMeta::for_fields(&self.fields, &dataset.meta.measurement, dataset.meta.directions);
        meta.expansion_center = self.expansions.first().map(|e| e.center);
        meta.expansion_radius = self.expansions.first().map(|e| e.radius);
        meta.scene_hash = dataset.meta.scene_hash.clone();
        meta
    }

    /// Scattered fields `u − u^i`, `[m][j]`.
    pub fn scattered(&self) -> Vec<Vec<Complex64>> {
        let inc = self.fields.incident();
        self.fields
            .values
            .iter()
            .zip(inc)
            .map(|(row, irow)| row.iter().zip(irow).map(|(u, i)| u - i).collect())
            .collect()
    }
}

/// Correlation, continuation, anchoring and branch selection in sequence.
pub fn retrieve(dataset: &PhaselessDataset, scene: &Scene) -> Result<Retrieval> {
    dataset.validate()?;
    if (dataset.meta.k - scene.wavenumber).abs() > 1e-12 * scene.wavenumber {
        return Err(Error::Invalid("data set and scene wavenumbers differ".into()));
    }
    let basis = RadiatingBasis::for_scene(scene)?;
    let corr = extract_correlation(dataset);
    let rel = principal_relative_phase(&corr, dataset);
    let (plus, minus) = continue_branch(&rel)?;
    let (best, report) = disambiguate_branch((&plus, &minus), &rel, dataset, &basis)?;
    let z: Vec<Complex64> = best
        .anchor
        .theta
        .iter()
        .map(|t| Complex64::from_polar(1.0, *t))
        .collect();
    // u(x, d₀) = r₀ e^{iθ₀}, projected like the other columns.
    let k = dataset.meta.k;
    let u0: Vec<Complex64> = dataset
        .points
        .iter()
        .zip(&dataset.reference)
        .zip(&z)
        .map(|((x, r0), zm)| r0 * zm - Complex64::from_polar(1.0, k * x.dot(dataset.meta.d0.unit())))
        .collect();
    let reference: Vec<Complex64> = basis
        .project(&u0)
        .iter()
        .zip(&dataset.points)
        .map(|(s, x)| s + Complex64::from_polar(1.0, k * x.dot(dataset.meta.d0.unit())))
        .collect();
    Ok(Retrieval {
        fields: PhasedFields {
            k,
            points: dataset.points.clone(),
            directions: dataset.directions.clone(),
            d0: dataset.meta.d0,
            values: best.total,
            reference,
        },
        expansions: best.expansions,
        anchor: best.anchor,
        report,
    })
}
