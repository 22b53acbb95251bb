//! Instantaneous biorthogonal eigensystems and complex Berry phases of
//! cyclic two-level Hamiltonians.
//!
//! The phase of band `α` around a loop `s ∈ [0, T)` sampled at `n` points is
//!
//! ```text
//! θ_α = i Σ_k Log⟨L_α(s_k)|R_α(s_{k+1})⟩
//!       − (i/2) Σ_k Log(⟨L_α(s_k)|R_α(s_{k+1})⟩ ⟨L_α(s_{k+1})|R_α(s_k)⟩)
//! ```
//!
//! The first sum is the discrete biorthogonal Wilson loop. The second one
//! is invariant step by step under any rescaling `R → cR, L → L/c` and
//! cancels the first-order (metric) error of the one-sided overlaps, so the
//! result converges as `O(n⁻²)` and is exactly real for Hermitian loops.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bloch_decompose, Complex2x2, ModelSpec, ModelTemplate, C64};

pub const DEFAULT_STEPS: usize = 8192;
pub const MIN_STEPS: usize = 256;

/// Modulus of a unit-vector overlap `⟨L|R⟩` below which the pair is treated
/// as coalesced.
const NEAR_EP_OVERLAP: f64 = 1e-8;
const DEFECT_RATIO: f64 = 1e-10;
/// Relative margin inside which the two adjugate columns count as equal.
const COLUMN_TIE: f64 = 1e-8;

/// Eigenpair data of a 2×2 Hamiltonian at one loop position.
///
/// `left[α]` is a covector: `⟨L_α|R_β⟩ = Σ_i left[α][i] · right[β][i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigensystemInstant {
    pub eigenvalues: [C64; 2],
    pub right: [[C64; 2]; 2],
    pub left: [[C64; 2]; 2],
    pub biorthonormal: bool,
    pub gap: f64,
}

#[inline]
fn pair(l: &[C64; 2], r: &[C64; 2]) -> C64 {
    l[0] * r[0] + l[1] * r[1]
}

fn normalized(v: [C64; 2]) -> [C64; 2] {
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / n, v[1] / n]
}

/// Eigenvector of `d·σ` with eigenvalue `m`, taken from the larger adjugate
/// column of `d·σ − m`. Near ties the column is fixed by the sign of
/// `Im(conj(d_z) m)` so that the choice is deterministic.
fn adjugate_eigenvector(d: [C64; 3], m: C64) -> [C64; 2] {
    let [dx, dy, dz] = d;
    let i = C64::new(0.0, 1.0);
    let first = [dz + m, dx + i * dy];
    let second = [dx - i * dy, m - dz];
    let n1 = first[0].norm_sqr() + first[1].norm_sqr();
    let n2 = second[0].norm_sqr() + second[1].norm_sqr();
    let take_first = if (n1 - n2).abs() <= COLUMN_TIE * (n1 + n2) { (dz.conj() * m).im >= 0.0 } else { n1 > n2 };
    normalized(if take_first { first } else { second })
}

/// Eigenvalues `d0 ± √(d·d)` with right and left eigenvectors in closed
/// form. The pair is not yet biorthonormal.
pub fn instantaneous_eigensystem(h: &Complex2x2) -> Result<EigensystemInstant> {
    let b = bloch_decompose(h);
    let mu = b.dot_self().sqrt();
    let dnorm = b.d.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let eigenvalues = [b.d0 + mu, b.d0 - mu];
    let gap = (2.0 * mu).norm();
    if dnorm == 0.0 {
        let e1 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let e2 = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        return Ok(EigensystemInstant { eigenvalues, right: [e1, e2], left: [e1, e2], biorthonormal: true, gap });
    }
    if mu.norm() < DEFECT_RATIO * dnorm {
        return Err(Error::DefectivePoint);
    }
    let dt = [b.d[0], -b.d[1], b.d[2]];
    let right = [adjugate_eigenvector(b.d, mu), adjugate_eigenvector(b.d, -mu)];
    let left = [adjugate_eigenvector(dt, mu), adjugate_eigenvector(dt, -mu)];
    Ok(EigensystemInstant { eigenvalues, right, left, biorthonormal: false, gap })
}

/// Rescales the left vectors so that `⟨L_α|R_α⟩ = 1`.
pub fn biorthonormalize(e: &EigensystemInstant) -> Result<EigensystemInstant> {
    let mut out = *e;
    for a in 0..2 {
        let ov = pair(&normalized(e.left[a]), &normalized(e.right[a]));
        if ov.norm() < NEAR_EP_OVERLAP {
            return Err(Error::NearEp { overlap: ov.norm() });
        }
        let s = pair(&e.left[a], &e.right[a]);
        out.left[a] = [e.left[a][0] / s, e.left[a][1] / s];
    }
    out.biorthonormal = true;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpPolicy {
    /// Abort with [`Error::EpOnPath`].
    Error,
    /// Skip the coalesced sample and mark the loop as not certified.
    FlagAndContinue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryOptions {
    pub steps: usize,
    /// Combine `steps` and `2·steps` as `(4θ(2n) − θ(n))/3`.
    pub richardson: bool,
    pub ep_policy: EpPolicy,
    /// Loop positions with `|ε₊ − ε₋|` below this are flagged.
    pub gap_tol: f64,
}

impl Default for BerryOptions {
    fn default() -> Self {
        BerryOptions { steps: DEFAULT_STEPS, richardson: true, ep_policy: EpPolicy::Error, gap_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerryPhaseResult {
    /// Complex phase per band; bands are ordered by `(Re ε, Im ε)`
    /// descending at `s = 0`.
    pub theta: Vec<C64>,
    pub steps: usize,
    /// Loop positions `s/T ∈ [0, 1)` where the gap fell below tolerance or
    /// the splitting switched between real and imaginary.
    pub degeneracy_flags: Vec<f64>,
    /// `Ω/2` of the Bloch path, filled in for Hermitian loops.
    pub half_solid_angle: Option<f64>,
    /// False when the loop crossed or touched an EP, or the bands exchanged
    /// around the loop.
    pub certified: bool,
    /// `max_α |θ_α(2n) − θ_α(n)|`, present when both resolutions were run.
    pub step_doubling_delta: Option<f64>,
}

#[derive(Clone, Copy)]
struct LoopSample {
    system: Option<EigensystemInstant>,
}

fn sample_loop(model: &ModelSpec, n: usize) -> Vec<LoopSample> {
    let period = model.period();
    (0..n)
        .map(|k| {
            let h = model.hamiltonian_at(period * k as f64 / n as f64);
            let system = instantaneous_eigensystem(&h).and_then(|e| biorthonormalize(&e)).ok();
            LoopSample { system }
        })
        .collect()
}

fn band_order(e: &EigensystemInstant) -> [usize; 2] {
    let (a, b) = (e.eigenvalues[0], e.eigenvalues[1]);
    match b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)) {
        Ordering::Greater => [1, 0],
        _ => [0, 1],
    }
}

fn splitting_is_real(e: &EigensystemInstant) -> bool {
    let d = e.eigenvalues[0] - e.eigenvalues[1];
    d.re.abs() >= d.im.abs()
}

struct RawLoop {
    theta: [C64; 2],
    flags: Vec<f64>,
    certified: bool,
}

fn wilson_loop(model: &ModelSpec, n: usize, opts: &BerryOptions) -> Result<RawLoop> {
    let samples = sample_loop(model, n);
    let mut flags = Vec::new();
    let mut certified = true;
    for (k, s) in samples.iter().enumerate() {
        match &s.system {
            Some(e) if e.gap < opts.gap_tol => flags.push(k as f64 / n as f64),
            Some(_) => {}
            None => {
                if opts.ep_policy == EpPolicy::Error {
                    return Err(Error::EpOnPath { step: k });
                }
                flags.push(k as f64 / n as f64);
                certified = false;
            }
        }
    }
    let valid: Vec<usize> = (0..n).filter(|&k| samples[k].system.is_some()).collect();
    if valid.len() < 2 {
        return Err(Error::EpOnPath { step: 0 });
    }

    let systems: Vec<EigensystemInstant> = valid.iter().map(|&k| samples[k].system.expect("valid sample")).collect();
    let phase = discrete_berry_phase(&systems);
    for &j in &phase.crossings {
        flags.push(valid[j] as f64 / n as f64);
    }
    flags.sort_by(f64::total_cmp);
    flags.dedup();
    Ok(RawLoop { theta: phase.theta, flags, certified: certified && phase.closed && phase.crossings.is_empty() })
}

/// Output of [`discrete_berry_phase`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoopPhase {
    pub theta: [C64; 2],
    /// False when the tracked bands end up exchanged after one loop.
    pub closed: bool,
    /// Sample indices `k` such that an EP lies between `k` and `k + 1`.
    pub crossings: Vec<usize>,
}

/// Re-derives the closed-form gauge from `H = Σ λ_α |R_α⟩⟨L_α|`, keeping
/// the input when that fails. Band labels follow the eigenvalues.
fn canonical_gauge(e: &EigensystemInstant) -> EigensystemInstant {
    let mut h = Complex2x2::zero();
    for a in 0..2 {
        for r in 0..2 {
            for c in 0..2 {
                h.0[r][c] += e.eigenvalues[a] * e.right[a][r] * e.left[a][c];
            }
        }
    }
    match instantaneous_eigensystem(&h).and_then(|f| biorthonormalize(&f)) {
        Ok(f) => {
            let direct = (f.eigenvalues[0] - e.eigenvalues[0]).norm() + (f.eigenvalues[1] - e.eigenvalues[1]).norm();
            let crossed = (f.eigenvalues[0] - e.eigenvalues[1]).norm() + (f.eigenvalues[1] - e.eigenvalues[0]).norm();
            if crossed < direct {
                EigensystemInstant {
                    eigenvalues: e.eigenvalues,
                    right: [f.right[1], f.right[0]],
                    left: [f.left[1], f.left[0]],
                    ..f
                }
            } else {
                EigensystemInstant { eigenvalues: e.eigenvalues, ..f }
            }
        }
        Err(_) => *e,
    }
}

/// Corrected Wilson-loop phase of a closed sequence of biorthonormal
/// eigensystems; the last sample connects back to the first.
///
/// Each sample is first brought to the closed-form gauge, so the result,
/// including its `2π` branch, does not depend on how the input vectors
/// were scaled.
pub fn discrete_berry_phase(systems: &[EigensystemInstant]) -> LoopPhase {
    let systems: Vec<EigensystemInstant> = systems.iter().map(canonical_gauge).collect();
    let n = systems.len();
    let i = C64::new(0.0, 1.0);
    let zero = C64::new(0.0, 0.0);
    if n == 0 {
        return LoopPhase { theta: [zero; 2], closed: true, crossings: Vec::new() };
    }
    let mut perm = band_order(&systems[0]);
    let initial = perm;
    let mut wilson = [zero; 2];
    let mut metric = [zero; 2];
    let mut crossings = Vec::new();
    for k in 0..n {
        let (a, b) = (&systems[k], &systems[(k + 1) % n]);
        // |⟨L_p|R_q'⟩⟨L_q'|R_p⟩| does not depend on the normalization gauge.
        let link = |p: usize, q: usize| (pair(&a.left[p], &b.right[q]) * pair(&b.left[q], &a.right[p])).norm();
        let keep = link(perm[0], 0) + link(perm[1], 1);
        let swap = link(perm[0], 1) + link(perm[1], 0);
        let next_perm = if swap > keep { [1, 0] } else { [0, 1] };
        if splitting_is_real(a) != splitting_is_real(b) {
            crossings.push(k);
        }
        for band in 0..2 {
            let (p, q) = (perm[band], next_perm[band]);
            let forward = pair(&a.left[p], &b.right[q]);
            let backward = pair(&b.left[q], &a.right[p]);
            wilson[band] += forward.ln();
            metric[band] += (forward * backward).ln();
        }
        perm = next_perm;
    }
    LoopPhase {
        theta: [0, 1].map(|band| i * wilson[band] - i * 0.5 * metric[band]),
        closed: perm == initial,
        crossings,
    }
}

/// Complex Berry phases of both bands of `model` around one period.
pub fn berry_phase_loop(model: &ModelSpec, opts: &BerryOptions) -> Result<BerryPhaseResult> {
    if opts.steps < MIN_STEPS {
        return Err(Error::InvalidParameter(format!("berry loop needs >= {MIN_STEPS} steps")));
    }
    let coarse = wilson_loop(model, opts.steps, opts)?;
    let (theta, steps, delta, flags, certified) = if opts.richardson {
        let fine = wilson_loop(model, 2 * opts.steps, opts)?;
        let theta = [0, 1].map(|b| (fine.theta[b] * 4.0 - coarse.theta[b]) / 3.0);
        let delta = (0..2).map(|b| (fine.theta[b] - coarse.theta[b]).norm()).fold(0.0, f64::max);
        (theta, 2 * opts.steps, Some(delta), fine.flags, coarse.certified && fine.certified)
    } else {
        (coarse.theta, opts.steps, None, coarse.flags, coarse.certified)
    };
    let half_solid_angle = if is_hermitian_loop(model, opts.steps) {
        half_solid_angle(&bloch_path(model, opts.steps, BlochPart::Real)).ok()
    } else {
        None
    };
    Ok(BerryPhaseResult {
        theta: theta.to_vec(),
        steps,
        degeneracy_flags: flags,
        half_solid_angle,
        certified,
        step_doubling_delta: delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlochPart {
    Real,
    Imaginary,
}

/// Samples `Re d(s)` or `Im d(s)` around the loop.
pub fn bloch_path(model: &ModelSpec, n: usize, part: BlochPart) -> Vec<[f64; 3]> {
    let period = model.period();
    (0..n)
        .map(|k| {
            let b = model.bloch_at(period * k as f64 / n as f64);
            match part {
                BlochPart::Real => b.hermitian_part(),
                BlochPart::Imaginary => b.anti_hermitian_part(),
            }
        })
        .collect()
}

fn is_hermitian_loop(model: &ModelSpec, n: usize) -> bool {
    bloch_path(model, n, BlochPart::Imaginary).iter().all(|v| v.iter().all(|x| x.abs() < 1e-12))
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = dot(v, v).sqrt();
    v.map(|x| x / n)
}

/// Half the signed solid angle enclosed by a closed loop of directions.
///
/// Points are projected onto the unit sphere and joined by geodesics. The
/// enclosed area is the sum of the signed spherical triangles
/// `(pivot, p_k, p_{k+1})`, with the pivot at the mean direction of the
/// loop. The result is defined modulo `2π`.
pub fn half_solid_angle(path: &[[f64; 3]]) -> Result<f64> {
    if path.len() < 3 {
        return Err(Error::InvalidParameter("loop needs at least 3 points".into()));
    }
    let mut pts = Vec::with_capacity(path.len());
    for (k, p) in path.iter().enumerate() {
        if dot(*p, *p) == 0.0 || !p.iter().all(|x| x.is_finite()) {
            return Err(Error::ZeroVector(k));
        }
        pts.push(unit(*p));
    }
    let n = pts.len();
    for k in 0..n {
        let next = (k + 1) % n;
        if dot(pts[k], pts[next]) <= -1.0 + 1e-12 {
            return Err(Error::AntipodalPoints { index: k, next });
        }
    }
    // The pivot must not depend on orientation, otherwise reversing the
    // loop would flip the pivot together with the sign.
    let mut mean = [0.0; 3];
    for p in &pts {
        for (acc, x) in mean.iter_mut().zip(p) {
            *acc += x / n as f64;
        }
    }
    let pivot = if dot(mean, mean) > 1e-12 {
        unit(mean)
    } else {
        let mut normal = [0.0; 3];
        for k in 0..n {
            let c = cross(pts[k], pts[(k + 1) % n]);
            for (acc, x) in normal.iter_mut().zip(c) {
                *acc += x;
            }
        }
        if dot(normal, normal) == 0.0 {
            return Ok(0.0);
        }
        unit(normal)
    };
    let omega: f64 = (0..n)
        .map(|k| {
            let (a, b) = (pts[k], pts[(k + 1) % n]);
            let num = dot(pivot, cross(a, b));
            let den = 1.0 + dot(pivot, a) + dot(a, b) + dot(b, pivot);
            2.0 * num.atan2(den)
        })
        .sum();
    Ok(omega / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionClass {
    /// Real instantaneous spectrum over the whole period.
    AllReal,
    /// At least one sample has eigenvalues off both axes.
    SomeComplex,
    /// Purely imaginary over the whole period.
    AllImaginaryWindow,
    /// Alternates between real and purely imaginary.
    Mixed,
}

impl RegionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionClass::AllReal => "AllReal",
            RegionClass::SomeComplex => "SomeComplex",
            RegionClass::AllImaginaryWindow => "AllImaginaryWindow",
            RegionClass::Mixed => "Mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRegionScan {
    pub gammas: Vec<f64>,
    pub classes: Vec<RegionClass>,
    /// `γ_c` values where the class changes, refined by bisection.
    pub thresholds: Vec<f64>,
}

const REAL_TOL: f64 = 1e-10;
const THRESHOLD_TOL: f64 = 1e-6;

/// Classifies the instantaneous spectrum `±√(d·d)` sampled over one period.
pub fn classify_instantaneous(model: &ModelSpec, samples: usize) -> RegionClass {
    let period = model.period();
    let (mut real, mut imag, mut complex) = (false, false, false);
    for k in 0..samples {
        let b = model.bloch_at(period * k as f64 / samples as f64);
        let e = b.d0 + b.dot_self().sqrt();
        let e2 = b.d0 - b.dot_self().sqrt();
        let im = e.im.abs().max(e2.im.abs());
        let re = e.re.abs().max(e2.re.abs());
        if im < REAL_TOL {
            real = true;
        } else if re < REAL_TOL {
            imag = true;
        } else {
            complex = true;
        }
    }
    match (real, imag, complex) {
        (_, _, true) => RegionClass::SomeComplex,
        (true, false, false) => RegionClass::AllReal,
        (false, true, false) => RegionClass::AllImaginaryWindow,
        _ => RegionClass::Mixed,
    }
}

/// Scans `gamma_count` values in `[gamma_min, gamma_max]` and bisects every
/// class change down to `1e-6`.
pub fn spectrum_region_scan(
    template: &ModelTemplate,
    gamma_min: f64,
    gamma_max: f64,
    gamma_count: usize,
    samples: usize,
) -> Result<SpectrumRegionScan> {
    if samples < 64 {
        return Err(Error::InvalidParameter("spectrum scan needs >= 64 samples per period".into()));
    }
    if gamma_count < 2 || gamma_max.partial_cmp(&gamma_min) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidParameter("gamma range must be non-degenerate".into()));
    }
    let classify =
        |g: f64| -> Result<RegionClass> { Ok(classify_instantaneous(&template.instantiate(g, 1.0)?, samples)) };
    let gammas: Vec<f64> =
        (0..gamma_count).map(|i| gamma_min + (gamma_max - gamma_min) * i as f64 / (gamma_count - 1) as f64).collect();
    let classes = gammas.iter().map(|&g| classify(g)).collect::<Result<Vec<_>>>()?;
    let mut thresholds = Vec::new();
    for i in 0..gamma_count - 1 {
        if classes[i] == classes[i + 1] {
            continue;
        }
        let (mut lo, mut hi) = (gammas[i], gammas[i + 1]);
        let low_class = classes[i];
        while hi - lo > THRESHOLD_TOL / 4.0 {
            let mid = 0.5 * (lo + hi);
            if classify(mid)? == low_class {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        thresholds.push(0.5 * (lo + hi));
    }
    Ok(SpectrumRegionScan { gammas, classes, thresholds })
}
