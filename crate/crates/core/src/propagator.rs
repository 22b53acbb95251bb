//! One-period propagation, Floquet quasienergies from the monodromy trace,
//! and the exceptional-point indicator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bloch_decompose, Complex2x2, ModelSpec, Waveform, C64, I, ONE};

/// Below `|μτ|` of this size the propagator uses truncated Taylor series.
const TAYLOR_RADIUS: f64 = 1e-4;

pub const DEFAULT_INTEGRATE_STEPS: usize = 200_000;

/// `exp(-i H τ)` for a 2×2 `H` in closed form.
///
/// With `H = d0·I + d·σ` and `z² = (d·d) τ²`, returns
/// `e^{-i d0 τ} [cos z · I − i τ sinc z · (d·σ)]`. Both `cos z` and
/// `sinc z` are even in `z`, so only `z²` is needed and the nilpotent
/// limit `d·d = 0` is exact.
pub fn expm_two_level(h: &Complex2x2, tau: f64) -> Complex2x2 {
    let b = bloch_decompose(h);
    let z2 = b.dot_self() * (tau * tau);
    let (cos_z, sinc_z) = if z2.norm() < TAYLOR_RADIUS * TAYLOR_RADIUS {
        let z4 = z2 * z2;
        let z6 = z4 * z2;
        let z8 = z4 * z4;
        (
            ONE - z2 / 2.0 + z4 / 24.0 - z6 / 720.0 + z8 / 40_320.0,
            ONE - z2 / 6.0 + z4 / 120.0 - z6 / 5_040.0 + z8 / 362_880.0,
        )
    } else {
        let z = z2.sqrt();
        (z.cos(), z.sin() / z)
    };
    let phase = (-I * b.d0 * tau).exp();
    let k = -I * sinc_z * tau;
    let [dx, dy, dz] = b.d;
    Complex2x2::new(cos_z + k * dz, k * (dx - I * dy), k * (dx + I * dy), cos_z - k * dz).scale(phase)
}

/// Piecewise-constant Hamiltonian over one period.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSequence {
    pub segments: Vec<(Complex2x2, f64)>,
    pub period: f64,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Least common multiple of the drive multipliers; the period splits into
/// `4 * lcm` segments on which every square wave is constant.
fn segment_multiplier(model: &ModelSpec) -> u32 {
    model
        .terms
        .iter()
        .filter(|t| t.waveform != Waveform::Constant)
        .fold(1, |acc, t| acc / gcd(acc, t.multiplier) * t.multiplier)
}

/// Sign of a square drive of multiplier `k` on segment `index` of `4·lcm`.
///
/// Within each of its own periods a drive spans `4·lcm/k` segments split in
/// quarters: square-cosine follows `(+,−,−,+)`, square-sine `(+,+,−,−)`.
fn segment_sign(waveform: Waveform, k: u32, lcm: u32, index: usize) -> f64 {
    let quarter_len = (lcm / k) as usize;
    let quarter = (index % (4 * quarter_len)) / quarter_len;
    let pattern: [f64; 4] = match waveform {
        Waveform::SquareCos => [1.0, -1.0, -1.0, 1.0],
        Waveform::SquareSin => [1.0, 1.0, -1.0, -1.0],
        _ => [1.0; 4],
    };
    pattern[quarter]
}

/// The `4β` constant Hamiltonians of a square-family model, in time order.
pub fn segment_hamiltonians(model: &ModelSpec) -> Result<SegmentSequence> {
    if let Some(term) = model.terms.iter().position(|t| t.waveform.is_smooth()) {
        return Err(Error::SmoothWaveform { term });
    }
    let lcm = segment_multiplier(model);
    let count = 4 * lcm as usize;
    let period = model.period();
    let tau = period / count as f64;
    let segments = (0..count)
        .map(|index| {
            let h = model.terms.iter().fold(Complex2x2::zero(), |acc, term| {
                let sign = segment_sign(term.waveform, term.multiplier, lcm, index);
                acc + Complex2x2::pauli(term.axis) * term.coefficient(sign)
            });
            (h, tau)
        })
        .collect();
    Ok(SegmentSequence { segments, period })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropagationEngine {
    /// Product of closed-form segment exponentials (square family only).
    Piecewise,
    /// Fixed-step classical RK4 on `G' = -iH(t) G`.
    Integrate { steps_per_period: usize },
}

impl PropagationEngine {
    pub fn integrate() -> Self {
        PropagationEngine::Integrate { steps_per_period: DEFAULT_INTEGRATE_STEPS }
    }
}

/// One-period propagator and the quantities derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyResult {
    pub g: Complex2x2,
    /// `tr G / 2`
    pub half_trace: C64,
    /// Quasienergy folded to `Re ∈ (−ω/2, ω/2]`, `Im ≥ 0`. The bands are `±eps_f`.
    pub eps_f: C64,
    pub n_f: [C64; 3],
    pub max_im_eps: f64,
    /// `‖G − cI‖_F`; vanishes only when `G` is proportional to the identity.
    pub defectiveness: f64,
    pub period: f64,
}

impl MonodromyResult {
    pub fn from_propagator(g: Complex2x2, period: f64) -> Self {
        let c = g.trace() * 0.5;
        let omega = 2.0 * PI / period;
        // arccos turns a rounding residual δ in |c| = 1 into Im ε ~ √(2δ)/T.
        // Once ‖G‖ is large enough for the noise to reach 1e-8 the trace is
        // not resolved near ±1 and nothing is snapped.
        let noise = 64.0 * f64::EPSILON * g.frobenius_norm().powi(2).max(1.0);
        let c_eff = if noise <= 1e-8 && c.im.abs() <= noise && c.re.abs() <= 1.0 + noise {
            C64::new(c.re.clamp(-1.0, 1.0), 0.0)
        } else {
            c
        };
        let mut eps = quasienergy_from_trace(c_eff, period);
        if eps.re > omega / 2.0 {
            eps.re -= omega;
        }
        let s = (eps * period).sin();
        let d = bloch_decompose(&g).d;
        let n_f = if s.norm() > 1e-14 { d.map(|x| I * x / s) } else { [C64::new(0.0, 0.0); 3] };
        let defectiveness = (g - Complex2x2::identity().scale(c)).frobenius_norm();
        MonodromyResult { g, half_trace: c, eps_f: eps, n_f, max_im_eps: eps.im.abs(), defectiveness, period }
    }

    pub fn eigenvalues(&self) -> [C64; 2] {
        let c = self.half_trace;
        let root = (c * c - self.g.det()).sqrt();
        [c + root, c - root]
    }
}

/// Monodromy matrix of `model` over one period.
pub fn monodromy(model: &ModelSpec, engine: PropagationEngine) -> Result<MonodromyResult> {
    let g = match engine {
        PropagationEngine::Piecewise => propagate_segments(&segment_hamiltonians(model)?)?,
        PropagationEngine::Integrate { steps_per_period } => integrate(model, steps_per_period)?,
    };
    Ok(MonodromyResult::from_propagator(g, model.period()))
}

/// Later segments multiply from the left.
pub fn propagate_segments(seq: &SegmentSequence) -> Result<Complex2x2> {
    let mut g = Complex2x2::identity();
    for (index, (h, tau)) in seq.segments.iter().enumerate() {
        g = expm_two_level(h, *tau) * g;
        if !g.is_finite() {
            return Err(Error::NonFinite { segment: index });
        }
    }
    Ok(g)
}

/// RK4 over one period. Square drives are integrated segment by segment,
/// each evaluated at its segment midpoint so no stage straddles a jump.
fn integrate(model: &ModelSpec, steps_per_period: usize) -> Result<Complex2x2> {
    let period = model.period();
    let has_square = model.terms.iter().any(|t| t.waveform.is_square());
    let pieces = if has_square { 4 * segment_multiplier(model) as usize } else { 1 };
    let steps = steps_per_period.div_ceil(pieces).max(1);
    let span = period / pieces as f64;
    let h = span / steps as f64;
    let omega = model.base_omega;

    let hamiltonian = |t: f64, mid: f64| {
        model.terms.iter().fold(Complex2x2::zero(), |acc, term| {
            let at = if term.waveform.is_square() { mid } else { t };
            let w = term.waveform.value(f64::from(term.multiplier) * omega * at);
            acc + Complex2x2::pauli(term.axis) * term.coefficient(w)
        })
    };
    let rhs = |hm: &Complex2x2, g: &Complex2x2| (*hm * *g).scale(-I);

    let mut g = Complex2x2::identity();
    // Kahan compensation of the running sum; plain accumulation over 2×10⁵
    // steps drifts det G by ~1e-8 once ‖G‖ ~ 1e3.
    let mut carry = Complex2x2::zero();
    for piece in 0..pieces {
        let start = piece as f64 * span;
        let mid = start + 0.5 * span;
        for step in 0..steps {
            let t = start + step as f64 * h;
            let h0 = hamiltonian(t, mid);
            let h1 = hamiltonian(t + 0.5 * h, mid);
            let h2 = hamiltonian(t + h, mid);
            let k1 = rhs(&h0, &g);
            let k2 = rhs(&h1, &(g + k1 * (0.5 * h)));
            let k3 = rhs(&h1, &(g + k2 * (0.5 * h)));
            let k4 = rhs(&h2, &(g + k3 * h));
            let y = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0) - carry;
            let next = g + y;
            carry = (next - g) - y;
            g = next;
        }
        if !g.is_finite() {
            return Err(Error::NonFinite { segment: piece });
        }
    }
    Ok(g)
}

/// Principal arccos without cancellation for large |z|. With s = √(1−z)√(1+z)
/// the two candidates z ± is multiply to one, so the logarithm of the smaller is
/// recovered from the larger.
fn stable_acos(z: C64) -> C64 {
    let one = C64::new(1.0, 0.0);
    let s = (one - z).sqrt() * (one + z).sqrt();
    let i = C64::i();
    let a = z + i * s;
    let b = z - i * s;
    let ln = if a.norm() >= b.norm() { a.ln() } else { -b.ln() };
    -i * ln
}

/// `ε = arccos(c) / T` on the principal branch, with the sign of the band
/// chosen so that `Im ε ≥ 0`.
pub fn quasienergy_from_trace(c: C64, period: f64) -> C64 {
    // The complex arccos leaves ~1e-17 imaginary residue on real input.
    let acos = if c.im == 0.0 && c.re.abs() <= 1.0 { C64::new(c.re.acos(), 0.0) } else { stable_acos(c) };
    let mut eps = acos / period;
    if eps.im < 0.0 {
        eps = -eps;
        if eps.re < 0.0 {
            eps.re += 2.0 * PI / period;
        }
    }
    eps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DegeneracyKind {
    #[serde(rename = "EP")]
    Ep,
    Diabolic,
    None,
}

impl DegeneracyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DegeneracyKind::Ep => "EP",
            DegeneracyKind::Diabolic => "Diabolic",
            DegeneracyKind::None => "None",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpOptions {
    /// `|f|` below which a point counts as a root.
    pub root_tol: f64,
    /// Frobenius defectiveness above which a root is an EP.
    pub defect_threshold: f64,
}

impl Default for EpOptions {
    fn default() -> Self {
        EpOptions { root_tol: 1e-6, defect_threshold: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpIndicator {
    /// Negative in the stable phase, positive in the broken phase, zero on
    /// the `|tr G / 2| = 1` contours.
    pub f: f64,
    pub kind: DegeneracyKind,
}

pub fn ep_indicator(r: &MonodromyResult, opts: &EpOptions) -> EpIndicator {
    let c = r.half_trace;
    let f = if c.im.abs() < 1e-9 { c.re.abs() - 1.0 } else { c.im.abs() };
    let kind = if f.abs() > opts.root_tol {
        DegeneracyKind::None
    } else if r.defectiveness > opts.defect_threshold {
        DegeneracyKind::Ep
    } else {
        DegeneracyKind::Diabolic
    };
    EpIndicator { f, kind }
}
