//! Two-level Hamiltonian algebra, drive specifications and the model presets.
//!
//! Every Hamiltonian handled by this crate has the form
//! `H(t) = d0(t)·I + d(t)·σ` with a complex Bloch vector `d = A + iB`.
//! Drive terms contribute `amplitude · w(k ω t) · σ_axis` (Hermitian) or
//! `amplitude · w(k ω t) · i σ_axis` (anti-Hermitian), where `w` is a
//! sinusoid or its sign.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const I: C64 = C64::new(0.0, 1.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Dense 2×2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex2x2(pub [[C64; 2]; 2]);

impl Complex2x2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Complex2x2([[a, b], [c, d]])
    }

    pub const fn zero() -> Self {
        Complex2x2([[ZERO, ZERO], [ZERO, ZERO]])
    }

    pub const fn identity() -> Self {
        Complex2x2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub const fn pauli_x() -> Self {
        Complex2x2([[ZERO, ONE], [ONE, ZERO]])
    }

    pub const fn pauli_y() -> Self {
        Complex2x2([[ZERO, C64::new(0.0, -1.0)], [I, ZERO]])
    }

    pub const fn pauli_z() -> Self {
        Complex2x2([[ONE, ZERO], [ZERO, C64::new(-1.0, 0.0)]])
    }

    pub fn pauli(axis: Axis) -> Self {
        match axis {
            Axis::X => Self::pauli_x(),
            Axis::Y => Self::pauli_y(),
            Axis::Z => Self::pauli_z(),
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[r][c]
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> C64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Complex2x2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Complex2x2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.0;
        Complex2x2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries().zip(other.entries()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn entries(&self) -> impl Iterator<Item = C64> + '_ {
        self.0.iter().flat_map(|row| row.iter().copied())
    }

    pub fn mul_vec(&self, v: [C64; 2]) -> [C64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }
}

impl Add for Complex2x2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        Complex2x2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }
}

impl AddAssign for Complex2x2 {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for Complex2x2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for Complex2x2 {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-ONE)
    }
}

impl Mul for Complex2x2 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        Complex2x2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }
}

impl Mul<C64> for Complex2x2 {
    type Output = Self;
    fn mul(self, rhs: C64) -> Self {
        self.scale(rhs)
    }
}

impl Mul<f64> for Complex2x2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale(C64::new(rhs, 0.0))
    }
}

/// `M = d0·I + dx·X + dy·Y + dz·Z` with complex coefficients.
///
/// The real part of `d` is the Hermitian Bloch vector `A`, the imaginary
/// part the anti-Hermitian vector `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochDecomposition {
    pub d0: C64,
    pub d: [C64; 3],
}

impl BlochDecomposition {
    pub fn recompose(&self) -> Complex2x2 {
        let [dx, dy, dz] = self.d;
        Complex2x2::new(self.d0 + dz, dx - I * dy, dx + I * dy, self.d0 - dz)
    }

    /// `d·d` without conjugation. Its principal square root is half the
    /// eigenvalue splitting.
    pub fn dot_self(&self) -> C64 {
        self.d.iter().map(|c| c * c).sum()
    }

    pub fn hermitian_part(&self) -> [f64; 3] {
        self.d.map(|c| c.re)
    }

    pub fn anti_hermitian_part(&self) -> [f64; 3] {
        self.d.map(|c| c.im)
    }
}

pub fn bloch_decompose(m: &Complex2x2) -> BlochDecomposition {
    let [[a, b], [c, d]] = m.0;
    BlochDecomposition { d0: (a + d) * 0.5, d: [(b + c) * 0.5, (b - c) * (I * 0.5), (a - d) * 0.5] }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Waveform {
    Constant,
    Cos,
    Sin,
    SquareCos,
    SquareSin,
}

/// Below this modulus a square wave is taken to sit on its zero crossing.
const CROSSING_EPS: f64 = 1e-12;

impl Waveform {
    /// Value at phase `theta`. Square waves at a zero crossing return the
    /// right-limit value.
    pub fn value(self, theta: f64) -> f64 {
        match self {
            Waveform::Constant => 1.0,
            Waveform::Cos => theta.cos(),
            Waveform::Sin => theta.sin(),
            Waveform::SquareCos => square(theta.cos(), -theta.sin()),
            Waveform::SquareSin => square(theta.sin(), theta.cos()),
        }
    }

    pub fn is_square(self) -> bool {
        matches!(self, Waveform::SquareCos | Waveform::SquareSin)
    }

    pub fn is_smooth(self) -> bool {
        matches!(self, Waveform::Cos | Waveform::Sin)
    }

    fn squared(self) -> Self {
        match self {
            Waveform::Cos => Waveform::SquareCos,
            Waveform::Sin => Waveform::SquareSin,
            other => other,
        }
    }
}

fn square(value: f64, slope: f64) -> f64 {
    let v = if value.abs() > CROSSING_EPS { value } else { slope };
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hermiticity {
    Hermitian,
    AntiHermitian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveTerm {
    pub axis: Axis,
    pub amplitude: f64,
    pub waveform: Waveform,
    /// Drive frequency in units of the base frequency.
    pub multiplier: u32,
    pub hermiticity: Hermiticity,
}

impl DriveTerm {
    pub fn new(
        axis: Axis,
        amplitude: f64,
        waveform: Waveform,
        multiplier: u32,
        hermiticity: Hermiticity,
    ) -> Result<Self> {
        if multiplier == 0 {
            return Err(Error::InvalidParameter("drive multiplier must be >= 1".into()));
        }
        if !amplitude.is_finite() {
            return Err(Error::InvalidParameter("drive amplitude must be finite".into()));
        }
        Ok(DriveTerm { axis, amplitude, waveform, multiplier, hermiticity })
    }

    pub fn constant(axis: Axis, amplitude: f64) -> Self {
        DriveTerm { axis, amplitude, waveform: Waveform::Constant, multiplier: 1, hermiticity: Hermiticity::Hermitian }
    }

    /// Complex coefficient multiplying `σ_axis` for a waveform value `w`.
    #[inline]
    pub fn coefficient(&self, w: f64) -> C64 {
        match self.hermiticity {
            Hermiticity::Hermitian => C64::new(self.amplitude * w, 0.0),
            Hermiticity::AntiHermitian => C64::new(0.0, self.amplitude * w),
        }
    }

    /// The drive's 2×2 operator at unit waveform value.
    pub fn operator(&self) -> Complex2x2 {
        Complex2x2::pauli(self.axis) * self.coefficient(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveformFamily {
    Smooth,
    Square,
}

impl FromStr for WaveformFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(WaveformFamily::Smooth),
            "square" => Ok(WaveformFamily::Square),
            other => Err(Error::InvalidParameter(format!("unknown waveform family `{other}`"))),
        }
    }
}

impl fmt::Display for WaveformFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WaveformFamily::Smooth => "smooth",
            WaveformFamily::Square => "square",
        })
    }
}

/// A traceless time-periodic two-level Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub terms: Vec<DriveTerm>,
    pub base_omega: f64,
    pub label: String,
}

impl ModelSpec {
    pub fn new(terms: Vec<DriveTerm>, base_omega: f64, label: impl Into<String>) -> Result<Self> {
        if !(base_omega.is_finite() && base_omega > 0.0) {
            return Err(Error::InvalidParameter(format!("base omega must be > 0, got {base_omega}")));
        }
        Ok(ModelSpec { terms, base_omega, label: label.into() })
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.base_omega
    }

    pub fn max_multiplier(&self) -> u32 {
        self.terms.iter().filter(|t| t.waveform != Waveform::Constant).map(|t| t.multiplier).max().unwrap_or(1)
    }

    pub fn is_square(&self) -> bool {
        self.terms.iter().all(|t| !t.waveform.is_smooth())
    }

    pub fn is_smooth(&self) -> bool {
        self.terms.iter().all(|t| !t.waveform.is_square())
    }

    pub fn bloch_at(&self, t: f64) -> BlochDecomposition {
        let mut d = [ZERO; 3];
        for term in &self.terms {
            let w = term.waveform.value(f64::from(term.multiplier) * self.base_omega * t);
            d[term.axis as usize] += term.coefficient(w);
        }
        BlochDecomposition { d0: ZERO, d }
    }

    pub fn hamiltonian_at(&self, t: f64) -> Complex2x2 {
        self.bloch_at(t).recompose()
    }

    /// Same model with every driven amplitude multiplied by `sign`; used to
    /// probe the `γ → -γ` mirror.
    pub fn with_drive_sign(&self, sign: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            if t.waveform != Waveform::Constant {
                t.amplitude *= sign;
            }
        }
        out
    }

    /// Same model with the amplitudes of all terms along `axis` multiplied
    /// by `sign`.
    pub fn with_axis_sign(&self, axis: Axis, sign: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            if t.axis == axis {
                t.amplitude *= sign;
            }
        }
        out
    }
}

/// Largest `|A(t)·B(t)|` over `samples` equally spaced times in one period.
pub fn orthogonality_check(model: &ModelSpec, samples: usize) -> Result<f64> {
    if samples < 2 {
        return Err(Error::InvalidParameter("orthogonality check needs >= 2 samples".into()));
    }
    let period = model.period();
    Ok((0..samples)
        .map(|i| {
            let b = model.bloch_at(period * i as f64 / samples as f64);
            let (a, bb) = (b.hermitian_part(), b.anti_hermitian_part());
            (a[0] * bb[0] + a[1] * bb[1] + a[2] * bb[2]).abs()
        })
        .fold(0.0, f64::max))
}

/// The named Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// `J X + γ[cos(ωt) Y − i cos(βωt) Z]`
    #[serde(rename = "pt-cosy-cosz")]
    PtCosYCosZ,
    /// `iγ[cos(ωt) X + cos(βωt) Y] + J Z`
    #[serde(rename = "apt-cosx-cosy")]
    AptCosXCosY,
    /// `iγ[cos(ωt) X + sin(βωt) Y] + J Z`
    #[serde(rename = "apt-cosx-siny")]
    AptCosXSinY,
    /// `J X + γ[cos(ωt) Y + i sin(βωt) Z]`
    #[serde(rename = "pt-cosy-sinz")]
    PtCosYSinZ,
    /// Hermitian reference loop `J Z + γ[cos(ωt) X + sin(βωt) Y]`.
    #[serde(rename = "hermitian-cone")]
    HermitianCone,
}

impl Preset {
    pub const ALL: [Preset; 5] =
        [Preset::PtCosYCosZ, Preset::AptCosXCosY, Preset::AptCosXSinY, Preset::PtCosYSinZ, Preset::HermitianCone];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PtCosYCosZ => "pt-cosy-cosz",
            Preset::AptCosXCosY => "apt-cosx-cosy",
            Preset::AptCosXSinY => "apt-cosx-siny",
            Preset::PtCosYSinZ => "pt-cosy-sinz",
            Preset::HermitianCone => "hermitian-cone",
        }
    }

    fn terms(self, j: f64, gamma: f64, beta: u32) -> Vec<DriveTerm> {
        use Axis::*;
        use Hermiticity::*;
        use Waveform::*;
        let drive = |axis, amplitude, waveform, multiplier, hermiticity| DriveTerm {
            axis,
            amplitude,
            waveform,
            multiplier,
            hermiticity,
        };
        match self {
            Preset::PtCosYCosZ => vec![
                DriveTerm::constant(X, j),
                drive(Y, gamma, Cos, 1, Hermitian),
                drive(Z, -gamma, Cos, beta, AntiHermitian),
            ],
            Preset::AptCosXCosY => vec![
                drive(X, gamma, Cos, 1, AntiHermitian),
                drive(Y, gamma, Cos, beta, AntiHermitian),
                DriveTerm::constant(Z, j),
            ],
            Preset::AptCosXSinY => vec![
                drive(X, gamma, Cos, 1, AntiHermitian),
                drive(Y, gamma, Sin, beta, AntiHermitian),
                DriveTerm::constant(Z, j),
            ],
            Preset::PtCosYSinZ => vec![
                DriveTerm::constant(X, j),
                drive(Y, gamma, Cos, 1, Hermitian),
                drive(Z, gamma, Sin, beta, AntiHermitian),
            ],
            Preset::HermitianCone => vec![
                DriveTerm::constant(Z, j),
                drive(X, gamma, Cos, 1, Hermitian),
                drive(Y, gamma, Sin, beta, Hermitian),
            ],
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters shared by all presets. `gamma` and `omega` are the sweep axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelTemplate {
    pub preset: Preset,
    pub j: f64,
    pub beta: u32,
    pub family: WaveformFamily,
}

impl ModelTemplate {
    pub fn new(preset: Preset, j: f64, beta: u32, family: WaveformFamily) -> Result<Self> {
        if beta < 1 {
            return Err(Error::InvalidParameter("beta must be an integer >= 1".into()));
        }
        if !j.is_finite() {
            return Err(Error::InvalidParameter("J must be finite".into()));
        }
        Ok(ModelTemplate { preset, j, beta, family })
    }

    pub fn instantiate(&self, gamma: f64, omega: f64) -> Result<ModelSpec> {
        if !gamma.is_finite() {
            return Err(Error::InvalidParameter("gamma must be finite".into()));
        }
        let mut terms = self.preset.terms(self.j, gamma, self.beta);
        if self.family == WaveformFamily::Square {
            for t in &mut terms {
                t.waveform = t.waveform.squared();
            }
        }
        let label = format!("{}[{},beta={}]", self.preset, self.family, self.beta);
        ModelSpec::new(terms, omega, label)
    }
}

/// Builds a named model.
pub fn preset(name: &str, j: f64, gamma: f64, omega: f64, beta: u32, family: WaveformFamily) -> Result<ModelSpec> {
    ModelTemplate::new(name.parse()?, j, beta, family)?.instantiate(gamma, omega)
}
