//! Frequency-domain Floquet Hamiltonian `H(t) − i∂_t`, truncated to the
//! harmonics `n = −N..=N`, and extraction of folded quasienergies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::eigen::{complex_eigenvalues, DenseMatrix};
use crate::error::{Error, Result};
use crate::model::{Complex2x2, ModelSpec, Waveform, C64, I};

pub const DEFAULT_CUTOFF: usize = 20;
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// Relative (to ω) distance under which two folded eigenvalues share a band.
const CLUSTER_TOL: f64 = 1e-4;

/// `H⁽ᵏ⁾ = (1/T)∫ H(t) e^{−ikωt} dt` for every nonzero harmonic `k`.
pub fn fourier_components(model: &ModelSpec) -> Result<BTreeMap<i32, Complex2x2>> {
    let mut out: BTreeMap<i32, Complex2x2> = BTreeMap::new();
    let mut add = |k: i32, m: Complex2x2| {
        *out.entry(k).or_insert_with(Complex2x2::zero) += m;
    };
    for (index, term) in model.terms.iter().enumerate() {
        let op = term.operator();
        let k = term.multiplier as i32;
        match term.waveform {
            Waveform::Constant => add(0, op),
            Waveform::Cos => {
                add(k, op * 0.5);
                add(-k, op * 0.5);
            }
            Waveform::Sin => {
                let half_over_i = -I * 0.5;
                add(k, op.scale(half_over_i));
                add(-k, op.scale(-half_over_i));
            }
            Waveform::SquareCos | Waveform::SquareSin => return Err(Error::SquareWaveform { term: index }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FloquetMatrix {
    pub cutoff: usize,
    pub base_omega: f64,
    pub matrix: DenseMatrix,
}

impl FloquetMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Harmonic index of block row `block` (0-based).
    pub fn harmonic(&self, block: usize) -> i64 {
        block as i64 - self.cutoff as i64
    }
}

/// Block `(m, n)` is `H⁽ᵐ⁻ⁿ⁾ + mω·δ_{mn}`.
pub fn build_floquet_matrix(model: &ModelSpec, cutoff: usize) -> Result<FloquetMatrix> {
    let multiplier = model.max_multiplier();
    if cutoff < multiplier as usize {
        return Err(Error::CutoffTooSmall { cutoff, multiplier });
    }
    let components = fourier_components(model)?;
    let blocks = 2 * cutoff + 1;
    let omega = model.base_omega;
    let mut matrix = DenseMatrix::zeros(2 * blocks);
    for m in 0..blocks {
        for (&k, h) in &components {
            let n = m as i64 - i64::from(k);
            if n < 0 || n >= blocks as i64 {
                continue;
            }
            let n = n as usize;
            for r in 0..2 {
                for c in 0..2 {
                    matrix[(2 * m + r, 2 * n + c)] += h.get(r, c);
                }
            }
        }
        let shift = (m as f64 - cutoff as f64) * omega;
        matrix[(2 * m, 2 * m)] += shift;
        matrix[(2 * m + 1, 2 * m + 1)] += shift;
    }
    Ok(FloquetMatrix { cutoff, base_omega: omega, matrix })
}

/// Folded quasienergies and their quality diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasienergySpectrum {
    /// One representative per band, `Re ∈ (−ω/2, ω/2]`. A single entry
    /// means the two bands coincide.
    pub folded: Vec<C64>,
    /// Largest distance of a surviving eigenvalue from its band ladder.
    pub ladder_residual: f64,
    pub max_im: f64,
    /// Eigenvalues kept after the central-harmonic filter.
    pub survivors: usize,
}

/// Ladder index `n` with `Re(λ − nω) ∈ (−ω/2, ω/2]`.
fn ladder_index(lambda: C64, omega: f64) -> i64 {
    (lambda.re / omega - 0.5).ceil() as i64
}

/// Distance between two quasienergies with `Re` taken modulo `ω`.
pub fn zone_distance(a: C64, b: C64, omega: f64) -> f64 {
    let mut dr = (a.re - b.re).rem_euclid(omega);
    if dr > omega / 2.0 {
        dr = omega - dr;
    }
    dr.hypot(a.im - b.im)
}

/// Folds raw eigenvalues into the first zone and groups them into bands.
///
/// Eigenvalues whose ladder shift exceeds `N/3` are dropped (truncation
/// corrupts the outer harmonics). Bands are the two most populated
/// clusters; each is represented by its least-shifted member.
pub fn fold_spectrum(eigs: &[C64], omega: f64, cutoff: usize) -> Result<QuasienergySpectrum> {
    let limit = cutoff as f64 / 3.0;
    let mut kept: Vec<(i64, C64)> = eigs
        .iter()
        .map(|&l| {
            let n = ladder_index(l, omega);
            (n, l - omega * n as f64)
        })
        .filter(|(n, _)| (*n as f64).abs() <= limit)
        .collect();
    if kept.is_empty() {
        return Err(Error::TooFewClusters { found: 0 });
    }
    kept.sort_by_key(|a| (a.0.abs(), a.0));

    let tol = CLUSTER_TOL * omega;
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &(_, z)) in kept.iter().enumerate() {
        match clusters.iter_mut().find(|cl| cl.iter().any(|&j| zone_distance(kept[j].1, z, omega) < tol)) {
            Some(cl) => cl.push(i),
            None => clusters.push(vec![i]),
        }
    }
    let rep = |cl: &Vec<usize>| kept[cl[0]].1;
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(rep(b).im.abs().total_cmp(&rep(a).im.abs())));
    let folded: Vec<C64> = clusters.iter().take(2).map(rep).collect();
    let ladder_residual = kept
        .iter()
        .map(|&(_, z)| folded.iter().map(|&f| zone_distance(f, z, omega)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let max_im = folded.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(QuasienergySpectrum { folded, ladder_residual, max_im, survivors: kept.len() })
}

pub fn quasienergy_spectrum(model: &ModelSpec, cutoff: usize) -> Result<QuasienergySpectrum> {
    let fm = build_floquet_matrix(model, cutoff)?;
    let eigs = complex_eigenvalues(&fm.matrix)?;
    fold_spectrum(&eigs, model.base_omega, cutoff)
}

pub fn max_im_quasienergy(model: &ModelSpec, cutoff: usize) -> Result<f64> {
    Ok(quasienergy_spectrum(model, cutoff)?.max_im)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub converged: bool,
    pub delta: f64,
}

/// Compares `max Im ε` at cutoff `N` and `2N`.
pub fn convergence_check(model: &ModelSpec, cutoff: usize) -> Result<Convergence> {
    let a = max_im_quasienergy(model, cutoff)?;
    let b = max_im_quasienergy(model, 2 * cutoff)?;
    let delta = (a - b).abs();
    Ok(Convergence { converged: delta < CONVERGENCE_TOL, delta })
}

/// Folds `ε` into `(−ω/2, ω/2]`.
pub fn fold(eps: C64, omega: f64) -> C64 {
    eps - omega * ladder_index(eps, omega) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, Axis, DriveTerm, Hermiticity, WaveformFamily};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn single(term: DriveTerm) -> ModelSpec {
        ModelSpec::new(vec![term], 1.0, "single").unwrap()
    }

    #[test]
    fn fourier_of_single_drives() {
        let g = 0.6;
        let f =
            fourier_components(&single(DriveTerm::new(Axis::Y, g, Waveform::Cos, 1, Hermiticity::Hermitian).unwrap()))
                .unwrap();
        let expected = Complex2x2::pauli_y() * (g / 2.0);
        assert_eq!(f.len(), 2);
        assert!(f[&1].max_abs_diff(&expected) < 1e-16);
        assert!(f[&-1].max_abs_diff(&expected) < 1e-16);

        let f = fourier_components(&single(
            DriveTerm::new(Axis::Z, -g, Waveform::Cos, 3, Hermiticity::AntiHermitian).unwrap(),
        ))
        .unwrap();
        let expected = Complex2x2::pauli_z().scale(c(0.0, -g / 2.0));
        assert!(f[&3].max_abs_diff(&expected) < 1e-16);
        assert!(f[&-3].max_abs_diff(&expected) < 1e-16);

        let f = fourier_components(&single(
            DriveTerm::new(Axis::Y, g, Waveform::Sin, 3, Hermiticity::AntiHermitian).unwrap(),
        ))
        .unwrap();
        assert!(f[&3].max_abs_diff(&(Complex2x2::pauli_y() * (g / 2.0))) < 1e-16);
        assert!(f[&-3].max_abs_diff(&(Complex2x2::pauli_y() * (-g / 2.0))) < 1e-16);
    }

    #[test]
    fn fourier_rejects_square_models() {
        let m = preset("pt-cosy-cosz", 1.0, 0.5, 1.0, 3, WaveformFamily::Square).unwrap();
        assert!(matches!(fourier_components(&m), Err(Error::SquareWaveform { term: 1 })));
    }

    #[test]
    fn matrix_size_and_structure() {
        let m = preset("pt-cosy-cosz", 1.0, 0.5, 0.8, 3, WaveformFamily::Smooth).unwrap();
        let fm = build_floquet_matrix(&m, 20).unwrap();
        assert_eq!(fm.dim(), 82);
        let blocks: usize = 41;
        let static_part = fourier_components(&m).unwrap()[&0];
        let block = |a: usize, b: usize| {
            Complex2x2::new(
                fm.matrix[(2 * a, 2 * b)],
                fm.matrix[(2 * a, 2 * b + 1)],
                fm.matrix[(2 * a + 1, 2 * b)],
                fm.matrix[(2 * a + 1, 2 * b + 1)],
            )
        };
        for a in 0..blocks {
            for b in 0..blocks {
                let off = a.abs_diff(b);
                let mut blk = block(a, b);
                if a == b {
                    let ladder = Complex2x2::identity() * (fm.harmonic(a) as f64 * 0.8);
                    blk = blk - ladder;
                    assert!(blk.max_abs_diff(&static_part) < 1e-15);
                }
                if ![0, 1, 3].contains(&off) {
                    assert_eq!(blk, Complex2x2::zero());
                }
                // Toeplitz: depends on a - b only.
                if a > 0 && b > 0 && a != b {
                    assert_eq!(blk, block(a - 1, b - 1));
                }
            }
        }
        assert!(matches!(build_floquet_matrix(&m, 2), Err(Error::CutoffTooSmall { .. })));
    }

    #[test]
    fn hermitian_limit_is_block_diagonal() {
        let m = preset("pt-cosy-cosz", 1.0, 0.0, 0.8, 3, WaveformFamily::Smooth).unwrap();
        let spec = quasienergy_spectrum(&m, 20).unwrap();
        let mut f: Vec<f64> = spec.folded.iter().map(|z| z.re).collect();
        f.sort_by(f64::total_cmp);
        assert!((f[0] + 0.2).abs() < 1e-12 && (f[1] - 0.2).abs() < 1e-12, "{f:?}");
        assert_eq!(spec.max_im, 0.0);
        assert!(spec.ladder_residual < 1e-12);
        let conv = convergence_check(&m, 10).unwrap();
        assert_eq!(conv.delta, 0.0);
    }

    #[test]
    fn folding_collapses_a_ladder() {
        let s = fold_spectrum(&[c(0.3, 0.0), c(1.3, 0.0), c(-0.7, 0.0)], 1.0, 3).unwrap();
        assert_eq!(s.folded.len(), 1);
        assert!((s.folded[0] - c(0.3, 0.0)).norm() < 1e-15);
        assert_eq!(s.survivors, 3);
    }

    #[test]
    fn folding_wraps_zone_edges() {
        assert_eq!(fold(c(0.5, 0.1), 1.0), c(0.5, 0.1));
        assert!((fold(c(-0.5, 0.1), 1.0) - c(0.5, 0.1)).norm() < 1e-15);
        assert!((fold(c(2.26, 0.0), 1.0) - c(0.26, 0.0)).norm() < 1e-14);
        assert!(zone_distance(c(0.49999, 0.0), c(-0.49999, 0.0), 1.0) < 1e-4);
    }

    #[test]
    fn folding_drops_outer_harmonics() {
        // shift 7 > 20/3
        assert!(matches!(fold_spectrum(&[c(7.1, 0.0)], 1.0, 20), Err(Error::TooFewClusters { found: 0 })));
    }

    #[test]
    fn gain_loss_opens_resonance() {
        let m = preset("pt-cosy-cosz", 1.0, 0.05, 2.0 / 3.0, 3, WaveformFamily::Smooth).unwrap();
        assert!(max_im_quasienergy(&m, 20).unwrap() > 1e-8);
        let m = preset("pt-cosy-cosz", 1.0, 0.0, 2.0 / 3.0, 3, WaveformFamily::Smooth).unwrap();
        assert_eq!(max_im_quasienergy(&m, 20).unwrap(), 0.0);
    }
}
