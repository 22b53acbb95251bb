use std::f64::consts::PI;

use floquet_ep::berry::{
    berry_phase_loop, biorthonormalize, bloch_path, discrete_berry_phase, half_solid_angle, instantaneous_eigensystem,
    BerryOptions, BlochPart,
};
use floquet_ep::eigen::{complex_eigenvalues, DenseMatrix};
use floquet_ep::floquet::{build_floquet_matrix, quasienergy_spectrum};
use floquet_ep::model::{bloch_decompose, Complex2x2, ModelTemplate, Preset, WaveformFamily, C64};
use floquet_ep::propagator::{expm_two_level, monodromy, PropagationEngine};
use floquet_ep::verify::{conjugation_gap, gauge_drift, loop_systems, random_similarity, spectrum_distance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c64() -> impl Strategy<Value = C64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn matrix() -> impl Strategy<Value = Complex2x2> {
    [c64(), c64(), c64(), c64()].prop_map(|[a, b, c, d]| Complex2x2::new(a, b, c, d))
}

fn traceless() -> impl Strategy<Value = Complex2x2> {
    [c64(), c64(), c64()]
        .prop_map(|[x, y, z]| Complex2x2::pauli_x() * x + Complex2x2::pauli_y() * y + Complex2x2::pauli_z() * z)
}

fn any_preset() -> impl Strategy<Value = Preset> {
    prop::sample::select(Preset::ALL.to_vec())
}

fn family() -> impl Strategy<Value = WaveformFamily> {
    prop::sample::select(vec![WaveformFamily::Smooth, WaveformFamily::Square])
}

fn template() -> impl Strategy<Value = ModelTemplate> {
    (any_preset(), 1u32..=3, family()).prop_map(|(p, beta, f)| ModelTemplate::new(p, 1.0, beta, f).unwrap())
}

/// `exp(-i H τ)` by scaling and squaring a 30-term Taylor series.
fn series_expm(h: &Complex2x2, tau: f64) -> Complex2x2 {
    let a = h.scale(C64::new(0.0, -tau));
    let squarings = a.frobenius_norm().log2().ceil().max(0.0) as i32 + 1;
    let a = a * 0.5f64.powi(squarings);
    let mut term = Complex2x2::identity();
    let mut sum = Complex2x2::identity();
    for k in 1..30 {
        term = term * a * (1.0 / k as f64);
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

fn nalgebra_eigenvalues(m: &DenseMatrix) -> Vec<C64> {
    let n = m.dim();
    let na = nalgebra::DMatrix::from_fn(n, n, |r, c| m[(r, c)]);
    na.schur().eigenvalues().expect("complex Schur form is triangular").iter().copied().collect()
}

fn wrapped(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bloch_round_trip(m in matrix()) {
        let back = bloch_decompose(&m).recompose();
        prop_assert!(back.max_abs_diff(&m) <= 1e-15 * m.frobenius_norm().max(1.0));
    }

    #[test]
    fn quadratic_formula_oracle(m in matrix()) {
        let Ok(e) = instantaneous_eigensystem(&m) else { return Ok(()) };
        for l in e.eigenvalues {
            let p = l * l - m.trace() * l + m.det();
            prop_assert!(p.norm() < 1e-12 * (1.0 + m.frobenius_norm()).powi(2));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hamiltonians_are_periodic_and_traceless(t in template(), g in 0.0..3.0f64, w in 0.2..3.0f64, s in 0.0..1.0f64) {
        let m = t.instantiate(g, w).unwrap();
        let at = s * m.period();
        prop_assert!(m.hamiltonian_at(at).trace().norm() < 1e-14);
        // Square waves jump at zero crossings; stay clear of them.
        let boundary = (at * w * 4.0 * m.max_multiplier() as f64 / (2.0 * PI)).fract();
        prop_assume!(boundary > 1e-6 && boundary < 1.0 - 1e-6);
        let shifted = m.hamiltonian_at(at + m.period());
        prop_assert!(shifted.max_abs_diff(&m.hamiltonian_at(at)) < 1e-10 * (1.0 + g));
    }

    #[test]
    fn expm_matches_series(h in traceless(), tau in 0.0..3.0f64) {
        let a = expm_two_level(&h, tau);
        let b = series_expm(&h, tau);
        prop_assert!(a.max_abs_diff(&b) <= 1e-12 * b.frobenius_norm().max(1.0));
    }

    #[test]
    fn expm_semigroup(h in traceless(), a in 0.0..1.5f64, b in 0.0..1.5f64) {
        let lhs = expm_two_level(&h, a) * expm_two_level(&h, b);
        let rhs = expm_two_level(&h, a + b);
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * rhs.frobenius_norm().max(1.0));
    }

    #[test]
    fn monodromy_is_unimodular(t in template(), g in 0.0..2.0f64, w in 0.3..3.0f64) {
        prop_assume!(t.family == WaveformFamily::Square);
        let r = monodromy(&t.instantiate(g, w).unwrap(), PropagationEngine::Piecewise).unwrap();
        // ad − bc of a computed G carries ~eps·‖G‖² rounding.
        let tol = 1e-9 * r.g.frobenius_norm().powi(2).max(1.0);
        prop_assert!((r.g.det() - C64::new(1.0, 0.0)).norm() < tol);
        let [l1, l2] = r.eigenvalues();
        prop_assert!((l1 * l2 - C64::new(1.0, 0.0)).norm() < tol);
    }

    #[test]
    fn monodromy_spectrum_is_real_or_paired(
        p in prop::sample::select(vec![Preset::PtCosYCosZ, Preset::AptCosXCosY, Preset::AptCosXSinY, Preset::HermitianCone]),
        beta in 1u32..=3, g in 0.0..2.0f64, w in 0.3..3.0f64,
    ) {
        let t = ModelTemplate::new(p, 1.0, beta, WaveformFamily::Square).unwrap();
        let r = monodromy(&t.instantiate(g, w).unwrap(), PropagationEngine::Piecewise).unwrap();
        let scale = r.g.frobenius_norm().max(1.0);
        prop_assert!(conjugation_gap(&r.eigenvalues()) < 1e-8 * scale);
    }

    #[test]
    fn gamma_mirror(t in template(), g in 0.0..2.0f64, w in 0.3..3.0f64) {
        prop_assume!(t.family == WaveformFamily::Square);
        let m = t.instantiate(g, w).unwrap();
        let a = monodromy(&m, PropagationEngine::Piecewise).unwrap().max_im_eps;
        let b = monodromy(&m.with_drive_sign(-1.0), PropagationEngine::Piecewise).unwrap().max_im_eps;
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a));
    }

    #[test]
    fn biorthonormal_residuals(h in traceless()) {
        let Ok(e) = instantaneous_eigensystem(&h).and_then(|e| biorthonormalize(&e)) else { return Ok(()) };
        for a in 0..2 {
            let hr = h.mul_vec(e.right[a]);
            let lh = h.transpose().mul_vec(e.left[a]);
            let lnorm = e.left[a][0].norm().max(e.left[a][1].norm());
            for i in 0..2 {
                prop_assert!((hr[i] - e.eigenvalues[a] * e.right[a][i]).norm() < 1e-10 * (1.0 + h.frobenius_norm()));
                prop_assert!((lh[i] - e.eigenvalues[a] * e.left[a][i]).norm() < 1e-10 * lnorm * (1.0 + h.frobenius_norm()));
            }
            let cross = e.left[a][0] * e.right[1 - a][0] + e.left[a][1] * e.right[1 - a][1];
            prop_assert!(cross.norm() < 1e-10 * lnorm.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigensolver_matches_nalgebra(seed in any::<u64>(), n in 2usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let m = DenseMatrix::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let ours = complex_eigenvalues(&m).unwrap();
        prop_assert_eq!(ours.len(), n);
        prop_assert!(spectrum_distance(&ours, &nalgebra_eigenvalues(&m)) < 1e-9);
    }

    #[test]
    fn eigensolver_similarity_invariance(seed in any::<u64>(), n in 2usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let m = DenseMatrix::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let s = random_similarity(&m, &mut rng);
        prop_assert!(spectrum_distance(&complex_eigenvalues(&m).unwrap(), &complex_eigenvalues(&s).unwrap()) < 1e-8);
    }

    #[test]
    fn floquet_spectrum_conjugation_closure(
        p in prop::sample::select(vec![Preset::PtCosYCosZ, Preset::AptCosXCosY, Preset::AptCosXSinY, Preset::HermitianCone]),
        beta in 1u32..=3, g in 0.0..2.0f64, w in 0.5..3.0f64,
    ) {
        let m = ModelTemplate::new(p, 1.0, beta, WaveformFamily::Smooth).unwrap().instantiate(g, w).unwrap();
        let eigs = complex_eigenvalues(&build_floquet_matrix(&m, 8).unwrap().matrix).unwrap();
        prop_assert!(conjugation_gap(&eigs) < 1e-8);
    }

    #[test]
    fn floquet_ladder_is_evenly_spaced(g in 0.0..1.0f64, w in 1.0..3.0f64) {
        let m = ModelTemplate::new(Preset::PtCosYCosZ, 1.0, 2, WaveformFamily::Smooth).unwrap().instantiate(g, w).unwrap();
        let s = quasienergy_spectrum(&m, 20).unwrap();
        prop_assert!(s.ladder_residual < 1e-6);
    }

    #[test]
    fn wilson_loop_gauge_invariance(seed in any::<u64>(), g in 0.0..2.0f64, beta in 1u32..=3,
        p in prop::sample::select(vec![Preset::AptCosXSinY, Preset::HermitianCone, Preset::PtCosYSinZ])) {
        let m = ModelTemplate::new(p, 1.0, beta, WaveformFamily::Smooth).unwrap().instantiate(g, 1.0).unwrap();
        let Ok(systems) = loop_systems(&m, 300) else { return Ok(()) };
        let base = discrete_berry_phase(&systems);
        prop_assume!(base.closed && base.crossings.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(gauge_drift(&systems, &mut rng) < 1e-10);
    }

    #[test]
    fn hermitian_loops_reduce_to_solid_angle(j in -1.5..1.5f64, g in 0.2..1.5f64, beta in 1u32..=2) {
        let m = ModelTemplate::new(Preset::HermitianCone, j, beta, WaveformFamily::Smooth).unwrap().instantiate(g, 1.0).unwrap();
        let opts = BerryOptions { steps: 1024, ..Default::default() };
        let r = berry_phase_loop(&m, &opts).unwrap();
        let half = half_solid_angle(&bloch_path(&m, 4096, BlochPart::Real)).unwrap();
        prop_assert!(r.theta.iter().all(|t| t.im.abs() < 1e-8));
        // The band along d collects −Ω/2, the other one +Ω/2.
        prop_assert!(wrapped(r.theta[0].re + half).abs() < 1e-5);
        prop_assert!(wrapped(r.theta[1].re - half).abs() < 1e-5);
    }

    #[test]
    fn band_sum_rule(g in 0.0..0.9f64, beta in 1u32..=3,
        p in prop::sample::select(vec![Preset::AptCosXSinY, Preset::PtCosYSinZ, Preset::HermitianCone])) {
        let m = ModelTemplate::new(p, 1.0, beta, WaveformFamily::Smooth).unwrap().instantiate(g, 1.0).unwrap();
        let r = berry_phase_loop(&m, &BerryOptions { steps: 1024, ..Default::default() }).unwrap();
        prop_assume!(r.certified && r.degeneracy_flags.is_empty());
        let sum = r.theta[0] + r.theta[1];
        prop_assert!(wrapped(sum.re).abs() < 1e-6 && sum.im.abs() < 1e-6);
    }
}

#[test]
fn unimodular_to_1e9_at_moderate_norm() {
    for beta in 1..=3 {
        for (g, w) in [(0.3, 0.5), (1.0, 1.7), (1.9, 2.9), (0.7, 0.31)] {
            let t = ModelTemplate::new(Preset::PtCosYCosZ, 1.0, beta, WaveformFamily::Square).unwrap();
            let r = monodromy(&t.instantiate(g, w).unwrap(), PropagationEngine::Piecewise).unwrap();
            assert!((r.g.det() - C64::new(1.0, 0.0)).norm() < 1e-9);
        }
    }
}

#[test]
fn step_doubling_converges_below_threshold() {
    for g in [0.2, 0.5, 0.8] {
        let m = ModelTemplate::new(Preset::PtCosYSinZ, 1.0, 3, WaveformFamily::Smooth)
            .unwrap()
            .instantiate(g, 1.0)
            .unwrap();
        let r = berry_phase_loop(&m, &BerryOptions::default()).unwrap();
        assert!(r.step_doubling_delta.unwrap() < 1e-4, "gamma={g}: {:?}", r.step_doubling_delta);
    }
}

#[test]
fn step_doubling_is_second_order() {
    let m =
        ModelTemplate::new(Preset::AptCosXSinY, 1.0, 3, WaveformFamily::Smooth).unwrap().instantiate(0.4, 1.0).unwrap();
    let delta = |n: usize| {
        let r = berry_phase_loop(&m, &BerryOptions { steps: n, ..Default::default() }).unwrap();
        r.step_doubling_delta.unwrap()
    };
    let ratio = delta(512) / delta(1024);
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}
