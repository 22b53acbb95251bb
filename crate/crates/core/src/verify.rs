//! Built-in verification suite: physics spot checks, engine oracles and
//! property samples, each reported as pass/fail.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::berry::{
    berry_phase_loop, biorthonormalize, bloch_path, discrete_berry_phase, half_solid_angle, instantaneous_eigensystem,
    spectrum_region_scan, BerryOptions, BlochPart, EigensystemInstant,
};
use crate::eigen::{complex_eigenvalues, DenseMatrix};
use crate::error::Result;
use crate::floquet::{build_floquet_matrix, convergence_check, quasienergy_spectrum, zone_distance};
use crate::model::{preset, Axis, ModelTemplate, Preset, WaveformFamily, C64};
use crate::propagator::{monodromy, DegeneracyKind, EpOptions, PropagationEngine};
use crate::sweep::{
    instability_window, phase_diagram, phase_diagram_with_threads, trace_ep_contours, Engine, EngineSettings, GridSpec,
    INSTABILITY_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fast,
    Full,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Flip the sign of the Z drive in the model handed to the integrate
    /// oracle only. The engine cross-check must then fail.
    pub mutate_z_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} [{}] {}: {} ({:.2} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub const TITLES: [&str; 12] = [
    "defective-drive stability",
    "primary resonance",
    "dual resonances",
    "large-gamma instability",
    "static-threshold clustering",
    "floquet vs monodromy engines",
    "propagator oracle",
    "berry plateaus",
    "hermitian reduction",
    "instantaneous-spectrum thresholds",
    "property suites",
    "parallel performance",
];

const FAST: [u8; 5] = [1, 7, 9, 10, 11];

/// Criteria run at `level`.
pub fn criteria(level: Level) -> Vec<u8> {
    match level {
        Level::Fast => FAST.to_vec(),
        Level::Full => (1..=12).collect(),
    }
}

/// Runs one criterion by number (1–12).
pub fn run_criterion(id: u8, opts: &VerifyOptions) -> CriterionReport {
    let start = Instant::now();
    let outcome = match id {
        1 => defective_drive_stability(),
        2 => primary_resonance(),
        3 => dual_resonances(),
        4 => large_gamma_instability(),
        5 => static_threshold_clustering(),
        6 => engine_cross_validation(),
        7 => propagator_oracle(opts),
        8 => berry_plateaus(),
        9 => hermitian_reduction(),
        10 => spectrum_thresholds(),
        11 => property_suites(),
        12 => parallel_performance(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionReport {
        id,
        title: TITLES.get(id as usize - 1).copied().unwrap_or("unknown"),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run(level: Level, opts: &VerifyOptions) -> Vec<CriterionReport> {
    criteria(level).into_iter().map(|id| run_criterion(id, opts)).collect()
}

type Outcome = Result<(bool, String)>;

fn template(p: Preset, beta: u32, family: WaveformFamily) -> ModelTemplate {
    ModelTemplate::new(p, 1.0, beta, family).expect("valid template")
}

fn grid(g: (f64, f64, usize), w: (f64, f64, usize), engine: Engine) -> GridSpec {
    GridSpec {
        gamma_min: g.0,
        gamma_max: g.1,
        gamma_count: g.2,
        omega_min: w.0,
        omega_max: w.1,
        omega_count: w.2,
        engine,
    }
}

fn defective_drive_stability() -> Outcome {
    let start = Instant::now();
    let t = template(Preset::PtCosYCosZ, 1, WaveformFamily::Square);
    let d = phase_diagram(
        &t,
        &grid((0.0, 5.0, 50), (0.2, 3.0, 50), Engine::MonodromyPiecewise),
        &EngineSettings::default(),
    )?;
    let secs = start.elapsed().as_secs_f64();
    let max = d.values.iter().copied().fold(0.0, f64::max);
    let nan = d.values.iter().any(|v| v.is_nan());
    Ok((!nan && max < 1e-8 && secs < 5.0, format!("max Im eps = {max:.3e} over 2500 nodes")))
}

fn show_window(w: Option<(f64, f64)>) -> String {
    w.map_or_else(|| "none".to_string(), |(lo, hi)| format!("[{lo:.3}, {hi:.3}]"))
}

/// Window of row `gamma_index` containing `omega`, if any.
fn window_containing(d: &crate::sweep::PhaseDiagram, gamma_index: usize, omega: f64) -> Option<(f64, f64)> {
    instability_window(d, gamma_index).into_iter().find(|&(lo, hi)| lo <= omega && omega <= hi)
}

fn primary_resonance() -> Outcome {
    let s = EngineSettings::default();
    let w = (0.2, 3.0, 281);
    let square = phase_diagram(
        &template(Preset::PtCosYCosZ, 3, WaveformFamily::Square),
        &grid((0.0, 0.05, 2), w, Engine::MonodromyPiecewise),
        &s,
    )?;
    let smooth = phase_diagram(
        &template(Preset::PtCosYCosZ, 3, WaveformFamily::Smooth),
        &grid((0.0, 0.05, 2), w, Engine::Floquet),
        &s,
    )?;
    let target = 2.0 / 3.0;
    let a = window_containing(&square, 1, target);
    let b = window_containing(&smooth, 1, target);
    let ok = |x: Option<(f64, f64)>| x.is_some_and(|(lo, hi)| hi - lo < 0.2);
    Ok((ok(a) && ok(b), format!("square window {}, smooth window {}", show_window(a), show_window(b))))
}

fn dual_resonances() -> Outcome {
    let s = EngineSettings::default();
    let w = (0.2, 3.0, 281);
    let mut ok = true;
    let mut detail = Vec::new();
    for (family, engine) in
        [(WaveformFamily::Square, Engine::MonodromyPiecewise), (WaveformFamily::Smooth, Engine::Floquet)]
    {
        let d = phase_diagram(&template(Preset::AptCosXCosY, 3, family), &grid((0.0, 0.05, 2), w, engine), &s)?;
        let lo = window_containing(&d, 1, 2.0 / 3.0);
        let hi = window_containing(&d, 1, 2.0);
        ok &= lo.is_some() && hi.is_some();
        detail.push(format!("{family}: {} and {}", show_window(lo), show_window(hi)));
    }
    Ok((ok, detail.join("; ")))
}

fn large_gamma_instability() -> Outcome {
    let s = EngineSettings::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for (family, engine) in
        [(WaveformFamily::Square, Engine::MonodromyPiecewise), (WaveformFamily::Smooth, Engine::Floquet)]
    {
        let d = phase_diagram(
            &template(Preset::AptCosXCosY, 3, family),
            &grid((4.0, 5.0, 2), (0.25, 3.0, 12), engine),
            &s,
        )?;
        let min = (0..12).map(|j| d.get(j, 1)).fold(f64::INFINITY, f64::min);
        ok &= min > INSTABILITY_THRESHOLD;
        detail.push(format!("{family}: min over omega of max Im eps = {min:.3e}"));
    }
    Ok((ok, detail.join("; ")))
}

fn static_threshold_clustering() -> Outcome {
    let t = template(Preset::AptCosXSinY, 3, WaveformFamily::Square);
    let g = grid((0.0, 2.0, 201), (0.05, 0.06, 2), Engine::MonodromyPiecewise);
    let set = trace_ep_contours(&t, &g, &EngineSettings::default(), &EpOptions::default())?;
    let lowest = set
        .points()
        .filter(|p| p.omega == 0.05 && p.kind == DegeneracyKind::Ep)
        .map(|p| p.gamma)
        .fold(f64::INFINITY, f64::min);
    Ok(((lowest - 1.0).abs() <= 0.05, format!("lowest EP root at omega = 0.05: gamma = {lowest:.6}")))
}

fn engine_cross_validation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = template(Preset::PtCosYCosZ, 3, WaveformFamily::Smooth);
    let (mut worst, mut worst_delta) = (0.0f64, 0.0f64);
    let mut converged = true;
    for _ in 0..25 {
        let (gamma, omega) = (rng.gen_range(0.0..2.0), rng.gen_range(0.3..3.0));
        let m = t.instantiate(gamma, omega)?;
        let spec = quasienergy_spectrum(&m, 20)?;
        let eps = monodromy(&m, PropagationEngine::integrate())?.eps_f;
        for band in &spec.folded {
            let d = zone_distance(*band, eps, omega).min(zone_distance(*band, -eps, omega));
            worst = worst.max(d);
        }
        let c = convergence_check(&m, 20)?;
        converged &= c.converged;
        worst_delta = worst_delta.max(c.delta);
    }
    Ok((
        worst < 1e-6 && converged,
        format!("max |eps_floquet - eps_monodromy| = {worst:.3e}, max N=20/40 delta = {worst_delta:.3e}"),
    ))
}

fn propagator_oracle(opts: &VerifyOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut det_err) = (0.0f64, 0.0f64);
    for beta in 1..=3 {
        let t = template(Preset::PtCosYCosZ, beta, WaveformFamily::Square);
        for _ in 0..20 {
            let (gamma, omega) = (rng.gen_range(0.0..2.0), rng.gen_range(0.3..3.0));
            let m = t.instantiate(gamma, omega)?;
            let oracle_model = if opts.mutate_z_sign { m.with_axis_sign(Axis::Z, -1.0) } else { m.clone() };
            let a = monodromy(&m, PropagationEngine::Piecewise)?.g;
            let b = monodromy(&oracle_model, PropagationEngine::integrate())?.g;
            worst = worst.max(a.max_abs_diff(&b));
            for g in [a, b] {
                det_err = det_err.max((g.det() - C64::new(1.0, 0.0)).norm());
            }
        }
    }
    Ok((
        worst < 1e-7 && det_err <= 1e-9,
        format!("max entrywise |dG| = {worst:.3e}, max |det G - 1| = {det_err:.3e} over 60 points"),
    ))
}

fn berry_plateaus() -> Outcome {
    let opts = BerryOptions::default();
    let pi = std::f64::consts::PI;
    let broken = berry_phase_loop(&preset("apt-cosx-siny", 1.0, 1.5, 1.0, 1, WaveformFamily::Smooth)?, &opts)?;
    let exact = berry_phase_loop(&preset("apt-cosx-siny", 1.0, 0.5, 1.0, 1, WaveformFamily::Smooth)?, &opts)?;
    let plateau = broken.theta.iter().all(|t| (t.re.abs() - pi).abs() < 1e-3);
    let opposite = broken.theta[0].re * broken.theta[1].re < 0.0;
    let real = exact.theta.iter().all(|t| t.im.abs() < 1e-6);
    Ok((
        plateau && opposite && real,
        format!(
            "gamma=1.5: Re theta = {:.6}, {:.6}; gamma=0.5: max |Im theta| = {:.3e}",
            broken.theta[0].re,
            broken.theta[1].re,
            exact.theta.iter().map(|t| t.im.abs()).fold(0.0, f64::max)
        ),
    ))
}

fn hermitian_reduction() -> Outcome {
    let pi = std::f64::consts::PI;
    let m = preset("hermitian-cone", 0.0, 1.0, 1.0, 1, WaveformFamily::Smooth)?;
    let opts = BerryOptions::default();
    let r = berry_phase_loop(&m, &opts)?;
    let omega = half_solid_angle(&bloch_path(&m, opts.steps, BlochPart::Real))?;
    let phase_err = r.theta.iter().map(|t| (t.re.abs() - pi).abs()).fold(0.0, f64::max);
    let im = r.theta.iter().map(|t| t.im.abs()).fold(0.0, f64::max);
    Ok((
        phase_err < 1e-4 && im < 1e-8 && (omega - pi).abs() < 1e-10,
        format!(
            "||Re theta| - pi| = {phase_err:.3e}, |Im theta| = {im:.3e}, half solid angle - pi = {:.3e}",
            omega - pi
        ),
    ))
}

fn spectrum_thresholds() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for p in [Preset::PtCosYSinZ, Preset::AptCosXSinY] {
        let scan = spectrum_region_scan(&template(p, 1, WaveformFamily::Smooth), 0.0, 2.0, 41, 256)?;
        ok &= !scan.thresholds.is_empty() && scan.thresholds.iter().all(|g| (g - 1.0).abs() <= 1e-6);
        detail.push(format!("{p}: {:?}", scan.thresholds));
    }
    Ok((ok, detail.join("; ")))
}

fn random_c64(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Largest change of the loop phase when every sample is regauged by a
/// random complex factor.
pub fn gauge_drift(systems: &[EigensystemInstant], rng: &mut ChaCha8Rng) -> f64 {
    let base = discrete_berry_phase(systems).theta;
    let regauged: Vec<EigensystemInstant> = systems
        .iter()
        .map(|e| {
            let mut e = *e;
            for band in 0..2 {
                let c = C64::from_polar(
                    rng.gen_range(0.2..5.0),
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                );
                e.right[band] = e.right[band].map(|x| x * c);
                e.left[band] = e.left[band].map(|x| x / c);
            }
            e
        })
        .collect();
    let moved = discrete_berry_phase(&regauged).theta;
    (0..2).map(|b| (moved[b] - base[b]).norm()).fold(0.0, f64::max)
}

/// Biorthonormal eigensystems of `model` at `n` loop samples.
pub fn loop_systems(model: &crate::model::ModelSpec, n: usize) -> Result<Vec<EigensystemInstant>> {
    (0..n)
        .map(|k| {
            let h = model.hamiltonian_at(model.period() * k as f64 / n as f64);
            biorthonormalize(&instantaneous_eigensystem(&h)?)
        })
        .collect()
}

/// Largest distance from a conjugated eigenvalue to the spectrum.
pub fn conjugation_gap(eigs: &[C64]) -> f64 {
    eigs.iter().map(|l| eigs.iter().map(|m| (l.conj() - m).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
}

/// Largest distance between the two spectra after greedy matching.
pub fn spectrum_distance(a: &[C64], b: &[C64]) -> f64 {
    let mut pool = b.to_vec();
    let mut worst = 0.0f64;
    for x in a {
        let (k, d) = pool
            .iter()
            .enumerate()
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap_or((0, f64::INFINITY));
        worst = worst.max(d);
        if !pool.is_empty() {
            pool.swap_remove(k);
        }
    }
    worst
}

/// `D·U·A·U*·D⁻¹` with a random unitary `U` (product of Householder
/// reflections) and a random positive diagonal `D`.
pub fn random_similarity(a: &DenseMatrix, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let n = a.dim();
    let mut u = DenseMatrix::from_fn(n, |r, c| if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    for _ in 0..3 {
        let v: Vec<C64> = (0..n).map(|_| random_c64(rng)).collect();
        let norm2: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        let h = DenseMatrix::from_fn(n, |r, c| {
            let id = if r == c { 1.0 } else { 0.0 };
            C64::new(id, 0.0) - v[r] * v[c].conj() * (2.0 / norm2)
        });
        u = h.matmul(&u);
    }
    let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let du = DenseMatrix::from_fn(n, |r, c| u[(r, c)] * d[r]);
    let uinv_dinv = DenseMatrix::from_fn(n, |r, c| u[(c, r)].conj() / d[c]);
    du.matmul(a).matmul(&uinv_dinv)
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let mut gauge = 0.0f64;
    for (name, gamma, beta) in [("pt-cosy-sinz", 0.5, 3), ("apt-cosx-siny", 1.5, 1), ("hermitian-cone", 0.7, 2)] {
        let m = preset(name, 1.0, gamma, 1.0, beta, WaveformFamily::Smooth)?;
        gauge = gauge.max(gauge_drift(&loop_systems(&m, 512)?, &mut rng));
    }

    let mut closure = 0.0f64;
    // The sine-driven PT preset has no antilinear symmetry over a full
    // period and is excluded.
    for p in [Preset::PtCosYCosZ, Preset::AptCosXCosY, Preset::AptCosXSinY, Preset::HermitianCone] {
        for _ in 0..2 {
            let m =
                template(p, 3, WaveformFamily::Smooth).instantiate(rng.gen_range(0.0..2.0), rng.gen_range(0.5..3.0))?;
            let eigs = complex_eigenvalues(&build_floquet_matrix(&m, 10)?.matrix)?;
            closure = closure.max(conjugation_gap(&eigs));
        }
    }

    let t = template(Preset::PtCosYCosZ, 3, WaveformFamily::Square);
    let g = grid((0.0, 3.0, 40), (0.2, 3.0, 40), Engine::MonodromyPiecewise);
    let s = EngineSettings::default();
    let one = phase_diagram_with_threads(&t, &g, &s, 1)?.values;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let mut deterministic = true;
    for threads in [4, 8] {
        deterministic &= bits(&phase_diagram_with_threads(&t, &g, &s, threads)?.values) == bits(&one);
    }

    let mut similarity = 0.0f64;
    for _ in 0..5 {
        let a = DenseMatrix::from_fn(12, |_, _| random_c64(&mut rng));
        let b = random_similarity(&a, &mut rng);
        similarity = similarity.max(spectrum_distance(&complex_eigenvalues(&a)?, &complex_eigenvalues(&b)?));
    }

    Ok((
        gauge < 1e-10 && closure < 1e-8 && deterministic && similarity < 1e-8,
        format!(
            "gauge drift {gauge:.3e}, conjugation gap {closure:.3e}, bit-identical 1/4/8 threads: {deterministic}, similarity drift {similarity:.3e}"
        ),
    ))
}

fn parallel_performance() -> Outcome {
    let t = template(Preset::PtCosYCosZ, 3, WaveformFamily::Square);
    let g = grid((0.0, 5.0, 400), (0.2, 3.0, 400), Engine::MonodromyPiecewise);
    let s = EngineSettings::default();
    let time = |threads: usize| -> Result<f64> {
        let start = Instant::now();
        phase_diagram_with_threads(&t, &g, &s, threads)?;
        Ok(start.elapsed().as_secs_f64())
    };
    let t8 = time(8)?;
    let t1 = time(1)?;
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let speedup = t1 / t8;
    Ok((
        t8 < 30.0 && speedup >= 4.0,
        format!("8 threads {t8:.2} s, 1 thread {t1:.2} s, speedup {speedup:.2}x on {hw} hardware thread(s)"),
    ))
}
