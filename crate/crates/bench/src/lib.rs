//! Workloads shared by the benchmarks and the acceptance suite.

use floquet_ep::model::{ModelTemplate, Preset, WaveformFamily};
use floquet_ep::sweep::{Engine, GridSpec};

/// PT cosY-cosZ with `β = 3`.
pub fn pt_beta3(family: WaveformFamily) -> ModelTemplate {
    ModelTemplate::new(Preset::PtCosYCosZ, 1.0, 3, family).expect("valid template")
}

/// Square grid over `γ ∈ [0, 5]`, `ω ∈ [0.2, 3]`.
pub fn square_grid(n: usize, engine: Engine) -> GridSpec {
    GridSpec { gamma_min: 0.0, gamma_max: 5.0, gamma_count: n, omega_min: 0.2, omega_max: 3.0, omega_count: n, engine }
}
