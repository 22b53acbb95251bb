use std::fs;
use std::path::{Path, PathBuf};

use floquet_ep::berry::{BerryOptions, EpPolicy, DEFAULT_STEPS, MIN_STEPS};
use floquet_ep::model::{ModelTemplate, Preset, WaveformFamily};
use floquet_ep::propagator::EpOptions;
use floquet_ep::sweep::{Engine, EngineSettings, GridSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Preset,
    #[serde(default = "one")]
    pub j: f64,
    pub beta: u32,
    pub family: WaveformFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_count: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerryConfig {
    /// Drive frequency of the loop; the Berry phase itself does not depend on it.
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default = "default_berry_steps")]
    pub steps: usize,
    #[serde(default = "yes")]
    pub richardson: bool,
}

impl Default for BerryConfig {
    fn default() -> Self {
        BerryConfig { omega: 1.0, steps: DEFAULT_STEPS, richardson: true }
    }
}

/// A complete run description. Every field is written back on
/// serialization, so parse → serialize → parse is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub engine: Engine,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default = "default_integrate_steps")]
    pub integrate_steps: usize,
    pub grid: GridConfig,
    #[serde(default)]
    pub berry: BerryConfig,
    /// Samples per period for the instantaneous-spectrum scan.
    #[serde(default = "default_spectrum_samples")]
    pub spectrum_samples: usize,
    /// Draw EP contours on top of the phase-diagram heatmap.
    #[serde(default)]
    pub overlay_contours: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_berry_steps() -> usize {
    DEFAULT_STEPS
}

fn default_cutoff() -> usize {
    EngineSettings::default().cutoff
}

fn default_integrate_steps() -> usize {
    EngineSettings::default().integrate_steps
}

fn default_spectrum_samples() -> usize {
    512
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        self.template()?;
        self.grid().validate()?;
        match (self.engine, self.model.family) {
            (Engine::Floquet, WaveformFamily::Square) => {
                return bad("the floquet engine needs the smooth waveform family".into())
            }
            (Engine::MonodromyPiecewise, WaveformFamily::Smooth) => {
                return bad("monodromy-piecewise needs the square waveform family".into())
            }
            _ => {}
        }
        if self.cutoff == 0 {
            return bad("cutoff must be >= 1".into());
        }
        if self.integrate_steps == 0 {
            return bad("integrate_steps must be >= 1".into());
        }
        if self.berry.steps < MIN_STEPS {
            return bad(format!("berry.steps must be >= {MIN_STEPS}"));
        }
        if !(self.berry.omega.is_finite() && self.berry.omega > 0.0) {
            return bad("berry.omega must be positive".into());
        }
        if self.spectrum_samples < 64 {
            return bad("spectrum_samples must be >= 64".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        Ok(())
    }

    pub fn template(&self) -> Result<ModelTemplate, CliError> {
        Ok(ModelTemplate::new(self.model.preset, self.model.j, self.model.beta, self.model.family)?)
    }

    pub fn grid(&self) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            gamma_min: g.gamma_min,
            gamma_max: g.gamma_max,
            gamma_count: g.gamma_count,
            omega_min: g.omega_min,
            omega_max: g.omega_max,
            omega_count: g.omega_count,
            engine: self.engine,
        }
    }

    pub fn settings(&self) -> EngineSettings {
        EngineSettings { cutoff: self.cutoff, integrate_steps: self.integrate_steps }
    }

    pub fn berry_options(&self) -> BerryOptions {
        BerryOptions {
            steps: self.berry.steps,
            richardson: self.berry.richardson,
            ep_policy: EpPolicy::FlagAndContinue,
            ..BerryOptions::default()
        }
    }

    pub fn ep_options(&self) -> EpOptions {
        EpOptions::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "model": { "preset": "pt-cosy-cosz", "beta": 3, "family": "square" },
        "engine": "monodromy-piecewise",
        "grid": { "gamma_min": 0, "gamma_max": 2, "gamma_count": 5, "omega_min": 0.2, "omega_max": 3, "omega_count": 7 }
    }"#;

    #[test]
    fn defaults_fill_in_and_round_trip() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.model.j, 1.0);
        assert_eq!(c.berry, BerryConfig::default());
        assert_eq!(c.cutoff, 20);
        let again = RunConfig::parse(&c.to_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_json(), c.to_json());
    }

    #[test]
    fn rejects_invalid() {
        let cases = [
            MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2"),
            MINIMAL.replace("pt-cosy-cosz", "no-such-model"),
            MINIMAL.replace("\"beta\": 3", "\"beta\": 0"),
            MINIMAL.replace("\"omega_max\": 3", "\"omega_max\": 0.1"),
            MINIMAL.replace("\"gamma_count\": 5", "\"gamma_count\": 1"),
            MINIMAL.replace("\"engine\"", "\"colour\": 1, \"engine\""),
            MINIMAL.replace("monodromy-piecewise", "euler"),
            MINIMAL.replace("monodromy-piecewise", "floquet"),
        ];
        for text in cases {
            assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))), "{text}");
        }
    }
}
