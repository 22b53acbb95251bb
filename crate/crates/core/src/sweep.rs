//! Parallel `(γ, ω)` sweeps: stability phase diagrams, EP contours and
//! Berry-phase curves, plus their on-disk formats.
//!
//! Every cell is a pure function of its grid coordinates and is written to
//! a pre-assigned slot, so results do not depend on the number of worker
//! threads or on scheduling order.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::berry::{berry_phase_loop, BerryOptions, BerryPhaseResult, EpPolicy};
use crate::error::{Error, Result};
use crate::floquet::{max_im_quasienergy, DEFAULT_CUTOFF};
use crate::model::{ModelSpec, ModelTemplate, C64};
use crate::propagator::{
    ep_indicator, monodromy, segment_hamiltonians, DegeneracyKind, EpOptions, PropagationEngine,
    DEFAULT_INTEGRATE_STEPS,
};

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// `max Im ε` above this counts as unstable.
pub const INSTABILITY_THRESHOLD: f64 = 1e-8;
/// Fraction of failed cells above which a sweep is aborted.
pub const FAILURE_BUDGET: f64 = 0.01;
/// Bracket width at which EP bisection may stop.
pub const BISECTION_TOL: f64 = 1e-6;
/// Roots in adjacent columns are linked when closer than this many γ steps.
pub const LINK_CELLS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Floquet,
    MonodromyPiecewise,
    MonodromyIntegrate,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Floquet, Engine::MonodromyPiecewise, Engine::MonodromyIntegrate];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Floquet => "floquet",
            Engine::MonodromyPiecewise => "monodromy-piecewise",
            Engine::MonodromyIntegrate => "monodromy-integrate",
        }
    }

    pub fn is_monodromy(self) -> bool {
        self != Engine::Floquet
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Engine::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown engine `{s}`")))
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Numerical resolution of the engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineSettings {
    pub cutoff: usize,
    pub integrate_steps: usize,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings { cutoff: DEFAULT_CUTOFF, integrate_steps: DEFAULT_INTEGRATE_STEPS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_count: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_count: usize,
    pub engine: Engine,
}

fn linspace(lo: f64, hi: f64, count: usize, i: usize) -> f64 {
    if i + 1 == count {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (count - 1) as f64
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.gamma_count < 2 || self.omega_count < 2 {
            return bad("grid counts must be >= 2");
        }
        if ![self.gamma_min, self.gamma_max, self.omega_min, self.omega_max].iter().all(|x| x.is_finite()) {
            return bad("grid bounds must be finite");
        }
        if self.gamma_min < 0.0 {
            return bad("gamma_min must be >= 0");
        }
        if self.omega_min <= 0.0 {
            return bad("omega_min must be > 0");
        }
        if self.gamma_max < self.gamma_min || self.omega_max <= self.omega_min {
            return bad("grid ranges must be increasing");
        }
        Ok(())
    }

    pub fn gamma(&self, i: usize) -> f64 {
        linspace(self.gamma_min, self.gamma_max, self.gamma_count, i)
    }

    pub fn omega(&self, j: usize) -> f64 {
        linspace(self.omega_min, self.omega_max, self.omega_count, j)
    }

    pub fn gammas(&self) -> Vec<f64> {
        (0..self.gamma_count).map(|i| self.gamma(i)).collect()
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.omega_count).map(|j| self.omega(j)).collect()
    }

    pub fn cells(&self) -> usize {
        self.gamma_count * self.omega_count
    }

    fn gamma_step(&self) -> f64 {
        (self.gamma_max - self.gamma_min) / (self.gamma_count - 1) as f64
    }
}

fn check_engine(template: &ModelTemplate, engine: Engine) -> Result<()> {
    use crate::model::WaveformFamily::*;
    match (engine, template.family) {
        (Engine::Floquet, Square) => {
            Err(Error::InvalidParameter("the floquet engine needs a smooth waveform family".into()))
        }
        (Engine::MonodromyPiecewise, Smooth) => {
            Err(Error::InvalidParameter("monodromy-piecewise needs the square waveform family".into()))
        }
        _ => Ok(()),
    }
}

fn propagation(engine: Engine, settings: &EngineSettings) -> PropagationEngine {
    match engine {
        Engine::MonodromyIntegrate => PropagationEngine::Integrate { steps_per_period: settings.integrate_steps },
        _ => PropagationEngine::Piecewise,
    }
}

/// `max_α |Im ε_α|` of one model through the chosen engine.
pub fn max_im_eps(model: &ModelSpec, engine: Engine, settings: &EngineSettings) -> Result<f64> {
    match engine {
        Engine::Floquet => max_im_quasienergy(model, settings.cutoff),
        _ => Ok(monodromy(model, propagation(engine, settings))?.max_im_eps),
    }
}

/// Sidecar metadata of a phase diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramMetadata {
    pub format_version: u32,
    pub model: ModelTemplate,
    pub label: String,
    pub grid: GridSpec,
    pub cutoff: Option<usize>,
    pub segments: Option<usize>,
    pub integrate_steps: Option<usize>,
    pub failed_cells: usize,
    pub tool_version: String,
    pub timestamp: String,
}

fn timestamp() -> String {
    humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string()
}

impl DiagramMetadata {
    fn new(template: &ModelTemplate, grid: &GridSpec, settings: &EngineSettings, failed: usize) -> Result<Self> {
        let probe = template.instantiate(grid.gamma_max, grid.omega_min)?;
        let segments = match grid.engine {
            Engine::MonodromyPiecewise => Some(segment_hamiltonians(&probe)?.segments.len()),
            _ => None,
        };
        Ok(DiagramMetadata {
            format_version: FORMAT_VERSION,
            model: *template,
            label: probe.label,
            grid: *grid,
            cutoff: (grid.engine == Engine::Floquet).then_some(settings.cutoff),
            segments,
            integrate_steps: (grid.engine == Engine::MonodromyIntegrate).then_some(settings.integrate_steps),
            failed_cells: failed,
            tool_version: TOOL_VERSION.to_string(),
            timestamp: timestamp(),
        })
    }
}

/// `max Im ε` over the grid, `ω` outer and `γ` inner. Failed cells hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub values: Vec<f64>,
    pub metadata: DiagramMetadata,
}

impl PhaseDiagram {
    pub fn grid(&self) -> &GridSpec {
        &self.metadata.grid
    }

    pub fn get(&self, omega_index: usize, gamma_index: usize) -> f64 {
        self.values[omega_index * self.grid().gamma_count + gamma_index]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max)
    }
}

fn run_in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Evaluates `max Im ε` at every grid node on the current rayon pool.
pub fn phase_diagram(template: &ModelTemplate, grid: &GridSpec, settings: &EngineSettings) -> Result<PhaseDiagram> {
    grid.validate()?;
    check_engine(template, grid.engine)?;
    let cells: Vec<Result<f64>> = (0..grid.cells())
        .into_par_iter()
        .map(|idx| {
            let (j, i) = (idx / grid.gamma_count, idx % grid.gamma_count);
            let model = template.instantiate(grid.gamma(i), grid.omega(j))?;
            max_im_eps(&model, grid.engine, settings)
        })
        .collect();
    let mut failed = 0;
    let values: Vec<f64> = cells
        .into_iter()
        .enumerate()
        .map(|(idx, r)| match r {
            Ok(v) => v,
            Err(e) => {
                let (j, i) = (idx / grid.gamma_count, idx % grid.gamma_count);
                log::error!("cell omega={} gamma={} failed: {e}", grid.omega(j), grid.gamma(i));
                failed += 1;
                f64::NAN
            }
        })
        .collect();
    if failed as f64 > FAILURE_BUDGET * grid.cells() as f64 {
        return Err(Error::FailureBudget { failed, total: grid.cells() });
    }
    Ok(PhaseDiagram { values, metadata: DiagramMetadata::new(template, grid, settings, failed)? })
}

/// [`phase_diagram`] on a dedicated pool of `threads` workers.
pub fn phase_diagram_with_threads(
    template: &ModelTemplate,
    grid: &GridSpec,
    settings: &EngineSettings,
    threads: usize,
) -> Result<PhaseDiagram> {
    run_in_pool(Some(threads), || phase_diagram(template, grid, settings))?
}

/// Maximal contiguous `ω` intervals of row `gamma_index` where
/// `max Im ε > 1e-8`. Endpoints are grid nodes.
pub fn instability_window(diagram: &PhaseDiagram, gamma_index: usize) -> Vec<(f64, f64)> {
    let grid = diagram.grid();
    let omegas = grid.omegas();
    let row: Vec<f64> = (0..grid.omega_count).map(|j| diagram.get(j, gamma_index)).collect();
    windows(&omegas, &row)
}

/// Contiguous runs of `values > 1e-8` along `axis`.
pub fn windows(axis: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for k in 0..=values.len() {
        let unstable = k < values.len() && values[k] > INSTABILITY_THRESHOLD;
        match (unstable, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((axis[s], axis[k - 1]));
                start = None;
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpPoint {
    pub omega: f64,
    pub gamma: f64,
    pub kind: DegeneracyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpContour {
    pub id: usize,
    pub points: Vec<EpPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourMetadata {
    pub format_version: u32,
    pub model: ModelTemplate,
    pub label: String,
    pub grid: GridSpec,
    pub integrate_steps: Option<usize>,
    pub tolerance: f64,
    pub dropped_roots: usize,
    pub tool_version: String,
    pub timestamp: String,
}

/// EP polylines, plus single-point contours for diabolic roots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpContourSet {
    pub contours: Vec<EpContour>,
    pub metadata: ContourMetadata,
}

impl EpContourSet {
    pub fn points(&self) -> impl Iterator<Item = &EpPoint> {
        self.contours.iter().flat_map(|c| c.points.iter())
    }
}

struct Root {
    gamma: f64,
    kind: DegeneracyKind,
}

struct ColumnRoots {
    roots: Vec<Root>,
    dropped: usize,
}

fn indicator(
    template: &ModelTemplate,
    gamma: f64,
    omega: f64,
    engine: PropagationEngine,
    opts: &EpOptions,
) -> Result<(f64, DegeneracyKind)> {
    let r = monodromy(&template.instantiate(gamma, omega)?, engine)?;
    let e = ep_indicator(&r, opts);
    Ok((e.f, e.kind))
}

/// Bisects a sign change of `f` until `|f| ≤ root_tol`. The bracket is
/// first narrowed to [`BISECTION_TOL`] and then further while `|f|` is too
/// large, down to floating-point resolution.
fn bisect(
    template: &ModelTemplate,
    omega: f64,
    (mut lo, mut f_lo): (f64, f64),
    (mut hi, f_hi): (f64, f64),
    engine: PropagationEngine,
    opts: &EpOptions,
) -> Result<Option<Root>> {
    let mut best = if f_lo.abs() <= f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..200 {
        if hi - lo < BISECTION_TOL && best.1.abs() <= opts.root_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (f_mid, _) = indicator(template, mid, omega, engine, opts)?;
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let _ = f_hi;
    if best.1.abs() > opts.root_tol {
        return Ok(None);
    }
    let (_, kind) = indicator(template, best.0, omega, engine, opts)?;
    Ok(Some(Root { gamma: best.0, kind }))
}

fn column_roots(
    template: &ModelTemplate,
    grid: &GridSpec,
    omega: f64,
    engine: PropagationEngine,
    opts: &EpOptions,
) -> Result<ColumnRoots> {
    let gammas = grid.gammas();
    let samples = gammas.iter().map(|&g| indicator(template, g, omega, engine, opts)).collect::<Result<Vec<_>>>()?;
    let mut roots = Vec::new();
    let mut dropped = 0;
    for i in 0..gammas.len() {
        let (f, kind) = samples[i];
        if f.abs() <= opts.root_tol {
            roots.push(Root { gamma: gammas[i], kind });
            continue;
        }
        if i + 1 == gammas.len() {
            break;
        }
        let f_next = samples[i + 1].0;
        if f_next.abs() <= opts.root_tol || (f < 0.0) == (f_next < 0.0) {
            continue;
        }
        match bisect(template, omega, (gammas[i], f), (gammas[i + 1], f_next), engine, opts)? {
            Some(root) => roots.push(root),
            None => {
                log::warn!("root near omega={omega} gamma={} lost during bisection", gammas[i]);
                dropped += 1;
            }
        }
    }
    Ok(ColumnRoots { roots, dropped })
}

/// Scans each `ω` column in `γ` for sign changes of the EP indicator,
/// bisects them and links EP roots of adjacent columns into polylines.
pub fn trace_ep_contours(
    template: &ModelTemplate,
    grid: &GridSpec,
    settings: &EngineSettings,
    opts: &EpOptions,
) -> Result<EpContourSet> {
    grid.validate()?;
    if !grid.engine.is_monodromy() {
        return Err(Error::InvalidParameter("EP contours need a monodromy engine".into()));
    }
    check_engine(template, grid.engine)?;
    let engine = propagation(grid.engine, settings);
    let columns = (0..grid.omega_count)
        .into_par_iter()
        .map(|j| column_roots(template, grid, grid.omega(j), engine, opts))
        .collect::<Result<Vec<_>>>()?;

    let link = LINK_CELLS * grid.gamma_step();
    let mut contours: Vec<EpContour> = Vec::new();
    let mut diabolic: Vec<EpPoint> = Vec::new();
    // Contours whose last point sits in the previous column.
    let mut open: Vec<usize> = Vec::new();
    let mut dropped = 0;
    for (j, col) in columns.iter().enumerate() {
        dropped += col.dropped;
        let omega = grid.omega(j);
        let eps: Vec<&Root> = col.roots.iter().filter(|r| r.kind == DegeneracyKind::Ep).collect();
        for r in col.roots.iter().filter(|r| r.kind != DegeneracyKind::Ep) {
            diabolic.push(EpPoint { omega, gamma: r.gamma, kind: r.kind });
        }
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (ri, r) in eps.iter().enumerate() {
            for (oi, &c) in open.iter().enumerate() {
                let last = contours[c].points.last().expect("non-empty contour");
                let d = (last.gamma - r.gamma).abs();
                if d <= link {
                    candidates.push((d, ri, oi));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut assigned: Vec<Option<usize>> = vec![None; eps.len()];
        let mut taken = vec![false; open.len()];
        for (_, ri, oi) in candidates {
            if assigned[ri].is_none() && !taken[oi] {
                assigned[ri] = Some(open[oi]);
                taken[oi] = true;
            }
        }
        let mut next_open = Vec::with_capacity(eps.len());
        for (r, target) in eps.iter().zip(assigned) {
            let point = EpPoint { omega, gamma: r.gamma, kind: DegeneracyKind::Ep };
            let id = match target {
                Some(c) => c,
                None => {
                    contours.push(EpContour { id: contours.len(), points: Vec::new() });
                    contours.len() - 1
                }
            };
            contours[id].points.push(point);
            next_open.push(id);
        }
        open = next_open;
    }
    for p in diabolic {
        contours.push(EpContour { id: contours.len(), points: vec![p] });
    }
    let label = template.instantiate(grid.gamma_max, grid.omega_min)?.label;
    Ok(EpContourSet {
        contours,
        metadata: ContourMetadata {
            format_version: FORMAT_VERSION,
            model: *template,
            label,
            grid: *grid,
            integrate_steps: (grid.engine == Engine::MonodromyIntegrate).then_some(settings.integrate_steps),
            tolerance: opts.root_tol,
            dropped_roots: dropped,
            tool_version: TOOL_VERSION.to_string(),
            timestamp: timestamp(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerryPointInfo {
    pub steps: usize,
    pub certified: bool,
    pub step_doubling_delta: Option<f64>,
    pub half_solid_angle: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerryMetadata {
    pub format_version: u32,
    pub model: ModelTemplate,
    pub label: String,
    pub omega: f64,
    pub options: BerryOptions,
    pub points: Vec<BerryPointInfo>,
    pub tool_version: String,
    pub timestamp: String,
}

/// Berry phases of both bands along a `γ` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerryScan {
    pub gammas: Vec<f64>,
    pub results: Vec<BerryPhaseResult>,
    pub metadata: BerryMetadata,
}

/// Runs [`berry_phase_loop`] at every `γ`. Loops through EPs are kept with
/// flags; any other failure yields NaN phases for that `γ`.
pub fn berry_sweep(template: &ModelTemplate, gammas: &[f64], omega: f64, opts: &BerryOptions) -> Result<BerryScan> {
    let opts = BerryOptions { ep_policy: EpPolicy::FlagAndContinue, ..*opts };
    let label = template.instantiate(gammas.first().copied().unwrap_or(0.0), omega)?.label;
    let runs: Vec<Result<BerryPhaseResult>> =
        gammas.par_iter().map(|&g| berry_phase_loop(&template.instantiate(g, omega)?, &opts)).collect();
    let mut results = Vec::with_capacity(runs.len());
    let mut points = Vec::with_capacity(runs.len());
    for (g, run) in gammas.iter().zip(runs) {
        let (r, error) = match run {
            Ok(r) => (r, None),
            Err(e @ Error::InvalidParameter(_)) => return Err(e),
            Err(e) => {
                log::error!("berry loop at gamma={g} failed: {e}");
                let nan = C64::new(f64::NAN, f64::NAN);
                let r = BerryPhaseResult {
                    theta: vec![nan, nan],
                    steps: opts.steps,
                    degeneracy_flags: Vec::new(),
                    half_solid_angle: None,
                    certified: false,
                    step_doubling_delta: None,
                };
                (r, Some(e.to_string()))
            }
        };
        points.push(BerryPointInfo {
            steps: r.steps,
            certified: r.certified,
            step_doubling_delta: r.step_doubling_delta,
            half_solid_angle: r.half_solid_angle,
            error,
        });
        results.push(r);
    }
    Ok(BerryScan {
        gammas: gammas.to_vec(),
        results,
        metadata: BerryMetadata {
            format_version: FORMAT_VERSION,
            model: *template,
            label,
            omega,
            options: opts,
            points,
            tool_version: TOOL_VERSION.to_string(),
            timestamp: timestamp(),
        },
    })
}

/// C-style `%.12e`: `1.234567890123e+00`, `nan`, `inf`.
pub fn format_sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Malformed(format!("line {line}: bad number `{s}`")))
}

/// Path of the JSON sidecar next to a CSV file.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Malformed(format!("{}: missing format_version", path.display())))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch { found: version as u32, expected: FORMAT_VERSION });
    }
    Ok(serde_json::from_value(raw)?)
}

fn csv_lines<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.split('\n');
    match lines.next() {
        Some(h) if h == header => {}
        other => return Err(Error::Malformed(format!("expected header `{header}`, found {other:?}"))),
    }
    if !text.ends_with('\n') {
        return Err(Error::Malformed("missing trailing newline".into()));
    }
    Ok(lines.enumerate().filter(|(_, l)| !l.is_empty()).map(|(k, l)| (k + 2, l.split(',').collect())))
}

const DIAGRAM_HEADER: &str = "omega,gamma,max_im_eps";
const CONTOUR_HEADER: &str = "contour_id,omega,gamma,kind";
const BERRY_HEADER: &str = "gamma,band,re_theta,im_theta,flags";

pub fn diagram_csv(d: &PhaseDiagram) -> String {
    let grid = d.grid();
    let mut out = String::with_capacity(64 * (grid.cells() + 1));
    out.push_str(DIAGRAM_HEADER);
    out.push('\n');
    for j in 0..grid.omega_count {
        let omega = format_sci(grid.omega(j));
        for i in 0..grid.gamma_count {
            out.push_str(&omega);
            out.push(',');
            out.push_str(&format_sci(grid.gamma(i)));
            out.push(',');
            out.push_str(&format_sci(d.get(j, i)));
            out.push('\n');
        }
    }
    out
}

pub fn save_phase_diagram(d: &PhaseDiagram, csv: &Path) -> Result<()> {
    fs::write(csv, diagram_csv(d))?;
    write_json(&sidecar_path(csv), &d.metadata)
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

pub fn load_phase_diagram(csv: &Path) -> Result<PhaseDiagram> {
    let metadata: DiagramMetadata = read_json(&sidecar_path(csv))?;
    let grid = metadata.grid;
    grid.validate()?;
    let text = fs::read_to_string(csv)?;
    let mut values = Vec::with_capacity(grid.cells());
    for (line, fields) in csv_lines(&text, DIAGRAM_HEADER)? {
        if fields.len() != 3 {
            return Err(Error::Malformed(format!("line {line}: expected 3 fields")));
        }
        let idx = values.len();
        if idx >= grid.cells() {
            return Err(Error::Malformed(format!("line {line}: more records than grid cells")));
        }
        let (omega, gamma) = (parse_f64(fields[0], line)?, parse_f64(fields[1], line)?);
        let (j, i) = (idx / grid.gamma_count, idx % grid.gamma_count);
        if !near(omega, grid.omega(j)) || !near(gamma, grid.gamma(i)) {
            return Err(Error::Malformed(format!("line {line}: coordinates do not match the grid")));
        }
        values.push(parse_f64(fields[2], line)?);
    }
    if values.len() != grid.cells() {
        return Err(Error::Malformed(format!("expected {} records, found {}", grid.cells(), values.len())));
    }
    Ok(PhaseDiagram { values, metadata })
}

pub fn contours_csv(set: &EpContourSet) -> String {
    let mut out = String::from(CONTOUR_HEADER);
    out.push('\n');
    for c in &set.contours {
        for p in &c.points {
            out.push_str(&format!("{},{},{},{}\n", c.id, format_sci(p.omega), format_sci(p.gamma), p.kind.as_str()));
        }
    }
    out
}

pub fn save_ep_contours(set: &EpContourSet, csv: &Path) -> Result<()> {
    fs::write(csv, contours_csv(set))?;
    write_json(&sidecar_path(csv), &set.metadata)
}

pub fn load_ep_contours(csv: &Path) -> Result<EpContourSet> {
    let metadata: ContourMetadata = read_json(&sidecar_path(csv))?;
    let text = fs::read_to_string(csv)?;
    let mut contours: Vec<EpContour> = Vec::new();
    for (line, fields) in csv_lines(&text, CONTOUR_HEADER)? {
        if fields.len() != 4 {
            return Err(Error::Malformed(format!("line {line}: expected 4 fields")));
        }
        let id: usize = fields[0].parse().map_err(|_| Error::Malformed(format!("line {line}: bad contour id")))?;
        let kind = match fields[3] {
            "EP" => DegeneracyKind::Ep,
            "Diabolic" => DegeneracyKind::Diabolic,
            other => return Err(Error::Malformed(format!("line {line}: unknown kind `{other}`"))),
        };
        let point = EpPoint { omega: parse_f64(fields[1], line)?, gamma: parse_f64(fields[2], line)?, kind };
        match contours.last_mut() {
            Some(c) if c.id == id => c.points.push(point),
            _ => {
                if id != contours.len() {
                    return Err(Error::Malformed(format!("line {line}: contour ids must be consecutive")));
                }
                contours.push(EpContour { id, points: vec![point] });
            }
        }
    }
    Ok(EpContourSet { contours, metadata })
}

pub fn berry_csv(scan: &BerryScan) -> String {
    let mut out = String::from(BERRY_HEADER);
    out.push('\n');
    for (g, r) in scan.gammas.iter().zip(&scan.results) {
        let flags: Vec<String> = r.degeneracy_flags.iter().map(|&s| format_sci(s)).collect();
        for (band, t) in r.theta.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                format_sci(*g),
                band,
                format_sci(t.re),
                format_sci(t.im),
                flags.join(";")
            ));
        }
    }
    out
}

pub fn save_berry_scan(scan: &BerryScan, csv: &Path) -> Result<()> {
    fs::write(csv, berry_csv(scan))?;
    write_json(&sidecar_path(csv), &scan.metadata)
}

pub fn load_berry_scan(csv: &Path) -> Result<BerryScan> {
    let metadata: BerryMetadata = read_json(&sidecar_path(csv))?;
    let text = fs::read_to_string(csv)?;
    let mut gammas: Vec<f64> = Vec::new();
    let mut rows: Vec<(Vec<C64>, Vec<f64>)> = Vec::new();
    for (line, fields) in csv_lines(&text, BERRY_HEADER)? {
        if fields.len() != 5 {
            return Err(Error::Malformed(format!("line {line}: expected 5 fields")));
        }
        let gamma = parse_f64(fields[0], line)?;
        let band: usize = fields[1].parse().map_err(|_| Error::Malformed(format!("line {line}: bad band")))?;
        let theta = C64::new(parse_f64(fields[2], line)?, parse_f64(fields[3], line)?);
        let flags = if fields[4].is_empty() {
            Vec::new()
        } else {
            fields[4].split(';').map(|s| parse_f64(s, line)).collect::<Result<Vec<_>>>()?
        };
        if band == 0 {
            gammas.push(gamma);
            rows.push((vec![theta], flags));
        } else {
            match rows.last_mut() {
                Some((thetas, _)) if thetas.len() == band && gammas.last() == Some(&gamma) => thetas.push(theta),
                _ => return Err(Error::Malformed(format!("line {line}: band rows out of order"))),
            }
        }
    }
    if rows.len() != metadata.points.len() {
        return Err(Error::Malformed("sidecar and CSV disagree on the number of points".into()));
    }
    let results = rows
        .into_iter()
        .zip(&metadata.points)
        .map(|((theta, degeneracy_flags), info)| BerryPhaseResult {
            theta,
            steps: info.steps,
            degeneracy_flags,
            half_solid_angle: info.half_solid_angle,
            certified: info.certified,
            step_doubling_delta: info.step_doubling_delta,
        })
        .collect();
    Ok(BerryScan { gammas, results, metadata })
}
