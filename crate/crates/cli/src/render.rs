//! Static SVG figures. Output depends only on the data, so reruns are
//! byte-identical.

use std::fmt::Write;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use floquet_ep::berry::BerryPhaseResult;
use floquet_ep::propagator::DegeneracyKind;
use floquet_ep::sweep::{BerryScan, EpContourSet, GridSpec, PhaseDiagram};

/// Grids with more cells than this along either axis are drawn as a raster.
pub const MAX_RECT_CELLS: usize = 200;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const DARK: [u8; 3] = [12, 7, 38];
const BRIGHT: [u8; 3] = [252, 231, 37];
const MISSING: [u8; 3] = [128, 128, 128];
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Linear map of `[0, max]` onto dark → bright. NaN is grey.
pub fn colour(value: f64, max: f64) -> [u8; 3] {
    if value.is_nan() {
        return MISSING;
    }
    let t = if max > 0.0 { (value / max).clamp(0.0, 1.0) } else { 0.0 };
    let mix = |a: u8, b: u8| (a as f64 + t * (b as f64 - a as f64)).round() as u8;
    [mix(DARK[0], BRIGHT[0]), mix(DARK[1], BRIGHT[1]), mix(DARK[2], BRIGHT[2])]
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// A data window mapped onto a pixel rectangle.
struct Frame {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn full(xr: (f64, f64), yr: (f64, f64)) -> Self {
        Frame { x: LEFT, y: TOP, w: WIDTH - LEFT - RIGHT, h: HEIGHT - TOP - BOTTOM, xr, yr }
    }

    fn px(&self, v: f64) -> f64 {
        let span = self.xr.1 - self.xr.0;
        if span > 0.0 {
            self.x + (v - self.xr.0) / span * self.w
        } else {
            self.x + self.w / 2.0
        }
    }

    fn py(&self, v: f64) -> f64 {
        let span = self.yr.1 - self.yr.0;
        if span > 0.0 {
            self.y + self.h - (v - self.yr.0) / span * self.h
        } else {
            self.y + self.h / 2.0
        }
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (x0, y0, y1) = (self.x, self.y, self.y + self.h);
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            self.w, self.h
        );
        for k in 0..3 {
            let t = k as f64 / 2.0;
            let xv = self.xr.0 + t * (self.xr.1 - self.xr.0);
            let yv = self.yr.0 + t * (self.yr.1 - self.yr.0);
            let xp = x0 + t * self.w;
            let yp = y1 - t * self.h;
            let _ = writeln!(
                out,
                r#"<line x1="{xp:.2}" y1="{y1:.2}" x2="{xp:.2}" y2="{:.2}" stroke="black"/><text x="{xp:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
                y1 + 5.0,
                y1 + 18.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{yp:.2}" x2="{x0:.2}" y2="{yp:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                yp + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#,
            x0 + self.w / 2.0,
            y1 + 40.0,
            escape(xlabel)
        );
        let (lx, ly) = (x0 - 55.0, y0 + self.h / 2.0);
        let _ = writeln!(
            out,
            r#"<text x="{lx:.2}" y="{ly:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
            escape(ylabel)
        );
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn close(out: &mut String) {
    out.push_str("</svg>\n");
}

/// Binary PPM of the diagram, `γ` increasing upwards.
pub fn ppm(d: &PhaseDiagram) -> Vec<u8> {
    let g = d.grid();
    let max = d.max_value();
    let mut bytes = format!("P6\n{} {}\n255\n", g.omega_count, g.gamma_count).into_bytes();
    for i in (0..g.gamma_count).rev() {
        for j in 0..g.omega_count {
            bytes.extend_from_slice(&colour(d.get(j, i), max));
        }
    }
    bytes
}

fn cell_frame(g: &GridSpec) -> (Frame, f64, f64) {
    let frame = Frame::full((g.omega_min, g.omega_max), (g.gamma_min, g.gamma_max));
    (frame, (WIDTH - LEFT - RIGHT) / g.omega_count as f64, (HEIGHT - TOP - BOTTOM) / g.gamma_count as f64)
}

/// Centre of grid point `(ω, γ)` in heatmap pixels.
fn cell_centre(g: &GridSpec, omega: f64, gamma: f64) -> (f64, f64) {
    let (f, cw, ch) = cell_frame(g);
    let inner = Frame { x: f.x + cw / 2.0, y: f.y + ch / 2.0, w: f.w - cw, h: f.h - ch, xr: f.xr, yr: f.yr };
    (inner.px(omega), inner.py(gamma))
}

/// `max |Im ε|` heatmap over `(ω, γ)` with an optional EP overlay.
pub fn heatmap(d: &PhaseDiagram, overlay: Option<&EpContourSet>) -> String {
    let g = d.grid();
    let max = d.max_value();
    let mut out = String::new();
    open(&mut out, &format!("{}  max |Im ε| = {:.4e}", d.metadata.label, if max.is_finite() { max } else { 0.0 }));
    let (frame, cw, ch) = cell_frame(g);
    if g.omega_count <= MAX_RECT_CELLS && g.gamma_count <= MAX_RECT_CELLS {
        for i in 0..g.gamma_count {
            let y = frame.y + (g.gamma_count - 1 - i) as f64 * ch;
            for j in 0..g.omega_count {
                let x = frame.x + j as f64 * cw;
                let _ = writeln!(
                    out,
                    r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                    cw + 0.01,
                    ch + 0.01,
                    hex(colour(d.get(j, i), max))
                );
            }
        }
    } else {
        let _ = writeln!(
            out,
            r#"<image x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" preserveAspectRatio="none" style="image-rendering:pixelated" href="data:image/x-portable-pixmap;base64,{}"/>"#,
            frame.x,
            frame.y,
            frame.w,
            frame.h,
            STANDARD.encode(ppm(d))
        );
    }
    if let Some(set) = overlay {
        draw_contours(&mut out, g, set, "white");
    }
    frame.axes(&mut out, "ω", "γ");
    close(&mut out);
    out
}

fn draw_contours(out: &mut String, g: &GridSpec, set: &EpContourSet, diabolic_colour: &str) {
    for c in &set.contours {
        let pts: Vec<(f64, f64)> = c.points.iter().map(|p| cell_centre(g, p.omega, p.gamma)).collect();
        let colour = PALETTE[c.id % PALETTE.len()];
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        for (p, (x, y)) in c.points.iter().zip(&pts) {
            match p.kind {
                DegeneracyKind::Diabolic => {
                    let _ = writeln!(
                        out,
                        r#"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="none" stroke="{diabolic_colour}"/>"#,
                        x - 3.0,
                        y - 3.0
                    );
                }
                _ => {
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{colour}"/>"#);
                }
            }
        }
    }
}

/// EP polylines in the `(ω, γ)` plane.
pub fn contour_plot(set: &EpContourSet) -> String {
    let g = &set.metadata.grid;
    let mut out = String::new();
    let eps = set.points().filter(|p| p.kind == DegeneracyKind::Ep).count();
    open(&mut out, &format!("{}  EP points: {eps}", set.metadata.label));
    let (frame, _, _) = cell_frame(g);
    draw_contours(&mut out, g, set, "black");
    frame.axes(&mut out, "ω", "γ");
    close(&mut out);
    out
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3 * (1.0 + lo.abs().max(hi.abs())));
    (lo - pad, hi + pad)
}

/// Picks one real component of band `b`.
type Component = fn(&BerryPhaseResult, usize) -> f64;

/// `Re θ` and `Im θ` against `γ`, one line per band. Uncertified points
/// carry an open marker.
pub fn berry_plot(scan: &BerryScan) -> String {
    let mut out = String::new();
    open(&mut out, &format!("{}  Berry phase", scan.metadata.label));
    let gr = (scan.gammas.first().copied().unwrap_or(0.0), scan.gammas.last().copied().unwrap_or(1.0));
    let gap = 30.0;
    let h = (HEIGHT - TOP - BOTTOM - gap) / 2.0;
    let parts: [(&str, Component); 2] = [("Re θ", |r, b| r.theta[b].re), ("Im θ", |r, b| r.theta[b].im)];
    for (k, (name, value)) in parts.into_iter().enumerate() {
        let yr = finite_range(scan.results.iter().flat_map(|r| (0..r.theta.len()).map(move |b| value(r, b))));
        let frame = Frame { x: LEFT, y: TOP + k as f64 * (h + gap), w: WIDTH - LEFT - RIGHT, h, xr: gr, yr };
        for (band, &colour) in PALETTE.iter().take(2).enumerate() {
            let mut segment: Vec<String> = Vec::new();
            let flush = |segment: &mut Vec<String>, out: &mut String| {
                if segment.len() > 1 {
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                        segment.join(" ")
                    );
                }
                segment.clear();
            };
            for (g, r) in scan.gammas.iter().zip(&scan.results) {
                let v = r.theta.get(band).map_or(f64::NAN, |_| value(r, band));
                if v.is_finite() {
                    segment.push(format!("{:.2},{:.2}", frame.px(*g), frame.py(v)));
                    if !r.certified {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="none" stroke="{colour}"/>"#,
                            frame.px(*g),
                            frame.py(v)
                        );
                    }
                } else {
                    flush(&mut segment, &mut out);
                }
            }
            flush(&mut segment, &mut out);
        }
        frame.axes(&mut out, if k == 1 { "γ" } else { "" }, name);
    }
    for (band, label) in ["band +", "band −"].iter().enumerate() {
        let y = TOP + 12.0 + band as f64 * 14.0;
        let x = WIDTH - RIGHT - 70.0;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="11">{label}</text>"#,
            x + 16.0,
            PALETTE[band],
            x + 20.0,
            y + 4.0
        );
    }
    close(&mut out);
    out
}
