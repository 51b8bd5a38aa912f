//! Deterministic SVG scatter/boundary rendering.
//!
//! No plotting library: elements are emitted directly with fixed margins,
//! fixed font sizes, and two-decimal pixel coordinates, so identical inputs
//! produce byte-identical files. A comment near the top of the SVG records
//! the exact axis ranges for machine checks.

use std::fmt::Write;

// ---------------------------------------------------------------------------
// Geometry and styling constants
// ---------------------------------------------------------------------------

const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;
const FONT: &str = "monospace";
const POINT_R: f64 = 2.5;

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

/// Visual class of a scatter point; fixes both color and legend label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    Correct,
    Wrong,
    Cfrb,
    Pfrb,
    Cirb,
}

impl PointClass {
    const ALL: [PointClass; 5] = [
        PointClass::Correct,
        PointClass::Wrong,
        PointClass::Cfrb,
        PointClass::Pfrb,
        PointClass::Cirb,
    ];

    fn color(self) -> &'static str {
        match self {
            PointClass::Correct => "#2a7de1",
            PointClass::Wrong => "#d64545",
            PointClass::Cfrb => "#2a9d5c",
            PointClass::Pfrb => "#f4a425",
            PointClass::Cirb => "#d64545",
        }
    }

    fn label(self) -> &'static str {
        match self {
            PointClass::Correct => "correct",
            PointClass::Wrong => "wrong",
            PointClass::Cfrb => "CFRB",
            PointClass::Pfrb => "PFRB",
            PointClass::Cirb => "CIRB",
        }
    }
}

/// One plot axis: data range plus linear/logarithmic mapping.
#[derive(Debug, Clone)]
pub struct Axis {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub log: bool,
}

impl Axis {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    /// Position of `v` in `[0, 1]` along the axis.
    fn frac(&self, v: f64) -> f64 {
        if self.log {
            (v.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            log_ticks(self.lo, self.hi)
        } else {
            linear_ticks(self.lo, self.hi)
        }
    }
}

/// An overlay curve in data coordinates (already sampled).
#[derive(Debug, Clone)]
pub struct Curve {
    pub label: &'static str,
    pub color: &'static str,
    pub dash: Option<&'static str>,
    pub pts: Vec<(f64, f64)>,
}

/// Everything needed to render one figure.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub width: u32,
    pub height: u32,
    pub title: String,
    pub footer: String,
    pub x: Axis,
    pub y: Axis,
    pub points: Vec<(f64, f64, PointClass)>,
    pub curves: Vec<Curve>,
}

// ---------------------------------------------------------------------------
// Tick placement and label formatting
// ---------------------------------------------------------------------------

/// Round ticks at a 1/2/5 step chosen to yield roughly six intervals.
fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let range = hi - lo;
    let raw = range / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| raw <= *s * (1.0 + 1e-12))
        .expect("10*mag always covers raw");
    let eps = 1e-9 * range;
    let first = ((lo - eps) / step).ceil();
    let mut ticks = Vec::new();
    let mut i = 0.0;
    loop {
        let v = (first + i) * step;
        if v > hi + eps {
            break;
        }
        // Snap near-zero artifacts of the division to exactly zero.
        ticks.push(if v.abs() < eps { 0.0 } else { v });
        i += 1.0;
    }
    ticks
}

/// Decade ticks; degenerately narrow ranges fall back to the endpoints.
fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let k_lo = (lo.log10() - 1e-9).ceil() as i32;
    let k_hi = (hi.log10() + 1e-9).floor() as i32;
    let decades: Vec<f64> = (k_lo..=k_hi).map(|k| 10f64.powi(k)).collect();
    if decades.len() >= 2 {
        decades
    } else {
        vec![lo, hi]
    }
}

/// Compact tick label: plain integers where short, `{:e}` otherwise.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

pub fn render_svg(s: &PlotSpec) -> String {
    let w = f64::from(s.width);
    let h = f64::from(s.height);
    let (x0, y0) = (MARGIN_L, MARGIN_T);
    let pw = w - MARGIN_L - MARGIN_R;
    let ph = h - MARGIN_T - MARGIN_B;
    let px = |v: f64| x0 + s.x.frac(v) * pw;
    let py = |v: f64| y0 + (1.0 - s.y.frac(v)) * ph;

    let mut svg = String::new();
    let out = &mut svg;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        s.width, s.height, s.width, s.height
    )
    .unwrap();
    let scale_name = |log: bool| if log { "log" } else { "linear" };
    writeln!(
        out,
        "<!-- x: {} {} {}..{}; y: {} {} {}..{} -->",
        s.x.label,
        scale_name(s.x.log),
        s.x.lo,
        s.x.hi,
        s.y.label,
        scale_name(s.y.log),
        s.y.lo,
        s.y.hi
    )
    .unwrap();
    writeln!(out, r##"<rect width="{w}" height="{h}" fill="#ffffff"/>"##).unwrap();
    writeln!(
        out,
        r##"<text x="{:.2}" y="22" text-anchor="middle" font-family="{FONT}" font-size="14" fill="#222222">{}</text>"##,
        w / 2.0,
        esc(&s.title)
    )
    .unwrap();

    // Gridlines and tick labels.
    for v in s.x.ticks() {
        let tx = px(v);
        writeln!(
            out,
            r##"<line x1="{tx:.2}" y1="{y0:.2}" x2="{tx:.2}" y2="{:.2}" stroke="#e6e6e6" stroke-width="1"/>"##,
            y0 + ph
        )
        .unwrap();
        writeln!(
            out,
            r##"<text x="{tx:.2}" y="{:.2}" text-anchor="middle" font-family="{FONT}" font-size="11" fill="#444444">{}</text>"##,
            y0 + ph + 16.0,
            esc(&fmt_tick(v))
        )
        .unwrap();
    }
    for v in s.y.ticks() {
        let ty = py(v);
        writeln!(
            out,
            r##"<line x1="{x0:.2}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#e6e6e6" stroke-width="1"/>"##,
            x0 + pw
        )
        .unwrap();
        writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="{FONT}" font-size="11" fill="#444444">{}</text>"##,
            x0 - 8.0,
            ty + 4.0,
            esc(&fmt_tick(v))
        )
        .unwrap();
    }

    // Plot frame.
    writeln!(
        out,
        r##"<rect x="{x0:.2}" y="{y0:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444444" stroke-width="1"/>"##
    )
    .unwrap();

    // Points.
    for &(x, y, class) in &s.points {
        writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{POINT_R}" fill="{}" fill-opacity="0.75"/>"#,
            px(x),
            py(y),
            class.color()
        )
        .unwrap();
    }

    // Overlay curves, clipped to the axes; gaps restart the path.
    for c in &s.curves {
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in &c.pts {
            if s.x.contains(x) && s.y.contains(y) {
                let cmd = if d.is_empty() {
                    "M "
                } else if pen_down {
                    " L "
                } else {
                    " M "
                };
                write!(d, "{cmd}{:.2} {:.2}", px(x), py(y)).unwrap();
                pen_down = true;
            } else {
                pen_down = false;
            }
        }
        if d.is_empty() {
            continue;
        }
        let dash = match c.dash {
            Some(pattern) => format!(r#" stroke-dasharray="{pattern}""#),
            None => String::new(),
        };
        writeln!(
            out,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.8"{dash}/>"#,
            c.color
        )
        .unwrap();
    }

    // Axis labels.
    writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="{FONT}" font-size="12" fill="#222222">{}</text>"##,
        x0 + pw / 2.0,
        h - 10.0,
        esc(&s.x.label)
    )
    .unwrap();
    writeln!(
        out,
        r##"<text transform="translate(14 {:.2}) rotate(-90)" text-anchor="middle" font-family="{FONT}" font-size="12" fill="#222222">{}</text>"##,
        y0 + ph / 2.0,
        esc(&s.y.label)
    )
    .unwrap();

    // Legend: point classes actually present (stable order), then curves.
    let classes: Vec<PointClass> = PointClass::ALL
        .into_iter()
        .filter(|c| s.points.iter().any(|&(_, _, pc)| pc == *c))
        .collect();
    let rows = classes.len() + s.curves.len();
    if rows > 0 {
        let lw = 120.0;
        let lx = x0 + pw - lw - 8.0;
        let ly = y0 + 8.0;
        writeln!(
            out,
            r##"<rect x="{lx:.2}" y="{ly:.2}" width="{lw}" height="{:.2}" fill="#ffffff" fill-opacity="0.85" stroke="#cccccc" stroke-width="1"/>"##,
            rows as f64 * 16.0 + 10.0
        )
        .unwrap();
        let mut row = 0.0;
        for class in &classes {
            let cy = ly + 13.0 + row * 16.0;
            writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{POINT_R}" fill="{}" fill-opacity="0.75"/>"#,
                lx + 12.0,
                cy,
                class.color()
            )
            .unwrap();
            writeln!(
                out,
                r##"<text x="{:.2}" y="{:.2}" font-family="{FONT}" font-size="11" fill="#222222">{}</text>"##,
                lx + 22.0,
                cy + 4.0,
                class.label()
            )
            .unwrap();
            row += 1.0;
        }
        for c in &s.curves {
            let cy = ly + 13.0 + row * 16.0;
            let dash = match c.dash {
                Some(pattern) => format!(r#" stroke-dasharray="{pattern}""#),
                None => String::new(),
            };
            writeln!(
                out,
                r#"<line x1="{:.2}" y1="{cy:.2}" x2="{:.2}" y2="{cy:.2}" stroke="{}" stroke-width="1.8"{dash}/>"#,
                lx + 6.0,
                lx + 18.0,
                c.color
            )
            .unwrap();
            writeln!(
                out,
                r##"<text x="{:.2}" y="{:.2}" font-family="{FONT}" font-size="11" fill="#222222">{}</text>"##,
                lx + 22.0,
                cy + 4.0,
                esc(c.label)
            )
            .unwrap();
            row += 1.0;
        }
    }

    // Footer stamp.
    writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="{FONT}" font-size="10" fill="#666666">{}</text>"##,
        w - 8.0,
        h - 6.0,
        esc(&s.footer)
    )
    .unwrap();
    svg.push_str("</svg>\n");
    svg
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
