//! Minimal SVG rendering of the CSV files. The schema is recognised from the
//! header row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cdrlab_core::analysis::{local_minima, SweepCurve, SweepPoint};
use cdrlab_core::export::{CONTROL_HEADER, CROSSINGS_HEADER, EYE_HEADER, ORACLE_HEADER, SWEEP_HEADER};

use crate::CliError;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;
const MAX_LINE_POINTS: usize = 4000;
const MINIMA_HALF_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Sweep,
    Eye,
    Control,
    Crossings,
    Oracle,
}

impl Schema {
    pub fn detect(header: &str) -> Option<Schema> {
        let h = header.trim();
        [
            (SWEEP_HEADER, Schema::Sweep),
            (EYE_HEADER, Schema::Eye),
            (CONTROL_HEADER, Schema::Control),
            (CROSSINGS_HEADER, Schema::Crossings),
            (ORACLE_HEADER, Schema::Oracle),
        ]
        .into_iter()
        .find(|(text, _)| *text == h)
        .map(|(_, s)| s)
    }
}

/// Numeric table; empty fields are `None`, booleans map to 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: Schema,
    pub title: String,
    pub rows: Vec<Vec<Option<f64>>>,
}

pub fn parse_csv(text: &str) -> Result<Table, CliError> {
    let mut title = String::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut header = None;
    for (_, line) in lines.by_ref() {
        if let Some(c) = line.strip_prefix('#') {
            if title.is_empty() {
                title = c.trim().to_string();
            }
        } else {
            header = Some(line);
            break;
        }
    }
    let header = header.ok_or_else(|| CliError::Config("input has no header row".into()))?;
    let schema = Schema::detect(header)
        .ok_or_else(|| CliError::Config(format!("unrecognised CSV header `{}`", header.trim())))?;
    let cols = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(CliError::Config(format!(
                "line {}: expected {cols} fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let row = fields
            .iter()
            .map(|f| match f.trim() {
                "" => Ok(None),
                "true" => Ok(Some(1.0)),
                "false" => Ok(Some(0.0)),
                s => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| CliError::Config(format!("line {}: `{s}` is not a number", i + 1))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Config("input has no data rows".into()));
    }
    Ok(Table { schema, title, rows })
}

/// Round tick positions covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

/// One set of axes at vertical offset `top`.
struct Panel {
    top: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        self.top + MARGIN_TOP + h - (y - self.y.0) / (self.y.1 - self.y.0) * h
    }

    fn axes(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (x0, x1) = (self.px(self.x.0), self.px(self.x.1));
        let (y0, y1) = (self.py(self.y.0), self.py(self.y.1));
        let _ = writeln!(
            svg,
            r##"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y0 - y1
        );
        for t in nice_ticks(self.x.0, self.x.1, 8) {
            let p = self.px(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{p:.1}" y1="{y0:.1}" x2="{p:.1}" y2="{:.1}" stroke="#333"/><text x="{p:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                y0 + 5.0,
                y0 + 18.0,
                tick_label(t)
            );
        }
        for t in nice_ticks(self.y.0, self.y.1, 6) {
            let p = self.py(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.1}" y1="{p:.1}" x2="{x0:.1}" y2="{p:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                x0 - 5.0,
                x0 - 8.0,
                p + 4.0,
                tick_label(t)
            );
        }
        let mid_x = (x0 + x1) / 2.0;
        let mid_y = (y0 + y1) / 2.0;
        let _ = writeln!(
            svg,
            r#"<text x="{mid_x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 40.0,
            escape(xlabel)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate({:.1},{mid_y:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT - 60.0,
            escape(ylabel)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{mid_x:.1}" y="{:.1}" text-anchor="middle" font-weight="bold">{}</text>"#,
            self.top + MARGIN_TOP - 12.0,
            escape(title)
        );
    }

    fn polyline(&self, svg: &mut String, pts: &[(f64, f64)], color: &str) {
        let stride = pts.len().div_ceil(MAX_LINE_POINTS).max(1);
        let mut d = String::new();
        for (x, y) in pts.iter().step_by(stride) {
            let _ = write!(d, "{:.2},{:.2} ", self.px(*x), self.py(*y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
            d.trim_end()
        );
    }
}

fn document(panels: usize, body: &str) -> String {
    let height = PANEL_HEIGHT * panels as f64;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

fn column(t: &Table, i: usize) -> impl Iterator<Item = Option<f64>> + '_ {
    t.rows.iter().map(move |r| r[i])
}

fn pairs(t: &Table, x: usize, y: usize) -> Vec<(f64, f64)> {
    t.rows.iter().filter_map(|r| Some((r[x]?, r[y]?))).collect()
}

fn render_sweep(t: &Table) -> String {
    let pts = pairs(t, 0, 2);
    let p = Panel {
        top: 0.0,
        x: range(column(t, 0).flatten()),
        y: range(pts.iter().map(|p| p.1).chain([0.0])),
    };
    let mut svg = String::new();
    p.axes(
        &mut svg,
        &t.title,
        "edge-sampler offset (mV)",
        "recovered-clock jitter pk-pk (% UI)",
    );
    p.polyline(&mut svg, &pts, "#1f5fa8");
    for (x, y) in &pts {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="#1f5fa8"/>"##,
            p.px(*x),
            p.py(*y)
        );
    }
    let curve = SweepCurve {
        points: t
            .rows
            .iter()
            .filter_map(|r| {
                Some(SweepPoint {
                    v_off: r[0]?,
                    effective_threshold: r[1].unwrap_or(f64::NAN),
                    pk_pk_ui: r[2],
                    locked: r[2].is_some(),
                })
            })
            .collect(),
    };
    for v in local_minima(&curve, MINIMA_HALF_WINDOW) {
        let Some(y) = curve.at(v).and_then(|q| q.pk_pk_ui) else { continue };
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.1}" cy="{:.1}" r="6" fill="none" stroke="#c0392b" stroke-width="1.5"/><text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#c0392b">min {}</text>"##,
            p.px(v),
            p.py(y),
            p.px(v),
            p.py(y) - 10.0,
            tick_label(v)
        );
    }
    for x in t.rows.iter().filter(|r| r[2].is_none()).filter_map(|r| r[0]) {
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#c0392b">x</text>"##,
            p.px(x),
            p.py(p.y.0) - 4.0
        );
    }
    document(1, &svg)
}

fn render_crossings(t: &Table) -> String {
    let n = t.rows.len().max(1) as f64;
    let p = Panel {
        top: 0.0,
        x: (0.0, 1.0),
        y: range(column(t, 1).flatten().chain([0.0])),
    };
    let mut svg = String::new();
    p.axes(&mut svg, &t.title, "crossing phase (UI)", "crossings per bin");
    let bw = (p.px(1.0 / n) - p.px(0.0)).max(0.5);
    for (x, c) in pairs(t, 0, 1) {
        let top = p.py(c);
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{top:.2}" width="{bw:.2}" height="{:.2}" fill="#1f5fa8"/>"##,
            p.px(x) - bw / 2.0,
            p.py(0.0) - top
        );
    }
    document(1, &svg)
}

fn render_oracle(t: &Table) -> String {
    let pts = pairs(t, 0, 1);
    let peak = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    // zoom onto the visible part of the distribution
    let shown = pts.iter().filter(|p| p.1 >= 1e-4 * peak).map(|p| p.0);
    let (lo, hi) = range(shown);
    let pad = (hi - lo) * 0.25;
    let x = (lo - pad, hi + pad);
    let inside: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.0 >= x.0 && p.0 <= x.1).collect();
    let p = Panel {
        top: 0.0,
        x,
        y: (0.0, if peak > 0.0 { peak * 1.05 } else { 1.0 }),
    };
    let mut svg = String::new();
    p.axes(&mut svg, &t.title, "edge phase (UI)", "stationary probability");
    p.polyline(&mut svg, &inside, "#1f5fa8");
    document(1, &svg)
}

fn render_control(t: &Table) -> String {
    let mut svg = String::new();
    let series = [
        (1, "loop-filter voltage v_c (V)", "#1f5fa8"),
        (2, "tracked threshold v_th_fb (V)", "#c0392b"),
    ];
    for (k, (col, label, color)) in series.iter().enumerate() {
        let pts = pairs(t, 0, *col);
        let p = Panel {
            top: k as f64 * PANEL_HEIGHT,
            x: range(pts.iter().map(|p| p.0)),
            y: range(pts.iter().map(|p| p.1)),
        };
        let title = if k == 0 { t.title.as_str() } else { "" };
        p.axes(&mut svg, title, "time (s)", label);
        p.polyline(&mut svg, &pts, color);
    }
    document(series.len(), &svg)
}

fn cell_size(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn render_eye(t: &Table) -> String {
    let dx = cell_size(column(t, 0).flatten());
    let dy = cell_size(column(t, 1).flatten());
    let (dx, dy) = (
        if dx.is_finite() { dx } else { 1.0 },
        if dy.is_finite() { dy } else { 1.0 },
    );
    let (x0, x1) = range(column(t, 0).flatten());
    let (y0, y1) = range(column(t, 1).flatten());
    let p = Panel {
        top: 0.0,
        x: (x0 - dx / 2.0, x1 + dx / 2.0),
        y: (y0 - dy / 2.0, y1 + dy / 2.0),
    };
    let max_hits = column(t, 2).flatten().fold(0.0, f64::max).max(1.0);
    let mut svg = String::new();
    p.axes(&mut svg, &t.title, "time (UI)", "voltage (mV)");
    let w = (p.px(dx) - p.px(0.0)).abs();
    let h = (p.py(0.0) - p.py(dy)).abs();
    for r in &t.rows {
        let (Some(x), Some(y), Some(n)) = (r[0], r[1], r[2]) else {
            continue;
        };
        let alpha = (1.0 + n).ln() / (1.0 + max_hits).ln();
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" fill="#1f5fa8" fill-opacity="{alpha:.3}"/>"##,
            p.px(x - dx / 2.0),
            p.py(y + dy / 2.0)
        );
    }
    document(1, &svg)
}

pub fn render(t: &Table) -> String {
    match t.schema {
        Schema::Sweep => render_sweep(t),
        Schema::Eye => render_eye(t),
        Schema::Control => render_control(t),
        Schema::Crossings => render_crossings(t),
        Schema::Oracle => render_oracle(t),
    }
}

pub fn plot_file(input: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(input).map_err(|e| CliError::Io(format!("{}: {e}", input.display())))?;
    let table = parse_csv(&text)?;
    let svg = render(&table);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(out, svg).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    println!("schema={:?}", table.schema);
    Ok(())
}
