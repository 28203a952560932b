//! Minimal SVG line charts with shaded bands.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub color: String,
    pub dashed: bool,
    /// Draw markers only.
    pub points: bool,
}

impl Series {
    pub fn line(name: &str, xs: Vec<f64>, ys: Vec<f64>, color: &str) -> Self {
        Self {
            name: name.into(),
            xs,
            ys,
            color: color.into(),
            dashed: false,
            points: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Band {
    pub xs: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub color: String,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
    /// Custom x tick labels; numeric ticks otherwise.
    pub x_ticks: Option<Vec<(f64, String)>>,
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const ML: f64 = 64.0;
const MR: f64 = 130.0;
const MT: f64 = 32.0;
const MB: f64 = 48.0;

/// Round tick positions covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        let mut add = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        };
        for s in &self.series {
            s.xs.iter().zip(&s.ys).for_each(|(x, y)| add(*x, *y));
        }
        for b in &self.bands {
            for i in 0..b.xs.len() {
                add(b.xs[i], b.lo[i]);
                add(b.xs[i], b.hi[i]);
            }
        }
        if !xmin.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if xmax == xmin {
            xmin -= 0.5;
            xmax += 0.5;
        }
        let pad = if ymax > ymin { 0.05 * (ymax - ymin) } else { 0.5 * ymax.abs().max(1.0) };
        (xmin, xmax, ymin - pad, ymax + pad)
    }

    /// SVG fragment of size `W x H` (without the outer element).
    fn body(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let pw = W - ML - MR;
        let ph = H - MT - MB;
        let sx = |x: f64| ML + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MT + (y1 - y) / (y1 - y0) * ph;
        let mut s = String::new();
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            ML + pw / 2.0,
            escape(&self.title)
        );
        // grid and ticks
        for t in nice_ticks(y0, y1, 6) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{ML}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"##,
                ML + pw,
                ML - 4.0,
                y + 3.0,
                fmt_tick(t)
            );
        }
        let xt: Vec<(f64, String)> = match &self.x_ticks {
            Some(t) => t.clone(),
            None => nice_ticks(x0, x1, 6).into_iter().map(|v| (v, fmt_tick(v))).collect(),
        };
        for (v, label) in xt {
            let x = sx(v);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                MT + ph,
                MT + ph + 4.0,
                MT + ph + 16.0,
                escape(&label)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{ML}" y="{MT}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
            ML + pw / 2.0,
            H - 8.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{:.2}" text-anchor="middle" font-size="11" transform="rotate(-90 14 {:.2})">{}</text>"#,
            MT + ph / 2.0,
            MT + ph / 2.0,
            escape(&self.y_label)
        );
        for b in &self.bands {
            let mut pts: Vec<String> = (0..b.xs.len())
                .filter(|&i| b.lo[i].is_finite() && b.hi[i].is_finite())
                .map(|i| format!("{:.2},{:.2}", sx(b.xs[i]), sy(b.hi[i])))
                .collect();
            pts.extend(
                (0..b.xs.len())
                    .rev()
                    .filter(|&i| b.lo[i].is_finite() && b.hi[i].is_finite())
                    .map(|i| format!("{:.2},{:.2}", sx(b.xs[i]), sy(b.lo[i]))),
            );
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" "),
                b.color
            );
        }
        for (i, ser) in self.series.iter().enumerate() {
            let pts: Vec<(f64, f64)> = ser
                .xs
                .iter()
                .zip(&ser.ys)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| (sx(*x), sy(*y)))
                .collect();
            if ser.points {
                for (x, y) in &pts {
                    let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="{}"/>"#, ser.color);
                }
            } else {
                let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let dash = if ser.dashed { r#" stroke-dasharray="5,3""# } else { "" };
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.3"{dash}/>"#,
                    d.join(" "),
                    ser.color
                );
            }
            let ly = MT + 12.0 + 16.0 * i as f64;
            let lx = ML + pw + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
                lx + 16.0,
                ser.color,
                lx + 20.0,
                ly + 3.0,
                escape(&ser.name)
            );
        }
        s
    }

    pub fn render(&self) -> String {
        render_grid(std::slice::from_ref(self), 1)
    }
}

/// Several charts tiled row-major into one document.
pub fn render_grid(charts: &[Chart], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = charts.len().div_ceil(cols).max(1);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\">\n",
        W * cols as f64,
        H * rows as f64
    );
    for (i, c) in charts.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<g transform="translate({},{})">"#,
            W * (i % cols) as f64,
            H * (i / cols) as f64
        );
        s.push_str(&c.body());
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
