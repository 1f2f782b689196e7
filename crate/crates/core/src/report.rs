//! Atomic file output, CSV/JSON helpers and minimal deterministic SVG.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Writes `bytes` to `path` through a sibling temporary file and a rename, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// CSV text with a header row; numbers use Rust's shortest round-trip formatting.
#[derive(Clone, Debug, Default)]
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Csv { buf }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: std::fmt::Display,
    {
        let mut first = true;
        for c in cells {
            if !first {
                self.buf.push(',');
            }
            first = false;
            let _ = write!(self.buf, "{c}");
        }
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}

/// Hand-rolled SVG document with fixed-precision coordinates.
#[derive(Clone, Debug)]
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn line(&mut self, a: (f64, f64), b: (f64, f64), stroke: &str, w: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"/>"#,
            fmt(a.0),
            fmt(a.1),
            fmt(b.0),
            fmt(b.1),
            fmt(w)
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, w: f64) {
        let coords: Vec<String> = pts
            .iter()
            .map(|p| format!("{},{}", fmt(p.0), fmt(p.1)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{}"/>"#,
            coords.join(" "),
            fmt(w)
        );
    }

    pub fn circle(&mut self, c: (f64, f64), r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}"/>"#,
            fmt(c.0),
            fmt(c.1),
            fmt(r)
        );
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#,
            fmt(x),
            fmt(y),
            fmt(w),
            fmt(h)
        );
    }

    pub fn text(&mut self, at: (f64, f64), size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="{}" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
            fmt(at.0),
            fmt(at.1),
            fmt(size),
            escape(s)
        );
    }

    pub fn finish(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = fmt(self.width),
            h = fmt(self.height)
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.finish().as_bytes())
    }
}

/// One named curve of a plot.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    /// Draw markers only, no connecting line.
    pub markers_only: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: &str) -> Self {
        Series {
            label: label.into(),
            points,
            color: color.into(),
            markers_only: false,
        }
    }
}

/// Log-log scatter/line plot. Non-positive values are skipped.
pub fn loglog_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> Svg {
    let (w, h, m) = (640.0, 440.0, 60.0);
    let mut svg = Svg::new(w, h);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|p| p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite())
        .map(|p| (p.0.log10(), p.1.log10()))
        .collect();
    svg.text((w / 2.0, 24.0), 16.0, "middle", title);
    svg.text((w / 2.0, h - 12.0), 13.0, "middle", xlabel);
    svg.text((16.0, h / 2.0), 13.0, "middle", ylabel);
    if pts.is_empty() {
        return svg;
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let map = |p: (f64, f64)| {
        (
            m + (p.0 - x0) / (x1 - x0) * (w - 2.0 * m),
            h - m - (p.1 - y0) / (y1 - y0) * (h - 2.0 * m),
        )
    };
    svg.line((m, h - m), (w - m, h - m), "black", 1.0);
    svg.line((m, m), (m, h - m), "black", 1.0);
    for d in (x0.ceil() as i64)..=(x1.floor() as i64) {
        let (px, _) = map((d as f64, y0));
        svg.line((px, h - m), (px, h - m + 5.0), "black", 1.0);
        svg.text((px, h - m + 18.0), 11.0, "middle", &format!("1e{d}"));
    }
    for d in (y0.ceil() as i64)..=(y1.floor() as i64) {
        let (_, py) = map((x0, d as f64));
        svg.line((m - 5.0, py), (m, py), "black", 1.0);
        svg.text((m - 8.0, py + 4.0), 11.0, "end", &format!("1e{d}"));
    }
    for (k, s) in series.iter().enumerate() {
        let mapped: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|p| p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite())
            .map(|p| map((p.0.log10(), p.1.log10())))
            .collect();
        if !s.markers_only && mapped.len() > 1 {
            svg.polyline(&mapped, &s.color, 1.5);
        }
        for &p in &mapped {
            svg.circle(p, 3.0, &s.color);
        }
        let ly = m + 16.0 * k as f64;
        svg.rect(w - m - 150.0, ly - 9.0, 10.0, 10.0, &s.color);
        svg.text((w - m - 135.0, ly), 12.0, "start", &s.label);
    }
    svg
}

/// Line segments in a planar box `[x0, x1] x [y0, y1]`, drawn in a square canvas.
pub fn segments_plot(title: &str, bounds: [f64; 4], segments: &[[f64; 4]], color: &str) -> Svg {
    let (size, m) = (520.0, 30.0);
    let mut svg = Svg::new(size, size + 20.0);
    svg.text((size / 2.0, 18.0), 14.0, "middle", title);
    let [x0, x1, y0, y1] = bounds;
    let sx = (size - 2.0 * m) / (x1 - x0);
    let sy = (size - 2.0 * m) / (y1 - y0);
    let map = |x: f64, y: f64| (m + (x - x0) * sx, 20.0 + size - m - (y - y0) * sy);
    let (a, b) = (map(x0, y0), map(x1, y1));
    svg.polyline(&[a, (b.0, a.1), b, (a.0, b.1), a], "gray", 1.0);
    for s in segments {
        svg.line(map(s[0], s[1]), map(s[2], s[3]), color, 1.0);
    }
    svg
}
