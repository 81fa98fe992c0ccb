use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::AudioBuffer;
use crate::error::{Error, Result};

const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Sample range `[round(start·rate), round(end·rate))`.
pub fn window_range(len: usize, rate: u32, start_s: f64, end_s: f64) -> Result<std::ops::Range<usize>> {
    if !(start_s >= 0.0 && end_s > start_s && end_s.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad window [{start_s}, {end_s}] s")));
    }
    let a = (start_s * rate as f64).round() as usize;
    let b = (end_s * rate as f64).round() as usize;
    if b > len || a >= b {
        return Err(Error::InvalidArgument(format!(
            "window [{start_s}, {end_s}] s is outside the {:.3} s signal",
            len as f64 / rate as f64
        )));
    }
    Ok(a..b)
}

/// Writes an SVG overlaying `truth` (blue) and `prediction` (red) over the
/// window, plus `<svg stem>.tsv` with the plotted samples. Returns the TSV
/// path.
pub fn plot_comparison(
    truth: &AudioBuffer,
    prediction: &AudioBuffer,
    start_s: f64,
    end_s: f64,
    svg_path: &Path,
) -> Result<PathBuf> {
    if truth.len() != prediction.len() || truth.sample_rate != prediction.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "signals differ: {} samples @ {} Hz vs {} samples @ {} Hz",
            truth.len(),
            truth.sample_rate,
            prediction.len(),
            prediction.sample_rate
        )));
    }
    let rate = truth.sample_rate;
    let range = window_range(truth.len(), rate, start_s, end_s)?;
    let t = &truth.samples[range.clone()];
    let p = &prediction.samples[range.clone()];

    let lo = t.iter().chain(p).copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().chain(p).copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let n = t.len();
    let x_of = |i: usize| MARGIN_LEFT + plot_w * i as f64 / (n.max(2) - 1) as f64;
    let y_of = |v: f64| MARGIN_TOP + plot_h * (hi - v) / (hi - lo);
    let polyline = |s: &[f64]| -> String {
        let mut pts = String::with_capacity(s.len() * 16);
        for (i, &v) in s.iter().enumerate() {
            let _ = write!(pts, "{:.2},{:.2} ", x_of(i), y_of(v));
        }
        pts.trim_end().to_string()
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let x_axis = MARGIN_TOP + plot_h;
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_LEFT}" y1="{x_axis}" x2="{}" y2="{x_axis}" stroke="black"/>"#,
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{x_axis}" stroke="black"/>"#
    );
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let x = MARGIN_LEFT + plot_w * frac;
        let secs = start_s + (end_s - start_s) * frac;
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" font-size="12" text-anchor="middle">{secs:.3}</text>"#,
            x_axis + 18.0
        );
        let y = MARGIN_TOP + plot_h * frac;
        let amp = hi - (hi - lo) * frac;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{y:.1}" font-size="12" text-anchor="end">{amp:.3}</text>"#,
            MARGIN_LEFT - 6.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">time (s)</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" font-size="14" text-anchor="middle" transform="rotate(-90 16 {:.1})">amplitude</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<polyline id="truth" fill="none" stroke="blue" stroke-width="1" points="{}"/>"#,
        polyline(t)
    );
    let _ = writeln!(
        svg,
        r#"<polyline id="prediction" fill="none" stroke="red" stroke-width="1" points="{}"/>"#,
        polyline(p)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" font-size="12" fill="blue">ground truth</text>"#,
        MARGIN_LEFT + 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" font-size="12" fill="red">prediction</text>"#,
        MARGIN_LEFT + 110.0
    );
    svg.push_str("</svg>\n");

    if let Some(dir) = svg_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(svg_path, svg).map_err(|e| Error::io(svg_path, e))?;

    let mut tsv = String::from("sample\ttime_s\ttruth\tprediction\n");
    for (k, i) in range.enumerate() {
        let _ = writeln!(tsv, "{i}\t{:.6}\t{}\t{}", i as f64 / rate as f64, t[k], p[k]);
    }
    let tsv_path = svg_path.with_extension("tsv");
    std::fs::write(&tsv_path, tsv).map_err(|e| Error::io(&tsv_path, e))?;
    Ok(tsv_path)
}
