//! Static SVG charts: trade-off curves, shape functions, importance
//! box/strip plots and correlation heatmaps. Every chart is built from the
//! CSV files the rest of the crate writes, so any external tool can consume
//! the same inputs.
//!
//! Output is deterministic: coordinates are printed with fixed precision and
//! the only randomness (strip jitter) comes from a fixed-seed stream.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sweep::quantile;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const JITTER_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy)]
struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn standard(x0: f64, y0: f64, w: f64, h: f64) -> Self {
        Self {
            left: x0 + 64.0,
            top: y0 + 36.0,
            width: w - 84.0,
            height: h - 86.0,
        }
    }

    fn right(&self) -> f64 {
        self.left + self.width
    }

    fn bottom(&self) -> f64 {
        self.top + self.height
    }
}

#[derive(Debug, Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, a, b }
    }

    fn map(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// About `n` round tick values covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / n.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Five-anchor approximation of the viridis colormap, `t` in `[0, 1]`.
fn viridis(t: f64) -> String {
    const ANCHORS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = t.clamp(0.0, 1.0) * 4.0;
    let i = (t.floor() as usize).min(3);
    let f = t - i as f64;
    let (a, b) = (ANCHORS[i], ANCHORS[i + 1]);
    let mix = |x: f64, y: f64| (x + f * (y - x)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Blue-white-red for values in `[-1, 1]`.
fn diverging(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v >= 0.0 {
        (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
    } else {
        (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

struct Svg {
    buf: String,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            buf,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(buf, r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#);
        Self { buf }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        let _ = writeln!(self.buf, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {style}/>"#);
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, attrs: &str) {
        let _ = writeln!(self.buf, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" {attrs}/>"#);
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, attrs: &str) {
        let _ = writeln!(self.buf, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.1}" {attrs}/>"#);
    }

    fn polyline(&mut self, pts: &[(f64, f64)], attrs: &str) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(self.buf, r#"<polyline points="{}" fill="none" {attrs}/>"#, coords.join(" "));
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, extra: &str, s: &str) {
        let _ = writeln!(
            self.buf,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" {extra}>{}</text>"#,
            escape(s)
        );
    }

    fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

/// Axes box, ticks and labels. `x_ticks` carries `(value, label)` pairs.
fn axes(svg: &mut Svg, f: &Frame, xs: &Scale, ys: &Scale, x_ticks: &[(f64, String)], title: &str, xlabel: &str, ylabel: &str) {
    svg.rect(f.left, f.top, f.width, f.height, r##"fill="none" stroke="#333" class="axes""##);
    for (v, label) in x_ticks {
        let x = xs.map(*v);
        svg.line(x, f.bottom(), x, f.bottom() + 4.0, r##"stroke="#333""##);
        svg.text(x, f.bottom() + 16.0, "middle", "", label);
    }
    for v in nice_ticks(ys.lo, ys.hi, 5) {
        let y = ys.map(v);
        svg.line(f.left - 4.0, y, f.left, y, r##"stroke="#333""##);
        svg.line(f.left, y, f.right(), y, r##"stroke="#eee""##);
        svg.text(f.left - 6.0, y + 4.0, "end", "", &fmt_tick(v));
    }
    svg.text(f.left + f.width / 2.0, f.top - 12.0, "middle", r#"font-size="13""#, title);
    svg.text(f.left + f.width / 2.0, f.bottom() + 34.0, "middle", "", xlabel);
    let (cx, cy) = (f.left - 46.0, f.top + f.height / 2.0);
    svg.text(cx, cy, "middle", &format!(r#"transform="rotate(-90 {cx:.2} {cy:.2})""#), ylabel);
}

fn linear_ticks(s: &Scale) -> Vec<(f64, String)> {
    nice_ticks(s.lo, s.hi, 6).into_iter().map(|v| (v, fmt_tick(v))).collect()
}

fn no_data(svg: &mut Svg, f: &Frame) {
    svg.text(f.left + f.width / 2.0, f.top + f.height / 2.0, "middle", r##"class="no-data" fill="#888" font-size="14""##, "no data");
}

/// A parsed CSV: header names and data rows with their 1-based line numbers.
struct Table {
    what: &'static str,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    fn parse(text: &str, what: &'static str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| Error::Schema(format!("{what}: header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Schema(format!("{what}: row {}: {e}", i + 1)))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self { what, header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column '{name}'", self.what)))
    }

    fn num(&self, line: u64, row: &[String], col: usize) -> Result<f64> {
        let raw = row[col].trim();
        raw.parse::<f64>().map_err(|_| {
            Error::Schema(format!(
                "{}: row {line}: column '{}' is not a number: '{raw}'",
                self.what, self.header[col]
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rec {
    lambda: f64,
    fit: f64,
    rperp: f64,
}

fn parse_records(csv_text: &str) -> Result<Vec<Rec>> {
    let t = Table::parse(csv_text, "sweep records")?;
    let (l, f, r) = (t.col("lambda")?, t.col("fit")?, t.col("rperp")?);
    t.rows
        .iter()
        .map(|(line, row)| {
            let lambda = t.num(*line, row, l)?;
            if lambda < 0.0 {
                return Err(Error::Schema(format!("sweep records: row {line}: negative lambda")));
            }
            Ok(Rec {
                lambda,
                fit: t.num(*line, row, f)?,
                rperp: t.num(*line, row, r)?,
            })
        })
        .collect()
}

/// Distinct λ values (ascending) and per-λ means of `(rperp, fit)`.
fn lambda_means(recs: &[Rec]) -> Vec<(f64, f64, f64)> {
    let mut groups: Vec<(f64, Vec<&Rec>)> = Vec::new();
    let mut sorted: Vec<&Rec> = recs.iter().collect();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    for r in sorted {
        match groups.last_mut() {
            Some((l, g)) if *l == r.lambda => g.push(r),
            _ => groups.push((r.lambda, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(l, g)| {
            let n = g.len() as f64;
            (l, g.iter().map(|r| r.rperp).sum::<f64>() / n, g.iter().map(|r| r.fit).sum::<f64>() / n)
        })
        .collect()
}

fn lambda_colors(means: &[(f64, f64, f64)]) -> impl Fn(f64) -> String + '_ {
    move |lambda| {
        let k = means.iter().position(|m| m.0 == lambda).unwrap_or(0);
        let denom = (means.len().max(2) - 1) as f64;
        viridis(k as f64 / denom)
    }
}

fn lambda_legend(svg: &mut Svg, means: &[(f64, f64, f64)], x: f64, y: f64) {
    if means.is_empty() {
        return;
    }
    let color = lambda_colors(means);
    svg.text(x, y - 4.0, "start", "", "lambda");
    let (lo, hi) = (means[0].0, means[means.len() - 1].0);
    let h = 120.0;
    let step = h / means.len() as f64;
    for (k, m) in means.iter().enumerate() {
        svg.rect(x, y + k as f64 * step, 10.0, step, &format!(r#"fill="{}" stroke="none""#, color(m.0)));
    }
    svg.text(x + 14.0, y + 8.0, "start", "", &fmt_tick(lo));
    svg.text(x + 14.0, y + h, "start", "", &fmt_tick(hi));
}

/// Fit against R⊥, one marker per record colored by λ, with the per-λ mean
/// polyline. `records_csv` uses the `lambda,seed,fit,rperp,wallclock_s`
/// layout.
pub fn plot_tradeoff(records_csv: &str, metric: &str) -> Result<String> {
    let recs = parse_records(records_csv)?;
    let mut svg = Svg::new(WIDTH + 70.0, HEIGHT);
    let f = Frame::standard(0.0, 0.0, WIDTH, HEIGHT);
    let xs = {
        let (lo, hi) = padded_range(recs.iter().map(|r| r.rperp));
        Scale::new(lo, hi, f.left, f.right())
    };
    let ys = {
        let (lo, hi) = padded_range(recs.iter().map(|r| r.fit));
        Scale::new(lo, hi, f.bottom(), f.top)
    };
    axes(&mut svg, &f, &xs, &ys, &linear_ticks(&xs), "Trade-off", "validation R⊥", &format!("validation {metric}"));
    if recs.is_empty() {
        no_data(&mut svg, &f);
        return Ok(svg.finish());
    }
    let means = lambda_means(&recs);
    let color = lambda_colors(&means);
    for r in &recs {
        svg.circle(xs.map(r.rperp), ys.map(r.fit), 3.0, &format!(r##"class="marker" fill="{}" fill-opacity="0.8" stroke="#222" stroke-width="0.3""##, color(r.lambda)));
    }
    let pts: Vec<(f64, f64)> = means.iter().map(|m| (xs.map(m.1), ys.map(m.2))).collect();
    svg.polyline(&pts, r##"class="mean" stroke="#d62728" stroke-width="1.5""##);
    lambda_legend(&mut svg, &means, f.right() + 24.0, f.top + 10.0);
    Ok(svg.finish())
}

/// Position of λ on a log axis; λ = 0 sits one decade left of the smallest
/// positive value.
fn lambda_axis(means: &[(f64, f64, f64)]) -> impl Fn(f64) -> f64 {
    let positive: Vec<f64> = means.iter().map(|m| m.0).filter(|l| *l > 0.0).collect();
    let min_log = positive.first().map(|l| l.log10()).unwrap_or(0.0);
    move |l| if l > 0.0 { l.log10() } else { min_log - 1.0 }
}

/// Fit and R⊥ as separate panels against λ (log axis, 0 at the far left).
pub fn plot_verbose(records_csv: &str, metric: &str) -> Result<String> {
    let recs = parse_records(records_csv)?;
    let width = 2.0 * WIDTH;
    let mut svg = Svg::new(width, HEIGHT);
    let means = lambda_means(&recs);
    let pos = lambda_axis(&means);
    let (xlo, xhi) = padded_range(means.iter().map(|m| pos(m.0)));
    let panels: [(&str, String, fn(&Rec) -> f64, usize); 2] = [
        ("Fit", format!("validation {metric}"), |r| r.fit, 2),
        ("Concurvity", "validation R⊥".to_string(), |r| r.rperp, 1),
    ];
    for (k, (title, ylabel, get, mean_idx)) in panels.into_iter().enumerate() {
        let f = Frame::standard(k as f64 * WIDTH, 0.0, WIDTH, HEIGHT);
        let xs = Scale::new(xlo, xhi, f.left, f.right());
        let (ylo, yhi) = padded_range(recs.iter().map(get));
        let ys = Scale::new(ylo, yhi, f.bottom(), f.top);
        let mut ticks: Vec<(f64, String)> = Vec::new();
        if means.iter().any(|m| m.0 == 0.0) {
            ticks.push((pos(0.0), "0".into()));
        }
        let logs: Vec<f64> = means.iter().filter(|m| m.0 > 0.0).map(|m| m.0.log10()).collect();
        if let (Some(first), Some(last)) = (logs.first(), logs.last()) {
            for d in (first.ceil() as i64)..=(last.floor() as i64) {
                ticks.push((d as f64, format!("1e{d}")));
            }
        }
        axes(&mut svg, &f, &xs, &ys, &ticks, title, "lambda", &ylabel);
        if recs.is_empty() {
            no_data(&mut svg, &f);
            continue;
        }
        let color = lambda_colors(&means);
        for r in &recs {
            svg.circle(xs.map(pos(r.lambda)), ys.map(get(r)), 2.5, &format!(r#"class="marker" fill="{}" fill-opacity="0.8""#, color(r.lambda)));
        }
        let pts: Vec<(f64, f64)> = means
            .iter()
            .map(|m| (xs.map(pos(m.0)), ys.map(if mean_idx == 1 { m.1 } else { m.2 })))
            .collect();
        svg.polyline(&pts, r##"class="mean" stroke="#d62728" stroke-width="1.5""##);
    }
    Ok(svg.finish())
}

/// One curve per `(feature, seed)`, keyed by feature in first-seen order.
type Curves = Vec<(String, BTreeMap<u64, Vec<(f64, f64)>>)>;

fn parse_shapes(csv_text: &str) -> Result<Curves> {
    let t = Table::parse(csv_text, "shape grid")?;
    let (fc, sc, xc, vc) = (t.col("feature")?, t.col("seed")?, t.col("x")?, t.col("value")?);
    let mut out: Curves = Vec::new();
    for (line, row) in &t.rows {
        let seed = row[sc]
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Schema(format!("shape grid: row {line}: column 'seed' is not an integer: '{}'", row[sc])))?;
        let (x, v) = (t.num(*line, row, xc)?, t.num(*line, row, vc)?);
        let name = &row[fc];
        let idx = match out.iter().position(|(n, _)| n == name) {
            Some(i) => i,
            None => {
                out.push((name.clone(), BTreeMap::new()));
                out.len() - 1
            }
        };
        out[idx].1.entry(seed).or_default().push((x, v));
    }
    Ok(out)
}

/// Feature columns of a data CSV, for the rug strip.
fn parse_rug(csv_text: &str, names: &[String]) -> Result<BTreeMap<String, Vec<f64>>> {
    let t = Table::parse(csv_text, "rug data")?;
    let mut out = BTreeMap::new();
    for name in names {
        if let Ok(c) = t.col(name) {
            let vals = t.rows.iter().map(|(line, row)| t.num(*line, row, c)).collect::<Result<Vec<_>>>()?;
            out.insert(name.clone(), vals);
        }
    }
    Ok(out)
}

const RUG_MAX: usize = 400;

/// Shape functions, one panel per feature: a thin line per seed and the
/// pointwise mean across seeds (by grid position) in bold. `shapes_csv` has
/// columns `feature,seed,x,value`. With `data_csv`, a rug strip of the
/// observed feature values is drawn under each panel.
pub fn plot_shapes(shapes_csv: &str, data_csv: Option<&str>) -> Result<String> {
    let curves = parse_shapes(shapes_csv)?;
    let names: Vec<String> = curves.iter().map(|c| c.0.clone()).collect();
    let rug = match data_csv {
        Some(text) => parse_rug(text, &names)?,
        None => BTreeMap::new(),
    };
    let cols = curves.len().clamp(1, 3);
    let rows = curves.len().div_ceil(3).max(1);
    let (pw, ph) = (360.0, 280.0);
    let mut svg = Svg::new(pw * cols as f64, ph * rows as f64);
    if curves.is_empty() {
        let f = Frame::standard(0.0, 0.0, pw, ph);
        let s = Scale::new(0.0, 1.0, f.left, f.right());
        let ys = Scale::new(0.0, 1.0, f.bottom(), f.top);
        axes(&mut svg, &f, &s, &ys, &linear_ticks(&s), "Shape functions", "x", "contribution");
        no_data(&mut svg, &f);
        return Ok(svg.finish());
    }
    for (k, (name, seeds)) in curves.iter().enumerate() {
        let f = Frame::standard((k % 3) as f64 * pw, (k / 3) as f64 * ph, pw, ph);
        let all = seeds.values().flatten();
        let (xlo, xhi) = padded_range(all.clone().map(|p| p.0));
        let (ylo, yhi) = padded_range(all.map(|p| p.1));
        let xs = Scale::new(xlo, xhi, f.left, f.right());
        let ys = Scale::new(ylo, yhi, f.bottom(), f.top);
        axes(&mut svg, &f, &xs, &ys, &linear_ticks(&xs), name, name, "contribution");
        for pts in seeds.values() {
            let mapped: Vec<(f64, f64)> = pts.iter().map(|(x, v)| (xs.map(*x), ys.map(*v))).collect();
            svg.polyline(&mapped, r##"class="seed" stroke="#1f77b4" stroke-opacity="0.35" stroke-width="1""##);
        }
        let len = seeds.values().map(Vec::len).min().unwrap_or(0);
        let n = seeds.len() as f64;
        let mean: Vec<(f64, f64)> = (0..len)
            .map(|i| {
                let x = seeds.values().map(|p| p[i].0).sum::<f64>() / n;
                let v = seeds.values().map(|p| p[i].1).sum::<f64>() / n;
                (xs.map(x), ys.map(v))
            })
            .collect();
        svg.polyline(&mean, r##"class="mean" stroke="#d62728" stroke-width="2""##);
        if let Some(vals) = rug.get(name) {
            let stride = vals.len().div_ceil(RUG_MAX).max(1);
            for v in vals.iter().step_by(stride) {
                if *v >= xs.lo && *v <= xs.hi {
                    let x = xs.map(*v);
                    svg.line(x, f.bottom() - 6.0, x, f.bottom(), r##"class="rug" stroke="#555" stroke-opacity="0.4""##);
                }
            }
        }
    }
    Ok(svg.finish())
}

/// Median, quartiles and 1.5 IQR whisker ends of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let whisker_lo = s.iter().copied().find(|v| *v >= lo_fence).unwrap_or(q1);
    let whisker_hi = s.iter().rev().copied().find(|v| *v <= hi_fence).unwrap_or(q3);
    Some(BoxStats {
        median,
        q1,
        q3,
        whisker_lo,
        whisker_hi,
    })
}

/// Horizontal box plot with a jittered strip of the raw values, one row per
/// feature. `importance_csv` has columns `feature,seed,split,importance`,
/// typically concatenated across seeds.
pub fn plot_importance(importance_csv: &str) -> Result<String> {
    let t = Table::parse(importance_csv, "importance")?;
    let (fc, ic) = (t.col("feature")?, t.col("importance")?);
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (line, row) in &t.rows {
        let v = t.num(*line, row, ic)?;
        match groups.iter_mut().find(|g| g.0 == row[fc]) {
            Some(g) => g.1.push(v),
            None => groups.push((row[fc].clone(), vec![v])),
        }
    }
    let row_h = 28.0;
    let height = (groups.len() as f64 * row_h + 90.0).max(HEIGHT * 0.6);
    let mut svg = Svg::new(WIDTH, height);
    let f = Frame {
        left: 110.0,
        top: 36.0,
        width: WIDTH - 130.0,
        height: height - 86.0,
    };
    let (lo, hi) = padded_range(groups.iter().flat_map(|g| g.1.iter().copied()).chain([0.0]));
    let xs = Scale::new(lo.min(0.0), hi, f.left, f.right());
    svg.rect(f.left, f.top, f.width, f.height, r##"fill="none" stroke="#333" class="axes""##);
    for v in nice_ticks(xs.lo, xs.hi, 6) {
        let x = xs.map(v);
        svg.line(x, f.bottom(), x, f.bottom() + 4.0, r##"stroke="#333""##);
        svg.line(x, f.top, x, f.bottom(), r##"stroke="#eee""##);
        svg.text(x, f.bottom() + 16.0, "middle", "", &fmt_tick(v));
    }
    svg.text(f.left + f.width / 2.0, f.top - 12.0, "middle", r#"font-size="13""#, "Feature importance");
    svg.text(f.left + f.width / 2.0, f.bottom() + 34.0, "middle", "", "mean |f_i - mean f_i|");
    if groups.is_empty() {
        no_data(&mut svg, &f);
        return Ok(svg.finish());
    }
    let band = f.height / groups.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
    for (k, (name, vals)) in groups.iter().enumerate() {
        let cy = f.top + (k as f64 + 0.5) * band;
        let half = (band * 0.3).min(10.0);
        svg.text(f.left - 6.0, cy + 4.0, "end", "", name);
        let b = box_stats(vals).expect("group is non-empty");
        svg.line(xs.map(b.whisker_lo), cy, xs.map(b.q1), cy, r##"class="whisker" stroke="#333""##);
        svg.line(xs.map(b.q3), cy, xs.map(b.whisker_hi), cy, r##"class="whisker" stroke="#333""##);
        svg.rect(
            xs.map(b.q1),
            cy - half,
            (xs.map(b.q3) - xs.map(b.q1)).max(0.5),
            2.0 * half,
            r##"class="box" fill="#aec7e8" fill-opacity="0.6" stroke="#333""##,
        );
        svg.line(xs.map(b.median), cy - half, xs.map(b.median), cy + half, r##"class="median" stroke="#d62728" stroke-width="2""##);
        for v in vals {
            let jitter = rng.random_range(-1.0..1.0) * half;
            svg.circle(xs.map(*v), cy + jitter, 2.5, r##"class="point" fill="#333" fill-opacity="0.6""##);
        }
    }
    Ok(svg.finish())
}

/// Heatmap of a square correlation CSV (header row of names, leading name
/// column), blue for -1 through white to red for +1.
pub fn plot_corr(corr_csv: &str, title: &str) -> Result<String> {
    let t = Table::parse(corr_csv, "correlation matrix")?;
    let names: Vec<String> = t.header.iter().skip(1).cloned().collect();
    let p = names.len();
    if t.rows.len() != p {
        return Err(Error::Schema(format!("correlation matrix: {} rows for {p} columns", t.rows.len())));
    }
    let mut values = Vec::with_capacity(p * p);
    for (line, row) in &t.rows {
        if row.len() != p + 1 {
            return Err(Error::Schema(format!("correlation matrix: row {line}: expected {} fields, got {}", p + 1, row.len())));
        }
        for c in 1..=p {
            values.push(t.num(*line, row, c)?);
        }
    }
    let cell = if p == 0 { 40.0 } else { (360.0 / p as f64).clamp(12.0, 60.0) };
    let (left, top) = (110.0, 50.0);
    let side = cell * p.max(1) as f64;
    let mut svg = Svg::new(left + side + 90.0, top + side + 40.0);
    svg.text(left + side / 2.0, 24.0, "middle", r#"font-size="13""#, title);
    if p == 0 {
        let f = Frame {
            left,
            top,
            width: side,
            height: side,
        };
        svg.rect(left, top, side, side, r##"fill="none" stroke="#333" class="axes""##);
        no_data(&mut svg, &f);
        return Ok(svg.finish());
    }
    for i in 0..p {
        let y = top + i as f64 * cell;
        svg.text(left - 6.0, y + cell / 2.0 + 4.0, "end", "", &names[i]);
        for j in 0..p {
            let v = values[i * p + j];
            let x = left + j as f64 * cell;
            svg.rect(x, y, cell, cell, &format!(r##"class="cell" fill="{}" stroke="#fff""##, diverging(v)));
            if cell >= 28.0 {
                let ink = if v.abs() > 0.6 { "#fff" } else { "#000" };
                svg.text(x + cell / 2.0, y + cell / 2.0 + 4.0, "middle", &format!(r#"fill="{ink}" font-size="10""#), &format!("{v:.2}"));
            }
        }
    }
    for (j, name) in names.iter().enumerate() {
        let x = left + j as f64 * cell + cell / 2.0;
        let y = top + side + 14.0;
        svg.text(x, y, "end", &format!(r#"transform="rotate(-45 {x:.2} {y:.2})""#), name);
    }
    let lx = left + side + 20.0;
    for k in 0..=20 {
        let v = 1.0 - k as f64 / 10.0;
        svg.rect(lx, top + k as f64 * 8.0, 12.0, 8.0, &format!(r#"class="legend" fill="{}" stroke="none""#, diverging(v)));
    }
    svg.text(lx + 16.0, top + 8.0, "start", "", "1");
    svg.text(lx + 16.0, top + 88.0, "start", "", "0");
    svg.text(lx + 16.0, top + 168.0, "start", "", "-1");
    Ok(svg.finish())
}
