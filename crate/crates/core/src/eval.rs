//! Aggregation of per-instance Chamfer distances into per-class tables and
//! cumulative error curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{MendError, Result};

/// Scale at which Chamfer distances are displayed.
pub const DISPLAY_SCALE: f64 = 1e4;
/// Mean over median above which a class is flagged as outlier-dominated.
pub const OUTLIER_RATIO: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    InferenceOnly,
    WithTtt,
    Baseline,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::InferenceOnly, Method::WithTtt, Method::Baseline];

    pub fn tag(self) -> &'static str {
        match self {
            Method::InferenceOnly => "inference-only",
            Method::WithTtt => "with-ttt",
            Method::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| MendError::Data(format!("unknown method tag `{}`", s)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub class: String,
    pub method: Method,
    pub cd: f64,
    pub cd_restoration: Option<f64>,
    pub wall_seconds: f64,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.cd >= 0.0) || self.cd_restoration.is_some_and(|c| !(c >= 0.0)) {
            return Err(MendError::Data(format!("invalid Chamfer distance for {}", self.id)));
        }
        Ok(())
    }
}

pub const RECORDS_HEADER: &str = "id,class,method,cd,cd_restoration,wall_seconds";

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{}", RECORDS_HEADER).unwrap();
    for r in records {
        let rest = r.cd_restoration.map(|v| format!("{:e}", v)).unwrap_or_default();
        writeln!(out, "{},{},{},{:e},{},{:.3}", r.id, r.class, r.method.tag(), r.cd, rest, r.wall_seconds).unwrap();
    }
    fs::write(path, out).map_err(|e| MendError::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = fs::read_to_string(path).map_err(|e| MendError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(RECORDS_HEADER) {
        return Err(MendError::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: "unexpected records header".into(),
        });
    }
    let bad = |line: usize, what: &str| MendError::Format {
        path: path.to_path_buf(),
        offset: line as u64,
        message: format!("line {}: {}", line, what),
    };
    let mut records = Vec::new();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(k + 2, "expected 6 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(k + 2, "bad number"));
        let r = EvalRecord {
            id: f[0].to_string(),
            class: f[1].to_string(),
            method: Method::parse(f[2])?,
            cd: num(f[3])?,
            cd_restoration: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            wall_seconds: num(f[5])?,
        };
        r.validate()?;
        records.push(r);
    }
    Ok(records)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median with the midpoint rule for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub class: String,
    pub method: Method,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub mean_restoration: Option<f64>,
    pub median_restoration: Option<f64>,
}

impl Summary {
    pub fn outlier_dominated(&self) -> bool {
        self.median > 0.0 && self.mean / self.median > OUTLIER_RATIO
    }
}

/// Mean and median per (class, method), ordered by class then method.
pub fn aggregate(records: &[EvalRecord]) -> Vec<Summary> {
    let mut groups: BTreeMap<(String, Method), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.class.clone(), r.method)).or_default().push(r);
    }
    groups
        .into_iter()
        .filter_map(|((class, method), rs)| {
            if rs.is_empty() {
                warn!("no records for {} / {}", class, method.tag());
                return None;
            }
            let cds: Vec<f64> = rs.iter().map(|r| r.cd).collect();
            let rest: Vec<f64> = rs.iter().filter_map(|r| r.cd_restoration).collect();
            let complete = rest.len() == rs.len();
            Some(Summary {
                class,
                method,
                count: rs.len(),
                mean: mean(&cds),
                median: median(&cds),
                mean_restoration: complete.then(|| mean(&rest)),
                median_restoration: complete.then(|| median(&rest)),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

/// Share of values at or below each of `n` thresholds spaced
/// logarithmically from the smallest to the largest value.
pub fn cumulative_curve(values: &[f64], n: usize) -> Result<CumulativeCurve> {
    if values.is_empty() {
        return Err(MendError::Parameter("cumulative curve of no values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let n = n.max(2);
    let thresholds: Vec<f64> = if lo == hi {
        vec![lo; n]
    } else if lo > 0.0 {
        let (a, b) = (lo.ln(), hi.ln());
        (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
    } else {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let mut thresholds = thresholds;
    thresholds[0] = lo;
    thresholds[n - 1] = hi;
    let fractions = thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&v| v <= t) as f64 / sorted.len() as f64)
        .collect();
    Ok(CumulativeCurve { thresholds, fractions })
}

pub const REPORT_HEADER: &str = "class,method,statistic,count,cd_x1e4,cd_restoration_x1e4,outlier_dominated";

pub fn report_csv(summaries: &[Summary]) -> String {
    let mut out = String::new();
    writeln!(out, "{}", REPORT_HEADER).unwrap();
    let fmt = |v: Option<f64>| v.map(|v| format!("{:.4}", v * DISPLAY_SCALE)).unwrap_or_default();
    for s in summaries {
        for (stat, v, r) in [
            ("mean", s.mean, s.mean_restoration),
            ("median", s.median, s.median_restoration),
        ] {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.class,
                s.method.tag(),
                stat,
                s.count,
                fmt(Some(v)),
                fmt(r),
                s.outlier_dominated()
            )
            .unwrap();
        }
    }
    out
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Cumulative curves of one class on a logarithmic CD axis, one polyline
/// per method.
pub fn curves_svg(class: &str, curves: &[(Method, CumulativeCurve)]) -> String {
    let all: Vec<f64> = curves
        .iter()
        .flat_map(|(_, c)| c.thresholds.iter().copied())
        .filter(|&v| v > 0.0)
        .map(|v| v * DISPLAY_SCALE)
        .collect();
    let mut lo = all.iter().copied().fold(f64::INFINITY, f64::min).log10();
    let mut hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max).log10();
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let (pw, ph) = (SVG_W - 2.0 * PAD, SVG_H - 2.0 * PAD);
    let x_of = |v: f64| PAD + pw * ((v * DISPLAY_SCALE).max(1e-300).log10().clamp(lo, hi) - lo) / (hi - lo);
    let y_of = |f: f64| SVG_H - PAD - ph * f;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        SVG_W, SVG_H, SVG_W, SVG_H
    )
    .unwrap();
    writeln!(s, r#"<rect width="{}" height="{}" fill="white"/>"#, SVG_W, SVG_H).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#,
        SVG_W / 2.0,
        xml_escape(class)
    )
    .unwrap();
    writeln!(
        s,
        r#"<path d="M{p} {t} L{p} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        p = PAD,
        t = PAD,
        b = SVG_H - PAD,
        r = SVG_W - PAD
    )
    .unwrap();
    for d in (lo.ceil() as i32)..=(hi.floor() as i32) {
        let x = PAD + pw * (d as f64 - lo) / (hi - lo);
        writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="11">1e{}</text>"#,
            x,
            SVG_H - PAD + 16.0,
            d
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">Chamfer distance x 1e-4</text>"#,
        SVG_W / 2.0,
        SVG_H - 15.0
    )
    .unwrap();
    for (k, (method, curve)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut pts = String::new();
        for (t, f) in curve.thresholds.iter().zip(&curve.fractions) {
            write!(pts, "{:.2},{:.2} ", x_of(*t), y_of(*f)).unwrap();
        }
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            color,
            pts.trim_end()
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{}">{}</text>"#,
            PAD + 10.0,
            PAD + 16.0 * (k as f64 + 1.0),
            color,
            method.tag()
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `report.csv` and one `curves_<class>.svg` per class.
pub fn render_report(records: &[EvalRecord], curve_points: usize, dir: &Path) -> Result<Vec<Summary>> {
    fs::create_dir_all(dir).map_err(|e| MendError::io(dir, e))?;
    let summaries = aggregate(records);
    let path = dir.join("report.csv");
    fs::write(&path, report_csv(&summaries)).map_err(|e| MendError::io(&path, e))?;
    let mut by_class: BTreeMap<&str, BTreeMap<Method, Vec<f64>>> = BTreeMap::new();
    for r in records {
        by_class.entry(&r.class).or_default().entry(r.method).or_default().push(r.cd);
    }
    for (class, methods) in by_class {
        let curves = methods
            .into_iter()
            .map(|(m, v)| Ok((m, cumulative_curve(&v, curve_points)?)))
            .collect::<Result<Vec<_>>>()?;
        let path = dir.join(format!("curves_{}.svg", class));
        fs::write(&path, curves_svg(class, &curves)).map_err(|e| MendError::io(&path, e))?;
    }
    Ok(summaries)
}
