//! Histograms, summary statistics and Pearson correlations over metric columns.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::metrics::MetricKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScale {
    #[default]
    Linear,
    /// Bins are equal-width in `log10(value)`; zeros go to `underflow_zero`.
    Log10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueTransform {
    #[default]
    Identity,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` strictly ascending edges, in the binned domain (log10 values for `Log10`).
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub scale: BinScale,
    pub transform: ValueTransform,
    /// Samples below the first edge, including log-scale zeros.
    pub underflow: u64,
    /// The subset of `underflow` that were exactly zero on a log scale.
    pub underflow_zero: u64,
    pub overflow: u64,
    /// Non-finite samples, which are never binned.
    pub dropped: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow + self.dropped
    }

    /// Bin edges mapped back to the value domain.
    pub fn value_edges(&self) -> Vec<f64> {
        match self.scale {
            BinScale::Linear => self.edges.clone(),
            BinScale::Log10 => self.edges.iter().map(|e| 10f64.powf(*e)).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin", "lower", "upper", "count"])?;
        let edges = self.value_edges();
        for (i, c) in self.counts.iter().enumerate() {
            out.write_record([
                i.to_string(),
                edges[i].to_string(),
                edges[i + 1].to_string(),
                c.to_string(),
            ])?;
        }
        for (label, n) in [
            ("underflow", self.underflow),
            ("underflow_zero", self.underflow_zero),
            ("overflow", self.overflow),
        ] {
            out.write_record([label, "", "", &n.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Minimal bar chart.
    pub fn to_svg(&self, title: &str) -> String {
        const W: f64 = 640.0;
        const H: f64 = 360.0;
        const PAD: f64 = 40.0;
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let bar_w = (W - 2.0 * PAD) / self.counts.len().max(1) as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            W / 2.0,
            escape_xml(title)
        );
        for (i, &c) in self.counts.iter().enumerate() {
            let h = (H - 2.0 * PAD) * c as f64 / max;
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4878a8"/>"##,
                PAD + i as f64 * bar_w,
                H - PAD - h,
                bar_w.max(0.5),
                h
            );
        }
        let edges = self.value_edges();
        let (lo, hi) = (edges[0], edges[edges.len() - 1]);
        let _ = writeln!(
            s,
            r#"<line x1="{PAD}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
            y = H - PAD,
            x2 = W - PAD
        );
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="11">{lo:.4}</text>"#,
            H - PAD + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{hi:.4}</text>"#,
            W - PAD,
            H - PAD + 16.0
        );
        s.push_str("</svg>\n");
        s
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HistogramOptions {
    pub bins: usize,
    pub scale: BinScale,
    pub transform: ValueTransform,
    /// Range in the value domain (after `transform`, before `scale`).
    pub range: Option<(f64, f64)>,
}

impl HistogramOptions {
    pub fn new(bins: usize) -> Self {
        Self {
            bins,
            ..Self::default()
        }
    }
}

/// Bins `values` into equal-width bins over `[min, max]` (or `opts.range`).
///
/// Bins are right-closed: the first is `[e0, e1]`, later ones `(e_i, e_i+1]`.
pub fn histogram(values: &[f64], opts: &HistogramOptions) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyData("histogram of an empty column".into()));
    }
    if opts.bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut hist = Histogram {
        edges: Vec::new(),
        counts: vec![0; opts.bins],
        scale: opts.scale,
        transform: opts.transform,
        underflow: 0,
        underflow_zero: 0,
        overflow: 0,
        dropped: 0,
    };

    let mut binned = Vec::with_capacity(values.len());
    for &raw in values {
        let v = match opts.transform {
            ValueTransform::Identity => raw,
            ValueTransform::Sqrt if raw < 0.0 => {
                return Err(Error::Config(format!(
                    "sqrt transform of negative value {raw}"
                )))
            }
            ValueTransform::Sqrt => raw.sqrt(),
        };
        if !v.is_finite() {
            hist.dropped += 1;
            continue;
        }
        match opts.scale {
            BinScale::Linear => binned.push(v),
            BinScale::Log10 if v == 0.0 => {
                hist.underflow += 1;
                hist.underflow_zero += 1;
            }
            BinScale::Log10 if v < 0.0 => {
                return Err(Error::Config(format!(
                    "log-scale histogram of negative value {v}"
                )))
            }
            BinScale::Log10 => binned.push(v.log10()),
        }
    }

    let (lo, hi) = match opts.range {
        Some((a, b)) => {
            let map = |x: f64| match opts.scale {
                BinScale::Linear => Ok(x),
                BinScale::Log10 if x > 0.0 => Ok(x.log10()),
                BinScale::Log10 => Err(Error::Config("log-scale range must be positive".into())),
            };
            let (a, b) = (map(a)?, map(b)?);
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Config(format!("invalid histogram range [{a}, {b}]")));
            }
            (a, b)
        }
        None => {
            if binned.is_empty() {
                (0.0, 1.0)
            } else {
                let lo = binned.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = binned.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if lo == hi {
                    (lo - 0.5, hi + 0.5)
                } else {
                    (lo, hi)
                }
            }
        }
    };
    let width = (hi - lo) / opts.bins as f64;
    hist.edges = (0..=opts.bins)
        .map(|i| {
            if i == opts.bins {
                hi
            } else {
                lo + i as f64 * width
            }
        })
        .collect();

    for v in binned {
        if v < lo {
            hist.underflow += 1;
        } else if v > hi {
            hist.overflow += 1;
        } else {
            // first edge >= v closes the bin on the right
            let k = hist.edges.partition_point(|&e| e < v);
            hist.counts[k.max(1) - 1] += 1;
        }
    }
    Ok(hist)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "pearson inputs differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation(
            "need at least two samples".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input vector".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// A metric column across all records; errors if any record lacks it.
pub fn metric_column(manifest: &Manifest, metric: MetricKind) -> Result<Vec<f64>> {
    let mut missing = Vec::new();
    let col: Vec<f64> = manifest
        .records
        .iter()
        .filter_map(|r| {
            let v = r.scores.get(metric);
            if v.is_none() {
                missing.push(r.patch_id.clone());
            }
            v
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::ScoringGap {
            metric: metric.to_string(),
            ids: missing,
        });
    }
    Ok(col)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub metrics: Vec<MetricKind>,
    /// Row-major `metrics.len()^2` coefficients.
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.metrics.len() + j]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["metric".to_string()];
        header.extend(self.metrics.iter().map(|m| m.to_string()));
        out.write_record(&header)?;
        for (i, m) in self.metrics.iter().enumerate() {
            let mut row = vec![m.to_string()];
            row.extend((0..self.metrics.len()).map(|j| self.get(i, j).to_string()));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn metric_correlation_matrix(
    manifest: &Manifest,
    metrics: &[MetricKind],
) -> Result<CorrelationMatrix> {
    if metrics.is_empty() {
        return Err(Error::Config("no metrics to correlate".into()));
    }
    let cols = metrics
        .iter()
        .map(|&m| metric_column(manifest, m))
        .collect::<Result<Vec<_>>>()?;
    let k = metrics.len();
    if k == 1 {
        // Still require a defined self-correlation.
        pearson(&cols[0], &cols[0])?;
    }
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        values[i * k + i] = 1.0;
        for j in i + 1..k {
            let r = pearson(&cols[i], &cols[j])?;
            values[i * k + j] = r;
            values[j * k + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        metrics: metrics.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyData("summary of an empty column".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        count: values.len(),
        mean,
        std: var.sqrt(),
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

pub fn summary(manifest: &Manifest, metric: MetricKind) -> Result<Summary> {
    summarize(&metric_column(manifest, metric)?)
}

impl Summary {
    pub fn write_csv<W: Write>(&self, metric: MetricKind, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "metric", "count", "mean", "std", "min", "q1", "median", "q3", "max",
        ])?;
        out.write_record([
            metric.to_string(),
            self.count.to_string(),
            self.mean.to_string(),
            self.std.to_string(),
            self.min.to_string(),
            self.q1.to_string(),
            self.median.to_string(),
            self.q3.to_string(),
            self.max.to_string(),
        ])?;
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
