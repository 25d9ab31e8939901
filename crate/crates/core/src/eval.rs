//! Evaluation metrics: flow endpoint error, thresholded danger P/R/F1 per
//! semantic class, the depth baseline, and motion-vector angle error.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{ensure_same, Error, Result};
use crate::types::{FloatMap, FlowField, Mask};

/// Endpoint errors above this many pixels count as outliers.
pub const OUTLIER_PX: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowErrors {
    /// Mean endpoint error in pixels.
    pub aee: f64,
    /// Percentage of evaluated pixels with endpoint error above 3 px.
    pub outlier_pct: f64,
    pub pixels: usize,
}

/// Running sums so that endpoint errors can be pooled over many frames.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowErrorAccumulator {
    sum: f64,
    outliers: usize,
    pixels: usize,
}

impl FlowErrorAccumulator {
    pub fn add(&mut self, pred: &FlowField, gt: &FlowField, mask: Option<&Mask>) -> Result<()> {
        ensure_same(pred.dims(), gt.dims())?;
        if let Some(m) = mask {
            ensure_same(pred.dims(), m.dims())?;
        }
        for i in 0..pred.u.len() {
            if mask.is_some_and(|m| !m.bits[i]) {
                continue;
            }
            let du = pred.u[i] as f64 - gt.u[i] as f64;
            let dv = pred.v[i] as f64 - gt.v[i] as f64;
            let ee = du.hypot(dv);
            self.sum += ee;
            self.outliers += usize::from(ee > OUTLIER_PX);
            self.pixels += 1;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<FlowErrors> {
        if self.pixels == 0 {
            return Err(Error::UndefinedMetric("no pixels selected for endpoint error"));
        }
        Ok(FlowErrors {
            aee: self.sum / self.pixels as f64,
            outlier_pct: 100.0 * self.outliers as f64 / self.pixels as f64,
            pixels: self.pixels,
        })
    }
}

pub fn flow_aee(pred: &FlowField, gt: &FlowField, mask: Option<&Mask>) -> Result<FlowErrors> {
    let mut acc = FlowErrorAccumulator::default();
    acc.add(pred, gt, mask)?;
    acc.finish()
}

/// Confusion counts and derived scores for one pixel population.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Scores {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Scores {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Number of ground-truth positives.
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }
}

/// Per-class and overall scores. Classes are keyed by integer id.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassScores {
    pub per_class: BTreeMap<u32, Scores>,
    pub overall: Scores,
}

/// Confusion counts pooled over frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prf1Accumulator {
    counts: BTreeMap<u32, [u64; 3]>,
    overall: [u64; 3],
}

impl Prf1Accumulator {
    /// Registers `ids` with zero counts so they always appear in the report.
    pub fn with_classes(ids: &[u32]) -> Self {
        let mut acc = Self::default();
        for &id in ids {
            acc.counts.insert(id, [0; 3]);
        }
        acc
    }

    pub fn add(&mut self, pred: &Mask, gt: &Mask, class_map: &FloatMap) -> Result<()> {
        ensure_same(pred.dims(), gt.dims())?;
        ensure_same(pred.dims(), class_map.dims())?;
        for i in 0..pred.bits.len() {
            let slot = match (pred.bits[i], gt.bits[i]) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => continue,
            };
            let class = class_map.values[i].round().max(0.0) as u32;
            self.counts.entry(class).or_insert([0; 3])[slot] += 1;
            self.overall[slot] += 1;
        }
        Ok(())
    }

    pub fn finish(&self) -> ClassScores {
        ClassScores {
            per_class: self
                .counts
                .iter()
                .map(|(&k, c)| (k, Scores::from_counts(c[0], c[1], c[2])))
                .collect(),
            overall: Scores::from_counts(self.overall[0], self.overall[1], self.overall[2]),
        }
    }
}

/// Precision/recall/F1 of a predicted danger mask, each class scored on its
/// own pixels and overall on every pixel.
pub fn prf1(pred: &Mask, gt: &Mask, class_map: &FloatMap) -> Result<ClassScores> {
    let mut acc = Prf1Accumulator::with_classes(&[0, 1, 2]);
    acc.add(pred, gt, class_map)?;
    Ok(acc.finish())
}

/// Pixels with valid depth closer than `threshold_m`.
pub fn depth_baseline(depth: &FloatMap, threshold_m: f64) -> Result<Mask> {
    if !(threshold_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "depth threshold must be positive, got {threshold_m}"
        )));
    }
    Ok(Mask {
        width: depth.width,
        height: depth.height,
        bits: (0..depth.values.len())
            .map(|i| depth.is_valid_depth(i) && (depth.values[i] as f64) < threshold_m)
            .collect(),
    })
}

/// Angle between two non-zero vectors, in degrees.
pub fn angle_error(pred: &Vector3<f64>, gt: &Vector3<f64>) -> Result<f64> {
    let (np, ng) = (pred.norm(), gt.norm());
    if np == 0.0 || ng == 0.0 || !np.is_finite() || !ng.is_finite() {
        return Err(Error::UndefinedMetric("angle error of a zero vector"));
    }
    let c = (pred.dot(gt) / (np * ng)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AaeReport {
    pub aae: f64,
    /// Mean over the samples with the top 10% ground-truth magnitudes;
    /// `None` with fewer than 10 samples.
    pub aae_top10: Option<f64>,
    pub samples: usize,
}

/// Average angle error over `(pred, gt)` pairs, plus the mean over the decile
/// with the largest ground-truth magnitudes (ties keep sample order).
pub fn aae_report(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Result<AaeReport> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("no motion-vector pairs"));
    }
    let errors = pairs
        .iter()
        .map(|(p, g)| angle_error(p, g))
        .collect::<Result<Vec<_>>>()?;
    let aae = errors.iter().sum::<f64>() / errors.len() as f64;
    let aae_top10 = (pairs.len() >= 10).then(|| {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        // Stable sort: equal magnitudes keep their original order.
        order.sort_by(|&a, &b| pairs[b].1.norm().total_cmp(&pairs[a].1.norm()));
        let k = pairs.len().div_ceil(10);
        order[..k].iter().map(|&i| errors[i]).sum::<f64>() / k as f64
    });
    Ok(AaeReport {
        aae,
        aae_top10,
        samples: pairs.len(),
    })
}

/// `name<TAB>value` report lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub lines: Vec<(String, String)>,
}

impl MetricReport {
    pub fn push(&mut self, name: impl Into<String>, value: impl ToString) {
        self.lines.push((name.into(), value.to_string()));
    }

    pub fn push_f64(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, format!("{value:.6}"));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (n, v) in &self.lines {
            let _ = writeln!(out, "{n}\t{v}");
        }
        out
    }

    pub fn parse(text: &str) -> Self {
        MetricReport {
            lines: text
                .lines()
                .filter_map(|l| l.split_once('\t'))
                .map(|(n, v)| (n.to_string(), v.to_string()))
                .collect(),
        }
    }
}
