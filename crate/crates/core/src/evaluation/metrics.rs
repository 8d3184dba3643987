use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::DepthMap;

/// Ground-truth depths at or below this are not evaluated, and predictions
/// are clamped up to it.
pub const MIN_EVAL_DEPTH: f64 = 1e-3;

/// Predicted translation energy below which no scale is fitted.
const DEGENERATE_ENERGY: f64 = 1e-24;

/// Scale-aligned absolute trajectory error of one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ate {
    pub rmse: f64,
    pub scale: f64,
    /// The prediction does not move, so no scale could be fitted and
    /// `rmse` is unscaled.
    pub degenerate: bool,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Both windows are re-anchored to their first pose; the predicted
/// translations are scaled by the least-squares factor
/// `sum <t_p, t_g> / sum <t_p, t_p>` and the RMS residual is returned.
pub fn ate(pred: &Trajectory, gt: &Trajectory) -> Result<Ate> {
    if pred.len() != gt.len() || pred.len() < 2 {
        return Err(Error::Data(format!(
            "ATE needs two windows of equal length >= 2, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let tp = pred.anchored().translations();
    let tg = gt.anchored().translations();
    let energy: f64 = tp.iter().map(|t| dot(*t, *t)).sum();
    let cross: f64 = tp.iter().zip(&tg).map(|(p, g)| dot(*p, *g)).sum();
    let degenerate = energy < DEGENERATE_ENERGY;
    let scale = if degenerate { 1.0 } else { cross / energy };
    Ok(Ate {
        rmse: rms_residual(&tp, &tg, scale),
        scale,
        degenerate,
    })
}

/// `sqrt(mean ||s * p_i - g_i||^2)`.
pub fn rms_residual(pred: &[[f64; 3]], gt: &[[f64; 3]], s: f64) -> f64 {
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (0..3).map(|i| (s * p[i] - g[i]).powi(2)).sum::<f64>())
        .sum();
    (sum / pred.len() as f64).sqrt()
}

/// Mean and population standard deviation over windows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("nothing to summarize".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

/// Depth clamp used by the evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthCap {
    #[default]
    #[serde(rename = "80")]
    Cap80,
    #[serde(rename = "50")]
    Cap50,
}

impl DepthCap {
    pub fn meters(self) -> f64 {
        match self {
            DepthCap::Cap80 => 80.0,
            DepthCap::Cap50 => 50.0,
        }
    }
}

impl FromStr for DepthCap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_end_matches('m') {
            "80" => Ok(DepthCap::Cap80),
            "50" => Ok(DepthCap::Cap50),
            other => Err(Error::Config(format!(
                "depth cap must be 80 or 50, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for DepthCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.meters())
    }
}

/// Monocular depth errors after median scaling, in table column order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl DepthMetrics {
    pub const COLUMNS: [&'static str; 7] = [
        "Abs Rel",
        "Sq Rel",
        "RMSE",
        "RMSE log",
        "δ<1.25",
        "δ<1.25²",
        "δ<1.25³",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }

    fn from_values(v: [f64; 7]) -> Self {
        Self {
            abs_rel: v[0],
            sq_rel: v[1],
            rmse: v[2],
            rmse_log: v[3],
            delta1: v[4],
            delta2: v[5],
            delta3: v[6],
        }
    }

    /// Per-frame metrics averaged column by column.
    pub fn mean(all: &[DepthMetrics]) -> Result<Self> {
        if all.is_empty() {
            return Err(Error::Data("no depth metrics to average".into()));
        }
        let mut acc = [0.0; 7];
        for m in all {
            for (a, v) in acc.iter_mut().zip(m.values()) {
                *a += v;
            }
        }
        Ok(Self::from_values(acc.map(|a| a / all.len() as f64)))
    }

    pub fn header() -> String {
        Self::COLUMNS.map(|c| format!("{c:>9}")).join(" ")
    }

    pub fn row(&self) -> String {
        self.values().map(|v| format!("{v:>9.3}")).join(" ")
    }
}

/// Median of a non-empty slice; the mean of the two middle values for even
/// lengths.
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

/// Scores `pred` against `gt` on pixels where the ground truth lies in
/// `(MIN_EVAL_DEPTH, cap)`. The prediction is multiplied by the ratio of
/// medians and clamped to `[MIN_EVAL_DEPTH, cap]`.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, cap: DepthCap) -> Result<DepthMetrics> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let cap = cap.meters();
    let (mut p, mut g) = (Vec::new(), Vec::new());
    for i in 0..gt.values().len() {
        let d = gt.values()[i];
        if gt.valid()[i] && pred.valid()[i] && d > MIN_EVAL_DEPTH && d < cap {
            p.push(pred.values()[i]);
            g.push(d);
        }
    }
    if g.is_empty() {
        return Err(Error::Data(
            "no ground-truth depth inside the evaluation range".into(),
        ));
    }
    let mp = median(&p);
    if !(mp > 0.0 && mp.is_finite()) {
        return Err(Error::Numeric(format!("median predicted depth is {mp}")));
    }
    let s = median(&g) / mp;
    let n = g.len() as f64;
    let mut acc = [0.0; 7];
    for (&dp, &dg) in p.iter().zip(&g) {
        let dp = (dp * s).clamp(MIN_EVAL_DEPTH, cap);
        let diff = dp - dg;
        acc[0] += diff.abs() / dg;
        acc[1] += diff * diff / dg;
        acc[2] += diff * diff;
        acc[3] += (dp.ln() - dg.ln()).powi(2);
        let ratio = (dp / dg).max(dg / dp);
        for (k, slot) in acc[4..].iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *slot += 1.0;
            }
        }
    }
    let mut m = acc.map(|a| a / n);
    m[2] = m[2].sqrt();
    m[3] = m[3].sqrt();
    Ok(DepthMetrics::from_values(m))
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Data(format!(
            "rank correlation needs two equal-length series of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Numeric(
            "rank correlation of a constant series".into(),
        ));
    }
    Ok(cov / (va * vb).sqrt())
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}
