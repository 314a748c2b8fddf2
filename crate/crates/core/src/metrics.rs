//! Agreement metrics between label maps: confusion matrix, overall accuracy,
//! Cohen's kappa and class volume percentages.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ClassLabel, LabelMap};

/// `counts[truth][predicted]`, indexed by [`ClassLabel::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|k| self.counts[k][k]).sum()
    }

    pub fn row_sums(&self) -> [u64; 3] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn col_sums(&self) -> [u64; 3] {
        std::array::from_fn(|c| (0..3).map(|r| self.counts[r][c]).sum())
    }

    pub fn transpose(&self) -> Self {
        ConfusionMatrix { counts: std::array::from_fn(|r| std::array::from_fn(|c| self.counts[c][r])) }
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for r in 0..3 {
            for c in 0..3 {
                self.counts[r][c] += other.counts[r][c];
            }
        }
    }

    pub fn record(&mut self, truth: ClassLabel, pred: ClassLabel) {
        self.counts[truth.index()][pred.index()] += 1;
    }
}

pub fn confusion(pred: &LabelMap, truth: &LabelMap) -> Result<ConfusionMatrix> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(Error::Dimension(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in pred.labels().iter().zip(truth.labels()) {
        cm.record(*t, *p);
    }
    Ok(cm)
}

/// Confusion matrix pooled over several slices.
pub fn confusion_volume(preds: &[LabelMap], truths: &[LabelMap]) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::Dimension(format!("{} predicted slices, {} truth slices", preds.len(), truths.len())));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in preds.iter().zip(truths) {
        cm.add(&confusion(p, t)?);
    }
    Ok(cm)
}

/// `trace / total`.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::EmptySet("confusion matrix is empty".into()));
    }
    Ok(cm.trace() as f64 / n as f64)
}

/// Cohen's kappa as an exact fraction:
/// `(N·trace − Σ r_k·c_k) / (N² − Σ r_k·c_k)`, equivalent to
/// `(p_o − p_e) / (1 − p_e)`.
pub fn kappa_exact(cm: &ConfusionMatrix) -> Result<Ratio<i128>> {
    let n = i128::from(cm.total());
    if n == 0 {
        return Err(Error::EmptySet("confusion matrix is empty".into()));
    }
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let chance: i128 = (0..3).map(|k| i128::from(rows[k]) * i128::from(cols[k])).sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Err(Error::UndefinedKappa);
    }
    Ok(Ratio::new(n * i128::from(cm.trace()) - chance, denom))
}

pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let r = kappa_exact(cm)?;
    Ok(*r.numer() as f64 / *r.denom() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub matrix: ConfusionMatrix,
    pub phi: f64,
    pub kappa: f64,
}

impl MetricsReport {
    pub fn from_matrix(matrix: ConfusionMatrix) -> Result<Self> {
        Ok(MetricsReport { matrix, phi: overall_accuracy(&matrix)?, kappa: kappa(&matrix)? })
    }
}

/// Class volumes in percent of all pixels, and `v1 / v2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    /// `None` when no matter pixels exist.
    pub fluid_matter_rate: Option<f64>,
}

pub fn volumes(maps: &[LabelMap]) -> Result<VolumeReport> {
    let first = maps.first().ok_or_else(|| Error::EmptySet("no label maps".into()))?;
    let mut counts = [0u64; 3];
    for m in maps {
        if m.width() != first.width() || m.height() != first.height() {
            return Err(Error::Dimension("label maps differ in size".into()));
        }
        for (c, k) in counts.iter_mut().zip(m.counts()) {
            *c += k;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptySet("label maps have no pixels".into()));
    }
    let pct = |c: u64| 100.0 * c as f64 / total as f64;
    let fluid_matter_rate = (counts[1] > 0).then(|| counts[0] as f64 / counts[1] as f64);
    Ok(VolumeReport { v1: pct(counts[0]), v2: pct(counts[1]), v3: pct(counts[2]), fluid_matter_rate })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header matching [`csv_row`].
pub const CSV_HEADER: &str = "kappa,phi,v1,v2,v3,rate";

/// Flat CSV fields for one report pair. An undefined rate is left empty.
pub fn csv_row(m: &MetricsReport, v: &VolumeReport) -> String {
    format!("{},{},{},{},{},{}", m.kappa, m.phi, v.v1, v.v2, v.v3, fmt_opt(v.fluid_matter_rate))
}
