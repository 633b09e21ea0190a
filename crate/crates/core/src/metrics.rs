//! Reconstruction and classification quality metrics.

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 10;

/// `||pred - truth||^2 / ||truth||^2`.
pub fn nmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!("nmse: {} vs {} pixels", pred.len(), truth.len())));
    }
    let energy: f64 = truth.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::UndefinedMetric("nmse against an all-zero reference".into()));
    }
    let err: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(err / energy)
}

/// Windowed SSIM settings. Images are assumed to have dynamic range `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 7,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

/// Normalized separable Gaussian weights.
fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over all valid window positions of two `height x width` images.
pub fn ssim(pred: &[f64], truth: &[f64], height: usize, width: usize) -> Result<f64> {
    ssim_with(pred, truth, height, width, &SsimParams::default())
}

pub fn ssim_with(a: &[f64], b: &[f64], height: usize, width: usize, p: &SsimParams) -> Result<f64> {
    if a.len() != height * width || b.len() != height * width {
        return Err(Error::dim(format!(
            "ssim: images of {} and {} pixels for {height}x{width}",
            a.len(),
            b.len()
        )));
    }
    if height < p.window || width < p.window {
        return Err(Error::dim(format!(
            "ssim: {height}x{width} image smaller than {} window",
            p.window
        )));
    }
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let g = gaussian_window(p.window, p.sigma);
    let (oh, ow) = (height - p.window + 1, width - p.window + 1);
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..p.window {
                for j in 0..p.window {
                    let w = g[i] * g[j];
                    let idx = (y + i) * width + x + j;
                    let (u, v) = (a[idx], b[idx]);
                    ma += w * u;
                    mb += w * v;
                    saa += w * u * u;
                    sbb += w * v * v;
                    sab += w * u * v;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of true samples of this class.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassScores>,
    /// Classes that appear in neither predictions nor truth; excluded from
    /// the macro averages.
    pub absent: Vec<usize>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// `confusion[true][pred]`
    pub confusion: Vec<Vec<usize>>,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn classification_report(pred: &[usize], truth: &[usize]) -> Result<ClassificationReport> {
    if pred.is_empty() {
        return Err(Error::contract("classification report over no samples"));
    }
    if pred.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&l| l >= NUM_CLASSES) {
        return Err(Error::contract(format!("label {bad} outside 0..{NUM_CLASSES}")));
    }
    let mut confusion = vec![vec![0usize; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let mut per_class = Vec::with_capacity(NUM_CLASSES);
    let mut absent = Vec::new();
    let (mut sp, mut sr, mut sf, mut present) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..NUM_CLASSES {
        let tp = confusion[c][c] as f64;
        let actual: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        let f1 = harmonic(precision, recall);
        per_class.push(ClassScores {
            precision,
            recall,
            f1,
            support: actual,
        });
        if actual == 0 && predicted == 0 {
            absent.push(c);
        } else {
            sp += precision;
            sr += recall;
            sf += f1;
            present += 1;
        }
    }
    let n = present as f64;
    let correct: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
    Ok(ClassificationReport {
        per_class,
        absent,
        macro_precision: sp / n,
        macro_recall: sr / n,
        macro_f1: sf / n,
        accuracy: correct as f64 / pred.len() as f64,
        confusion,
    })
}

/// Aggregate evaluation summary of one model / method over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mean_nmse: f64,
    pub mean_ssim: f64,
    pub classification: Option<ClassificationReport>,
    pub mean_inference_time_s: f64,
    pub samples: usize,
}

impl MetricsReport {
    /// Header matching [`MetricsReport::csv_row`].
    pub const CSV_HEADER: &'static str =
        "samples,mean_nmse,mean_ssim,macro_precision,macro_recall,macro_f1,accuracy,mean_inference_time_s";

    pub fn csv_row(&self) -> String {
        let (p, r, f, a) = match &self.classification {
            Some(c) => (c.macro_precision, c.macro_recall, c.macro_f1, c.accuracy),
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        format!(
            "{},{},{},{},{},{},{},{}",
            self.samples, self.mean_nmse, self.mean_ssim, p, r, f, a, self.mean_inference_time_s
        )
    }

    /// Human-readable table with per-class scores and the confusion matrix.
    pub fn text_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("samples              {}\n", self.samples));
        s.push_str(&format!("mean NMSE            {:.6}\n", self.mean_nmse));
        s.push_str(&format!("mean SSIM            {:.6}\n", self.mean_ssim));
        s.push_str(&format!("mean inference time  {:.6} s\n", self.mean_inference_time_s));
        if let Some(c) = &self.classification {
            s.push_str(&format!(
                "macro precision {:.4}  recall {:.4}  F1 {:.4}  accuracy {:.4}\n\n",
                c.macro_precision, c.macro_recall, c.macro_f1, c.accuracy
            ));
            s.push_str("class  precision  recall     f1  support\n");
            for (k, cs) in c.per_class.iter().enumerate() {
                s.push_str(&format!(
                    "{k:>5}  {:>9.4}  {:>6.4}  {:>5.4}  {:>7}\n",
                    cs.precision, cs.recall, cs.f1, cs.support
                ));
            }
            s.push_str("\nconfusion (rows = true, cols = predicted)\n");
            for row in &c.confusion {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:>5}")).collect();
                s.push_str(&cells.join(""));
                s.push('\n');
            }
        }
        s
    }
}
