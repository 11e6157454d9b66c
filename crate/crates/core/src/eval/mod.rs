//! Evaluation battery for generated data: simulator-in-the-loop error,
//! learned-reference error, histogram KL, density export and mode-collapse
//! diagnostics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, FeatureSchema, MinMaxScaler};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::MlpRegressor;

pub const EPS_DEN: f64 = 1e-12;
pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_SMOOTHING: f64 = 1e-6;
pub const COLLAPSE_SCORE: f64 = 0.2;
pub const SPECTRAL_FLOOR: f64 = 0.05;
const MIN_COLLAPSE_ROWS: usize = 50;
const MAX_NN_ROWS: usize = 2000;

/// Anything that maps simulator inputs to simulator outputs.
pub trait Simulator: Sync {
    fn schema(&self) -> &FeatureSchema;

    /// `inputs` follow the order of the schema's simulator inputs. `None`
    /// means the point lies outside the simulator's operating region.
    fn simulate(&self, inputs: &[f64]) -> Result<Option<Vec<f64>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentageErrors {
    pub features: Vec<String>,
    pub per_feature: Vec<f64>,
    pub mean: f64,
    pub evaluated: usize,
    pub rejected: usize,
}

fn columns_by_name(data: &FeatureSchema, names: &[&str], what: &str) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            data.index_of(n)
                .ok_or_else(|| Error::Eval(format!("dataset lacks {what} `{n}`")))
        })
        .collect()
}

/// Mean of `100·|gen − sim| / max(|sim|, EPS_DEN)` per simulator output,
/// over the rows the simulator accepts.
pub fn avg_percentage_error(generated: &Dataset, sim: &dyn Simulator) -> Result<PercentageErrors> {
    let ss = sim.schema();
    let in_names: Vec<&str> = ss.input_indices().iter().map(|&i| ss.features()[i].name.as_str()).collect();
    let out_names: Vec<&str> = ss.output_indices().iter().map(|&i| ss.features()[i].name.as_str()).collect();
    let in_idx = columns_by_name(generated.schema(), &in_names, "simulator input")?;
    let out_idx = columns_by_name(generated.schema(), &out_names, "simulator output")?;

    let mut sums = vec![0.0; out_idx.len()];
    let mut evaluated = 0;
    let mut rejected = 0;
    let mut inputs = vec![0.0; in_idx.len()];
    for r in 0..generated.len() {
        let row = generated.rows().row(r);
        for (dst, &c) in inputs.iter_mut().zip(&in_idx) {
            *dst = row[c];
        }
        let Some(simulated) = sim.simulate(&inputs)? else {
            rejected += 1;
            continue;
        };
        if simulated.len() != out_idx.len() {
            return Err(Error::Dimension {
                context: "simulator outputs",
                expected: out_idx.len(),
                got: simulated.len(),
            });
        }
        for ((acc, &c), s) in sums.iter_mut().zip(&out_idx).zip(&simulated) {
            *acc += 100.0 * (row[c] - s).abs() / s.abs().max(EPS_DEN);
        }
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::Eval(format!(
            "simulator rejected all {rejected} generated row(s)"
        )));
    }
    let per_feature: Vec<f64> = sums.iter().map(|s| s / evaluated as f64).collect();
    let mean = per_feature.iter().sum::<f64>() / per_feature.len().max(1) as f64;
    Ok(PercentageErrors {
        features: out_names.iter().map(|s| s.to_string()).collect(),
        per_feature,
        mean,
        evaluated,
        rejected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnErrors {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
}

/// Generator outputs against the regressor's predictions on the generated
/// inputs, pooled over every target.
pub fn eval_vs_ann(generated: &Dataset, ann: &MlpRegressor) -> Result<AnnErrors> {
    if generated.is_empty() {
        return Err(Error::Eval("no generated rows".into()));
    }
    let pred = ann.predict_dataset(generated)?;
    let names: Vec<&str> = ann.target_names.iter().map(String::as_str).collect();
    let idx = columns_by_name(generated.schema(), &names, "regressor target")?;
    let gen = generated.rows().select_cols(&idx);
    let n = gen.data().len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (g, p) in gen.data().iter().zip(pred.data()) {
        se += (g - p) * (g - p);
        ae += (g - p).abs();
    }
    let mse = se / n;
    Ok(AnnErrors {
        mse,
        rmse: mse.sqrt(),
        mae: ae / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub feature: String,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub densities: Vec<f64>,
}

pub const HISTOGRAM_CSV_HEADER: &str = "feature,bin_index,left_edge,right_edge,count,density";

impl Histogram {
    fn build(feature: &str, edges: Vec<f64>, values: &[f64]) -> Self {
        let mut counts = vec![0usize; edges.len() - 1];
        for &v in values {
            counts[bin_of(&edges, v)] += 1;
        }
        let n = values.len().max(1) as f64;
        let densities = counts.iter().map(|&c| c as f64 / n).collect();
        Self {
            feature: feature.to_string(),
            edges,
            counts,
            densities,
        }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn write_csv_rows(&self, out: &mut String) {
        for b in 0..self.bins() {
            out.push_str(&format!(
                "{},{},{:?},{:?},{},{:?}\n",
                self.feature,
                b,
                self.edges[b],
                self.edges[b + 1],
                self.counts[b],
                self.densities[b]
            ));
        }
    }
}

/// CSV for a set of histograms, one row per bin.
pub fn histograms_to_csv(hists: &[Histogram]) -> String {
    let mut s = String::from(HISTOGRAM_CSV_HEADER);
    s.push('\n');
    for h in hists {
        h.write_csv_rows(&mut s);
    }
    s
}

/// Uniform bin index; values outside the edges land in the extreme bins.
fn bin_of(edges: &[f64], v: f64) -> usize {
    let bins = edges.len() - 1;
    let lo = edges[0];
    let width = (edges[bins] - lo) / bins as f64;
    let b = ((v - lo) / width).floor();
    if b.is_nan() || b < 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        let half = 0.5 * lo.abs().max(1.0);
        (lo - half, lo + half)
    };
    let w = (hi - lo) / bins as f64;
    let mut e: Vec<f64> = (0..bins).map(|i| lo + w * i as f64).collect();
    e.push(hi);
    e
}

/// One bin per corner code.
fn categorical_edges() -> Vec<f64> {
    (0..=5).map(|i| i as f64 - 0.5).collect()
}

fn range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Histogram of one feature over its own range.
pub fn density_export(data: &Dataset, feature: &str, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::validation("bins must be at least 1"));
    }
    let idx = data
        .schema()
        .index_of(feature)
        .ok_or_else(|| Error::validation(format!("unknown feature `{feature}`")))?;
    if data.is_empty() {
        return Err(Error::Eval("cannot histogram an empty dataset".into()));
    }
    let values = data.rows().col(idx);
    let edges = if data.schema().features()[idx].categorical {
        categorical_edges()
    } else {
        let (lo, hi) = range(&values);
        uniform_edges(lo, hi, bins)
    };
    Ok(Histogram::build(feature, edges, &values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlResult {
    pub features: Vec<String>,
    pub per_feature: Vec<f64>,
    pub mean: f64,
}

/// Per-feature histogram KL(p‖q), bins fit to p's range widened by 5% on
/// each side, `smoothing` mass added to every bin before renormalizing.
pub fn kl_divergence(p_data: &Dataset, q_data: &Dataset, bins: usize, smoothing: f64) -> Result<KlResult> {
    if bins < 2 {
        return Err(Error::validation("KL needs at least two bins"));
    }
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::validation("smoothing must be positive"));
    }
    if p_data.is_empty() || q_data.is_empty() {
        return Err(Error::Eval("KL divergence of an empty dataset".into()));
    }
    if p_data.schema() != q_data.schema() {
        return Err(Error::Eval("KL divergence between different schemas".into()));
    }
    let mut per_feature = Vec::with_capacity(p_data.schema().len());
    for (c, f) in p_data.schema().features().iter().enumerate() {
        let p = p_data.rows().col(c);
        let q = q_data.rows().col(c);
        let edges = if f.categorical {
            categorical_edges()
        } else {
            let (lo, hi) = range(&p);
            let pad = 0.05 * (hi - lo);
            uniform_edges(lo - pad, hi + pad, bins)
        };
        let hp = Histogram::build(&f.name, edges.clone(), &p);
        let hq = Histogram::build(&f.name, edges, &q);
        per_feature.push(smoothed_kl(&hp.densities, &hq.densities, smoothing));
    }
    let mean = per_feature.iter().sum::<f64>() / per_feature.len() as f64;
    Ok(KlResult {
        features: p_data.schema().names().iter().map(|s| s.to_string()).collect(),
        per_feature,
        mean,
    })
}

fn smoothed_kl(p: &[f64], q: &[f64], s: f64) -> f64 {
    let z = 1.0 + s * p.len() as f64;
    let kl: f64 = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let a = (pi + s) / z;
            let b = (qi + s) / z;
            a * (a / b).ln()
        })
        .sum();
    kl.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub diversity_score: f64,
    pub spectral_collapse: bool,
    pub collapsed: bool,
}

/// True when more than half of a layer's singular values sit below
/// `SPECTRAL_FLOOR · σ₁`.
pub fn spectral_collapse(spectra: &[Vec<f64>]) -> bool {
    spectra.iter().any(|s| {
        let top = s.iter().cloned().fold(0.0, f64::max);
        let small = s.iter().filter(|&&v| v < SPECTRAL_FLOOR * top).count();
        2 * small > s.len()
    })
}

/// Evenly strided subset of at most `n` rows.
fn stride_rows(m: &Matrix, n: usize) -> Matrix {
    if m.rows() <= n {
        return m.clone();
    }
    let idx: Vec<usize> = (0..n).map(|i| i * m.rows() / n).collect();
    m.select_rows(&idx)
}

fn mean_nn_distance(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut total = 0.0;
    for i in 0..n {
        let a = m.row(i);
        let mut best = f64::INFINITY;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d2: f64 = a.iter().zip(m.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.min(d2);
        }
        total += best.sqrt();
    }
    total / n as f64
}

/// Ratio of mean nearest-neighbour distance inside `generated` to that
/// inside `training`, both scaled with the training range and subsampled to
/// the same row count.
pub fn mode_collapse_report(generated: &Dataset, training: &Dataset, disc_spectra: &[Vec<f64>]) -> Result<CollapseReport> {
    if generated.len() < MIN_COLLAPSE_ROWS || training.len() < MIN_COLLAPSE_ROWS {
        return Err(Error::Eval(format!(
            "mode-collapse report needs at least {MIN_COLLAPSE_ROWS} rows per dataset"
        )));
    }
    if generated.schema() != training.schema() {
        return Err(Error::Eval("mode-collapse report between different schemas".into()));
    }
    let scaler = MinMaxScaler::fit(training)?;
    let n = generated.len().min(training.len()).min(MAX_NN_ROWS);
    let g = stride_rows(&scaler.transform_quiet(generated.rows())?, n);
    let t = stride_rows(&scaler.transform_quiet(training.rows())?, n);
    let dt = mean_nn_distance(&t);
    let dg = mean_nn_distance(&g);
    let diversity_score = if dt > 0.0 { dg / dt } else if dg > 0.0 { f64::MAX } else { 1.0 };
    let spectral = spectral_collapse(disc_spectra);
    Ok(CollapseReport {
        diversity_score,
        spectral_collapse: spectral,
        collapsed: spectral || diversity_score < COLLAPSE_SCORE,
    })
}

/// Everything measured at one evaluated epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub epoch: usize,
    pub pct_error: Option<PercentageErrors>,
    pub kl: KlResult,
    pub collapse: Option<CollapseReport>,
    pub disc_spectra: Vec<Vec<f64>>,
}

impl EvalReport {
    /// Model-selection score: mean % error when a simulator was available,
    /// otherwise mean KL.
    pub fn score(&self) -> f64 {
        match &self.pct_error {
            Some(p) => p.mean,
            None => self.kl.mean,
        }
    }

    pub fn is_finite(&self) -> bool {
        let pct = self
            .pct_error
            .as_ref()
            .is_none_or(|p| p.mean.is_finite() && p.per_feature.iter().all(|v| v.is_finite()));
        pct && self.kl.mean.is_finite()
            && self.kl.per_feature.iter().all(|v| v.is_finite())
            && self.collapse.as_ref().is_none_or(|c| c.diversity_score.is_finite())
            && self.disc_spectra.iter().flatten().all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub bins: usize,
    pub smoothing: f64,
    pub eval_every: usize,
    /// Generated rows drawn per evaluation.
    pub samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            smoothing: DEFAULT_SMOOTHING,
            eval_every: 100,
            samples: 1000,
        }
    }
}

/// Full battery on one generated set.
pub fn evaluate(
    epoch: usize,
    generated: &Dataset,
    training: &Dataset,
    sim: Option<&dyn Simulator>,
    disc_spectra: Vec<Vec<f64>>,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let pct_error = sim.map(|s| avg_percentage_error(generated, s)).transpose()?;
    let kl = kl_divergence(training, generated, config.bins, config.smoothing)?;
    let collapse = if generated.len() >= MIN_COLLAPSE_ROWS && training.len() >= MIN_COLLAPSE_ROWS {
        Some(mode_collapse_report(generated, training, &disc_spectra)?)
    } else {
        None
    };
    Ok(EvalReport {
        epoch,
        pct_error,
        kl,
        collapse,
        disc_spectra,
    })
}
