//! Standalone MLP regressor, used as a learned reference model when a
//! simulator is not available to score generated data.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::{split, Dataset, FeatureRole, MinMaxScaler};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{adam_update, backward, forward, Activation, AdamConfig, AdamState, LayerSpec, MlpParams};
use crate::rng;

pub const REGRESSOR_FORMAT: &str = "circuit-augmentor/mlp-regressor";
pub const REGRESSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    /// Target features; empty means every simulator output.
    pub targets: Vec<String>,
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            hidden: vec![64, 64, 64],
            hidden_activation: Activation::leaky_relu(),
            lr: 1e-3,
            epochs: 300,
            batch_size: 32,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Held-out metrics in physical units, pooled over all targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Mean over targets with non-zero variance; `None` when every target
    /// is constant on the test split.
    pub r2: Option<f64>,
    pub mean_pct_error: f64,
}

impl RegressionMetrics {
    pub fn compute(pred: &Matrix, truth: &Matrix) -> Self {
        assert_eq!(pred.shape(), truth.shape());
        let n = pred.data().len().max(1) as f64;
        let mut se = 0.0;
        let mut ae = 0.0;
        let mut pct = 0.0;
        for (p, t) in pred.data().iter().zip(truth.data()) {
            let d = p - t;
            se += d * d;
            ae += d.abs();
            pct += 100.0 * d.abs() / t.abs().max(1e-12);
        }
        let mut r2s = Vec::new();
        for c in 0..truth.cols() {
            let col = truth.col(c);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let ss_tot: f64 = col.iter().map(|y| (y - mean).powi(2)).sum();
            if ss_tot > 0.0 {
                let ss_res: f64 = (0..truth.rows()).map(|r| (pred[(r, c)] - truth[(r, c)]).powi(2)).sum();
                r2s.push(1.0 - ss_res / ss_tot);
            }
        }
        let mse = se / n;
        Self {
            mse,
            rmse: mse.sqrt(),
            mae: ae / n,
            r2: (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64),
            mean_pct_error: pct / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRegressor {
    pub params: MlpParams,
    pub input_names: Vec<String>,
    pub target_names: Vec<String>,
    pub input_scaler: MinMaxScaler,
    pub target_scaler: MinMaxScaler,
    pub metrics: RegressionMetrics,
    /// Set when every target was constant on the training data.
    pub degenerate: bool,
}

#[derive(Serialize, Deserialize)]
struct RegressorCheckpoint {
    format: String,
    version: u32,
    model: MlpRegressor,
}

/// Trains a regressor from the simulator inputs of `data` to its targets.
pub fn fit_mlp_regressor(data: &Dataset, config: &RegressorConfig) -> Result<MlpRegressor> {
    if data.is_empty() {
        return Err(Error::validation("cannot fit a regressor on an empty dataset"));
    }
    let schema = data.schema();
    let target_idx: Vec<usize> = if config.targets.is_empty() {
        schema.output_indices()
    } else {
        config
            .targets
            .iter()
            .map(|t| {
                let i = schema
                    .index_of(t)
                    .ok_or_else(|| Error::validation(format!("unknown target feature `{t}`")))?;
                if schema.features()[i].role != FeatureRole::SimulatorOutput {
                    return Err(Error::validation(format!("target `{t}` is not a simulator_output feature")));
                }
                Ok(i)
            })
            .collect::<Result<_>>()?
    };
    let input_idx = schema.input_indices();
    let names = |idx: &[usize]| idx.iter().map(|&i| schema.features()[i].name.clone()).collect::<Vec<_>>();

    let (train, test) = split(data, config.test_fraction, config.seed)?;
    let x_train = train.rows().select_cols(&input_idx);
    let y_train = train.rows().select_cols(&target_idx);
    // input ranges come from every row so held-out inputs are never clamped
    let input_scaler = MinMaxScaler::fit_matrix(&data.rows().select_cols(&input_idx), vec![false; input_idx.len()])?;
    let target_scaler = MinMaxScaler::fit_matrix(&y_train, vec![false; target_idx.len()])?;
    let degenerate = (0..target_idx.len()).all(|c| target_scaler.is_degenerate(c));

    let xs = input_scaler.transform(&x_train)?;
    let ys = target_scaler.transform(&y_train)?;

    let mut specs = Vec::new();
    let mut width = input_idx.len();
    for &h in &config.hidden {
        specs.push(LayerSpec::new(width, h, config.hidden_activation));
        width = h;
    }
    specs.push(LayerSpec::new(width, target_idx.len(), Activation::Linear));
    let mut params = MlpParams::init(&specs, &mut rng::stream(config.seed, "regressor-init"))?;
    let mut adam = AdamState::for_params(AdamConfig::standard(config.lr), &params)?;
    let mut shuffle = rng::stream(config.seed, "regressor-shuffle");

    if !degenerate {
        let batch = config.batch_size.max(1);
        let mut order: Vec<usize> = (0..xs.rows()).collect();
        for epoch in 0..config.epochs {
            order.shuffle(&mut shuffle);
            for (step, chunk) in order.chunks(batch).enumerate() {
                let xb = xs.select_rows(chunk);
                let yb = ys.select_rows(chunk);
                let (out, cache) = forward(&params, &xb)?;
                let scale = 2.0 / (out.data().len() as f64);
                let grad = Matrix::from_fn(out.rows(), out.cols(), |r, c| scale * (out[(r, c)] - yb[(r, c)]));
                let grads = backward(&params, &cache, &grad)?;
                if !grads.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        step,
                        detail: "non-finite regressor gradient".into(),
                    });
                }
                adam_update(&mut params, &grads, &mut adam)?;
            }
        }
    }

    let mut model = MlpRegressor {
        params,
        input_names: names(&input_idx),
        target_names: names(&target_idx),
        input_scaler,
        target_scaler,
        metrics: RegressionMetrics::compute(&Matrix::zeros(0, 0), &Matrix::zeros(0, 0)),
        degenerate,
    };
    let x_test = test.rows().select_cols(&input_idx);
    let y_test = test.rows().select_cols(&target_idx);
    let pred = model.predict(&x_test)?;
    model.metrics = RegressionMetrics::compute(&pred, &y_test);
    Ok(model)
}

impl MlpRegressor {
    /// Predictions in physical units; `rows` holds the input features in
    /// `input_names` order.
    pub fn predict(&self, rows: &Matrix) -> Result<Matrix> {
        let xs = self.input_scaler.transform(rows)?;
        let out = self.params.infer(&xs)?;
        if self.degenerate {
            // every target is constant; the network output carries no information
            return self.target_scaler.inverse_transform(&Matrix::zeros(out.rows(), out.cols()));
        }
        self.target_scaler.inverse_transform(&out)
    }

    /// Predictions for the rows of `data`, matching input columns by name.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Matrix> {
        let idx = self.input_columns(data)?;
        self.predict(&data.rows().select_cols(&idx))
    }

    pub fn input_columns(&self, data: &Dataset) -> Result<Vec<usize>> {
        self.input_names
            .iter()
            .map(|n| {
                data.schema()
                    .index_of(n)
                    .ok_or_else(|| Error::validation(format!("dataset lacks regressor input `{n}`")))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RegressorCheckpoint {
            format: REGRESSOR_FORMAT.into(),
            version: REGRESSOR_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: RegressorCheckpoint = serde_json::from_str(text)?;
        if ck.format != REGRESSOR_FORMAT || ck.version != REGRESSOR_VERSION {
            return Err(Error::validation(format!(
                "unsupported regressor checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        MlpParams::from_layers(ck.model.params.layers.clone())?;
        Ok(ck.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
