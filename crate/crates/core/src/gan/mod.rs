//! Tabular GAN with optional spectral conditioning of the discriminator.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, FeatureSchema, MinMaxScaler};
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig, EvalReport, Simulator};
use crate::linalg::{spectral_norm, spectral_norm_estimate, svd, svd_warm, Matrix, PowerIterState, SvdResult};
use crate::nn::{
    adam_update, backward, bce_with_logits, forward, Activation, AdamConfig, AdamState, LayerSpec, MlpGrads,
    MlpParams,
};
use crate::rng::{self, StreamRng};

pub const GAN_FORMAT: &str = "circuit-augmentor/gan";
pub const GAN_VERSION: u32 = 1;
const SIGMA_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerMode {
    None,
    SpectralNorm,
    SpectralReg { i_fraction: f64 },
}

impl RegularizerMode {
    pub fn validate(&self) -> Result<()> {
        if let RegularizerMode::SpectralReg { i_fraction } = *self {
            if !(i_fraction > 0.0 && i_fraction <= 1.0) {
                return Err(Error::validation(format!("i_fraction must lie in (0, 1], got {i_fraction}")));
            }
        }
        Ok(())
    }

    /// Number of leading singular values lifted to σ₁ for a matrix with
    /// `rank_bound = min(rows, cols)`.
    pub fn top_count(i_fraction: f64, rank_bound: usize) -> usize {
        ((i_fraction * rank_bound as f64).round() as usize).clamp(1, rank_bound.max(1))
    }
}

impl fmt::Display for RegularizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegularizerMode::None => write!(f, "none"),
            RegularizerMode::SpectralNorm => write!(f, "spectral_norm"),
            RegularizerMode::SpectralReg { i_fraction } => write!(f, "spectral_reg({i_fraction})"),
        }
    }
}

impl FromStr for RegularizerMode {
    type Err = Error;

    /// `none`, `spectral_norm`, `spectral_reg` or `spectral_reg(0.25)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mode = match s {
            "none" => RegularizerMode::None,
            "spectral_norm" => RegularizerMode::SpectralNorm,
            "spectral_reg" => RegularizerMode::SpectralReg { i_fraction: 0.5 },
            _ => {
                let f = s
                    .strip_prefix("spectral_reg(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::validation(format!("unknown regularizer `{s}`")))?;
                RegularizerMode::SpectralReg { i_fraction: f }
            }
        };
        mode.validate()?;
        Ok(mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// `-E log D(G(z))`
    NonSaturating,
    /// `E log(1 - D(G(z)))`
    Minimax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    /// `None` picks `max(8, data_dim)`.
    pub latent_dim: Option<usize>,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub disc_steps_per_gen_step: usize,
    pub regularizer: RegularizerMode,
    pub generator_loss: GeneratorLoss,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: None,
            gen_hidden: vec![64, 64, 64],
            disc_hidden: vec![64, 64, 64],
            lr: 0.0005,
            batch_size: 64,
            epochs: 2000,
            disc_steps_per_gen_step: 1,
            regularizer: RegularizerMode::SpectralReg { i_fraction: 0.5 },
            generator_loss: GeneratorLoss::NonSaturating,
            seed: 0,
            eval_every: 100,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == Some(0) {
            return Err(Error::validation("latent_dim must be >= 1"));
        }
        for (name, h) in [("gen_hidden", &self.gen_hidden), ("disc_hidden", &self.disc_hidden)] {
            if h.is_empty() || h.len() > 8 {
                return Err(Error::validation(format!("{name} must list 1 to 8 widths, got {}", h.len())));
            }
            if h.contains(&0) {
                return Err(Error::validation(format!("{name} widths must be >= 1")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::validation("batch_size must be >= 2"));
        }
        if self.disc_steps_per_gen_step == 0 {
            return Err(Error::validation("disc_steps_per_gen_step must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::validation("eval_every must be >= 1"));
        }
        self.regularizer.validate()
    }

    pub fn latent_for(&self, data_dim: usize) -> usize {
        self.latent_dim.unwrap_or(data_dim.max(8))
    }
}

/// `w / σ̂` with σ̂ from one warm-started power-iteration step. Returns the
/// input unchanged when σ̂ is below the zero-matrix guard.
pub fn apply_spectral_normalization(w: &Matrix, state: &PowerIterState) -> (Matrix, PowerIterState) {
    apply_spectral_normalization_iters(w, state, 1)
}

pub fn apply_spectral_normalization_iters(w: &Matrix, state: &PowerIterState, iters: usize) -> (Matrix, PowerIterState) {
    let (sigma, next) = spectral_norm(w, state, iters);
    if sigma < SIGMA_GUARD {
        return (w.clone(), next);
    }
    (w.scale(1.0 / sigma), next)
}

/// Lifts the top `i` singular values of `w` to σ₁ and divides by σ₁.
pub fn apply_spectral_regularization(w: &Matrix, i: usize) -> Result<Matrix> {
    regularize_from_svd(w, &svd(w)?, i).map(|(m, _)| m)
}

/// Regularized matrix plus the σ₁ it was divided by (1 for the zero guard).
fn regularize_from_svd(w: &Matrix, s: &SvdResult, i: usize) -> Result<(Matrix, f64)> {
    let r = s.sigma.len();
    if i == 0 || i > r {
        return Err(Error::validation(format!("spectral regularization needs 1 <= i <= {r}, got {i}")));
    }
    let top = s.sigma[0];
    if top < SIGMA_GUARD {
        return Ok((w.clone(), 1.0));
    }
    let values: Vec<f64> = s
        .sigma
        .iter()
        .enumerate()
        .map(|(j, &v)| if j < i { 1.0 } else { v / top })
        .collect();
    Ok((s.compose(&values), top))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub pct_features: Vec<String>,
    pub pct_error: Vec<f64>,
    pub mean_pct_error: Option<f64>,
    pub mean_kl: f64,
    pub diversity: Option<f64>,
    pub collapsed: Option<bool>,
    pub disc_spectra: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    /// One row per evaluated epoch; spectra as `;`-joined values per layer.
    pub fn to_csv(&self) -> String {
        let pct_names: Vec<String> = self
            .entries
            .first()
            .map(|e| e.pct_features.clone())
            .unwrap_or_default();
        let layers = self.entries.first().map_or(0, |e| e.disc_spectra.len());
        let mut s = String::from("epoch,d_loss,g_loss,mean_pct_error,mean_kl,diversity,collapsed");
        for n in &pct_names {
            s.push_str(&format!(",pct_{n}"));
        }
        for l in 0..layers {
            s.push_str(&format!(",sv_layer{l}"));
        }
        s.push('\n');
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
        for e in &self.entries {
            s.push_str(&format!(
                "{},{:?},{:?},{},{:?},{},{}",
                e.epoch,
                e.d_loss,
                e.g_loss,
                opt(e.mean_pct_error),
                e.mean_kl,
                opt(e.diversity),
                e.collapsed.map_or(String::new(), |c| c.to_string())
            ));
            for v in &e.pct_error {
                s.push_str(&format!(",{v:?}"));
            }
            for sp in &e.disc_spectra {
                let joined: Vec<String> = sp.iter().map(|v| format!("{v:?}")).collect();
                s.push(',');
                s.push_str(&joined.join(";"));
            }
            s.push('\n');
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    pub config: GanConfig,
    pub data_dim: usize,
    pub latent_dim: usize,
    pub gen: MlpParams,
    pub disc: MlpParams,
    pub disc_power_states: Vec<PowerIterState>,
    /// Rotation bases from the last SVD of each discriminator matrix, used
    /// to warm-start the next one.
    #[serde(default)]
    pub disc_svd_bases: Vec<Option<Matrix>>,
    pub gen_adam: AdamState,
    pub disc_adam: AdamState,
    /// Fitted on the training data by [`GanModel::attach`]; unfitted until then.
    pub scaler: MinMaxScaler,
    pub schema: Option<FeatureSchema>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed generator steps.
    pub step: usize,
    pub log: TrainLog,
}

#[derive(Serialize, Deserialize)]
struct GanCheckpoint {
    format: String,
    version: u32,
    model: GanModel,
}

/// Discriminator with conditioned weights and the per-layer divisor used to
/// pass gradients back to the raw weights.
struct EffectiveDisc {
    params: MlpParams,
    scales: Vec<f64>,
}

pub fn build(config: &GanConfig, data_dim: usize) -> Result<GanModel> {
    GanModel::build(config, data_dim)
}

impl GanModel {
    pub fn build(config: &GanConfig, data_dim: usize) -> Result<Self> {
        config.validate()?;
        if data_dim == 0 {
            return Err(Error::validation("data_dim must be >= 1"));
        }
        let latent_dim = config.latent_for(data_dim);
        let leaky = Activation::leaky_relu();
        let chain = |input: usize, hidden: &[usize], out: usize, out_act: Activation| {
            let mut specs = Vec::new();
            let mut w = input;
            for &h in hidden {
                specs.push(LayerSpec::new(w, h, leaky));
                w = h;
            }
            specs.push(LayerSpec::new(w, out, out_act));
            specs
        };
        let mut init = rng::stream(config.seed, "init");
        let gen = MlpParams::init(&chain(latent_dim, &config.gen_hidden, data_dim, Activation::Tanh), &mut init)?;
        let disc = MlpParams::init(&chain(data_dim, &config.disc_hidden, 1, Activation::Linear), &mut init)?;
        let disc_power_states: Vec<PowerIterState> = disc
            .layers
            .iter()
            .map(|l| PowerIterState::new(l.weights.rows(), &mut init))
            .collect();
        Ok(Self {
            gen_adam: AdamState::for_params(AdamConfig::gan(config.lr), &gen)?,
            disc_adam: AdamState::for_params(AdamConfig::gan(config.lr), &disc)?,
            config: config.clone(),
            data_dim,
            latent_dim,
            gen,
            disc,
            disc_svd_bases: vec![None; disc_power_states.len()],
            disc_power_states,
            scaler: MinMaxScaler::default(),
            schema: None,
            epoch: 0,
            step: 0,
            log: TrainLog::default(),
        })
    }

    /// Fits the scaler to `data` and records its schema.
    pub fn attach(&mut self, data: &Dataset) -> Result<()> {
        if data.schema().len() != self.data_dim {
            return Err(Error::Dimension {
                context: "GAN data dimension",
                expected: self.data_dim,
                got: data.schema().len(),
            });
        }
        self.scaler = MinMaxScaler::fit(data)?;
        self.schema = Some(data.schema().clone());
        Ok(())
    }

    fn latent_batch(&self, n: usize, rng: &mut StreamRng) -> Matrix {
        Matrix::random_normal(n, self.latent_dim, rng)
    }

    /// Conditioned discriminator. `advance` runs one power-iteration step
    /// and stores it; otherwise the stored vectors are only read.
    fn effective_disc(&mut self, advance: bool) -> Result<EffectiveDisc> {
        let mut params = self.disc.clone();
        let mut scales = vec![1.0; params.layers.len()];
        match self.config.regularizer {
            RegularizerMode::None => {}
            RegularizerMode::SpectralNorm => {
                for (l, layer) in params.layers.iter_mut().enumerate() {
                    let sigma = if advance {
                        let (s, next) = spectral_norm(&layer.weights, &self.disc_power_states[l], 1);
                        self.disc_power_states[l] = next;
                        s
                    } else {
                        spectral_norm_estimate(&layer.weights, &self.disc_power_states[l])
                    };
                    if sigma >= SIGMA_GUARD {
                        layer.weights = layer.weights.scale(1.0 / sigma);
                        scales[l] = sigma;
                    }
                }
            }
            RegularizerMode::SpectralReg { i_fraction } => {
                for (l, layer) in params.layers.iter_mut().enumerate() {
                    let r = layer.weights.rows().min(layer.weights.cols());
                    let i = RegularizerMode::top_count(i_fraction, r);
                    if self.disc_svd_bases.len() != self.disc.layers.len() {
                        self.disc_svd_bases = vec![None; self.disc.layers.len()];
                    }
                    let dec = svd_warm(&layer.weights, self.disc_svd_bases[l].as_ref())?;
                    let (w, s) = regularize_from_svd(&layer.weights, &dec, i)?;
                    self.disc_svd_bases[l] = Some(dec.warm_basis());
                    layer.weights = w;
                    scales[l] = s;
                }
            }
        }
        Ok(EffectiveDisc { params, scales })
    }

    /// Exact singular values of every discriminator matrix as it would be
    /// used in the next forward pass.
    pub fn disc_spectra(&self) -> Result<Vec<Vec<f64>>> {
        let mut probe = self.clone();
        let eff = probe.effective_disc(false)?;
        eff.params.layers.iter().map(|l| svd(&l.weights).map(|s| s.sigma)).collect()
    }

    /// Discriminator matrices as used in the next forward pass.
    pub fn used_disc_weights(&self) -> Result<Vec<Matrix>> {
        let mut probe = self.clone();
        Ok(probe.effective_disc(false)?.params.layers.into_iter().map(|l| l.weights).collect())
    }

    fn training_error(&self, detail: impl Into<String>) -> Error {
        Error::Training {
            epoch: self.epoch,
            step: self.step,
            detail: detail.into(),
        }
    }

    /// One generator step preceded by `disc_steps_per_gen_step`
    /// discriminator steps. Returns the last discriminator loss and the
    /// generator loss.
    pub fn train_step(&mut self, real: &Matrix, rng: &mut StreamRng) -> Result<(f64, f64)> {
        if real.rows() < 2 {
            return Err(Error::validation("a real batch needs at least two rows"));
        }
        if real.cols() != self.data_dim {
            return Err(Error::Dimension {
                context: "real batch columns",
                expected: self.data_dim,
                got: real.cols(),
            });
        }
        let n = real.rows();
        let mut d_loss = 0.0;
        for _ in 0..self.config.disc_steps_per_gen_step {
            let eff = self.effective_disc(true)?;
            let fake = self.gen.infer(&self.latent_batch(n, rng))?;
            let x = real.vstack(&fake)?;
            let (logits, cache) = forward(&eff.params, &x)?;
            let labels: Vec<f64> = (0..2 * n).map(|r| if r < n { 1.0 } else { 0.0 }).collect();
            let (loss, g) = bce_with_logits(logits.data(), &labels);
            if !loss.is_finite() {
                return Err(self.training_error("non-finite discriminator loss"));
            }
            let mut grads = backward(&eff.params, &cache, &Matrix::new(2 * n, 1, g)?)?;
            rescale(&mut grads, &eff.scales);
            if !grads.is_finite() {
                return Err(self.training_error("non-finite discriminator gradient"));
            }
            adam_update(&mut self.disc, &grads, &mut self.disc_adam)?;
            d_loss = loss;
        }

        let eff = self.effective_disc(false)?;
        let z = self.latent_batch(n, rng);
        let (fake, g_cache) = forward(&self.gen, &z)?;
        let (logits, d_cache) = forward(&eff.params, &fake)?;
        let (g_loss, g) = match self.config.generator_loss {
            GeneratorLoss::NonSaturating => bce_with_logits(logits.data(), &vec![1.0; n]),
            GeneratorLoss::Minimax => {
                let (l, g) = bce_with_logits(logits.data(), &vec![0.0; n]);
                (-l, g.into_iter().map(|v| -v).collect())
            }
        };
        if !g_loss.is_finite() {
            return Err(self.training_error("non-finite generator loss"));
        }
        let d_grads = backward(&eff.params, &d_cache, &Matrix::new(n, 1, g)?)?;
        let grads = backward(&self.gen, &g_cache, &d_grads.input)?;
        if !grads.is_finite() {
            return Err(self.training_error("non-finite generator gradient"));
        }
        adam_update(&mut self.gen, &grads, &mut self.gen_adam)?;
        self.step += 1;
        Ok((d_loss, g_loss))
    }

    /// `n` generated rows in physical units.
    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::validation("sample count must be >= 1"));
        }
        let schema = self
            .schema
            .clone()
            .ok_or_else(|| Error::validation("GAN has not been attached to training data"))?;
        let raw = self.gen.infer(&self.latent_batch(n, rng))?;
        Dataset::new(schema, self.scaler.inverse_transform(&raw)?)
    }

    /// Generator outputs before inverse scaling.
    pub fn sample_scaled(&self, n: usize, rng: &mut StreamRng) -> Result<Matrix> {
        self.gen.infer(&self.latent_batch(n, rng))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GanCheckpoint {
            format: GAN_FORMAT.into(),
            version: GAN_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: GanCheckpoint = serde_json::from_str(text)?;
        if ck.format != GAN_FORMAT || ck.version != GAN_VERSION {
            return Err(Error::validation(format!(
                "unsupported GAN checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let m = ck.model;
        m.config.validate()?;
        MlpParams::from_layers(m.gen.layers.clone())?;
        MlpParams::from_layers(m.disc.layers.clone())?;
        if m.gen.input_dim() != m.latent_dim
            || m.gen.output_dim() != m.data_dim
            || m.disc.input_dim() != m.data_dim
            || m.disc.output_dim() != 1
            || m.disc_power_states.len() != m.disc.layers.len()
        {
            return Err(Error::validation("GAN checkpoint has inconsistent shapes"));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Gradient through `W / s` with `s` held constant.
fn rescale(grads: &mut MlpGrads, scales: &[f64]) {
    for (w, &s) in grads.weights.iter_mut().zip(scales) {
        if s != 1.0 {
            *w = w.scale(1.0 / s);
        }
    }
}

pub struct TrainOutcome {
    pub best: GanModel,
    pub final_model: GanModel,
    pub log: TrainLog,
}

/// Trains for `config.epochs` epochs, calling `evaluator` every
/// `eval_every` epochs and after the last one. The best model is the
/// evaluated checkpoint with the lowest [`EvalReport::score`].
pub fn train(
    mut model: GanModel,
    data: &Dataset,
    evaluator: &mut dyn FnMut(&GanModel) -> Result<EvalReport>,
) -> Result<TrainOutcome> {
    if data.len() < 2 {
        return Err(Error::validation("GAN training needs at least two rows"));
    }
    if model.schema.is_none() {
        model.attach(data)?;
    }
    let scaled = model.scaler.transform(data.rows())?;
    let seed = model.config.seed;
    let mut shuffle = rng::stream(seed, "shuffle");
    let mut latent = rng::stream(seed, "latent");
    let batch = model.config.batch_size.min(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best: Option<(f64, GanModel)> = None;
    let total = model.config.epochs;
    let eval_every = model.config.eval_every;

    for _ in 0..total {
        order.shuffle(&mut shuffle);
        let (mut d_sum, mut g_sum, mut steps) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(batch) {
            if chunk.len() < 2 {
                continue;
            }
            let (d, g) = model.train_step(&scaled.select_rows(chunk), &mut latent)?;
            d_sum += d;
            g_sum += g;
            steps += 1;
        }
        model.epoch += 1;
        if model.epoch.is_multiple_of(eval_every) || model.epoch == total {
            let report = evaluator(&model).map_err(|e| Error::Eval(format!("evaluator failed at epoch {}: {e}", model.epoch)))?;
            let steps = steps.max(1) as f64;
            let pct = report.pct_error.as_ref();
            let entry = LogEntry {
                epoch: model.epoch,
                d_loss: d_sum / steps,
                g_loss: g_sum / steps,
                pct_features: pct.map(|p| p.features.clone()).unwrap_or_default(),
                pct_error: pct.map(|p| p.per_feature.clone()).unwrap_or_default(),
                mean_pct_error: pct.map(|p| p.mean),
                mean_kl: report.kl.mean,
                diversity: report.collapse.as_ref().map(|c| c.diversity_score),
                collapsed: report.collapse.as_ref().map(|c| c.collapsed),
                disc_spectra: report.disc_spectra.clone(),
            };
            if !(entry.d_loss.is_finite() && entry.g_loss.is_finite() && report.is_finite()) {
                return Err(model.training_error("non-finite value in evaluation log"));
            }
            model.log.entries.push(entry);
            let score = report.score();
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, model.clone()));
            }
        }
    }
    let log = model.log.clone();
    let best = best.map_or_else(|| model.clone(), |(_, m)| m);
    Ok(TrainOutcome {
        best,
        final_model: model,
        log,
    })
}

/// Evaluator that samples `config.samples` rows with a per-epoch stream and
/// runs the full battery against `training`.
pub fn standard_evaluator<'a>(
    training: &'a Dataset,
    sim: Option<&'a dyn Simulator>,
    config: EvalConfig,
) -> impl FnMut(&GanModel) -> Result<EvalReport> + 'a {
    move |model: &GanModel| {
        let mut r = rng::stream(model.config.seed, &format!("eval-{}", model.epoch));
        let generated = model.sample(config.samples.max(1), &mut r)?;
        eval::evaluate(model.epoch, &generated, training, sim, model.disc_spectra()?, &config)
    }
}
