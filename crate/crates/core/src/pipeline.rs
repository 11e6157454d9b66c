//! Config-driven orchestration behind the `circuit-augmentor` binary.
//!
//! Every subcommand writes into `<out>/<run-id>/`, where the run id is
//! derived from the subcommand and a hash of the effective configuration,
//! and finishes by writing `manifest.json` listing each artifact with its
//! sha256. Nothing time-dependent is recorded, so identical inputs give
//! byte-identical run directories.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boost::{augmentation_experiment, AugmentationRecord, ExperimentConfig, GbrtConfig};
use crate::dataio::{self, Dataset};
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig, EvalReport, Simulator};
use crate::gan::{self, GanConfig, GanModel, RegularizerMode};
use crate::oracle::{generate_dataset, Netlist, OracleConstants, OracleKind, OracleSimulator, SamplingRanges};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Oracle to sample from (`NAND2`, `FA`, `current_reference`, ...).
    pub oracle: Option<String>,
    /// Existing CSV plus schema; used instead of the oracle when set.
    pub csv: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub rows: usize,
    pub ranges: SamplingRanges,
    /// Constants table; the shipped table when absent.
    pub constants: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            oracle: Some("NAND2".into()),
            csv: None,
            schema: None,
            rows: 500,
            ranges: SamplingRanges::default(),
            constants: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Built-in netlist name (`c17`, `rca4`) or a netlist TOML path.
    pub netlist: String,
    pub real_rows: usize,
    pub artificial_rows: usize,
    pub seeds: Vec<u64>,
    pub eval_points: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            netlist: "c17".into(),
            real_rows: 100,
            artificial_rows: 2000,
            seeds: vec![0, 1, 2, 3, 4],
            eval_points: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub layers: Vec<usize>,
    pub lrs: Vec<f64>,
    pub regularizers: Vec<String>,
    pub width: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            layers: vec![2, 3, 4],
            lrs: vec![0.00025, 0.0005, 0.001],
            regularizers: vec!["none".into(), "spectral_norm".into(), "spectral_reg(0.5)".into()],
            width: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub rows: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { rows: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; every component derives its own stream from it.
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetSection,
    pub gan: GanConfig,
    pub eval: EvalConfig,
    pub boost: GbrtConfig,
    pub experiment: ExperimentSection,
    pub sweep: SweepSection,
    pub sample: SampleSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs"),
            dataset: DatasetSection::default(),
            gan: GanConfig::default(),
            eval: EvalConfig::default(),
            boost: GbrtConfig::default(),
            experiment: ExperimentSection::default(),
            sweep: SweepSection::default(),
            sample: SampleSection::default(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl PipelineConfig {
    /// Parses TOML. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            detail: e.to_string(),
        })?;
        let base = origin.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.out);
        for p in [&mut cfg.dataset.csv, &mut cfg.dataset.schema, &mut cfg.dataset.constants]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if Netlist::builtin(&cfg.experiment.netlist).is_none() {
            let p = base.join(&cfg.experiment.netlist);
            cfg.experiment.netlist = p.to_string_lossy().into_owned();
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(e) = o.epochs {
            self.gan.epochs = e;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        self.gan.seed = self.seed;
        self.gan.eval_every = self.eval.eval_every;
        self.boost.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match (&d.oracle, &d.csv) {
            (None, None) => return Err(Error::validation("[dataset] needs `oracle` or `csv`")),
            (_, Some(csv)) => {
                let schema = d
                    .schema
                    .as_ref()
                    .ok_or_else(|| Error::validation("[dataset] `csv` needs a `schema` file"))?;
                for p in [csv, schema] {
                    if !p.exists() {
                        return Err(Error::validation(format!("referenced file {} does not exist", p.display())));
                    }
                }
            }
            (Some(o), None) => {
                o.parse::<OracleKind>()?;
            }
        }
        if let Some(c) = &d.constants {
            if !c.exists() {
                return Err(Error::validation(format!("referenced file {} does not exist", c.display())));
            }
        }
        if d.rows == 0 {
            return Err(Error::validation("[dataset] rows must be >= 1"));
        }
        d.ranges.validate()?;
        self.gan.validate()?;
        self.boost.validate()?;
        if self.eval.bins < 2 || self.eval.eval_every == 0 || self.eval.samples == 0 {
            return Err(Error::validation("[eval] needs bins >= 2, eval_every >= 1, samples >= 1"));
        }
        let e = &self.experiment;
        if e.seeds.is_empty() {
            return Err(Error::validation("[experiment] seeds must be non-empty"));
        }
        if Netlist::builtin(&e.netlist).is_none() && !Path::new(&e.netlist).exists() {
            return Err(Error::validation(format!("netlist `{}` is neither built in nor a file", e.netlist)));
        }
        Ok(())
    }

    fn constants(&self) -> Result<OracleConstants> {
        match &self.dataset.constants {
            Some(p) => OracleConstants::load(p),
            None => Ok(OracleConstants::default()),
        }
    }

    fn oracle_kind(&self) -> Result<Option<OracleKind>> {
        if self.dataset.csv.is_some() {
            return Ok(None);
        }
        self.dataset.oracle.as_deref().map(str::parse).transpose()
    }

    fn netlist(&self) -> Result<Netlist> {
        match Netlist::builtin(&self.experiment.netlist) {
            Some(n) => Ok(n),
            None => Netlist::load(Path::new(&self.experiment.netlist)),
        }
    }

    /// Training data for this config: the CSV if given, else oracle samples.
    pub fn dataset(&self) -> Result<Dataset> {
        match (&self.dataset.csv, &self.dataset.schema) {
            (Some(csv), Some(schema)) => dataio::load_csv(csv, schema),
            _ => {
                let kind = self.oracle_kind()?.ok_or_else(|| Error::validation("[dataset] has no oracle"))?;
                generate_dataset(kind, &self.dataset.ranges, self.dataset.rows, self.seed, &self.constants()?)
            }
        }
    }

    fn simulator(&self) -> Result<Option<OracleSimulator>> {
        Ok(match self.oracle_kind()? {
            Some(k) => Some(OracleSimulator::new(k, self.constants()?)),
            None => None,
        })
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    GenData,
    TrainGan,
    Sweep,
    Sample,
    Eval,
    AugmentTrain,
    Report,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::GenData => "gen-data",
            Subcommand::TrainGan => "train-gan",
            Subcommand::Sweep => "sweep",
            Subcommand::Sample => "sample",
            Subcommand::Eval => "eval",
            Subcommand::AugmentTrain => "augment-train",
            Subcommand::Report => "report",
        }
    }
}

/// Per-invocation inputs that are not part of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub checkpoint: Option<PathBuf>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub checkpoint_sha256: Option<String>,
    pub artifacts: Vec<ArtifactEntry>,
}

struct RunDir {
    root: PathBuf,
    artifacts: Vec<ArtifactEntry>,
}

impl RunDir {
    fn create(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            artifacts: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, content: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(ArtifactEntry {
            path: rel.to_string(),
            sha256: sha256_hex(content),
            bytes: content.len(),
        });
        Ok(())
    }

    fn write_dataset(&mut self, stem: &str, data: &Dataset) -> Result<()> {
        self.write(&format!("{stem}.csv"), data.to_csv_string().as_bytes())?;
        self.write(&format!("{stem}.schema.toml"), data.schema().to_toml().as_bytes())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Runs one subcommand end to end.
pub fn run(cmd: Subcommand, mut config: PipelineConfig, overrides: &Overrides, opts: &RunOptions) -> Result<RunSummary> {
    config.apply(overrides);
    config.validate()?;
    let config_hash = config.hash()?;
    let checkpoint = match cmd {
        Subcommand::Sample | Subcommand::Eval => Some(
            opts.checkpoint
                .clone()
                .ok_or_else(|| Error::validation(format!("`{}` needs --checkpoint", cmd.name())))?,
        ),
        Subcommand::Report => opts.checkpoint.clone(),
        _ => None,
    };
    let checkpoint_sha256 = match &checkpoint {
        Some(p) => Some(sha256_hex(&fs::read(p).map_err(|e| Error::io(p, e))?)),
        None => None,
    };
    let id_source = format!("{}\n{}\n{}", cmd.name(), config_hash, checkpoint_sha256.as_deref().unwrap_or(""));
    let run_id = format!("{}-{}", cmd.name(), &sha256_hex(id_source.as_bytes())[..12]);
    let mut dir = RunDir::create(config.out.join(&run_id))?;
    dir.write_json("config.json", &config)?;

    let model = checkpoint.as_deref().map(GanModel::load).transpose()?;
    match cmd {
        Subcommand::GenData => gen_data(&config, &mut dir)?,
        Subcommand::TrainGan => train_gan(&config, &mut dir)?,
        Subcommand::Sweep => sweep(&config, opts.jobs, &mut dir)?,
        Subcommand::Sample => sample(&config, model.as_ref().expect("checked above"), &mut dir)?,
        Subcommand::Eval => eval_checkpoint(&config, model.as_ref().expect("checked above"), &mut dir)?,
        Subcommand::AugmentTrain => augment_train(&config, opts.jobs, &mut dir)?,
        Subcommand::Report => report(&config, model.as_ref(), &mut dir)?,
    }

    let mut artifacts = dir.artifacts.clone();
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        subcommand: cmd.name().into(),
        run_id,
        config_hash,
        seed: config.seed,
        checkpoint_sha256,
        artifacts,
    };
    let path = dir.root.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(RunSummary {
        dir: dir.root,
        manifest,
    })
}

fn gen_data(config: &PipelineConfig, dir: &mut RunDir) -> Result<()> {
    let data = config.dataset()?;
    log::info!("generated {} rows", data.len());
    dir.write_dataset("data", &data)
}

struct Trained {
    outcome: gan::TrainOutcome,
    reports: Vec<EvalReport>,
}

fn train_on(gan_config: &GanConfig, data: &Dataset, sim: Option<&dyn Simulator>, eval_cfg: EvalConfig) -> Result<Trained> {
    let model = GanModel::build(gan_config, data.schema().len())?;
    let mut inner = gan::standard_evaluator(data, sim, eval_cfg);
    let mut reports = Vec::new();
    let mut evaluator = |m: &GanModel| {
        let r = inner(m)?;
        log::info!("epoch {} score {:.4}", r.epoch, r.score());
        reports.push(r.clone());
        Ok(r)
    };
    let outcome = gan::train(model, data, &mut evaluator)?;
    Ok(Trained { outcome, reports })
}

fn train_gan(config: &PipelineConfig, dir: &mut RunDir) -> Result<()> {
    let data = config.dataset()?;
    let sim = config.simulator()?;
    let t = train_on(&config.gan, &data, sim.as_ref().map(|s| s as &dyn Simulator), config.eval)?;
    dir.write("checkpoint_best.json", t.outcome.best.to_json()?.as_bytes())?;
    dir.write("checkpoint_final.json", t.outcome.final_model.to_json()?.as_bytes())?;
    dir.write("train_log.csv", t.outcome.log.to_csv().as_bytes())?;
    for r in &t.reports {
        dir.write_json(&format!("reports/epoch_{:05}.json", r.epoch), r)?;
    }
    Ok(())
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub regularizer: String,
    pub layers: usize,
    pub lr: f64,
    pub best_epoch: usize,
    pub best_score: f64,
    pub final_mean_kl: f64,
    pub final_mean_pct_error: Option<f64>,
    pub any_collapse: bool,
}

pub const SWEEP_CSV_HEADER: &str =
    "regularizer,layers,lr,best_epoch,best_score,final_mean_kl,final_mean_pct_error,any_collapse";

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::validation(format!("cannot start worker pool: {e}")))
}

fn sweep(config: &PipelineConfig, jobs: Option<usize>, dir: &mut RunDir) -> Result<()> {
    let s = &config.sweep;
    if s.layers.is_empty() || s.lrs.is_empty() || s.regularizers.is_empty() || s.width == 0 {
        return Err(Error::validation("[sweep] needs layers, lrs, regularizers and width >= 1"));
    }
    let modes: Vec<RegularizerMode> = s.regularizers.iter().map(|r| r.parse()).collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for mode in &modes {
        for &layers in &s.layers {
            for &lr in &s.lrs {
                cells.push(GanConfig {
                    gen_hidden: vec![s.width; layers],
                    disc_hidden: vec![s.width; layers],
                    lr,
                    regularizer: *mode,
                    ..config.gan.clone()
                });
            }
        }
    }
    for c in &cells {
        c.validate()?;
    }
    let data = config.dataset()?;
    let sim = config.simulator()?;
    let pool = thread_pool(jobs)?;
    let results: Vec<Result<Trained>> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| train_on(c, &data, sim.as_ref().map(|s| s as &dyn Simulator), config.eval))
            .collect()
    });

    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    for (cell, res) in cells.iter().zip(results) {
        let t = res?;
        let name = format!("{}_l{}_lr{}", cell.regularizer, cell.gen_hidden.len(), cell.lr);
        let best_epoch = t.outcome.best.epoch;
        let best_score = t
            .reports
            .iter()
            .find(|r| r.epoch == best_epoch)
            .map_or(f64::NAN, EvalReport::score);
        let last = t.reports.last().ok_or_else(|| Error::Eval("sweep cell produced no report".into()))?;
        let row = SweepRow {
            regularizer: cell.regularizer.to_string(),
            layers: cell.gen_hidden.len(),
            lr: cell.lr,
            best_epoch,
            best_score,
            final_mean_kl: last.kl.mean,
            final_mean_pct_error: last.pct_error.as_ref().map(|p| p.mean),
            any_collapse: t.reports.iter().any(|r| r.collapse.as_ref().is_some_and(|c| c.collapsed)),
        };
        csv.push_str(&format!(
            "\"{}\",{},{:?},{},{:?},{:?},{},{}\n",
            row.regularizer,
            row.layers,
            row.lr,
            row.best_epoch,
            row.best_score,
            row.final_mean_kl,
            row.final_mean_pct_error.map(|v| format!("{v:?}")).unwrap_or_default(),
            row.any_collapse
        ));
        dir.write(&format!("cells/{name}/train_log.csv"), t.outcome.log.to_csv().as_bytes())?;
        dir.write(&format!("cells/{name}/checkpoint_best.json"), t.outcome.best.to_json()?.as_bytes())?;
    }
    dir.write("sweep_summary.csv", csv.as_bytes())
}

fn sample(config: &PipelineConfig, model: &GanModel, dir: &mut RunDir) -> Result<()> {
    let mut r = rng::stream(config.seed, "sample");
    let data = model.sample(config.sample.rows.max(1), &mut r)?;
    dir.write_dataset("samples", &data)
}

fn eval_checkpoint(config: &PipelineConfig, model: &GanModel, dir: &mut RunDir) -> Result<()> {
    let training = config.dataset()?;
    let sim = config.simulator()?;
    let mut r = rng::stream(config.seed, "eval");
    let generated = model.sample(config.eval.samples, &mut r)?;
    if generated.schema() != training.schema() {
        return Err(Error::validation("checkpoint schema differs from the configured dataset"));
    }
    let report = eval::evaluate(
        model.epoch,
        &generated,
        &training,
        sim.as_ref().map(|s| s as &dyn Simulator),
        model.disc_spectra()?,
        &config.eval,
    )?;
    dir.write_json("report.json", &report)
}

/// Output of `augment-train`: one record per seed plus the aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSummary {
    pub circuit: String,
    pub seeds: Vec<u64>,
    pub records: Vec<AugmentationRecord>,
    pub wins: usize,
    pub median_relative_reduction: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Real data from the oracle, a GAN trained on it, artificial rows from
/// the best checkpoint, then the GBRT comparison. Deterministic in `seed`.
pub fn augmentation_run(
    netlist: &Netlist,
    gan_config: &GanConfig,
    eval_cfg: EvalConfig,
    experiment: &ExperimentSection,
    ranges: &SamplingRanges,
    gbrt: &GbrtConfig,
    constants: &OracleConstants,
    seed: u64,
) -> Result<AugmentationRecord> {
    let kinds = netlist.kind_counts();
    if kinds.len() != 1 {
        return Err(Error::validation(format!("netlist `{}` must use a single gate kind", netlist.name())));
    }
    let kind = OracleKind::Gate(*kinds.keys().next().expect("one kind"));
    let real = generate_dataset(kind, ranges, experiment.real_rows, seed, constants)?;
    let sim = OracleSimulator::new(kind, constants.clone());
    let cfg = GanConfig {
        seed,
        ..gan_config.clone()
    };
    let artificial = if experiment.artificial_rows == 0 {
        real.select_rows(&[])
    } else {
        let t = train_on(&cfg, &real, Some(&sim), eval_cfg)?;
        t.outcome.best.sample(experiment.artificial_rows, &mut rng::stream(seed, "artificial"))?
    };
    let ec = ExperimentConfig {
        gbrt: GbrtConfig { seed, ..gbrt.clone() },
        eval_points: experiment.eval_points,
        ranges: ranges.clone(),
        seed,
    };
    augmentation_experiment(&real, &artificial, netlist, constants, &ec)
}

fn augment_train(config: &PipelineConfig, jobs: Option<usize>, dir: &mut RunDir) -> Result<()> {
    let netlist = config.netlist()?;
    let constants = config.constants()?;
    let pool = thread_pool(jobs)?;
    let records: Vec<AugmentationRecord> = pool.install(|| {
        config
            .experiment
            .seeds
            .par_iter()
            .map(|&s| {
                augmentation_run(
                    &netlist,
                    &config.gan,
                    config.eval,
                    &config.experiment,
                    &config.dataset.ranges,
                    &config.boost,
                    &constants,
                    s,
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let reductions: Vec<f64> = records.iter().map(AugmentationRecord::relative_reduction).collect();
    let summary = AugmentationSummary {
        circuit: netlist.name().to_string(),
        seeds: config.experiment.seeds.clone(),
        wins: records.iter().filter(|r| r.pct_error_augmented < r.pct_error_real).count(),
        median_relative_reduction: median(&reductions),
        records,
    };
    dir.write_json("augmentation.json", &summary)
}

fn report(config: &PipelineConfig, model: Option<&GanModel>, dir: &mut RunDir) -> Result<()> {
    let training = config.dataset()?;
    let names: Vec<String> = training.schema().names().iter().map(|s| s.to_string()).collect();
    let hists = names
        .iter()
        .map(|f| eval::density_export(&training, f, config.eval.bins))
        .collect::<Result<Vec<_>>>()?;
    dir.write("histograms_training.csv", eval::histograms_to_csv(&hists).as_bytes())?;
    if let Some(m) = model {
        let mut r = rng::stream(config.seed, "report");
        let generated = m.sample(config.eval.samples, &mut r)?;
        let hists = names
            .iter()
            .map(|f| eval::density_export(&generated, f, config.eval.bins))
            .collect::<Result<Vec<_>>>()?;
        dir.write("histograms_generated.csv", eval::histograms_to_csv(&hists).as_bytes())?;
    }
    Ok(())
}
