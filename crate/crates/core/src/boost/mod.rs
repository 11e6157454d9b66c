//! Squared-error gradient-boosted regression trees and the downstream
//! critical-path experiment built on them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, FeatureRole};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::oracle::{
    critical_path_delay, gate_input_names, DelayProvider, DelayResult, GateKind, Netlist, OracleConstants,
    ProcessPoint, SamplingRanges,
};
use crate::rng;

pub const GBRT_FORMAT: &str = "circuit-augmentor/gbrt";
pub const GBRT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbrtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GbrtConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 3,
            min_samples_leaf: 5,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

impl GbrtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::validation("n_trees must be >= 1"));
        }
        if !(1..=12).contains(&self.max_depth) {
            return Err(Error::validation(format!("max_depth must lie in [1, 12], got {}", self.max_depth)));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::validation("min_samples_leaf must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::validation(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] < threshold` go left.
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Pre-order record used for export: a split is followed by its left then
/// its right subtree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum FlatNode {
    Split { feature: usize, threshold: f64 },
    Leaf { value: f64 },
}

impl Node {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut n = self;
        loop {
            match n {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => n = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn to_preorder(&self, out: &mut Vec<FlatNode>) {
        match self {
            Node::Leaf { value } => out.push(FlatNode::Leaf { value: *value }),
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push(FlatNode::Split {
                    feature: *feature,
                    threshold: *threshold,
                });
                left.to_preorder(out);
                right.to_preorder(out);
            }
        }
    }

    pub fn from_preorder(nodes: &[FlatNode]) -> Result<Node> {
        let mut pos = 0;
        let n = Self::read(nodes, &mut pos, 0)?;
        if pos != nodes.len() {
            return Err(Error::validation("trailing nodes after a complete tree"));
        }
        Ok(n)
    }

    fn read(nodes: &[FlatNode], pos: &mut usize, depth: usize) -> Result<Node> {
        if depth > 64 {
            return Err(Error::validation("tree is too deep"));
        }
        let node = nodes
            .get(*pos)
            .ok_or_else(|| Error::validation("truncated pre-order tree"))?;
        *pos += 1;
        match *node {
            FlatNode::Leaf { value } => Ok(Node::Leaf { value }),
            FlatNode::Split { feature, threshold } => {
                let left = Self::read(nodes, pos, depth + 1)?;
                let right = Self::read(nodes, pos, depth + 1)?;
                Ok(Node::Split {
                    feature,
                    threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                })
            }
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match self {
            Node::Leaf { .. } => None,
            Node::Split { feature, left, right, .. } => {
                Some((*feature).max(left.max_feature().unwrap_or(0)).max(right.max_feature().unwrap_or(0)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbrtModel {
    pub feature_names: Vec<String>,
    pub target: String,
    pub init_value: f64,
    pub learning_rate: f64,
    pub trees: Vec<Node>,
    /// Training MSE after `k` trees, starting with the init-only model.
    pub train_mse: Vec<f64>,
    /// Set when the target was constant and no trees were grown.
    pub constant_target: bool,
}

#[derive(Serialize, Deserialize)]
struct GbrtExport {
    format: String,
    version: u32,
    feature_names: Vec<String>,
    target: String,
    init_value: f64,
    learning_rate: f64,
    trees: Vec<Vec<FlatNode>>,
    train_mse: Vec<f64>,
    constant_target: bool,
}

struct Grower<'a> {
    x: &'a Matrix,
    /// Per feature: row indices sorted by that feature's value.
    sorted: Vec<Vec<usize>>,
    max_depth: usize,
    min_leaf: usize,
    lr: f64,
}

impl Grower<'_> {
    fn grow(&self, rows: &[usize], residual: &[f64], depth: usize, in_node: &mut [bool]) -> Node {
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| residual[r]).sum();
        let leaf = Node::Leaf {
            value: self.lr * sum / n as f64,
        };
        if depth >= self.max_depth || n < 2 * self.min_leaf {
            return leaf;
        }
        for &r in rows {
            in_node[r] = true;
        }
        let parent_score = sum * sum / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let mut left_sum = 0.0;
            let mut left_n = 0usize;
            let mut prev: Option<f64> = None;
            for &r in order.iter().filter(|&&r| in_node[r]) {
                let v = self.x[(r, f)];
                if let Some(p) = prev {
                    if v > p && left_n >= self.min_leaf && n - left_n >= self.min_leaf {
                        let right_sum = sum - left_sum;
                        let score = left_sum * left_sum / left_n as f64
                            + right_sum * right_sum / (n - left_n) as f64
                            - parent_score;
                        if best.is_none_or(|(s, _, _)| score > s) {
                            best = Some((score, f, 0.5 * (p + v)));
                        }
                    }
                }
                left_sum += residual[r];
                left_n += 1;
                prev = Some(v);
            }
        }
        for &r in rows {
            in_node[r] = false;
        }
        let Some((score, feature, threshold)) = best else {
            return leaf;
        };
        if score <= 1e-12 * parent_score.abs().max(f64::MIN_POSITIVE) {
            return leaf;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[(i, feature)] < threshold);
        Node::Split {
            feature,
            threshold,
            left: Box::new(self.grow(&l, residual, depth + 1, in_node)),
            right: Box::new(self.grow(&r, residual, depth + 1, in_node)),
        }
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Fits a boosted ensemble on the simulator inputs of `train` to predict
/// `target`.
pub fn fit_gbrt(train: &Dataset, target: &str, config: &GbrtConfig) -> Result<GbrtModel> {
    config.validate()?;
    let schema = train.schema();
    let t = schema
        .index_of(target)
        .ok_or_else(|| Error::validation(format!("unknown target feature `{target}`")))?;
    if schema.features()[t].role != FeatureRole::SimulatorOutput {
        return Err(Error::validation(format!("target `{target}` is not a simulator_output feature")));
    }
    if train.len() < 2 * config.min_samples_leaf {
        return Err(Error::validation(format!(
            "need at least {} rows for min_samples_leaf {}, got {}",
            2 * config.min_samples_leaf,
            config.min_samples_leaf,
            train.len()
        )));
    }
    let inputs = schema.input_indices();
    let x = train.rows().select_cols(&inputs);
    let y = train.rows().col(t);
    fit_matrix(
        &x,
        &y,
        inputs.iter().map(|&i| schema.features()[i].name.clone()).collect(),
        target,
        config,
    )
}

/// Boosting on a bare design matrix.
pub fn fit_matrix(x: &Matrix, y: &[f64], feature_names: Vec<String>, target: &str, config: &GbrtConfig) -> Result<GbrtModel> {
    config.validate()?;
    if x.rows() != y.len() || x.cols() != feature_names.len() {
        return Err(Error::Dimension {
            context: "gbrt design matrix",
            expected: y.len(),
            got: x.rows(),
        });
    }
    if y.is_empty() {
        return Err(Error::validation("cannot boost on an empty dataset"));
    }
    let n = y.len();
    let init_value = y.iter().sum::<f64>() / n as f64;
    let mut model = GbrtModel {
        feature_names,
        target: target.to_string(),
        init_value,
        learning_rate: config.learning_rate,
        trees: Vec::new(),
        train_mse: Vec::new(),
        constant_target: y.iter().all(|&v| v == y[0]),
    };
    let mut pred = vec![init_value; n];
    if model.constant_target {
        // exact constant, not the rounded mean
        model.init_value = y[0];
        model.train_mse.push(0.0);
        return Ok(model);
    }
    model.train_mse.push(mse(&pred, y));

    let sorted: Vec<Vec<usize>> = (0..x.cols())
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let grower = Grower {
        x,
        sorted,
        max_depth: config.max_depth,
        min_leaf: config.min_samples_leaf,
        lr: config.learning_rate,
    };
    let all: Vec<usize> = (0..n).collect();
    let mut in_node = vec![false; n];
    let mut residual = vec![0.0; n];
    for _ in 0..config.n_trees {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let tree = grower.grow(&all, &residual, 0, &mut in_node);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += tree.predict(x.row(i));
        }
        model.trees.push(tree);
        model.train_mse.push(mse(&pred, y));
    }
    Ok(model)
}

/// `init_value + Σ tree(x)` per row.
pub fn predict_gbrt(model: &GbrtModel, rows: &Matrix) -> Result<Vec<f64>> {
    if rows.cols() != model.feature_names.len() {
        return Err(Error::Dimension {
            context: "gbrt input columns",
            expected: model.feature_names.len(),
            got: rows.cols(),
        });
    }
    Ok((0..rows.rows()).map(|r| model.predict_row(rows.row(r))).collect())
}

impl GbrtModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.init_value + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn to_json(&self) -> Result<String> {
        let export = GbrtExport {
            format: GBRT_FORMAT.into(),
            version: GBRT_VERSION,
            feature_names: self.feature_names.clone(),
            target: self.target.clone(),
            init_value: self.init_value,
            learning_rate: self.learning_rate,
            trees: self
                .trees
                .iter()
                .map(|t| {
                    let mut v = Vec::new();
                    t.to_preorder(&mut v);
                    v
                })
                .collect(),
            train_mse: self.train_mse.clone(),
            constant_target: self.constant_target,
        };
        Ok(serde_json::to_string_pretty(&export)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: GbrtExport = serde_json::from_str(text)?;
        if e.format != GBRT_FORMAT || e.version != GBRT_VERSION {
            return Err(Error::validation(format!("unsupported GBRT export {} v{}", e.format, e.version)));
        }
        let trees = e
            .trees
            .iter()
            .map(|t| Node::from_preorder(t))
            .collect::<Result<Vec<_>>>()?;
        if trees
            .iter()
            .filter_map(Node::max_feature)
            .any(|f| f >= e.feature_names.len())
        {
            return Err(Error::validation("tree splits on a feature the model does not have"));
        }
        Ok(Self {
            feature_names: e.feature_names,
            target: e.target,
            init_value: e.init_value,
            learning_rate: e.learning_rate,
            trees,
            train_mse: e.train_mse,
            constant_target: e.constant_target,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Per-gate delays predicted by one GBRT model per delay column.
#[derive(Debug, Clone)]
pub struct GbrtDelayProvider {
    pub kind: GateKind,
    pub models: Vec<GbrtModel>,
    /// Position of each model feature inside the gate input vector.
    feature_map: Vec<usize>,
}

impl GbrtDelayProvider {
    pub fn fit(data: &Dataset, kind: GateKind, config: &GbrtConfig) -> Result<Self> {
        let models = kind
            .delay_columns()
            .iter()
            .map(|c| fit_gbrt(data, c, config))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kind, models)
    }

    pub fn new(kind: GateKind, models: Vec<GbrtModel>) -> Result<Self> {
        if models.len() != kind.delay_columns().len() {
            return Err(Error::validation(format!("{kind} needs one model per delay column")));
        }
        let names = gate_input_names();
        let feature_map = models[0]
            .feature_names
            .iter()
            .map(|n| {
                names
                    .iter()
                    .position(|g| g == n)
                    .ok_or_else(|| Error::validation(format!("model feature `{n}` is not a gate input")))
            })
            .collect::<Result<Vec<_>>>()?;
        if models.iter().any(|m| m.feature_names != models[0].feature_names) {
            return Err(Error::validation("delay models disagree on their input features"));
        }
        Ok(Self { kind, models, feature_map })
    }
}

impl DelayProvider for GbrtDelayProvider {
    fn delays(&self, kind: GateKind, point: &ProcessPoint) -> Result<DelayResult> {
        if kind != self.kind {
            return Err(Error::validation(format!("provider covers {} only, asked for {kind}", self.kind)));
        }
        let all = point.to_gate_features();
        let x: Vec<f64> = self.feature_map.iter().map(|&i| all[i]).collect();
        let cols: Vec<f64> = self.models.iter().map(|m| m.predict_row(&x)).collect();
        DelayResult::from_columns(kind, &cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub gbrt: GbrtConfig,
    /// Process points the critical path is compared at.
    pub eval_points: usize,
    pub ranges: SamplingRanges,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gbrt: GbrtConfig::default(),
            eval_points: 25,
            ranges: SamplingRanges::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointComparison {
    pub point: ProcessPoint,
    pub simulated_ps: f64,
    pub predicted_real_ps: f64,
    pub predicted_augmented_ps: f64,
}

/// Critical-path comparison of the real-only and augmented arms, averaged
/// over the evaluation points. Percentage errors are means of per-point
/// errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub circuit: String,
    pub gate: String,
    pub real_rows: usize,
    pub artificial_rows: usize,
    pub simulated_ps: f64,
    pub predicted_real_ps: f64,
    pub predicted_augmented_ps: f64,
    pub pct_error_real: f64,
    pub pct_error_augmented: f64,
    pub points: Vec<PointComparison>,
}

impl AugmentationRecord {
    /// `1 - augmented / real` on the percentage errors.
    pub fn relative_reduction(&self) -> f64 {
        if self.pct_error_real == 0.0 {
            return 0.0;
        }
        1.0 - self.pct_error_augmented / self.pct_error_real
    }
}

fn single_kind(netlist: &Netlist) -> Result<GateKind> {
    let counts = netlist.kind_counts();
    if counts.len() != 1 {
        return Err(Error::validation(format!(
            "netlist `{}` mixes {} gate kinds; the experiment needs one",
            netlist.name(),
            counts.len()
        )));
    }
    Ok(*counts.keys().next().expect("one kind"))
}

/// Trains one GBRT per delay column on `real` and on `real + artificial`,
/// composes critical-path delays over `netlist` with each, and compares
/// both against the oracle.
pub fn augmentation_experiment(
    real: &Dataset,
    artificial: &Dataset,
    netlist: &Netlist,
    constants: &OracleConstants,
    config: &ExperimentConfig,
) -> Result<AugmentationRecord> {
    let kind = single_kind(netlist)?;
    if real.schema() != artificial.schema() && !artificial.is_empty() {
        return Err(Error::validation("real and artificial data have different schemas"));
    }
    if config.eval_points == 0 {
        return Err(Error::validation("eval_points must be >= 1"));
    }
    config.ranges.validate()?;
    let real_arm = GbrtDelayProvider::fit(real, kind, &config.gbrt)?;
    let aug_arm = if artificial.is_empty() {
        real_arm.clone()
    } else {
        GbrtDelayProvider::fit(&real.concat(artificial)?, kind, &config.gbrt)?
    };

    let mut r = rng::stream(config.seed, "eval-points");
    let mut points = Vec::with_capacity(config.eval_points);
    let mut attempts = 0;
    while points.len() < config.eval_points {
        attempts += 1;
        if attempts > 100 * config.eval_points {
            return Err(Error::validation("sampling ranges rarely hit the operating region"));
        }
        let p = config.ranges.sample_point(&mut r);
        let simulated = match critical_path_delay(netlist, &p, constants) {
            Ok(v) => v,
            Err(Error::OperatingRegion(_)) => continue,
            Err(e) => return Err(e),
        };
        points.push(PointComparison {
            simulated_ps: simulated,
            predicted_real_ps: critical_path_delay(netlist, &p, &real_arm)?,
            predicted_augmented_ps: critical_path_delay(netlist, &p, &aug_arm)?,
            point: p,
        });
    }
    let n = points.len() as f64;
    let mean = |f: &dyn Fn(&PointComparison) -> f64| points.iter().map(f).sum::<f64>() / n;
    let pct = |pred: f64, sim: f64| 100.0 * (pred - sim).abs() / sim.abs().max(1e-12);
    Ok(AugmentationRecord {
        circuit: netlist.name().to_string(),
        gate: kind.name().to_string(),
        real_rows: real.len(),
        artificial_rows: artificial.len(),
        simulated_ps: mean(&|p| p.simulated_ps),
        predicted_real_ps: mean(&|p| p.predicted_real_ps),
        predicted_augmented_ps: mean(&|p| p.predicted_augmented_ps),
        pct_error_real: mean(&|p| pct(p.predicted_real_ps, p.simulated_ps)),
        pct_error_augmented: mean(&|p| pct(p.predicted_augmented_ps, p.simulated_ps)),
        points,
    })
}
