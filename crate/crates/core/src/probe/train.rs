use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adamw::{adamw_step, OptimizerState};
use super::model::{l2_normalize, sigmoid, ProbeModel};
use crate::error::{Error, Result};
use crate::store::{select_rows, DatasetManifest, EmbeddingArchive, Label, Split};

/// Probe training recipe. Defaults: lr 1e-3, batch 128, 2 epochs, AdamW
/// with betas (0.9, 0.999), eps 1e-8 and decoupled weight decay 0.01.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 2,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.beta1) || !open_unit(self.beta2) {
            return Err(Error::Parameter(format!(
                "betas must lie in (0, 1), got ({}, {})",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter("epsilon must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Parameter("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Parameter("weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Parameter(
                "batch_size and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub config: TrainConfig,
    pub backbone_id: String,
    pub feature_dim: usize,
    pub n_train: usize,
    pub n_real: usize,
    pub n_fake: usize,
    pub normalize_input: bool,
    pub steps: u64,
    pub lr_schedule: String,
    pub init: String,
    /// Mean BCE over the full training set after each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
}

impl TrainLog {
    /// SHA-256 of the log's canonical JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("train log serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Mean binary cross-entropy of `sigmoid(w.x + b)` over a batch, with
/// `params = weights ∥ bias`.
pub fn bce_loss(params: &[f64], xs: &[&[f64]], ys: &[f64]) -> f64 {
    let (w, b) = params.split_at(params.len() - 1);
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = dot(w, x) + b[0];
            softplus(z) - y * z
        })
        .sum();
    total / xs.len() as f64
}

/// Loss and analytic gradient `mean((sigmoid(z) - y) * [x, 1])`.
pub fn bce_loss_and_grad(params: &[f64], xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let (w, b) = params.split_at(d);
    let mut grad = vec![0.0; d + 1];
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = dot(w, x) + b[0];
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, &xi) in grad[..d].iter_mut().zip(x.iter()) {
            *g += r * xi;
        }
        grad[d] += r;
    }
    let n = xs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

/// In-memory training examples.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

impl TrainingSet {
    pub fn new(xs: Vec<Vec<f64>>, labels: &[Label]) -> Self {
        let ys = labels.iter().map(|l| f64::from(l.as_i8())).collect();
        Self { xs, ys }
    }

    fn counts(&self) -> (usize, usize) {
        let fake = self.ys.iter().filter(|&&y| y == 1.0).count();
        (self.ys.len() - fake, fake)
    }
}

/// Trains a probe on the archive's train split (all labeled rows when no
/// manifest is given).
pub fn train(
    archive: &EmbeddingArchive,
    manifest: Option<&DatasetManifest>,
    cfg: &TrainConfig,
) -> Result<(ProbeModel, TrainLog)> {
    let selected = select_rows(archive, manifest, Split::Train)?;
    let normalize = archive.normalized();
    let xs = selected
        .iter()
        .map(|s| {
            let mut x: Vec<f64> = archive.row(s.index).iter().map(|&v| f64::from(v)).collect();
            if normalize {
                l2_normalize(&mut x);
            }
            x
        })
        .collect();
    let labels: Vec<Label> = selected.iter().map(|s| s.label).collect();
    let set = TrainingSet::new(xs, &labels);
    train_set(
        &set,
        archive.feature_dim(),
        archive.backbone_id(),
        normalize,
        cfg,
    )
}

/// Trains on prepared examples. Weights start at zero; each epoch visits
/// every example once in an order drawn from `cfg.seed`, keeping the final
/// partial batch.
pub fn train_set(
    set: &TrainingSet,
    feature_dim: usize,
    backbone_id: &str,
    normalize_input: bool,
    cfg: &TrainConfig,
) -> Result<(ProbeModel, TrainLog)> {
    cfg.validate()?;
    if let Some(bad) = set.xs.iter().find(|x| x.len() != feature_dim) {
        return Err(Error::Dimension {
            expected: feature_dim,
            found: bad.len(),
        });
    }
    let (n_real, n_fake) = set.counts();
    if n_real == 0 || n_fake == 0 {
        return Err(Error::Degenerate(format!(
            "training needs both classes, found {n_real} real and {n_fake} fake"
        )));
    }

    let mut params = vec![0.0f64; feature_dim + 1];
    let mut state = OptimizerState::for_linear_head(feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..set.xs.len()).collect();
    let all: Vec<&[f64]> = set.xs.iter().map(Vec::as_slice).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut bx: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut by: Vec<f64> = Vec::with_capacity(cfg.batch_size);

    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            bx.extend(batch.iter().map(|&i| all[i]));
            by.extend(batch.iter().map(|&i| set.ys[i]));
            let (_, grad) = bce_loss_and_grad(&params, &bx, &by);
            adamw_step(&mut params, &grad, &mut state, cfg)?;
        }
        epoch_losses.push(bce_loss(&params, &all, &set.ys));
    }

    let bias = params.pop().expect("bias present");
    let mut model = ProbeModel::new(
        params.iter().map(|&w| w as f32).collect(),
        bias as f32,
        backbone_id,
    );
    model.normalize_input = normalize_input;
    let correct = all
        .iter()
        .zip(&set.ys)
        .filter(|(x, &y)| {
            let score = sigmoid(model.logit_prepared(x));
            (model.label_for_score(score) == Label::Fake) == (y == 1.0)
        })
        .count();

    let log = TrainLog {
        config: cfg.clone(),
        backbone_id: backbone_id.to_string(),
        feature_dim,
        n_train: set.xs.len(),
        n_real,
        n_fake,
        normalize_input,
        steps: state.step,
        lr_schedule: "constant".into(),
        init: "zeros".into(),
        epoch_losses,
        train_accuracy: correct as f64 / set.xs.len() as f64,
    };
    model.train_log_digest = Some(log.digest());
    Ok((model, log))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
