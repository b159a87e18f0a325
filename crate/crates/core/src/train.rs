//! Losses, the positive-proportion weight vector and the SGD training loop.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::error::{Result, WpalError};
use crate::metrics;
use crate::model::ModelState;
use crate::tape::{BackwardRule, Tape, Var};
use crate::tensor::Tensor;

/// Lower clamp inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;
/// Clamp applied to positive proportions: `w ∈ [ε, 1 − ε]`.
pub const PROPORTION_EPS: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorKind {
    Truth,
    Prediction,
}

/// Attribute values: ground truth in `{0, 1}` or predictions in `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeVector {
    values: Vec<f64>,
    kind: VectorKind,
}

impl AttributeVector {
    pub fn truth(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(WpalError::InvalidInput(format!("ground-truth label {v} is not 0 or 1")));
        }
        Ok(AttributeVector {
            values,
            kind: VectorKind::Truth,
        })
    }

    pub fn prediction(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return Err(WpalError::InvalidInput(format!("prediction {v} outside (0, 1)")));
        }
        Ok(AttributeVector {
            values,
            kind: VectorKind::Prediction,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> VectorKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Proportion of positive labels per attribute over the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn balanced(len: usize) -> Self {
        WeightVector(vec![0.5; len])
    }

    /// Per-attribute `(positive, negative)` loss coefficients
    /// `1/(2w)` and `1/(2(1−w))`.
    pub fn coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        self.0
            .iter()
            .map(|&w| (1.0 / (2.0 * w), 1.0 / (2.0 * (1.0 - w))))
            .unzip()
    }
}

pub fn positive_proportions(labels: &[Vec<f64>]) -> Result<WeightVector> {
    let Some(first) = labels.first() else {
        return Err(WpalError::InvalidInput("label matrix is empty".into()));
    };
    let l = first.len();
    if l == 0 {
        return Err(WpalError::InvalidInput("label rows are empty".into()));
    }
    let mut counts = vec![0.0; l];
    for (i, row) in labels.iter().enumerate() {
        if row.len() != l {
            return Err(WpalError::ShapeMismatch {
                op: "positive_proportions",
                left: vec![l],
                right: vec![row.len()],
            });
        }
        for (c, &v) in counts.iter_mut().zip(row) {
            if v != 0.0 && v != 1.0 {
                return Err(WpalError::InvalidInput(format!("row {i}: label {v} is not 0 or 1")));
            }
            *c += v;
        }
    }
    let n = labels.len() as f64;
    Ok(WeightVector(
        counts
            .into_iter()
            .map(|c| (c / n).clamp(PROPORTION_EPS, 1.0 - PROPORTION_EPS))
            .collect(),
    ))
}

fn check_lengths(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(WpalError::ShapeMismatch {
            op: "loss",
            left: vec![truth.len()],
            right: vec![pred.len()],
        });
    }
    Ok(())
}

fn bce_terms(truth: &[f64], pred: &[f64], pos: &[f64], neg: &[f64]) -> f64 {
    let mut loss = 0.0;
    for i in 0..truth.len() {
        let (p, q) = (truth[i], pred[i]);
        loss -= pos[i] * p * q.max(LOG_FLOOR).ln() + neg[i] * (1.0 - p) * (1.0 - q).max(LOG_FLOOR).ln();
    }
    loss
}

fn bce_grad(truth: &[f64], pred: &[f64], pos: &[f64], neg: &[f64]) -> Vec<f64> {
    (0..truth.len())
        .map(|i| {
            let (p, q) = (truth[i], pred[i]);
            let dpos = if q > LOG_FLOOR { -pos[i] * p / q } else { 0.0 };
            let dneg = if 1.0 - q > LOG_FLOOR {
                neg[i] * (1.0 - p) / (1.0 - q)
            } else {
                0.0
            };
            dpos + dneg
        })
        .collect()
}

/// `−Σ_i [p_i·ln p̂_i + (1−p_i)·ln(1−p̂_i)]`.
pub fn cross_entropy(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(truth, pred)?;
    let ones = vec![1.0; truth.len()];
    Ok(bce_terms(truth, pred, &ones, &ones))
}

/// `−Σ_i [p_i·ln p̂_i / (2w_i) + (1−p_i)·ln(1−p̂_i) / (2(1−w_i))]`.
pub fn weighted_cross_entropy(truth: &[f64], pred: &[f64], weights: &WeightVector) -> Result<f64> {
    check_lengths(truth, pred)?;
    check_lengths(truth, &weights.0)?;
    let (pos, neg) = weights.coefficients();
    Ok(bce_terms(truth, pred, &pos, &neg))
}

/// d(loss)/d(p̂) of the weighted loss.
pub fn weighted_cross_entropy_grad(truth: &[f64], pred: &[f64], weights: &WeightVector) -> Result<Vec<f64>> {
    check_lengths(truth, pred)?;
    check_lengths(truth, &weights.0)?;
    let (pos, neg) = weights.coefficients();
    Ok(bce_grad(truth, pred, &pos, &neg))
}

struct BceRule {
    truth: Vec<f64>,
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl BackwardRule for BceRule {
    fn name(&self) -> &'static str {
        "binary_cross_entropy"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64], _needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let mut d = bce_grad(&self.truth, inputs[0].data(), &self.pos, &self.neg);
        d.iter_mut().for_each(|v| *v *= g[0]);
        vec![Some(d)]
    }
}

/// Records the (weighted) cross-entropy of `pred` against `truth` on the tape.
pub fn bce_on_tape(tape: &mut Tape, pred: Var, truth: &[f64], loss: LossKind, weights: &WeightVector) -> Result<Var> {
    let q = tape.value(pred).data().to_vec();
    check_lengths(truth, &q)?;
    let (pos, neg) = match loss {
        LossKind::Weighted => weights.coefficients(),
        LossKind::Plain => (vec![1.0; truth.len()], vec![1.0; truth.len()]),
    };
    let value = bce_terms(truth, &q, &pos, &neg);
    Ok(tape.push(
        Tensor::scalar(value),
        vec![pred],
        Box::new(BceRule {
            truth: truth.to_vec(),
            pos,
            neg,
        }),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Plain cross-entropy.
    Plain,
    /// Cross-entropy re-weighted by positive proportions.
    Weighted,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "plain" => Ok(LossKind::Plain),
            "weighted" => Ok(LossKind::Weighted),
            other => Err(format!("unknown loss `{other}` (expected plain or weighted)")),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Plain => "plain",
            LossKind::Weighted => "weighted",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.003,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 30,
            batch_size: 16,
            seed: 1,
            loss: LossKind::Weighted,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(WpalError::InvalidConfig(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(WpalError::InvalidConfig(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(WpalError::InvalidConfig(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(WpalError::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "learning_rate = {}", self.learning_rate).unwrap();
        writeln!(s, "momentum = {}", self.momentum).unwrap();
        writeln!(s, "weight_decay = {}", self.weight_decay).unwrap();
        writeln!(s, "epochs = {}", self.epochs).unwrap();
        writeln!(s, "batch_size = {}", self.batch_size).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "loss = {}", self.loss).unwrap();
        s
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.check_known(|k| {
            matches!(
                k,
                "learning_rate" | "momentum" | "weight_decay" | "epochs" | "batch_size" | "seed" | "loss"
            )
        })?;
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            learning_rate: kv.parsed_or("learning_rate", d.learning_rate)?,
            momentum: kv.parsed_or("momentum", d.momentum)?,
            weight_decay: kv.parsed_or("weight_decay", d.weight_decay)?,
            epochs: kv.parsed_or("epochs", d.epochs)?,
            batch_size: kv.parsed_or("batch_size", d.batch_size)?,
            seed: kv.parsed_or("seed", d.seed)?,
            loss: kv.parsed_or("loss", d.loss)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text, "<train config>")?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }
}

/// One preprocessed training example.
#[derive(Clone, Debug)]
pub struct Example {
    pub image: Tensor,
    pub labels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Training mA from the predictions made during the epoch; `None` when
    /// some attribute lacks positives or negatives.
    pub ma_train: Option<f64>,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,mean_loss,mA_train\n");
    for e in log {
        let ma = e.ma_train.map_or_else(|| "nan".to_string(), |v| v.to_string());
        writeln!(s, "{},{},{}", e.epoch, e.mean_loss, ma).unwrap();
    }
    s
}

/// Loss value, predictions and per-parameter gradients for one example.
pub fn example_gradients(
    model: &ModelState,
    image: &Tensor,
    truth: &[f64],
    loss: LossKind,
    weights: &WeightVector,
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let params = model.register_params(&mut tape, true);
    let img = tape.constant(image.clone());
    let fwd = model.forward_on_tape(&mut tape, img, &params)?;
    let l = bce_on_tape(&mut tape, fwd.predictions, truth, loss, weights)?;
    tape.backward(l)?;
    let value = tape.value(l).item();
    let preds = tape.value(fwd.predictions).data().to_vec();
    let grads = params
        .iter()
        .map(|&p| tape.take_grad(p).unwrap_or_else(|| vec![0.0; tape.value(p).numel()]))
        .collect();
    Ok((value, preds, grads))
}

const EPOCH_KEY: &str = "opt.epoch";
const VELOCITY_PREFIX: &str = "opt.velocity.";

/// SGD with momentum and decoupled weight decay over seeded mini-batches.
///
/// Update per parameter: `v ← μ·v + g`, `θ ← θ − lr·v − lr·λ·θ`, with `g`
/// the batch-mean gradient. Epoch `e` shuffles with ChaCha stream `e` of the
/// configured seed, so a resumed run replays the same order.
pub struct Trainer {
    model: ModelState,
    config: TrainConfig,
    weights: WeightVector,
    velocity: Vec<Vec<f64>>,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: ModelState, config: TrainConfig, weights: WeightVector) -> Result<Self> {
        config.validate()?;
        if weights.0.len() != model.config().num_attributes {
            return Err(WpalError::ShapeMismatch {
                op: "trainer weights",
                left: vec![model.config().num_attributes],
                right: vec![weights.0.len()],
            });
        }
        let velocity = model.params().iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        Ok(Trainer {
            model,
            config,
            weights,
            velocity,
            epoch: 0,
        })
    }

    /// Restores optimizer state saved by [`Trainer::checkpoint_extras`].
    pub fn resume(
        model: ModelState,
        extras: &[(String, Tensor)],
        config: TrainConfig,
        weights: WeightVector,
    ) -> Result<Self> {
        let mut t = Trainer::new(model, config, weights)?;
        let get = |name: &str| extras.iter().find(|(n, _)| n == name).map(|(_, t)| t);
        let epoch = get(EPOCH_KEY).ok_or_else(|| WpalError::Format("checkpoint has no optimizer state".into()))?;
        t.epoch = epoch.item() as usize;
        for (v, p) in t.velocity.iter_mut().zip(t.model.params()) {
            let saved = get(&format!("{VELOCITY_PREFIX}{}", p.name))
                .ok_or_else(|| WpalError::Format(format!("missing velocity for `{}`", p.name)))?;
            if saved.numel() != v.len() {
                return Err(WpalError::Format(format!("velocity for `{}` has wrong size", p.name)));
            }
            v.copy_from_slice(saved.data());
        }
        Ok(t)
    }

    pub fn checkpoint_extras(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![(EPOCH_KEY.to_string(), Tensor::scalar(self.epoch as f64))];
        for (v, p) in self.velocity.iter().zip(self.model.params()) {
            out.push((
                format!("{VELOCITY_PREFIX}{}", p.name),
                Tensor::new(p.tensor.shape().to_vec(), v.clone()).unwrap(),
            ));
        }
        out
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &ModelState {
        &self.model
    }

    pub fn into_model(self) -> ModelState {
        self.model
    }

    fn step(&mut self, batch_len: usize) {
        let cfg = &self.config;
        let scale = 1.0 / batch_len as f64;
        for (p, v) in self.model.params_mut().iter_mut().zip(&mut self.velocity) {
            let t = &mut p.tensor;
            let g: Vec<f64> = t.grad().map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; t.numel()]);
            for ((theta, vel), gi) in t.data_mut().iter_mut().zip(v.iter_mut()).zip(&g) {
                *vel = cfg.momentum * *vel + gi * scale;
                *theta -= cfg.learning_rate * *vel + cfg.learning_rate * cfg.weight_decay * *theta;
            }
        }
    }

    pub fn run_epoch(&mut self, examples: &[Example]) -> Result<EpochLog> {
        if examples.is_empty() {
            return Err(WpalError::InvalidInput("training set is empty".into()));
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.epoch as u64);
        order.shuffle(&mut rng);

        let mut total = 0.0;
        let mut preds = vec![Vec::new(); examples.len()];
        self.model.zero_grad();
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &examples[i];
                let (loss, p, grads) =
                    example_gradients(&self.model, &ex.image, &ex.labels, self.config.loss, &self.weights)?;
                batch_loss += loss;
                preds[i] = p;
                for (param, g) in self.model.params_mut().iter_mut().zip(grads) {
                    param.tensor.accumulate_grad(&g);
                }
            }
            if !batch_loss.is_finite() {
                return Err(WpalError::NonFiniteLoss {
                    epoch: self.epoch + 1,
                    batch: b,
                });
            }
            total += batch_loss;
            self.step(batch.len());
            self.model.zero_grad();
        }
        self.epoch += 1;
        let truth: Vec<Vec<bool>> = examples.iter().map(|e| e.labels.iter().map(|&v| v == 1.0).collect()).collect();
        let log = EpochLog {
            epoch: self.epoch,
            mean_loss: total / examples.len() as f64,
            ma_train: metrics::mean_accuracy(&metrics::binarize_rows(&preds), &truth).ok(),
        };
        log::info!(
            "epoch {} loss {:.5} mA_train {}",
            log.epoch,
            log.mean_loss,
            log.ma_train.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
        Ok(log)
    }

    /// Runs epochs until `config.epochs` have been completed in total.
    pub fn run(&mut self, examples: &[Example]) -> Result<Vec<EpochLog>> {
        let mut logs = Vec::new();
        while self.epoch < self.config.epochs {
            logs.push(self.run_epoch(examples)?);
        }
        Ok(logs)
    }
}

/// Trains `model` on `examples`; the weight vector comes from these labels.
pub fn train(model: ModelState, examples: &[Example], config: &TrainConfig) -> Result<(ModelState, Vec<EpochLog>)> {
    if examples.is_empty() {
        return Err(WpalError::InvalidInput("training set is empty".into()));
    }
    let labels: Vec<Vec<f64>> = examples.iter().map(|e| e.labels.clone()).collect();
    let weights = positive_proportions(&labels)?;
    let mut trainer = Trainer::new(model, config.clone(), weights)?;
    let logs = trainer.run(examples)?;
    Ok((trainer.into_model(), logs))
}
