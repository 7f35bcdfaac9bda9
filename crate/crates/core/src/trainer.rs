//! Training loop: minibatching, optimizer, logging, checkpointing.
//!
//! One step = draw a shuffled-without-replacement minibatch, evaluate the
//! energy loss and its exact gradient, optionally clip, update. Everything is
//! driven by a single seeded stream, so repeated runs are bit-identical.

use crate::datasets::Dataset;
use crate::error::{Result, VapoError};
use crate::homotopy::HomotopyParams;
use crate::loss::{self, LossBreakdown};
use crate::potential::PotentialModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::SgdMomentum => "sgd_momentum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
            other => Err(VapoError::InvalidParam(format!("optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub lambda: f64,
    pub eps_sharp: f64,
    pub omega: f64,
    pub sigma: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            steps: 10_000,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            lambda: 1e-3,
            eps_sharp: 1e-4,
            omega: 1.0,
            sigma: 0.01,
            seed: 0,
            checkpoint_every: 1_000,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(VapoError::InvalidParam("batch_size = 0".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(VapoError::InvalidParam("checkpoint_every = 0".into()));
        }
        if !(self.lr > 0.0) {
            return Err(VapoError::InvalidParam(format!("lr = {}", self.lr)));
        }
        if !(self.lambda > 0.0) {
            return Err(VapoError::InvalidParam(format!("lambda = {}", self.lambda)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(VapoError::InvalidParam(format!("grad_clip = {c}")));
            }
        }
        // omega, sigma, eps_sharp are validated through HomotopyParams.
        Ok(())
    }

    pub fn homotopy_params(&self, dim: usize) -> Result<HomotopyParams> {
        HomotopyParams::new(self.omega, self.sigma, self.eps_sharp, dim)
    }

    /// Parse a flat `key = value` config file. Blank lines and lines starting
    /// with '#' are skipped; unknown keys are an error. Missing keys keep
    /// their defaults.
    pub fn from_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                VapoError::Format(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                VapoError::Format(format!("line {}: bad {what} '{value}'", lineno + 1))
            };
            match key {
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("integer"))?,
                "steps" => cfg.steps = value.parse().map_err(|_| bad("integer"))?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("float"))?,
                "optimizer" => cfg.optimizer = OptimizerKind::parse(value)?,
                "lambda" => cfg.lambda = value.parse().map_err(|_| bad("float"))?,
                "eps_sharp" => cfg.eps_sharp = value.parse().map_err(|_| bad("float"))?,
                "omega" => cfg.omega = value.parse().map_err(|_| bad("float"))?,
                "sigma" => cfg.sigma = value.parse().map_err(|_| bad("float"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                "checkpoint_every" => {
                    cfg.checkpoint_every = value.parse().map_err(|_| bad("integer"))?
                }
                "grad_clip" => cfg.grad_clip = Some(value.parse().map_err(|_| bad("float"))?),
                other => {
                    return Err(VapoError::Format(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainLogRecord {
    pub step: usize,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

pub const LOG_HEADER: &str = "step,cov,gradsq,l2,total,grad_norm,wall_ms";

impl TrainLogRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.3}",
            self.step,
            self.loss.cov_term,
            self.loss.gradsq_term,
            self.loss.l2_term,
            self.loss.total,
            self.grad_norm,
            self.wall_ms
        )
    }
}

/// Optimizer state: first/second moments for Adam, velocity for momentum.
#[derive(Debug, Clone)]
pub struct OptState {
    kind: OptimizerKind,
    step: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const MOMENTUM: f64 = 0.9;

impl OptState {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        OptState {
            kind,
            step: 0,
            m: vec![0.0; n_params],
            v: match kind {
                OptimizerKind::Adam => vec![0.0; n_params],
                OptimizerKind::SgdMomentum => Vec::new(),
            },
        }
    }
}

/// Apply one optimizer update in place. Clipping (when configured) rescales
/// the gradient to the given global norm before the update.
pub fn optimizer_step(
    state: &mut OptState,
    theta: &mut [f64],
    grad: &[f64],
    lr: f64,
    grad_clip: Option<f64>,
) -> Result<f64> {
    if theta.len() != grad.len() || theta.len() != state.m.len() {
        return Err(VapoError::DimMismatch {
            expected: state.m.len(),
            got: grad.len(),
        });
    }
    let mut norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut scale = 1.0;
    if let Some(max_norm) = grad_clip {
        if norm > max_norm {
            scale = max_norm / norm;
            norm = max_norm;
        }
    }
    state.step += 1;
    match state.kind {
        OptimizerKind::Adam => {
            let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
            for i in 0..theta.len() {
                let g = grad[i] * scale;
                state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
                state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = state.m[i] / bc1;
                let v_hat = state.v[i] / bc2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        OptimizerKind::SgdMomentum => {
            for i in 0..theta.len() {
                let g = grad[i] * scale;
                state.m[i] = MOMENTUM * state.m[i] + g;
                theta[i] -= lr * state.m[i];
            }
        }
    }
    Ok(norm)
}

/// Run the training loop in memory.
pub fn train(data: &Dataset, model: PotentialModel, cfg: &TrainConfig) -> Result<TrainRun> {
    train_with_sink(data, model, cfg, None)
}

/// Run the training loop writing `step_{N}.vapo` checkpoints and an
/// append-only `train_log.csv` into `out_dir`. On a non-finite loss the files
/// written so far (including the last good checkpoint) are retained and an
/// error is returned.
pub fn train_to_dir(
    data: &Dataset,
    model: PotentialModel,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainRun> {
    std::fs::create_dir_all(out_dir)?;
    let mut sink = DirSink::create(out_dir)?;
    train_with_sink(data, model, cfg, Some(&mut sink))
}

#[derive(Debug)]
pub struct TrainRun {
    pub model: PotentialModel,
    pub records: Vec<TrainLogRecord>,
    /// Paths of checkpoints written (empty for in-memory runs).
    pub checkpoints: Vec<PathBuf>,
}

struct DirSink {
    dir: PathBuf,
    log: BufWriter<File>,
    checkpoints: Vec<PathBuf>,
}

impl DirSink {
    fn create(dir: &Path) -> Result<Self> {
        let mut log = BufWriter::new(File::create(dir.join("train_log.csv"))?);
        writeln!(log, "{LOG_HEADER}")?;
        Ok(DirSink {
            dir: dir.to_path_buf(),
            log,
            checkpoints: Vec::new(),
        })
    }

    fn record(&mut self, rec: &TrainLogRecord) -> Result<()> {
        writeln!(self.log, "{}", rec.csv_row())?;
        Ok(())
    }

    fn checkpoint(&mut self, step: usize, model: &PotentialModel) -> Result<PathBuf> {
        let path = self.dir.join(format!("step_{step}.vapo"));
        crate::checkpoint::save(model, &path)?;
        self.checkpoints.push(path.clone());
        Ok(path)
    }

    fn flush(&mut self) -> Result<()> {
        self.log.flush()?;
        Ok(())
    }
}

fn train_with_sink(
    data: &Dataset,
    mut model: PotentialModel,
    cfg: &TrainConfig,
    mut sink: Option<&mut DirSink>,
) -> Result<TrainRun> {
    cfg.check()?;
    if data.dim() != model.input_dim() {
        return Err(VapoError::DimMismatch {
            expected: model.input_dim(),
            got: data.dim(),
        });
    }
    let params = cfg.homotopy_params(data.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptState::new(cfg.optimizer, model.param_count());
    let mut records = Vec::with_capacity(cfg.steps);

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n; // force an initial shuffle

    for step in 1..=cfg.steps {
        let started = Instant::now();
        // Epoch boundary: reshuffle, restart without replacement.
        if cursor >= n {
            shuffle(&mut order, &mut rng);
            cursor = 0;
        }
        let take = cfg.batch_size.min(n - cursor);
        let batch: Vec<&[f64]> = order[cursor..cursor + take]
            .iter()
            .map(|&i| data.row(i))
            .collect();
        cursor += take;

        let (breakdown, grad) = loss::batch_loss(&model, &params, &batch, cfg.lambda, &mut rng)?;
        if !breakdown.total.is_finite() {
            if let Some(s) = sink.as_deref_mut() {
                s.flush()?;
            }
            return Err(VapoError::NonFiniteLoss { step });
        }
        let grad_norm = optimizer_step(&mut opt, &mut model.theta, &grad, cfg.lr, cfg.grad_clip)?;

        let rec = TrainLogRecord {
            step,
            loss: breakdown,
            grad_norm,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        if let Some(s) = sink.as_deref_mut() {
            s.record(&rec)?;
            if step % cfg.checkpoint_every == 0 && step != cfg.steps {
                s.checkpoint(step, &model)?;
            }
        }
        records.push(rec);
    }

    let checkpoints = if let Some(s) = sink.as_deref_mut() {
        if cfg.steps > 0 {
            s.checkpoint(cfg.steps, &model)?;
        }
        s.flush()?;
        std::mem::take(&mut s.checkpoints)
    } else {
        Vec::new()
    };

    Ok(TrainRun {
        model,
        records,
        checkpoints,
    })
}

/// Fisher-Yates with draws taken from the training stream.
fn shuffle(order: &mut [usize], rng: &mut impl Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::potential::Activation;

    fn tiny_setup(seed: u64) -> (Dataset, PotentialModel, TrainConfig) {
        let data = datasets::make_ring(512, 8, 2.0, 0.1, 42).unwrap();
        let data = datasets::standardize(&data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = PotentialModel::init(vec![2, 16, 1], Activation::Gelu, &mut rng).unwrap();
        let cfg = TrainConfig {
            batch_size: 64,
            steps: 20,
            checkpoint_every: 10,
            seed,
            ..TrainConfig::default()
        };
        (data, model, cfg)
    }

    #[test]
    fn zero_steps_returns_model_unchanged() {
        let (data, model, mut cfg) = tiny_setup(1);
        cfg.steps = 0;
        let before = model.theta.clone();
        let run = train(&data, model, &cfg).unwrap();
        assert_eq!(run.model.theta, before);
        assert!(run.records.is_empty());
    }

    #[test]
    fn training_is_seed_reproducible() {
        let (data, model, cfg) = tiny_setup(7);
        let a = train(&data, model.clone(), &cfg).unwrap();
        let b = train(&data, model, &cfg).unwrap();
        let bits = |v: &[f64]| -> Vec<u64> { v.iter().map(|x| x.to_bits()).collect() };
        assert_eq!(bits(&a.model.theta), bits(&b.model.theta));
        assert_eq!(a.records.len(), cfg.steps);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.loss.total.to_bits(), rb.loss.total.to_bits());
        }
    }

    #[test]
    fn steps_are_logged_in_order() {
        let (data, model, cfg) = tiny_setup(3);
        let run = train(&data, model, &cfg).unwrap();
        for (i, r) in run.records.iter().enumerate() {
            assert_eq!(r.step, i + 1);
            assert!(r.loss.total.is_finite());
            assert!(r.grad_norm >= 0.0);
        }
    }

    #[test]
    fn dir_training_writes_checkpoints_and_log() {
        let (data, model, cfg) = tiny_setup(5);
        let dir = std::env::temp_dir().join("vapo-train-dir-test");
        let _ = std::fs::remove_dir_all(&dir);
        let run = train_to_dir(&data, model, &cfg, &dir).unwrap();
        // checkpoint_every = 10, steps = 20: step_10 and final step_20.
        assert_eq!(run.checkpoints.len(), 2);
        assert!(dir.join("step_10.vapo").exists());
        assert!(dir.join("step_20.vapo").exists());
        let final_model = crate::checkpoint::load(&dir.join("step_20.vapo")).unwrap();
        assert_eq!(final_model.theta, run.model.theta);
        let log = std::fs::read_to_string(dir.join("train_log.csv")).unwrap();
        let lines: Vec<&str> = log.lines().collect();
        assert_eq!(lines[0], LOG_HEADER);
        assert_eq!(lines.len(), 1 + cfg.steps);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (data, _, cfg) = tiny_setup(9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let wrong = PotentialModel::init(vec![3, 8, 1], Activation::Gelu, &mut rng).unwrap();
        assert!(train(&data, wrong, &cfg).is_err());
    }

    #[test]
    fn adam_first_step_has_lr_magnitude() {
        let mut state = OptState::new(OptimizerKind::Adam, 2);
        let mut theta = vec![0.0, 0.0];
        let grad = vec![1e3, 1e-3];
        optimizer_step(&mut state, &mut theta, &grad, 1e-3, None).unwrap();
        for (i, t) in theta.iter().enumerate() {
            assert!(
                (t.abs() - 1e-3).abs() < 1e-6,
                "coord {i}: |delta| = {} not ~ lr",
                t.abs()
            );
            assert!(*t < 0.0);
        }
    }

    #[test]
    fn zero_grad_leaves_theta_unchanged() {
        let mut state = OptState::new(OptimizerKind::Adam, 3);
        let mut theta = vec![0.5, -0.25, 1.0];
        let before = theta.clone();
        optimizer_step(&mut state, &mut theta, &[0.0, 0.0, 0.0], 1e-2, None).unwrap();
        assert_eq!(theta, before);
    }

    #[test]
    fn clipping_caps_the_applied_norm() {
        let mut state = OptState::new(OptimizerKind::SgdMomentum, 2);
        let mut theta = vec![0.0, 0.0];
        let grad = vec![6.0, 8.0]; // norm 10
        let norm = optimizer_step(&mut state, &mut theta, &grad, 1.0, Some(1.0)).unwrap();
        assert!((norm - 1.0).abs() < 1e-12);
        let applied = (theta[0] * theta[0] + theta[1] * theta[1]).sqrt();
        assert!((applied - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sgd_momentum_accumulates_velocity() {
        let mut state = OptState::new(OptimizerKind::SgdMomentum, 1);
        let mut theta = vec![0.0];
        optimizer_step(&mut state, &mut theta, &[1.0], 0.1, None).unwrap();
        assert!((theta[0] + 0.1).abs() < 1e-12);
        optimizer_step(&mut state, &mut theta, &[1.0], 0.1, None).unwrap();
        // velocity = 0.9 * 1 + 1 = 1.9 -> theta -= 0.19
        assert!((theta[0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn optimizer_shape_mismatch_rejected() {
        let mut state = OptState::new(OptimizerKind::Adam, 2);
        let mut theta = vec![0.0, 0.0];
        assert!(optimizer_step(&mut state, &mut theta, &[1.0], 1e-3, None).is_err());
    }

    #[test]
    fn config_parsing_roundtrip_and_errors() {
        let text = "\
# ring run
batch_size = 128
steps = 500
lr = 0.002
optimizer = sgd_momentum
lambda = 0.01
eps_sharp = 0.001
omega = 1.5
sigma = 0.05
seed = 9
checkpoint_every = 100
grad_clip = 5.0
";
        let cfg = TrainConfig::from_str(text).unwrap();
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.steps, 500);
        assert_eq!(cfg.optimizer, OptimizerKind::SgdMomentum);
        assert_eq!(cfg.grad_clip, Some(5.0));
        assert_eq!(cfg.seed, 9);

        assert!(TrainConfig::from_str("unknown_key = 1").is_err());
        assert!(TrainConfig::from_str("batch_size : 2").is_err());
        assert!(TrainConfig::from_str("lr = fast").is_err());
        assert!(TrainConfig::from_str("lambda = -1").is_err());
        // Defaults survive an empty file.
        let d = TrainConfig::from_str("").unwrap();
        assert_eq!(d, TrainConfig::default());
    }
}
