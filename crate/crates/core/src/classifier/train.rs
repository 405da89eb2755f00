//! Mini-batch training with the adaptive moment estimation update rule.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::num::Real;

use super::{
    argmax, forward, gradient, loss, ClassifierError, ClassifierModel, FeatureRecord, ParamSet,
};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Training hyperparameters. Class weights must match the model's class count.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many epochs without a new best validation loss.
    pub early_stop_patience: usize,
    pub class_weights: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 200,
            batch_size: 32,
            seed: 0,
            early_stop_patience: 20,
            class_weights: Vec::new(),
        }
    }
}

impl TrainConfig {
    fn validate(&self, classes: usize) -> Result<(), ClassifierError> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(ClassifierError::InvalidConfig(
                "learning_rate must be finite and non-negative".into(),
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(ClassifierError::InvalidConfig(
                "batch_size and max_epochs must be >= 1".into(),
            ));
        }
        if self.class_weights.len() != classes {
            return Err(ClassifierError::InvalidConfig(format!(
                "expected {} class weights, got {}",
                classes,
                self.class_weights.len()
            )));
        }
        if self.class_weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(ClassifierError::InvalidConfig(
                "class weights must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

/// Loss and accuracy for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,train_acc,val_acc";

/// Serialize the per-epoch history as a comma-separated table.
pub fn write_history(path: &Path, history: &[EpochStats]) -> std::io::Result<()> {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            h.epoch, h.train_loss, h.val_loss, h.train_acc, h.val_acc
        ));
    }
    std::fs::write(path, out)
}

fn evaluate_split<R: Real>(
    model: &ClassifierModel<R>,
    records: &[FeatureRecord<R>],
    class_weights: &[R],
) -> Result<(f64, f64), ClassifierError> {
    let mut probs = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut correct = 0usize;
    for r in records {
        let p = forward(model, r)?;
        if argmax(&p) == r.label {
            correct += 1;
        }
        probs.push(p);
        labels.push(r.label);
    }
    let j = loss(&probs, &labels, class_weights)?;
    Ok((j.as_f64(), correct as f64 / records.len() as f64))
}

struct AdamState<R> {
    m: ParamSet<R>,
    v: ParamSet<R>,
    step: usize,
}

impl<R: Real> AdamState<R> {
    fn new(arch: &super::Architecture) -> Self {
        AdamState {
            m: ParamSet::zeros(arch),
            v: ParamSet::zeros(arch),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ParamSet<R>, grads: &ParamSet<R>, learning_rate: f64) {
        self.step += 1;
        let beta1 = R::from_f64_lossy(ADAM_BETA1);
        let beta2 = R::from_f64_lossy(ADAM_BETA2);
        let eps = R::from_f64_lossy(ADAM_EPS);
        let one = R::one();
        let corr1 = R::from_f64_lossy(1.0 - ADAM_BETA1.powi(self.step as i32));
        let corr2 = R::from_f64_lossy(1.0 - ADAM_BETA2.powi(self.step as i32));
        let lr = R::from_f64_lossy(learning_rate);

        let param_layers = params.layers_mut();
        let grad_layers = grads.layers();
        let m_layers = self.m.layers_mut();
        let v_layers = self.v.layers_mut();
        for (((p_l, g_l), m_l), v_l) in param_layers
            .into_iter()
            .zip(grad_layers)
            .zip(m_layers)
            .zip(v_layers)
        {
            let p_iter = p_l.weights.data.iter_mut().chain(p_l.biases.iter_mut());
            let g_iter = g_l.weights.data.iter().chain(g_l.biases.iter());
            let m_iter = m_l.weights.data.iter_mut().chain(m_l.biases.iter_mut());
            let v_iter = v_l.weights.data.iter_mut().chain(v_l.biases.iter_mut());
            for (((p, &g), m), v) in p_iter.zip(g_iter).zip(m_iter).zip(v_iter) {
                *m = beta1 * *m + (one - beta1) * g;
                *v = beta2 * *v + (one - beta2) * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Train by mini-batch gradient descent with adaptive moment estimation.
///
/// Deterministic given the seed (fixed shuffle order). Returns the parameters
/// with the best validation loss together with the per-epoch history.
pub fn train<R: Real>(
    model: ClassifierModel<R>,
    train_set: &[FeatureRecord<R>],
    val_set: &[FeatureRecord<R>],
    config: &TrainConfig,
) -> Result<(ClassifierModel<R>, Vec<EpochStats>), ClassifierError> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(ClassifierError::EmptySplit);
    }
    config.validate(model.arch.classes)?;
    let weights: Vec<R> = config
        .class_weights
        .iter()
        .map(|&w| R::from_f64_lossy(w))
        .collect();

    let mut model = model;
    let mut adam = AdamState::new(&model.arch);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = Vec::new();
    let mut best_params = model.params.clone();
    let mut best_val_loss = f64::INFINITY;
    let mut epochs_since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch_indices in order.chunks(config.batch_size) {
            let batch: Vec<FeatureRecord<R>> = batch_indices
                .iter()
                .map(|&i| train_set[i].clone())
                .collect();
            let grads = gradient(&model, &batch, &weights)?;
            adam.update(&mut model.params, &grads, config.learning_rate);
        }
        let (train_loss, train_acc) = evaluate_split(&model, train_set, &weights)?;
        let (val_loss, val_acc) = evaluate_split(&model, val_set, &weights)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(ClassifierError::Divergence { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
        });
        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_params = model.params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    model.params = best_params;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{forward, init_model, Architecture};
    use rand::Rng;

    fn separable_set(n_per_class: usize, seed: u64) -> Vec<FeatureRecord<f64>> {
        // class 0 has t_kick[0] near -1, class 1 near +1; run stream is noise
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for label in 0..2usize {
            for _ in 0..n_per_class {
                let sign = if label == 0 { -1.0 } else { 1.0 };
                let t_kick: Vec<f64> = (0..4)
                    .map(|i| {
                        if i == 0 {
                            sign + 0.3 * rng.random_range(-1.0..1.0)
                        } else {
                            rng.random_range(-1.0..1.0)
                        }
                    })
                    .collect();
                let t_run: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                out.push(FeatureRecord {
                    t_run,
                    t_kick,
                    gamma: [rng.random_range(0..2) as f64, rng.random_range(0..2) as f64],
                    label,
                });
            }
        }
        out
    }

    fn small_config(n: usize) -> TrainConfig {
        TrainConfig {
            seed: 3,
            class_weights: vec![1.0; n],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let arch = Architecture::new(4, 2).with_hidden(6, 3, 5);
        let model: ClassifierModel<f64> = init_model(arch, 1).unwrap();
        let initial = model.params.clone();
        let data = separable_set(8, 0);
        let config = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 3,
            ..small_config(2)
        };
        let (trained, history) = train(model, &data[..12], &data[12..], &config).unwrap();
        assert_eq!(trained.params, initial);
        assert_eq!(history.len(), 3);
    }

    #[test]
    fn learns_separable_data() {
        let arch = Architecture::new(4, 2).with_hidden(16, 4, 8);
        let model: ClassifierModel<f64> = init_model(arch, 2).unwrap();
        let train_data = separable_set(60, 1);
        let val_data = separable_set(20, 2);
        let (trained, history) = train(model, &train_data, &val_data, &small_config(2)).unwrap();
        assert!(history.len() <= 200);
        let correct = val_data
            .iter()
            .filter(|r| {
                argmax(&forward(&trained, r).unwrap()) == r.label
            })
            .count();
        let acc = correct as f64 / val_data.len() as f64;
        assert!(acc >= 0.95, "validation accuracy {acc} below 0.95");
    }

    #[test]
    fn same_seed_reproduces_history_bitwise() {
        let arch = Architecture::new(4, 2).with_hidden(8, 3, 6);
        let data = separable_set(20, 5);
        let config = TrainConfig {
            max_epochs: 10,
            ..small_config(2)
        };
        let run = |s: u64| {
            let model: ClassifierModel<f64> = init_model(arch, s).unwrap();
            train(model, &data[..30], &data[30..], &config).unwrap()
        };
        let (m1, h1) = run(7);
        let (m2, h2) = run(7);
        assert_eq!(h1, h2);
        assert_eq!(m1.params, m2.params);
        let (_, h3) = run(8);
        assert_ne!(h1, h3);
    }

    #[test]
    fn first_epoch_reduces_training_loss() {
        let arch = Architecture::new(4, 2).with_hidden(16, 4, 8);
        let model: ClassifierModel<f64> = init_model(arch, 11).unwrap();
        let data = separable_set(40, 9);
        let weights = vec![1.0, 1.0];
        let w: Vec<f64> = weights.clone();
        let probs: Vec<Vec<f64>> = data.iter().map(|r| forward(&model, r).unwrap()).collect();
        let labels: Vec<usize> = data.iter().map(|r| r.label).collect();
        let initial: f64 = crate::classifier::loss(&probs, &labels, &w).unwrap();
        let config = TrainConfig {
            max_epochs: 1,
            class_weights: weights,
            ..TrainConfig::default()
        };
        let (_, history) = train(model, &data[..60], &data[60..], &config).unwrap();
        assert!(history[0].train_loss < initial);
    }

    #[test]
    fn empty_split_rejected() {
        let arch = Architecture::new(4, 2).with_hidden(6, 3, 5);
        let model: ClassifierModel<f64> = init_model(arch, 1).unwrap();
        let data = separable_set(4, 0);
        assert!(matches!(
            train(model, &data, &[], &small_config(2)),
            Err(ClassifierError::EmptySplit)
        ));
    }

    #[test]
    fn history_csv_round_trip_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let history = vec![EpochStats {
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.625,
            train_acc: 0.75,
            val_acc: 0.5,
        }];
        write_history(&path, &history).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "epoch,train_loss,val_loss,train_acc,val_acc\n1,0.5,0.625,0.75,0.5\n");
    }
}
