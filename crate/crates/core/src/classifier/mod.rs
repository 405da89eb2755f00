//! Two-stream fusion classifier.
//!
//! The running and kicking stage embeddings pass through one fully connected
//! layer each, the two binary metadata indicators through a third; the three
//! hidden vectors are concatenated and fused through a final hidden layer
//! into class logits. Training minimizes class-weighted cross entropy with
//! exact analytic gradients (see [`gradient`]).

mod checkpoint;
mod train;

pub use checkpoint::{load_model, save_model, CheckpointError};
pub use train::{train, write_history, EpochStats, TrainConfig, HISTORY_HEADER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::num::Real;

/// Width of the metadata vector: field side and kicking foot.
pub const META_DIM: usize = 2;

/// Floor applied to probabilities inside the loss logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Layer sizes and ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    /// Stage embedding length D.
    pub embed_dim: usize,
    /// Hidden width of each stream layer.
    pub hidden_stream: usize,
    /// Hidden width of the metadata layer.
    pub hidden_meta: usize,
    /// Hidden width of the fusion layer.
    pub hidden_fusion: usize,
    /// Number of classes.
    pub classes: usize,
    /// When false, the metadata stream contributes zeros.
    pub use_metadata: bool,
    /// When true, only the running stream is used; the kicking stream
    /// contributes zeros.
    pub single_stream: bool,
}

impl Architecture {
    /// Default layer sizes: streams D->256, metadata 2->16, fusion 528->128->n.
    pub fn new(embed_dim: usize, classes: usize) -> Architecture {
        Architecture {
            embed_dim,
            hidden_stream: 256,
            hidden_meta: 16,
            hidden_fusion: 128,
            classes,
            use_metadata: true,
            single_stream: false,
        }
    }

    pub fn with_hidden(mut self, stream: usize, meta: usize, fusion: usize) -> Architecture {
        self.hidden_stream = stream;
        self.hidden_meta = meta;
        self.hidden_fusion = fusion;
        self
    }

    pub fn with_ablations(mut self, use_metadata: bool, single_stream: bool) -> Architecture {
        self.use_metadata = use_metadata;
        self.single_stream = single_stream;
        self
    }

    /// Width of the concatenated fusion input.
    pub fn fusion_input(&self) -> usize {
        2 * self.hidden_stream + self.hidden_meta
    }

    fn validate(&self) -> Result<(), ClassifierError> {
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden_stream", self.hidden_stream),
            ("hidden_meta", self.hidden_meta),
            ("hidden_fusion", self.hidden_fusion),
            ("classes", self.classes),
        ] {
            if v == 0 {
                return Err(ClassifierError::InvalidDimensions(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<R> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<R>,
}

impl<R: Real> Mat<R> {
    pub fn zeros(rows: usize, cols: usize) -> Mat<R> {
        Mat {
            rows,
            cols,
            data: vec![R::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[R] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// One fully connected layer. Weights are output x input, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<R> {
    pub weights: Mat<R>,
    pub biases: Vec<R>,
}

impl<R: Real> Layer<R> {
    fn zeros(out: usize, input: usize) -> Layer<R> {
        Layer {
            weights: Mat::zeros(out, input),
            biases: vec![R::zero(); out],
        }
    }

    /// y = Wx + b
    fn affine(&self, x: &[R]) -> Vec<R> {
        let mut out = self.biases.clone();
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.weights.row(r);
            let mut acc = R::zero();
            for (w, v) in row.iter().zip(x) {
                acc = acc + *w * *v;
            }
            *o = *o + acc;
        }
        out
    }
}

/// The full parameter set: one [`Layer`] per network component, in the fixed
/// order run, kick, metadata, fusion hidden, output. Also used for gradients
/// and optimizer moments, which share the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<R> {
    pub run_stream: Layer<R>,
    pub kick_stream: Layer<R>,
    pub meta_stream: Layer<R>,
    pub fusion_hidden: Layer<R>,
    pub output: Layer<R>,
}

impl<R: Real> ParamSet<R> {
    pub fn zeros(arch: &Architecture) -> ParamSet<R> {
        ParamSet {
            run_stream: Layer::zeros(arch.hidden_stream, arch.embed_dim),
            kick_stream: Layer::zeros(arch.hidden_stream, arch.embed_dim),
            meta_stream: Layer::zeros(arch.hidden_meta, META_DIM),
            fusion_hidden: Layer::zeros(arch.hidden_fusion, arch.fusion_input()),
            output: Layer::zeros(arch.classes, arch.hidden_fusion),
        }
    }

    pub fn layers(&self) -> [&Layer<R>; 5] {
        [
            &self.run_stream,
            &self.kick_stream,
            &self.meta_stream,
            &self.fusion_hidden,
            &self.output,
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut Layer<R>; 5] {
        [
            &mut self.run_stream,
            &mut self.kick_stream,
            &mut self.meta_stream,
            &mut self.fusion_hidden,
            &mut self.output,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weights.data.len() + l.biases.len())
            .sum()
    }

    /// All parameters in layer order, weights before biases.
    pub fn flatten(&self) -> Vec<R> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in self.layers() {
            out.extend_from_slice(&layer.weights.data);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    /// Visit every parameter mutably, in [`ParamSet::flatten`] order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut R)) {
        for layer in self.layers_mut() {
            for w in &mut layer.weights.data {
                f(w);
            }
            for b in &mut layer.biases {
                f(b);
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| {
            l.weights.data.iter().all(|v| v.is_finite()) && l.biases.iter().all(|v| v.is_finite())
        })
    }
}

/// Gradients share the parameter layout.
pub type ModelGradients<R> = ParamSet<R>;

/// Two-stream fusion network.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel<R> {
    pub arch: Architecture,
    pub params: ParamSet<R>,
}

/// One training sample after pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord<R> {
    pub t_run: Vec<R>,
    pub t_kick: Vec<R>,
    /// {0,1} encoding of field side and kicking foot.
    pub gamma: [R; META_DIM],
    /// Class index in [0, n).
    pub label: usize,
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite activation")]
    NonFiniteActivation,
    #[error("empty batch")]
    EmptyBatch,
    #[error("row {row}: probability is negative or non-finite")]
    ZeroProbability { row: usize },
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("class {class} has no samples")]
    MissingClass { class: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },
    #[error("train or validation split is empty")]
    EmptySplit,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// Initialize a model with fan-scaled symmetric uniform weights
/// (bound `sqrt(6 / (fan_in + fan_out))`) and zero biases.
///
/// Deterministic: the same seed yields bit-identical parameters.
pub fn init_model<R: Real>(
    arch: Architecture,
    seed: u64,
) -> Result<ClassifierModel<R>, ClassifierError> {
    arch.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut params = ParamSet::zeros(&arch);
    for layer in params.layers_mut() {
        let fan_in = layer.weights.cols as f64;
        let fan_out = layer.weights.rows as f64;
        let bound = (6.0 / (fan_in + fan_out)).sqrt();
        for w in &mut layer.weights.data {
            *w = R::from_f64_lossy(rng.random_range(-bound..bound));
        }
    }
    Ok(ClassifierModel { arch, params })
}

/// All-zero parameters; forward output is uniform over classes.
pub fn zero_model<R: Real>(arch: Architecture) -> Result<ClassifierModel<R>, ClassifierError> {
    arch.validate()?;
    Ok(ClassifierModel {
        arch,
        params: ParamSet::zeros(&arch),
    })
}

fn relu_inplace<R: Real>(v: &mut [R]) {
    for x in v {
        if *x < R::zero() {
            *x = R::zero();
        }
    }
}

/// Numerically stable softmax.
fn softmax<R: Real>(logits: &[R]) -> Vec<R> {
    let max = logits
        .iter()
        .copied()
        .fold(R::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<R> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().fold(R::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

struct ForwardTrace<R> {
    run_h: Vec<R>,
    kick_h: Vec<R>,
    meta_h: Vec<R>,
    fusion_in: Vec<R>,
    fusion_h: Vec<R>,
    probs: Vec<R>,
}

fn check_record<R: Real>(
    model: &ClassifierModel<R>,
    record: &FeatureRecord<R>,
) -> Result<(), ClassifierError> {
    if record.t_run.len() != model.arch.embed_dim {
        return Err(ClassifierError::DimensionMismatch {
            what: "t_run",
            expected: model.arch.embed_dim,
            got: record.t_run.len(),
        });
    }
    if record.t_kick.len() != model.arch.embed_dim {
        return Err(ClassifierError::DimensionMismatch {
            what: "t_kick",
            expected: model.arch.embed_dim,
            got: record.t_kick.len(),
        });
    }
    Ok(())
}

fn forward_trace<R: Real>(
    model: &ClassifierModel<R>,
    record: &FeatureRecord<R>,
) -> Result<ForwardTrace<R>, ClassifierError> {
    check_record(model, record)?;
    let arch = &model.arch;
    let p = &model.params;

    let mut run_h = p.run_stream.affine(&record.t_run);
    relu_inplace(&mut run_h);

    let kick_h = if arch.single_stream {
        vec![R::zero(); arch.hidden_stream]
    } else {
        let mut h = p.kick_stream.affine(&record.t_kick);
        relu_inplace(&mut h);
        h
    };

    let meta_h = if arch.use_metadata {
        let mut h = p.meta_stream.affine(&record.gamma);
        relu_inplace(&mut h);
        h
    } else {
        vec![R::zero(); arch.hidden_meta]
    };

    let mut fusion_in = Vec::with_capacity(arch.fusion_input());
    fusion_in.extend_from_slice(&run_h);
    fusion_in.extend_from_slice(&kick_h);
    fusion_in.extend_from_slice(&meta_h);

    let mut fusion_h = p.fusion_hidden.affine(&fusion_in);
    relu_inplace(&mut fusion_h);

    let logits = p.output.affine(&fusion_h);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFiniteActivation);
    }
    let probs = softmax(&logits);
    if probs.iter().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFiniteActivation);
    }
    Ok(ForwardTrace {
        run_h,
        kick_h,
        meta_h,
        fusion_in,
        fusion_h,
        probs,
    })
}

/// Class probabilities for one record. Entries are positive and sum to 1.
pub fn forward<R: Real>(
    model: &ClassifierModel<R>,
    record: &FeatureRecord<R>,
) -> Result<Vec<R>, ClassifierError> {
    Ok(forward_trace(model, record)?.probs)
}

/// Predicted class: argmax of [`forward`], ties broken toward the lowest index.
pub fn predict<R: Real>(
    model: &ClassifierModel<R>,
    record: &FeatureRecord<R>,
) -> Result<usize, ClassifierError> {
    let probs = forward(model, record)?;
    Ok(argmax(&probs))
}

pub(crate) fn argmax<R: Real>(values: &[R]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Class-weighted cross entropy over a batch of probability rows:
/// `J = -(1/m) sum_i w[y_i] * ln(max(p_i[y_i], 1e-12))`.
pub fn loss<R: Real>(
    probabilities: &[Vec<R>],
    labels: &[usize],
    class_weights: &[R],
) -> Result<R, ClassifierError> {
    if probabilities.is_empty() {
        return Err(ClassifierError::EmptyBatch);
    }
    if probabilities.len() != labels.len() {
        return Err(ClassifierError::DimensionMismatch {
            what: "labels",
            expected: probabilities.len(),
            got: labels.len(),
        });
    }
    let n = class_weights.len();
    let floor = R::from_f64_lossy(PROB_FLOOR);
    let mut total = R::zero();
    for (row, (probs, &label)) in probabilities.iter().zip(labels).enumerate() {
        if probs.len() != n {
            return Err(ClassifierError::DimensionMismatch {
                what: "probability row",
                expected: n,
                got: probs.len(),
            });
        }
        if label >= n {
            return Err(ClassifierError::InvalidLabel { label, classes: n });
        }
        let p = probs[label];
        if !p.is_finite() || p < R::zero() {
            return Err(ClassifierError::ZeroProbability { row });
        }
        let p = if p < floor { floor } else { p };
        total = total - class_weights[label] * p.ln();
    }
    Ok(total / R::from_f64_lossy(probabilities.len() as f64))
}

/// Inverse-frequency class weights `w_k = m / (n * count_k)`; the mean weight
/// is 1 when classes are balanced.
pub fn compute_class_weights<R: Real>(
    labels: &[usize],
    n: usize,
) -> Result<Vec<R>, ClassifierError> {
    if n == 0 {
        return Err(ClassifierError::InvalidDimensions("n must be >= 1".into()));
    }
    let mut counts = vec![0usize; n];
    for &label in labels {
        if label >= n {
            return Err(ClassifierError::InvalidLabel { label, classes: n });
        }
        counts[label] += 1;
    }
    let m = labels.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(class, &c)| {
            if c == 0 {
                Err(ClassifierError::MissingClass { class })
            } else {
                Ok(R::from_f64_lossy(m / (n as f64 * c as f64)))
            }
        })
        .collect()
}

/// Exact gradient of [`loss`] composed with [`forward`] over a batch,
/// computed by reverse-mode accumulation.
pub fn gradient<R: Real>(
    model: &ClassifierModel<R>,
    batch: &[FeatureRecord<R>],
    class_weights: &[R],
) -> Result<ModelGradients<R>, ClassifierError> {
    if batch.is_empty() {
        return Err(ClassifierError::EmptyBatch);
    }
    let arch = &model.arch;
    if class_weights.len() != arch.classes {
        return Err(ClassifierError::DimensionMismatch {
            what: "class_weights",
            expected: arch.classes,
            got: class_weights.len(),
        });
    }
    let inv_m = R::from_f64_lossy(1.0 / batch.len() as f64);
    let mut grads = ParamSet::zeros(arch);

    for record in batch {
        if record.label >= arch.classes {
            return Err(ClassifierError::InvalidLabel {
                label: record.label,
                classes: arch.classes,
            });
        }
        let trace = forward_trace(model, record)?;
        let weight = class_weights[record.label] * inv_m;

        // d loss / d logits = (w_y / m) * (p - onehot(y))
        let mut d_logits = trace.probs.clone();
        d_logits[record.label] = d_logits[record.label] - R::one();
        for v in &mut d_logits {
            *v = *v * weight;
        }

        accumulate_layer(&mut grads.output, &d_logits, &trace.fusion_h);
        let d_fusion_h = backprop_through(&model.params.output, &d_logits, &trace.fusion_h);

        accumulate_layer(&mut grads.fusion_hidden, &d_fusion_h, &trace.fusion_in);
        let d_fusion_in =
            backprop_linear(&model.params.fusion_hidden, &d_fusion_h);

        let hs = arch.hidden_stream;
        let d_run_h = masked(&d_fusion_in[..hs], &trace.run_h);
        accumulate_layer(&mut grads.run_stream, &d_run_h, &record.t_run);

        if !arch.single_stream {
            let d_kick_h = masked(&d_fusion_in[hs..2 * hs], &trace.kick_h);
            accumulate_layer(&mut grads.kick_stream, &d_kick_h, &record.t_kick);
        }
        if arch.use_metadata {
            let d_meta_h = masked(&d_fusion_in[2 * hs..], &trace.meta_h);
            accumulate_layer(&mut grads.meta_stream, &d_meta_h, &record.gamma);
        }
    }
    if !grads.is_finite() {
        return Err(ClassifierError::NonFiniteGradient);
    }
    Ok(grads)
}

/// dW += d_out x input, db += d_out
fn accumulate_layer<R: Real>(grad: &mut Layer<R>, d_out: &[R], input: &[R]) {
    let cols = grad.weights.cols;
    for (r, &d) in d_out.iter().enumerate() {
        if d == R::zero() {
            continue;
        }
        let row = &mut grad.weights.data[r * cols..(r + 1) * cols];
        for (w, &x) in row.iter_mut().zip(input) {
            *w = *w + d * x;
        }
        grad.biases[r] = grad.biases[r] + d;
    }
}

/// W^T d_out, masked by the layer's rectified activations.
fn backprop_through<R: Real>(layer: &Layer<R>, d_out: &[R], activations: &[R]) -> Vec<R> {
    masked(&backprop_linear(layer, d_out), activations)
}

/// W^T d_out
fn backprop_linear<R: Real>(layer: &Layer<R>, d_out: &[R]) -> Vec<R> {
    let mut d_in = vec![R::zero(); layer.weights.cols];
    for (r, &d) in d_out.iter().enumerate() {
        if d == R::zero() {
            continue;
        }
        let row = layer.weights.row(r);
        for (di, &w) in d_in.iter_mut().zip(row) {
            *di = *di + w * d;
        }
    }
    d_in
}

/// Zero the gradient where the rectified activation was zero.
fn masked<R: Real>(d: &[R], activations: &[R]) -> Vec<R> {
    d.iter()
        .zip(activations)
        .map(|(&g, &a)| if a > R::zero() { g } else { R::zero() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch(n: usize) -> Architecture {
        Architecture::new(4, n).with_hidden(5, 3, 6)
    }

    fn sample_record<R: Real>(seed: u64, dim: usize, n: usize) -> FeatureRecord<R> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        FeatureRecord {
            t_run: (0..dim)
                .map(|_| R::from_f64_lossy(rng.random_range(-1.0..1.0)))
                .collect(),
            t_kick: (0..dim)
                .map(|_| R::from_f64_lossy(rng.random_range(-1.0..1.0)))
                .collect(),
            gamma: [
                R::from_f64_lossy((seed % 2) as f64),
                R::from_f64_lossy(((seed / 2) % 2) as f64),
            ],
            label: (seed as usize) % n,
        }
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let arch = Architecture::new(768, 3);
        let a: ClassifierModel<f64> = init_model(arch, 9).unwrap();
        let b: ClassifierModel<f64> = init_model(arch, 9).unwrap();
        assert_eq!(a.params, b.params);
        // run stream connects D=768 inputs to 256 hidden units
        assert_eq!(a.params.run_stream.weights.rows, 256);
        assert_eq!(a.params.run_stream.weights.cols, 768);
        assert_eq!(a.params.fusion_hidden.weights.cols, 528);
        assert!(a.params.run_stream.biases.iter().all(|&b| b == 0.0));

        let c: ClassifierModel<f64> = init_model(arch, 10).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn two_class_model_has_two_outputs() {
        let model: ClassifierModel<f64> = init_model(small_arch(2), 0).unwrap();
        assert_eq!(model.params.output.weights.rows, 2);
        let probs = forward(&model, &sample_record(1, 4, 2)).unwrap();
        assert_eq!(probs.len(), 2);
    }

    #[test]
    fn zero_model_outputs_uniform() {
        let model: ClassifierModel<f64> = zero_model(small_arch(3)).unwrap();
        let probs = forward(&model, &sample_record(5, 4, 3)).unwrap();
        for p in &probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(predict(&model, &sample_record(5, 4, 3)).unwrap(), 0);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model: ClassifierModel<f64> = init_model(small_arch(3), 3).unwrap();
        for seed in 0..20 {
            let probs = forward(&model, &sample_record(seed, 4, 3)).unwrap();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn loss_uniform_is_ln_n() {
        let probs = vec![vec![1.0 / 3.0; 3]; 5];
        let labels = vec![0, 1, 2, 0, 1];
        let j: f64 = loss(&probs, &labels, &[1.0, 1.0, 1.0]).unwrap();
        assert!((j - 3.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn loss_hand_case() {
        let probs = vec![vec![0.5, 0.5], vec![0.25, 0.75]];
        let labels = vec![0, 0];
        let j: f64 = loss(&probs, &labels, &[1.0, 1.0]).unwrap();
        assert!((j - 1.5 * 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_perfect_predictions_near_zero() {
        let eps = 1e-12;
        let probs = vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]];
        let labels = vec![0, 1];
        let j: f64 = loss(&probs, &labels, &[1.0, 1.0]).unwrap();
        assert!(j >= 0.0);
        assert!(j <= 1.1e-12);
    }

    #[test]
    fn loss_error_paths() {
        assert!(matches!(
            loss::<f64>(&[], &[], &[1.0]),
            Err(ClassifierError::EmptyBatch)
        ));
        assert!(matches!(
            loss(&[vec![-0.5, 1.5]], &[0], &[1.0, 1.0]),
            Err(ClassifierError::ZeroProbability { row: 0 })
        ));
    }

    #[test]
    fn class_weights_from_paper_counts() {
        let mut labels = Vec::new();
        labels.extend(std::iter::repeat_n(0usize, 229));
        labels.extend(std::iter::repeat_n(1usize, 303));
        labels.extend(std::iter::repeat_n(2usize, 108));
        let w: Vec<f64> = compute_class_weights(&labels, 3).unwrap();
        assert!((w[0] - 0.9316).abs() < 1e-4);
        assert!((w[1] - 0.7040).abs() < 1e-4);
        assert!((w[2] - 1.9753).abs() < 1e-4);
    }

    #[test]
    fn class_weights_balanced_are_unit() {
        let w: Vec<f64> = compute_class_weights(&[0, 1, 0, 1], 2).unwrap();
        assert_eq!(w, vec![1.0, 1.0]);
        let w1: Vec<f64> = compute_class_weights(&[0, 1], 2).unwrap();
        assert_eq!(w1, vec![1.0, 1.0]);
        assert!(matches!(
            compute_class_weights::<f64>(&[0, 0], 2),
            Err(ClassifierError::MissingClass { class: 1 })
        ));
    }

    #[test]
    fn zero_model_bias_gradient_closed_form() {
        // At zero parameters the softmax is uniform, so the output-layer bias
        // gradient is mean over the batch of (1/n - onehot).
        let model: ClassifierModel<f64> = zero_model(small_arch(2)).unwrap();
        let batch = vec![sample_record(0, 4, 2), sample_record(1, 4, 2)];
        // labels are 0 and 1 -> balanced
        let grads = gradient(&model, &batch, &[1.0, 1.0]).unwrap();
        for b in &grads.output.biases {
            assert!((b - 0.0).abs() < 1e-15);
        }
        // all-left batch: gradient = (1/2 - 1, 1/2 - 0) = (-1/2, 1/2)
        let batch = vec![sample_record(0, 4, 2), sample_record(2, 4, 2)];
        let grads = gradient(&model, &batch, &[1.0, 1.0]).unwrap();
        assert!((grads.output.biases[0] + 0.5).abs() < 1e-15);
        assert!((grads.output.biases[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn duplicated_batch_keeps_gradient() {
        let model: ClassifierModel<f64> = init_model(small_arch(3), 2).unwrap();
        let batch: Vec<FeatureRecord<f64>> =
            (0..4).map(|s| sample_record(s, 4, 3)).collect();
        let mut doubled = batch.clone();
        doubled.extend(batch.iter().cloned());
        let w = vec![1.0, 0.5, 2.0];
        let g1 = gradient(&model, &batch, &w).unwrap();
        let g2 = gradient(&model, &doubled, &w).unwrap();
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_scaling_scales_gradient_colinearly() {
        let model: ClassifierModel<f64> = init_model(small_arch(2), 4).unwrap();
        let batch: Vec<FeatureRecord<f64>> =
            (0..6).map(|s| sample_record(s, 4, 2)).collect();
        let w = vec![1.0, 1.5];
        let scaled: Vec<f64> = w.iter().map(|x| x * 3.0).collect();
        let probs: Vec<Vec<f64>> = batch
            .iter()
            .map(|r| forward(&model, r).unwrap())
            .collect();
        let labels: Vec<usize> = batch.iter().map(|r| r.label).collect();
        let j1: f64 = loss(&probs, &labels, &w).unwrap();
        let j3: f64 = loss(&probs, &labels, &scaled).unwrap();
        assert!((j3 - 3.0 * j1).abs() < 1e-12);
        let g1 = gradient(&model, &batch, &w).unwrap().flatten();
        let g3 = gradient(&model, &batch, &scaled).unwrap().flatten();
        for (a, b) in g1.iter().zip(&g3) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn metadata_ablation_ignores_gamma() {
        let arch = small_arch(3).with_ablations(false, false);
        let model: ClassifierModel<f64> = init_model(arch, 6).unwrap();
        let mut rec = sample_record(3, 4, 3);
        rec.gamma = [0.0, 0.0];
        let p0 = forward(&model, &rec).unwrap();
        rec.gamma = [1.0, 1.0];
        let p1 = forward(&model, &rec).unwrap();
        assert_eq!(p0, p1);
    }

    #[test]
    fn single_stream_matches_zeroed_kick_weights() {
        let arch = small_arch(3).with_ablations(true, true);
        let single: ClassifierModel<f64> = init_model(arch, 8).unwrap();

        let mut two_stream = single.clone();
        two_stream.arch.single_stream = false;
        for w in &mut two_stream.params.kick_stream.weights.data {
            *w = 0.0;
        }
        for b in &mut two_stream.params.kick_stream.biases {
            *b = 0.0;
        }

        for seed in 0..10 {
            let mut rec = sample_record(seed, 4, 3);
            rec.t_kick = rec.t_run.clone();
            let a = forward(&single, &rec).unwrap();
            let b = forward(&two_stream, &rec).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn predict_prefers_lowest_on_tie_and_argmax() {
        assert_eq!(argmax(&[0.2f64, 0.7, 0.1]), 1);
        assert_eq!(argmax(&[0.5f64, 0.5]), 0);
    }

    #[test]
    fn dimension_mismatch_detected() {
        let model: ClassifierModel<f64> = init_model(small_arch(2), 0).unwrap();
        let mut rec = sample_record(0, 4, 2);
        rec.t_run.pop();
        assert!(matches!(
            forward(&model, &rec),
            Err(ClassifierError::DimensionMismatch { what: "t_run", .. })
        ));
    }
}
