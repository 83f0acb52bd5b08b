//! One-hidden-layer ReLU classifier `logits = W2·relu(W1·h + b1) + b2`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const NUM_CLASSES: usize = 4;
const FORMAT: &str = "wheelcheck-mlp/1";

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden_dim: usize,
    /// hidden × input, row-major
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// classes × hidden, row-major
    w2: Vec<f64>,
    b2: Vec<f64>,
    pub class_names: Vec<String>,
    /// Histogram geometry the model was trained on (M + 1 values).
    pub bin_edges: Vec<f64>,
    pub training: Option<TrainMeta>,
}

impl MlpModel {
    pub fn from_parts(
        w1: Vec<Vec<f64>>,
        b1: Vec<f64>,
        w2: Vec<Vec<f64>>,
        b2: Vec<f64>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let hidden_dim = w1.len();
        let input_dim = w1.first().map_or(0, Vec::len);
        let model = Self {
            input_dim,
            hidden_dim,
            w1: w1.concat(),
            b1,
            w2: w2.concat(),
            b2,
            class_names,
            bin_edges: Vec::new(),
            training: None,
        };
        model.check()?;
        Ok(model)
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; NUM_CLASSES * hidden_dim],
            b2: vec![0.0; NUM_CLASSES],
            class_names: default_class_names("X"),
            bin_edges: Vec::new(),
            training: None,
        }
    }

    /// Uniform Kaiming initialisation, bound `sqrt(6 / fan_in)`, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, "mlp-init", 0));
        let mut m = Self::zeros(input_dim, hidden_dim);
        let a1 = (6.0 / input_dim as f64).sqrt();
        let a2 = (6.0 / hidden_dim as f64).sqrt();
        m.w1.iter_mut()
            .for_each(|w| *w = a1 * (2.0 * rng.random::<f64>() - 1.0));
        m.w2.iter_mut()
            .for_each(|w| *w = a2 * (2.0 * rng.random::<f64>() - 1.0));
        m
    }

    fn check(&self) -> Result<()> {
        let dims = [
            (self.w1.len(), self.hidden_dim * self.input_dim),
            (self.b1.len(), self.hidden_dim),
            (self.w2.len(), NUM_CLASSES * self.hidden_dim),
            (self.b2.len(), NUM_CLASSES),
            (self.class_names.len(), NUM_CLASSES),
        ];
        for (got, expected) in dims {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("empty layer".into()));
        }
        if !self.bin_edges.is_empty() && self.bin_edges.len() != self.input_dim + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim + 1,
                got: self.bin_edges.len(),
            });
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn w1_row(&self, i: usize) -> &[f64] {
        &self.w1[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2_row(&self, c: usize) -> &[f64] {
        &self.w2[c * self.hidden_dim..(c + 1) * self.hidden_dim]
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    pub fn w1_mut(&mut self) -> &mut [f64] {
        &mut self.w1
    }

    pub fn b1_mut(&mut self) -> &mut [f64] {
        &mut self.b1
    }

    pub fn w2_mut(&mut self) -> &mut [f64] {
        &mut self.w2
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        &mut self.b2
    }

    fn check_input(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: h.len(),
            });
        }
        Ok(())
    }

    /// Hidden pre-activations `W1·h + b1`.
    pub fn pre_activations(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_input(h)?;
        Ok(self.pre_unchecked(h))
    }

    fn pre_unchecked(&self, h: &[f64]) -> Vec<f64> {
        (0..self.hidden_dim)
            .map(|i| affine(self.w1_row(i), h, self.b1[i]))
            .collect()
    }

    fn logits_from_hidden(&self, act: &[f64]) -> [f64; NUM_CLASSES] {
        let mut out = [0.0; NUM_CLASSES];
        for (c, o) in out.iter_mut().enumerate() {
            *o = affine(self.w2_row(c), act, self.b2[c]);
        }
        out
    }

    pub fn forward(&self, h: &[f64]) -> Result<[f64; NUM_CLASSES]> {
        self.check_input(h)?;
        let act: Vec<f64> = self.pre_unchecked(h).into_iter().map(relu).collect();
        Ok(self.logits_from_hidden(&act))
    }

    pub fn classify(&self, h: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(h)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&ModelFile::from(self)).expect("serialisable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        file.try_into()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

pub fn default_class_names(anomaly: &str) -> Vec<String> {
    vec![
        format!("no {anomaly}"),
        format!("{anomaly}1"),
        format!("{anomaly}2"),
        format!("{anomaly}3"),
    ]
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `b + w·x`, accumulated left to right from the bias.
#[inline]
fn affine(w: &[f64], x: &[f64], b: f64) -> f64 {
    w.iter().zip(x).fold(b, |acc, (p, q)| acc + p * q)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
    class_names: Vec<String>,
    #[serde(default)]
    bin_edges: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainMeta>,
}

impl From<&MlpModel> for ModelFile {
    fn from(m: &MlpModel) -> Self {
        Self {
            format: FORMAT.to_string(),
            input_dim: m.input_dim,
            hidden_dim: m.hidden_dim,
            output_dim: NUM_CLASSES,
            w1: m.w1.chunks(m.input_dim).map(<[f64]>::to_vec).collect(),
            b1: m.b1.clone(),
            w2: m.w2.chunks(m.hidden_dim).map(<[f64]>::to_vec).collect(),
            b2: m.b2.clone(),
            class_names: m.class_names.clone(),
            bin_edges: m.bin_edges.clone(),
            training: m.training.clone(),
        }
    }
}

impl TryFrom<ModelFile> for MlpModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format != FORMAT {
            return Err(Error::InvalidConfig(format!(
                "unknown model format {:?}",
                f.format
            )));
        }
        if f.output_dim != NUM_CLASSES {
            return Err(Error::DimensionMismatch {
                expected: NUM_CLASSES,
                got: f.output_dim,
            });
        }
        if f.w1.len() != f.hidden_dim {
            return Err(Error::DimensionMismatch {
                expected: f.hidden_dim,
                got: f.w1.len(),
            });
        }
        if f.w2.len() != NUM_CLASSES {
            return Err(Error::DimensionMismatch {
                expected: NUM_CLASSES,
                got: f.w2.len(),
            });
        }
        for row in &f.w1 {
            if row.len() != f.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: f.input_dim,
                    got: row.len(),
                });
            }
        }
        for row in &f.w2 {
            if row.len() != f.hidden_dim {
                return Err(Error::DimensionMismatch {
                    expected: f.hidden_dim,
                    got: row.len(),
                });
            }
        }
        let m = MlpModel {
            input_dim: f.input_dim,
            hidden_dim: f.hidden_dim,
            w1: f.w1.concat(),
            b1: f.b1,
            w2: f.w2.concat(),
            b2: f.b2,
            class_names: f.class_names,
            bin_edges: f.bin_edges,
            training: f.training,
        };
        m.check()?;
        Ok(m)
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: usize,
}

/// Gradient with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros_like(m: &MlpModel) -> Self {
        Self {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }
}

/// Mean softmax cross-entropy over `batch` plus `0.5·weight_decay·‖W‖²`
/// (weights only), and its gradient by backpropagation.
pub fn loss_and_grad(
    model: &MlpModel,
    batch: &[Sample],
    weight_decay: f64,
) -> Result<(f64, Gradients)> {
    loss_and_grad_weighted(model, batch, None, weight_decay)
}

fn loss_and_grad_weighted(
    model: &MlpModel,
    batch: &[Sample],
    weights: Option<&[f64]>,
    weight_decay: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut g = Gradients::zeros_like(model);
    let total_w: f64 = weights.map_or(batch.len() as f64, |w| w.iter().sum());
    let mut loss = 0.0;
    let (m_in, m_hid) = (model.input_dim, model.hidden_dim);
    for (idx, s) in batch.iter().enumerate() {
        model.check_input(&s.input)?;
        if s.label >= NUM_CLASSES {
            return Err(Error::InvalidConfig(format!("label {} out of range", s.label)));
        }
        let sw = weights.map_or(1.0, |w| w[idx]) / total_w;
        let pre = model.pre_unchecked(&s.input);
        let act: Vec<f64> = pre.iter().copied().map(relu).collect();
        let logits = model.logits_from_hidden(&act);
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - mx).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sw * (sum.ln() + mx - logits[s.label]);
        // dL/dlogit = softmax - onehot
        let mut dz = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            dz[c] = sw * (exps[c] / sum - if c == s.label { 1.0 } else { 0.0 });
        }
        let mut dact = vec![0.0; m_hid];
        for c in 0..NUM_CLASSES {
            g.b2[c] += dz[c];
            for j in 0..m_hid {
                g.w2[c * m_hid + j] += dz[c] * act[j];
                dact[j] += dz[c] * model.w2[c * m_hid + j];
            }
        }
        for j in 0..m_hid {
            if pre[j] <= 0.0 {
                continue;
            }
            g.b1[j] += dact[j];
            for i in 0..m_in {
                g.w1[j * m_in + i] += dact[j] * s.input[i];
            }
        }
    }
    if weight_decay > 0.0 {
        let sq: f64 = model.w1.iter().chain(&model.w2).map(|w| w * w).sum();
        loss += 0.5 * weight_decay * sq;
        for (gw, w) in g.w1.iter_mut().zip(&model.w1) {
            *gw += weight_decay * w;
        }
        for (gw, w) in g.w2.iter_mut().zip(&model.w2) {
            *gw += weight_decay * w;
        }
    }
    Ok((loss, g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub hidden_dim: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// Weight samples inversely to their class frequency.
    pub class_balanced: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 300,
            batch_size: 32,
            seed: 0,
            weight_decay: 1e-4,
            hidden_dim: 10,
            beta1: 0.9,
            beta2: 0.999,
            class_balanced: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "learning_rate, epochs and batch_size must be positive".into(),
            ));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("hidden_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub optimizer: String,
    pub init: String,
    pub config: TrainConfig,
    pub samples: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &TrainConfig,
    t: i32,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        params[i] -= cfg.learning_rate * mh / (vh.sqrt() + 1e-8);
    }
}

pub fn accuracy(model: &MlpModel, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for s in data {
        if model.classify(&s.input)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mini-batch Adam. Deterministic given `cfg.seed`.
pub fn train(data: &[Sample], cfg: &TrainConfig) -> Result<MlpModel> {
    cfg.validate()?;
    let Some(first) = data.first() else {
        return Err(Error::EmptyBatch);
    };
    let m_in = first.input.len();
    let mut model = MlpModel::init(m_in, cfg.hidden_dim, cfg.seed);
    for s in data {
        model.check_input(&s.input)?;
    }

    let weights: Vec<f64> = if cfg.class_balanced {
        let mut counts = [0usize; NUM_CLASSES];
        for s in data {
            counts[s.label.min(NUM_CLASSES - 1)] += 1;
        }
        data.iter()
            .map(|s| 1.0 / counts[s.label.min(NUM_CLASSES - 1)] as f64)
            .collect()
    } else {
        vec![1.0; data.len()]
    };

    let full_loss = |m: &MlpModel| -> Result<f64> {
        Ok(loss_and_grad_weighted(m, data, Some(&weights), cfg.weight_decay)?.0)
    };
    let initial_loss = full_loss(&model)?;

    let mut rng = seed::rng(seed::derive(cfg.seed, "mlp-shuffle", 0));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut st = Gradients::zeros_like(&model);
    let mut sv = Gradients::zeros_like(&model);
    let mut t = 0i32;
    let mut last = initial_loss;
    let mut batch: Vec<Sample> = Vec::with_capacity(cfg.batch_size);
    let mut bw: Vec<f64> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            bw.clear();
            for &i in chunk {
                batch.push(data[i].clone());
                bw.push(weights[i]);
            }
            let (loss, g) = loss_and_grad_weighted(&model, &batch, Some(&bw), cfg.weight_decay)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    last_loss: last,
                });
            }
            last = loss;
            t = t.saturating_add(1);
            adam_step(&mut model.w1, &g.w1, &mut st.w1, &mut sv.w1, cfg, t);
            adam_step(&mut model.b1, &g.b1, &mut st.b1, &mut sv.b1, cfg, t);
            adam_step(&mut model.w2, &g.w2, &mut st.w2, &mut sv.w2, cfg, t);
            adam_step(&mut model.b2, &g.b2, &mut st.b2, &mut sv.b2, cfg, t);
        }
    }
    let final_loss = full_loss(&model)?;
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: cfg.epochs,
            batch: 0,
            last_loss: last,
        });
    }
    model.training = Some(TrainMeta {
        optimizer: format!(
            "adam(lr={}, beta1={}, beta2={}, eps=1e-8)",
            cfg.learning_rate, cfg.beta1, cfg.beta2
        ),
        init: "uniform kaiming sqrt(6/fan_in), zero bias".into(),
        config: cfg.clone(),
        samples: data.len(),
        initial_loss,
        final_loss,
        train_accuracy: accuracy(&model, data)?,
    });
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_line_forward(m: &MlpModel, h: &[f64]) -> Vec<f64> {
        let mut hidden = Vec::new();
        for i in 0..m.hidden_dim() {
            let mut z = m.b1()[i];
            for k in 0..m.input_dim() {
                z += m.w1_row(i)[k] * h[k];
            }
            hidden.push(if z > 0.0 { z } else { 0.0 });
        }
        let mut out = Vec::new();
        for c in 0..NUM_CLASSES {
            let mut y = m.b2()[c];
            for j in 0..m.hidden_dim() {
                y += m.w2_row(c)[j] * hidden[j];
            }
            out.push(y);
        }
        out
    }

    #[test]
    fn zero_model_zero_logits() {
        let m = MlpModel::zeros(5, 10);
        assert_eq!(m.forward(&[1.0; 5]).unwrap(), [0.0; 4]);
        assert_eq!(m.classify(&[1.0; 5]).unwrap(), 0);
    }

    #[test]
    fn single_relu_algebra() {
        let mut m = MlpModel::zeros(3, 10);
        m.w1_mut()[0] = 1.0;
        m.w2_mut()[0] = 1.0;
        assert_eq!(m.forward(&[0.7, 0.2, 0.1]).unwrap()[0], 0.7);
        assert_eq!(m.forward(&[-0.7, 0.2, 0.1]).unwrap()[0], 0.0);
    }

    #[test]
    fn argmax_ties_take_lowest() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 2.0, 3.0]), 1);
    }

    #[test]
    fn matches_straight_line_oracle() {
        let mut rng = seed::rng(5);
        for s in 0..50 {
            let m = MlpModel::init(6, 10, s);
            let mut m = m;
            m.b1_mut().iter_mut().for_each(|b| *b = rng.random::<f64>() - 0.5);
            let h: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            assert_eq!(m.forward(&h).unwrap().to_vec(), straight_line_forward(&m, &h));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = MlpModel::zeros(5, 10);
        assert!(matches!(
            m.forward(&[0.0; 4]),
            Err(Error::DimensionMismatch { expected: 5, got: 4 })
        ));
    }

    #[test]
    fn uniform_logits_give_ln4() {
        let m = MlpModel::zeros(3, 4);
        let batch: Vec<Sample> = (0..4)
            .map(|l| Sample { input: vec![0.5; 3], label: l })
            .collect();
        let (loss, _) = loss_and_grad(&m, &batch, 0.0).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!(matches!(loss_and_grad(&m, &[], 0.0), Err(Error::EmptyBatch)));
    }

    #[test]
    fn save_load_is_bit_exact() {
        let mut m = MlpModel::init(7, 10, 3);
        m.b1_mut()[2] = 0.1 + 0.2;
        m.bin_edges = (0..=7).map(|i| i as f64 / 7.0).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let a = std::fs::read(&p).unwrap();
        let back = MlpModel::load(&p).unwrap();
        assert_eq!(back, m);
        back.save(&p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), a);
    }

    #[test]
    fn load_rejects_wrong_dims() {
        let m = MlpModel::init(3, 2, 0);
        let text = m.to_json().replace("\"input_dim\": 3", "\"input_dim\": 4");
        assert!(MlpModel::from_json(&text, Path::new("x")).is_err());
    }

    #[test]
    fn training_is_deterministic_and_separates() {
        let data: Vec<Sample> = vec![
            Sample { input: vec![1.0, 0.0, 0.0], label: 0 },
            Sample { input: vec![0.9, 0.1, 0.0], label: 0 },
            Sample { input: vec![0.0, 0.0, 1.0], label: 1 },
            Sample { input: vec![0.0, 0.1, 0.9], label: 1 },
        ];
        let cfg = TrainConfig { epochs: 500, batch_size: 2, seed: 9, ..TrainConfig::default() };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(accuracy(&a, &data).unwrap(), 1.0);
        let meta = a.training.as_ref().unwrap();
        assert!(meta.final_loss <= meta.initial_loss);
    }

    #[test]
    fn zero_learning_rate_step_is_identity() {
        let m = MlpModel::init(3, 4, 1);
        let mut p = m.clone();
        let batch = vec![Sample { input: vec![0.2, 0.3, 0.5], label: 2 }];
        let (_, g) = loss_and_grad(&p, &batch, 0.0).unwrap();
        let cfg = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        let mut mm = vec![0.0; p.w1.len()];
        let mut vv = vec![0.0; p.w1.len()];
        adam_step(&mut p.w1, &g.w1, &mut mm, &mut vv, &cfg, 1);
        assert_eq!(p, m);
    }
}
