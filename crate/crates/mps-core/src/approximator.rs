//! Minimal feed-forward Q-function approximator with Adam and MSE training.
//!
//! Sized for low-dimensional observations and at most a couple dozen
//! discrete outputs; inference is pure and batches shard freely across
//! threads, training is single-writer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::rng::SimRng;

const MAGIC: &[u8; 8] = b"MPSQNET\0";
const FORMAT_VERSION: u32 = 1;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("weight file corrupt: {0}")]
    Corrupt(String),
    #[error("architecture mismatch: file has layers {file:?}, expected {expected:?}")]
    Architecture { file: Vec<usize>, expected: Vec<usize> },
    #[error(
        "checkpoint was trained on {file}-dimensional observations but this scenario \
         produces {expected}-dimensional ones; transfer requires matching disclosure \
         settings on both scenarios"
    )]
    ObservationDim { file: usize, expected: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// One dense layer, row-major weights `[out][in]`.
#[derive(Clone, Debug)]
struct Layer {
    w: Vec<f64>,
    b: Vec<f64>,
    rows: usize,
    cols: usize,
    // Adam moment accumulators.
    mw: Vec<f64>,
    vw: Vec<f64>,
    mb: Vec<f64>,
    vb: Vec<f64>,
}

impl Layer {
    fn new(rows: usize, cols: usize, rng: &mut SimRng) -> Self {
        // Uniform fan-in scaling.
        let bound = 1.0 / (cols as f64).sqrt();
        let w = (0..rows * cols).map(|_| (rng.next_f64() * 2.0 - 1.0) * bound).collect();
        let b = (0..rows).map(|_| (rng.next_f64() * 2.0 - 1.0) * bound).collect();
        Layer {
            w,
            b,
            rows,
            cols,
            mw: vec![0.0; rows * cols],
            vw: vec![0.0; rows * cols],
            mb: vec![0.0; rows],
            vb: vec![0.0; rows],
        }
    }

    fn zeroed(rows: usize, cols: usize) -> Self {
        Layer {
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
            rows,
            cols,
            mw: vec![0.0; rows * cols],
            vw: vec![0.0; rows * cols],
            mb: vec![0.0; rows],
            vb: vec![0.0; rows],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (slot, (row, bias)) in
            out.iter_mut().zip(self.w.chunks_exact(self.cols).zip(self.b.iter()))
        {
            let mut acc = *bias;
            for (wi, xi) in row.iter().zip(x.iter()) {
                acc += wi * xi;
            }
            *slot = acc;
        }
    }
}

/// Accumulated gradients for every parameter of a network.
#[derive(Clone, Debug)]
pub struct Gradients {
    dw: Vec<Vec<f64>>,
    db: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(net: &QFunction) -> Self {
        Gradients {
            dw: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            db: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.dw.iter_mut().zip(other.dw.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
        for (a, b) in self.db.iter_mut().zip(other.db.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for a in self.dw.iter_mut().chain(self.db.iter_mut()) {
            for x in a.iter_mut() {
                *x *= s;
            }
        }
    }
}

/// MLP with rectified-linear hidden layers and a linear output head.
#[derive(Clone, Debug)]
pub struct QFunction {
    layers: Vec<Layer>,
    sizes: Vec<usize>,
    adam_step: u64,
}

/// One training sample: observation, chosen action, regression target.
#[derive(Clone, Debug)]
pub struct Sample {
    pub observation: Vec<f64>,
    pub action: usize,
    pub target: f64,
}

/// Reusable buffers for `forward_into`.
#[derive(Default)]
pub struct ForwardWorkspace {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl QFunction {
    /// `sizes` = [input, hidden..., output].
    pub fn new(sizes: &[usize], rng: &mut SimRng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = (1..sizes.len()).map(|i| Layer::new(sizes[i], sizes[i - 1], rng)).collect();
        QFunction { layers, sizes: sizes.to_vec(), adam_step: 0 }
    }

    /// All-zero parameters (mostly useful in tests).
    pub fn zeroed(sizes: &[usize]) -> Self {
        let layers = (1..sizes.len()).map(|i| Layer::zeroed(sizes[i], sizes[i - 1])).collect();
        QFunction { layers, sizes: sizes.to_vec(), adam_step: 0 }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Copies parameters (not optimizer state) from `other`.
    pub fn sync_from(&mut self, other: &QFunction) {
        assert_eq!(self.sizes, other.sizes);
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.w.copy_from_slice(&b.w);
            a.b.copy_from_slice(&b.b);
        }
    }

    /// Action values for one observation.
    pub fn forward(&self, observation: &[f64]) -> Vec<f64> {
        let mut ws = ForwardWorkspace::default();
        self.forward_into(observation, &mut ws).to_vec()
    }

    /// Allocation-free forward pass; the returned slice borrows from `ws`.
    pub fn forward_into<'w>(
        &self,
        observation: &[f64],
        ws: &'w mut ForwardWorkspace,
    ) -> &'w [f64] {
        assert_eq!(observation.len(), self.input_dim(), "observation dimension mismatch");
        ws.a.clear();
        ws.a.extend_from_slice(observation);
        let nl = self.layers.len();
        for (li, layer) in self.layers.iter().enumerate() {
            ws.b.clear();
            ws.b.resize(layer.rows, 0.0);
            layer.forward(&ws.a, &mut ws.b);
            if li + 1 < nl {
                for v in ws.b.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut ws.a, &mut ws.b);
        }
        &ws.a
    }

    /// Squared-error loss and gradients for a batch; gradients flow only
    /// through each sample's chosen action output. Returns the mean loss.
    pub fn loss_and_gradients(&self, batch: &[Sample]) -> (f64, Gradients) {
        assert!(!batch.is_empty());
        let in_dim = self.input_dim();
        let mut rows = Vec::with_capacity(batch.len() * in_dim);
        let mut actions = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for s in batch {
            assert_eq!(s.observation.len(), in_dim);
            rows.extend_from_slice(&s.observation);
            actions.push(s.action);
            targets.push(s.target);
        }
        self.loss_and_gradients_rows(&rows, &actions, &targets)
    }

    /// Same as `loss_and_gradients` on a flat `batch × input` matrix.
    pub fn loss_and_gradients_rows(
        &self,
        obs_rows: &[f64],
        actions: &[usize],
        targets: &[f64],
    ) -> (f64, Gradients) {
        let in_dim = self.input_dim();
        let n = actions.len();
        assert!(n > 0);
        assert_eq!(obs_rows.len(), n * in_dim);
        assert_eq!(targets.len(), n);
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let nl = self.layers.len();
        // Activation buffers reused across samples.
        let mut acts: Vec<Vec<f64>> = std::iter::once(vec![0.0; in_dim])
            .chain(self.layers.iter().map(|l| vec![0.0; l.rows]))
            .collect();
        let mut delta = vec![0.0; self.output_dim()];
        let mut prev = Vec::new();
        for s in 0..n {
            acts[0].copy_from_slice(&obs_rows[s * in_dim..(s + 1) * in_dim]);
            for li in 0..nl {
                let (inputs, outputs) = acts.split_at_mut(li + 1);
                let layer = &self.layers[li];
                layer.forward(&inputs[li], &mut outputs[0]);
                if li + 1 < nl {
                    for v in outputs[0].iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }
            let out = &acts[nl];
            let err = out[actions[s]] - targets[s];
            loss += err * err;

            // Backward: d(loss)/d(out[a]) = 2 err; other outputs zero.
            delta.clear();
            delta.resize(out.len(), 0.0);
            delta[actions[s]] = 2.0 * err;
            for li in (0..nl).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let dw = &mut grads.dw[li];
                let db = &mut grads.db[li];
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    db[r] += d;
                    let row = &mut dw[r * layer.cols..(r + 1) * layer.cols];
                    for (slot, x) in row.iter_mut().zip(input.iter()) {
                        *slot += d * x;
                    }
                }
                if li > 0 {
                    prev.clear();
                    prev.resize(layer.cols, 0.0);
                    for (&d, row) in delta.iter().zip(layer.w.chunks_exact(layer.cols)) {
                        if d == 0.0 {
                            continue;
                        }
                        for (p, w) in prev.iter_mut().zip(row.iter()) {
                            *p += d * w;
                        }
                    }
                    // Rectifier gate.
                    for (p, a) in prev.iter_mut().zip(acts[li].iter()) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    std::mem::swap(&mut delta, &mut prev);
                }
            }
        }
        let scale = 1.0 / n as f64;
        grads.scale(scale);
        (loss * scale, grads)
    }

    /// One Adam step of MSE training on flat rows; returns the pre-step loss.
    pub fn train_mse_rows(
        &mut self,
        obs_rows: &[f64],
        actions: &[usize],
        targets: &[f64],
        lr: f64,
    ) -> Result<f64, NetError> {
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(NetError::NonFinite("training targets"));
        }
        let (loss, grads) = self.loss_and_gradients_rows(obs_rows, actions, targets);
        self.apply_gradients(&grads, lr)?;
        Ok(loss)
    }

    /// One Adam step with externally accumulated gradients.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) -> Result<(), NetError> {
        self.adam_step += 1;
        let t = self.adam_step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for (li, layer) in self.layers.iter_mut().enumerate() {
            let dw = &grads.dw[li];
            let db = &grads.db[li];
            for (i, &g) in dw.iter().enumerate() {
                layer.mw[i] = ADAM_BETA1 * layer.mw[i] + (1.0 - ADAM_BETA1) * g;
                layer.vw[i] = ADAM_BETA2 * layer.vw[i] + (1.0 - ADAM_BETA2) * g * g;
                let mhat = layer.mw[i] / bc1;
                let vhat = layer.vw[i] / bc2;
                layer.w[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
            for (i, &g) in db.iter().enumerate() {
                layer.mb[i] = ADAM_BETA1 * layer.mb[i] + (1.0 - ADAM_BETA1) * g;
                layer.vb[i] = ADAM_BETA2 * layer.vb[i] + (1.0 - ADAM_BETA2) * g * g;
                let mhat = layer.mb[i] / bc1;
                let vhat = layer.vb[i] / bc2;
                layer.b[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        for layer in &self.layers {
            if layer.w.iter().chain(layer.b.iter()).any(|v| !v.is_finite()) {
                return Err(NetError::NonFinite("parameters after Adam step"));
            }
        }
        Ok(())
    }

    /// One Adam step of MSE training on `batch`; returns the pre-step loss.
    pub fn train_mse(&mut self, batch: &[Sample], lr: f64) -> Result<f64, NetError> {
        if batch.iter().any(|s| !s.target.is_finite()) {
            return Err(NetError::NonFinite("training targets"));
        }
        let (loss, grads) = self.loss_and_gradients(batch);
        self.apply_gradients(&grads, lr)?;
        Ok(loss)
    }

    /// Maximum relative error between analytic and central-difference
    /// gradients over every parameter, on the given sample batch.
    pub fn gradient_check(&mut self, batch: &[Sample]) -> f64 {
        let step = 1e-5;
        let (_, analytic) = self.loss_and_gradients(batch);
        let mut max_rel = 0.0f64;
        let nl = self.layers.len();
        for li in 0..nl {
            for wi in 0..self.layers[li].w.len() {
                let orig = self.layers[li].w[wi];
                self.layers[li].w[wi] = orig + step;
                let (lp, _) = self.loss_and_gradients(batch);
                self.layers[li].w[wi] = orig - step;
                let (lm, _) = self.loss_and_gradients(batch);
                self.layers[li].w[wi] = orig;
                let numeric = (lp - lm) / (2.0 * step);
                max_rel = max_rel.max(rel_error(analytic.dw[li][wi], numeric));
            }
            for bi in 0..self.layers[li].b.len() {
                let orig = self.layers[li].b[bi];
                self.layers[li].b[bi] = orig + step;
                let (lp, _) = self.loss_and_gradients(batch);
                self.layers[li].b[bi] = orig - step;
                let (lm, _) = self.loss_and_gradients(batch);
                self.layers[li].b[bi] = orig;
                let numeric = (lp - lm) / (2.0 * step);
                max_rel = max_rel.max(rel_error(analytic.db[li][bi], numeric));
            }
        }
        max_rel
    }

    /// Writes magic, version, layer sizes, parameter blob (little-endian
    /// f64), and a checksum.
    pub fn save_weights(&self, path: &Path) -> Result<(), NetError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        let mut checksum = Fnv1a::new();
        for layer in &self.layers {
            for &v in layer.w.iter().chain(layer.b.iter()) {
                let bytes = v.to_le_bytes();
                checksum.update(&bytes);
                w.write_all(&bytes)?;
            }
        }
        w.write_all(&checksum.finish().to_le_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Loads a weight file; `expected_sizes` (when given) must match the
    /// stored architecture exactly.
    pub fn load_weights(path: &Path, expected_sizes: Option<&[usize]>) -> Result<Self, NetError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NetError::Corrupt("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(NetError::Corrupt(format!("unsupported format version {version}")));
        }
        let n_sizes = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(NetError::Corrupt(format!("implausible layer count {n_sizes}")));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(read_u32(&mut r)? as usize);
        }
        if let Some(expected) = expected_sizes {
            if expected != sizes.as_slice() {
                return Err(NetError::Architecture { file: sizes, expected: expected.to_vec() });
            }
        }
        let mut net = QFunction::zeroed(&sizes);
        let mut checksum = Fnv1a::new();
        for layer in &mut net.layers {
            for slot in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf)?;
                checksum.update(&buf);
                *slot = f64::from_le_bytes(buf);
            }
        }
        let stored = {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            u64::from_le_bytes(buf)
        };
        if stored != checksum.finish() {
            return Err(NetError::Corrupt("checksum mismatch".into()));
        }
        if net.layers.iter().any(|l| l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite())) {
            return Err(NetError::NonFinite("loaded parameters"));
        }
        Ok(net)
    }
}

fn rel_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-12 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, NetError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}
