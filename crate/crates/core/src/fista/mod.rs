//! Elbow-pose prediction network: per-frame embedding, GRU over the history,
//! FiLM modulation of the temporal summary by the EE target, two-token
//! attention over the last frame, and an MLP head. An MLP over the flattened
//! window serves as the baseline.
//!
//! Inputs and outputs are 7-vectors `[p; q]` in the shoulder frame of a
//! right arm. The network works on z-scored values; the [`Normalizer`]
//! travels with the weights.

mod io;
pub mod net;
mod train;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::datagen::{vec7_to_pose, SampleWindow, FRAME_DIM};
use crate::liegroup::Pose;

pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use net::{Layout, ParamGroup, POSE_DIM};
pub use train::{train, train_with_progress, EpochStats, TrainConfig, TrainingReport};

use net::{FistaNet, MlpNet};

#[derive(Debug, Error)]
pub enum FistaError {
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset has no usable windows")]
    EmptyDataset,
    #[error("history holds {have} of {need} frames and padding is disabled")]
    ColdStart { have: usize, need: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid training settings: {0}")]
    InvalidTraining(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Ablation {
    #[default]
    None,
    NoSpatial,
    NoTemporal,
    NoFilm,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::None,
        Ablation::NoSpatial,
        Ablation::NoTemporal,
        Ablation::NoFilm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoSpatial => "no_spatial",
            Ablation::NoTemporal => "no_temporal",
            Ablation::NoFilm => "no_film",
        }
    }

    fn code(&self) -> u8 {
        match self {
            Ablation::None => 0,
            Ablation::NoSpatial => 1,
            Ablation::NoTemporal => 2,
            Ablation::NoFilm => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown ablation `{s}` (none, no_spatial, no_temporal, no_film)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FistaConfig {
    /// History length in frames.
    pub t: usize,
    pub embed: usize,
    pub gru_hidden: usize,
    pub attn_dim: usize,
    pub film_hidden: usize,
    pub head_hidden: Vec<usize>,
    pub ablate: Ablation,
}

impl Default for FistaConfig {
    fn default() -> Self {
        Self {
            t: 5,
            embed: 32,
            gru_hidden: 64,
            attn_dim: 32,
            film_hidden: 64,
            head_hidden: vec![128, 64],
            ablate: Ablation::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpConfig {
    pub t: usize,
    pub hidden: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            t: 5,
            hidden: vec![256, 128],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ModelConfig {
    Fista(FistaConfig),
    Mlp(MlpConfig),
}

impl ModelConfig {
    pub fn history_len(&self) -> usize {
        match self {
            ModelConfig::Fista(c) => c.t,
            ModelConfig::Mlp(c) => c.t,
        }
    }

    pub fn arch_name(&self) -> &'static str {
        match self {
            ModelConfig::Fista(_) => "fista",
            ModelConfig::Mlp(_) => "mlp",
        }
    }

    pub fn ablation(&self) -> Ablation {
        match self {
            ModelConfig::Fista(c) => c.ablate,
            ModelConfig::Mlp(_) => Ablation::None,
        }
    }

    pub fn validate(&self) -> Result<(), FistaError> {
        let bad = |m: &str| Err(FistaError::InvalidConfig(m.into()));
        match self {
            ModelConfig::Fista(c) => {
                if c.t == 0 {
                    return bad("history length must be at least 1");
                }
                if c.embed == 0 || c.gru_hidden == 0 || c.attn_dim == 0 || c.film_hidden == 0 {
                    return bad("layer widths must be at least 1");
                }
                if c.head_hidden.contains(&0) {
                    return bad("head widths must be at least 1");
                }
            }
            ModelConfig::Mlp(c) => {
                if c.t == 0 {
                    return bad("history length must be at least 1");
                }
                if c.hidden.contains(&0) {
                    return bad("hidden widths must be at least 1");
                }
            }
        }
        Ok(())
    }
}

/// Per-dimension z-scores for history frames, EE targets and elbow labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub frame_mean: [f64; FRAME_DIM],
    pub frame_std: [f64; FRAME_DIM],
    pub target_mean: [f64; POSE_DIM],
    pub target_std: [f64; POSE_DIM],
    pub label_mean: [f64; POSE_DIM],
    pub label_std: [f64; POSE_DIM],
}

/// Standard deviations below this are replaced by 1.
const MIN_STD: f64 = 1e-8;

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            frame_mean: [0.0; FRAME_DIM],
            frame_std: [1.0; FRAME_DIM],
            target_mean: [0.0; POSE_DIM],
            target_std: [1.0; POSE_DIM],
            label_mean: [0.0; POSE_DIM],
            label_std: [1.0; POSE_DIM],
        }
    }
}

struct Moments<const N: usize> {
    n: f64,
    sum: [f64; N],
    sq: [f64; N],
}

impl<const N: usize> Moments<N> {
    fn new() -> Self {
        Self {
            n: 0.0,
            sum: [0.0; N],
            sq: [0.0; N],
        }
    }

    fn add(&mut self, v: &[f64]) {
        self.n += 1.0;
        for i in 0..N {
            self.sum[i] += v[i];
            self.sq[i] += v[i] * v[i];
        }
    }

    fn finish(&self) -> ([f64; N], [f64; N]) {
        let mean: [f64; N] = std::array::from_fn(|i| self.sum[i] / self.n);
        let std = std::array::from_fn(|i| {
            let s = (self.sq[i] / self.n - mean[i] * mean[i]).max(0.0).sqrt();
            if s < MIN_STD {
                1.0
            } else {
                s
            }
        });
        (mean, std)
    }
}

impl Normalizer {
    pub fn fit<'a>(windows: impl IntoIterator<Item = &'a SampleWindow>) -> Result<Self, FistaError> {
        let mut frames = Moments::<FRAME_DIM>::new();
        let mut targets = Moments::<POSE_DIM>::new();
        let mut labels = Moments::<POSE_DIM>::new();
        for w in windows {
            for f in w.history.chunks_exact(FRAME_DIM) {
                frames.add(f);
            }
            targets.add(&w.target_ee);
            labels.add(&w.label_elbow);
        }
        if labels.n == 0.0 {
            return Err(FistaError::EmptyDataset);
        }
        let (frame_mean, frame_std) = frames.finish();
        let (target_mean, target_std) = targets.finish();
        let (label_mean, label_std) = labels.finish();
        Ok(Self {
            frame_mean,
            frame_std,
            target_mean,
            target_std,
            label_mean,
            label_std,
        })
    }

    pub fn history(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(i, v)| (v - self.frame_mean[i % FRAME_DIM]) / self.frame_std[i % FRAME_DIM])
            .collect()
    }

    pub fn target(&self, raw: &[f64]) -> [f64; POSE_DIM] {
        std::array::from_fn(|i| (raw[i] - self.target_mean[i]) / self.target_std[i])
    }

    pub fn label(&self, raw: &[f64]) -> [f64; POSE_DIM] {
        std::array::from_fn(|i| (raw[i] - self.label_mean[i]) / self.label_std[i])
    }

    pub fn denorm_label(&self, y: &[f64]) -> [f64; POSE_DIM] {
        std::array::from_fn(|i| y[i] * self.label_std[i] + self.label_mean[i])
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * (FRAME_DIM + 2 * POSE_DIM));
        for part in [
            &self.frame_mean[..],
            &self.frame_std,
            &self.target_mean,
            &self.target_std,
            &self.label_mean,
            &self.label_std,
        ] {
            v.extend_from_slice(part);
        }
        v
    }

    const LEN: usize = 2 * (FRAME_DIM + 2 * POSE_DIM);

    fn from_slice(v: &[f64]) -> Self {
        let mut it = v.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let frame_mean = take(FRAME_DIM).try_into().unwrap();
        let frame_std = take(FRAME_DIM).try_into().unwrap();
        let target_mean = take(POSE_DIM).try_into().unwrap();
        let target_std = take(POSE_DIM).try_into().unwrap();
        let label_mean = take(POSE_DIM).try_into().unwrap();
        let label_std = take(POSE_DIM).try_into().unwrap();
        Self {
            frame_mean,
            frame_std,
            target_mean,
            target_std,
            label_mean,
            label_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Net {
    Fista(FistaNet),
    Mlp(MlpNet),
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache(CacheInner);

#[derive(Debug, Clone)]
enum CacheInner {
    Fista(net::FistaCache),
    Mlp(net::MlpCache),
}

/// A network, its parameters and its normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    net: Net,
    pub normalizer: Normalizer,
    pub params: Vec<f64>,
}

impl Model {
    /// Glorot-initialized weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, FistaError> {
        let mut m = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &m.net {
            Net::Fista(n) => n.init(&mut m.params, &mut rng),
            Net::Mlp(n) => n.init(&mut m.params, &mut rng),
        }
        Ok(m)
    }

    /// All parameters zero, identity normalizer.
    pub fn zeros(config: ModelConfig) -> Result<Self, FistaError> {
        config.validate()?;
        let net = match &config {
            ModelConfig::Fista(c) => Net::Fista(FistaNet::new(c)),
            ModelConfig::Mlp(c) => Net::Mlp(MlpNet::new(c)),
        };
        let len = match &net {
            Net::Fista(n) => n.layout().len(),
            Net::Mlp(n) => n.layout().len(),
        };
        Ok(Self {
            config,
            net,
            normalizer: Normalizer::default(),
            params: vec![0.0; len],
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn history_len(&self) -> usize {
        self.config.history_len()
    }

    pub fn layout(&self) -> &Layout {
        match &self.net {
            Net::Fista(n) => n.layout(),
            Net::Mlp(n) => n.layout(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_dims(&self, history: &[f64], target: &[f64]) -> Result<(), FistaError> {
        let want = self.history_len() * FRAME_DIM;
        if history.len() != want {
            return Err(FistaError::DimensionMismatch {
                expected: want,
                got: history.len(),
            });
        }
        if target.len() != POSE_DIM {
            return Err(FistaError::DimensionMismatch {
                expected: POSE_DIM,
                got: target.len(),
            });
        }
        Ok(())
    }

    /// Network output in normalized label space, from normalized inputs.
    pub fn forward_normalized(
        &self,
        history: &[f64],
        target: &[f64],
    ) -> Result<([f64; POSE_DIM], ForwardCache), FistaError> {
        self.check_dims(history, target)?;
        let (y, cache) = match &self.net {
            Net::Fista(n) => {
                let (y, c) = n.forward(&self.params, history, target);
                (y, CacheInner::Fista(c))
            }
            Net::Mlp(n) => {
                let (y, c) = n.forward(&self.params, history, target);
                (y, CacheInner::Mlp(c))
            }
        };
        Ok((y.try_into().unwrap(), ForwardCache(cache)))
    }

    /// Adds `d loss / d params` to `grads` for an output gradient `dy`.
    pub fn backward_normalized(
        &self,
        history: &[f64],
        target: &[f64],
        cache: &ForwardCache,
        dy: &[f64],
        grads: &mut [f64],
    ) {
        match (&self.net, &cache.0) {
            (Net::Fista(n), CacheInner::Fista(c)) => {
                n.backward(&self.params, grads, history, target, c, dy)
            }
            (Net::Mlp(n), CacheInner::Mlp(c)) => n.backward(&self.params, grads, c, dy),
            _ => unreachable!("cache from a different network"),
        }
    }

    /// Normalized network output for a raw window.
    pub fn forward(&self, window: &SampleWindow) -> Result<[f64; POSE_DIM], FistaError> {
        let h = self.normalizer.history(&window.history);
        let e = self.normalizer.target(&window.target_ee);
        Ok(self.forward_normalized(&h, &e)?.0)
    }

    /// Per-sample MSE against the normalized label and its parameter gradient.
    pub fn backward(&self, window: &SampleWindow) -> Result<(f64, Vec<f64>), FistaError> {
        let h = self.normalizer.history(&window.history);
        let e = self.normalizer.target(&window.target_ee);
        let label = self.normalizer.label(&window.label_elbow);
        let mut grads = vec![0.0; self.params.len()];
        let loss = self.loss_and_grad(&h, &e, &label, 1.0, &mut grads)?;
        Ok((loss, grads))
    }

    /// MSE over the 7 outputs; gradients are scaled by `scale` and added.
    pub(crate) fn loss_and_grad(
        &self,
        history: &[f64],
        target: &[f64],
        label: &[f64],
        scale: f64,
        grads: &mut [f64],
    ) -> Result<f64, FistaError> {
        let (y, cache) = self.forward_normalized(history, target)?;
        let mut loss = 0.0;
        let mut dy = [0.0; POSE_DIM];
        for i in 0..POSE_DIM {
            let r = y[i] - label[i];
            loss += r * r;
            dy[i] = scale * 2.0 * r / POSE_DIM as f64;
        }
        self.backward_normalized(history, target, &cache, &dy, grads);
        Ok(loss / POSE_DIM as f64)
    }

    /// Raw 7-vector prediction with the quaternion block renormalized.
    pub fn predict_raw(&self, history: &[f64], target_ee: &[f64]) -> Result<[f64; POSE_DIM], FistaError> {
        let h = self.normalizer.history(history);
        let e = self.normalizer.target(target_ee);
        let (y, _) = self.forward_normalized(&h, &e)?;
        let mut out = self.normalizer.denorm_label(&y);
        let pose = vec7_to_pose(&out);
        let q = pose.rotation.to_array();
        out[3..].copy_from_slice(&q);
        Ok(out)
    }

    /// Elbow pose for the next step given a history buffer and the EE target.
    pub fn predict_elbow(&self, history: &HistoryBuffer, target_ee: &Pose) -> Result<Pose, FistaError> {
        let h = history.window(self.history_len())?;
        let v = self.predict_raw(&h, &crate::datagen::pose_to_vec7(target_ee))?;
        Ok(vec7_to_pose(&v))
    }
}

/// Rolling window of `[ee; elbow]` frames for streaming prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    frames: VecDeque<[f64; FRAME_DIM]>,
    capacity: usize,
    /// Left-pad with the oldest frame until the buffer is full.
    pub pad: bool,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            frames: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            pad: true,
        }
    }

    pub fn with_padding(mut self, pad: bool) -> Self {
        self.pad = pad;
        self
    }

    pub fn push(&mut self, ee: &Pose, elbow: &Pose) {
        let mut f = [0.0; FRAME_DIM];
        f[..POSE_DIM].copy_from_slice(&crate::datagen::pose_to_vec7(ee));
        f[POSE_DIM..].copy_from_slice(&crate::datagen::pose_to_vec7(elbow));
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(f);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    /// The last `t` frames flattened oldest first.
    pub fn window(&self, t: usize) -> Result<Vec<f64>, FistaError> {
        let have = self.frames.len();
        if have < t && (!self.pad || have == 0) {
            return Err(FistaError::ColdStart { have, need: t });
        }
        let mut out = Vec::with_capacity(t * FRAME_DIM);
        for _ in have..t {
            out.extend_from_slice(&self.frames[0]);
        }
        for f in self.frames.iter().skip(have.saturating_sub(t)) {
            out.extend_from_slice(f);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests;
