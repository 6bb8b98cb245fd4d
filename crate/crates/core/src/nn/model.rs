use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, BatchNorm, BatchNormCache, Conv1d, Dense};
use crate::dataset::{NUM_CLASSES, NUM_LEADS};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;
pub const DEFAULT_BN_EPSILON: f64 = 1e-3;

const DROPOUT_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d { filters: usize, kernel: usize },
    BatchNorm,
    MaxPool1d { size: usize },
    Dropout { rate: f64 },
    GlobalAvgPool,
    Dense { units: usize },
    Relu,
    Sigmoid,
}

/// Encoder stack, latent head(s) and classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub encoder: Vec<LayerSpec>,
    pub latent_dim: usize,
    /// Adds the `z_log_var` projection. It is computed but never feeds the classifier.
    pub include_log_var_head: bool,
    pub classifier: Vec<LayerSpec>,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl ModelConfig {
    /// Full-size network: conv 64/128/256, latent 32, dense 256/128.
    pub fn full() -> Self {
        Self::scaled([64, 128, 256], 32, [256, 128])
    }

    /// Same layer layout with different widths.
    pub fn scaled(filters: [usize; 3], latent_dim: usize, dense_units: [usize; 2]) -> Self {
        use LayerSpec::*;
        let kernels = [5, 5, 3];
        let dropouts = [0.2, 0.2, 0.3];
        let mut encoder = Vec::new();
        for i in 0..3 {
            encoder.extend([
                Conv1d { filters: filters[i], kernel: kernels[i] },
                BatchNorm,
                MaxPool1d { size: 2 },
                Dropout { rate: dropouts[i] },
            ]);
        }
        encoder.push(GlobalAvgPool);
        let mut classifier = Vec::new();
        for units in dense_units {
            classifier.extend([Dense { units }, Relu, BatchNorm, Dropout { rate: 0.5 }]);
        }
        classifier.extend([Dense { units: NUM_CLASSES }, Sigmoid]);
        Self {
            input_channels: NUM_LEADS,
            encoder,
            latent_dim,
            include_log_var_head: false,
            classifier,
            bn_momentum: DEFAULT_BN_MOMENTUM,
            bn_epsilon: DEFAULT_BN_EPSILON,
        }
    }

    pub fn with_log_var_head(mut self, include: bool) -> Self {
        self.include_log_var_head = include;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.input_channels == 0 {
            return bad("input_channels must be at least 1".into());
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || self.bn_epsilon.is_nan() || self.bn_epsilon <= 0.0 {
            return bad(format!(
                "batch-norm momentum {} / epsilon {} out of range",
                self.bn_momentum, self.bn_epsilon
            ));
        }
        for spec in self.encoder.iter().chain(&self.classifier) {
            match *spec {
                LayerSpec::Conv1d { filters, kernel } => {
                    if filters == 0 || kernel == 0 || kernel % 2 == 0 {
                        return bad(format!("conv1d filters {filters} kernel {kernel}: kernel must be odd, both >= 1"));
                    }
                }
                LayerSpec::MaxPool1d { size: 0 } => return bad("pool size must be at least 1".into()),
                LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                    return bad(format!("dropout rate {rate} outside [0, 1)"));
                }
                LayerSpec::Dense { units: 0 } => return bad("dense units must be at least 1".into()),
                _ => {}
            }
        }
        let filters: Vec<usize> = self
            .encoder
            .iter()
            .filter_map(|s| match s {
                LayerSpec::Conv1d { filters, .. } => Some(*filters),
                _ => None,
            })
            .collect();
        if filters.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("encoder channels must strictly increase, got {filters:?}"));
        }
        if self.encoder.last() != Some(&LayerSpec::GlobalAvgPool) {
            return bad("encoder must end with global average pooling".into());
        }
        let n = self.classifier.len();
        if n < 2
            || self.classifier[n - 2] != (LayerSpec::Dense { units: NUM_CLASSES })
            || self.classifier[n - 1] != LayerSpec::Sigmoid
        {
            return bad(format!("classifier must end with dense({NUM_CLASSES}) + sigmoid"));
        }
        if self
            .classifier
            .iter()
            .any(|s| matches!(s, LayerSpec::Conv1d { .. } | LayerSpec::MaxPool1d { .. } | LayerSpec::GlobalAvgPool))
        {
            return bad("classifier operates on pooled vectors; temporal layers are not allowed".into());
        }
        Ok(())
    }

    /// Smallest input length that survives every pooling stage.
    pub fn min_time_steps(&self) -> usize {
        self.encoder
            .iter()
            .map(|s| match s {
                LayerSpec::MaxPool1d { size } => *size,
                _ => 1,
            })
            .product()
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Layer {
    Conv1d(Conv1d),
    BatchNorm(BatchNorm),
    MaxPool1d(usize),
    Dropout(f64),
    GlobalAvgPool,
    Dense(Dense),
    Relu,
    Sigmoid,
}

#[derive(Clone, Debug)]
enum LayerCache {
    Input(Tensor3),
    BatchNorm(BatchNormCache),
    MaxPool { dims: (usize, usize, usize), argmax: Vec<usize> },
    Dropout(Vec<f64>),
    GlobalAvgPool { time: usize },
    Output(Tensor3),
}

impl Layer {
    fn build(spec: &LayerSpec, in_ch: usize, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> (Layer, usize) {
        match *spec {
            LayerSpec::Conv1d { filters, kernel } => (Layer::Conv1d(Conv1d::new(in_ch, filters, kernel, rng)), filters),
            LayerSpec::BatchNorm => (Layer::BatchNorm(BatchNorm::new(in_ch, cfg.bn_momentum, cfg.bn_epsilon)), in_ch),
            LayerSpec::MaxPool1d { size } => (Layer::MaxPool1d(size), in_ch),
            LayerSpec::Dropout { rate } => (Layer::Dropout(rate), in_ch),
            LayerSpec::GlobalAvgPool => (Layer::GlobalAvgPool, in_ch),
            LayerSpec::Dense { units } => (Layer::Dense(Dense::new(in_ch, units, rng)), units),
            LayerSpec::Relu => (Layer::Relu, in_ch),
            LayerSpec::Sigmoid => (Layer::Sigmoid, in_ch),
        }
    }

    pub(crate) fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::MaxPool1d(_) => "max_pool1d",
            Layer::Dropout(_) => "dropout",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
        }
    }

    fn forward_train(&mut self, x: Tensor3, rng: &mut ChaCha8Rng) -> (Tensor3, LayerCache) {
        match self {
            Layer::Conv1d(conv) => (conv.forward(&x), LayerCache::Input(x)),
            Layer::Dense(dense) => (dense.forward(&x), LayerCache::Input(x)),
            Layer::BatchNorm(bn) => {
                let (y, cache) = bn.forward_train(&x);
                (y, LayerCache::BatchNorm(cache))
            }
            Layer::MaxPool1d(size) => {
                let (y, argmax) = layers::max_pool_forward(&x, *size);
                (y, LayerCache::MaxPool { dims: x.dims(), argmax })
            }
            Layer::Dropout(rate) => {
                let (y, mask) = layers::dropout_forward(&x, *rate, rng);
                (y, LayerCache::Dropout(mask))
            }
            Layer::GlobalAvgPool => (layers::global_avg_pool_forward(&x), LayerCache::GlobalAvgPool { time: x.time() }),
            Layer::Relu => {
                let y = layers::relu_forward(&x);
                (y.clone(), LayerCache::Output(y))
            }
            Layer::Sigmoid => {
                let y = layers::sigmoid_forward(&x);
                (y.clone(), LayerCache::Output(y))
            }
        }
    }

    pub(crate) fn forward_infer(&self, x: Tensor3) -> Tensor3 {
        match self {
            Layer::Conv1d(conv) => conv.forward(&x),
            Layer::Dense(dense) => dense.forward(&x),
            Layer::BatchNorm(bn) => bn.forward_infer(&x),
            Layer::MaxPool1d(size) => layers::max_pool_forward(&x, *size).0,
            Layer::Dropout(_) => x,
            Layer::GlobalAvgPool => layers::global_avg_pool_forward(&x),
            Layer::Relu => layers::relu_forward(&x),
            Layer::Sigmoid => layers::sigmoid_forward(&x),
        }
    }

    fn backward(&self, cache: &LayerCache, dy: &Tensor3, need_dx: bool) -> (Tensor3, Option<[Vec<f64>; 2]>) {
        match (self, cache) {
            (Layer::Conv1d(conv), LayerCache::Input(x)) => {
                let (dx, dw, db) = conv.backward(x, dy, need_dx);
                (dx, Some([dw, db]))
            }
            (Layer::Dense(dense), LayerCache::Input(x)) => {
                let (dx, dw, db) = dense.backward(x, dy);
                (dx, Some([dw, db]))
            }
            (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => {
                let (dx, dg, db) = bn.backward(c, dy);
                (dx, Some([dg, db]))
            }
            (Layer::MaxPool1d(_), LayerCache::MaxPool { dims, argmax }) => {
                (layers::max_pool_backward(*dims, argmax, dy), None)
            }
            (Layer::Dropout(_), LayerCache::Dropout(mask)) => (layers::apply_mask(dy, mask), None),
            (Layer::GlobalAvgPool, LayerCache::GlobalAvgPool { time }) => {
                (layers::global_avg_pool_backward(*time, dy), None)
            }
            (Layer::Relu, LayerCache::Output(y)) => (layers::relu_backward(y, dy), None),
            (Layer::Sigmoid, LayerCache::Output(y)) => (layers::sigmoid_backward(y, dy), None),
            _ => unreachable!("layer/cache kinds are paired by forward_train"),
        }
    }

    fn trainable(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv1d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::BatchNorm(bn) => vec![&bn.gamma, &bn.beta],
            _ => Vec::new(),
        }
    }

    fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Conv1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::BatchNorm(bn) => vec![&mut bn.gamma, &mut bn.beta],
            _ => Vec::new(),
        }
    }

    fn running(&self) -> Vec<&[f64]> {
        match self {
            Layer::BatchNorm(bn) => vec![&bn.running_mean, &bn.running_var],
            _ => Vec::new(),
        }
    }

    /// Trainable blocks followed by running statistics, checkpoint order.
    fn all_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::BatchNorm(bn) => vec![&mut bn.gamma, &mut bn.beta, &mut bn.running_mean, &mut bn.running_var],
            other => other.trainable_mut(),
        }
    }
}

/// One gradient buffer per trainable block, in [`Model::trainable_blocks`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            blocks: model.trainable_blocks().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.blocks.iter_mut().flatten().for_each(|g| *g *= k);
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flatten().copied()
    }

    pub fn dot(&self, other: &Gradients) -> f64 {
        self.flat().zip(other.flat()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }
}

/// Activations saved by a forward pass for the matching backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    mode: Mode,
    version: u64,
    batch: usize,
    layers: Vec<Option<LayerCache>>,
    latent: Tensor3,
    log_var: Option<Tensor3>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// `z_mean`, `batch × latent_dim`.
    pub fn latent(&self) -> &[f64] {
        self.latent.data()
    }

    pub fn log_var(&self) -> Option<&[f64]> {
        self.log_var.as_ref().map(|t| t.data())
    }
}

/// All layer parameters, batch-norm running statistics and the dropout stream.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<Layer>,
    encoder_len: usize,
    dropout_seed: u64,
    dropout_step: u64,
    version: u64,
}

pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    Model::new(config.clone(), seed)
}

impl Model {
    /// Glorot-uniform weights, zero biases and betas, unit gammas, running
    /// mean 0 and variance 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut ch = config.input_channels;
        for spec in &config.encoder {
            let (layer, out) = Layer::build(spec, ch, &config, &mut rng);
            layers.push(layer);
            ch = out;
        }
        let encoder_len = layers.len();
        layers.push(Layer::Dense(Dense::new(ch, config.latent_dim, &mut rng)));
        if config.include_log_var_head {
            layers.push(Layer::Dense(Dense::new(ch, config.latent_dim, &mut rng)));
        }
        ch = config.latent_dim;
        for spec in &config.classifier {
            let (layer, out) = Layer::build(spec, ch, &config, &mut rng);
            layers.push(layer);
            ch = out;
        }
        Ok(Self {
            config,
            layers,
            encoder_len,
            dropout_seed: seed ^ DROPOUT_SEED_SALT,
            dropout_step: 0,
            version: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub(crate) fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn classifier_start(&self) -> usize {
        self.encoder_len + 1 + usize::from(self.config.include_log_var_head)
    }

    pub fn dropout_state(&self) -> (u64, u64) {
        (self.dropout_seed, self.dropout_step)
    }

    pub fn set_dropout_state(&mut self, seed: u64, step: u64) {
        self.dropout_seed = seed;
        self.dropout_step = step;
    }

    pub fn param_counts(&self) -> ParamCounts {
        let trainable: usize = self.trainable_blocks().iter().map(|b| b.len()).sum();
        let non_trainable: usize = self.layers.iter().flat_map(|l| l.running()).map(|b| b.len()).sum();
        ParamCounts {
            total: trainable + non_trainable,
            trainable,
            non_trainable,
        }
    }

    pub fn trainable_blocks(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.trainable()).collect()
    }

    /// Mutable trainable blocks. Any outstanding [`ForwardCache`] becomes stale.
    pub fn trainable_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers.iter_mut().flat_map(|l| l.trainable_mut()).collect()
    }

    /// Batch-norm running mean/variance blocks (non-trainable).
    pub fn running_blocks(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.running()).collect()
    }

    /// Every stored value, layer by layer; batch-norm layers list gamma, beta,
    /// running mean, running variance.
    pub fn all_blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                let mut blocks = l.trainable();
                blocks.extend(l.running());
                blocks
            })
            .collect()
    }

    pub(crate) fn all_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers.iter_mut().flat_map(|l| l.all_blocks_mut()).collect()
    }

    /// `section.index.layer.param` labels matching [`Self::trainable_blocks`].
    pub fn trainable_block_names(&self) -> Vec<String> {
        let start = self.classifier_start();
        let mut names = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let section = if i < self.encoder_len {
                "encoder"
            } else if i == self.encoder_len {
                "z_mean"
            } else if i < start {
                "z_log_var"
            } else {
                "classifier"
            };
            let params: &[&str] = match layer {
                Layer::Conv1d(_) | Layer::Dense(_) => &["kernel", "bias"],
                Layer::BatchNorm(_) => &["gamma", "beta"],
                _ => &[],
            };
            for p in params {
                names.push(format!("{section}.{i}.{}.{p}", layer.name()));
            }
        }
        names
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        if x.channels() != self.config.input_channels {
            return Err(Error::ShapeMismatch {
                what: "input channels",
                expected: self.config.input_channels,
                found: x.channels(),
            });
        }
        let min_time = self.config.min_time_steps();
        if x.time() < min_time {
            return Err(Error::ShapeMismatch {
                what: "input time steps (minimum)",
                expected: min_time,
                found: x.time(),
            });
        }
        if x.batch() == 0 {
            return Err(Error::ShapeMismatch {
                what: "batch size (minimum)",
                expected: 1,
                found: 0,
            });
        }
        Ok(())
    }

    /// Inference-mode probabilities, `batch × 5` row-major.
    pub fn predict(&self, x: &Tensor3) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let start = self.classifier_start();
        let mut h = x.clone();
        for layer in &self.layers[..self.encoder_len] {
            h = layer.forward_infer(h);
        }
        h = self.layers[self.encoder_len].forward_infer(h);
        for layer in &self.layers[start..] {
            h = layer.forward_infer(h);
        }
        Ok(h.into_vec())
    }

    /// Forward pass in either mode. Train mode draws dropout masks, uses batch
    /// statistics and updates running statistics; its cache feeds [`Self::backward`].
    pub fn forward(&mut self, x: &Tensor3, mode: Mode) -> Result<(Vec<f64>, ForwardCache)> {
        match mode {
            Mode::Train => self.forward_train(x),
            Mode::Infer => {
                let probs = self.predict(x)?;
                let cache = ForwardCache {
                    mode,
                    version: self.version,
                    batch: x.batch(),
                    layers: Vec::new(),
                    latent: Tensor3::zeros(0, 1, self.config.latent_dim),
                    log_var: None,
                };
                Ok((probs, cache))
            }
        }
    }

    pub fn forward_train(&mut self, x: &Tensor3) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.dropout_seed);
        rng.set_stream(self.dropout_step);
        self.dropout_step += 1;

        let start = self.classifier_start();
        let mut caches: Vec<Option<LayerCache>> = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &mut self.layers[..self.encoder_len] {
            let (out, cache) = layer.forward_train(h, &mut rng);
            caches.push(Some(cache));
            h = out;
        }
        let features = h;
        let log_var = if self.config.include_log_var_head {
            Some(self.layers[self.encoder_len + 1].forward_infer(features.clone()))
        } else {
            None
        };
        let (latent, cache) = self.layers[self.encoder_len].forward_train(features, &mut rng);
        caches.push(Some(cache));
        if log_var.is_some() {
            caches.push(None);
        }
        let mut h = latent.clone();
        for layer in &mut self.layers[start..] {
            let (out, cache) = layer.forward_train(h, &mut rng);
            caches.push(Some(cache));
            h = out;
        }
        let cache = ForwardCache {
            mode: Mode::Train,
            version: self.version,
            batch: x.batch(),
            layers: caches,
            latent,
            log_var,
        };
        Ok((h.into_vec(), cache))
    }

    /// Gradients of every trainable block given `d loss / d probabilities`.
    /// The `z_log_var` head, when present, receives zero gradient.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Gradients> {
        if cache.mode != Mode::Train || cache.version != self.version || cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        if grad_output.len() != cache.batch * NUM_CLASSES {
            return Err(Error::ShapeMismatch {
                what: "output gradient length",
                expected: cache.batch * NUM_CLASSES,
                found: grad_output.len(),
            });
        }
        let mut per_layer: Vec<Option<[Vec<f64>; 2]>> = vec![None; self.layers.len()];
        let mut dy = Tensor3::from_vec(cache.batch, 1, NUM_CLASSES, grad_output.to_vec())?;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let Some(layer_cache) = &cache.layers[i] else {
                // z_log_var: output unused
                if let Layer::Dense(d) = layer {
                    per_layer[i] = Some([vec![0.0; d.weight.len()], vec![0.0; d.bias.len()]]);
                }
                continue;
            };
            let (dx, grads) = layer.backward(layer_cache, &dy, i > 0);
            per_layer[i] = grads;
            dy = dx;
        }
        Ok(Gradients {
            blocks: per_layer.into_iter().flatten().flatten().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Independent count straight from the config: conv k·in·out + out,
    /// dense in·out + out, batch norm 2c trainable + 2c running.
    fn enumerate_params(cfg: &ModelConfig) -> (usize, usize) {
        let mut trainable = 0;
        let mut running = 0;
        let mut ch = cfg.input_channels;
        let walk = |specs: &[LayerSpec], ch: &mut usize, trainable: &mut usize, running: &mut usize| {
            for s in specs {
                match *s {
                    LayerSpec::Conv1d { filters, kernel } => {
                        *trainable += kernel * *ch * filters + filters;
                        *ch = filters;
                    }
                    LayerSpec::Dense { units } => {
                        *trainable += *ch * units + units;
                        *ch = units;
                    }
                    LayerSpec::BatchNorm => {
                        *trainable += 2 * *ch;
                        *running += 2 * *ch;
                    }
                    _ => {}
                }
            }
        };
        walk(&cfg.encoder, &mut ch, &mut trainable, &mut running);
        let heads = if cfg.include_log_var_head { 2 } else { 1 };
        trainable += heads * (ch * cfg.latent_dim + cfg.latent_dim);
        ch = cfg.latent_dim;
        walk(&cfg.classifier, &mut ch, &mut trainable, &mut running);
        (trainable, running)
    }

    #[test]
    fn full_network_parameter_counts() {
        let model = build_model(&ModelConfig::full(), 0).unwrap();
        assert_eq!(
            model.param_counts(),
            ParamCounts { total: 197_093, trainable: 195_429, non_trainable: 1_664 }
        );
        let with_head = build_model(&ModelConfig::full().with_log_var_head(true), 0).unwrap();
        assert_eq!(with_head.param_counts().total, 205_317);
        assert_eq!(with_head.param_counts().total - model.param_counts().total, 8_224);
    }

    #[test]
    fn counts_match_independent_enumeration() {
        for cfg in [
            ModelConfig::full(),
            ModelConfig::full().with_log_var_head(true),
            ModelConfig::scaled([8, 16, 32], 1, [4, 3]),
            ModelConfig::scaled([3, 5, 7], 2, [6, 2]).with_log_var_head(true),
        ] {
            let model = build_model(&cfg, 1).unwrap();
            let (trainable, running) = enumerate_params(&cfg);
            let counts = model.param_counts();
            assert_eq!(counts.trainable, trainable);
            assert_eq!(counts.non_trainable, running);
            let stored: usize = model.all_blocks().iter().map(|b| b.len()).sum();
            assert_eq!(stored, counts.total);
            assert_eq!(model.trainable_block_names().len(), model.trainable_blocks().len());
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ModelConfig::full();
        cfg.encoder[0] = LayerSpec::Conv1d { filters: 64, kernel: 4 };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let cfg = ModelConfig::scaled([64, 64, 256], 32, [256, 128]);
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::full();
        cfg.classifier[3] = LayerSpec::Dropout { rate: 1.0 };
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::full();
        cfg.classifier.pop();
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::full();
        cfg.latent_dim = 0;
        assert!(cfg.validate().is_err());
    }

    fn random_batch(seed: u64, b: usize, t: usize, c: usize) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_vec(b, t, c, (0..b * t * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn full_model_pools_to_feature_vector() {
        let mut model = build_model(&ModelConfig::full(), 3).unwrap();
        let x = random_batch(1, 2, 1000, 12);
        let (probs, cache) = model.forward_train(&x).unwrap();
        assert_eq!(probs.len(), 10);
        assert_eq!(cache.latent().len(), 2 * 32);
        let mut h = x.clone();
        let mut times = Vec::new();
        for layer in &model.layers()[..model.encoder_len] {
            h = layer.forward_infer(h);
            if matches!(layer, Layer::MaxPool1d(_)) {
                times.push(h.time());
            }
        }
        assert_eq!(times, [500, 250, 125]);
        assert_eq!(h.dims(), (2, 1, 256));
    }

    #[test]
    fn zero_output_layer_gives_one_half() {
        let mut model = build_model(&ModelConfig::scaled([4, 6, 8], 3, [5, 4]), 0).unwrap();
        let mut blocks = model.trainable_blocks_mut();
        let n = blocks.len();
        blocks[n - 2].fill(0.0);
        blocks[n - 1].fill(0.0);
        let probs = model.predict(&random_batch(2, 3, 16, 12)).unwrap();
        assert!(probs.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn inference_is_deterministic_and_per_sample() {
        let model = build_model(&ModelConfig::scaled([4, 6, 8], 3, [5, 4]), 0).unwrap();
        let one = random_batch(5, 1, 24, 12);
        assert_eq!(model.predict(&one).unwrap(), model.predict(&one).unwrap());
        let two = one.select(&[0, 0]);
        let p = model.predict(&two).unwrap();
        assert_eq!(&p[..5], &p[5..]);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn shape_errors() {
        let mut model = build_model(&ModelConfig::scaled([4, 6, 8], 3, [5, 4]), 0).unwrap();
        assert!(matches!(
            model.predict(&Tensor3::zeros(1, 16, 11)),
            Err(Error::ShapeMismatch { what: "input channels", .. })
        ));
        assert!(matches!(model.forward_train(&Tensor3::zeros(1, 7, 12)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn backward_rejects_stale_or_infer_cache() {
        let mut model = build_model(&ModelConfig::scaled([4, 6, 8], 3, [5, 4]), 0).unwrap();
        let x = random_batch(1, 2, 16, 12);
        let (_, infer_cache) = model.forward(&x, Mode::Infer).unwrap();
        assert_eq!(model.backward(&infer_cache, &[0.0; 10]).unwrap_err(), Error::StaleCache);
        let (_, cache) = model.forward(&x, Mode::Train).unwrap();
        model.trainable_blocks_mut()[0][0] += 1.0;
        assert_eq!(model.backward(&cache, &[0.0; 10]).unwrap_err(), Error::StaleCache);
    }

    #[test]
    fn backward_is_linear_in_output_gradient() {
        let mut model = build_model(&ModelConfig::scaled([4, 6, 8], 3, [5, 4]).with_log_var_head(true), 0).unwrap();
        let x = random_batch(7, 3, 16, 12);
        let (_, cache) = model.forward_train(&x).unwrap();
        assert_eq!(cache.log_var().map(|v| v.len()), Some(9));
        let zero = model.backward(&cache, &[0.0; 15]).unwrap();
        assert!(zero.flat().all(|g| g == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g2: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        let once = model.backward(&cache, &g).unwrap();
        let twice = model.backward(&cache, &g2).unwrap();
        for (a, b) in once.flat().zip(twice.flat()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        assert_eq!(once.blocks.len(), model.trainable_blocks().len());
        for (g, p) in once.blocks.iter().zip(model.trainable_blocks()) {
            assert_eq!(g.len(), p.len());
        }
    }

    #[test]
    fn dropout_stream_advances_per_train_forward() {
        let mut model = build_model(&ModelConfig::scaled([4, 6, 8], 3, [5, 4]), 0).unwrap();
        let x = random_batch(9, 4, 16, 12);
        let mut twin = model.clone();
        let (a, _) = model.forward_train(&x).unwrap();
        let (b, _) = twin.forward_train(&x).unwrap();
        assert_eq!(a, b);
        let (c, _) = model.forward_train(&x).unwrap();
        assert_ne!(a, c);
    }
}
