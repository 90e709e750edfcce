use rand::seq::SliceRandom;
use rand::Rng;

use super::{FeatureError, NormalizedWindow, Result, LATENT_WIDTH, NUM_FEATURES, NUM_PRICE_FEATURES};
use crate::tensor::{init_uniform_fan_in, Adam, AdamConfig, Graph, ParamStore, Tensor, Var};

/// Encoder widths 11 → 8 → 5 → 3 (sigmoid), decoder 3 → 3 (sigmoid) → 3 (linear).
const LAYERS: [(&str, usize, usize); 5] = [
    ("rsae.enc0", NUM_FEATURES, 8),
    ("rsae.enc1", 8, 5),
    ("rsae.enc2", 5, LATENT_WIDTH),
    ("rsae.dec0", LATENT_WIDTH, 3),
    ("rsae.dec1", 3, NUM_PRICE_FEATURES),
];
const ENCODER_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsaeConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Inputs are clamped to `[-clip, clip]`; indicator ratios blow up when an
    /// indicator passes close to zero.
    pub input_clip: f64,
}

impl Default for RsaeConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            batch_size: 256,
            input_clip: 10.0,
        }
    }
}

/// Per-feature affine map applied before the encoder: `(x − center) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    pub fn identity() -> Self {
        Self {
            center: vec![0.0; NUM_FEATURES],
            scale: vec![1.0; NUM_FEATURES],
        }
    }

    /// Median and `1.4826 · MAD` of each column of `rows: [N, 11]`; columns
    /// with no spread keep scale 1. The ratios sit within a few percent of 1,
    /// far too little spread for sigmoid layers to resolve unscaled, while
    /// indicator ratios have outliers that would swamp a standard deviation.
    pub fn fit(rows: &Tensor) -> Result<Self> {
        Rsae::check_width(rows)?;
        let n = rows.shape()[0];
        if n == 0 {
            return Err(FeatureError::EmptyTraining);
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            let k = v.len();
            if k % 2 == 1 {
                v[k / 2]
            } else {
                0.5 * (v[k / 2 - 1] + v[k / 2])
            }
        };
        let mut center = Vec::with_capacity(NUM_FEATURES);
        let mut scale = Vec::with_capacity(NUM_FEATURES);
        for f in 0..NUM_FEATURES {
            let mut col: Vec<f64> = (0..n).map(|r| rows.data()[r * NUM_FEATURES + f]).collect();
            let med = median(&mut col);
            let mut dev: Vec<f64> = col.iter().map(|v| (v - med).abs()).collect();
            let mad = 1.4826 * median(&mut dev);
            center.push(med);
            scale.push(if mad > 1e-12 { mad } else { 1.0 });
        }
        Ok(Self { center, scale })
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.center.len() != NUM_FEATURES || self.scale.len() != NUM_FEATURES {
            return Err(format!(
                "input scaling has {} centers and {} scales, expected {NUM_FEATURES}",
                self.center.len(),
                self.scale.len()
            ));
        }
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.center.iter().any(|c| !c.is_finite())
        {
            return Err("input scaling must be finite with positive scales".into());
        }
        Ok(())
    }
}

/// Restricted stacked autoencoder: encodes 11 features to 3 and reconstructs
/// only the low/close/high ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct Rsae {
    store: ParamStore,
    scaling: InputScaling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean squared reconstruction error on the full training set, before
    /// training (index 0) and after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl Rsae {
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        for (name, fan_in, out) in LAYERS {
            store.add(format!("{name}.w"), init_uniform_fan_in(&[fan_in, out], fan_in, rng));
            store.add(format!("{name}.b"), init_uniform_fan_in(&[out], fan_in, rng));
        }
        Self {
            store,
            scaling: InputScaling::identity(),
        }
    }

    /// Checks that `store` holds exactly the expected named parameters.
    pub fn from_store(store: ParamStore) -> std::result::Result<Self, String> {
        let mut expected = Vec::new();
        for (name, fan_in, out) in LAYERS {
            expected.push((format!("{name}.w"), vec![fan_in, out]));
            expected.push((format!("{name}.b"), vec![out]));
        }
        if store.len() != expected.len() {
            return Err(format!(
                "autoencoder has {} parameters, expected {}",
                store.len(),
                expected.len()
            ));
        }
        for ((_, name, value), (want_name, want_shape)) in store.iter().zip(&expected) {
            if name != want_name || value.shape() != want_shape.as_slice() {
                return Err(format!(
                    "parameter `{name}` {:?} does not match `{want_name}` {want_shape:?}",
                    value.shape()
                ));
            }
        }
        Ok(Self {
            store,
            scaling: InputScaling::identity(),
        })
    }

    pub fn with_scaling(mut self, scaling: InputScaling) -> std::result::Result<Self, String> {
        scaling.check()?;
        self.scaling = scaling;
        Ok(self)
    }

    pub fn scaling(&self) -> &InputScaling {
        &self.scaling
    }

    /// Fits [`InputScaling`] to `rows` and installs it.
    pub fn fit_scaling(&mut self, rows: &Tensor) -> Result<()> {
        self.scaling = InputScaling::fit(rows)?;
        Ok(())
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn check_width(rows: &Tensor) -> Result<()> {
        if rows.rank() != 2 || rows.shape()[1] != NUM_FEATURES {
            return Err(FeatureError::Width {
                expected: NUM_FEATURES,
                actual: rows.shape().last().copied().unwrap_or(0),
            });
        }
        Ok(())
    }

    fn layer(g: &mut Graph, vars: &[Var], i: usize, x: Var, sigmoid: bool) -> Result<Var> {
        let y = g.linear(x, vars[2 * i], vars[2 * i + 1])?;
        Ok(if sigmoid { g.sigmoid(y) } else { y })
    }

    /// Latent code of `x: [rows, 11]` inside `g`; `vars` from binding [`Rsae::params`].
    pub fn encode_var(g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for i in 0..ENCODER_LAYERS {
            h = Self::layer(g, vars, i, h, true)?;
        }
        Ok(h)
    }

    /// Reconstruction of the price ratios from a latent code.
    pub fn decode_var(g: &mut Graph, vars: &[Var], z: Var) -> Result<Var> {
        let h = Self::layer(g, vars, ENCODER_LAYERS, z, true)?;
        Self::layer(g, vars, ENCODER_LAYERS + 1, h, false)
    }

    /// Mean squared error of the low/close/high reconstruction of `x`.
    pub fn loss_var(g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let rows = g.shape(x)[0];
        let z = Self::encode_var(g, vars, x)?;
        let recon = Self::decode_var(g, vars, z)?;
        let target = g.slice(x, 1, 0, NUM_PRICE_FEATURES)?;
        let target = g.constant(g.value(target).clone());
        debug_assert_eq!(g.shape(recon), [rows, NUM_PRICE_FEATURES]);
        let diff = g.sub(recon, target)?;
        let sq = g.mul(diff, diff)?;
        Ok(g.mean(sq))
    }

    /// Scaled and clipped encoder input.
    fn prepare(&self, rows: &Tensor, clip: f64) -> Result<Tensor> {
        Self::check_width(rows)?;
        let (c, s) = (&self.scaling.center, &self.scaling.scale);
        let data = rows
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let f = i % NUM_FEATURES;
                ((v - c[f]) / s[f]).clamp(-clip, clip)
            })
            .collect();
        Ok(Tensor::new(rows.shape(), data)?)
    }

    /// Latent codes `[rows, 3]` for `rows: [rows, 11]`.
    pub fn encode(&self, rows: &Tensor, config: &RsaeConfig) -> Result<Tensor> {
        let x = self.prepare(rows, config.input_clip)?;
        let mut g = Graph::new();
        let vars = self.store.bind_frozen(&mut g);
        let xv = g.constant(x);
        let z = Self::encode_var(&mut g, &vars, xv)?;
        Ok(g.value(z).clone())
    }

    /// Encode-then-decode of `rows`, `[rows, 3]`, in the original units.
    pub fn reconstruct(&self, rows: &Tensor, config: &RsaeConfig) -> Result<Tensor> {
        let x = self.prepare(rows, config.input_clip)?;
        let mut g = Graph::new();
        let vars = self.store.bind_frozen(&mut g);
        let xv = g.constant(x);
        let z = Self::encode_var(&mut g, &vars, xv)?;
        let r = Self::decode_var(&mut g, &vars, z)?;
        let (c, s) = (&self.scaling.center, &self.scaling.scale);
        let data = g
            .value(r)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let f = i % NUM_PRICE_FEATURES;
                v * s[f] + c[f]
            })
            .collect();
        Ok(Tensor::new(g.value(r).shape(), data)?)
    }

    /// Reconstruction loss and its gradient for every parameter.
    pub fn loss_and_grads(&self, rows: &Tensor, config: &RsaeConfig) -> Result<(f64, Vec<Tensor>)> {
        let x = self.prepare(rows, config.input_clip)?;
        let mut g = Graph::new();
        let vars = self.store.bind(&mut g);
        let xv = g.constant(x);
        let loss = Self::loss_var(&mut g, &vars, xv)?;
        let grads = g.backward(loss)?;
        let value = g.value(loss).item().expect("scalar loss");
        Ok((value, vars.iter().map(|v| grads.wrt(*v)).collect()))
    }

    /// Reconstruction MSE, measured in scaled units.
    pub fn loss(&self, rows: &Tensor, config: &RsaeConfig) -> Result<f64> {
        let x = self.prepare(rows, config.input_clip)?;
        let mut g = Graph::new();
        let vars = self.store.bind_frozen(&mut g);
        let xv = g.constant(x);
        let loss = Self::loss_var(&mut g, &vars, xv)?;
        Ok(g.value(loss).item().expect("scalar loss"))
    }

    /// Latent tensor `[3, m, n]` of a window.
    pub fn encode_window(&self, window: &NormalizedWindow, config: &RsaeConfig) -> Result<Tensor> {
        let (m, n) = (window.num_assets(), window.window());
        let z = self.encode(&window.rows(), config)?;
        let mut data = vec![0.0; LATENT_WIDTH * m * n];
        for r in 0..m * n {
            for c in 0..LATENT_WIDTH {
                data[c * m * n + r] = z.data()[r * LATENT_WIDTH + c];
            }
        }
        Ok(Tensor::new(&[LATENT_WIDTH, m, n], data)?)
    }
}

/// Trains on individual feature rows `[N, 11]` with shuffled mini-batches.
pub fn rsae_train_rows(
    mut model: Rsae,
    rows: &Tensor,
    epochs: usize,
    config: &RsaeConfig,
    rng: &mut impl Rng,
) -> Result<(Rsae, TrainReport)> {
    Rsae::check_width(rows)?;
    let n = rows.shape()[0];
    if n == 0 {
        return Err(FeatureError::EmptyTraining);
    }
    let mut adam = Adam::new(&model.store, AdamConfig::with_lr(config.lr))?;
    let mut losses = vec![model.loss(rows, config)?];
    let mut order: Vec<usize> = (0..n).collect();
    let batch = config.batch_size.max(1);
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            let data: Vec<f64> = chunk
                .iter()
                .flat_map(|&r| rows.data()[r * NUM_FEATURES..(r + 1) * NUM_FEATURES].iter().copied())
                .collect();
            let b = Tensor::new(&[chunk.len(), NUM_FEATURES], data)?;
            let (_, grads) = model.loss_and_grads(&b, config)?;
            adam.step(&mut model.store, &grads)?;
        }
        losses.push(model.loss(rows, config)?);
    }
    Ok((model, TrainReport { epoch_losses: losses }))
}

/// Trains on every (asset, day) row of the given windows.
pub fn rsae_train(
    model: Rsae,
    windows: &[NormalizedWindow],
    epochs: usize,
    config: &RsaeConfig,
    rng: &mut impl Rng,
) -> Result<(Rsae, TrainReport)> {
    if windows.is_empty() {
        return Err(FeatureError::EmptyTraining);
    }
    let mut data = Vec::new();
    for w in windows {
        data.extend_from_slice(w.tensor().data());
    }
    let rows = Tensor::new(&[data.len() / NUM_FEATURES, NUM_FEATURES], data)?;
    rsae_train_rows(model, &rows, epochs, config, rng)
}
