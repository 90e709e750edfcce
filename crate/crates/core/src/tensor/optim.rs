use rand::Rng;

use super::{Graph, Result, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named learnable arrays, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(TensorError::ShapeMismatch {
                op: "ParamStore::set",
                left: self.values[id.0].shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Registers every parameter as a gradient-receiving leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|v| g.variable(v.clone())).collect()
    }

    /// Registers every parameter as a constant leaf (no gradients).
    pub fn bind_frozen(&self, g: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|v| g.constant(v.clone())).collect()
    }

    /// Flat copy of every entry, in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.data().iter().copied()).collect()
    }

    /// Inverse of [`ParamStore::flatten`].
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.numel() {
            return Err(TensorError::DataLength {
                shape: vec![self.numel()],
                expected: self.numel(),
                actual: flat.len(),
            });
        }
        let mut at = 0;
        for v in &mut self.values {
            let n = v.len();
            *v = Tensor::new(v.shape(), flat[at..at + n].to_vec())?;
            at += n;
        }
        Ok(())
    }
}

/// Uniform initialization in `[-1/√fan_in, 1/√fan_in]`.
pub fn init_uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(TensorError::Invalid {
                op: "adam",
                msg: format!("invalid hyperparameters {self:?}"),
            });
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moments for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: &[usize], config: AdamConfig) -> Self {
        Self {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of `param` in the descent direction of `grad`.
pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut AdamState) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != state.m.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "adam_step",
            left: param.shape().to_vec(),
            right: grad.shape().to_vec(),
        });
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for (((p, &g), m), v) in param
        .data
        .iter_mut()
        .zip(grad.data())
        .zip(state.m.data.iter_mut())
        .zip(state.v.data.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over a whole [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            states: store
                .values
                .iter()
                .map(|v| AdamState::new(v.shape(), config))
                .collect(),
        })
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(TensorError::Invalid {
                op: "Adam::step",
                msg: format!("{} gradients for {} parameters", grads.len(), store.len()),
            });
        }
        for ((p, g), s) in store.values.iter_mut().zip(grads).zip(&mut self.states) {
            adam_step(p, g, s)?;
        }
        Ok(())
    }
}
