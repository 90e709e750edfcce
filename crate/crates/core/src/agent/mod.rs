//! Actor–critic agent.
//!
//! The actor maps the RSAE latent code of the last `n` days (after one graph
//! convolution) plus the previous weights to the mean of a Dirichlet policy
//! over cash and `m` assets. The critic maps the same graph-convolved features
//! to a state value. The graph-convolution filters belong to the actor and are
//! trained through the actor's loss.

mod nets;
mod policy;

pub use nets::ActorNodes;
pub use policy::{floor_mean, PolicyDistribution, Sample, MEAN_FLOOR};

use rand::Rng;
use thiserror::Error;

use crate::features::LATENT_WIDTH;
use crate::graph_conv::GraphError;
use crate::portfolio::{PortfolioError, WeightVector};
use crate::tensor::{Adam, AdamConfig, Graph, ParamStore, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what} in training step ({diagnostics})")]
    NonFinite { what: String, diagnostics: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
}

pub type Result<T> = std::result::Result<T, AgentError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    /// Number of risky assets `m`.
    pub assets: usize,
    /// Trading window `n` in days.
    pub window: usize,
    /// Chebyshev order `K` of the graph convolution.
    pub gcn_order: usize,
    pub actor_conv1: usize,
    pub actor_conv2: usize,
    pub critic_conv1: usize,
    pub critic_conv2: usize,
    pub critic_conv3: usize,
    /// Feed the previous weights to the critic's dense layer as well.
    pub critic_uses_weights: bool,
    /// Dirichlet concentration `κ`.
    pub kappa: f64,
    /// Discount `γ`.
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl AgentConfig {
    pub fn new(assets: usize, window: usize) -> Self {
        Self {
            assets,
            window,
            gcn_order: 3,
            actor_conv1: 3,
            actor_conv2: 8,
            critic_conv1: 4,
            critic_conv2: 4,
            critic_conv3: 8,
            critic_uses_weights: false,
            kappa: 50.0,
            gamma: 0.99,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AgentError::InvalidConfig(msg));
        if self.assets == 0 {
            return bad("at least one asset is required".into());
        }
        if self.window < 3 {
            return bad(format!("window {} is shorter than the 1×3 kernel", self.window));
        }
        if self.gcn_order == 0 {
            return bad("Chebyshev order must be at least 1".into());
        }
        let widths = [
            self.actor_conv1,
            self.actor_conv2,
            self.critic_conv1,
            self.critic_conv2,
            self.critic_conv3,
        ];
        if widths.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        Ok(())
    }
}

/// What the agent sees on one day: the RSAE latent code `[3, m, n]` before
/// graph convolution, the rescaled Laplacian `L̃` of the asset graph and the
/// weights held going into the day.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub latent: Tensor,
    pub laplacian: Tensor,
    pub prev_weights: WeightVector,
}

impl AgentState {
    pub fn new(latent: Tensor, laplacian: Tensor, prev_weights: WeightVector) -> Result<Self> {
        let s = latent.shape();
        if s.len() != 3 || s[0] != LATENT_WIDTH {
            return Err(AgentError::Shape(format!("latent {:?} is not [3, m, n]", s)));
        }
        let m = s[1];
        if laplacian.shape() != [m, m] {
            return Err(AgentError::Shape(format!(
                "laplacian {:?} for {m} assets",
                laplacian.shape()
            )));
        }
        if prev_weights.len() != m + 1 {
            return Err(AgentError::Shape(format!(
                "{} previous weights for {m} assets",
                prev_weights.len()
            )));
        }
        Ok(Self {
            latent,
            laplacian,
            prev_weights,
        })
    }

    pub fn num_assets(&self) -> usize {
        self.latent.shape()[1]
    }

    pub fn window(&self) -> usize {
        self.latent.shape()[2]
    }

    /// Same observation with different previous weights.
    pub fn with_prev_weights(&self, w: WeightVector) -> Result<Self> {
        Self::new(self.latent.clone(), self.laplacian.clone(), w)
    }
}

/// One step of experience. `log_action` is `ln a` of the action taken (see
/// [`Sample::log_action`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: AgentState,
    pub log_action: Vec<f64>,
    pub reward: f64,
    pub next_state: AgentState,
    /// No bootstrap from `next_state`.
    pub terminal: bool,
}

/// `δ = r + γ·V(s') − V(s)`.
pub fn td_error(reward: f64, value: f64, next_value: f64, gamma: f64) -> f64 {
    reward + gamma * next_value - value
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    pub reward: f64,
    pub value: f64,
    pub next_value: f64,
    pub td_error: f64,
    /// `½ δ²`.
    pub critic_loss: f64,
    pub log_prob: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
}

impl std::fmt::Display for StepDiagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "reward={} V(s)={} V(s')={} td={} log_prob={} |g_actor|={} |g_critic|={}",
            self.reward,
            self.value,
            self.next_value,
            self.td_error,
            self.log_prob,
            self.actor_grad_norm,
            self.critic_grad_norm
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    config: AgentConfig,
    actor: ParamStore,
    critic: ParamStore,
    actor_opt: Adam,
    critic_opt: Adam,
}

fn grad_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

impl Agent {
    pub fn new(config: AgentConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let actor = nets::init_store(&nets::actor_layout(&config), rng);
        let critic = nets::init_store(&nets::critic_layout(&config), rng);
        Self::from_stores(config, actor, critic)
    }

    /// Rebuilds an agent from saved parameters with fresh optimizer state.
    pub fn from_stores(config: AgentConfig, actor: ParamStore, critic: ParamStore) -> Result<Self> {
        config.validate()?;
        nets::check_store(&actor, &nets::actor_layout(&config))?;
        nets::check_store(&critic, &nets::critic_layout(&config))?;
        let actor_opt = Adam::new(&actor, AdamConfig::with_lr(config.actor_lr))?;
        let critic_opt = Adam::new(&critic, AdamConfig::with_lr(config.critic_lr))?;
        Ok(Self {
            config,
            actor,
            critic,
            actor_opt,
            critic_opt,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn actor_params(&self) -> &ParamStore {
        &self.actor
    }

    pub fn critic_params(&self) -> &ParamStore {
        &self.critic
    }

    pub fn actor_params_mut(&mut self) -> &mut ParamStore {
        &mut self.actor
    }

    pub fn critic_params_mut(&mut self) -> &mut ParamStore {
        &mut self.critic
    }

    fn check_state(&self, s: &AgentState) -> Result<()> {
        if s.num_assets() != self.config.assets || s.window() != self.config.window {
            return Err(AgentError::Shape(format!(
                "state covers {} assets × {} days, agent expects {} × {}",
                s.num_assets(),
                s.window(),
                self.config.assets,
                self.config.window
            )));
        }
        Ok(())
    }

    fn eval_actor(&self, state: &AgentState) -> Result<(Graph, ActorNodes)> {
        self.check_state(state)?;
        let mut g = Graph::new();
        let vars = self.actor.bind_frozen(&mut g);
        let nodes = nets::actor_graph(&mut g, &vars, state, self.config.gcn_order)?;
        Ok((g, nodes))
    }

    /// Graph-convolved features `[3, m, n]`.
    pub fn features(&self, state: &AgentState) -> Result<Tensor> {
        let (g, nodes) = self.eval_actor(state)?;
        Ok(g.value(nodes.features).clone())
    }

    /// Pre-softmax actor scores, cash first.
    pub fn logits(&self, state: &AgentState) -> Result<Vec<f64>> {
        let (g, nodes) = self.eval_actor(state)?;
        Ok(g.value(nodes.logits).data().to_vec())
    }

    /// Actor output: the policy mean, used directly as the action when
    /// evaluating deterministically.
    pub fn policy_mean(&self, state: &AgentState) -> Result<WeightVector> {
        let (g, nodes) = self.eval_actor(state)?;
        Ok(WeightVector::new(g.value(nodes.mean).data().to_vec())?)
    }

    pub fn distribution(&self, state: &AgentState) -> Result<PolicyDistribution> {
        PolicyDistribution::new(&self.policy_mean(state)?, self.config.kappa)
    }

    pub fn act(&self, state: &AgentState, rng: &mut impl Rng) -> Result<Sample> {
        self.distribution(state)?.sample(rng)
    }

    fn critic_prev<'a>(&self, state: &'a AgentState) -> Option<&'a [f64]> {
        self.config
            .critic_uses_weights
            .then(|| state.prev_weights.as_slice())
    }

    pub fn value(&self, state: &AgentState) -> Result<f64> {
        let features = self.features(state)?;
        let mut g = Graph::new();
        let vars = self.critic.bind_frozen(&mut g);
        let x = g.constant(features);
        let v = nets::critic_graph(&mut g, &vars, x, self.critic_prev(state))?;
        Ok(g.value(v).data()[0])
    }

    /// `V(s)` and its gradient with respect to every critic parameter. The
    /// graph-convolved features are treated as fixed inputs.
    pub fn value_and_grads(&self, state: &AgentState) -> Result<(f64, Vec<Tensor>)> {
        let features = self.features(state)?;
        let mut g = Graph::new();
        let vars = self.critic.bind(&mut g);
        let x = g.constant(features);
        let v = nets::critic_graph(&mut g, &vars, x, self.critic_prev(state))?;
        let v = g.sum(v);
        let grads = g.backward(v)?;
        Ok((g.value(v).data()[0], vars.iter().map(|p| grads.wrt(*p)).collect()))
    }

    /// `ln π(a | s)` for the action with coordinate logs `log_action`.
    pub fn log_prob(&self, state: &AgentState, log_action: &[f64]) -> Result<f64> {
        self.distribution(state)?.log_density(log_action)
    }

    /// `ln π(a | s)` and its gradient with respect to every actor parameter,
    /// including the graph-convolution filters.
    pub fn log_prob_and_grads(
        &self,
        state: &AgentState,
        log_action: &[f64],
    ) -> Result<(f64, Vec<Tensor>)> {
        self.check_state(state)?;
        let k = self.config.assets + 1;
        if log_action.len() != k {
            return Err(AgentError::Shape(format!(
                "action of length {} for {k} weights",
                log_action.len()
            )));
        }
        let kappa = self.config.kappa;
        let mut g = Graph::new();
        let vars = self.actor.bind(&mut g);
        let nodes = nets::actor_graph(&mut g, &vars, state, self.config.gcn_order)?;
        // α = κ·((1 − kε)·mean + ε), matching `floor_mean`
        let floored = g.scale(nodes.mean, 1.0 - k as f64 * MEAN_FLOOR);
        let floored = g.add_scalar(floored, MEAN_FLOOR);
        let alpha = g.scale(floored, kappa);
        let lg = g.ln_gamma(alpha)?;
        let lg = g.sum(lg);
        let am1 = g.add_scalar(alpha, -1.0);
        let la = g.constant(Tensor::vector(log_action.to_vec())?);
        let term = g.mul(am1, la)?;
        let term = g.sum(term);
        let lp = g.sub(term, lg)?;
        let lp = g.add_scalar(lp, statrs::function::gamma::ln_gamma(kappa));
        let grads = g.backward(lp)?;
        Ok((g.value(lp).data()[0], vars.iter().map(|p| grads.wrt(*p)).collect()))
    }

    /// One actor–critic update: the critic descends `½ δ²` with the bootstrap
    /// target held fixed, the actor ascends `δ · ln π(a | s)`, both through
    /// Adam. A transition with `δ = 0` leaves every parameter untouched.
    pub fn train_step(&mut self, tr: &Transition) -> Result<StepDiagnostics> {
        let non_finite = |stage: &'static str| {
            move |e: AgentError| match e {
                AgentError::Tensor(
                    t @ (TensorError::NonFinite { .. } | TensorError::NonFiniteResult { .. }),
                ) => AgentError::NonFinite {
                    what: format!("{stage} ({t})"),
                    diagnostics: format!("reward {}", tr.reward),
                },
                e => e,
            }
        };
        let (value, critic_grads) = self
            .value_and_grads(&tr.state)
            .map_err(non_finite("critic forward/backward"))?;
        let next_value = if tr.terminal {
            0.0
        } else {
            self.value(&tr.next_state).map_err(non_finite("next-state value"))?
        };
        let delta = td_error(tr.reward, value, next_value, self.config.gamma);
        let (log_prob, actor_grads) = self
            .log_prob_and_grads(&tr.state, &tr.log_action)
            .map_err(non_finite("actor forward/backward"))?;
        let mut diag = StepDiagnostics {
            reward: tr.reward,
            value,
            next_value,
            td_error: delta,
            critic_loss: 0.5 * delta * delta,
            log_prob,
            actor_grad_norm: delta.abs() * grad_norm(&actor_grads),
            critic_grad_norm: delta.abs() * grad_norm(&critic_grads),
        };
        if !(delta.is_finite() && diag.actor_grad_norm.is_finite() && diag.critic_grad_norm.is_finite())
        {
            return Err(AgentError::NonFinite {
                what: "gradient".into(),
                diagnostics: diag.to_string(),
            });
        }
        if delta == 0.0 {
            diag.actor_grad_norm = 0.0;
            diag.critic_grad_norm = 0.0;
            return Ok(diag);
        }
        // d(½δ²)/dv = −δ ∇V ;  d(−δ ln π)/dθ = −δ ∇ln π
        let critic_step: Vec<Tensor> = critic_grads.iter().map(|g| g.map(|v| -delta * v)).collect();
        let actor_step: Vec<Tensor> = actor_grads.iter().map(|g| g.map(|v| -delta * v)).collect();
        self.critic_opt.step(&mut self.critic, &critic_step)?;
        self.actor_opt.step(&mut self.actor, &actor_step)?;
        Ok(diag)
    }
}
