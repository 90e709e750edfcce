//! Actor and critic networks as functions of their parameter stores.

use rand::Rng;

use super::{AgentConfig, AgentError, AgentState, Result};
use crate::features::LATENT_WIDTH;
use crate::graph_conv::gcn_forward;
use crate::tensor::{init_uniform_fan_in, Graph, ParamStore, Tensor, Var};

/// Names and shapes of the actor parameters, in store order.
pub(crate) fn actor_layout(c: &AgentConfig) -> Vec<(&'static str, Vec<usize>, usize)> {
    let (n, k) = (c.window, c.gcn_order);
    let f = LATENT_WIDTH;
    vec![
        ("gcn.theta", vec![f, f * k], f * k),
        ("actor.conv1.w", vec![c.actor_conv1, f, 3], f * 3),
        ("actor.conv1.b", vec![c.actor_conv1], f * 3),
        ("actor.conv2.w", vec![c.actor_conv2, c.actor_conv1, n - 2], c.actor_conv1 * (n - 2)),
        ("actor.conv2.b", vec![c.actor_conv2], c.actor_conv1 * (n - 2)),
        ("actor.conv3.w", vec![1, c.actor_conv2 + 1, 1], c.actor_conv2 + 1),
        ("actor.conv3.b", vec![1], c.actor_conv2 + 1),
        ("actor.cash_bias", vec![1], 1),
    ]
}

pub(crate) fn critic_layout(c: &AgentConfig) -> Vec<(&'static str, Vec<usize>, usize)> {
    let (m, n) = (c.assets, c.window);
    let f = LATENT_WIDTH;
    let dense_in = c.critic_conv3 * n + if c.critic_uses_weights { m + 1 } else { 0 };
    vec![
        ("critic.conv1.w", vec![c.critic_conv1, f, 1], f),
        ("critic.conv1.b", vec![c.critic_conv1], f),
        ("critic.conv2.w", vec![c.critic_conv2, c.critic_conv1, 1], c.critic_conv1),
        ("critic.conv2.b", vec![c.critic_conv2], c.critic_conv1),
        ("critic.conv3.w", vec![c.critic_conv3, c.critic_conv2, m], c.critic_conv2 * m),
        ("critic.conv3.b", vec![c.critic_conv3], c.critic_conv2 * m),
        ("critic.dense.w", vec![dense_in, 1], dense_in),
        ("critic.dense.b", vec![1], dense_in),
    ]
}

pub(crate) fn init_store(
    layout: &[(&'static str, Vec<usize>, usize)],
    rng: &mut impl Rng,
) -> ParamStore {
    let mut store = ParamStore::new();
    for (name, shape, fan_in) in layout {
        // the cash bias starts neutral
        let value = if *name == "actor.cash_bias" {
            Tensor::zeros(shape)
        } else {
            init_uniform_fan_in(shape, *fan_in, rng)
        };
        store.add(*name, value);
    }
    store
}

/// Checks a loaded store against the layout, naming the first mismatch.
pub(crate) fn check_store(
    store: &ParamStore,
    layout: &[(&'static str, Vec<usize>, usize)],
) -> Result<()> {
    for (name, shape, _) in layout {
        let id = store
            .by_name(name)
            .ok_or_else(|| AgentError::Shape(format!("missing parameter `{name}`")))?;
        if store.get(id).shape() != shape.as_slice() {
            return Err(AgentError::Shape(format!(
                "parameter `{name}` has shape {:?}, config expects {shape:?}",
                store.get(id).shape()
            )));
        }
    }
    if store.len() != layout.len() {
        return Err(AgentError::Shape(format!(
            "{} parameters, config expects {}",
            store.len(),
            layout.len()
        )));
    }
    Ok(())
}

/// Intermediate nodes of one actor evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ActorNodes {
    /// Graph-convolved features `[3, m, n]`.
    pub features: Var,
    /// Pre-softmax scores `[m + 1]`, cash first.
    pub logits: Var,
    /// Softmax output `[m + 1]`.
    pub mean: Var,
}

/// GCN → conv 1×3 (tanh) → conv 1×(n−2) (tanh) → previous weights appended as a
/// channel → conv 1×1 (tanh) → cash bias prepended → softmax.
pub(crate) fn actor_graph(
    g: &mut Graph,
    vars: &[Var],
    state: &AgentState,
    order: usize,
) -> Result<ActorNodes> {
    let m = state.num_assets();
    let x = g.constant(state.latent.clone());
    let features = gcn_forward(g, x, &state.laplacian, vars[0], order)?;
    let h = g.conv1xk(features, vars[1], vars[2])?;
    let h = g.tanh(h);
    let h = g.conv1xk(h, vars[3], vars[4])?;
    let h = g.tanh(h);
    let prev = Tensor::new(&[1, m, 1], state.prev_weights.as_slice()[1..].to_vec())?;
    let prev = g.constant(prev);
    let h = g.concat(&[h, prev], 0)?;
    let h = g.conv1xk(h, vars[5], vars[6])?;
    let h = g.tanh(h);
    let scores = g.reshape(h, &[m])?;
    let logits = g.concat(&[vars[7], scores], 0)?;
    let mean = g.softmax(logits, 0)?;
    Ok(ActorNodes {
        features,
        logits,
        mean,
    })
}

/// conv 1×1 (relu) → conv 1×1 (relu) → conv across all m assets (relu) →
/// dense → scalar `[1, 1]`. `features` is `[3, m, n]`.
pub(crate) fn critic_graph(
    g: &mut Graph,
    vars: &[Var],
    features: Var,
    prev_weights: Option<&[f64]>,
) -> Result<Var> {
    let h = g.conv1xk(features, vars[0], vars[1])?;
    let h = g.relu(h);
    let h = g.conv1xk(h, vars[2], vars[3])?;
    let h = g.relu(h);
    // [c, m, n] → [c, n, m] so the kernel spans the asset axis
    let h = g.swap_last2(h)?;
    let h = g.conv1xk(h, vars[4], vars[5])?;
    let h = g.relu(h);
    let width = g.shape(h).iter().product();
    let mut flat = g.reshape(h, &[1, width])?;
    if let Some(w) = prev_weights {
        let w = g.constant(Tensor::new(&[1, w.len()], w.to_vec())?);
        flat = g.concat(&[flat, w], 1)?;
    }
    Ok(g.linear(flat, vars[6], vars[7])?)
}
