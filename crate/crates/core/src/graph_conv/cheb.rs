use std::collections::VecDeque;

use rand::Rng;

use super::{AssetGraph, GraphError, Result};
use crate::tensor::{init_uniform_fan_in, Graph, Tensor, TensorError, Var};

/// Filters `x` with `Σ_k θ_k T_k(L̃)`, using the three-term recurrence
/// `x̄_0 = x`, `x̄_1 = L̃x`, `x̄_k = 2L̃x̄_{k−1} − x̄_{k−2}`.
pub fn cheb_apply(graph: &AssetGraph, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    if theta.is_empty() {
        return Err(GraphError::ZeroOrder);
    }
    let m = graph.num_nodes();
    if x.len() != m {
        return Err(GraphError::LengthMismatch {
            expected: m,
            actual: x.len(),
        });
    }
    let lap = graph.scaled_laplacian()?;
    let l = lap.data();
    let matvec = |v: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| (0..m).map(|j| l[i * m + j] * v[j]).sum())
            .collect()
    };
    let mut y: Vec<f64> = x.iter().map(|v| theta[0] * v).collect();
    if theta.len() == 1 {
        return Ok(y);
    }
    let mut prev = x.to_vec();
    let mut cur = matvec(x);
    for (yi, ci) in y.iter_mut().zip(&cur) {
        *yi += theta[1] * ci;
    }
    for &t in &theta[2..] {
        let next: Vec<f64> = matvec(&cur)
            .iter()
            .zip(&prev)
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        for (yi, ni) in y.iter_mut().zip(&next) {
            *yi += t * ni;
        }
        prev = cur;
        cur = next;
    }
    Ok(y)
}

/// Chebyshev coefficients for every (output, input) channel pair, stored as an
/// `[out, in·K]` matrix whose row `o` holds `θ[o, c, k]` at column `c·K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebFilterBank {
    order: usize,
    in_channels: usize,
    out_channels: usize,
    theta: Tensor,
}

impl ChebFilterBank {
    pub fn new(order: usize, in_channels: usize, out_channels: usize, theta: Tensor) -> Result<Self> {
        if order == 0 {
            return Err(GraphError::ZeroOrder);
        }
        let want = [out_channels, in_channels * order];
        if theta.shape() != want {
            return Err(GraphError::InvalidFilter(format!(
                "coefficients have shape {:?}, expected {want:?}",
                theta.shape()
            )));
        }
        Ok(Self {
            order,
            in_channels,
            out_channels,
            theta,
        })
    }

    pub fn zeros(order: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        Self::new(
            order,
            in_channels,
            out_channels,
            Tensor::zeros(&[out_channels, in_channels * order]),
        )
    }

    pub fn random(
        order: usize,
        in_channels: usize,
        out_channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let shape = [out_channels, in_channels * order];
        let theta = init_uniform_fan_in(&shape, in_channels * order, rng);
        Self::new(order, in_channels, out_channels, theta)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn theta(&self) -> &Tensor {
        &self.theta
    }

    /// The `K` coefficients filtering input `c` into output `o`.
    pub fn coefficients(&self, o: usize, c: usize) -> &[f64] {
        let row = self.in_channels * self.order;
        let start = o * row + c * self.order;
        &self.theta.data()[start..start + self.order]
    }
}

/// Graph-convolution pre-activation: for `x: [C, m, n]`, `lap = L̃: [m, m]` and
/// `theta: [O, C·K]`, returns `[O, m, n]` with
/// `out[o] = Σ_c Σ_k θ[o, c, k] · T_k(L̃) x[c]`, each time step filtered
/// independently.
pub fn gcn_preactivation(g: &mut Graph, x: Var, lap: &Tensor, theta: Var, order: usize) -> Result<Var> {
    if order == 0 {
        return Err(GraphError::ZeroOrder);
    }
    let xs = g.shape(x).to_vec();
    let ts = g.shape(theta).to_vec();
    if xs.len() != 3 || lap.shape() != [xs[1], xs[1]] || ts.len() != 2 || ts[1] != xs[0] * order {
        return Err(TensorError::ShapeMismatch {
            op: "gcn_layer",
            left: xs,
            right: ts,
        }
        .into());
    }
    let (c_in, m, n) = (xs[0], xs[1], xs[2]);
    let out = ts[0];
    let l = g.constant(lap.clone());
    let mut rows = Vec::with_capacity(c_in * order);
    for c in 0..c_in {
        let xc = g.slice(x, 0, c, 1)?;
        let x0 = g.reshape(xc, &[m, n])?;
        let mut terms = vec![x0];
        if order > 1 {
            terms.push(g.matmul(l, x0)?);
        }
        for k in 2..order {
            let lx = g.matmul(l, terms[k - 1])?;
            let twice = g.scale(lx, 2.0);
            terms.push(g.sub(twice, terms[k - 2])?);
        }
        for t in terms {
            rows.push(g.reshape(t, &[1, m * n])?);
        }
    }
    let basis = g.concat(&rows, 0)?;
    let pre = g.matmul(theta, basis)?;
    Ok(g.reshape(pre, &[out, m, n])?)
}

/// [`gcn_preactivation`] followed by the logistic sigmoid.
pub fn gcn_forward(g: &mut Graph, x: Var, lap: &Tensor, theta: Var, order: usize) -> Result<Var> {
    let pre = gcn_preactivation(g, x, lap, theta, order)?;
    Ok(g.sigmoid(pre))
}

/// One graph-convolution layer applied to a `[C, m, n]` tensor.
pub fn gcn_layer(latent: &Tensor, graph: &AssetGraph, bank: &ChebFilterBank) -> Result<Tensor> {
    if latent.rank() != 3 || latent.shape()[0] != bank.in_channels {
        return Err(GraphError::InvalidFilter(format!(
            "input shape {:?} does not have {} channels",
            latent.shape(),
            bank.in_channels
        )));
    }
    let lap = graph.scaled_laplacian()?;
    let mut g = Graph::new();
    let x = g.constant(latent.clone());
    let theta = g.constant(bank.theta.clone());
    let y = gcn_forward(&mut g, x, &lap, theta, bank.order)?;
    Ok(g.value(y).clone())
}

/// Breadth-first hop counts from `source`, treating `w_ij ≥ threshold` (and
/// non-zero) as an edge. `None` marks unreachable nodes.
pub fn hop_distances(graph: &AssetGraph, source: usize, threshold: f64) -> Vec<Option<usize>> {
    let m = graph.num_nodes();
    let mut dist = vec![None; m];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(i) = queue.pop_front() {
        let d = dist[i].expect("queued nodes have a distance");
        for j in 0..m {
            let w = graph.weight(i, j);
            if dist[j].is_none() && w > 0.0 && w >= threshold {
                dist[j] = Some(d + 1);
                queue.push_back(j);
            }
        }
    }
    dist
}

/// Filter output for a unit impulse at `source`.
pub fn impulse_response(graph: &AssetGraph, source: usize, theta: &[f64]) -> Result<Vec<f64>> {
    let mut e = vec![0.0; graph.num_nodes()];
    e[source] = 1.0;
    cheb_apply(graph, &e, theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalityReport {
    pub order: usize,
    /// Largest |response| at a node more than `order − 1` hops from the impulse.
    pub max_outside: f64,
    /// (source, node, response) for every response above `tol` outside the ball.
    pub violations: Vec<(usize, usize, f64)>,
}

impl LocalityReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that an order-`K` filter only reaches the `(K−1)`-hop neighbourhood
/// of each impulse. Hops are counted on the graph with edges below
/// `threshold` removed; the filter itself runs on the full weights.
pub fn k_locality_check(
    graph: &AssetGraph,
    theta: &[f64],
    threshold: f64,
    tol: f64,
) -> Result<LocalityReport> {
    let order = theta.len();
    if order == 0 {
        return Err(GraphError::ZeroOrder);
    }
    let mut report = LocalityReport {
        order,
        max_outside: 0.0,
        violations: Vec::new(),
    };
    for source in 0..graph.num_nodes() {
        let hops = hop_distances(graph, source, threshold);
        let y = impulse_response(graph, source, theta)?;
        for (node, (h, v)) in hops.iter().zip(&y).enumerate() {
            if h.is_none_or(|h| h > order - 1) {
                report.max_outside = report.max_outside.max(v.abs());
                if v.abs() >= tol {
                    report.violations.push((source, node, *v));
                }
            }
        }
    }
    Ok(report)
}
