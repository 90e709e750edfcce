//! Asset correlation graphs and Chebyshev spectral graph convolution.
//!
//! Edge weights are `w_ij = 1 − corr(x_i, x_j)` over a trailing window, so
//! strongly correlated assets are weakly connected and anti-correlated ones
//! get weight 2. Filters act through the normalized Laplacian
//! `L_sym = D^{-1/2} (D − W) D^{-1/2}`, whose spectrum lies in `[0, 2]`.

mod cheb;
pub mod eigen;

pub use cheb::{
    cheb_apply, gcn_forward, gcn_layer, hop_distances, impulse_response, k_locality_check,
    ChebFilterBank, LocalityReport,
};

use log::warn;
use thiserror::Error;

use crate::market_data::Panel;
use crate::tensor::{Tensor, TensorError};
use eigen::symmetric_eigen;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("correlation window needs at least 3 observations, got {0}")]
    WindowTooShort(usize),
    #[error("window of {window} rows ending at row {t} is outside the panel of {len} rows")]
    OutOfRange { t: usize, window: usize, len: usize },
    #[error("graph needs at least one node")]
    Empty,
    #[error("weight matrix: {0}")]
    InvalidWeights(String),
    #[error("largest Laplacian eigenvalue is {0}; the graph has no edges to filter over")]
    DegenerateSpectrum(f64),
    #[error("signal of length {actual} on a graph with {expected} nodes")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("Chebyshev order must be at least 1")]
    ZeroOrder,
    #[error("filter bank: {0}")]
    InvalidFilter(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Which per-asset series the edge correlations are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrelationInput {
    #[default]
    Close,
    LogReturn,
}

/// Something odd noticed while building a graph.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphWarning {
    /// The asset did not move over the window; its correlations were set to 0.
    ZeroVariance { asset: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetGraph {
    m: usize,
    weights: Vec<f64>,
    degree: Vec<f64>,
    laplacian: Vec<f64>,
    sym_laplacian: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<f64>,
    warnings: Vec<GraphWarning>,
}

/// Pearson correlation; `None` when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

impl AssetGraph {
    /// Builds the graph from per-asset series of equal length.
    pub fn from_series(series: &[Vec<f64>]) -> Result<Self> {
        let m = series.len();
        if m == 0 {
            return Err(GraphError::Empty);
        }
        let len = series[0].len();
        if len < 3 {
            return Err(GraphError::WindowTooShort(len));
        }
        let flat: Vec<bool> = series
            .iter()
            .map(|s| s.iter().all(|v| *v == s[0]))
            .collect();
        let mut warnings = Vec::new();
        for (asset, _) in flat.iter().enumerate().filter(|(_, f)| **f) {
            warn!("asset {asset} has zero variance in the correlation window; using correlation 0");
            warnings.push(GraphWarning::ZeroVariance { asset });
        }
        let mut w = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let c = pearson(&series[i], &series[j]).unwrap_or(0.0);
                w[i * m + j] = 1.0 - c;
                w[j * m + i] = 1.0 - c;
            }
        }
        let mut g = Self::from_weights(w, m)?;
        g.warnings = warnings;
        Ok(g)
    }

    /// Builds the graph from a symmetric, zero-diagonal, non-negative `m × m`
    /// weight matrix (row-major).
    pub fn from_weights(weights: Vec<f64>, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(GraphError::Empty);
        }
        if weights.len() != m * m {
            return Err(GraphError::InvalidWeights(format!(
                "{} entries for {m} nodes",
                weights.len()
            )));
        }
        for i in 0..m {
            if weights[i * m + i] != 0.0 {
                return Err(GraphError::InvalidWeights(format!("non-zero diagonal at {i}")));
            }
            for j in 0..m {
                let v = weights[i * m + j];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(GraphError::InvalidWeights(format!("entry ({i},{j}) is {v}")));
                }
                if v != weights[j * m + i] {
                    return Err(GraphError::InvalidWeights(format!(
                        "not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let degree: Vec<f64> = (0..m)
            .map(|i| weights[i * m..(i + 1) * m].iter().sum())
            .collect();
        let mut laplacian = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                laplacian[i * m + j] = if i == j { degree[i] } else { -weights[i * m + j] };
            }
        }
        let inv_sqrt: Vec<f64> = degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut sym = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                sym[i * m + j] = inv_sqrt[i] * laplacian[i * m + j] * inv_sqrt[j];
            }
        }
        // exact symmetry before the eigensolver
        for i in 0..m {
            for j in (i + 1)..m {
                let v = 0.5 * (sym[i * m + j] + sym[j * m + i]);
                sym[i * m + j] = v;
                sym[j * m + i] = v;
            }
        }
        let eig = symmetric_eigen(&sym, m);
        Ok(Self {
            m,
            weights,
            degree,
            laplacian,
            sym_laplacian: sym,
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
            warnings: Vec::new(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.m
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.m + j]
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Combinatorial Laplacian `D − W`, row-major.
    pub fn laplacian(&self) -> &[f64] {
        &self.laplacian
    }

    /// Normalized Laplacian `D^{-1/2}(D − W)D^{-1/2}`, row-major.
    pub fn sym_laplacian(&self) -> &[f64] {
        &self.sym_laplacian
    }

    /// Eigenvalues of the normalized Laplacian, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Row-major; column `k` pairs with `eigenvalues()[k]`.
    pub fn eigenvectors(&self) -> &[f64] {
        &self.eigenvectors
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty graph")
    }

    pub fn warnings(&self) -> &[GraphWarning] {
        &self.warnings
    }

    /// `L̃ = 2·L_sym/λ_max − I` as an `m × m` tensor.
    pub fn scaled_laplacian(&self) -> Result<Tensor> {
        let lmax = self.lambda_max();
        if lmax <= 1e-12 {
            return Err(GraphError::DegenerateSpectrum(lmax));
        }
        let m = self.m;
        let data = (0..m * m)
            .map(|k| {
                let v = 2.0 * self.sym_laplacian[k] / lmax;
                if k / m == k % m {
                    v - 1.0
                } else {
                    v
                }
            })
            .collect();
        Ok(Tensor::new(&[m, m], data)?)
    }

    /// [`AssetGraph::scaled_laplacian`], except that an edgeless graph (a
    /// single asset, or perfectly correlated ones) is rescaled with the bound
    /// `λ_max = 2`, giving `L̃ = −I`. Filters then act per node.
    pub fn filter_laplacian(&self) -> Result<Tensor> {
        if self.lambda_max() > 1e-12 {
            return self.scaled_laplacian();
        }
        Ok(Tensor::identity(self.m).map(|v| -v))
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m {
            return Err(GraphError::LengthMismatch {
                expected: self.m,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Graph Fourier transform `Φᵀx`.
    pub fn fourier(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let m = self.m;
        Ok((0..m)
            .map(|k| (0..m).map(|i| self.eigenvectors[i * m + k] * x[i]).sum())
            .collect())
    }

    /// Inverse transform `Φx̃`.
    pub fn inverse_fourier(&self, xt: &[f64]) -> Result<Vec<f64>> {
        self.check_len(xt)?;
        let m = self.m;
        Ok((0..m)
            .map(|i| (0..m).map(|k| self.eigenvectors[i * m + k] * xt[k]).sum())
            .collect())
    }
}

/// Correlation graph of the panel over rows `t − n_corr + 1 ..= t`.
pub fn build_graph(
    panel: &Panel,
    t: usize,
    n_corr: usize,
    input: CorrelationInput,
) -> Result<AssetGraph> {
    if n_corr < 3 {
        return Err(GraphError::WindowTooShort(n_corr));
    }
    // log returns need one extra row before the window
    let lookback = match input {
        CorrelationInput::Close => n_corr - 1,
        CorrelationInput::LogReturn => n_corr,
    };
    if t >= panel.len() || t < lookback {
        return Err(GraphError::OutOfRange {
            t,
            window: n_corr,
            len: panel.len(),
        });
    }
    let series: Vec<Vec<f64>> = (0..panel.num_assets())
        .map(|a| {
            let start = t + 1 - n_corr;
            (start..=t)
                .map(|k| match input {
                    CorrelationInput::Close => panel.close(a, k),
                    CorrelationInput::LogReturn => (panel.close(a, k) / panel.close(a, k - 1)).ln(),
                })
                .collect()
        })
        .collect();
    AssetGraph::from_series(&series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_negated_series() {
        let x = vec![1.0, 2.0, 4.0, 3.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let g = AssetGraph::from_series(&[x.clone(), x.clone(), neg]).unwrap();
        assert!(g.weight(0, 1).abs() < 1e-15);
        assert!((g.weight(0, 2) - 2.0).abs() < 1e-15);
        assert_eq!(g.weight(2, 2), 0.0);
    }

    #[test]
    fn constant_asset_warns_and_uses_zero_correlation() {
        let g = AssetGraph::from_series(&[vec![1.0, 2.0, 3.0], vec![5.0; 3]]).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.warnings(), &[GraphWarning::ZeroVariance { asset: 1 }]);
    }

    #[test]
    fn degenerate_spectrum_rejected() {
        let g = AssetGraph::from_weights(vec![0.0; 4], 2).unwrap();
        assert!(matches!(
            g.scaled_laplacian(),
            Err(GraphError::DegenerateSpectrum(_))
        ));
        assert!(AssetGraph::from_series(&[vec![1.0, 2.0]]).is_err());
        let lap = g.filter_laplacian().unwrap();
        assert_eq!(lap.data(), &[-1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn fourier_of_eigenvector_is_unit() {
        let w = vec![0.0, 1.0, 0.5, 1.0, 0.0, 2.0, 0.5, 2.0, 0.0];
        let g = AssetGraph::from_weights(w, 3).unwrap();
        let phi1: Vec<f64> = (0..3).map(|i| g.eigenvectors()[i * 3 + 1]).collect();
        let xt = g.fourier(&phi1).unwrap();
        for (k, v) in xt.iter().enumerate() {
            let want = if k == 1 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
        assert!(g.fourier(&[1.0]).is_err());
    }
}
