mod common;

use common::{max_grad_error, random_tensor};
use graphfolio::graph_conv::{
    cheb_apply, gcn_forward, hop_distances, k_locality_check, AssetGraph,
};
use graphfolio::tensor::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(m: usize, density: f64, rng: &mut impl Rng) -> AssetGraph {
    loop {
        let mut w = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                if rng.random_bool(density) {
                    let v = rng.random_range(0.05..2.0);
                    w[i * m + j] = v;
                    w[j * m + i] = v;
                }
            }
        }
        if w.iter().any(|v| *v > 0.0) {
            return AssetGraph::from_weights(w, m).unwrap();
        }
    }
}

/// `Φ · diag(Σ θ_k cos(k·acos λ̃)) · Φᵀ · x`, with the polynomials evaluated
/// through the trigonometric identity rather than the recurrence.
fn dense_filter(g: &AssetGraph, x: &[f64], theta: &[f64]) -> Vec<f64> {
    let m = g.num_nodes();
    let phi = g.eigenvectors();
    let lmax = g.lambda_max();
    let gain: Vec<f64> = g
        .eigenvalues()
        .iter()
        .map(|&l| {
            let lt = (2.0 * l / lmax - 1.0).clamp(-1.0, 1.0);
            theta
                .iter()
                .enumerate()
                .map(|(k, t)| t * (k as f64 * lt.acos()).cos())
                .sum()
        })
        .collect();
    let xt: Vec<f64> = (0..m)
        .map(|k| (0..m).map(|i| phi[i * m + k] * x[i]).sum())
        .collect();
    (0..m)
        .map(|i| (0..m).map(|k| phi[i * m + k] * gain[k] * xt[k]).sum())
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

#[test]
fn recurrence_matches_dense_spectral_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let m = rng.random_range(2..=12);
        let g = random_graph(m, 0.6, &mut rng);
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        for k in 1..=8 {
            let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = cheb_apply(&g, &x, &theta).unwrap();
            let d = dense_filter(&g, &x, &theta);
            assert!(max_abs_diff(&y, &d) < 1e-8, "m={m} K={k}");
        }
    }
}

#[test]
fn filtering_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let g = random_graph(7, 0.5, &mut rng);
    let theta = [0.3, -0.2, 0.8, 0.1];
    let x: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (a, b) = (1.7, -0.6);
    let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
    let fx = cheb_apply(&g, &x, &theta).unwrap();
    let fy = cheb_apply(&g, &y, &theta).unwrap();
    let fm = cheb_apply(&g, &mix, &theta).unwrap();
    let want: Vec<f64> = fx.iter().zip(&fy).map(|(p, q)| a * p + b * q).collect();
    assert!(max_abs_diff(&fm, &want) < 1e-10);
}

#[test]
fn spectral_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let m = rng.random_range(2..=12);
        let g = random_graph(m, 0.7, &mut rng);
        let phi = g.eigenvectors();
        for a in 0..m {
            for b in 0..m {
                let dot: f64 = (0..m).map(|i| phi[i * m + a] * phi[i * m + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
        }
        for &l in g.eigenvalues() {
            assert!((-1e-9..=2.0 + 1e-9).contains(&l), "eigenvalue {l}");
        }
        for i in 0..m {
            let row: f64 = g.laplacian()[i * m..(i + 1) * m].iter().sum();
            assert!(row.abs() < 1e-9);
        }
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let xt = g.fourier(&x).unwrap();
        let back = g.inverse_fourier(&xt).unwrap();
        assert!(max_abs_diff(&back, &x) < 1e-8);
        let n1: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n2: f64 = xt.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n1 - n2).abs() < 1e-9);
    }
}

#[test]
fn connected_graph_has_zero_eigenvalue() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let g = random_graph(6, 1.0, &mut rng);
    assert!(g.eigenvalues()[0].abs() < 1e-9);
}

#[test]
fn correlation_weights_match_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let n = 10;
    let series: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..n).map(|_| rng.random_range(50.0..150.0)).collect())
        .collect();
    let g = AssetGraph::from_series(&series).unwrap();
    let nf = n as f64;
    let stats = |x: &[f64]| {
        let s: f64 = x.iter().sum();
        let ss: f64 = x.iter().map(|v| v * v).sum();
        (s, ((ss - s * s / nf) / (nf - 1.0)).sqrt())
    };
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                assert_eq!(g.weight(i, j), 0.0);
                continue;
            }
            let (si, sdi) = stats(&series[i]);
            let (sj, sdj) = stats(&series[j]);
            let sij: f64 = series[i].iter().zip(&series[j]).map(|(a, b)| a * b).sum();
            let cov = (sij - si * sj / nf) / (nf - 1.0);
            let corr = cov / (sdi * sdj);
            assert!((g.weight(i, j) - (1.0 - corr)).abs() < 1e-12);
        }
    }
}

#[test]
fn graph_rebuild_is_deterministic() {
    let x: Vec<Vec<f64>> = (0..4)
        .map(|a| (0..10).map(|t| ((a * 7 + t * 3) % 11) as f64 + 1.0).collect())
        .collect();
    let g1 = AssetGraph::from_series(&x).unwrap();
    let g2 = AssetGraph::from_series(&x).unwrap();
    assert_eq!(g1, g2);
}

#[test]
fn sparse_graph_locality() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..20 {
        let g = random_graph(10, 0.2, &mut rng);
        for k in 1..=4 {
            let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let report = k_locality_check(&g, &theta, 1e-12, 1e-9).unwrap();
            assert!(report.holds(), "K={k}: {:?}", report.violations);
        }
        // BFS sanity: every reachable node's distance is one more than some neighbour's
        let d = hop_distances(&g, 0, 1e-12);
        for j in 1..10 {
            if let Some(dj) = d[j] {
                assert!((0..10).any(|i| g.weight(i, j) > 0.0 && d[i] == Some(dj - 1)));
            }
        }
    }
}

#[test]
fn gcn_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let m = rng.random_range(2..=4);
        let n = rng.random_range(1..=8);
        let order = rng.random_range(1..=3);
        let (c_in, c_out) = (3, 2);
        let g = random_graph(m, 0.8, &mut rng);
        let lap = g.scaled_laplacian().unwrap();
        let x = random_tensor(&[c_in, m, n], -1.0, 1.0, &mut rng);
        let theta = random_tensor(&[c_out, c_in * order], -1.0, 1.0, &mut rng);
        let probe = random_tensor(&[c_out, m, n], -1.0, 1.0, &mut rng);
        let loss = |ps: &[Tensor]| -> (f64, Vec<Tensor>) {
            let mut gr = Graph::new();
            let xv = gr.variable(ps[0].clone());
            let tv = gr.variable(ps[1].clone());
            let y = gcn_forward(&mut gr, xv, &lap, tv, order).unwrap();
            let pv = gr.constant(probe.clone());
            let prod = gr.mul(y, pv).unwrap();
            let l = gr.sum(prod);
            let grads = gr.backward(l).unwrap();
            (gr.value(l).item().unwrap(), vec![grads.wrt(xv), grads.wrt(tv)])
        };
        let params = vec![x, theta];
        let (_, analytic) = loss(&params);
        let err = max_grad_error(&params, &analytic, |ps| loss(ps).0);
        assert!(err < 1e-4, "relative error {err}");
    }
}
