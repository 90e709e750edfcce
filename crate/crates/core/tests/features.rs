mod common;

use common::{max_grad_error, random_tensor};
use graphfolio::features::{
    first_feature_row, normalize_window_with, rsae_train, Rsae, RsaeConfig, ZeroPolicy,
};
use graphfolio::market_data::synth::{generate, SynthConfig};
use graphfolio::market_data::{compute_indicators, IndicatorParams, Panel};
use graphfolio::tensor::{ParamId, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rows_near_one(n: usize, seed: u64) -> Tensor {
    random_tensor(&[n, 11], 0.8, 1.2, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn reconstruction_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = RsaeConfig::default();
    let model = Rsae::new(&mut rng);
    let rows = rows_near_one(6, 6);
    let params: Vec<Tensor> = model.params().iter().map(|(_, _, t)| t.clone()).collect();
    let (_, analytic) = model.loss_and_grads(&rows, &cfg).unwrap();
    let err = max_grad_error(&params, &analytic, |ps| {
        let mut m = model.clone();
        m.params_mut().unflatten(&ps.iter().flat_map(|t| t.data().to_vec()).collect::<Vec<_>>()).unwrap();
        m.loss(&rows, &cfg).unwrap()
    });
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn indicator_inputs_reach_the_loss_only_through_the_encoder() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = RsaeConfig::default();
    let mut model = Rsae::new(&mut rng);
    // zero the first-layer weights reading input 5 (an indicator)
    let w0 = model.params().get(ParamId(0)).clone();
    let mut data = w0.data().to_vec();
    for j in 0..8 {
        data[5 * 8 + j] = 0.0;
    }
    model
        .params_mut()
        .set(ParamId(0), Tensor::new(w0.shape(), data).unwrap())
        .unwrap();
    let rows = rows_near_one(4, 8);
    let base = model.loss(&rows, &cfg).unwrap();
    let mut bumped = rows.data().to_vec();
    for r in 0..4 {
        bumped[r * 11 + 5] += 3.0;
    }
    let bumped = Tensor::new(&[4, 11], bumped).unwrap();
    assert_eq!(model.loss(&bumped, &cfg).unwrap(), base);
    let (_, grads) = model.loss_and_grads(&rows, &cfg).unwrap();
    assert_eq!(grads.len(), model.params().len());
    // the decoder output is three wide regardless of the input
    assert_eq!(model.reconstruct(&rows, &cfg).unwrap().shape(), &[4, 3]);
}

#[test]
fn encoding_is_pointwise_in_time() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = RsaeConfig::default();
    let model = Rsae::new(&mut rng);
    let rows = rows_near_one(5, 10);
    let all = model.encode(&rows, &cfg).unwrap();
    for r in 0..5 {
        let one = Tensor::new(&[1, 11], rows.data()[r * 11..(r + 1) * 11].to_vec()).unwrap();
        let z = model.encode(&one, &cfg).unwrap();
        assert_eq!(z.data(), &all.data()[r * 3..(r + 1) * 3]);
    }
}

#[test]
fn training_on_market_windows() {
    let series = generate(&SynthConfig {
        assets: 3,
        days: 160,
        volatility: vec![0.015],
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let panel = Panel::align(&series, series[0].dates()[0], *series[0].dates().last().unwrap()).unwrap();
    let inds: Vec<_> = panel
        .series()
        .iter()
        .map(|s| compute_indicators(s, &IndicatorParams::default()).unwrap())
        .collect();
    let n = 10;
    let first = first_feature_row(&inds) + n - 1;
    let windows: Vec<_> = (first..panel.len())
        .step_by(n)
        .map(|t| normalize_window_with(&panel, &inds, t, n, ZeroPolicy::Neutral).unwrap())
        .collect();
    let cfg = RsaeConfig {
        batch_size: 32,
        ..RsaeConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (model, report) = rsae_train(Rsae::new(&mut rng), &windows, 60, &cfg, &mut rng).unwrap();
    let l = &report.epoch_losses;
    assert_eq!(l.len(), 61);
    assert!(l[60] < 0.1 * l[0], "loss {} -> {}", l[0], l[60]);
    // non-increasing up to stochastic noise
    for k in 1..l.len() {
        assert!(l[k] <= l[k - 1] * 1.5 + 1e-6, "epoch {k}: {} -> {}", l[k - 1], l[k]);
    }
    let z = model.encode_window(&windows[0], &cfg).unwrap();
    assert_eq!(z.shape(), &[3, 3, n]);

    // encode-then-decode of a training row lands near its price ratios
    let rows = windows[0].rows();
    let recon = model.reconstruct(&rows, &cfg).unwrap();
    for r in 0..rows.shape()[0] {
        for c in 0..3 {
            assert!((recon.get(&[r, c]) - rows.get(&[r, c])).abs() < 0.05);
        }
    }
    // retraining with the same seed is bit-identical
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (again, _) = rsae_train(Rsae::new(&mut rng), &windows, 60, &cfg, &mut rng).unwrap();
    assert_eq!(again, model);
}
