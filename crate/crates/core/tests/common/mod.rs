#![allow(dead_code)]

use graphfolio::tensor::Tensor;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// Magnitude below which gradient entries are compared absolutely; central
/// differences with h = 1e-5 carry roughly 1e-10 of truncation and rounding
/// error, far below this.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Largest relative error between `analytic` gradients and central finite
/// differences of `loss` around `params`.
pub fn max_grad_error(
    params: &[Tensor],
    analytic: &[Tensor],
    loss: impl Fn(&[Tensor]) -> f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len());
    let mut worst: f64 = 0.0;
    for (p, (param, grad)) in params.iter().zip(analytic).enumerate() {
        assert_eq!(param.shape(), grad.shape(), "gradient shape for parameter {p}");
        for i in 0..param.len() {
            let bump = |delta: f64| {
                let mut data = param.data().to_vec();
                data[i] += delta;
                let mut ps = params.to_vec();
                ps[p] = Tensor::new(param.shape(), data).unwrap();
                loss(&ps)
            };
            let numeric = (bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP);
            let e = rel_err(grad.data()[i], numeric);
            if e > worst {
                worst = e;
            }
        }
    }
    worst
}

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}
