//! Forward kernels shared by the tape and by plain (non-differentiable) evaluation.

use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    /// Softmax along the given axis.
    Softmax(usize),
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(x: &Tensor, kind: Activation) -> Result<Tensor> {
    activate_unchecked(x, kind)?.checked("activate")
}

pub(crate) fn activate_unchecked(x: &Tensor, kind: Activation) -> Result<Tensor> {
    let out = match kind {
        Activation::Tanh => x.map(f64::tanh),
        Activation::Relu => x.map(|v| v.max(0.0)),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Softmax(axis) => softmax(x, axis)?,
    };
    Ok(out)
}

/// (outer, axis length, inner) decomposition used by axis-wise kernels.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(TensorError::Invalid {
            op: "softmax",
            msg: format!("axis {axis} out of range for shape {:?}", x.shape()),
        });
    }
    let (outer, len, inner) = axis_split(x.shape(), axis);
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| src[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..len {
                let e = (src[at(k)] - max).exp();
                out[at(k)] = e;
                total += e;
            }
            for k in 0..len {
                out[at(k)] /= total;
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    matmul_unchecked(a, b)?.checked("matmul")
}

pub(crate) fn matmul_unchecked(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, m], out))
}

/// Dimensions of a 1×k convolution: (in channels, rows, in length, out channels, k, out length).
pub(crate) fn conv_dims(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<[usize; 6]> {
    let mismatch = || TensorError::ShapeMismatch {
        op: "conv1xk",
        left: input.shape().to_vec(),
        right: kernel.shape().to_vec(),
    };
    if input.rank() != 3 || kernel.rank() != 3 {
        return Err(mismatch());
    }
    let (c, rows, len) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (o, kc, k) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if kc != c || k == 0 || k > len {
        return Err(mismatch());
    }
    if bias.shape() != [o] {
        return Err(TensorError::ShapeMismatch {
            op: "conv1xk bias",
            left: bias.shape().to_vec(),
            right: vec![o],
        });
    }
    Ok([c, rows, len, o, k, len - k + 1])
}

/// Valid-padding convolution with a 1×k kernel sliding along the last axis.
///
/// `input` is `[C, M, T]`, `kernel` is `[O, C, k]`, `bias` is `[O]`; the result
/// is `[O, M, T - k + 1]` with each row `m` convolved independently.
pub fn conv1xk(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    conv1xk_unchecked(input, kernel, bias)?.checked("conv1xk")
}

pub(crate) fn conv1xk_unchecked(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [c, rows, len, o, k, out_len] = conv_dims(input, kernel, bias)?;
    let (x, w) = (input.data(), kernel.data());
    let mut out = vec![0.0; o * rows * out_len];
    for oc in 0..o {
        let b = bias.data()[oc];
        for r in 0..rows {
            let dst = &mut out[(oc * rows + r) * out_len..(oc * rows + r + 1) * out_len];
            dst.iter_mut().for_each(|v| *v = b);
            for ic in 0..c {
                let src = &x[(ic * rows + r) * len..(ic * rows + r + 1) * len];
                let taps = &w[(oc * c + ic) * k..(oc * c + ic + 1) * k];
                for (t, d) in dst.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, &tap) in taps.iter().enumerate() {
                        acc += tap * src[t + j];
                    }
                    *d += acc;
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![o, rows, out_len], out))
}

pub(crate) fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or(TensorError::Invalid {
        op: "concat",
        msg: "no inputs".into(),
    })?;
    if axis >= first.rank() {
        return Err(TensorError::Invalid {
            op: "concat",
            msg: format!("axis {axis} out of range for shape {:?}", first.shape()),
        });
    }
    for p in parts {
        let same = p.rank() == first.rank()
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !same {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                left: first.shape().to_vec(),
                right: p.shape().to_vec(),
            });
        }
    }
    let (outer, _, inner) = axis_split(first.shape(), axis);
    let total: usize = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            data.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, data))
}

pub(crate) fn slice(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= x.rank() || start + len > x.shape()[axis] || len == 0 {
        return Err(TensorError::Invalid {
            op: "slice",
            msg: format!(
                "range {start}..{} on axis {axis} of shape {:?}",
                start + len,
                x.shape()
            ),
        });
    }
    let (outer, full, inner) = axis_split(x.shape(), axis);
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * full + start) * inner;
        data.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, data))
}

/// `[a, b, c]` → `[a, c, b]`.
pub(crate) fn swap_last2(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(TensorError::Invalid {
            op: "swap_last2",
            msg: format!("expected rank 3, got {:?}", x.shape()),
        });
    }
    let (a, b, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let src = x.data();
    let mut data = vec![0.0; src.len()];
    for i in 0..a {
        for j in 0..b {
            for k in 0..c {
                data[(i * c + k) * b + j] = src[(i * b + j) * c + k];
            }
        }
    }
    Ok(Tensor::from_parts(vec![a, c, b], data))
}
