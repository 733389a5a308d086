//! Forward and backward passes for the layer primitives.
//!
//! Every operation comes as a `*_forward` / `*_backward` pair. Backward
//! functions take the saved forward inputs plus the upstream gradient and
//! return gradients for each differentiable input. There is no tape; the
//! network structs own the call order.

use crate::error::{Error, Result};
use crate::diffmath::Tensor;

/// `output_i = sum_j W[i][j] * x[j] + b[i]` for `W` of shape `[n_out, n_in]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n_out, n_in) = dense_dims(input, weights, bias)?;
    let x = input.data();
    let w = weights.data();
    let mut out = vec![0.0; n_out];
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * n_in..(i + 1) * n_in];
        *o = row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + bias.data()[i];
    }
    Ok(Tensor::from_vec(out))
}

/// Gradients of a dense layer: `(d_input, d_weights, d_bias)`.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let n_in = input.len();
    let n_out = upstream.len();
    if weights.shape() != [n_out, n_in] {
        return Err(Error::shape(
            "dense_backward",
            format!("[{}, {}]", n_out, n_in),
            format!("{:?}", weights.shape()),
        ));
    }
    let x = input.data();
    let w = weights.data();
    let up = upstream.data();

    let mut d_input = vec![0.0; n_in];
    let mut d_weights = vec![0.0; n_out * n_in];
    for i in 0..n_out {
        let g = up[i];
        let row = &w[i * n_in..(i + 1) * n_in];
        let d_row = &mut d_weights[i * n_in..(i + 1) * n_in];
        for j in 0..n_in {
            d_input[j] += g * row[j];
            d_row[j] = g * x[j];
        }
    }
    Ok((
        Tensor::from_vec(d_input),
        Tensor::new(vec![n_out, n_in], d_weights)?,
        Tensor::from_vec(up.to_vec()),
    ))
}

fn dense_dims(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    if weights.shape().len() != 2 {
        return Err(Error::shape("dense", "2-D weights", format!("{:?}", weights.shape())));
    }
    let n_out = weights.shape()[0];
    let n_in = weights.shape()[1];
    if input.len() != n_in || bias.len() != n_out {
        return Err(Error::shape(
            "dense",
            format!("input[{}], bias[{}]", n_in, n_out),
            format!("input[{}], bias[{}]", input.len(), bias.len()),
        ));
    }
    Ok((n_out, n_in))
}

/// Dilated causal 1-D convolution.
///
/// `input` is `[channels_in, length]`, `kernel` is `[channels_out, channels_in, k]`.
/// Tap `i` of the kernel multiplies `input[t - i*dilation]`, with zero padding
/// on the left, so `output[t]` depends only on positions `<= t` and the output
/// length equals the input length.
pub fn causal_conv1d_forward(input: &Tensor, kernel: &Tensor, dilation: usize) -> Result<Tensor> {
    let (c_out, c_in, k, len) = conv_dims(input, kernel, dilation)?;
    let x = input.data();
    let w = kernel.data();
    let mut out = vec![0.0; c_out * len];
    for o in 0..c_out {
        let out_row = &mut out[o * len..(o + 1) * len];
        for c in 0..c_in {
            let in_row = &x[c * len..(c + 1) * len];
            for i in 0..k {
                let shift = i * dilation;
                if shift >= len {
                    break;
                }
                let wv = w[(o * c_in + c) * k + i];
                if wv == 0.0 {
                    continue;
                }
                for (dst, src) in out_row[shift..].iter_mut().zip(&in_row[..len - shift]) {
                    *dst += wv * src;
                }
            }
        }
    }
    Ok(Tensor::new(vec![c_out, len], out)?)
}

/// Gradients of the causal convolution: `(d_input, d_kernel)`.
pub fn causal_conv1d_backward(
    input: &Tensor,
    kernel: &Tensor,
    dilation: usize,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (c_out, c_in, k, len) = conv_dims(input, kernel, dilation)?;
    if upstream.shape() != [c_out, len] {
        return Err(Error::shape(
            "causal_conv1d_backward",
            format!("[{}, {}]", c_out, len),
            format!("{:?}", upstream.shape()),
        ));
    }
    let x = input.data();
    let w = kernel.data();
    let up = upstream.data();
    let mut d_input = vec![0.0; c_in * len];
    let mut d_kernel = vec![0.0; c_out * c_in * k];
    for o in 0..c_out {
        let up_row = &up[o * len..(o + 1) * len];
        for c in 0..c_in {
            let in_row = &x[c * len..(c + 1) * len];
            let di_row = &mut d_input[c * len..(c + 1) * len];
            for i in 0..k {
                let shift = i * dilation;
                if shift >= len {
                    break;
                }
                let wv = w[(o * c_in + c) * k + i];
                let mut acc = 0.0;
                for ((dst, src_up), src_in) in di_row[..len - shift]
                    .iter_mut()
                    .zip(&up_row[shift..])
                    .zip(&in_row[..len - shift])
                {
                    *dst += wv * src_up;
                    acc += src_up * src_in;
                }
                d_kernel[(o * c_in + c) * k + i] = acc;
            }
        }
    }
    Ok((
        Tensor::new(vec![c_in, len], d_input)?,
        Tensor::new(vec![c_out, c_in, k], d_kernel)?,
    ))
}

fn conv_dims(input: &Tensor, kernel: &Tensor, dilation: usize) -> Result<(usize, usize, usize, usize)> {
    if dilation < 1 {
        return Err(Error::invalid("dilation", "must be >= 1"));
    }
    if input.shape().len() != 2 || kernel.shape().len() != 3 {
        return Err(Error::shape(
            "causal_conv1d",
            "input [C,L], kernel [O,C,K]",
            format!("input {:?}, kernel {:?}", input.shape(), kernel.shape()),
        ));
    }
    let c_in = input.shape()[0];
    let len = input.shape()[1];
    let c_out = kernel.shape()[0];
    let k = kernel.shape()[2];
    if kernel.shape()[1] != c_in {
        return Err(Error::shape(
            "causal_conv1d",
            format!("kernel channels {}", c_in),
            format!("{}", kernel.shape()[1]),
        ));
    }
    if k == 0 {
        return Err(Error::invalid("kernel", "kernel size must be >= 1"));
    }
    Ok((c_out, c_in, k, len))
}

/// Elementwise `max(0, x)`. The subgradient at 0 is taken as 0.
pub fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if !input.same_shape(upstream) {
        return Err(Error::shape(
            "relu_backward",
            format!("{:?}", input.shape()),
            format!("{:?}", upstream.shape()),
        ));
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
        .collect();
    Ok(Tensor::new(input.shape().to_vec(), data)?)
}

/// Mean over the time axis of a `[channels, length]` tensor.
pub fn global_mean_pool_forward(input: &Tensor) -> Result<Tensor> {
    if input.shape().len() != 2 {
        return Err(Error::shape("global_mean_pool", "[C, L]", format!("{:?}", input.shape())));
    }
    let (c, len) = (input.shape()[0], input.shape()[1]);
    if len == 0 {
        return Err(Error::EmptyInput {
            what: "global_mean_pool input".into(),
        });
    }
    let x = input.data();
    let out = (0..c)
        .map(|i| x[i * len..(i + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    Ok(Tensor::from_vec(out))
}

pub fn global_mean_pool_backward(input_shape: &[usize], upstream: &Tensor) -> Result<Tensor> {
    let (c, len) = (input_shape[0], input_shape[1]);
    if upstream.len() != c {
        return Err(Error::shape("global_mean_pool_backward", format!("[{}]", c), format!("{:?}", upstream.shape())));
    }
    let mut out = vec![0.0; c * len];
    for i in 0..c {
        let g = upstream.data()[i] / len as f64;
        out[i * len..(i + 1) * len].iter_mut().for_each(|v| *v = g);
    }
    Ok(Tensor::new(vec![c, len], out)?)
}

/// Scale a vector to unit L2 norm. Errors on a zero-norm input.
pub fn l2_normalize_forward(input: &Tensor) -> Result<Tensor> {
    let norm = l2_norm(input.data());
    if norm == 0.0 {
        return Err(Error::ZeroNorm {
            op: "l2_normalize".into(),
        });
    }
    let data = input.data().iter().map(|v| v / norm).collect();
    Ok(Tensor::new(input.shape().to_vec(), data)?)
}

/// Backward of `y = x / ||x||`: projects the upstream gradient onto the
/// tangent of the unit sphere and rescales.
pub fn l2_normalize_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let norm = l2_norm(input.data());
    if norm == 0.0 {
        return Err(Error::ZeroNorm {
            op: "l2_normalize_backward".into(),
        });
    }
    let y: Vec<f64> = input.data().iter().map(|v| v / norm).collect();
    let dot: f64 = y.iter().zip(upstream.data()).map(|(a, b)| a * b).sum();
    let data = upstream
        .data()
        .iter()
        .zip(&y)
        .map(|(g, yi)| (g - yi * dot) / norm)
        .collect();
    Ok(Tensor::new(input.shape().to_vec(), data)?)
}

/// Cosine similarity of two equal-length vectors, in `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    let (s, _, _) = cosine_parts(a, b)?;
    Ok(s.clamp(-1.0, 1.0))
}

/// Cosine similarity plus gradients with respect to both vectors.
pub fn cosine_similarity_backward(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (s, na, nb) = cosine_parts(a, b)?;
    let grad_a: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| bi / (na * nb) - s * ai / (na * na))
        .collect();
    let grad_b: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| ai / (na * nb) - s * bi / (nb * nb))
        .collect();
    Ok((s.clamp(-1.0, 1.0), grad_a, grad_b))
}

fn cosine_parts(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(
            "cosine_similarity",
            format!("two equal nonempty lengths"),
            format!("{} vs {}", a.len(), b.len()),
        ));
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm {
            op: "cosine_similarity".into(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb), na, nb))
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn dense_identity_map() {
        let x = Tensor::from_vec(vec![3.0, -1.5]);
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::from_vec(vec![0.0, 0.0]);
        let y = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn dense_hand_case() {
        // x=[1,2], W=[[1,1]], b=[0.5] -> [3.5]
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let w = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::from_vec(vec![0.5]);
        let y = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[3.5]);
    }

    #[test]
    fn dense_shape_mismatch() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let w = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::from_vec(vec![0.0]);
        assert!(dense_forward(&x, &w, &b).is_err());
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let y = causal_conv1d_forward(&x, &k, 1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_pure_delay() {
        // kernel [0, 1]: tap 1 reads input[t-1], so the output is a one-step
        // delay with a zero pad in front.
        let x = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = causal_conv1d_forward(&x, &k, 1).unwrap();
        assert_eq!(y.data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn conv_is_causal() {
        // Perturbing position t must leave outputs at positions < t unchanged.
        let base = Tensor::new(vec![1, 8], vec![0.5; 8]).unwrap();
        let k = Tensor::new(vec![2, 1, 3], vec![0.3, -0.2, 0.7, 1.1, 0.4, -0.9]).unwrap();
        for dilation in [1, 2, 3] {
            let y0 = causal_conv1d_forward(&base, &k, dilation).unwrap();
            for t in 0..8 {
                let mut pert = base.clone();
                pert.data_mut()[t] += 1.0;
                let y1 = causal_conv1d_forward(&pert, &k, dilation).unwrap();
                for o in 0..2 {
                    for s in 0..t {
                        assert_eq!(y0.data()[o * 8 + s], y1.data()[o * 8 + s]);
                    }
                }
            }
        }
    }

    #[test]
    fn relu_zero_subgradient() {
        let x = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        let up = Tensor::from_vec(vec![1.0, 1.0, 1.0]);
        let g = relu_backward(&x, &up).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn mean_pool_means_rows() {
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0]).unwrap();
        let y = global_mean_pool_forward(&x).unwrap();
        assert_eq!(y.data(), &[2.0, 20.0]);
    }

    #[test]
    fn l2_normalize_unit_norm() {
        let x = Tensor::from_vec(vec![3.0, 4.0]);
        let y = l2_normalize_forward(&x).unwrap();
        assert!(close(l2_norm(y.data()), 1.0, 1e-12));
        assert!(close(y.data()[0], 0.6, 1e-12));
    }

    #[test]
    fn l2_normalize_zero_vector_errors() {
        let x = Tensor::from_vec(vec![0.0, 0.0]);
        assert!(matches!(l2_normalize_forward(&x), Err(Error::ZeroNorm { .. })));
    }

    #[test]
    fn cosine_hand_cases() {
        let v = [0.3, -1.2, 4.0];
        assert!(close(cosine_similarity(&v, &v).unwrap(), 1.0, 1e-12));
        assert!(close(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0, 1e-12));
        // cosine([1,1],[1,0]) = 1/sqrt(2)
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(close(c, std::f64::consts::FRAC_1_SQRT_2, 1e-12));
    }

    #[test]
    fn cosine_zero_norm_errors() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm { .. })
        ));
    }
}
