use super::Tensor;
use crate::par::{axpy, dot, for_each_chunk_mut, map_range};
use crate::{Error, Result};
use rand::Rng;

/// Learnable parameters of a 1-D convolution: `weight` is
/// `(C_out, C_in, K)`, `bias` is `(C_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        let (c_out, _, kernel) = weight.dims3("conv params")?;
        if bias.shape() != [c_out] {
            return Err(Error::shape(
                "conv params",
                format!("bias {:?} for {c_out} output channels", bias.shape()),
            ));
        }
        if stride == 0 || kernel == 0 {
            return Err(Error::size("conv params", "stride and kernel must be positive"));
        }
        Ok(ConvParams {
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// Weights and biases uniform in `±1/sqrt(C_in * K)`.
    pub fn init_uniform<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((c_in * kernel) as f64).sqrt();
        let weight = Tensor::uniform(&[c_out, c_in, kernel], bound, rng);
        let bias = Tensor::uniform(&[c_out], bound, rng);
        ConvParams {
            weight,
            bias,
            stride,
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_len(&self, l_in: usize) -> Result<usize> {
        conv_output_len(l_in, self.kernel_size(), self.stride, self.padding)
    }
}

/// `floor((L_in + 2p - K) / s) + 1`, or an error when the padded input is
/// shorter than the kernel.
pub fn conv_output_len(l_in: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = l_in + 2 * padding;
    if padded < kernel || stride == 0 {
        return Err(Error::size(
            "conv1d",
            format!("input length {l_in} with padding {padding} is shorter than kernel {kernel}"),
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Geometry shared by forward and backward.
///
/// The zero-padded input of every channel is split into `stride` phases so
/// that tap `q` of output position `t` reads `phase[q % s][t + q / s]`. This
/// turns the strided direct sum into contiguous slices.
struct Geometry {
    n: usize,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    l_in: usize,
    l_out: usize,
    phase_len: usize,
}

impl Geometry {
    fn new(input: &Tensor, params: &ConvParams) -> Result<Self> {
        let (n, c_in, l_in) = input.dims3("conv1d")?;
        if c_in != params.in_channels() {
            return Err(Error::shape(
                "conv1d",
                format!(
                    "input has {c_in} channels, weight expects {}",
                    params.in_channels()
                ),
            ));
        }
        let l_out = params.output_len(l_in)?;
        let padded = l_in + 2 * params.padding;
        Ok(Geometry {
            n,
            c_in,
            c_out: params.out_channels(),
            kernel: params.kernel_size(),
            stride: params.stride,
            padding: params.padding,
            l_in,
            l_out,
            phase_len: padded.div_ceil(params.stride),
        })
    }

    fn phased_len(&self) -> usize {
        self.c_in * self.stride * self.phase_len
    }

    #[inline]
    fn tap_offset(&self, k: usize, q: usize) -> usize {
        (k * self.stride + q % self.stride) * self.phase_len + q / self.stride
    }

    fn split_phases(&self, sample: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for k in 0..self.c_in {
            let row = &sample[k * self.l_in..(k + 1) * self.l_in];
            for (p, &v) in row.iter().enumerate() {
                let padded = p + self.padding;
                let r = padded % self.stride;
                out[(k * self.stride + r) * self.phase_len + padded / self.stride] = v;
            }
        }
    }

    fn merge_phases(&self, phased: &[f64], out: &mut [f64]) {
        for k in 0..self.c_in {
            let row = &mut out[k * self.l_in..(k + 1) * self.l_in];
            for (p, v) in row.iter_mut().enumerate() {
                let padded = p + self.padding;
                let r = padded % self.stride;
                *v = phased[(k * self.stride + r) * self.phase_len + padded / self.stride];
            }
        }
    }
}

/// Direct-summation 1-D convolution over a `(N, C_in, L_in)` batch.
///
/// `out[i, j, t] = b[j] + sum_k sum_q w[j, k, q] * x_pad[i, k, t*s + q]`
pub fn conv1d_forward(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    let g = Geometry::new(input, params)?;
    let w = params.weight.data();
    let b = params.bias.data();
    let x = input.data();
    let mut out = vec![0.0; g.n * g.c_out * g.l_out];
    for_each_chunk_mut(&mut out, g.c_out * g.l_out, |i, sample_out| {
        let mut phased = vec![0.0; g.phased_len()];
        g.split_phases(&x[i * g.c_in * g.l_in..(i + 1) * g.c_in * g.l_in], &mut phased);
        for (j, row) in sample_out.chunks_exact_mut(g.l_out).enumerate() {
            row.fill(b[j]);
            for k in 0..g.c_in {
                for q in 0..g.kernel {
                    let wv = w[(j * g.c_in + k) * g.kernel + q];
                    let off = g.tap_offset(k, q);
                    axpy(wv, &phased[off..off + g.l_out], row);
                }
            }
        }
    });
    Tensor::from_vec(&[g.n, g.c_out, g.l_out], out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv1d_backward(input: &Tensor, params: &ConvParams, grad_out: &Tensor) -> Result<ConvGrads> {
    let (gi, gw, gb) = conv1d_backward_impl(input, params, grad_out, true)?;
    Ok(ConvGrads {
        input: gi.expect("input gradient requested"),
        weight: gw,
        bias: gb,
    })
}

/// Backward pass; the input gradient is skipped when `want_input` is false
/// (first layer of a network).
pub(crate) fn conv1d_backward_impl(
    input: &Tensor,
    params: &ConvParams,
    grad_out: &Tensor,
    want_input: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let g = Geometry::new(input, params)?;
    if grad_out.shape() != [g.n, g.c_out, g.l_out] {
        return Err(Error::shape(
            "conv1d_backward",
            format!(
                "grad_out {:?}, forward output would be {:?}",
                grad_out.shape(),
                [g.n, g.c_out, g.l_out]
            ),
        ));
    }
    let x = input.data();
    let go = grad_out.data();
    let w = params.weight.data();

    let mut phased = vec![0.0; g.n * g.phased_len()];
    for_each_chunk_mut(&mut phased, g.phased_len(), |i, buf| {
        g.split_phases(&x[i * g.c_in * g.l_in..(i + 1) * g.c_in * g.l_in], buf);
    });

    let mut grad_w = vec![0.0; g.c_out * g.c_in * g.kernel];
    for_each_chunk_mut(&mut grad_w, g.c_in * g.kernel, |j, gw| {
        for i in 0..g.n {
            let g_row = &go[(i * g.c_out + j) * g.l_out..][..g.l_out];
            let buf = &phased[i * g.phased_len()..(i + 1) * g.phased_len()];
            for k in 0..g.c_in {
                for q in 0..g.kernel {
                    let off = g.tap_offset(k, q);
                    gw[k * g.kernel + q] += dot(g_row, &buf[off..off + g.l_out]);
                }
            }
        }
    });

    let grad_b = map_range(g.c_out, |j| {
        (0..g.n)
            .map(|i| go[(i * g.c_out + j) * g.l_out..][..g.l_out].iter().sum::<f64>())
            .sum::<f64>()
    });

    let grad_in = if want_input {
        let mut gin = vec![0.0; g.n * g.c_in * g.l_in];
        for_each_chunk_mut(&mut gin, g.c_in * g.l_in, |i, sample_grad| {
            let mut buf = vec![0.0; g.phased_len()];
            for j in 0..g.c_out {
                let g_row = &go[(i * g.c_out + j) * g.l_out..][..g.l_out];
                for k in 0..g.c_in {
                    for q in 0..g.kernel {
                        let wv = w[(j * g.c_in + k) * g.kernel + q];
                        let off = g.tap_offset(k, q);
                        axpy(wv, g_row, &mut buf[off..off + g.l_out]);
                    }
                }
            }
            g.merge_phases(&buf, sample_grad);
        });
        Some(Tensor::from_vec(&[g.n, g.c_in, g.l_in], gin)?)
    } else {
        None
    };

    Ok((
        grad_in,
        Tensor::from_vec(&[g.c_out, g.c_in, g.kernel], grad_w)?,
        Tensor::from_vec(&[g.c_out], grad_b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(w: Vec<f64>, shape: [usize; 3], b: Vec<f64>, stride: usize, pad: usize) -> ConvParams {
        let c_out = shape[0];
        ConvParams::new(
            Tensor::from_vec(&shape, w).unwrap(),
            Tensor::from_vec(&[c_out], b).unwrap(),
            stride,
            pad,
        )
        .unwrap()
    }

    /// Literal transcription of the strided sum, used as an oracle.
    fn naive(input: &Tensor, p: &ConvParams) -> Vec<f64> {
        let (n, c_in, l_in) = input.dims3("naive").unwrap();
        let (c_out, k_s) = (p.out_channels(), p.kernel_size());
        let l_out = p.output_len(l_in).unwrap();
        let at = |i: usize, k: usize, pos: isize| -> f64 {
            if pos < 0 || pos as usize >= l_in {
                0.0
            } else {
                input.data()[(i * c_in + k) * l_in + pos as usize]
            }
        };
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..c_out {
                for t in 0..l_out {
                    let mut acc = p.bias.data()[j];
                    for k in 0..c_in {
                        for q in 0..k_s {
                            let pos = (t * p.stride + q) as isize - p.padding as isize;
                            acc += p.weight.data()[(j * c_in + k) * k_s + q] * at(i, k, pos);
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    #[test]
    fn zero_input_yields_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ConvParams::init_uniform(3, 4, 3, 2, 1, &mut rng);
        p.bias = Tensor::full(&[4], 0.5);
        let out = conv1d_forward(&Tensor::zeros(&[2, 3, 9]), &p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn hand_evaluated_difference_kernel() {
        let p = params(vec![1.0, 0.0, -1.0], [1, 1, 3], vec![0.0], 2, 0);
        let x = Tensor::from_vec(&[1, 1, 5], vec![1., 2., 3., 4., 5.]).unwrap();
        let out = conv1d_forward(&x, &p).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2]);
        assert_eq!(out.data(), &[-2.0, -2.0]);
    }

    #[test]
    fn output_shape_for_batch_of_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ConvParams::init_uniform(16, 32, 3, 2, 1, &mut rng);
        let out = conv1d_forward(&Tensor::zeros(&[64, 16, 32]), &p).unwrap();
        assert_eq!(out.shape(), &[64, 32, 16]);
    }

    #[test]
    fn matches_naive_sum_for_various_geometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(c_in, c_out, k, s, pad, l) in &[
            (1, 1, 3, 2, 1, 4),
            (2, 3, 3, 2, 1, 7),
            (3, 2, 3, 1, 0, 6),
            (2, 2, 5, 3, 2, 11),
            (4, 5, 3, 2, 1, 1),
        ] {
            let p = ConvParams::init_uniform(c_in, c_out, k, s, pad, &mut rng);
            let x = Tensor::uniform(&[3, c_in, l], 1.0, &mut rng);
            let out = conv1d_forward(&x, &p).unwrap();
            for (a, b) in out.data().iter().zip(naive(&x, &p)) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch_and_short_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ConvParams::init_uniform(2, 2, 3, 2, 0, &mut rng);
        assert!(matches!(
            conv1d_forward(&Tensor::zeros(&[1, 3, 8]), &p),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            conv1d_forward(&Tensor::zeros(&[1, 2, 2]), &p),
            Err(Error::Size { .. })
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ConvParams::init_uniform(2, 3, 3, 2, 1, &mut rng);
        let x = Tensor::uniform(&[2, 2, 6], 1.0, &mut rng);
        let g = conv1d_backward(&x, &p, &Tensor::zeros(&[2, 3, 3])).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weight.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_tap_weight_gradient_is_scaled_input() {
        let p = params(vec![0.3, -0.2, 0.7], [1, 1, 3], vec![0.1], 2, 0);
        let x = Tensor::from_vec(&[1, 1, 3], vec![1.5, -2.0, 4.0]).unwrap();
        let go = Tensor::from_vec(&[1, 1, 1], vec![2.5]).unwrap();
        let g = conv1d_backward(&x, &p, &go).unwrap();
        assert_eq!(g.weight.data(), &[2.5 * 1.5, 2.5 * -2.0, 2.5 * 4.0]);
        assert_eq!(g.bias.data(), &[2.5]);
        assert_eq!(g.input.data(), &[2.5 * 0.3, 2.5 * -0.2, 2.5 * 0.7]);
    }

    #[test]
    fn backward_rejects_wrong_grad_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = ConvParams::init_uniform(2, 3, 3, 2, 1, &mut rng);
        let x = Tensor::zeros(&[2, 2, 6]);
        assert!(conv1d_backward(&x, &p, &Tensor::zeros(&[2, 3, 4])).is_err());
    }

    #[test]
    fn bias_gradient_sums_batch_and_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = ConvParams::init_uniform(1, 2, 3, 2, 1, &mut rng);
        let x = Tensor::uniform(&[3, 1, 8], 1.0, &mut rng);
        let go = Tensor::uniform(&[3, 2, 4], 1.0, &mut rng);
        let g = conv1d_backward(&x, &p, &go).unwrap();
        for j in 0..2 {
            let expect: f64 = (0..3)
                .flat_map(|i| go.data()[(i * 2 + j) * 4..(i * 2 + j + 1) * 4].to_vec())
                .sum();
            assert!((g.bias.data()[j] - expect).abs() < 1e-12);
        }
    }
}
