//! Radix-2 FFT and the magnitude-spectrum input block used by `DeepFFT`.
//!
//! The block has no learnable parameters and sits in front of the first
//! convolution, so it is applied to inputs only and never differentiated.

use crate::par::for_each_chunk_mut;
use crate::tensor::Tensor;
use crate::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

fn check_len(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// `exp(-2*pi*i*k/n)` for `k < n/2`, each evaluated directly.
fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
        .collect()
}

/// Iterative decimation-in-time transform over a precomputed twiddle table
/// of length `buf.len() / 2`.
fn fft_with_table(buf: &mut [Complex64], table: &[Complex64]) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let stride = n / size;
        for start in (0..n).step_by(size) {
            for k in 0..half {
                let w = table[k * stride];
                let u = buf[start + k];
                let v = buf[start + k + half] * w;
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        size *= 2;
    }
}

/// In-place unnormalized forward DFT,
/// `X[f] = sum_t x[t] * exp(-2*pi*i*f*t/W)`.
pub fn fft_in_place(buf: &mut [Complex64]) -> Result<()> {
    check_len(buf.len())?;
    fft_with_table(buf, &twiddles(buf.len()));
    Ok(())
}

pub fn fft(signal: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut buf = signal.to_vec();
    fft_in_place(&mut buf)?;
    Ok(buf)
}

/// Inverse transform via the conjugate trick, scaled by `1/W`.
pub fn ifft(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut buf: Vec<Complex64> = spectrum.iter().map(|c| c.conj()).collect();
    fft_in_place(&mut buf)?;
    let scale = 1.0 / buf.len() as f64;
    Ok(buf.into_iter().map(|c| c.conj() * scale).collect())
}

/// The `B_FFT` input block: replaces every channel of a `(N, M, W)` tensor
/// by its full-length magnitude spectrum `|FFT(channel)|`.
///
/// All `W` bins are kept (including the mirrored half) so the output has the
/// same shape as the input and the convolution stack behind it is unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrontEnd {
    length: usize,
    table: Vec<Complex64>,
}

impl SpectralFrontEnd {
    pub fn new(length: usize) -> Result<Self> {
        check_len(length)?;
        Ok(SpectralFrontEnd {
            length,
            table: twiddles(length),
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn magnitude_into(&self, signal: &[f64], out: &mut [f64], scratch: &mut Vec<Complex64>) {
        scratch.clear();
        scratch.extend(signal.iter().map(|&v| Complex64::new(v, 0.0)));
        fft_with_table(scratch, &self.table);
        for (o, c) in out.iter_mut().zip(scratch.iter()) {
            *o = c.norm();
        }
    }

    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        let (n, m, w) = input.dims3("magnitude_frontend")?;
        if w != self.length {
            return Err(Error::shape(
                "magnitude_frontend",
                format!("sequence length {w}, front end built for {}", self.length),
            ));
        }
        let x = input.data();
        let mut out = vec![0.0; x.len()];
        for_each_chunk_mut(&mut out, m * w, |i, sample| {
            let mut scratch = Vec::with_capacity(w);
            for (ch, row) in sample.chunks_exact_mut(w).enumerate() {
                let src = &x[(i * m + ch) * w..(i * m + ch + 1) * w];
                self.magnitude_into(src, row, &mut scratch);
            }
        });
        Tensor::from_vec(&[n, m, w], out)
    }
}

/// Magnitude spectrum of every channel of a `(N, M, W)` tensor.
pub fn magnitude_frontend(input: &Tensor) -> Result<Tensor> {
    let (_, _, w) = input.dims3("magnitude_frontend")?;
    SpectralFrontEnd::new(w)?.apply(input)
}
