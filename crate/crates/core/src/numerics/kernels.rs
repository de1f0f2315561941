//! Raw compute kernels shared by the tape and the pure tensor API.
//!
//! Convolution is lowered to im2col + GEMM. All loops run in a fixed order so
//! results are bit-reproducible on one platform.

use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Row-major `a[m x k] * b[k x n]`, with optional transposition of either side
/// expressed through strides.
pub(crate) fn gemm<T: Scalar>(
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    m: usize,
    k: usize,
    n: usize,
    out: &mut [T],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: slice lengths are checked above and `out` is a distinct borrow.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product of two rank-2 tensors.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::shape(format!("matmul {:?} x {:?}", a.shape(), b.shape())));
    }
    let mut out = vec![T::zero(); m * n];
    gemm(a.data(), false, b.data(), false, m, k, n, &mut out, false);
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// `floor((size + 2 * padding - kernel) / stride) + 1`.
pub fn conv_output_dim(size: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let padded = size + 2 * padding;
    if padded < kernel {
        return Err(Error::shape(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    pub fn new<T: Scalar>(
        input: &Tensor<T>,
        kernel: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let (c_in, h, w) = input.dims3()?;
        let [c_out, kc, kh, kw] = kernel.shape()[..] else {
            return Err(Error::shape(format!(
                "kernel must be C_out x C_in x k x k, got {:?}",
                kernel.shape()
            )));
        };
        if kh != kw || kh % 2 == 0 {
            return Err(Error::shape(format!("kernel must be square and odd, got {kh}x{kw}")));
        }
        if kc != c_in {
            return Err(Error::shape(format!(
                "input has {c_in} channels, kernel expects {kc}"
            )));
        }
        let h_out = conv_output_dim(h, kh, stride, pad)?;
        let w_out = conv_output_dim(w, kw, stride, pad)?;
        Ok(Self { c_in, h, w, c_out, k: kh, stride, pad, h_out, w_out })
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.h_out * self.w_out
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let n = g.positions();
    let mut cols = vec![T::zero(); g.patch_len() * n];
    for c in 0..g.c_in {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src_row = &x[(c * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..g.w_out {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * g.w_out + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let n = g.positions();
    let mut x = vec![T::zero(); g.c_in * g.h * g.w];
    for c in 0..g.c_in {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut x[(c * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..g.w_out {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + src[oy * g.w_out + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: &ConvGeom,
) -> Result<Tensor<T>> {
    if let Some(b) = bias {
        if b.shape() != [g.c_out] {
            return Err(Error::shape(format!(
                "bias shape {:?} for {} output channels",
                b.shape(),
                g.c_out
            )));
        }
    }
    let n = g.positions();
    let mut out = vec![T::zero(); g.c_out * n];
    if g.is_pointwise() {
        gemm(w.data(), false, x.data(), false, g.c_out, g.patch_len(), n, &mut out, false);
    } else {
        let cols = im2col(x.data(), g);
        gemm(w.data(), false, &cols, false, g.c_out, g.patch_len(), n, &mut out, false);
    }
    if let Some(b) = bias {
        for (row, &bv) in out.chunks_mut(n).zip(b.data()) {
            for v in row {
                *v = *v + bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.c_out, g.h_out, g.w_out], out))
}

/// Gradients of a convolution with respect to input, kernel and bias.
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dout: &[T],
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let n = g.positions();
    let p = g.patch_len();
    let db: Vec<T> = dout.chunks(n).map(|row| row.iter().copied().sum()).collect();
    let pointwise = g.is_pointwise();
    let cols_storage;
    let cols: &[T] = if pointwise {
        x.data()
    } else if need_dw {
        cols_storage = im2col(x.data(), g);
        &cols_storage
    } else {
        &[]
    };
    let dw = need_dw.then(|| {
        let mut dw = vec![T::zero(); g.c_out * p];
        gemm(dout, false, cols, true, g.c_out, n, p, &mut dw, false);
        dw
    });
    let dx = need_dx.then(|| {
        let mut dcols = vec![T::zero(); p * n];
        gemm(w.data(), true, dout, false, p, g.c_out, n, &mut dcols, false);
        if pointwise {
            dcols
        } else {
            col2im(&dcols, g)
        }
    });
    (dx, dw, db)
}

/// Cross-correlation of a `C_in x H x W` input with a `C_out x C_in x k x k`
/// kernel. Output spatial size is `floor((H + 2p - k) / s) + 1`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(input, kernel, stride, padding)?;
    conv2d_forward(input, kernel, None, &g)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct six-loop convolution used as an oracle for the im2col path.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let (ci, h, wd) = x.dims3().unwrap();
        let co = w.shape()[0];
        let k = w.shape()[2];
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; co * ho * wo];
        for o in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for c in 0..ci {
                        for ki in 0..k {
                            for kj in 0..k {
                                let iy = (oy * stride + ki) as isize - pad as isize;
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    s += x.data()[(c * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((o * ci + c) * k + ki) * k + kj];
                                }
                            }
                        }
                    }
                    out[(o * ho + oy) * wo + ox] = s;
                }
            }
        }
        Tensor::new(vec![co, ho, wo], out).unwrap()
    }

    fn ramp(shape: &[usize], scale: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let vals: Vec<f64> = (0..n).map(|i| ((i * 37 % 23) as f64 - 11.0) * scale).collect();
        Tensor::from_f64(shape, &vals).unwrap()
    }

    #[test]
    fn identity_kernel_returns_input() {
        let x = ramp(&[1, 3, 3], 0.5).cast::<f32>();
        let k = Tensor::full(&[1, 1, 1, 1], 1.0f32);
        assert_eq!(conv2d(&x, &k, 1, 0).unwrap(), x);
    }

    #[test]
    fn all_ones_sum_to_nine() {
        let x = Tensor::full(&[1, 3, 3], 1.0f32);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0f32);
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn strided_padded_shape() {
        let x = Tensor::<f32>::zeros(&[1, 4, 4]);
        let k = Tensor::<f32>::zeros(&[1, 1, 3, 3]);
        assert_eq!(conv2d(&x, &k, 2, 1).unwrap().shape(), &[1, 2, 2]);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor::<f32>::zeros(&[2, 4, 4]);
        let k = Tensor::<f32>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &k, 1, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn im2col_matches_direct_loops() {
        for &(stride, pad) in &[(1, 0), (1, 1), (2, 1), (2, 0)] {
            let x = ramp(&[3, 7, 6], 0.1);
            let w = ramp(&[4, 3, 3, 3], 0.05);
            let got = conv2d(&x, &w, stride, pad).unwrap();
            let want = naive_conv(&x, &w, stride, pad);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::from_f64(&[2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::from_f64(&[3, 1], &[1., 0., -1.]).unwrap();
        let c: Tensor<f64> = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[-2.0, -2.0]);
    }
}
