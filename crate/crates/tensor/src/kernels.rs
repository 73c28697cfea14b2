//! Raw numeric kernels shared by the graph operations.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use crate::scalar::Scalar;

/// `c = op(a) · op(b) + (accumulate ? c : 0)`, all buffers row-major.
///
/// `op(a)` is `m × k` and `op(b)` is `k × n`; a transposed operand is stored
/// in its untransposed row-major layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_trans: bool,
    b: &[T],
    b_trans: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let av = if a_trans {
        ArrayView2::from_shape((k, m), a).unwrap().reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).unwrap()
    };
    let bv = if b_trans {
        ArrayView2::from_shape((n, k), b).unwrap().reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).unwrap()
    };
    let mut cv = ArrayViewMut2::from_shape((m, n), c).unwrap();
    let beta = if accumulate { T::one() } else { T::zero() };
    general_mat_mul(T::one(), &av, &bv, beta, &mut cv);
}

/// Spatial padding policy for 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-fill so the output extent is `ceil(in / stride)`; any odd
    /// leftover row or column is padded at the bottom/right.
    Same,
    /// No padding.
    Valid,
}

/// Resolved geometry of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(
        in_c: usize,
        in_h: usize,
        in_w: usize,
        k_h: usize,
        k_w: usize,
        stride: usize,
        padding: Padding,
    ) -> Option<Self> {
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Same => {
                let oh = in_h.div_ceil(stride);
                let ow = in_w.div_ceil(stride);
                let ph = ((oh - 1) * stride + k_h).saturating_sub(in_h);
                let pw = ((ow - 1) * stride + k_w).saturating_sub(in_w);
                (oh, ow, ph / 2, pw / 2)
            }
            Padding::Valid => {
                if in_h < k_h || in_w < k_w {
                    return None;
                }
                ((in_h - k_h) / stride + 1, (in_w - k_w) / stride + 1, 0, 0)
            }
        };
        Some(Self {
            in_c,
            in_h,
            in_w,
            k_h,
            k_w,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.in_c * self.k_h * self.k_w
    }

    pub fn out_hw(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input row/column for kernel tap `kk` at output position `o`, if inside the image.
    #[inline]
    fn src(&self, o: usize, kk: usize, pad: usize, extent: usize) -> Option<usize> {
        let p = (o * self.stride + kk).checked_sub(pad)?;
        (p < extent).then_some(p)
    }

    /// Unfold one image (`in_c × in_h × in_w`) into `col_rows × out_hw`.
    pub fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let ohw = self.out_hw();
        for c in 0..self.in_c {
            let plane = &x[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for kh in 0..self.k_h {
                for kw in 0..self.k_w {
                    let row = (c * self.k_h + kh) * self.k_w + kw;
                    let dst = &mut cols[row * ohw..(row + 1) * ohw];
                    for oh in 0..self.out_h {
                        let line = &mut dst[oh * self.out_w..(oh + 1) * self.out_w];
                        match self.src(oh, kh, self.pad_top, self.in_h) {
                            None => line.fill(T::zero()),
                            Some(ih) => {
                                let src_row = &plane[ih * self.in_w..(ih + 1) * self.in_w];
                                for (ow, v) in line.iter_mut().enumerate() {
                                    *v = match self.src(ow, kw, self.pad_left, self.in_w) {
                                        Some(iw) => src_row[iw],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add `col_rows × out_hw` back onto one image gradient.
    pub fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let ohw = self.out_hw();
        for c in 0..self.in_c {
            let plane = &mut dx[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for kh in 0..self.k_h {
                for kw in 0..self.k_w {
                    let row = (c * self.k_h + kh) * self.k_w + kw;
                    let src = &cols[row * ohw..(row + 1) * ohw];
                    for oh in 0..self.out_h {
                        let Some(ih) = self.src(oh, kh, self.pad_top, self.in_h) else {
                            continue;
                        };
                        let line = &src[oh * self.out_w..(oh + 1) * self.out_w];
                        let dst_row = &mut plane[ih * self.in_w..(ih + 1) * self.in_w];
                        for (ow, &g) in line.iter().enumerate() {
                            if let Some(iw) = self.src(ow, kw, self.pad_left, self.in_w) {
                                dst_row[iw] = dst_row[iw] + g;
                            }
                        }
                    }
                }
            }
        }
    }
}
