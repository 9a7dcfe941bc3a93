//! Row-major matrix kernels and the im2col/col2im lowering used by the
//! convolution layers.
//!
//! Matrix products go through `matrixmultiply`, which picks SIMD kernels at
//! run time; all operands are row-major slices described by strides.

/// `c (m×n) += a (m×k) · b (k×n)`
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    // SAFETY: the asserts above bound every strided access.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, 1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m×k) += a (m×n) · bᵀ` where `b` is `k×n`.
pub(crate) fn gemm_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * k);
    // SAFETY: as above; `bᵀ` is read with row stride 1 and column stride n.
    unsafe {
        matrixmultiply::dgemm(
            m, n, k, 1.0, a.as_ptr(), n as isize, 1, b.as_ptr(), 1, n as isize, 1.0,
            c.as_mut_ptr(), k as isize, 1,
        );
    }
}

/// `c (m×n) += aᵀ · b` where `a` is `k×m` and `b` is `k×n`.
pub(crate) fn gemm_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], k: usize, m: usize, n: usize) {
    assert_eq!(a.len(), k * m);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    // SAFETY: as above; `aᵀ` is read with row stride 1 and column stride m.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, 1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Geometry of a strided, zero-padded 2-D correlation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel.0 * self.kernel.1
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Valid output columns `lo..hi` for kernel tap `kx`, so that
    /// `ox·sw + kx − pw` stays inside the image.
    fn x_range(&self, kx: usize) -> (usize, usize) {
        let (sw, pw) = (self.stride.1, self.padding.1);
        let lo = if kx >= pw { 0 } else { (pw - kx).div_ceil(sw) };
        let hi = if self.width + pw > kx {
            ((self.width + pw - kx - 1) / sw + 1).min(self.out_w)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    /// Calls `f(col_offset, image_offset, count)` for each contiguous run of
    /// output columns of one kernel tap and output row.
    #[inline]
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let (kh, kw) = self.kernel;
        let sh = self.stride.0;
        let ph = self.padding.0;
        let pw = self.padding.1;
        let cols = self.cols();
        for c in 0..self.channels {
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (c * kh + ky) * kw + kx;
                    let (lo, hi) = self.x_range(kx);
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..self.out_h {
                        let iy = (oy * sh + ky) as isize - ph as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let base = (c * self.height + iy as usize) * self.width;
                        let col = row * cols + oy * self.out_w + lo;
                        let img = base + lo * self.stride.1 + kx - pw;
                        f(col, img, hi - lo, self.stride.1);
                    }
                }
            }
        }
    }
}

/// Image `[C, H, W]` to columns `[C·kh·kw, out_h·out_w]`.
pub(crate) fn im2col(image: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut out = vec![0.0; g.rows() * g.cols()];
    g.for_each_run(|col, img, n, stride| {
        let dst = &mut out[col..col + n];
        if stride == 1 {
            dst.copy_from_slice(&image[img..img + n]);
        } else {
            for (i, d) in dst.iter_mut().enumerate() {
                *d = image[img + i * stride];
            }
        }
    });
    out
}

/// Adjoint of [`im2col`]: scatters columns back, summing overlaps.
pub(crate) fn col2im_acc(columns: &[f64], g: &ConvGeom, image: &mut [f64]) {
    g.for_each_run(|col, img, n, stride| {
        let src = &columns[col..col + n];
        for (i, v) in src.iter().enumerate() {
            image[img + i * stride] += v;
        }
    });
}
