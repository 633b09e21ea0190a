//! Low-level dense kernels: GEMM wrapper and im2col/col2im for NHWC images.

/// `c = a' * b' + beta * c` where `a'` is `m x k` and `b'` is `k x n`. When
/// `ta` is set, `a` is stored as `k x m` row-major (and likewise `tb` for `b`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold exactly m*k, k*n and m*n elements (asserted
    // above) and the strides describe row-major layouts of those extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a strided 2-D cross-correlation over an NHWC batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.in_c
    }

    pub fn rows(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    /// Input coordinate hit by output row `o` and kernel row `i`, if inside.
    #[inline]
    fn src(o: usize, i: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let p = o * stride + i;
        if p < pad || p - pad >= extent {
            None
        } else {
            Some(p - pad)
        }
    }
}

/// Unfolds `x` (`[batch, in_h, in_w, in_c]`) into a `[rows, patch_len]` matrix.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let pl = g.patch_len();
    let mut cols = vec![0.0; g.rows() * pl];
    let img = g.in_h * g.in_w * g.in_c;
    for b in 0..g.batch {
        let xb = &x[b * img..(b + 1) * img];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = ((b * g.out_h + oy) * g.out_w + ox) * pl;
                for i in 0..g.kh {
                    let Some(y) = ConvGeom::src(oy, i, g.stride, g.pad_top, g.in_h) else {
                        continue;
                    };
                    for j in 0..g.kw {
                        let Some(xx) = ConvGeom::src(ox, j, g.stride, g.pad_left, g.in_w) else {
                            continue;
                        };
                        let s = (y * g.in_w + xx) * g.in_c;
                        let d = row + (i * g.kw + j) * g.in_c;
                        cols[d..d + g.in_c].copy_from_slice(&xb[s..s + g.in_c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds patch rows back into an image buffer.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let pl = g.patch_len();
    let img = g.in_h * g.in_w * g.in_c;
    let mut x = vec![0.0; g.batch * img];
    for b in 0..g.batch {
        let xb = &mut x[b * img..(b + 1) * img];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = ((b * g.out_h + oy) * g.out_w + ox) * pl;
                for i in 0..g.kh {
                    let Some(y) = ConvGeom::src(oy, i, g.stride, g.pad_top, g.in_h) else {
                        continue;
                    };
                    for j in 0..g.kw {
                        let Some(xx) = ConvGeom::src(ox, j, g.stride, g.pad_left, g.in_w) else {
                            continue;
                        };
                        let s = (y * g.in_w + xx) * g.in_c;
                        let d = row + (i * g.kw + j) * g.in_c;
                        for (dst, src) in xb[s..s + g.in_c].iter_mut().zip(&cols[d..d + g.in_c]) {
                            *dst += *src;
                        }
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
        gemm(2, 2, 2, &a, false, &b, true, 1.0, &mut c);
        assert_eq!(c, [34.0, 46.0, 78.0, 106.0]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom {
            batch: 2,
            in_h: 5,
            in_w: 4,
            in_c: 3,
            kh: 3,
            kw: 2,
            stride: 2,
            pad_top: 1,
            pad_left: 0,
            out_h: 3,
            out_w: 2,
        };
        let x: Vec<f64> = (0..g.batch * 5 * 4 * 3).map(|i| (i as f64 * 0.37).sin()).collect();
        let c: Vec<f64> = (0..g.rows() * g.patch_len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = im2col(&x, &g).iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&c, &g)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
