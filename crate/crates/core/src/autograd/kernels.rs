//! Dense numeric kernels shared by the graph ops. All buffers are row-major.

/// `c (+)= op(a) · op(b)` where `op(a)` is `m×k` and `op(b)` is `k×n`.
/// A transposed operand is stored in its untransposed layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices hold exactly the m×k, k×n and m×n elements the
    // strides above address, and `c` does not alias `a` or `b`.
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one `C×H×W` image into a `(C·Kh·Kw) × (H'·W')` patch matrix.
pub(crate) fn im2col(img: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let ncols = g.col_cols();
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, img: &mut [f64]) {
    let ncols = g.col_cols();
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward convolution of a whole batch.
pub(crate) fn conv2d_forward(
    input: &[f64],
    batch: usize,
    g: &ConvGeom,
    kernel: &[f64],
    filters: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let in_per = g.channels * g.height * g.width;
    let out_per = filters * g.col_cols();
    let mut out = vec![0.0; batch * out_per];
    let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
    for b in 0..batch {
        im2col(&input[b * in_per..(b + 1) * in_per], g, &mut cols);
        let dst = &mut out[b * out_per..(b + 1) * out_per];
        gemm(
            filters,
            g.col_rows(),
            g.col_cols(),
            kernel,
            false,
            &cols,
            false,
            dst,
            false,
        );
        if let Some(bias) = bias {
            for (f, chunk) in dst.chunks_mut(g.col_cols()).enumerate() {
                chunk.iter_mut().for_each(|v| *v += bias[f]);
            }
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub kernel: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    input: &[f64],
    batch: usize,
    g: &ConvGeom,
    kernel: &[f64],
    filters: usize,
    upstream: &[f64],
    want_input: bool,
    want_kernel: bool,
    want_bias: bool,
) -> ConvGrads {
    let in_per = g.channels * g.height * g.width;
    let out_per = filters * g.col_cols();
    let rows = g.col_rows();
    let ncols = g.col_cols();
    let mut d_input = want_input.then(|| vec![0.0; input.len()]);
    let mut d_kernel = want_kernel.then(|| vec![0.0; kernel.len()]);
    let mut d_bias = want_bias.then(|| vec![0.0; filters]);
    let mut cols = vec![0.0; rows * ncols];
    let mut dcols = vec![0.0; rows * ncols];
    for b in 0..batch {
        let up = &upstream[b * out_per..(b + 1) * out_per];
        if let Some(db) = d_bias.as_mut() {
            for (f, chunk) in up.chunks(ncols).enumerate() {
                db[f] += chunk.iter().sum::<f64>();
            }
        }
        if let Some(dk) = d_kernel.as_mut() {
            im2col(&input[b * in_per..(b + 1) * in_per], g, &mut cols);
            gemm(filters, ncols, rows, up, false, &cols, true, dk, true);
        }
        if let Some(di) = d_input.as_mut() {
            gemm(
                rows, filters, ncols, kernel, true, up, false, &mut dcols, false,
            );
            col2im(&dcols, g, &mut di[b * in_per..(b + 1) * in_per]);
        }
    }
    ConvGrads {
        input: d_input,
        kernel: d_kernel,
        bias: d_bias,
    }
}

/// Non-overlapping max pooling. Returns the pooled values and, per output,
/// the flat input index of the first maximum in row-major window order.
pub(crate) fn maxpool2d_forward(
    input: &[f64],
    planes: usize,
    height: usize,
    width: usize,
    window: usize,
) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (height / window, width / window);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * height * width;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * window * width + ox * window;
                let mut best_v = input[best];
                for ky in 0..window {
                    for kx in 0..window {
                        let idx = base + (oy * window + ky) * width + ox * window + kx;
                        if input[idx] > best_v {
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                }
                out.push(best_v);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; a.len()];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = a[i * cols + j];
            }
        }
        t
    }

    #[test]
    fn gemm_transpose_flags() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let expected = naive_matmul(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let mut c = vec![0.0; m * n];
            let aa = if ta { &at } else { &a };
            let bb = if tb { &bt } else { &b };
            gemm(m, k, n, aa, ta, bb, tb, &mut c, false);
            for (x, y) in c.iter().zip(&expected) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom {
            channels: 2,
            height: 5,
            width: 4,
            kh: 3,
            kw: 2,
            stride: 2,
            pad: 1,
            out_h: 3,
            out_w: 3,
        };
        let img: Vec<f64> = (0..40).map(|i| (i as f64 * 0.13).sin()).collect();
        let cols_y: Vec<f64> = (0..g.col_rows() * g.col_cols())
            .map(|i| (i as f64 * 0.7).cos())
            .collect();
        let mut cols = vec![0.0; cols_y.len()];
        im2col(&img, &g, &mut cols);
        let lhs: f64 = cols.iter().zip(&cols_y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; img.len()];
        col2im(&cols_y, &g, &mut back);
        let rhs: f64 = img.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn maxpool_first_occurrence_on_ties() {
        let (out, arg) = maxpool2d_forward(&[7.0; 16], 1, 4, 4, 2);
        assert_eq!(out, vec![7.0; 4]);
        assert_eq!(arg, vec![0, 2, 8, 10]);
    }
}
