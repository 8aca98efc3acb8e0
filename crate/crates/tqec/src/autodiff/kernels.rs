//! Dense numeric kernels behind the tensor ops.
//!
//! Everything funnels into one accumulating row-major matrix multiply with an
//! axpy-style inner loop (sequential access on both operands, so it
//! auto-vectorizes well); transposed operand orders are handled by explicitly
//! materializing the transpose, which is linear work and far cheaper than the
//! multiply it feeds. Convolutions are lowered to that multiply with
//! im2col/col2im; the same scatter/gather pair also implements transposed
//! convolution by swapping the roles of image and grid.

use super::Scalar;

/// `out[m,n] += a[m,k] · b[k,n]`, all row-major.
pub fn matmul_nn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    assert_eq!(a.len(), m * k, "lhs size mismatch");
    assert_eq!(b.len(), k * n, "rhs size mismatch");
    assert_eq!(out.len(), m * n, "output size mismatch");
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ik * bv;
            }
        }
    }
}

/// Row-major transpose: `(rows, cols)` in, `(cols, rows)` out.
pub fn transpose<F: Scalar>(a: &[F], rows: usize, cols: usize) -> Vec<F> {
    assert_eq!(a.len(), rows * cols, "transpose size mismatch");
    let mut out = vec![F::zero(); a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Number of valid kernel placements along one axis.
pub fn conv_out_len(len: usize, k: usize, stride: usize) -> usize {
    assert!(k <= len, "kernel extent {k} exceeds input extent {len}");
    assert!(stride >= 1, "stride must be at least 1");
    (len - k) / stride + 1
}

/// Gather image patches into a `(c·k·k, b·gh·gw)` column matrix.
///
/// `img` has shape `(b, c, h, w)`; the grid `(gh, gw)` must equal the valid
/// placement counts for `(k, stride)`.
#[allow(clippy::too_many_arguments)]
pub fn im2col2<F: Scalar>(
    img: &[F],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    col: &mut [F],
) {
    let gh = conv_out_len(h, k, stride);
    let gw = conv_out_len(w, k, stride);
    let cols = b * gh * gw;
    assert_eq!(img.len(), b * c * h * w, "image size mismatch");
    assert_eq!(col.len(), c * k * k * cols, "column matrix size mismatch");
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                let mut idx = 0;
                for bi in 0..b {
                    let plane = &img[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                    for gi in 0..gh {
                        let src_row = &plane[(gi * stride + ki) * w..];
                        for gj in 0..gw {
                            dst[idx] = src_row[gj * stride + kj];
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col2`]: scatter-add a column matrix back onto the image.
#[allow(clippy::too_many_arguments)]
pub fn col2im2<F: Scalar>(
    col: &[F],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    img: &mut [F],
) {
    let gh = conv_out_len(h, k, stride);
    let gw = conv_out_len(w, k, stride);
    let cols = b * gh * gw;
    assert_eq!(img.len(), b * c * h * w, "image size mismatch");
    assert_eq!(col.len(), c * k * k * cols, "column matrix size mismatch");
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &col[row * cols..(row + 1) * cols];
                let mut idx = 0;
                for bi in 0..b {
                    let plane = &mut img[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                    for gi in 0..gh {
                        let dst_row = &mut plane[(gi * stride + ki) * w..];
                        for gj in 0..gw {
                            dst_row[gj * stride + kj] += src[idx];
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Gather volume patches into a `(c·k³, b·gd·gh·gw)` column matrix.
///
/// `img` has shape `(b, c, dep, h, w)`; stride is 1 on every axis.
#[allow(clippy::too_many_arguments)]
pub fn im2col3<F: Scalar>(
    img: &[F],
    b: usize,
    c: usize,
    dep: usize,
    h: usize,
    w: usize,
    k: usize,
    col: &mut [F],
) {
    let gd = conv_out_len(dep, k, 1);
    let gh = conv_out_len(h, k, 1);
    let gw = conv_out_len(w, k, 1);
    let cols = b * gd * gh * gw;
    assert_eq!(img.len(), b * c * dep * h * w, "volume size mismatch");
    assert_eq!(col.len(), c * k * k * k * cols, "column matrix size mismatch");
    let plane = h * w;
    let vol = dep * plane;
    for ci in 0..c {
        for kd in 0..k {
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((ci * k + kd) * k + ki) * k + kj;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    let mut idx = 0;
                    for bi in 0..b {
                        let v = &img[(bi * c + ci) * vol..(bi * c + ci + 1) * vol];
                        for gd_i in 0..gd {
                            for gi in 0..gh {
                                let src_row = &v[(gd_i + kd) * plane + (gi + ki) * w..];
                                for gj in 0..gw {
                                    dst[idx] = src_row[gj + kj];
                                    idx += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`].
#[allow(clippy::too_many_arguments)]
pub fn col2im3<F: Scalar>(
    col: &[F],
    b: usize,
    c: usize,
    dep: usize,
    h: usize,
    w: usize,
    k: usize,
    img: &mut [F],
) {
    let gd = conv_out_len(dep, k, 1);
    let gh = conv_out_len(h, k, 1);
    let gw = conv_out_len(w, k, 1);
    let cols = b * gd * gh * gw;
    assert_eq!(img.len(), b * c * dep * h * w, "volume size mismatch");
    assert_eq!(col.len(), c * k * k * k * cols, "column matrix size mismatch");
    let plane = h * w;
    let vol = dep * plane;
    for ci in 0..c {
        for kd in 0..k {
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((ci * k + kd) * k + ki) * k + kj;
                    let src = &col[row * cols..(row + 1) * cols];
                    let mut idx = 0;
                    for bi in 0..b {
                        let v = &mut img[(bi * c + ci) * vol..(bi * c + ci + 1) * vol];
                        for gd_i in 0..gd {
                            for gi in 0..gh {
                                let dst_row = &mut v[(gd_i + kd) * plane + (gi + ki) * w..];
                                for gj in 0..gw {
                                    dst_row[gj + kj] += src[idx];
                                    idx += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::noise::stream;

    #[test]
    fn matmul_matches_a_worked_example() {
        // [1 2; 3 4] x [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut out = [0.0f64; 4];
        matmul_nn(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_accumulates_into_the_output() {
        let a = [1.0f64];
        let b = [2.0f64];
        let mut out = [10.0f64];
        matmul_nn(&a, &b, 1, 1, 1, &mut out);
        assert_eq!(out, [12.0]);
    }

    #[test]
    fn identity_multiplication_preserves_the_operand() {
        let eye = [1.0, 0.0, 0.0, 1.0];
        let b = [2.0, -3.0, 0.5, 4.0];
        let mut out = [0.0f64; 4];
        matmul_nn(&eye, &b, 2, 2, 2, &mut out);
        assert_eq!(out, b);
    }

    #[test]
    fn transpose_round_trips() {
        let mut rng = stream(9001, 0);
        let a: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = transpose(&a, 3, 4);
        // Element (row 0, col 1) of the transpose is (row 1, col 0) of a.
        assert_eq!(t[1], a[4]);
        assert_eq!(transpose(&t, 4, 3), a);
    }

    #[test]
    fn valid_placement_counts_match_the_convolution_formula() {
        assert_eq!(conv_out_len(5, 3, 1), 3);
        assert_eq!(conv_out_len(5, 3, 2), 2);
        assert_eq!(conv_out_len(7, 1, 1), 7);
        assert_eq!(conv_out_len(3, 3, 1), 1);
    }

    #[test]
    fn im2col_extracts_the_expected_patch() {
        // 1x1x3x3 image, 2x2 kernel, stride 1 -> 4 rows x 4 columns.
        let img: Vec<f64> = (1..=9).map(f64::from).collect();
        let mut col = vec![0.0; 4 * 4];
        im2col2(&img, 1, 1, 3, 3, 2, 1, &mut col);
        // First output position (top-left patch) down the rows:
        let patch0: Vec<f64> = (0..4).map(|r| col[r * 4]).collect();
        assert_eq!(patch0, vec![1.0, 2.0, 4.0, 5.0]);
        // Last output position (bottom-right patch):
        let patch3: Vec<f64> = (0..4).map(|r| col[r * 4 + 3]).collect();
        assert_eq!(patch3, vec![5.0, 6.0, 8.0, 9.0]);
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        // <im2col(x), y> must equal <x, col2im(y)> for random x, y.
        let mut rng = stream(9001, 1);
        for &(b, c, h, w, k, stride) in
            &[(1, 1, 4, 4, 2, 1), (2, 3, 5, 6, 3, 1), (1, 2, 7, 7, 3, 2)]
        {
            let gh = conv_out_len(h, k, stride);
            let gw = conv_out_len(w, k, stride);
            let x: Vec<f64> = (0..b * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..c * k * k * b * gh * gw)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let mut cx = vec![0.0; y.len()];
            im2col2(&x, b, c, h, w, k, stride, &mut cx);
            let mut ay = vec![0.0; x.len()];
            col2im2(&y, b, c, h, w, k, stride, &mut ay);
            let lhs: f64 = cx.iter().zip(&y).map(|(u, v)| u * v).sum();
            let rhs: f64 = x.iter().zip(&ay).map(|(u, v)| u * v).sum();
            assert!(
                (lhs - rhs).abs() < 1e-9,
                "adjoint identity violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn volumetric_col2im_is_the_adjoint_of_im2col() {
        let mut rng = stream(9001, 2);
        for &(b, c, dep, h, w, k) in &[(1, 1, 3, 3, 3, 2), (2, 2, 4, 5, 5, 3)] {
            let gd = conv_out_len(dep, k, 1);
            let gh = conv_out_len(h, k, 1);
            let gw = conv_out_len(w, k, 1);
            let x: Vec<f64> = (0..b * c * dep * h * w)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let y: Vec<f64> = (0..c * k * k * k * b * gd * gh * gw)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let mut cx = vec![0.0; y.len()];
            im2col3(&x, b, c, dep, h, w, k, &mut cx);
            let mut ay = vec![0.0; x.len()];
            col2im3(&y, b, c, dep, h, w, k, &mut ay);
            let lhs: f64 = cx.iter().zip(&y).map(|(u, v)| u * v).sum();
            let rhs: f64 = x.iter().zip(&ay).map(|(u, v)| u * v).sum();
            assert!(
                (lhs - rhs).abs() < 1e-9,
                "adjoint identity violated: {lhs} vs {rhs}"
            );
        }
    }
}
