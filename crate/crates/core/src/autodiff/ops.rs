//! Numeric kernels behind the tape ops. Reduction order is fixed everywhere:
//! parallelism only splits disjoint output rows, so results are bit-stable
//! across runs and thread counts.

use rayon::prelude::*;

/// Sequential-per-row GEMM, parallel over output rows: out[m×n] = a[m×k] · b[k×n].
pub fn gemm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        row.fill(0.0);
        let a_row = &a[i * k..(i + 1) * k];
        for (ks, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[ks * n..(ks + 1) * n];
            for (o, &bv) in row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    });
}

/// out[m×n] = a[m×k] · b[n×k]ᵀ — both operands walked along their contiguous axis.
pub fn gemm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o = acc;
        }
    });
}

/// Extract 3×3 same-padded patches: out[(c·9 + dy·3 + dx), h·w + ww] = x[c, h+dy-1, ww+dx-1].
pub fn im2col3x3(x: &[f64], c_in: usize, h: usize, w: usize, out: &mut [f64]) {
    let hw = h * w;
    debug_assert_eq!(x.len(), c_in * hw);
    debug_assert_eq!(out.len(), c_in * 9 * hw);
    out.par_chunks_mut(9 * hw).enumerate().for_each(|(c, chunk)| {
        let plane = &x[c * hw..(c + 1) * hw];
        for dy in 0..3usize {
            for dx in 0..3usize {
                let row = &mut chunk[(dy * 3 + dx) * hw..(dy * 3 + dx + 1) * hw];
                for hh in 0..h {
                    let sy = hh as isize + dy as isize - 1;
                    let dst = &mut row[hh * w..(hh + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match dx {
                        0 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    });
}

/// Scatter-add patch-space gradients back to input space (adjoint of `im2col3x3`).
pub fn col2im3x3(cols: &[f64], c_in: usize, h: usize, w: usize, out: &mut [f64]) {
    let hw = h * w;
    debug_assert_eq!(cols.len(), c_in * 9 * hw);
    debug_assert_eq!(out.len(), c_in * hw);
    out.par_chunks_mut(hw).enumerate().for_each(|(c, plane)| {
        plane.fill(0.0);
        let chunk = &cols[c * 9 * hw..(c + 1) * 9 * hw];
        for dy in 0..3usize {
            for dx in 0..3usize {
                let row = &chunk[(dy * 3 + dx) * hw..(dy * 3 + dx + 1) * hw];
                for hh in 0..h {
                    let sy = hh as isize + dy as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[hh * w..(hh + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match dx {
                        0 => {
                            for i in 1..w {
                                dst[i - 1] += src[i];
                            }
                        }
                        1 => {
                            for i in 0..w {
                                dst[i] += src[i];
                            }
                        }
                        _ => {
                            for i in 0..w - 1 {
                                dst[i + 1] += src[i];
                            }
                        }
                    }
                }
            }
        }
    });
}

/// 2×2 max pool with replicate padding on odd extents. Returns pooled values
/// and, per output cell, the flat index of the source element that won (ties:
/// earliest in row-major window order).
pub fn maxpool2x2(x: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let oh = h.div_ceil(2);
    let ow = w.div_ceil(2);
    let mut out = vec![0.0; c * oh * ow];
    let mut argmax = vec![0u32; c * oh * ow];
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for di in 0..2usize {
                    for dj in 0..2usize {
                        let si = (2 * i + di).min(h - 1);
                        let sj = (2 * j + dj).min(w - 1);
                        let v = plane[si * w + sj];
                        if v > best {
                            best = v;
                            best_idx = ch * h * w + si * w + sj;
                        }
                    }
                }
                out[ch * oh * ow + i * ow + j] = best;
                argmax[ch * oh * ow + i * ow + j] = best_idx as u32;
            }
        }
    }
    (out, argmax)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_nn_small() {
        // [1 2; 3 4] · [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut out = [0.0; 4];
        gemm_nn(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn gemm_nt_matches_nn_with_transpose() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 2×3, used as bᵀ
        let mut nt = [0.0; 4];
        gemm_nt(&a, &b, 2, 3, 2, &mut nt);
        let bt = [7.0, 10.0, 8.0, 11.0, 9.0, 12.0]; // 3×2
        let mut nn = [0.0; 4];
        gemm_nn(&a, &bt, 2, 3, 2, &mut nn);
        assert_eq!(nt, nn);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (c, h, w) = (2, 5, 4);
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..c * 9 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut cols = vec![0.0; c * 9 * h * w];
        im2col3x3(&x, c, h, w, &mut cols);
        let mut back = vec![0.0; c * h * w];
        col2im3x3(&y, c, h, w, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn maxpool_replicates_odd_edges() {
        // 1×3×3 input: odd in both axes, pads by replicating last row/col.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let (out, argmax) = maxpool2x2(&x, 1, 3, 3);
        assert_eq!(out, vec![5.0, 6.0, 8.0, 9.0]);
        // replicated cells point back at real source elements
        assert_eq!(argmax, vec![4, 5, 7, 8]);
    }

    #[test]
    fn maxpool_tie_goes_to_earliest() {
        let x = [2.0, 2.0, 2.0, 2.0];
        let (out, argmax) = maxpool2x2(&x, 1, 2, 2);
        assert_eq!(out, vec![2.0]);
        assert_eq!(argmax, vec![0]);
    }
}
