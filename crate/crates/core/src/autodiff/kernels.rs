//! Raw loops behind the graph ops. All arrays are row-major, images NHWC.

use super::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

/// `out[m, n] = a[m, k] * b[k, n]`, accumulated into a zeroed `out`.
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
}

/// `da += dout * b^T`, `db += a^T * dout`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_backward<T: Scalar>(
    a: &[T],
    b: &[T],
    dout: &[T],
    da: Option<&mut [T]>,
    db: Option<&mut [T]>,
    m: usize,
    k: usize,
    n: usize,
) {
    if let Some(da) = da {
        for i in 0..m {
            let drow = &dout[i * n..(i + 1) * n];
            for p in 0..k {
                let brow = &b[p * n..(p + 1) * n];
                let mut acc = T::zero();
                for (&d, &bv) in drow.iter().zip(brow) {
                    acc = acc + d * bv;
                }
                da[i * k + p] = da[i * k + p] + acc;
            }
        }
    }
    if let Some(db) = db {
        for i in 0..m {
            let drow = &dout[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == T::zero() {
                    continue;
                }
                let dbrow = &mut db[p * n..(p + 1) * n];
                for (o, &d) in dbrow.iter_mut().zip(drow) {
                    *o = *o + av * d;
                }
            }
        }
    }
}

#[inline]
fn input_coord(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    let pos = (o * stride + k).checked_sub(pad)?;
    (pos < extent).then_some(pos)
}

pub(crate) fn conv2d<T: Scalar>(g: &ConvGeom, input: &[T], kernel: &[T], bias: &[T], out: &mut [T]) {
    let ConvGeom { batch, h, w, cin, kh, kw, cout, stride, oh, ow, pad_top, pad_left } = *g;
    for b in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                let o_off = ((b * oh + oy) * ow + ox) * cout;
                let orow = &mut out[o_off..o_off + cout];
                orow.copy_from_slice(bias);
                for ky in 0..kh {
                    let Some(iy) = input_coord(oy, ky, stride, pad_top, h) else { continue };
                    for kx in 0..kw {
                        let Some(ix) = input_coord(ox, kx, stride, pad_left, w) else { continue };
                        let i_off = ((b * h + iy) * w + ix) * cin;
                        for ci in 0..cin {
                            let x = input[i_off + ci];
                            if x == T::zero() {
                                continue;
                            }
                            let k_off = ((ky * kw + kx) * cin + ci) * cout;
                            for (o, &kv) in orow.iter_mut().zip(&kernel[k_off..k_off + cout]) {
                                *o = *o + x * kv;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    dout: &[T],
    mut dinput: Option<&mut [T]>,
    mut dkernel: Option<&mut [T]>,
    dbias: Option<&mut [T]>,
) {
    let ConvGeom { batch, h, w, cin, kh, kw, cout, stride, oh, ow, pad_top, pad_left } = *g;
    if let Some(dbias) = dbias {
        for row in dout.chunks_exact(cout) {
            for (d, &v) in dbias.iter_mut().zip(row) {
                *d = *d + v;
            }
        }
    }
    for b in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                let o_off = ((b * oh + oy) * ow + ox) * cout;
                let drow = &dout[o_off..o_off + cout];
                for ky in 0..kh {
                    let Some(iy) = input_coord(oy, ky, stride, pad_top, h) else { continue };
                    for kx in 0..kw {
                        let Some(ix) = input_coord(ox, kx, stride, pad_left, w) else { continue };
                        let i_off = ((b * h + iy) * w + ix) * cin;
                        for ci in 0..cin {
                            let k_off = ((ky * kw + kx) * cin + ci) * cout;
                            let krow = &kernel[k_off..k_off + cout];
                            if let Some(dk) = dkernel.as_deref_mut() {
                                let x = input[i_off + ci];
                                if x != T::zero() {
                                    for (o, &d) in dk[k_off..k_off + cout].iter_mut().zip(drow) {
                                        *o = *o + x * d;
                                    }
                                }
                            }
                            if let Some(di) = dinput.as_deref_mut() {
                                let mut acc = T::zero();
                                for (&kv, &d) in krow.iter().zip(drow) {
                                    acc = acc + kv * d;
                                }
                                di[i_off + ci] = di[i_off + ci] + acc;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Max pooling; returns the flat input index chosen for every output cell.
/// Ties resolve to the first maximal element in row-major window order.
#[allow(clippy::too_many_arguments)]
pub(crate) fn maxpool2d<T: Scalar>(
    input: &[T],
    batch: usize,
    h: usize,
    w: usize,
    c: usize,
    window: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    out: &mut [T],
    argmax: &mut [usize],
) {
    for b in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = T::neg_infinity();
                    let mut best_idx = usize::MAX;
                    for ky in 0..window {
                        for kx in 0..window {
                            let iy = oy * stride + ky;
                            let ix = ox * stride + kx;
                            let idx = ((b * h + iy) * w + ix) * c + ch;
                            let v = input[idx];
                            if best_idx == usize::MAX || v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ((b * oh + oy) * ow + ox) * c + ch;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
}

/// Per-channel mean and biased variance over every axis but the last.
pub(crate) fn channel_moments<T: Scalar>(x: &[T], c: usize) -> (alloc::vec::Vec<T>, alloc::vec::Vec<T>) {
    let n = T::lit((x.len() / c) as f64);
    let mut mean = alloc::vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = alloc::vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s = *s + d * d;
        }
    }
    var.iter_mut().for_each(|s| *s = *s / n);
    (mean, var)
}
