//! Forward and backward kernels for the closed op set.
//!
//! Every kernel is a plain function over [`Tensor`]s so the graph, the
//! gradient checker and the tests can all call them directly.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

fn conv_geom(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<ConvGeom> {
    let (ci, h, wd) = x.dims3("conv2d")?;
    let (co, wci, kh, kw) = match w.shape()[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::shape(
                "conv2d",
                format!("weight must be [C_out, C_in, kh, kw], got {:?}", w.shape()),
            ))
        }
    };
    if wci != ci {
        return Err(Error::shape(
            "conv2d",
            format!("input has {ci} channels but weight expects {wci}"),
        ));
    }
    if b.shape() != [co] {
        return Err(Error::shape(
            "conv2d",
            format!("bias must be [{co}], got {:?}", b.shape()),
        ));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d stride must be >= 1"));
    }
    let (ph, pw) = (h + 2 * pad, wd + 2 * pad);
    if kh > ph || kw > pw {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {kh}x{kw} larger than padded input {ph}x{pw}"),
        ));
    }
    if (ph - kh) % stride != 0 || (pw - kw) % stride != 0 {
        return Err(Error::shape(
            "conv2d",
            format!("padded input {ph}x{pw} with kernel {kh}x{kw} is not divisible by stride {stride}"),
        ));
    }
    Ok(ConvGeom {
        ci,
        h,
        w: wd,
        co,
        kh,
        kw,
        stride,
        pad,
        oh: (ph - kh) / stride + 1,
        ow: (pw - kw) / stride + 1,
    })
}

/// Output index range `[lo, hi)` whose input coordinate `o*stride + k - pad`
/// falls inside `[0, n)`.
fn valid_range(n: usize, out: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if n + pad > k {
        ((n - 1 + pad - k) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// 2D cross-correlation of `x: [C_in, H, W]` with `w: [C_out, C_in, kh, kw]`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = conv_geom(x, w, b, stride, pad)?;
    let (xs, ws) = (x.data(), w.data());
    let plane = g.oh * g.ow;
    let mut out = vec![0.0; g.co * plane];
    for co in 0..g.co {
        let out_c = &mut out[co * plane..(co + 1) * plane];
        out_c.fill(b.data()[co]);
        for ci in 0..g.ci {
            let x_c = &xs[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ki in 0..g.kh {
                let (r_lo, r_hi) = valid_range(g.h, g.oh, ki, g.stride, g.pad);
                for kj in 0..g.kw {
                    let wv = ws[((co * g.ci + ci) * g.kh + ki) * g.kw + kj];
                    let (c_lo, c_hi) = valid_range(g.w, g.ow, kj, g.stride, g.pad);
                    for orow in r_lo..r_hi {
                        let ir = orow * g.stride + ki - g.pad;
                        let in_row = &x_c[ir * g.w..(ir + 1) * g.w];
                        let out_row = &mut out_c[orow * g.ow..(orow + 1) * g.ow];
                        if g.stride == 1 {
                            let start = c_lo + kj - g.pad;
                            let src = &in_row[start..start + (c_hi - c_lo)];
                            for (o, &v) in out_row[c_lo..c_hi].iter_mut().zip(src) {
                                *o += wv * v;
                            }
                        } else {
                            for oc in c_lo..c_hi {
                                out_row[oc] += wv * in_row[oc * g.stride + kj - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw(vec![g.co, g.oh, g.ow], out))
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = conv_geom(x, w, b, stride, pad)?;
    if dy.shape() != [g.co, g.oh, g.ow] {
        return Err(Error::shape("conv2d backward", format!("bad upstream gradient {:?}", dy.shape())));
    }
    let (xs, ws, dys) = (x.data(), w.data(), dy.data());
    let plane = g.oh * g.ow;
    let mut dx = vec![0.0; xs.len()];
    let mut dw = vec![0.0; ws.len()];
    let mut db = vec![0.0; g.co];
    for co in 0..g.co {
        let dy_c = &dys[co * plane..(co + 1) * plane];
        db[co] = dy_c.iter().sum();
        for ci in 0..g.ci {
            let base = ci * g.h * g.w;
            for ki in 0..g.kh {
                let (r_lo, r_hi) = valid_range(g.h, g.oh, ki, g.stride, g.pad);
                for kj in 0..g.kw {
                    let widx = ((co * g.ci + ci) * g.kh + ki) * g.kw + kj;
                    let wv = ws[widx];
                    let (c_lo, c_hi) = valid_range(g.w, g.ow, kj, g.stride, g.pad);
                    let mut acc = 0.0;
                    for orow in r_lo..r_hi {
                        let ir = orow * g.stride + ki - g.pad;
                        let dy_row = &dy_c[orow * g.ow..(orow + 1) * g.ow];
                        let row_off = base + ir * g.w;
                        if g.stride == 1 {
                            let start = row_off + c_lo + kj - g.pad;
                            let n = c_hi - c_lo;
                            let src = &xs[start..start + n];
                            let dst = &mut dx[start..start + n];
                            for ((d, &s), &gy) in dst.iter_mut().zip(src).zip(&dy_row[c_lo..c_hi]) {
                                acc += gy * s;
                                *d += wv * gy;
                            }
                        } else {
                            for oc in c_lo..c_hi {
                                let idx = row_off + oc * g.stride + kj - g.pad;
                                acc += dy_row[oc] * xs[idx];
                                dx[idx] += wv * dy_row[oc];
                            }
                        }
                    }
                    dw[widx] += acc;
                }
            }
        }
    }
    Ok((
        Tensor::from_raw(x.shape().to_vec(), dx),
        Tensor::from_raw(w.shape().to_vec(), dw),
        Tensor::from_raw(vec![g.co], db),
    ))
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::from_raw(
        x.shape().to_vec(),
        x.data().iter().map(|&v| v.max(0.0)).collect(),
    )
}

pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    Tensor::from_raw(
        x.shape().to_vec(),
        x.data()
            .iter()
            .zip(dy.data())
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
    )
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and, for each
/// output element, the flat input index of its maximum.
pub fn maxpool2x2(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (c, h, w) = x.dims3("maxpool2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape("maxpool2x2", format!("extents {h}x{w} must be even")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xs = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = (ch * h + 2 * i) * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (ch * h + 2 * i + di) * w + 2 * j + dj;
                    if xs[idx] > xs[best] {
                        best = idx;
                    }
                }
                out.push(xs[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::from_raw(vec![c, oh, ow], out), arg))
}

pub fn maxpool2x2_backward(input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = vec![0.0; input_shape.iter().product()];
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        dx[idx] += g;
    }
    Tensor::from_raw(input_shape.to_vec(), dx)
}

/// Source taps of a half-pixel-centred bilinear 2x upsample along one axis.
fn bilinear_taps(n: usize, o: usize) -> [(usize, f64); 2] {
    let i = o / 2;
    let nb = if o % 2 == 0 {
        i.saturating_sub(1)
    } else {
        (i + 1).min(n - 1)
    };
    [(i, 0.75), (nb, 0.25)]
}

/// Bilinear 2x upsampling (half-pixel centres, edge clamped).
pub fn upsample_bilinear2x(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.dims3("upsample_bilinear2x")?;
    let (oh, ow) = (2 * h, 2 * w);
    let xs = x.data();
    let col_taps: Vec<_> = (0..ow).map(|o| bilinear_taps(w, o)).collect();
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for orow in 0..oh {
            let dst = &mut out[(ch * oh + orow) * ow..(ch * oh + orow + 1) * ow];
            for (ir, wr) in bilinear_taps(h, orow) {
                let src = &xs[(ch * h + ir) * w..(ch * h + ir + 1) * w];
                for (d, taps) in dst.iter_mut().zip(&col_taps) {
                    *d += wr * (taps[0].1 * src[taps[0].0] + taps[1].1 * src[taps[1].0]);
                }
            }
        }
    }
    Ok(Tensor::from_raw(vec![c, oh, ow], out))
}

pub fn upsample_bilinear2x_backward(input_shape: &[usize], dy: &Tensor) -> Tensor {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (oh, ow) = (2 * h, 2 * w);
    let col_taps: Vec<_> = (0..ow).map(|o| bilinear_taps(w, o)).collect();
    let dys = dy.data();
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        for orow in 0..oh {
            let g = &dys[(ch * oh + orow) * ow..(ch * oh + orow + 1) * ow];
            for (ir, wr) in bilinear_taps(h, orow) {
                let dst = &mut dx[(ch * h + ir) * w..(ch * h + ir + 1) * w];
                for (&gv, taps) in g.iter().zip(&col_taps) {
                    dst[taps[0].0] += wr * taps[0].1 * gv;
                    dst[taps[1].0] += wr * taps[1].1 * gv;
                }
            }
        }
    }
    Tensor::from_raw(input_shape.to_vec(), dx)
}

/// Concatenation along the leading (channel) axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat_channels needs at least one operand"))?;
    let tail = &first.shape()[1..];
    let mut channels = 0;
    for p in parts {
        if &p.shape()[1..] != tail {
            return Err(Error::shape(
                "concat_channels",
                format!("trailing extents {:?} do not match {:?}", &p.shape()[1..], tail),
            ));
        }
        channels += p.shape()[0];
    }
    let mut data = Vec::with_capacity(channels * tail.iter().product::<usize>());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let mut shape = vec![channels];
    shape.extend_from_slice(tail);
    Ok(Tensor::from_raw(shape, data))
}

/// Fully connected map applied column-wise: `x: [C_in, N]`, `w: [C_out, C_in]`,
/// `b: [C_out]`, output `[C_out, N]`.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ci, n) = x.dims2("dense")?;
    let (co, wci) = w.dims2("dense")?;
    if wci != ci || b.shape() != [co] {
        return Err(Error::shape(
            "dense",
            format!("x {:?}, w {:?}, b {:?} are incompatible", x.shape(), w.shape(), b.shape()),
        ));
    }
    let (xs, ws) = (x.data(), w.data());
    let mut out = vec![0.0; co * n];
    for o in 0..co {
        let row = &mut out[o * n..(o + 1) * n];
        row.fill(b.data()[o]);
        for i in 0..ci {
            let wv = ws[o * ci + i];
            for (r, &v) in row.iter_mut().zip(&xs[i * n..(i + 1) * n]) {
                *r += wv * v;
            }
        }
    }
    Ok(Tensor::from_raw(vec![co, n], out))
}

pub fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (ci, n) = (x.shape()[0], x.shape()[1]);
    let co = w.shape()[0];
    let (xs, ws, dys) = (x.data(), w.data(), dy.data());
    let mut dx = vec![0.0; ci * n];
    let mut dw = vec![0.0; co * ci];
    let mut db = vec![0.0; co];
    for o in 0..co {
        let g = &dys[o * n..(o + 1) * n];
        db[o] = g.iter().sum();
        for i in 0..ci {
            let xr = &xs[i * n..(i + 1) * n];
            dw[o * ci + i] = g.iter().zip(xr).map(|(a, b)| a * b).sum();
            let wv = ws[o * ci + i];
            for (d, &gv) in dx[i * n..(i + 1) * n].iter_mut().zip(g) {
                *d += wv * gv;
            }
        }
    }
    (
        Tensor::from_raw(vec![ci, n], dx),
        Tensor::from_raw(vec![co, ci], dw),
        Tensor::from_raw(vec![co], db),
    )
}

/// Channel-wise maximum over the columns of `x: [C, N]`, skipping columns
/// whose mask entry is `false`. Output is `[C, 1]` plus the winning column
/// per channel.
pub fn max_over_points(x: &Tensor, mask: Option<&[bool]>) -> Result<(Tensor, Vec<usize>)> {
    let (c, n) = x.dims2("max_over_points")?;
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::shape(
                "max_over_points",
                format!("mask has {} entries for {n} points", m.len()),
            ));
        }
        if !m.iter().any(|&v| v) {
            return Err(Error::invalid("max_over_points: every point is masked"));
        }
    }
    let live = |j: usize| mask.map_or(true, |m| m[j]);
    let xs = x.data();
    let mut out = Vec::with_capacity(c);
    let mut arg = Vec::with_capacity(c);
    for ch in 0..c {
        let row = &xs[ch * n..(ch + 1) * n];
        let mut best: Option<usize> = None;
        for (j, &v) in row.iter().enumerate() {
            if live(j) && best.map_or(true, |b| v > row[b]) {
                best = Some(j);
            }
        }
        let b = best.expect("at least one live point");
        out.push(row[b]);
        arg.push(b);
    }
    Ok((Tensor::from_raw(vec![c, 1], out), arg))
}

pub fn max_over_points_backward(input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Tensor {
    let n = input_shape[1];
    let mut dx = vec![0.0; input_shape[0] * n];
    for (ch, (&j, &g)) in argmax.iter().zip(dy.data()).enumerate() {
        dx[ch * n + j] += g;
    }
    Tensor::from_raw(input_shape.to_vec(), dx)
}

/// Mean softmax cross-entropy of `logits: [C, ...]` against one label per
/// trailing position. Returns the loss and the softmax probabilities laid out
/// like `logits`.
pub fn softmax_ce(logits: &Tensor, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let c = logits.shape()[0];
    let p = logits.len() / c;
    if labels.len() != p {
        return Err(Error::shape(
            "softmax_ce",
            format!("{} labels for {p} positions", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("label {bad} out of range for {c} classes")));
    }
    let ls = logits.data();
    let mut probs = vec![0.0; ls.len()];
    let mut loss = 0.0;
    for (pos, &label) in labels.iter().enumerate() {
        let m = (0..c).map(|k| ls[k * p + pos]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..c).map(|k| (ls[k * p + pos] - m).exp()).sum();
        for k in 0..c {
            probs[k * p + pos] = (ls[k * p + pos] - m).exp() / z;
        }
        loss -= ls[label * p + pos] - m - z.ln();
    }
    Ok((loss / p as f64, probs))
}

pub fn softmax_ce_backward(shape: &[usize], probs: &[f64], labels: &[usize], dloss: f64) -> Tensor {
    let p = labels.len();
    let scale = dloss / p as f64;
    let mut dx: Vec<f64> = probs.iter().map(|v| v * scale).collect();
    for (pos, &label) in labels.iter().enumerate() {
        dx[label * p + pos] -= scale;
    }
    Tensor::from_raw(shape.to_vec(), dx)
}
