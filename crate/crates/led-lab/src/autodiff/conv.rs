//! Spatial convolution primitives.
//!
//! `deconv2d` is the exact transpose of `conv2d` under a shared weight
//! tensor: ⟨deconv(x), y⟩ = ⟨x, conv(y)⟩. `dynamic_conv1x1` takes its
//! kernel from an activation rather than a parameter, so gradients flow
//! into the kernel as well as the input.

use super::tape::{AdError, GradSink, Tensor};

fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// 2-d cross-correlation: x[B,Cin,H,W] * w[Cout,Cin,kh,kw] + b[Cout].
pub fn conv2d(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor, AdError> {
    let (xs, ws) = (x.shape().to_vec(), w.shape().to_vec());
    if xs.len() != 4 || ws.len() != 4 {
        return Err(AdError::ShapeMismatch("conv2d expects 4-d x and w".into()));
    }
    let (bn, cin, h, wdt) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, wcin, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if cin != wcin {
        return Err(AdError::ShapeMismatch(format!(
            "conv2d: x has {cin} channels, w expects {wcin}"
        )));
    }
    if b.len() != cout {
        return Err(AdError::ShapeMismatch("conv2d: bias length != Cout".into()));
    }
    if stride < 1 || kh > h + 2 * pad || kw > wdt + 2 * pad {
        return Err(AdError::RejectedInput("conv2d: kernel exceeds padded input".into()));
    }
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(wdt, kw, stride, pad);

    let (vx, vw, vb) = (x.values_rc(), w.values_rc(), b.values_rc());
    let mut out = vec![0.0; bn * cout * oh * ow];
    for n in 0..bn {
        for co in 0..cout {
            let wbase_c = co * cin * kh * kw;
            let obase = (n * cout + co) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = vb[co];
                    for ci in 0..cin {
                        let xbase = (n * cin + ci) * h * wdt;
                        let wbase = wbase_c + ci * kh * kw;
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = xbase + iy as usize * wdt;
                            let wrow = wbase + ky * kw;
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= wdt as isize {
                                    continue;
                                }
                                acc += vx[xrow + ix as usize] * vw[wrow + kx];
                            }
                        }
                    }
                    out[obase + oy * ow + ox] = acc;
                }
            }
        }
    }

    let (ix, iw, ib) = (x.id(), w.id(), b.id());
    let req = x.requires_grad() || w.requires_grad() || b.requires_grad();
    let backward = move |g: &[f64], sink: &mut GradSink| {
        let (want_x, want_w, want_b) = (sink.wants(ix), sink.wants(iw), sink.wants(ib));
        for n in 0..bn {
            for co in 0..cout {
                let obase = (n * cout + co) * oh * ow;
                let wbase_c = co * cin * kh * kw;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let gv = g[obase + oy * ow + ox];
                        if gv == 0.0 {
                            continue;
                        }
                        if want_b {
                            sink.add(ib, co, gv);
                        }
                        for ci in 0..cin {
                            let xbase = (n * cin + ci) * h * wdt;
                            let wbase = wbase_c + ci * kh * kw;
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let xrow = xbase + iy as usize * wdt;
                                let wrow = wbase + ky * kw;
                                for kx in 0..kw {
                                    let ix_ = (ox * stride + kx) as isize - pad as isize;
                                    if ix_ < 0 || ix_ >= wdt as isize {
                                        continue;
                                    }
                                    let xi = xrow + ix_ as usize;
                                    if want_x {
                                        sink.add(ix, xi, gv * vw[wrow + kx]);
                                    }
                                    if want_w {
                                        sink.add(iw, wrow + kx, gv * vx[xi]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    Ok(x.make(
        vec![bn, cout, oh, ow],
        out,
        req,
        if req { Some(Box::new(backward)) } else { None },
    ))
}

/// Transposed convolution: the adjoint of `conv2d` for the same
/// w[Cout,Cin,kh,kw]. Maps x[B,Cout,H,W] to [B,Cin,H'',W''] with
/// H'' = (H−1)·stride − 2·pad + kh.
pub fn deconv2d(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor, AdError> {
    let (xs, ws) = (x.shape().to_vec(), w.shape().to_vec());
    if xs.len() != 4 || ws.len() != 4 {
        return Err(AdError::ShapeMismatch("deconv2d expects 4-d x and w".into()));
    }
    let (bn, xc, h, wdt) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, cin, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if xc != cout {
        return Err(AdError::ShapeMismatch(format!(
            "deconv2d: x has {xc} channels, w expects {cout}"
        )));
    }
    if b.len() != cin {
        return Err(AdError::ShapeMismatch("deconv2d: bias length != Cin".into()));
    }
    if stride < 1 {
        return Err(AdError::RejectedInput("deconv2d: stride must be ≥ 1".into()));
    }
    let oh = (h - 1) * stride + kh;
    let ow = (wdt - 1) * stride + kw;
    if oh < 2 * pad || ow < 2 * pad {
        return Err(AdError::RejectedInput("deconv2d: padding larger than output".into()));
    }
    let (oh, ow) = (oh - 2 * pad, ow - 2 * pad);

    let (vx, vw, vb) = (x.values_rc(), w.values_rc(), b.values_rc());
    let mut out = vec![0.0; bn * cin * oh * ow];
    for n in 0..bn {
        for ci in 0..cin {
            let obase = (n * cin + ci) * oh * ow;
            for o in out[obase..obase + oh * ow].iter_mut() {
                *o = vb[ci];
            }
        }
        for co in 0..cout {
            let xbase = (n * cout + co) * h * wdt;
            for iy in 0..h {
                for ix in 0..wdt {
                    let xv = vx[xbase + iy * wdt + ix];
                    if xv == 0.0 {
                        continue;
                    }
                    for ci in 0..cin {
                        let obase = (n * cin + ci) * oh * ow;
                        let wbase = (co * cin + ci) * kh * kw;
                        for ky in 0..kh {
                            let oy = (iy * stride + ky) as isize - pad as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let orow = obase + oy as usize * ow;
                            let wrow = wbase + ky * kw;
                            for kx in 0..kw {
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if ox < 0 || ox >= ow as isize {
                                    continue;
                                }
                                out[orow + ox as usize] += xv * vw[wrow + kx];
                            }
                        }
                    }
                }
            }
        }
    }

    let (ixid, iw, ib) = (x.id(), w.id(), b.id());
    let req = x.requires_grad() || w.requires_grad() || b.requires_grad();
    let backward = move |g: &[f64], sink: &mut GradSink| {
        let (want_x, want_w, want_b) = (sink.wants(ixid), sink.wants(iw), sink.wants(ib));
        if want_b {
            for n in 0..bn {
                for ci in 0..cin {
                    let obase = (n * cin + ci) * oh * ow;
                    let s: f64 = g[obase..obase + oh * ow].iter().sum();
                    sink.add(ib, ci, s);
                }
            }
        }
        for n in 0..bn {
            for co in 0..cout {
                let xbase = (n * cout + co) * h * wdt;
                for iy in 0..h {
                    for ix in 0..wdt {
                        let xi = xbase + iy * wdt + ix;
                        let xv = vx[xi];
                        let mut dx = 0.0;
                        for ci in 0..cin {
                            let obase = (n * cin + ci) * oh * ow;
                            let wbase = (co * cin + ci) * kh * kw;
                            for ky in 0..kh {
                                let oy = (iy * stride + ky) as isize - pad as isize;
                                if oy < 0 || oy >= oh as isize {
                                    continue;
                                }
                                let orow = obase + oy as usize * ow;
                                let wrow = wbase + ky * kw;
                                for kx in 0..kw {
                                    let ox = (ix * stride + kx) as isize - pad as isize;
                                    if ox < 0 || ox >= ow as isize {
                                        continue;
                                    }
                                    let gv = g[orow + ox as usize];
                                    if gv == 0.0 {
                                        continue;
                                    }
                                    dx += gv * vw[wrow + kx];
                                    if want_w {
                                        sink.add(iw, wrow + kx, gv * xv);
                                    }
                                }
                            }
                        }
                        if want_x {
                            sink.add(ixid, xi, dx);
                        }
                    }
                }
            }
        }
    };
    Ok(x.make(
        vec![bn, cin, oh, ow],
        out,
        req,
        if req { Some(Box::new(backward)) } else { None },
    ))
}

/// Per-example 1×1 convolution with an activation kernel:
/// out[b,o,h,w] = Σ_c k[b,o,c] · x[b,c,h,w]. Gradients flow to both
/// x and k.
pub fn dynamic_conv1x1(x: &Tensor, k: &Tensor) -> Result<Tensor, AdError> {
    let (xs, ks) = (x.shape().to_vec(), k.shape().to_vec());
    if xs.len() != 4 || ks.len() != 3 {
        return Err(AdError::ShapeMismatch("dynamic_conv1x1 expects x[B,C,H,W], k[B,Co,C]".into()));
    }
    let (bn, c, h, wdt) = (xs[0], xs[1], xs[2], xs[3]);
    let (kb, co, kc) = (ks[0], ks[1], ks[2]);
    if kb != bn || kc != c {
        return Err(AdError::ShapeMismatch(format!(
            "dynamic_conv1x1: x is [{bn},{c},..], k is [{kb},{co},{kc}]"
        )));
    }
    let hw = h * wdt;
    let (vx, vk) = (x.values_rc(), k.values_rc());
    let mut out = vec![0.0; bn * co * hw];
    for n in 0..bn {
        for o in 0..co {
            let obase = (n * co + o) * hw;
            for ci in 0..c {
                let kv = vk[(n * co + o) * c + ci];
                if kv == 0.0 {
                    continue;
                }
                let xbase = (n * c + ci) * hw;
                for i in 0..hw {
                    out[obase + i] += kv * vx[xbase + i];
                }
            }
        }
    }
    let (ixid, ik) = (x.id(), k.id());
    let req = x.requires_grad() || k.requires_grad();
    let backward = move |g: &[f64], sink: &mut GradSink| {
        let (want_x, want_k) = (sink.wants(ixid), sink.wants(ik));
        for n in 0..bn {
            for o in 0..co {
                let obase = (n * co + o) * hw;
                for ci in 0..c {
                    let xbase = (n * c + ci) * hw;
                    let kv = vk[(n * co + o) * c + ci];
                    let mut dk = 0.0;
                    for i in 0..hw {
                        let gv = g[obase + i];
                        if gv == 0.0 {
                            continue;
                        }
                        if want_x {
                            sink.add(ixid, xbase + i, gv * kv);
                        }
                        dk += gv * vx[xbase + i];
                    }
                    if want_k {
                        sink.add(ik, (n * co + o) * c + ci, dk);
                    }
                }
            }
        }
    };
    Ok(x.make(
        vec![bn, co, h, wdt],
        out,
        req,
        if req { Some(Box::new(backward)) } else { None },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tape::Tape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn conv_with_ones_1x1_kernel_is_channel_sum() {
        let t = Tape::new();
        let x = t.constant(&[1, 3, 2, 2], (0..12).map(|v| v as f64).collect());
        let w = t.constant(&[1, 3, 1, 1], vec![1.0; 3]);
        let b = t.constant(&[1], vec![0.0]);
        let y = conv2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        // channel sum at each pixel: x[0]+x[4]+x[8], ...
        for i in 0..4 {
            let expect = (i + i + 4 + i + 8) as f64;
            assert_eq!(y.values()[i], expect);
        }
    }

    #[test]
    fn conv_of_zeros_is_bias() {
        let t = Tape::new();
        let x = t.constant(&[2, 2, 3, 3], vec![0.0; 36]);
        let w = t.constant(&[2, 2, 2, 2], vec![0.3; 16]);
        let b = t.constant(&[2], vec![-1.5, 2.5]);
        let y = conv2d(&x, &w, &b, 1, 0).unwrap();
        for n in 0..2 {
            for co in 0..2 {
                for i in 0..4 {
                    assert_eq!(y.values()[(n * 2 + co) * 4 + i], b.values()[co]);
                }
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let t = Tape::new();
        let x = t.constant(&[1, 3, 4, 4], vec![0.0; 48]);
        let w = t.constant(&[2, 4, 3, 3], vec![0.0; 72]);
        let b = t.constant(&[2], vec![0.0; 2]);
        assert!(matches!(conv2d(&x, &w, &b, 1, 1), Err(AdError::ShapeMismatch(_))));
    }

    #[test]
    fn deconv_identity_kernel_is_identity() {
        let t = Tape::new();
        let x = t.constant(&[1, 1, 3, 3], (0..9).map(|v| v as f64).collect());
        let w = t.constant(&[1, 1, 1, 1], vec![1.0]);
        let b = t.constant(&[1], vec![0.0]);
        let y = deconv2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.values(), x.values());
    }

    #[test]
    fn deconv_is_adjoint_of_conv() {
        // ⟨deconv(x), y⟩ = ⟨x, conv(y)⟩ with shared weights.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for &(stride, pad) in &[(1usize, 0usize), (2, 1), (2, 0)] {
            let t = Tape::new();
            // shapes chosen so (H + 2·pad − kh) is divisible by the stride;
            // otherwise conv discards trailing rows and the transpose lives
            // in a smaller space
            let (cin, cout, h, w_) = (2usize, 3usize, 5usize, 5usize);
            let (kh, kw) = (3usize, 3usize);
            let oh = (h + 2 * pad - kh) / stride + 1;
            let ow = (w_ + 2 * pad - kw) / stride + 1;
            let y = t.constant(&[1, cin, h, w_], (0..cin * h * w_).map(|_| rng.gen::<f64>() - 0.5).collect());
            let x = t.constant(&[1, cout, oh, ow], (0..cout * oh * ow).map(|_| rng.gen::<f64>() - 0.5).collect());
            let w = t.constant(&[cout, cin, kh, kw], (0..cout * cin * kh * kw).map(|_| rng.gen::<f64>() - 0.5).collect());
            let zb_in = t.constant(&[cin], vec![0.0; cin]);
            let zb_out = t.constant(&[cout], vec![0.0; cout]);
            let conv_y = conv2d(&y, &w, &zb_out, stride, pad).unwrap();
            let deconv_x = deconv2d(&x, &w, &zb_in, stride, pad).unwrap();
            assert_eq!(deconv_x.shape(), y.shape());
            let lhs: f64 = deconv_x.values().iter().zip(y.values()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.values().iter().zip(conv_y.values()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-8, "stride={stride} pad={pad}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn dynamic_conv_identity_and_zero_kernels() {
        let t = Tape::new();
        let x = t.constant(&[1, 2, 2, 2], (0..8).map(|v| v as f64).collect());
        let ident = t.constant(&[1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let y = dynamic_conv1x1(&x, &ident).unwrap();
        assert_eq!(y.values(), x.values());
        let zero = t.constant(&[1, 2, 2], vec![0.0; 4]);
        let z = dynamic_conv1x1(&x, &zero).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let bad = t.constant(&[1, 2, 3], vec![0.0; 6]);
        assert!(dynamic_conv1x1(&x, &bad).is_err());
    }

    #[test]
    fn zero_kernel_grad_is_spatial_correlation() {
        // with k = 0, d loss/d k[b,o,c] = Σ_hw g[b,o,h,w]·x[b,c,h,w];
        // for loss = sum(out), g = 1 so the grad is the channel-sum of x.
        let t = Tape::new();
        let xv: Vec<f64> = (0..8).map(|v| v as f64 * 0.5).collect();
        let x = t.constant(&[1, 2, 2, 2], xv.clone());
        let k = t.leaf(&[1, 2, 2], vec![0.0; 4]);
        let out = dynamic_conv1x1(&x, &k).unwrap();
        let loss = out.sum();
        t.backward(&loss).unwrap();
        let g = k.grad().unwrap();
        let ch0: f64 = xv[0..4].iter().sum();
        let ch1: f64 = xv[4..8].iter().sum();
        assert_eq!(g, vec![ch0, ch1, ch0, ch1]);
    }
}
