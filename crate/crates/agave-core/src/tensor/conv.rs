//! 2-D convolution kernels (forward, input gradient, kernel gradient).
//!
//! Layouts: input `[N, C_in, H, W]`, kernel `[C_out, C_in, KH, KW]`, output
//! `[N, C_out, HO, WO]`, all row-major. Stride-1 paths accumulate along
//! contiguous rows; per-element accumulation order is the same fixed
//! `(c_in, ky, kx)` nesting everywhere, so results do not depend on which
//! path ran.

use super::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvDims {
    pub fn out_extent(extent: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
        let padded = extent + 2 * pad;
        if padded < k || stride == 0 {
            return None;
        }
        Some((padded - k) / stride + 1)
    }
}

pub(crate) fn forward<S: Scalar>(input: &[S], kernel: &[S], d: &ConvDims, out: &mut [S]) {
    if d.stride == 1 {
        forward_stride1(input, kernel, d, out);
    } else {
        forward_naive(input, kernel, d, out);
    }
}

fn forward_stride1<S: Scalar>(input: &[S], kernel: &[S], d: &ConvDims, out: &mut [S]) {
    let pad = d.pad as isize;
    for n in 0..d.n {
        for co in 0..d.c_out {
            let out_base = (n * d.c_out + co) * d.ho * d.wo;
            for ci in 0..d.c_in {
                let in_base = (n * d.c_in + ci) * d.h * d.w;
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let alpha = kernel[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx];
                        if alpha == S::zero() {
                            continue; // masked taps
                        }
                        let kx = kx as isize;
                        let ox_lo = (pad - kx).max(0) as usize;
                        let ox_hi = ((d.w as isize + pad - kx).min(d.wo as isize)).max(0) as usize;
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        let len = ox_hi - ox_lo;
                        for oy in 0..d.ho {
                            let iy = oy as isize + ky as isize - pad;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            let ix_lo = (ox_lo as isize + kx - pad) as usize;
                            let orow = &mut out[out_base + oy * d.wo + ox_lo..][..len];
                            let irow = &input[in_base + iy as usize * d.w + ix_lo..][..len];
                            for (o, i) in orow.iter_mut().zip(irow) {
                                *o += alpha * *i;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn forward_naive<S: Scalar>(input: &[S], kernel: &[S], d: &ConvDims, out: &mut [S]) {
    for n in 0..d.n {
        for co in 0..d.c_out {
            for oy in 0..d.ho {
                for ox in 0..d.wo {
                    let mut acc = S::zero();
                    for ci in 0..d.c_in {
                        for ky in 0..d.kh {
                            let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            for kx in 0..d.kw {
                                let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                                if ix < 0 || ix >= d.w as isize {
                                    continue;
                                }
                                let iv = input
                                    [(n * d.c_in + ci) * d.h * d.w + iy as usize * d.w + ix as usize];
                                let kv = kernel[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx];
                                acc += iv * kv;
                            }
                        }
                    }
                    out[(n * d.c_out + co) * d.ho * d.wo + oy * d.wo + ox] = acc;
                }
            }
        }
    }
}

pub(crate) fn input_grad<S: Scalar>(
    grad_out: &[S],
    kernel: &[S],
    d: &ConvDims,
    grad_in: &mut [S],
) {
    if d.stride == 1 {
        input_grad_stride1(grad_out, kernel, d, grad_in);
    } else {
        input_grad_naive(grad_out, kernel, d, grad_in);
    }
}

fn input_grad_stride1<S: Scalar>(grad_out: &[S], kernel: &[S], d: &ConvDims, grad_in: &mut [S]) {
    let pad = d.pad as isize;
    for n in 0..d.n {
        for co in 0..d.c_out {
            let gout_base = (n * d.c_out + co) * d.ho * d.wo;
            for ci in 0..d.c_in {
                let gin_base = (n * d.c_in + ci) * d.h * d.w;
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let alpha = kernel[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx];
                        if alpha == S::zero() {
                            continue;
                        }
                        let kx = kx as isize;
                        // ox = ix + pad - kx must fall in [0, wo)
                        let ix_lo = (kx - pad).max(0) as usize;
                        let ix_hi =
                            ((d.wo as isize + kx - pad).min(d.w as isize)).max(0) as usize;
                        if ix_lo >= ix_hi {
                            continue;
                        }
                        let len = ix_hi - ix_lo;
                        for iy in 0..d.h {
                            let oy = iy as isize + pad - ky as isize;
                            if oy < 0 || oy >= d.ho as isize {
                                continue;
                            }
                            let ox_lo = (ix_lo as isize + pad - kx) as usize;
                            let grow = &mut grad_in[gin_base + iy * d.w + ix_lo..][..len];
                            let orow = &grad_out[gout_base + oy as usize * d.wo + ox_lo..][..len];
                            for (gi, go) in grow.iter_mut().zip(orow) {
                                *gi += alpha * *go;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn input_grad_naive<S: Scalar>(grad_out: &[S], kernel: &[S], d: &ConvDims, grad_in: &mut [S]) {
    for n in 0..d.n {
        for co in 0..d.c_out {
            for oy in 0..d.ho {
                for ox in 0..d.wo {
                    let g = grad_out[(n * d.c_out + co) * d.ho * d.wo + oy * d.wo + ox];
                    for ci in 0..d.c_in {
                        for ky in 0..d.kh {
                            let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            for kx in 0..d.kw {
                                let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                                if ix < 0 || ix >= d.w as isize {
                                    continue;
                                }
                                let kv = kernel[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx];
                                grad_in[(n * d.c_in + ci) * d.h * d.w
                                    + iy as usize * d.w
                                    + ix as usize] += g * kv;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn kernel_grad<S: Scalar>(
    grad_out: &[S],
    input: &[S],
    d: &ConvDims,
    grad_kernel: &mut [S],
) {
    if d.stride == 1 {
        kernel_grad_stride1(grad_out, input, d, grad_kernel);
    } else {
        kernel_grad_naive(grad_out, input, d, grad_kernel);
    }
}

fn kernel_grad_stride1<S: Scalar>(grad_out: &[S], input: &[S], d: &ConvDims, grad_kernel: &mut [S]) {
    let pad = d.pad as isize;
    for co in 0..d.c_out {
        for ci in 0..d.c_in {
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let kx_i = kx as isize;
                    let ox_lo = (pad - kx_i).max(0) as usize;
                    let ox_hi = ((d.w as isize + pad - kx_i).min(d.wo as isize)).max(0) as usize;
                    let mut acc = S::zero();
                    if ox_lo < ox_hi {
                        let len = ox_hi - ox_lo;
                        for n in 0..d.n {
                            let gout_base = (n * d.c_out + co) * d.ho * d.wo;
                            let in_base = (n * d.c_in + ci) * d.h * d.w;
                            for oy in 0..d.ho {
                                let iy = oy as isize + ky as isize - pad;
                                if iy < 0 || iy >= d.h as isize {
                                    continue;
                                }
                                let ix_lo = (ox_lo as isize + kx_i - pad) as usize;
                                let orow = &grad_out[gout_base + oy * d.wo + ox_lo..][..len];
                                let irow = &input[in_base + iy as usize * d.w + ix_lo..][..len];
                                for (o, i) in orow.iter().zip(irow) {
                                    acc += *o * *i;
                                }
                            }
                        }
                    }
                    grad_kernel[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx] += acc;
                }
            }
        }
    }
}

fn kernel_grad_naive<S: Scalar>(grad_out: &[S], input: &[S], d: &ConvDims, grad_kernel: &mut [S]) {
    for n in 0..d.n {
        for co in 0..d.c_out {
            for oy in 0..d.ho {
                for ox in 0..d.wo {
                    let g = grad_out[(n * d.c_out + co) * d.ho * d.wo + oy * d.wo + ox];
                    for ci in 0..d.c_in {
                        for ky in 0..d.kh {
                            let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            for kx in 0..d.kw {
                                let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                                if ix < 0 || ix >= d.w as isize {
                                    continue;
                                }
                                let iv = input
                                    [(n * d.c_in + ci) * d.h * d.w + iy as usize * d.w + ix as usize];
                                grad_kernel[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx] += g * iv;
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
    use super::*;

    /// Independent oracle: direct definition of the convolution sum.
    fn conv_oracle(input: &[f64], kernel: &[f64], d: &ConvDims) -> Vec<f64> {
        let mut out = vec![0.0; d.n * d.c_out * d.ho * d.wo];
        for n in 0..d.n {
            for co in 0..d.c_out {
                for oy in 0..d.ho {
                    for ox in 0..d.wo {
                        let mut acc = 0.0;
                        for ci in 0..d.c_in {
                            for ky in 0..d.kh {
                                for kx in 0..d.kw {
                                    let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                                    let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                                    if iy < 0
                                        || iy >= d.h as isize
                                        || ix < 0
                                        || ix >= d.w as isize
                                    {
                                        continue;
                                    }
                                    acc += input[(n * d.c_in + ci) * d.h * d.w
                                        + iy as usize * d.w
                                        + ix as usize]
                                        * kernel[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx];
                                }
                            }
                        }
                        out[(n * d.c_out + co) * d.ho * d.wo + oy * d.wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn dims(n: usize, c_in: usize, h: usize, w: usize, c_out: usize, k: usize, stride: usize, pad: usize) -> ConvDims {
        ConvDims {
            n,
            c_in,
            h,
            w,
            c_out,
            kh: k,
            kw: k,
            stride,
            pad,
            ho: ConvDims::out_extent(h, k, stride, pad).unwrap(),
            wo: ConvDims::out_extent(w, k, stride, pad).unwrap(),
        }
    }

    #[test]
    fn ones_valid_conv_matches_oracle() {
        // 3x3 ones input, 2x2 ones kernel, valid padding -> 2x2 of 4s.
        let d = dims(1, 1, 3, 3, 1, 2, 1, 0);
        let input = vec![1.0f64; 9];
        let kernel = vec![1.0f64; 4];
        let mut out = vec![0.0; 4];
        forward(&input, &kernel, &d, &mut out);
        assert_eq!(out, vec![4.0; 4]);
        assert_eq!(out, conv_oracle(&input, &kernel, &d));
    }

    #[test]
    fn stride1_path_matches_oracle_on_random_input() {
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let d = dims(2, 3, 5, 7, 4, 3, 1, 1);
        let input: Vec<f64> = (0..d.n * d.c_in * d.h * d.w).map(|_| next()).collect();
        let kernel: Vec<f64> = (0..d.c_out * d.c_in * d.kh * d.kw).map(|_| next()).collect();
        let mut out = vec![0.0; d.n * d.c_out * d.ho * d.wo];
        forward(&input, &kernel, &d, &mut out);
        let want = conv_oracle(&input, &kernel, &d);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn strided_path_matches_oracle() {
        let mut v = 0.1f64;
        let d = dims(1, 2, 8, 8, 3, 3, 2, 1);
        let input: Vec<f64> = (0..d.n * d.c_in * d.h * d.w)
            .map(|_| {
                v = (v * 1.7 + 0.3) % 1.0;
                v
            })
            .collect();
        let kernel: Vec<f64> = (0..d.c_out * d.c_in * 9)
            .map(|_| {
                v = (v * 1.9 + 0.7) % 1.0;
                v - 0.5
            })
            .collect();
        assert_eq!(d.ho, 4);
        let mut out = vec![0.0; d.n * d.c_out * d.ho * d.wo];
        forward(&input, &kernel, &d, &mut out);
        let want = conv_oracle(&input, &kernel, &d);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
