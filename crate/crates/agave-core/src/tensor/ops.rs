//! Forward implementations of the operation catalog.
//!
//! Binary elementwise ops broadcast their operands by inserting explicit
//! `Broadcast` nodes, so every recorded binary node sees equal shapes and the
//! broadcast adjoint (sum over expanded axes) lives in exactly one place.

use super::conv::{self, ConvDims};
use super::{broadcast_shape, numel, strides, Graph, Op, Result, Scalar, TensorError, TensorId};

/// Numerically stable logistic sigmoid.
pub(crate) fn sigmoid64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus64(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 - e^{-d})` for `d > 0`.
pub(crate) fn log1mexp(d: f64) -> f64 {
    if d > std::f64::consts::LN_2 {
        (-(-d).exp()).ln_1p()
    } else {
        (-(-d).exp_m1()).ln()
    }
}

/// Log-mass of one discretized-logistic bin and its partials.
///
/// `yv` is a quantized value in [0, 255]; the bin is `[c*k, c*(k+1))` with
/// `c = 256/bins` and `k = floor(yv/c)`. The bottom bin integrates the lower
/// tail from -inf and the top bin the upper tail to +inf. Everything is
/// evaluated through log-CDF differences so tiny masses stay finite.
/// Returns `(logp, dlogp/dmu, dlogp/dscale)`.
pub(crate) fn disc_logistic_terms(yv: f64, mu: f64, s: f64, bins: u32) -> (f64, f64, f64) {
    let c = 256.0 / bins as f64;
    let k = (yv / c).floor().clamp(0.0, (bins - 1) as f64);
    let lo = (c * k - mu) / s;
    let hi = (c * (k + 1.0) - mu) / s;
    let (logp, dh, dl);
    if k == 0.0 {
        logp = -softplus64(-hi);
        dh = sigmoid64(-hi);
        dl = 0.0;
    } else if k == (bins - 1) as f64 {
        logp = -softplus64(lo);
        dh = 0.0;
        dl = -sigmoid64(lo);
    } else {
        let d = c / s;
        let r = 1.0 / d.exp_m1();
        logp = -softplus64(-hi) - softplus64(lo) + log1mexp(d);
        dh = sigmoid64(-hi) + r;
        dl = -(sigmoid64(lo) + r);
    }
    let dmu = -(dh + dl) / s;
    let ds = -(dh * hi + dl * lo) / s;
    (logp, dmu, ds)
}

pub(crate) fn broadcast_map(from: &[usize], to: &[usize]) -> Vec<usize> {
    // Per output flat index, the flat index into `from` (right-aligned).
    let nd = to.len();
    let mut padded = vec![1usize; nd];
    padded[nd - from.len()..].copy_from_slice(from);
    let from_strides = strides(&padded);
    let n = numel(to);
    let mut map = vec![0usize; n];
    let to_strides = strides(to);
    for (flat, slot) in map.iter_mut().enumerate() {
        let mut src = 0usize;
        for d in 0..nd {
            let coord = flat / to_strides[d] % to[d];
            if padded[d] != 1 {
                src += coord * from_strides[d];
            }
        }
        *slot = src;
    }
    map
}

impl<S: Scalar> Graph<S> {
    /// Expand `x` to `target` under right-aligned broadcast rules.
    pub fn broadcast(&mut self, x: TensorId, target: &[usize]) -> Result<TensorId> {
        let from = self.shape(x).to_vec();
        if from == target {
            return Ok(x);
        }
        let merged = broadcast_shape(&from, target)?;
        if merged != target {
            return Err(TensorError::ShapeMismatch(format!(
                "{from:?} does not broadcast to {target:?}"
            )));
        }
        let map = broadcast_map(&from, target);
        let src = &self.nodes[x.0].data;
        let data: Vec<S> = map.iter().map(|&i| src[i]).collect();
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(data, target.to_vec(), rg, Op::Broadcast(x)))
    }

    fn binary(
        &mut self,
        a: TensorId,
        b: TensorId,
        f: impl Fn(S, S) -> S,
        op: impl Fn(TensorId, TensorId) -> Op,
    ) -> Result<TensorId> {
        let target = broadcast_shape(self.shape(a), self.shape(b))?;
        let a = self.broadcast(a, &target)?;
        let b = self.broadcast(b, &target)?;
        let data: Vec<S> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.out_requires_grad(&[a, b]);
        Ok(self.push(data, target, rg, op(a, b)))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.nodes[b.0].data.iter().any(|v| *v == S::zero()) {
            return Err(TensorError::DomainError("division by zero".into()));
        }
        self.binary(a, b, |x, y| x / y, Op::Div)
    }

    /// Elementwise maximum; ties route the gradient to the first operand.
    pub fn maximum(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, |x, y| if x >= y { x } else { y }, Op::Maximum)
    }

    pub fn minimum(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let na = self.neg(a)?;
        let nb = self.neg(b)?;
        let m = self.maximum(na, nb)?;
        self.neg(m)
    }

    fn unary(&mut self, x: TensorId, f: impl Fn(S) -> S, op: Op) -> TensorId {
        let data: Vec<S> = self.nodes[x.0].data.iter().map(|&v| f(v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.nodes[x.0].requires_grad;
        self.push(data, shape, rg, op)
    }

    pub fn neg(&mut self, x: TensorId) -> Result<TensorId> {
        Ok(self.unary(x, |v| -v, Op::Neg(x)))
    }

    pub fn exp(&mut self, x: TensorId) -> Result<TensorId> {
        Ok(self.unary(x, |v| v.exp(), Op::Exp(x)))
    }

    pub fn log(&mut self, x: TensorId) -> Result<TensorId> {
        if self.nodes[x.0].data.iter().any(|v| *v <= S::zero()) {
            return Err(TensorError::DomainError(
                "log requires strictly positive input".into(),
            ));
        }
        Ok(self.unary(x, |v| v.ln(), Op::Log(x)))
    }

    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId> {
        Ok(self.unary(x, |v| S::of(sigmoid64(v.f64())), Op::Sigmoid(x)))
    }

    pub fn tanh(&mut self, x: TensorId) -> Result<TensorId> {
        Ok(self.unary(x, |v| v.tanh(), Op::Tanh(x)))
    }

    pub fn elu(&mut self, x: TensorId) -> Result<TensorId> {
        Ok(self.unary(
            x,
            |v| if v > S::zero() { v } else { v.exp() - S::one() },
            Op::Elu(x),
        ))
    }

    pub fn softplus(&mut self, x: TensorId) -> Result<TensorId> {
        Ok(self.unary(x, |v| S::of(softplus64(v.f64())), Op::Softplus(x)))
    }

    /// `step * floor(x / step)`. The derivative is zero almost everywhere and
    /// is defined as zero; the op belongs in data preprocessing, not inside a
    /// loss graph.
    pub fn quantize_floor(&mut self, x: TensorId, step: f64) -> Result<TensorId> {
        if step <= 0.0 {
            return Err(TensorError::DomainError(
                "quantize_floor step must be positive".into(),
            ));
        }
        let s = S::of(step);
        Ok(self.unary(x, |v| (v / s).floor() * s, Op::QuantizeFloor(x)))
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul expects [m,k]x[k,n], got {sa:?} x {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n);
        let rg = self.out_requires_grad(&[a, b]);
        Ok(self.push(data, vec![m, n], rg, Op::MatMul(a, b)))
    }

    /// 2-D convolution over `[N, C_in, H, W]` with kernel
    /// `[C_out, C_in, KH, KW]`, symmetric zero padding.
    pub fn conv2d(
        &mut self,
        input: TensorId,
        kernel: TensorId,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        let d = self.conv_dims(input, kernel, stride, pad)?;
        let mut out = vec![S::zero(); d.n * d.c_out * d.ho * d.wo];
        conv::forward(
            &self.nodes[input.0].data,
            &self.nodes[kernel.0].data,
            &d,
            &mut out,
        );
        let rg = self.out_requires_grad(&[input, kernel]);
        Ok(self.push(
            out,
            vec![d.n, d.c_out, d.ho, d.wo],
            rg,
            Op::Conv2d {
                input,
                kernel,
                stride,
                pad,
            },
        ))
    }

    pub(crate) fn conv_dims(
        &self,
        input: TensorId,
        kernel: TensorId,
        stride: usize,
        pad: usize,
    ) -> Result<ConvDims> {
        let si = self.shape(input);
        let sk = self.shape(kernel);
        if si.len() != 4 || sk.len() != 4 || si[1] != sk[1] {
            return Err(TensorError::ShapeMismatch(format!(
                "conv2d expects input [n,c,h,w] and kernel [co,c,kh,kw], got {si:?} and {sk:?}"
            )));
        }
        let ho = ConvDims::out_extent(si[2], sk[2], stride, pad);
        let wo = ConvDims::out_extent(si[3], sk[3], stride, pad);
        match (ho, wo) {
            (Some(ho), Some(wo)) if ho > 0 && wo > 0 => Ok(ConvDims {
                n: si[0],
                c_in: si[1],
                h: si[2],
                w: si[3],
                c_out: sk[0],
                kh: sk[2],
                kw: sk[3],
                stride,
                pad,
                ho,
                wo,
            }),
            _ => Err(TensorError::ShapeMismatch(format!(
                "conv2d output empty for input {si:?}, kernel {sk:?}, stride {stride}, pad {pad}"
            ))),
        }
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, x: TensorId) -> Result<TensorId> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "transpose expects a 2-d tensor, got {s:?}"
            )));
        }
        let (r, c) = (s[0], s[1]);
        let src = &self.nodes[x.0].data;
        let mut data = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(data, vec![c, r], rg, Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        if numel(&shape) != self.nodes[x.0].data.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "reshape from {:?} to {shape:?} changes element count",
                self.shape(x)
            )));
        }
        let data = self.nodes[x.0].data.clone();
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(data, shape, rg, Op::Reshape(x)))
    }

    pub fn concat(&mut self, inputs: &[TensorId], axis: usize) -> Result<TensorId> {
        if inputs.is_empty() {
            return Err(TensorError::ShapeMismatch("concat of zero tensors".into()));
        }
        let first = self.shape(inputs[0]).to_vec();
        if axis >= first.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "concat axis {axis} out of range for {first:?}"
            )));
        }
        let mut axis_total = 0usize;
        for &id in inputs {
            let s = self.shape(id);
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(TensorError::ShapeMismatch(format!(
                    "concat shapes {s:?} vs {first:?} differ outside axis {axis}"
                )));
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![S::zero(); numel(&out_shape)];
        let mut offset = 0usize;
        for &id in inputs {
            let extent = self.shape(id)[axis];
            let src = &self.nodes[id.0].data;
            for o in 0..outer {
                let dst_base = (o * axis_total + offset) * inner;
                let src_base = o * extent * inner;
                data[dst_base..dst_base + extent * inner]
                    .copy_from_slice(&src[src_base..src_base + extent * inner]);
            }
            offset += extent;
        }
        let rg = self.out_requires_grad(inputs);
        Ok(self.push(
            data,
            out_shape,
            rg,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// Sub-tensor `[lo, hi)` per axis.
    pub fn slice(&mut self, x: TensorId, ranges: &[(usize, usize)]) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        if ranges.len() != s.len()
            || ranges
                .iter()
                .zip(&s)
                .any(|(&(lo, hi), &d)| lo >= hi || hi > d)
        {
            return Err(TensorError::ShapeMismatch(format!(
                "slice ranges {ranges:?} invalid for shape {s:?}"
            )));
        }
        let out_shape: Vec<usize> = ranges.iter().map(|&(lo, hi)| hi - lo).collect();
        let in_strides = strides(&s);
        let out_strides = strides(&out_shape);
        let n = numel(&out_shape);
        let src = &self.nodes[x.0].data;
        let mut data = vec![S::zero(); n];
        for (flat, slot) in data.iter_mut().enumerate() {
            let mut src_idx = 0usize;
            for d in 0..s.len() {
                let coord = flat / out_strides[d] % out_shape[d];
                src_idx += (coord + ranges[d].0) * in_strides[d];
            }
            *slot = src[src_idx];
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            data,
            out_shape,
            rg,
            Op::Slice {
                input: x,
                ranges: ranges.to_vec(),
            },
        ))
    }

    /// Zero padding of `(lo, hi)` elements per axis.
    pub fn pad_zero(&mut self, x: TensorId, pads: &[(usize, usize)]) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        if pads.len() != s.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "pad spec {pads:?} does not match rank of {s:?}"
            )));
        }
        let out_shape: Vec<usize> = s
            .iter()
            .zip(pads)
            .map(|(&d, &(lo, hi))| lo + d + hi)
            .collect();
        let in_strides = strides(&s);
        let out_strides = strides(&out_shape);
        let mut data = vec![S::zero(); numel(&out_shape)];
        let src = &self.nodes[x.0].data;
        for flat in 0..src.len() {
            let mut dst = 0usize;
            for d in 0..s.len() {
                let coord = flat / in_strides[d] % s[d];
                dst += (coord + pads[d].0) * out_strides[d];
            }
            data[dst] = src[flat];
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            data,
            out_shape,
            rg,
            Op::Pad {
                input: x,
                pads: pads.to_vec(),
            },
        ))
    }

    /// Sum over one axis, or over everything when `axis` is `None`.
    /// Reduction order is fixed left-to-right, row-major.
    pub fn sum(&mut self, x: TensorId, axis: Option<usize>) -> Result<TensorId> {
        self.reduce(x, axis, Op::Sum { input: x, axis }, |acc, v, _| acc + v)
    }

    pub fn mean(&mut self, x: TensorId, axis: Option<usize>) -> Result<TensorId> {
        self.reduce(x, axis, Op::Mean { input: x, axis }, |acc, v, count| {
            acc + v / S::of(count as f64)
        })
    }

    fn reduce(
        &mut self,
        x: TensorId,
        axis: Option<usize>,
        op: Op,
        fold: impl Fn(S, S, usize) -> S,
    ) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        let src = &self.nodes[x.0].data;
        let (data, out_shape) = match axis {
            None => {
                let count = src.len().max(1);
                let mut acc = S::zero();
                for &v in src {
                    acc = fold(acc, v, count);
                }
                (vec![acc], vec![1])
            }
            Some(ax) => {
                if ax >= s.len() {
                    return Err(TensorError::ShapeMismatch(format!(
                        "reduce axis {ax} out of range for {s:?}"
                    )));
                }
                let outer: usize = s[..ax].iter().product();
                let extent = s[ax];
                let inner: usize = s[ax + 1..].iter().product();
                let mut out = vec![S::zero(); outer * inner];
                for o in 0..outer {
                    for a in 0..extent {
                        for i in 0..inner {
                            let v = src[(o * extent + a) * inner + i];
                            out[o * inner + i] = fold(out[o * inner + i], v, extent);
                        }
                    }
                }
                let mut out_shape: Vec<usize> =
                    s.iter().enumerate().filter(|&(d, _)| d != ax).map(|(_, &e)| e).collect();
                if out_shape.is_empty() {
                    out_shape.push(1);
                }
                (out, out_shape)
            }
        };
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(data, out_shape, rg, op))
    }

    /// `log(sum(exp(x)))` over one axis with max-subtraction.
    pub fn log_sum_exp(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "log_sum_exp axis {axis} out of range for {s:?}"
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let extent = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let src = &self.nodes[x.0].data;
        let mut out = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut m = S::neg_infinity();
                for a in 0..extent {
                    let v = src[(o * extent + a) * inner + i];
                    if v > m {
                        m = v;
                    }
                }
                let mut acc = S::zero();
                for a in 0..extent {
                    acc += (src[(o * extent + a) * inner + i] - m).exp();
                }
                out[o * inner + i] = m + acc.ln();
            }
        }
        let mut out_shape: Vec<usize> = s
            .iter()
            .enumerate()
            .filter(|&(d, _)| d != axis)
            .map(|(_, &e)| e)
            .collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(out, out_shape, rg, Op::LogSumExp { input: x, axis }))
    }

    /// Per-element log-mass of a discretized logistic over `bins` color
    /// levels. `y` holds quantized values in [0, 255] and receives no
    /// gradient; `mu` and `scale` broadcast to the shape of `y`.
    pub fn disc_logistic(
        &mut self,
        y: TensorId,
        mu: TensorId,
        scale: TensorId,
        bins: u32,
    ) -> Result<TensorId> {
        if !(2..=256).contains(&bins) || !bins.is_power_of_two() {
            return Err(TensorError::DomainError(format!(
                "color level count must be a power of two in [2, 256], got {bins}"
            )));
        }
        let target = self.shape(y).to_vec();
        if self
            .nodes[y.0]
            .data
            .iter()
            .any(|v| v.f64() < 0.0 || v.f64() > 255.0)
        {
            return Err(TensorError::DomainError(
                "quantized values must lie in [0, 255]".into(),
            ));
        }
        let mu = self.broadcast(mu, &target)?;
        let scale = self.broadcast(scale, &target)?;
        if self.nodes[scale.0].data.iter().any(|v| *v <= S::zero()) {
            return Err(TensorError::DomainError(
                "logistic scale must be positive".into(),
            ));
        }
        let n = self.nodes[y.0].data.len();
        let mut data = vec![S::zero(); n];
        for i in 0..n {
            let (logp, _, _) = disc_logistic_terms(
                self.nodes[y.0].data[i].f64(),
                self.nodes[mu.0].data[i].f64(),
                self.nodes[scale.0].data[i].f64(),
                bins,
            );
            data[i] = S::of(logp);
        }
        let rg = self.out_requires_grad(&[mu, scale]);
        Ok(self.push(data, target, rg, Op::DiscLogistic { y, mu, scale, bins }))
    }

    // ---- Conveniences built from catalog ops ----

    pub fn add_scalar(&mut self, x: TensorId, v: f64) -> Result<TensorId> {
        let c = self.scalar(v);
        self.add(x, c)
    }

    pub fn mul_scalar(&mut self, x: TensorId, v: f64) -> Result<TensorId> {
        let c = self.scalar(v);
        self.mul(x, c)
    }

    /// `a * x + b`.
    pub fn affine(&mut self, x: TensorId, a: f64, b: f64) -> Result<TensorId> {
        let scaled = self.mul_scalar(x, a)?;
        self.add_scalar(scaled, b)
    }

    /// Clamp to `[lo, hi]` elementwise (gradient is zero outside the band).
    pub fn clamp_scalar(&mut self, x: TensorId, lo: f64, hi: f64) -> Result<TensorId> {
        let lo = self.scalar(lo);
        let hi = self.scalar(hi);
        let m = self.maximum(x, lo)?;
        self.minimum(m, hi)
    }

    /// Sum over several axes (descending order so indices stay valid).
    pub fn sum_axes(&mut self, x: TensorId, axes: &[usize]) -> Result<TensorId> {
        let mut sorted: Vec<usize> = axes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut cur = x;
        for &ax in sorted.iter().rev() {
            cur = self.sum(cur, Some(ax))?;
        }
        Ok(cur)
    }
}

pub(crate) fn matmul_raw<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> Graph<f64> {
        Graph::new()
    }

    #[test]
    fn matmul_identity() {
        let mut g = graph();
        let a = g.constant(vec![1.0, 2.0, 3.0, 4.0], vec![2, 2]).unwrap();
        let eye = g.constant(vec![1.0, 0.0, 0.0, 1.0], vec![2, 2]).unwrap();
        let c = g.matmul(a, eye).unwrap();
        assert_eq!(g.data(c), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = graph();
        let x = g.constant(vec![0.0], vec![1]).unwrap();
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.data(y), &[0.5]);
    }

    #[test]
    fn conv_ones_valid() {
        let mut g = graph();
        let x = g.constant(vec![1.0; 9], vec![1, 1, 3, 3]).unwrap();
        let k = g.constant(vec![1.0; 4], vec![1, 1, 2, 2]).unwrap();
        let y = g.conv2d(x, k, 1, 0).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 2, 2]);
        assert_eq!(g.data(y), &[4.0; 4]);
    }

    #[test]
    fn log_rejects_nonpositive() {
        let mut g = graph();
        let x = g.constant(vec![1.0, 0.0], vec![2]).unwrap();
        assert!(matches!(g.log(x), Err(TensorError::DomainError(_))));
    }

    #[test]
    fn div_rejects_zero_divisor() {
        let mut g = graph();
        let a = g.constant(vec![1.0], vec![1]).unwrap();
        let b = g.constant(vec![0.0], vec![1]).unwrap();
        assert!(matches!(g.div(a, b), Err(TensorError::DomainError(_))));
    }

    #[test]
    fn broadcast_add_bias() {
        let mut g = graph();
        let x = g.constant(vec![0.0; 12], vec![2, 3, 2]).unwrap();
        let b = g.constant(vec![1.0, 2.0, 3.0], vec![1, 3, 1]).unwrap();
        let y = g.add(x, b).unwrap();
        assert_eq!(g.shape(y), &[2, 3, 2]);
        assert_eq!(
            g.data(y),
            &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]
        );
    }

    #[test]
    fn sum_axis_and_full() {
        let mut g = graph();
        let x = g
            .constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![2, 3])
            .unwrap();
        let s0 = g.sum(x, Some(0)).unwrap();
        assert_eq!(g.data(s0), &[5.0, 7.0, 9.0]);
        let s1 = g.sum(x, Some(1)).unwrap();
        assert_eq!(g.data(s1), &[6.0, 15.0]);
        let all = g.sum(x, None).unwrap();
        assert_eq!(g.data(all), &[21.0]);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let mut g = graph();
        let x = g
            .constant(vec![1000.0, 1000.0, -3.0, 2.0], vec![2, 2])
            .unwrap();
        let l = g.log_sum_exp(x, 1).unwrap();
        let got = g.data(l);
        assert!((got[0] - (1000.0 + 2.0f64.ln())).abs() < 1e-9);
        let direct = ((-3.0f64).exp() + 2.0f64.exp()).ln();
        assert!((got[1] - direct).abs() < 1e-12);
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let mut g = graph();
        let x = g
            .constant((0..12).map(|v| v as f64).collect(), vec![3, 4])
            .unwrap();
        let left = g.slice(x, &[(0, 3), (0, 2)]).unwrap();
        let right = g.slice(x, &[(0, 3), (2, 4)]).unwrap();
        let back = g.concat(&[left, right], 1).unwrap();
        assert_eq!(g.data(back), g.data(x));
    }

    #[test]
    fn pad_places_values() {
        let mut g = graph();
        let x = g.constant(vec![1.0, 2.0], vec![2]).unwrap();
        let p = g.pad_zero(x, &[(1, 2)]).unwrap();
        assert_eq!(g.data(p), &[0.0, 1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn quantize_floor_values() {
        let mut g = graph();
        let x = g.constant(vec![0.0, 7.9, 8.0, 255.0], vec![4]).unwrap();
        let q = g.quantize_floor(x, 8.0).unwrap();
        assert_eq!(g.data(q), &[0.0, 0.0, 8.0, 248.0]);
    }

    #[test]
    fn elu_forward() {
        let mut g = graph();
        let x = g.constant(vec![-1.0, 0.0, 2.0], vec![3]).unwrap();
        let y = g.elu(x).unwrap();
        let d = g.data(y);
        assert!((d[0] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], 2.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut g: Graph<f32> = Graph::new();
            let x = g
                .constant((0..64).map(|v| (v as f32).sin()).collect(), vec![1, 4, 4, 4])
                .unwrap();
            let k = g
                .constant((0..36).map(|v| (v as f32).cos()).collect(), vec![1, 4, 3, 3])
                .unwrap();
            let c = g.conv2d(x, k, 1, 1).unwrap();
            let e = g.elu(c).unwrap();
            let s = g.sum(e, None).unwrap();
            g.data(s)[0].to_bits()
        };
        assert_eq!(run(), run());
    }
}
