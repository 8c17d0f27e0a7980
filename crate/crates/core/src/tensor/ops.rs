//! Differentiable operations, all recorded through [`Tape`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_finite, Scalar, Tape, Tensor};
use crate::error::TensorError;

fn shape2(t: &Tensor<impl Scalar>) -> Result<(usize, usize), TensorError> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(TensorError::NotTwoDim { shape: s.to_vec() }),
    }
}

impl<S: Scalar> Tape<S> {
    fn finish(
        &self,
        shape: Vec<usize>,
        values: Vec<S>,
        inputs: &[&Tensor<S>],
        make_backward: impl FnOnce() -> Box<dyn Fn(&[S])>,
    ) -> Result<Tensor<S>, TensorError> {
        check_finite(&values)?;
        let mut out = Tensor::from_parts(shape, values, false);
        if self.should_record(inputs)? {
            let backward = make_backward();
            self.record(&mut out, backward);
        }
        Ok(out)
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let values: Vec<S> = a.values().iter().zip(b.values()).map(|(&x, &y)| x + y).collect();
        let (sa, sb) = (a.clone(), b.clone());
        self.finish(a.shape().to_vec(), values, &[a, b], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    sa.storage().accumulate_grad(dout);
                }
                if sb.wants_grad() {
                    sb.storage().accumulate_grad(dout);
                }
            })
        })
    }

    pub fn sub(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "sub",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let values: Vec<S> = a.values().iter().zip(b.values()).map(|(&x, &y)| x - y).collect();
        let (sa, sb) = (a.clone(), b.clone());
        self.finish(a.shape().to_vec(), values, &[a, b], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    sa.storage().accumulate_grad(dout);
                }
                if sb.wants_grad() {
                    let neg: Vec<S> = dout.iter().map(|&d| -d).collect();
                    sb.storage().accumulate_grad(&neg);
                }
            })
        })
    }

    /// Elementwise product.
    pub fn mul(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let values: Vec<S> = a.values().iter().zip(b.values()).map(|(&x, &y)| x * y).collect();
        let (sa, sb) = (a.clone(), b.clone());
        self.finish(a.shape().to_vec(), values, &[a, b], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    let d: Vec<S> =
                        dout.iter().zip(sb.values()).map(|(&g, &y)| g * y).collect();
                    sa.storage().accumulate_grad(&d);
                }
                if sb.wants_grad() {
                    let d: Vec<S> =
                        dout.iter().zip(sa.values()).map(|(&g, &x)| g * x).collect();
                    sb.storage().accumulate_grad(&d);
                }
            })
        })
    }

    pub fn scale(&self, a: &Tensor<S>, c: S) -> Result<Tensor<S>, TensorError> {
        let values: Vec<S> = a.values().iter().map(|&x| x * c).collect();
        let sa = a.clone();
        self.finish(a.shape().to_vec(), values, &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    let d: Vec<S> = dout.iter().map(|&g| g * c).collect();
                    sa.storage().accumulate_grad(&d);
                }
            })
        })
    }

    /// Adds a `[cols]` row vector to every row of a `[rows, cols]` matrix.
    pub fn add_row(&self, a: &Tensor<S>, row: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        let (r, c) = shape2(a)?;
        if row.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: a.shape().to_vec(),
                rhs: row.shape().to_vec(),
            });
        }
        let rv = row.values();
        let mut values = a.values().to_vec();
        for i in 0..r {
            for j in 0..c {
                values[i * c + j] = values[i * c + j] + rv[j];
            }
        }
        let (sa, srow) = (a.clone(), row.clone());
        self.finish(vec![r, c], values, &[a, row], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    sa.storage().accumulate_grad(dout);
                }
                if srow.wants_grad() {
                    let mut d = vec![S::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            d[j] = d[j] + dout[i * c + j];
                        }
                    }
                    srow.storage().accumulate_grad(&d);
                }
            })
        })
    }

    /// Standard matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        let (m, k) = shape2(a)?;
        let (k2, n) = shape2(b)?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let values = matmul_raw(a.values(), b.values(), m, k, n);
        let (sa, sb) = (a.clone(), b.clone());
        self.finish(vec![m, n], values, &[a, b], || {
            Box::new(move |dout| {
                let (av, bv) = (sa.values(), sb.values());
                if sa.wants_grad() {
                    // dA = dY . B^T
                    let mut da = vec![S::zero(); m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = S::zero();
                            for j in 0..n {
                                acc = acc + dout[i * n + j] * bv[p * n + j];
                            }
                            da[i * k + p] = acc;
                        }
                    }
                    sa.storage().accumulate_grad(&da);
                }
                if sb.wants_grad() {
                    // dB = A^T . dY
                    let mut db = vec![S::zero(); k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let aip = av[i * k + p];
                            for j in 0..n {
                                db[p * n + j] = db[p * n + j] + aip * dout[i * n + j];
                            }
                        }
                    }
                    sb.storage().accumulate_grad(&db);
                }
            })
        })
    }

    pub fn transpose(&self, a: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        let (r, c) = shape2(a)?;
        let av = a.values();
        let mut values = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                values[j * r + i] = av[i * c + j];
            }
        }
        let sa = a.clone();
        self.finish(vec![c, r], values, &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    let mut d = vec![S::zero(); r * c];
                    for i in 0..r {
                        for j in 0..c {
                            d[i * c + j] = dout[j * r + i];
                        }
                    }
                    sa.storage().accumulate_grad(&d);
                }
            })
        })
    }

    /// Copying reshape; element count must be preserved.
    pub fn reshape(&self, a: &Tensor<S>, shape: &[usize]) -> Result<Tensor<S>, TensorError> {
        if shape.iter().product::<usize>() != a.numel() {
            return Err(TensorError::ShapeValues { shape: shape.to_vec(), len: a.numel() });
        }
        let sa = a.clone();
        self.finish(shape.to_vec(), a.values().to_vec(), &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    sa.storage().accumulate_grad(dout);
                }
            })
        })
    }

    /// Concatenation of 2-d tensors along rows (axis 0) or columns (axis 1).
    pub fn concat(&self, axis: usize, parts: &[&Tensor<S>]) -> Result<Tensor<S>, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyConcat);
        }
        if axis > 1 {
            return Err(TensorError::BadAxis { axis, ndim: 2 });
        }
        let dims: Vec<(usize, usize)> =
            parts.iter().map(|p| shape2(p)).collect::<Result<_, _>>()?;
        let fixed = if axis == 0 { dims[0].1 } else { dims[0].0 };
        for &(r, c) in &dims {
            let f = if axis == 0 { c } else { r };
            if f != fixed {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: vec![dims[0].0, dims[0].1],
                    rhs: vec![r, c],
                });
            }
        }
        let (out_r, out_c) = if axis == 0 {
            (dims.iter().map(|d| d.0).sum(), fixed)
        } else {
            (fixed, dims.iter().map(|d| d.1).sum())
        };
        let mut values = vec![S::zero(); out_r * out_c];
        if axis == 0 {
            let mut row0 = 0;
            for (p, &(r, c)) in parts.iter().zip(&dims) {
                values[row0 * out_c..(row0 + r) * out_c].copy_from_slice(p.values());
                row0 += r;
                let _ = c;
            }
        } else {
            let mut col0 = 0;
            for (p, &(_r, c)) in parts.iter().zip(&dims) {
                let pv = p.values();
                for i in 0..out_r {
                    values[i * out_c + col0..i * out_c + col0 + c]
                        .copy_from_slice(&pv[i * c..(i + 1) * c]);
                }
                col0 += c;
            }
        }
        let saved: Vec<Tensor<S>> = parts.iter().map(|p| (*p).clone()).collect();
        self.finish(vec![out_r, out_c], values, parts, || {
            Box::new(move |dout| {
                let mut off = 0;
                for p in &saved {
                    let (r, c) = (p.rows(), p.cols());
                    if p.wants_grad() {
                        let mut d = vec![S::zero(); r * c];
                        if axis == 0 {
                            d.copy_from_slice(&dout[off * c..(off + r) * c]);
                        } else {
                            for i in 0..r {
                                d[i * c..(i + 1) * c]
                                    .copy_from_slice(&dout[i * out_c + off..i * out_c + off + c]);
                            }
                        }
                        p.storage().accumulate_grad(&d);
                    }
                    off += if axis == 0 { r } else { c };
                }
            })
        })
    }

    /// Contiguous slice of a 2-d tensor along an axis; always copies.
    pub fn slice(
        &self,
        a: &Tensor<S>,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<Tensor<S>, TensorError> {
        let (r, c) = shape2(a)?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 {
            return Err(TensorError::BadAxis { axis, ndim: 2 });
        }
        if start + len > extent {
            return Err(TensorError::SliceRange { start, len, extent });
        }
        let av = a.values();
        let (out_r, out_c) = if axis == 0 { (len, c) } else { (r, len) };
        let mut values = vec![S::zero(); out_r * out_c];
        if axis == 0 {
            values.copy_from_slice(&av[start * c..(start + len) * c]);
        } else {
            for i in 0..r {
                values[i * len..(i + 1) * len]
                    .copy_from_slice(&av[i * c + start..i * c + start + len]);
            }
        }
        let sa = a.clone();
        self.finish(vec![out_r, out_c], values, &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    let mut d = vec![S::zero(); r * c];
                    if axis == 0 {
                        d[start * c..(start + len) * c].copy_from_slice(dout);
                    } else {
                        for i in 0..r {
                            d[i * c + start..i * c + start + len]
                                .copy_from_slice(&dout[i * len..(i + 1) * len]);
                        }
                    }
                    sa.storage().accumulate_grad(&d);
                }
            })
        })
    }

    /// Row gather from an embedding table `[vocab, dim]`; backward scatter-adds.
    pub fn embedding_lookup(
        &self,
        table: &Tensor<S>,
        ids: &[usize],
    ) -> Result<Tensor<S>, TensorError> {
        let (v, d) = shape2(table)?;
        for &id in ids {
            if id >= v {
                return Err(TensorError::IndexOutOfRange { index: id, extent: v });
            }
        }
        let tv = table.values();
        let mut values = vec![S::zero(); ids.len() * d];
        for (i, &id) in ids.iter().enumerate() {
            values[i * d..(i + 1) * d].copy_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let st = table.clone();
        let ids_saved = ids.to_vec();
        self.finish(vec![ids.len(), d], values, &[table], || {
            Box::new(move |dout| {
                if st.wants_grad() {
                    let mut dt = vec![S::zero(); v * d];
                    for (i, &id) in ids_saved.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] = dt[id * d + j] + dout[i * d + j];
                        }
                    }
                    st.storage().accumulate_grad(&dt);
                }
            })
        })
    }

    /// Numerically stable softmax along `axis` of a 1-d or 2-d tensor.
    pub fn softmax(&self, a: &Tensor<S>, axis: usize) -> Result<Tensor<S>, TensorError> {
        let (lanes, lane_len, stride, lane_off) = lane_layout(a, axis)?;
        let av = a.values();
        let mut values = vec![S::zero(); a.numel()];
        for l in 0..lanes {
            let base = lane_off(l);
            let mut max = S::neg_infinity();
            for e in 0..lane_len {
                let v = av[base + e * stride];
                if v > max {
                    max = v;
                }
            }
            let mut denom = S::zero();
            for e in 0..lane_len {
                let ex = (av[base + e * stride] - max).exp();
                values[base + e * stride] = ex;
                denom = denom + ex;
            }
            for e in 0..lane_len {
                values[base + e * stride] = values[base + e * stride] / denom;
            }
        }
        let sa = a.clone();
        let out_vals = values.clone();
        let layout = (lanes, lane_len, stride, axis);
        let shape = a.shape().to_vec();
        self.finish(a.shape().to_vec(), values, &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    let (lanes, lane_len, stride, axis) = layout;
                    let mut d = vec![S::zero(); out_vals.len()];
                    for l in 0..lanes {
                        let base = lane_base(&shape, axis, l);
                        let mut dot = S::zero();
                        for e in 0..lane_len {
                            let i = base + e * stride;
                            dot = dot + dout[i] * out_vals[i];
                        }
                        for e in 0..lane_len {
                            let i = base + e * stride;
                            d[i] = out_vals[i] * (dout[i] - dot);
                        }
                    }
                    sa.storage().accumulate_grad(&d);
                }
            })
        })
    }

    /// Stable log-softmax along `axis`.
    pub fn log_softmax(&self, a: &Tensor<S>, axis: usize) -> Result<Tensor<S>, TensorError> {
        let (lanes, lane_len, stride, lane_off) = lane_layout(a, axis)?;
        let av = a.values();
        let mut values = vec![S::zero(); a.numel()];
        for l in 0..lanes {
            let base = lane_off(l);
            let mut max = S::neg_infinity();
            for e in 0..lane_len {
                let v = av[base + e * stride];
                if v > max {
                    max = v;
                }
            }
            let mut denom = S::zero();
            for e in 0..lane_len {
                denom = denom + (av[base + e * stride] - max).exp();
            }
            let log_denom = denom.ln() + max;
            for e in 0..lane_len {
                values[base + e * stride] = av[base + e * stride] - log_denom;
            }
        }
        let sa = a.clone();
        let out_vals = values.clone();
        let layout = (lanes, lane_len, stride, axis);
        let shape = a.shape().to_vec();
        self.finish(a.shape().to_vec(), values, &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    let (lanes, lane_len, stride, axis) = layout;
                    let mut d = vec![S::zero(); out_vals.len()];
                    for l in 0..lanes {
                        let base = lane_base(&shape, axis, l);
                        let mut dsum = S::zero();
                        for e in 0..lane_len {
                            dsum = dsum + dout[base + e * stride];
                        }
                        for e in 0..lane_len {
                            let i = base + e * stride;
                            d[i] = dout[i] - out_vals[i].exp() * dsum;
                        }
                    }
                    sa.storage().accumulate_grad(&d);
                }
            })
        })
    }

    /// Per-row normalization over the last axis of `[rows, cols]`, followed by
    /// the elementwise affine `gain * xhat + bias`.
    pub fn layer_norm(
        &self,
        a: &Tensor<S>,
        gain: &Tensor<S>,
        bias: &Tensor<S>,
        eps: S,
    ) -> Result<Tensor<S>, TensorError> {
        let (r, c) = shape2(a)?;
        if gain.shape() != [c] || bias.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: a.shape().to_vec(),
                rhs: gain.shape().to_vec(),
            });
        }
        let av = a.values();
        let (gv, bv) = (gain.values(), bias.values());
        let cn = S::from_f64c(c as f64);
        let mut values = vec![S::zero(); r * c];
        let mut xhat = vec![S::zero(); r * c];
        let mut inv_std = vec![S::zero(); r];
        for i in 0..r {
            let row = &av[i * c..(i + 1) * c];
            let mean = row.iter().copied().sum::<S>() / cn;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / cn;
            let istd = S::one() / (var + eps).sqrt();
            inv_std[i] = istd;
            for j in 0..c {
                let xh = (row[j] - mean) * istd;
                xhat[i * c + j] = xh;
                values[i * c + j] = gv[j] * xh + bv[j];
            }
        }
        let (sa, sg, sb) = (a.clone(), gain.clone(), bias.clone());
        self.finish(vec![r, c], values, &[a, gain, bias], || {
            Box::new(move |dout| {
                let gv = sg.values();
                let cn = S::from_f64c(c as f64);
                if sg.wants_grad() {
                    let mut dg = vec![S::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            dg[j] = dg[j] + dout[i * c + j] * xhat[i * c + j];
                        }
                    }
                    sg.storage().accumulate_grad(&dg);
                }
                if sb.wants_grad() {
                    let mut db = vec![S::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            db[j] = db[j] + dout[i * c + j];
                        }
                    }
                    sb.storage().accumulate_grad(&db);
                }
                if sa.wants_grad() {
                    let mut d = vec![S::zero(); r * c];
                    for i in 0..r {
                        let mut mean_dxhat = S::zero();
                        let mut mean_dxhat_xhat = S::zero();
                        for j in 0..c {
                            let dxh = dout[i * c + j] * gv[j];
                            mean_dxhat = mean_dxhat + dxh;
                            mean_dxhat_xhat = mean_dxhat_xhat + dxh * xhat[i * c + j];
                        }
                        mean_dxhat = mean_dxhat / cn;
                        mean_dxhat_xhat = mean_dxhat_xhat / cn;
                        for j in 0..c {
                            let dxh = dout[i * c + j] * gv[j];
                            d[i * c + j] = inv_std[i]
                                * (dxh - mean_dxhat - xhat[i * c + j] * mean_dxhat_xhat);
                        }
                    }
                    sa.storage().accumulate_grad(&d);
                }
            })
        })
    }

    pub fn relu(&self, a: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        let values: Vec<S> =
            a.values().iter().map(|&x| if x > S::zero() { x } else { S::zero() }).collect();
        let sa = a.clone();
        self.finish(a.shape().to_vec(), values, &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    let d: Vec<S> = dout
                        .iter()
                        .zip(sa.values())
                        .map(|(&g, &x)| if x > S::zero() { g } else { S::zero() })
                        .collect();
                    sa.storage().accumulate_grad(&d);
                }
            })
        })
    }

    /// Replaces elements where `mask` is true with `value`; no gradient flows
    /// through filled positions.
    pub fn masked_fill(
        &self,
        a: &Tensor<S>,
        mask: &[bool],
        value: S,
    ) -> Result<Tensor<S>, TensorError> {
        if mask.len() != a.numel() {
            return Err(TensorError::ShapeValues { shape: a.shape().to_vec(), len: mask.len() });
        }
        let values: Vec<S> = a
            .values()
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { value } else { x })
            .collect();
        let sa = a.clone();
        let mask_saved = mask.to_vec();
        self.finish(a.shape().to_vec(), values, &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    let d: Vec<S> = dout
                        .iter()
                        .zip(&mask_saved)
                        .map(|(&g, &m)| if m { S::zero() } else { g })
                        .collect();
                    sa.storage().accumulate_grad(&d);
                }
            })
        })
    }

    /// Inverted dropout: keeps elements with probability `1 - p` and rescales
    /// by `1/(1-p)`. The mask is drawn from the caller's seeded RNG and saved
    /// on the tape, so runs are reproducible.
    pub fn dropout(
        &self,
        a: &Tensor<S>,
        p: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<S>, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::BadProbability { p });
        }
        if p == 0.0 {
            return Ok(a.clone());
        }
        let keep = S::from_f64c(1.0 / (1.0 - p));
        let mask: Vec<S> = (0..a.numel())
            .map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep })
            .collect();
        let values: Vec<S> = a.values().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let sa = a.clone();
        self.finish(a.shape().to_vec(), values, &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    let d: Vec<S> = dout.iter().zip(&mask).map(|(&g, &m)| g * m).collect();
                    sa.storage().accumulate_grad(&d);
                }
            })
        })
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&self, a: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        let total = a.values().iter().copied().sum::<S>();
        let sa = a.clone();
        let n = a.numel();
        self.finish(vec![], vec![total], &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    sa.storage().accumulate_grad(&vec![dout[0]; n]);
                }
            })
        })
    }

    /// Arithmetic mean of all elements, as a scalar tensor.
    pub fn mean(&self, a: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        let n = a.numel();
        if n == 0 {
            return Err(TensorError::EmptyReduce);
        }
        let inv = S::from_f64c(1.0 / n as f64);
        let total = a.values().iter().copied().sum::<S>() * inv;
        let sa = a.clone();
        self.finish(vec![], vec![total], &[a], || {
            Box::new(move |dout| {
                if sa.wants_grad() {
                    sa.storage().accumulate_grad(&vec![dout[0] * inv; n]);
                }
            })
        })
    }
}

/// Lane decomposition used by softmax-family ops: `lanes` independent slices
/// of length `lane_len`, elements `stride` apart.
#[allow(clippy::type_complexity)]
fn lane_layout<S: Scalar>(
    a: &Tensor<S>,
    axis: usize,
) -> Result<(usize, usize, usize, Box<dyn Fn(usize) -> usize>), TensorError> {
    match *a.shape() {
        [n] => {
            if axis != 0 {
                return Err(TensorError::BadAxis { axis, ndim: 1 });
            }
            Ok((1, n, 1, Box::new(|_| 0)))
        }
        [r, c] => match axis {
            0 => Ok((c, r, c, Box::new(move |l| l))),
            1 => Ok((r, c, 1, Box::new(move |l| l * c))),
            _ => Err(TensorError::BadAxis { axis, ndim: 2 }),
        },
        ref s => Err(TensorError::NotTwoDim { shape: s.to_vec() }),
    }
}

fn lane_base(shape: &[usize], axis: usize, lane: usize) -> usize {
    match *shape {
        [_n] => 0,
        [_r, c] => {
            if axis == 0 {
                lane
            } else {
                lane * c
            }
        }
        _ => unreachable!(),
    }
}

pub(crate) fn matmul_raw<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == S::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + aip * brow[j];
            }
        }
    }
    out
}
