use super::Tensor;
use crate::error::{Error, Result};

/// Primitive operations the tape can record.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// `[m, k] x [k, n] -> [m, n]`.
    MatMul,
    /// Valid-padding, stride-1 cross-correlation:
    /// `[h, w, c_in] (*) [kh, kw, c_in, c_out] -> [h - kh + 1, w - kw + 1, c_out]`.
    Conv2d,
    Add,
    Sub,
    Mul,
    /// `[..., k] + [k]`, the only broadcast supported.
    AddBias,
    Scale(f64),
    Sigmoid,
    Tanh,
    Relu,
    /// Elementwise square root. The derivative at 0 is taken as 0.
    Sqrt,
    /// Mean over every axis but the last: `[..., c] -> [c]`.
    SpatialMean,
    /// Sum of all elements to a scalar.
    Sum,
    /// `mean((a - b)^2)` over all elements, to a scalar.
    SquaredError,
    Concat {
        axis: usize,
    },
    Slice {
        axis: usize,
        start: usize,
        len: usize,
    },
    Reshape(Vec<usize>),
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Conv2d => "conv2d",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::AddBias => "add_bias",
            Primitive::Scale(_) => "scale",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Tanh => "tanh",
            Primitive::Relu => "relu",
            Primitive::Sqrt => "sqrt",
            Primitive::SpatialMean => "spatial_mean",
            Primitive::Sum => "sum",
            Primitive::SquaredError => "squared_error",
            Primitive::Concat { .. } => "concat",
            Primitive::Slice { .. } => "slice",
            Primitive::Reshape(_) => "reshape",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::Concat { .. } => None,
            Primitive::MatMul
            | Primitive::Conv2d
            | Primitive::Add
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::AddBias
            | Primitive::SquaredError => Some(2),
            _ => Some(1),
        }
    }

    /// Evaluates the primitive on concrete inputs.
    pub fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        if let Some(n) = self.arity() {
            if inputs.len() != n {
                return Err(Error::shape(
                    self.name(),
                    format!("expected {n} inputs, got {}", inputs.len()),
                ));
            }
        }
        match self {
            Primitive::MatMul => matmul(inputs[0], inputs[1]),
            Primitive::Conv2d => conv2d(inputs[0], inputs[1]),
            Primitive::Add => zip_same(self.name(), inputs[0], inputs[1], |a, b| a + b),
            Primitive::Sub => zip_same(self.name(), inputs[0], inputs[1], |a, b| a - b),
            Primitive::Mul => zip_same(self.name(), inputs[0], inputs[1], |a, b| a * b),
            Primitive::AddBias => add_bias(inputs[0], inputs[1]),
            Primitive::Scale(s) => Ok(inputs[0].map(|v| v * s)),
            Primitive::Sigmoid => Ok(inputs[0].map(sigmoid)),
            Primitive::Tanh => Ok(inputs[0].map(f64::tanh)),
            Primitive::Relu => Ok(inputs[0].map(|v| if v > 0.0 { v } else { 0.0 })),
            Primitive::Sqrt => {
                if let Some(bad) = inputs[0].data().iter().find(|v| **v < 0.0) {
                    return Err(Error::Contract(format!("sqrt of negative value {bad}")));
                }
                Ok(inputs[0].map(f64::sqrt))
            }
            Primitive::SpatialMean => spatial_mean(inputs[0]),
            Primitive::Sum => Ok(Tensor::scalar(inputs[0].data().iter().sum())),
            Primitive::SquaredError => {
                let (a, b) = (inputs[0], inputs[1]);
                check_same(self.name(), a, b)?;
                let n = a.len().max(1) as f64;
                let total: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
                Ok(Tensor::scalar(total / n))
            }
            Primitive::Concat { axis } => concat(*axis, inputs),
            Primitive::Slice { axis, start, len } => slice(inputs[0], *axis, *start, *len),
            Primitive::Reshape(shape) => inputs[0]
                .reshape(shape)
                .map_err(|_| Error::shape("reshape", format!("{:?} -> {:?}", inputs[0].shape(), shape))),
        }
    }

    /// Vector-Jacobian product: gradients w.r.t. each input given the
    /// upstream gradient of the output.
    pub(crate) fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        match self {
            Primitive::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
                let mut da = Tensor::zeros(&a.shape);
                let mut db = Tensor::zeros(&b.shape);
                for i in 0..m {
                    let g_row = &grad.data[i * n..(i + 1) * n];
                    for p in 0..k {
                        let b_row = &b.data[p * n..(p + 1) * n];
                        da.data[i * k + p] = g_row.iter().zip(b_row).map(|(g, b)| g * b).sum();
                        let av = a.data[i * k + p];
                        let db_row = &mut db.data[p * n..(p + 1) * n];
                        for (d, g) in db_row.iter_mut().zip(g_row) {
                            *d += av * g;
                        }
                    }
                }
                vec![da, db]
            }
            Primitive::Conv2d => conv2d_backward(inputs[0], inputs[1], grad),
            Primitive::Add => vec![grad.clone(), grad.clone()],
            Primitive::Sub => vec![grad.clone(), grad.map(|g| -g)],
            Primitive::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                vec![
                    zip_unchecked(grad, b, |g, b| g * b),
                    zip_unchecked(grad, a, |g, a| g * a),
                ]
            }
            Primitive::AddBias => {
                let k = inputs[1].len();
                let mut db = Tensor::zeros(&inputs[1].shape);
                for chunk in grad.data.chunks(k) {
                    for (d, g) in db.data.iter_mut().zip(chunk) {
                        *d += g;
                    }
                }
                vec![grad.clone(), db]
            }
            Primitive::Scale(s) => vec![grad.map(|g| g * s)],
            Primitive::Sigmoid => vec![zip_unchecked(grad, output, |g, y| g * y * (1.0 - y))],
            Primitive::Tanh => vec![zip_unchecked(grad, output, |g, y| g * (1.0 - y * y))],
            Primitive::Relu => vec![zip_unchecked(grad, inputs[0], |g, x| if x > 0.0 { g } else { 0.0 })],
            Primitive::Sqrt => vec![zip_unchecked(
                grad,
                output,
                |g, y| {
                    if y > 0.0 {
                        g / (2.0 * y)
                    } else {
                        0.0
                    }
                },
            )],
            Primitive::SpatialMean => {
                let x = inputs[0];
                let c = *x.shape.last().unwrap_or(&1);
                let count = (x.len() / c.max(1)).max(1) as f64;
                let mut dx = Tensor::zeros(&x.shape);
                for chunk in dx.data.chunks_mut(c) {
                    for (d, g) in chunk.iter_mut().zip(&grad.data) {
                        *d = g / count;
                    }
                }
                vec![dx]
            }
            Primitive::Sum => vec![Tensor::full(&inputs[0].shape, grad.data[0])],
            Primitive::SquaredError => {
                let (a, b) = (inputs[0], inputs[1]);
                let scale = 2.0 * grad.data[0] / a.len().max(1) as f64;
                let da = zip_unchecked(a, b, |x, y| scale * (x - y));
                let db = da.map(|v| -v);
                vec![da, db]
            }
            Primitive::Concat { axis } => {
                let (outer, _, inner) = split_dims(&output.shape, *axis);
                let total = output.shape[*axis];
                let mut offset = 0;
                inputs
                    .iter()
                    .map(|x| {
                        let len = x.shape[*axis];
                        let mut dx = Tensor::zeros(&x.shape);
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * len * inner;
                            dx.data[dst..dst + len * inner].copy_from_slice(&grad.data[src..src + len * inner]);
                        }
                        offset += len;
                        dx
                    })
                    .collect()
            }
            Primitive::Slice { axis, start, len } => {
                let x = inputs[0];
                let (outer, dim, inner) = split_dims(&x.shape, *axis);
                let mut dx = Tensor::zeros(&x.shape);
                for o in 0..outer {
                    let dst = (o * dim + start) * inner;
                    let src = o * len * inner;
                    dx.data[dst..dst + len * inner].copy_from_slice(&grad.data[src..src + len * inner]);
                }
                vec![dx]
            }
            Primitive::Reshape(_) => vec![Tensor {
                shape: inputs[0].shape.clone(),
                data: grad.data.clone(),
            }],
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape, b.shape)));
    }
    Ok(())
}

fn zip_same(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    check_same(op, a, b)?;
    Ok(zip_unchecked(a, b, f))
}

fn zip_unchecked(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::shape("matmul", format!("{:?} x {:?}", a.shape, b.shape)));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            let b_row = &b.data[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

fn conv_dims(x: &Tensor, k: &Tensor) -> Result<[usize; 6]> {
    if x.shape.len() != 3 || k.shape.len() != 4 {
        return Err(Error::shape(
            "conv2d",
            format!(
                "input {:?} must be [h, w, c], kernel {:?} must be [kh, kw, c, f]",
                x.shape, k.shape
            ),
        ));
    }
    let (h, w, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let (kh, kw, kc, f) = (k.shape[0], k.shape[1], k.shape[2], k.shape[3]);
    if kc != c || kh > h || kw > w || kh == 0 || kw == 0 {
        return Err(Error::shape(
            "conv2d",
            format!("input {:?} vs kernel {:?}", x.shape, k.shape),
        ));
    }
    Ok([h, w, c, kh, kw, f])
}

fn conv2d(x: &Tensor, k: &Tensor) -> Result<Tensor> {
    let [h, w, c, kh, kw, f] = conv_dims(x, k)?;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; oh * ow * f];
    for r in 0..oh {
        for s in 0..ow {
            let out_px = &mut out[(r * ow + s) * f..(r * ow + s + 1) * f];
            for i in 0..kh {
                for j in 0..kw {
                    let in_base = ((r + i) * w + (s + j)) * c;
                    for ch in 0..c {
                        let xv = x.data[in_base + ch];
                        let k_base = ((i * kw + j) * c + ch) * f;
                        for (o, kv) in out_px.iter_mut().zip(&k.data[k_base..k_base + f]) {
                            *o += xv * kv;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor {
        shape: vec![oh, ow, f],
        data: out,
    })
}

fn conv2d_backward(x: &Tensor, k: &Tensor, grad: &Tensor) -> Vec<Tensor> {
    let (w, c) = (x.shape[1], x.shape[2]);
    let (kh, kw, f) = (k.shape[0], k.shape[1], k.shape[3]);
    let (oh, ow) = (grad.shape[0], grad.shape[1]);
    let mut dx = Tensor::zeros(&x.shape);
    let mut dk = Tensor::zeros(&k.shape);
    for r in 0..oh {
        for s in 0..ow {
            let g_px = &grad.data[(r * ow + s) * f..(r * ow + s + 1) * f];
            for i in 0..kh {
                for j in 0..kw {
                    let in_base = ((r + i) * w + (s + j)) * c;
                    for ch in 0..c {
                        let k_base = ((i * kw + j) * c + ch) * f;
                        let k_row = &k.data[k_base..k_base + f];
                        dx.data[in_base + ch] += g_px.iter().zip(k_row).map(|(g, kv)| g * kv).sum::<f64>();
                        let xv = x.data[in_base + ch];
                        for (d, g) in dk.data[k_base..k_base + f].iter_mut().zip(g_px) {
                            *d += xv * g;
                        }
                    }
                }
            }
        }
    }
    vec![dx, dk]
}

fn add_bias(x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let k = b.len();
    if b.shape.len() != 1 || x.shape.last() != Some(&k) {
        return Err(Error::shape("add_bias", format!("{:?} + {:?}", x.shape, b.shape)));
    }
    let mut out = x.clone();
    for chunk in out.data.chunks_mut(k) {
        for (o, bv) in chunk.iter_mut().zip(&b.data) {
            *o += bv;
        }
    }
    Ok(out)
}

fn spatial_mean(x: &Tensor) -> Result<Tensor> {
    let c = match x.shape.last() {
        Some(&c) if c > 0 && !x.is_empty() => c,
        _ => return Err(Error::shape("spatial_mean", format!("{:?}", x.shape))),
    };
    let count = (x.len() / c) as f64;
    let mut out = vec![0.0; c];
    for chunk in x.data.chunks(c) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= count;
    }
    Ok(Tensor::vector(out))
}

fn split_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn concat(axis: usize, inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
    if axis >= first.shape.len() {
        return Err(Error::shape(
            "concat",
            format!("axis {axis} out of range for {:?}", first.shape),
        ));
    }
    let mut shape = first.shape.clone();
    shape[axis] = 0;
    for x in inputs {
        let compatible = x.shape.len() == first.shape.len()
            && x.shape
                .iter()
                .zip(&first.shape)
                .enumerate()
                .all(|(d, (a, b))| d == axis || a == b);
        if !compatible {
            return Err(Error::shape(
                "concat",
                format!("{:?} vs {:?} on axis {axis}", x.shape, first.shape),
            ));
        }
        shape[axis] += x.shape[axis];
    }
    let (outer, _, inner) = split_dims(&shape, axis);
    let mut data = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for x in inputs {
            let len = x.shape[axis] * inner;
            data.extend_from_slice(&x.data[o * len..(o + 1) * len]);
        }
    }
    Ok(Tensor { shape, data })
}

fn slice(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= x.shape.len() || start + len > x.shape[axis] {
        return Err(Error::shape(
            "slice",
            format!("[{start}, {}) on axis {axis} of {:?}", start + len, x.shape),
        ));
    }
    let (outer, dim, inner) = split_dims(&x.shape, axis);
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * dim + start) * inner;
        data.extend_from_slice(&x.data[base..base + len * inner]);
    }
    let mut shape = x.shape.clone();
    shape[axis] = len;
    Ok(Tensor { shape, data })
}
