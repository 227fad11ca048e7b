//! Dynamic autodiff tape.
//!
//! Forward ops execute eagerly and append one node each; `backward` walks the
//! tape in reverse and accumulates vector-Jacobian products. A tape lives for
//! one training step and is dropped afterwards; there is no graph reuse.

use crate::error::NumericsError;
use crate::scalar::Scalar;
use crate::tensor::{matmul_raw, transpose_raw, Tensor};
use crate::Result;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

enum Op<S: Scalar> {
    Leaf,
    Matmul { a: ValueId, b: ValueId },
    Transpose { a: ValueId },
    Add { a: ValueId, b: ValueId },
    AddBias { x: ValueId, b: ValueId },
    Mul { a: ValueId, b: ValueId },
    Scale { a: ValueId, factor: S },
    Silu { a: ValueId },
    Softmax { a: ValueId, axis: usize },
    LayerNorm { x: ValueId, gain: ValueId, bias: ValueId, normed: Vec<S>, inv_std: Vec<S> },
    GatherRows { a: ValueId, indices: Vec<usize> },
    ConcatRows { parts: Vec<ValueId> },
    ConcatCols { parts: Vec<ValueId> },
    SliceCols { a: ValueId, start: usize },
    MeanRows { a: ValueId },
    SumAll { a: ValueId },
    CrossEntropySum { logits: ValueId, targets: Vec<usize>, probs: Vec<S> },
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    grad: Option<Vec<S>>,
    op: Op<S>,
    needs_grad: bool,
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    pub fn data(&self, id: ValueId) -> &[S] {
        self.nodes[id.0].value.data()
    }

    pub fn shape(&self, id: ValueId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Gradient of the last `backward` w.r.t. this value, if one was needed.
    pub fn grad(&self, id: ValueId) -> Option<&[S]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Inserts a tensor; it participates in gradients iff `requires_grad` is
    /// set on the tensor itself.
    pub fn leaf(&mut self, value: Tensor<S>) -> ValueId {
        let needs = value.requires_grad();
        self.push(value, Op::Leaf, needs)
    }

    /// Inserts a tensor that never receives gradients.
    pub fn constant(&mut self, value: Tensor<S>) -> ValueId {
        let value = value.with_requires_grad(false);
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> ValueId {
        self.nodes.push(Node { value, grad: None, op, needs_grad });
        ValueId(self.nodes.len() - 1)
    }

    fn needs(&self, id: ValueId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ── forward ops ──────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = matmul_raw(ta.data(), tb.data(), m, k, n);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Matmul { a, b }, needs))
    }

    pub fn transpose(&mut self, a: ValueId) -> Result<ValueId> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(NumericsError::InvalidShape(format!(
                "transpose expects rank 2, got {:?}",
                t.shape()
            )));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let out = transpose_raw(t.data(), r, c);
        let needs = self.needs(a);
        Ok(self.push(Tensor::matrix(c, r, out)?, Op::Transpose { a }, needs))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "add",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let out: Vec<S> = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Add { a, b }, needs))
    }

    /// `x (r,c) + b (c)`, broadcasting the bias over rows.
    pub fn add_bias(&mut self, x: ValueId, b: ValueId) -> Result<ValueId> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tx.rank() != 2 || tb.rank() != 1 || tx.shape()[1] != tb.shape()[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "add_bias",
                lhs: tx.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (r, c) = (tx.shape()[0], tx.shape()[1]);
        let mut out = Vec::with_capacity(r * c);
        for row in tx.data().chunks_exact(c) {
            out.extend(row.iter().zip(tb.data()).map(|(&x, &y)| x + y));
        }
        let needs = self.needs(x) || self.needs(b);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::AddBias { x, b }, needs))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "mul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let out: Vec<S> = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let shape = ta.shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul { a, b }, needs))
    }

    pub fn scale(&mut self, a: ValueId, factor: f64) -> ValueId {
        let factor = S::from_f64(factor);
        let t = self.value(a);
        let out: Vec<S> = t.data().iter().map(|&x| x * factor).collect();
        let shape = t.shape().to_vec();
        let needs = self.needs(a);
        self.push(
            Tensor::new(shape, out).expect("same shape"),
            Op::Scale { a, factor },
            needs,
        )
    }

    pub fn silu(&mut self, a: ValueId) -> ValueId {
        let t = self.value(a);
        let out: Vec<S> = t.data().iter().map(|&x| x * sigmoid(x)).collect();
        let shape = t.shape().to_vec();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Silu { a }, needs)
    }

    /// Softmax along `axis` (0 for columns/vector, 1 for rows of a matrix),
    /// stabilized by max subtraction. Rejects non-finite inputs.
    pub fn softmax(&mut self, a: ValueId, axis: usize) -> Result<ValueId> {
        let t = self.value(a);
        if !t.is_finite() {
            return Err(NumericsError::NonFinite("softmax"));
        }
        let shape = t.shape().to_vec();
        let valid = match shape.len() {
            1 => axis == 0,
            2 => axis < 2,
            _ => false,
        };
        if !valid {
            return Err(NumericsError::InvalidAxis { axis, shape });
        }
        let mut out = vec![S::zero(); t.numel()];
        for lane in lanes(&shape, axis) {
            softmax_lane(t.data(), &mut out, &lane);
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { a, axis }, needs))
    }

    /// Per-row normalization over the last axis, then `gain * x̂ + bias`.
    pub fn layer_norm(&mut self, x: ValueId, gain: ValueId, bias: ValueId) -> Result<ValueId> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let c = tx.cols();
        if tg.shape() != [c] || tb.shape() != [c] {
            return Err(NumericsError::ShapeMismatch {
                op: "layer_norm",
                lhs: tx.shape().to_vec(),
                rhs: tg.shape().to_vec(),
            });
        }
        let rows = tx.rows();
        let eps = S::from_f64(LAYER_NORM_EPS);
        let inv_c = S::from_f64(1.0 / c as f64);
        let mut normed = Vec::with_capacity(rows * c);
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(rows * c);
        for row in tx.data().chunks_exact(c) {
            let mean = row.iter().copied().sum::<S>() * inv_c;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() * inv_c;
            let istd = S::one() / (var + eps).sqrt();
            inv_std.push(istd);
            for (j, &v) in row.iter().enumerate() {
                let nh = (v - mean) * istd;
                normed.push(nh);
                out.push(tg.data()[j] * nh + tb.data()[j]);
            }
        }
        let shape = tx.shape().to_vec();
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm { x, gain, bias, normed, inv_std },
            needs,
        ))
    }

    /// Selects rows of a matrix; indices may repeat.
    pub fn gather_rows(&mut self, a: ValueId, indices: &[usize]) -> Result<ValueId> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(NumericsError::InvalidShape(format!(
                "gather_rows expects rank 2, got {:?}",
                t.shape()
            )));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(NumericsError::RowOutOfRange { index: i, rows: r });
            }
            out.extend_from_slice(&t.data()[i * c..(i + 1) * c]);
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::matrix(indices.len(), c, out)?,
            Op::GatherRows { a, indices: indices.to_vec() },
            needs,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidShape("concat_rows of nothing".into()));
        }
        let c = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.cols() != c {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::matrix(rows, c, out)?,
            Op::ConcatRows { parts: parts.to_vec() },
            needs,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidShape("concat_cols of nothing".into()));
        }
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.rows() != rows {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            cols += t.cols();
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                let c = t.cols();
                out.extend_from_slice(&t.data()[r * c..(r + 1) * c]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::matrix(rows, cols, out)?,
            Op::ConcatCols { parts: parts.to_vec() },
            needs,
        ))
    }

    pub fn slice_cols(&mut self, a: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let t = self.value(a);
        if t.rank() != 2 || start + len > t.shape()[1] {
            return Err(NumericsError::InvalidShape(format!(
                "slice_cols [{start}, {}) out of {:?}",
                start + len,
                t.shape()
            )));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(r * len);
        for row in t.data().chunks_exact(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::matrix(r, len, out)?, Op::SliceCols { a, start }, needs))
    }

    /// Mean over rows: `(r,c) -> (1,c)`.
    pub fn mean_rows(&mut self, a: ValueId) -> Result<ValueId> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(NumericsError::InvalidShape(format!(
                "mean_rows expects rank 2, got {:?}",
                t.shape()
            )));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let inv_r = S::from_f64(1.0 / r as f64);
        let mut out = vec![S::zero(); c];
        for row in t.data().chunks_exact(c) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in out.iter_mut() {
            *o *= inv_r;
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::matrix(1, c, out)?, Op::MeanRows { a }, needs))
    }

    pub fn sum_all(&mut self, a: ValueId) -> ValueId {
        let t = self.value(a);
        let s: S = t.data().iter().copied().sum();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::SumAll { a }, needs)
    }

    /// `-log softmax(logits)[target]` for a single logit vector.
    pub fn cross_entropy(&mut self, logits: ValueId, target: usize) -> Result<ValueId> {
        self.cross_entropy_sum(logits, &[target])
    }

    /// Sum of per-row cross entropies of `logits (n,v)` against `targets`.
    pub fn cross_entropy_sum(&mut self, logits: ValueId, targets: &[usize]) -> Result<ValueId> {
        let t = self.value(logits);
        let v = t.cols();
        let n = t.rows();
        if targets.len() != n {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy_sum",
                lhs: t.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let mut probs = Vec::with_capacity(n * v);
        let mut total = S::zero();
        for (row, &target) in t.data().chunks_exact(v).zip(targets) {
            if target >= v {
                return Err(NumericsError::TargetOutOfRange { index: target, classes: v });
            }
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = S::zero();
            for &x in row {
                z += (x - max).exp();
            }
            let lse = max + z.ln();
            total += lse - row[target];
            probs.extend(row.iter().map(|&x| (x - lse).exp()));
        }
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropySum { logits, targets: targets.to_vec(), probs },
            needs,
        ))
    }

    // ── backward ─────────────────────────────────────────────────────────

    /// Populates gradients for every value the scalar `loss` depends on.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(NumericsError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![S::one()]);
        }
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.grad = g;
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let add_to = |grads: &mut [Option<Vec<S>>], target: ValueId, contrib: &dyn Fn(&mut [S])| {
            let node = &self.nodes[target.0];
            if !node.needs_grad {
                return;
            }
            let slot = grads[target.0].get_or_insert_with(|| vec![S::zero(); node.value.numel()]);
            contrib(slot);
        };

        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let ta = &self.nodes[a.0].value;
                let tb = &self.nodes[b.0].value;
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.needs(*a) {
                    // dA = dC · Bᵀ
                    let bt = transpose_raw(tb.data(), k, n);
                    let da = matmul_raw(g, &bt, m, n, k);
                    add_to(grads, *a, &|slot| axpy(slot, &da));
                }
                if self.needs(*b) {
                    // dB = Aᵀ · dC
                    let at = transpose_raw(ta.data(), m, k);
                    let db = matmul_raw(&at, g, k, m, n);
                    add_to(grads, *b, &|slot| axpy(slot, &db));
                }
            }
            Op::Transpose { a } => {
                let t = &self.nodes[id].value;
                let (r, c) = (t.shape()[0], t.shape()[1]);
                let gt = transpose_raw(g, r, c);
                add_to(grads, *a, &|slot| axpy(slot, &gt));
            }
            Op::Add { a, b } => {
                add_to(grads, *a, &|slot| axpy(slot, g));
                add_to(grads, *b, &|slot| axpy(slot, g));
            }
            Op::AddBias { x, b } => {
                add_to(grads, *x, &|slot| axpy(slot, g));
                let c = self.nodes[b.0].value.numel();
                add_to(grads, *b, &|slot| {
                    for row in g.chunks_exact(c) {
                        axpy(slot, row);
                    }
                });
            }
            Op::Mul { a, b } => {
                let ta = &self.nodes[a.0].value;
                let tb = &self.nodes[b.0].value;
                add_to(grads, *a, &|slot| {
                    for ((s, &gv), &bv) in slot.iter_mut().zip(g).zip(tb.data()) {
                        *s += gv * bv;
                    }
                });
                add_to(grads, *b, &|slot| {
                    for ((s, &gv), &av) in slot.iter_mut().zip(g).zip(ta.data()) {
                        *s += gv * av;
                    }
                });
            }
            Op::Scale { a, factor } => {
                let f = *factor;
                add_to(grads, *a, &|slot| {
                    for (s, &gv) in slot.iter_mut().zip(g) {
                        *s += gv * f;
                    }
                });
            }
            Op::Silu { a } => {
                let tx = &self.nodes[a.0].value;
                add_to(grads, *a, &|slot| {
                    for ((s, &gv), &x) in slot.iter_mut().zip(g).zip(tx.data()) {
                        let sig = sigmoid(x);
                        *s += gv * sig * (S::one() + x * (S::one() - sig));
                    }
                });
            }
            Op::Softmax { a, axis } => {
                let y = &self.nodes[id].value;
                let shape = y.shape().to_vec();
                add_to(grads, *a, &|slot| {
                    for lane in lanes(&shape, *axis) {
                        // dx = y ∘ (dy − Σ dy∘y) per lane
                        let mut dot = S::zero();
                        for i in lane.clone() {
                            dot += g[i] * y.data()[i];
                        }
                        for i in lane {
                            slot[i] += y.data()[i] * (g[i] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, normed, inv_std } => {
                let c = self.nodes[gain.0].value.numel();
                let tg = &self.nodes[gain.0].value;
                let inv_c = S::from_f64(1.0 / c as f64);
                add_to(grads, *gain, &|slot| {
                    for (row, grow) in normed.chunks_exact(c).zip(g.chunks_exact(c)) {
                        for ((s, &nh), &gv) in slot.iter_mut().zip(row).zip(grow) {
                            *s += gv * nh;
                        }
                    }
                });
                add_to(grads, *bias, &|slot| {
                    for grow in g.chunks_exact(c) {
                        axpy(slot, grow);
                    }
                });
                add_to(grads, *x, &|slot| {
                    for (r, (nrow, grow)) in
                        normed.chunks_exact(c).zip(g.chunks_exact(c)).enumerate()
                    {
                        let istd = inv_std[r];
                        let mut mean_gdy = S::zero();
                        let mut mean_gdy_nh = S::zero();
                        for ((&gv, &gn), &nh) in grow.iter().zip(tg.data()).zip(nrow) {
                            let gdy = gv * gn;
                            mean_gdy += gdy;
                            mean_gdy_nh += gdy * nh;
                        }
                        mean_gdy *= inv_c;
                        mean_gdy_nh *= inv_c;
                        let out = &mut slot[r * c..(r + 1) * c];
                        for ((s, (&gv, &gn)), &nh) in
                            out.iter_mut().zip(grow.iter().zip(tg.data())).zip(nrow)
                        {
                            *s += istd * (gv * gn - mean_gdy - nh * mean_gdy_nh);
                        }
                    }
                });
            }
            Op::GatherRows { a, indices } => {
                let c = self.nodes[id].value.cols();
                add_to(grads, *a, &|slot| {
                    for (out_row, &src) in indices.iter().enumerate() {
                        let grow = &g[out_row * c..(out_row + 1) * c];
                        axpy(&mut slot[src * c..(src + 1) * c], grow);
                    }
                });
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.numel();
                    let seg = &g[offset..offset + len];
                    add_to(grads, p, &|slot| axpy(slot, seg));
                    offset += len;
                }
            }
            Op::ConcatCols { parts } => {
                let rows = self.nodes[id].value.rows();
                let total_cols = self.nodes[id].value.cols();
                let mut col0 = 0;
                for &p in parts {
                    let c = self.nodes[p.0].value.cols();
                    let start = col0;
                    add_to(grads, p, &|slot| {
                        for r in 0..rows {
                            let seg = &g[r * total_cols + start..r * total_cols + start + c];
                            axpy(&mut slot[r * c..(r + 1) * c], seg);
                        }
                    });
                    col0 += c;
                }
            }
            Op::SliceCols { a, start } => {
                let len = self.nodes[id].value.cols();
                let src_cols = self.nodes[a.0].value.cols();
                let rows = self.nodes[id].value.rows();
                add_to(grads, *a, &|slot| {
                    for r in 0..rows {
                        let seg = &g[r * len..(r + 1) * len];
                        axpy(&mut slot[r * src_cols + start..r * src_cols + start + len], seg);
                    }
                });
            }
            Op::MeanRows { a } => {
                let src = &self.nodes[a.0].value;
                let (r, c) = (src.shape()[0], src.shape()[1]);
                let inv_r = S::from_f64(1.0 / r as f64);
                add_to(grads, *a, &|slot| {
                    for row in slot.chunks_exact_mut(c) {
                        for (s, &gv) in row.iter_mut().zip(g) {
                            *s += gv * inv_r;
                        }
                    }
                });
            }
            Op::SumAll { a } => {
                let gv = g[0];
                add_to(grads, *a, &|slot| {
                    for s in slot.iter_mut() {
                        *s += gv;
                    }
                });
            }
            Op::CrossEntropySum { logits, targets, probs } => {
                let v = self.nodes[logits.0].value.cols();
                let gv = g[0];
                add_to(grads, *logits, &|slot| {
                    for (n, &target) in targets.iter().enumerate() {
                        let prow = &probs[n * v..(n + 1) * v];
                        let srow = &mut slot[n * v..(n + 1) * v];
                        for (s, &p) in srow.iter_mut().zip(prow) {
                            *s += gv * p;
                        }
                        srow[target] -= gv;
                    }
                });
            }
        }
    }
}

#[inline]
fn axpy<S: Scalar>(acc: &mut [S], v: &[S]) {
    debug_assert_eq!(acc.len(), v.len());
    for (a, &b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Index ranges (as explicit index lists for axis 0) covering each softmax
/// lane of `shape` along `axis`.
fn lanes(shape: &[usize], axis: usize) -> Vec<std::vec::IntoIter<usize>> {
    let (rows, cols) = if shape.len() == 1 { (1, shape[0]) } else { (shape[0], shape[1]) };
    let axis = if shape.len() == 1 { 1 } else { axis };
    match axis {
        1 => (0..rows)
            .map(|r| (r * cols..(r + 1) * cols).collect::<Vec<_>>().into_iter())
            .collect(),
        _ => (0..cols)
            .map(|c| (0..rows).map(|r| r * cols + c).collect::<Vec<_>>().into_iter())
            .collect(),
    }
}

fn softmax_lane<S: Scalar>(input: &[S], out: &mut [S], lane: &std::vec::IntoIter<usize>) {
    let idx: Vec<usize> = lane.clone().collect();
    let max = idx.iter().map(|&i| input[i]).fold(S::neg_infinity(), S::max);
    let mut z = S::zero();
    for &i in &idx {
        let e = (input[i] - max).exp();
        out[i] = e;
        z += e;
    }
    for &i in &idx {
        out[i] /= z;
    }
}
