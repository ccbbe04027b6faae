//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Every primitive appends one record holding its output value and enough
//! state to run its backward rule. Records are created in topological order
//! by construction, so [`Tape::backward`] visits them once, newest first.

use std::sync::Arc;

use rand::Rng;

use super::dense::Tensor;
use super::scalar::{gemm, Scalar};
use crate::error::{Error, Result};

/// Shared index vector (gather indices, segment ids).
pub type Index = Arc<[usize]>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Deliberate backward-rule corruption, used to prove that the gradient
/// checker detects a broken rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// ELU backward ignores the derivative on the negative branch.
    EluBackward,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Index),
    HeadDot {
        a: Var,
        b: Var,
        heads: usize,
        scale: T,
    },
    SegmentSoftmax {
        x: Var,
        segments: Index,
        count: usize,
    },
    SegmentWeightedSum {
        values: Var,
        weights: Var,
        segments: Index,
    },
    Elu(Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    GraphNorm {
        x: Var,
        alpha: Var,
        gamma: Var,
        beta: Var,
        graphs: Index,
        count: usize,
        normalized: Vec<T>,
        mean: Vec<T>,
        std: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    SumAll(Var),
    DotConst(Var, Vec<T>),
    Scale(Var, T),
}

struct Record<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T: Scalar> {
    records: Vec<Record<T>>,
    check_finite: bool,
    fault: Option<Fault>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            records: Vec::new(),
            check_finite: false,
            fault: None,
        }
    }

    /// Reject NaN/Inf outputs from every primitive with `NonFiniteValue`.
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn inject_fault(&mut self, fault: Option<Fault>) {
        self.fault = fault;
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.records[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.records[v.0].requires_grad
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.records.push(Record {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.records.len() - 1)
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor<T>,
        op: Op<T>,
        inputs: &[Var],
    ) -> Result<Var> {
        if self.check_finite && !value.all_finite() {
            return Err(Error::NonFiniteValue { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.records[v.0].requires_grad);
        self.records.push(Record {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.records.len() - 1))
    }

    /// `a (n×k) · b (k×m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, k, m) = (av.rows(), av.cols(), bv.cols());
        if bv.rows() != k {
            return Err(Error::shape(
                "matmul",
                format!("{:?} · {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut out = vec![T::zero(); n * m];
        gemm(
            n,
            k,
            m,
            av.data(),
            false,
            bv.data(),
            false,
            T::zero(),
            &mut out,
        );
        let value = Tensor::matrix(n, m, out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// Adds a bias vector to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let cols = xv.cols();
        if bv.len() != cols {
            return Err(Error::shape(
                "add_bias",
                format!("{:?} + {:?}", xv.shape(), bv.shape()),
            ));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o = *o + *b;
            }
        }
        self.push("add_bias", out, Op::AddBias(x, bias), &[x, bias])
    }

    /// `x · w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = *v * factor;
        }
        self.push("scale", out, Op::Scale(x, factor), &[x])
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat_rows", "no inputs"));
        };
        let cols = self.value(*first).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let pv = self.value(*p);
            if pv.cols() != cols {
                return Err(Error::shape(
                    "concat_rows",
                    format!("column counts {} and {}", cols, pv.cols()),
                ));
            }
            rows += pv.rows();
            data.extend_from_slice(pv.data());
        }
        let value = Tensor::matrix(rows, cols, data)?;
        self.push("concat_rows", value, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Row lookup: output row `i` is `x[index[i]]`.
    pub fn gather_rows(&mut self, x: Var, index: Index) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            if i >= rows {
                return Err(Error::IdOutOfRange {
                    table: "gather_rows",
                    id: i,
                    rows,
                });
            }
            data.extend_from_slice(xv.row(i));
        }
        let value = Tensor::matrix(index.len(), cols, data)?;
        self.push("gather_rows", value, Op::GatherRows(x, index), &[x])
    }

    /// Per-head scaled dot products of matching rows.
    ///
    /// Columns are split into `heads` contiguous groups; output `[n, heads]`
    /// holds `scale · Σ_{c ∈ head} a[i,c]·b[i,c]`.
    pub fn head_dot(&mut self, a: Var, b: Var, heads: usize, scale: T) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() || heads == 0 || av.cols() % heads != 0 {
            return Err(Error::shape(
                "head_dot",
                format!("{:?} · {:?} over {} heads", av.shape(), bv.shape(), heads),
            ));
        }
        let (n, cols) = (av.rows(), av.cols());
        let width = cols / heads;
        let mut out = vec![T::zero(); n * heads];
        for i in 0..n {
            let (ar, br) = (av.row(i), bv.row(i));
            for h in 0..heads {
                let span = h * width..(h + 1) * width;
                let dot = ar[span.clone()]
                    .iter()
                    .zip(&br[span])
                    .fold(T::zero(), |acc, (x, y)| acc + *x * *y);
                out[i * heads + h] = dot * scale;
            }
        }
        let value = Tensor::matrix(n, heads, out)?;
        self.push(
            "head_dot",
            value,
            Op::HeadDot { a, b, heads, scale },
            &[a, b],
        )
    }

    /// Softmax of each column over the rows sharing a segment id.
    /// Segments need not be contiguous; empty segments are allowed.
    pub fn segment_softmax(&mut self, x: Var, segments: Index, count: usize) -> Result<Var> {
        let xv = self.value(x);
        check_segments("segment_softmax", xv.rows(), &segments, count)?;
        let cols = xv.cols();
        let mut max = vec![T::neg_infinity(); count * cols];
        for (i, &s) in segments.iter().enumerate() {
            for (c, v) in xv.row(i).iter().enumerate() {
                let m = &mut max[s * cols + c];
                if *v > *m {
                    *m = *v;
                }
            }
        }
        let mut out = vec![T::zero(); xv.len()];
        let mut sum = vec![T::zero(); count * cols];
        for (i, &s) in segments.iter().enumerate() {
            for (c, v) in xv.row(i).iter().enumerate() {
                let e = (*v - max[s * cols + c]).exp();
                out[i * cols + c] = e;
                sum[s * cols + c] = sum[s * cols + c] + e;
            }
        }
        for (i, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                out[i * cols + c] = out[i * cols + c] / sum[s * cols + c];
            }
        }
        let value = Tensor::matrix(xv.rows(), cols, out)?;
        self.push(
            "segment_softmax",
            value,
            Op::SegmentSoftmax { x, segments, count },
            &[x],
        )
    }

    /// `out[s, c] = Σ_{i : seg[i] = s} weights[i, head(c)] · values[i, c]`,
    /// where `head(c)` maps column `c` onto one of `weights.cols()` equal
    /// column groups. Segments with no rows produce zero rows.
    pub fn segment_weighted_sum(
        &mut self,
        values: Var,
        weights: Var,
        segments: Index,
        count: usize,
    ) -> Result<Var> {
        let (vv, wv) = (self.value(values), self.value(weights));
        check_segments("segment_weighted_sum", vv.rows(), &segments, count)?;
        let (cols, heads) = (vv.cols(), wv.cols());
        if wv.rows() != vv.rows() || heads == 0 || cols % heads != 0 {
            return Err(Error::shape(
                "segment_weighted_sum",
                format!("values {:?}, weights {:?}", vv.shape(), wv.shape()),
            ));
        }
        let width = cols / heads;
        let mut out = vec![T::zero(); count * cols];
        for (i, &s) in segments.iter().enumerate() {
            let dst = &mut out[s * cols..(s + 1) * cols];
            for ((d, v), &w) in dst
                .chunks_exact_mut(width)
                .zip(vv.row(i).chunks_exact(width))
                .zip(wv.row(i))
            {
                axpy(d, w, v);
            }
        }
        let value = Tensor::matrix(count, cols, out)?;
        self.push(
            "segment_weighted_sum",
            value,
            Op::SegmentWeightedSum {
                values,
                weights,
                segments,
            },
            &[values, weights],
        )
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            if *v <= T::zero() {
                *v = v.exp_m1();
            }
        }
        self.push("elu", out, Op::Elu(x), &[x])
    }

    /// Inverted dropout. Identity (no record) when not training or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !train || p <= 0.0 {
            return Ok(x);
        }
        if p >= 1.0 {
            return Err(Error::Config(format!("dropout rate {p} must be below 1")));
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        // an element is dropped when a uniform 32-bit draw falls below p·2³²
        let threshold = (p * 4_294_967_296.0) as u64;
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.len())
            .map(|_| {
                if u64::from(rng.next_u32()) < threshold {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let mut out = xv.clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o = *o * *m;
        }
        self.push("dropout", out, Op::Dropout { x, mask }, &[x])
    }

    /// Per-graph normalization with learnable mean scale `alpha`, gain
    /// `gamma` and shift `beta` (one entry per column):
    /// `(x − α·mean_g) / sqrt(var_g + eps) · γ + β`, statistics taken over the
    /// rows of graph `g`.
    #[allow(clippy::too_many_arguments)]
    pub fn graph_norm(
        &mut self,
        x: Var,
        graphs: Index,
        count: usize,
        alpha: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var> {
        let xv = self.value(x);
        check_segments("graph_norm", xv.rows(), &graphs, count)?;
        let cols = xv.cols();
        for p in [alpha, gamma, beta] {
            if self.value(p).len() != cols {
                return Err(Error::shape(
                    "graph_norm",
                    format!("parameter {:?} for {} columns", self.value(p).shape(), cols),
                ));
            }
        }
        let (av, gv, bv) = (
            self.value(alpha).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let mut sizes = vec![0usize; count];
        for &g in graphs.iter() {
            sizes[g] += 1;
        }
        let mut mean = vec![T::zero(); count * cols];
        for (i, &g) in graphs.iter().enumerate() {
            for (c, v) in xv.row(i).iter().enumerate() {
                mean[g * cols + c] = mean[g * cols + c] + *v;
            }
        }
        for g in 0..count {
            if sizes[g] > 0 {
                let n = T::from_f64(sizes[g] as f64);
                for m in &mut mean[g * cols..(g + 1) * cols] {
                    *m = *m / n;
                }
            }
        }
        let mut shifted = vec![T::zero(); xv.len()];
        let mut var = vec![T::zero(); count * cols];
        for (i, &g) in graphs.iter().enumerate() {
            for (c, v) in xv.row(i).iter().enumerate() {
                let s = *v - av[c] * mean[g * cols + c];
                shifted[i * cols + c] = s;
                var[g * cols + c] = var[g * cols + c] + s * s;
            }
        }
        let eps = T::from_f64(eps);
        let std: Vec<T> = var
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let n = T::from_f64(sizes[k / cols].max(1) as f64);
                (*v / n + eps).sqrt()
            })
            .collect();
        let mut normalized = shifted;
        let mut out = vec![T::zero(); xv.len()];
        for (i, &g) in graphs.iter().enumerate() {
            for c in 0..cols {
                let k = i * cols + c;
                normalized[k] = normalized[k] / std[g * cols + c];
                out[k] = normalized[k] * gv[c] + bv[c];
            }
        }
        let value = Tensor::matrix(xv.rows(), cols, out)?;
        self.push(
            "graph_norm",
            value,
            Op::GraphNorm {
                x,
                alpha,
                gamma,
                beta,
                graphs,
                count,
                normalized,
                mean,
                std,
            },
            &[x, alpha, gamma, beta],
        )
    }

    /// Mean over rows of `−log softmax(logits)[label]`, stabilized by
    /// max-subtraction. Produces a `[1, 1]` value.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, classes) = (lv.rows(), lv.cols());
        if labels.len() != rows || rows == 0 {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} labels for {} rows", labels.len(), rows),
            ));
        }
        let mut probs = vec![T::zero(); rows * classes];
        let mut total = T::zero();
        for (r, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
            let row = lv.row(r);
            let max = row.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
            let mut sum = T::zero();
            for (c, v) in row.iter().enumerate() {
                let e = (*v - max).exp();
                probs[r * classes + c] = e;
                sum = sum + e;
            }
            for p in &mut probs[r * classes..(r + 1) * classes] {
                *p = *p / sum;
            }
            total = total + (sum.ln() + max - row[label]);
        }
        let loss = total / T::from_f64(rows as f64);
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().fold(T::zero(), |a, v| a + *v);
        self.push("sum_all", Tensor::scalar(total), Op::SumAll(x), &[x])
    }

    /// `Σ x ⊙ weights` for a constant weight tensor of the same size.
    pub fn dot_const(&mut self, x: Var, weights: &Tensor<T>) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != weights.len() {
            return Err(Error::shape(
                "dot_const",
                format!("{:?} · {:?}", xv.shape(), weights.shape()),
            ));
        }
        let total = xv
            .data()
            .iter()
            .zip(weights.data())
            .fold(T::zero(), |a, (x, w)| a + *x * *w);
        self.push(
            "dot_const",
            Tensor::scalar(total),
            Op::DotConst(x, weights.data().to_vec()),
            &[x],
        )
    }

    /// Reverse sweep from a scalar output. Leaves that the output does not
    /// depend on get no entry; [`Gradients::or_zeros`] fills them in.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("output must be scalar, got {:?}", out.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.records.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(out.shape(), T::one()));
        for idx in (0..=output.0).rev() {
            let record = &self.records[idx];
            if !record.requires_grad {
                continue;
            }
            if matches!(record.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_record(record, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backward_record(&self, record: &Record<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let records = &self.records;
        let gd = g.data();
        match &record.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&records[a.0].value, &records[b.0].value);
                let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                if records[a.0].requires_grad {
                    accumulate(grads, records, *a, |ga| {
                        gemm(n, m, k, gd, false, bv.data(), true, T::one(), ga)
                    });
                }
                if records[b.0].requires_grad {
                    accumulate(grads, records, *b, |gb| {
                        gemm(k, n, m, av.data(), true, gd, false, T::one(), gb)
                    });
                }
            }
            Op::AddBias(x, bias) => {
                accumulate(grads, records, *x, |gx| add_into(gx, gd));
                let cols = g.cols();
                accumulate(grads, records, *bias, |gb| {
                    for r in 0..g.rows() {
                        add_into(gb, &gd[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::Add(a, b) => {
                accumulate(grads, records, *a, |ga| add_into(ga, gd));
                accumulate(grads, records, *b, |gb| add_into(gb, gd));
            }
            Op::Scale(x, factor) => {
                accumulate(grads, records, *x, |gx| {
                    for (o, v) in gx.iter_mut().zip(gd) {
                        *o = *o + *v * *factor;
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = records[p.0].value.len();
                    accumulate(grads, records, *p, |gp| {
                        add_into(gp, &gd[offset..offset + len])
                    });
                    offset += len;
                }
            }
            Op::GatherRows(x, index) => {
                let cols = g.cols();
                accumulate(grads, records, *x, |gx| {
                    for (i, &src) in index.iter().enumerate() {
                        add_into(
                            &mut gx[src * cols..(src + 1) * cols],
                            &gd[i * cols..(i + 1) * cols],
                        );
                    }
                });
            }
            Op::HeadDot { a, b, heads, scale } => {
                let (av, bv) = (&records[a.0].value, &records[b.0].value);
                let cols = av.cols();
                let width = cols / heads;
                for (target, other) in [(*a, bv), (*b, av)] {
                    accumulate(grads, records, target, |gt| {
                        let rows = gt
                            .chunks_exact_mut(cols)
                            .zip(other.data().chunks_exact(cols));
                        for ((t, o), gr) in rows.zip(gd.chunks_exact(*heads)) {
                            for ((th, oh), &gh) in
                                t.chunks_exact_mut(width).zip(o.chunks_exact(width)).zip(gr)
                            {
                                axpy(th, gh * *scale, oh);
                            }
                        }
                    });
                }
            }
            Op::SegmentSoftmax { x, segments, count } => {
                let y = record.value.data();
                let cols = g.cols();
                let mut dot = vec![T::zero(); count * cols];
                for (i, &s) in segments.iter().enumerate() {
                    for c in 0..cols {
                        let k = i * cols + c;
                        dot[s * cols + c] = dot[s * cols + c] + gd[k] * y[k];
                    }
                }
                accumulate(grads, records, *x, |gx| {
                    for (i, &s) in segments.iter().enumerate() {
                        for c in 0..cols {
                            let k = i * cols + c;
                            gx[k] = gx[k] + y[k] * (gd[k] - dot[s * cols + c]);
                        }
                    }
                });
            }
            Op::SegmentWeightedSum {
                values,
                weights,
                segments,
            } => {
                let (vv, wv) = (&records[values.0].value, &records[weights.0].value);
                let (cols, heads) = (vv.cols(), wv.cols());
                let width = cols / heads;
                accumulate(grads, records, *values, |gv| {
                    for ((i, &s), row) in segments.iter().enumerate().zip(gv.chunks_exact_mut(cols))
                    {
                        let src = &gd[s * cols..(s + 1) * cols];
                        for ((d, g), &w) in row
                            .chunks_exact_mut(width)
                            .zip(src.chunks_exact(width))
                            .zip(wv.row(i))
                        {
                            axpy(d, w, g);
                        }
                    }
                });
                accumulate(grads, records, *weights, |gw| {
                    for ((i, &s), row) in
                        segments.iter().enumerate().zip(gw.chunks_exact_mut(heads))
                    {
                        let src = &gd[s * cols..(s + 1) * cols];
                        for ((w, v), g) in row
                            .iter_mut()
                            .zip(vv.row(i).chunks_exact(width))
                            .zip(src.chunks_exact(width))
                        {
                            *w = *w + dot(v, g);
                        }
                    }
                });
            }
            Op::Elu(x) => {
                let xv = records[x.0].value.data();
                let y = record.value.data();
                let faulty = self.fault == Some(Fault::EluBackward);
                accumulate(grads, records, *x, |gx| {
                    for k in 0..gx.len() {
                        let d = if xv[k] > T::zero() || faulty {
                            T::one()
                        } else {
                            y[k] + T::one()
                        };
                        gx[k] = gx[k] + gd[k] * d;
                    }
                });
            }
            Op::Dropout { x, mask } => {
                accumulate(grads, records, *x, |gx| {
                    for k in 0..gx.len() {
                        gx[k] = gx[k] + gd[k] * mask[k];
                    }
                });
            }
            Op::GraphNorm {
                x,
                alpha,
                gamma,
                beta,
                graphs,
                count,
                normalized,
                mean,
                std,
            } => {
                let cols = g.cols();
                let gamma_v = records[gamma.0].value.data();
                let alpha_v = records[alpha.0].value.data();
                let mut sizes = vec![0usize; *count];
                for &gi in graphs.iter() {
                    sizes[gi] += 1;
                }
                accumulate(grads, records, *beta, |gb| {
                    for r in 0..g.rows() {
                        add_into(gb, &gd[r * cols..(r + 1) * cols]);
                    }
                });
                accumulate(grads, records, *gamma, |gg| {
                    for k in 0..gd.len() {
                        gg[k % cols] = gg[k % cols] + gd[k] * normalized[k];
                    }
                });
                // d/d(shifted): (dxhat − xhat·mean(dxhat·xhat)) / std
                let mut proj = vec![T::zero(); count * cols];
                for (i, &gi) in graphs.iter().enumerate() {
                    for c in 0..cols {
                        let k = i * cols + c;
                        proj[gi * cols + c] =
                            proj[gi * cols + c] + gd[k] * gamma_v[c] * normalized[k];
                    }
                }
                let mut d_shift = vec![T::zero(); gd.len()];
                let mut d_shift_sum = vec![T::zero(); count * cols];
                for (i, &gi) in graphs.iter().enumerate() {
                    let n = T::from_f64(sizes[gi] as f64);
                    for (c, &gc) in gamma_v.iter().enumerate() {
                        let k = i * cols + c;
                        let s = gi * cols + c;
                        let d = (gd[k] * gc - normalized[k] * proj[s] / n) / std[s];
                        d_shift[k] = d;
                        d_shift_sum[s] = d_shift_sum[s] + d;
                    }
                }
                accumulate(grads, records, *x, |gx| {
                    for (i, &gi) in graphs.iter().enumerate() {
                        let n = T::from_f64(sizes[gi] as f64);
                        for c in 0..cols {
                            let k = i * cols + c;
                            gx[k] =
                                gx[k] + d_shift[k] - alpha_v[c] * d_shift_sum[gi * cols + c] / n;
                        }
                    }
                });
                accumulate(grads, records, *alpha, |ga| {
                    for s in 0..count * cols {
                        ga[s % cols] = ga[s % cols] - mean[s] * d_shift_sum[s];
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let classes = records[logits.0].value.cols();
                let scale = gd[0] / T::from_f64(labels.len() as f64);
                accumulate(grads, records, *logits, |gl| {
                    for (r, &label) in labels.iter().enumerate() {
                        for c in 0..classes {
                            let k = r * classes + c;
                            let target = if c == label { T::one() } else { T::zero() };
                            gl[k] = gl[k] + (probs[k] - target) * scale;
                        }
                    }
                });
            }
            Op::SumAll(x) => {
                accumulate(grads, records, *x, |gx| {
                    for v in gx.iter_mut() {
                        *v = *v + gd[0];
                    }
                });
            }
            Op::DotConst(x, weights) => {
                accumulate(grads, records, *x, |gx| {
                    for (o, w) in gx.iter_mut().zip(weights) {
                        *o = *o + *w * gd[0];
                    }
                });
            }
        }
    }
}

fn check_segments(op: &'static str, rows: usize, segments: &[usize], count: usize) -> Result<()> {
    if segments.len() != rows {
        return Err(Error::shape(
            op,
            format!("{} segment ids for {} rows", segments.len(), rows),
        ));
    }
    if let Some(&bad) = segments.iter().find(|&&s| s >= count) {
        return Err(Error::IdOutOfRange {
            table: op,
            id: bad,
            rows: count,
        });
    }
    Ok(())
}

/// `dst += a · x`.
fn axpy<T: Scalar>(dst: &mut [T], a: T, x: &[T]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d = *d + a * *v;
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + *s;
    }
}

fn accumulate<T: Scalar>(
    grads: &mut [Option<Tensor<T>>],
    records: &[Record<T>],
    target: Var,
    f: impl FnOnce(&mut [T]),
) {
    if !records[target.0].requires_grad {
        return;
    }
    let slot = &mut grads[target.0];
    let grad = slot.get_or_insert_with(|| Tensor::zeros(records[target.0].value.shape()));
    f(grad.data_mut());
}

/// Gradients produced by one backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` was unreachable.
    pub fn or_zeros(&mut self, v: Var, like: &[usize]) -> Tensor<T> {
        self.grads
            .get_mut(v.0)
            .and_then(|g| g.take())
            .unwrap_or_else(|| Tensor::zeros(like))
    }
}
