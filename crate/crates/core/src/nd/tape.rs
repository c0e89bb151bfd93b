use super::{ParamId, ParamStore, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Per-channel statistics of one training-mode batch normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance, as used for normalization.
    pub var: Vec<f64>,
    pub rows: usize,
}

impl BatchStats {
    pub fn unbiased_var(&self) -> Vec<f64> {
        let n = self.rows as f64;
        self.var.iter().map(|v| v * n / (n - 1.0)).collect()
    }

    /// `running = (1 - momentum) * running + momentum * batch`, using the
    /// unbiased variance for the running estimate.
    pub fn update_running(&self, mean: &mut [f64], var: &mut [f64], momentum: f64) {
        for (r, b) in mean.iter_mut().zip(&self.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in var.iter_mut().zip(self.unbiased_var()) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
    }
}

enum Op {
    Input,
    Param(ParamId),
    EmbedRows(ParamId, Vec<usize>),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    MeanRows(Var),
    MeanCols(Var),
    SegmentMeanRows(Var, Vec<usize>),
    SegmentBroadcastRows(Var, Vec<usize>),
    SumAll(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        segments: Vec<usize>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Bce {
        p: Var,
        labels: Vec<f64>,
        eps: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records one forward pass. Create a fresh tape per training step.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, detail: String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize), TensorError> {
        let t = self.value(v);
        if t.is_matrix() {
            Ok((t.rows(), t.cols()))
        } else {
            Err(mismatch(
                op,
                format!("expected a matrix, got {:?}", t.shape()),
            ))
        }
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            Ok(())
        } else {
            Err(mismatch(op, format!("{sa:?} vs {sb:?}")))
        }
    }

    /// A constant: gradients stop here.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// Current value of a stored parameter; backward accumulates into its grad.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id))
    }

    /// Rows `rows` of a stored table, without copying the whole table.
    pub fn embed_rows(
        &mut self,
        store: &ParamStore,
        table: ParamId,
        rows: &[usize],
    ) -> Result<Var, TensorError> {
        let t = &store.get(table).value;
        if !t.is_matrix() {
            return Err(mismatch(
                "embed_rows",
                format!("table shape {:?}", t.shape()),
            ));
        }
        let c = t.cols();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= t.rows() {
                return Err(mismatch(
                    "embed_rows",
                    format!("row {r} out of range for {} rows", t.rows()),
                ));
            }
            data.extend_from_slice(t.row_slice(r));
        }
        let value = Tensor::matrix(rows.len(), c, data)?;
        Ok(self.push(value, Op::EmbedRows(table, rows.to_vec())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        self.matrix(a, "transpose")?;
        let value = self.value(a).transpose();
        Ok(self.push(value, Op::Transpose(a)))
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "add")?;
        let value = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "sub")?;
        let value = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "mul")?;
        let value = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Adds the `1 x c` row `row` to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let (_, c) = self.matrix(x, "add_row")?;
        if self.value(row).shape() != [1, c] {
            return Err(mismatch(
                "add_row",
                format!(
                    "{:?} + {:?}",
                    self.value(x).shape(),
                    self.value(row).shape()
                ),
            ));
        }
        let mut value = self.value(x).clone();
        let r = self.value(row).data().to_vec();
        for chunk in value.data_mut().chunks_mut(c) {
            for (v, b) in chunk.iter_mut().zip(&r) {
                *v += b;
            }
        }
        Ok(self.push(value, Op::AddRow(x, row)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push(value, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().for_each(|v| *v += s);
        self.push(value, Op::AddScalar(x))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts
            .first()
            .ok_or_else(|| mismatch("concat_cols", "no inputs".into()))?;
        let (r, _) = self.matrix(first, "concat_cols")?;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.matrix(p, "concat_cols")?;
            if pr != r {
                return Err(mismatch("concat_cols", format!("row counts {r} vs {pr}")));
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let value = Tensor::matrix(r, total, data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts
            .first()
            .ok_or_else(|| mismatch("concat_rows", "no inputs".into()))?;
        let (_, c) = self.matrix(first, "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (pr, pc) = self.matrix(p, "concat_rows")?;
            if pc != c {
                return Err(mismatch(
                    "concat_rows",
                    format!("column counts {c} vs {pc}"),
                ));
            }
            rows += pr;
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::matrix(rows, c, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (r, c) = self.matrix(x, "slice_rows")?;
        if start + len > r {
            return Err(mismatch(
                "slice_rows",
                format!("rows {start}..{} of {r}", start + len),
            ));
        }
        let data = self.value(x).data()[start * c..(start + len) * c].to_vec();
        let value = Tensor::matrix(len, c, data)?;
        Ok(self.push(value, Op::SliceRows(x, start)))
    }

    /// `out[i] = x[index[i]]`.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var, TensorError> {
        let (r, c) = self.matrix(x, "gather_rows")?;
        let t = self.value(x);
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= r {
                return Err(mismatch("gather_rows", format!("row {i} of {r}")));
            }
            data.extend_from_slice(t.row_slice(i));
        }
        let value = Tensor::matrix(index.len(), c, data)?;
        Ok(self.push(value, Op::GatherRows(x, index.to_vec())))
    }

    /// `out[index[i]] += x[i]` into an `n_out`-row zero matrix.
    pub fn scatter_add_rows(
        &mut self,
        x: Var,
        index: &[usize],
        n_out: usize,
    ) -> Result<Var, TensorError> {
        let (r, c) = self.matrix(x, "scatter_add_rows")?;
        if index.len() != r {
            return Err(mismatch(
                "scatter_add_rows",
                format!("{} indices for {r} rows", index.len()),
            ));
        }
        let mut data = vec![0.0; n_out * c];
        let t = self.value(x);
        for (i, &dst) in index.iter().enumerate() {
            if dst >= n_out {
                return Err(mismatch(
                    "scatter_add_rows",
                    format!("row {dst} of {n_out}"),
                ));
            }
            for (o, v) in data[dst * c..(dst + 1) * c].iter_mut().zip(t.row_slice(i)) {
                *o += v;
            }
        }
        let value = Tensor::matrix(n_out, c, data)?;
        Ok(self.push(value, Op::ScatterAddRows(x, index.to_vec())))
    }

    /// Average of the rows: `r x c -> 1 x c`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let (r, c) = self.matrix(x, "mean_rows")?;
        if r == 0 {
            return Err(mismatch("mean_rows", "no rows".into()));
        }
        let mut out = vec![0.0; c];
        for row in self.value(x).data().chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= r as f64);
        Ok(self.push(Tensor::row(out), Op::MeanRows(x)))
    }

    /// Average of the columns: `r x c -> r x 1`.
    pub fn mean_cols(&mut self, x: Var) -> Result<Var, TensorError> {
        let (_, c) = self.matrix(x, "mean_cols")?;
        if c == 0 {
            return Err(mismatch("mean_cols", "no columns".into()));
        }
        let out = self
            .value(x)
            .data()
            .chunks(c)
            .map(|row| row.iter().sum::<f64>() / c as f64)
            .collect();
        Ok(self.push(Tensor::column(out), Op::MeanCols(x)))
    }

    fn check_segments(
        &self,
        lens: &[usize],
        rows: usize,
        op: &'static str,
    ) -> Result<(), TensorError> {
        if lens.iter().sum::<usize>() != rows || lens.contains(&0) {
            return Err(mismatch(op, format!("segments {lens:?} for {rows} rows")));
        }
        Ok(())
    }

    /// Mean of each consecutive run of rows: `(sum lens) x c -> lens.len() x c`.
    pub fn segment_mean_rows(&mut self, x: Var, lens: &[usize]) -> Result<Var, TensorError> {
        let (r, c) = self.matrix(x, "segment_mean_rows")?;
        self.check_segments(lens, r, "segment_mean_rows")?;
        let t = self.value(x);
        let mut data = Vec::with_capacity(lens.len() * c);
        let mut start = 0;
        for &len in lens {
            let mut acc = vec![0.0; c];
            for i in start..start + len {
                for (a, v) in acc.iter_mut().zip(t.row_slice(i)) {
                    *a += v;
                }
            }
            data.extend(acc.into_iter().map(|a| a / len as f64));
            start += len;
        }
        let value = Tensor::matrix(lens.len(), c, data)?;
        Ok(self.push(value, Op::SegmentMeanRows(x, lens.to_vec())))
    }

    /// Repeats row `s` of `x` `lens[s]` times.
    pub fn segment_broadcast_rows(&mut self, x: Var, lens: &[usize]) -> Result<Var, TensorError> {
        let (r, c) = self.matrix(x, "segment_broadcast_rows")?;
        if r != lens.len() || lens.contains(&0) {
            return Err(mismatch(
                "segment_broadcast_rows",
                format!("segments {lens:?} for {r} rows"),
            ));
        }
        let t = self.value(x);
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(total * c);
        for (s, &len) in lens.iter().enumerate() {
            for _ in 0..len {
                data.extend_from_slice(t.row_slice(s));
            }
        }
        let value = Tensor::matrix(total, c, data)?;
        Ok(self.push(value, Op::SegmentBroadcastRows(x, lens.to_vec())))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
            .expect("same shape")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.map(x, |v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.map(x, sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    /// Softmax over all entries of a row or column vector.
    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let (r, c) = self.matrix(x, "softmax")?;
        if r != 1 && c != 1 {
            return Err(mismatch(
                "softmax",
                format!("expected a vector, got {r}x{c}"),
            ));
        }
        let t = self.value(x);
        let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = t.data().iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let value = Tensor::new(
            t.shape().to_vec(),
            exps.into_iter().map(|e| e / z).collect(),
        )?;
        Ok(self.push(value, Op::Softmax(x)))
    }

    /// Stride-1 convolution along rows with zero "same" padding, applied
    /// independently to each consecutive run of `segments` rows.
    ///
    /// `x` is `(sum segments) x c_in`, `w` is `k x c_in x c_out` with odd `k`,
    /// `b` is `1 x c_out`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        segments: &[usize],
    ) -> Result<Var, TensorError> {
        let (n, c_in) = self.matrix(x, "conv1d")?;
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 3 || ws[1] != c_in || ws[0].is_multiple_of(2) {
            return Err(mismatch(
                "conv1d",
                format!("kernel {ws:?} for {c_in} input channels (k must be odd)"),
            ));
        }
        let (k, c_out) = (ws[0], ws[2]);
        if self.value(b).shape() != [1, c_out] {
            return Err(mismatch(
                "conv1d",
                format!("bias {:?}", self.value(b).shape()),
            ));
        }
        self.check_segments(segments, n, "conv1d")?;
        let (xd, wd, bd) = (
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let pad = (k - 1) / 2;
        let mut out = vec![0.0; n * c_out];
        let mut offset = 0;
        for &len in segments {
            for t in 0..len {
                let orow = &mut out[(offset + t) * c_out..(offset + t + 1) * c_out];
                orow.copy_from_slice(bd);
                for j in 0..k {
                    let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < len) else {
                        continue;
                    };
                    let xrow = &xd[(offset + src) * c_in..(offset + src + 1) * c_in];
                    for (ci, &xv) in xrow.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &wd[(j * c_in + ci) * c_out..(j * c_in + ci + 1) * c_out];
                        for (o, &wv) in orow.iter_mut().zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                }
            }
            offset += len;
        }
        let value = Tensor::matrix(n, c_out, out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                x,
                w,
                b,
                segments: segments.to_vec(),
            },
        ))
    }

    fn check_bn(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize), TensorError> {
        let (r, c) = self.matrix(x, "batch_norm")?;
        for p in [gamma, beta] {
            if self.value(p).shape() != [1, c] {
                return Err(mismatch(
                    "batch_norm",
                    format!("affine shape {:?} for {c} channels", self.value(p).shape()),
                ));
            }
        }
        Ok((r, c))
    }

    /// Normalizes each column with its own batch mean and biased variance.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats), TensorError> {
        let (r, c) = self.check_bn(x, gamma, beta)?;
        if r < 2 {
            return Err(TensorError::DegenerateBatch { rows: r });
        }
        let xd = self.value(x).data();
        let mut mean = vec![0.0; c];
        for row in xd.chunks(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= r as f64);
        let mut var = vec![0.0; c];
        for row in xd.chunks(c) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= r as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = self.finish_bn(x, gamma, beta, &mean, inv_std, true);
        Ok((out, BatchStats { mean, var, rows: r }))
    }

    /// Normalizes with fixed statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var, TensorError> {
        let (_, c) = self.check_bn(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(mismatch(
                "batch_norm",
                format!("statistics for {c} channels"),
            ));
        }
        let inv_std = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        Ok(self.finish_bn(x, gamma, beta, mean, inv_std, false))
    }

    fn finish_bn(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: Vec<f64>,
        train: bool,
    ) -> Var {
        let c = mean.len();
        let xd = self.value(x).data();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = Vec::with_capacity(xd.len());
        let mut out = Vec::with_capacity(xd.len());
        for row in xd.chunks(c) {
            for j in 0..c {
                let h = (row[j] - mean[j]) * inv_std[j];
                xhat.push(h);
                out.push(g[j] * h + bt[j]);
            }
        }
        let shape = self.value(x).shape().to_vec();
        let value = Tensor::new(shape, out).expect("same shape");
        self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
        )
    }

    /// Mean binary cross-entropy of probabilities `p` against `labels`, with
    /// `p` clamped to `[eps, 1 - eps]`.
    pub fn bce(&mut self, p: Var, labels: &[f64], eps: f64) -> Result<Var, TensorError> {
        let t = self.value(p);
        if t.numel() != labels.len() || labels.is_empty() {
            return Err(mismatch(
                "bce",
                format!("{} predictions for {} labels", t.numel(), labels.len()),
            ));
        }
        let n = labels.len() as f64;
        let loss = -t
            .data()
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                let q = p.clamp(eps, 1.0 - eps);
                y * q.ln() + (1.0 - y) * (1.0 - q).ln()
            })
            .sum::<f64>()
            / n;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                labels: labels.to_vec(),
                eps,
            },
        ))
    }

    /// Propagates d`loss`/d(node) back through the tape and adds parameter
    /// gradients into `store`. Gradients accumulate; zero them between steps.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), TensorError> {
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::NoTape);
        }
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(TensorError::NotScalar {
                shape: lt.shape().to_vec(),
            });
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'g mut [f64] {
            grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let out = &node.value;
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let pg = store.get_mut(*id).grad.data_mut();
                    pg.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::EmbedRows(id, rows) => {
                    let pg = &mut store.get_mut(*id).grad;
                    let c = pg.cols();
                    let pd = pg.data_mut();
                    for (k, &r) in rows.iter().enumerate() {
                        for (a, b) in pd[r * c..(r + 1) * c]
                            .iter_mut()
                            .zip(&g[k * c..(k + 1) * c])
                        {
                            *a += b;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                    {
                        let da = slot(&mut grads, nodes, *a);
                        let bd = tb.data();
                        for r in 0..n {
                            let grow = &g[r * m..(r + 1) * m];
                            for p in 0..k {
                                let brow = &bd[p * m..(p + 1) * m];
                                da[r * k + p] +=
                                    grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                    let db = slot(&mut grads, nodes, *b);
                    let ad = ta.data();
                    for r in 0..n {
                        let grow = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let av = ad[r * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (d, gv) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *d += av * gv;
                            }
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = (out.rows(), out.cols());
                    let da = slot(&mut grads, nodes, *a);
                    for x in 0..r {
                        for y in 0..c {
                            da[y * r + x] += g[x * c + y];
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(slot(&mut grads, nodes, *a), &g);
                    add_into(slot(&mut grads, nodes, *b), &g);
                }
                Op::Sub(a, b) => {
                    add_into(slot(&mut grads, nodes, *a), &g);
                    let db = slot(&mut grads, nodes, *b);
                    db.iter_mut().zip(&g).for_each(|(d, v)| *d -= v);
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    let da = slot(&mut grads, nodes, *a);
                    for ((d, gv), y) in da.iter_mut().zip(&g).zip(bd) {
                        *d += gv * y;
                    }
                    let db = slot(&mut grads, nodes, *b);
                    for ((d, gv), x) in db.iter_mut().zip(&g).zip(ad) {
                        *d += gv * x;
                    }
                }
                Op::AddRow(x, row) => {
                    add_into(slot(&mut grads, nodes, *x), &g);
                    let c = out.cols();
                    let dr = slot(&mut grads, nodes, *row);
                    for chunk in g.chunks(c) {
                        add_into(dr, chunk);
                    }
                }
                Op::Scale(x, s) => {
                    let dx = slot(&mut grads, nodes, *x);
                    dx.iter_mut().zip(&g).for_each(|(d, v)| *d += s * v);
                }
                Op::AddScalar(x) => add_into(slot(&mut grads, nodes, *x), &g),
                Op::ConcatCols(parts) => {
                    let (r, total) = (out.rows(), out.cols());
                    let mut col = 0;
                    for p in parts {
                        let pc = nodes[p.0].value.cols();
                        let dp = slot(&mut grads, nodes, *p);
                        for x in 0..r {
                            add_into(
                                &mut dp[x * pc..(x + 1) * pc],
                                &g[x * total + col..x * total + col + pc],
                            );
                        }
                        col += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let len = nodes[p.0].value.numel();
                        add_into(slot(&mut grads, nodes, *p), &g[start..start + len]);
                        start += len;
                    }
                }
                Op::SliceRows(x, start) => {
                    let c = out.cols();
                    let dx = slot(&mut grads, nodes, *x);
                    add_into(&mut dx[start * c..start * c + g.len()], &g);
                }
                Op::GatherRows(x, index) => {
                    let c = out.cols();
                    let dx = slot(&mut grads, nodes, *x);
                    for (k, &src) in index.iter().enumerate() {
                        add_into(&mut dx[src * c..(src + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                }
                Op::ScatterAddRows(x, index) => {
                    let c = out.cols();
                    let dx = slot(&mut grads, nodes, *x);
                    for (k, &dst) in index.iter().enumerate() {
                        add_into(&mut dx[k * c..(k + 1) * c], &g[dst * c..(dst + 1) * c]);
                    }
                }
                Op::MeanRows(x) => {
                    let r = nodes[x.0].value.rows() as f64;
                    let c = out.cols();
                    let dx = slot(&mut grads, nodes, *x);
                    for chunk in dx.chunks_mut(c) {
                        chunk.iter_mut().zip(&g).for_each(|(d, v)| *d += v / r);
                    }
                }
                Op::MeanCols(x) => {
                    let c = nodes[x.0].value.cols();
                    let dx = slot(&mut grads, nodes, *x);
                    for (chunk, v) in dx.chunks_mut(c).zip(&g) {
                        chunk.iter_mut().for_each(|d| *d += v / c as f64);
                    }
                }
                Op::SegmentMeanRows(x, lens) => {
                    let c = out.cols();
                    let dx = slot(&mut grads, nodes, *x);
                    let mut row = 0;
                    for (s, &len) in lens.iter().enumerate() {
                        for _ in 0..len {
                            for (d, v) in dx[row * c..(row + 1) * c]
                                .iter_mut()
                                .zip(&g[s * c..(s + 1) * c])
                            {
                                *d += v / len as f64;
                            }
                            row += 1;
                        }
                    }
                }
                Op::SegmentBroadcastRows(x, lens) => {
                    let c = out.cols();
                    let dx = slot(&mut grads, nodes, *x);
                    let mut row = 0;
                    for (s, &len) in lens.iter().enumerate() {
                        for _ in 0..len {
                            add_into(&mut dx[s * c..(s + 1) * c], &g[row * c..(row + 1) * c]);
                            row += 1;
                        }
                    }
                }
                Op::SumAll(x) => {
                    let dx = slot(&mut grads, nodes, *x);
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
                Op::Relu(x) => {
                    let xd = nodes[x.0].value.data();
                    let dx = slot(&mut grads, nodes, *x);
                    for ((d, v), xv) in dx.iter_mut().zip(&g).zip(xd) {
                        if *xv > 0.0 {
                            *d += v;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let dx = slot(&mut grads, nodes, *x);
                    for ((d, v), y) in dx.iter_mut().zip(&g).zip(out.data()) {
                        *d += v * y * (1.0 - y);
                    }
                }
                Op::Softmax(x) => {
                    let y = out.data();
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    let dx = slot(&mut grads, nodes, *x);
                    for ((d, v), yv) in dx.iter_mut().zip(&g).zip(y) {
                        *d += yv * (v - dot);
                    }
                }
                Op::Conv1d { x, w, b, segments } => {
                    conv1d_backward(&g, nodes, &mut grads, *x, *w, *b, segments);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    train,
                } => {
                    let c = inv_std.len();
                    let r = g.len() / c;
                    let mut sum_g = vec![0.0; c];
                    let mut sum_gx = vec![0.0; c];
                    for (k, v) in g.iter().enumerate() {
                        sum_g[k % c] += v;
                        sum_gx[k % c] += v * xhat[k];
                    }
                    add_into(slot(&mut grads, nodes, *beta), &sum_g);
                    add_into(slot(&mut grads, nodes, *gamma), &sum_gx);
                    let gam = nodes[gamma.0].value.data();
                    let dx = slot(&mut grads, nodes, *x);
                    let n = r as f64;
                    for (k, d) in dx.iter_mut().enumerate() {
                        let j = k % c;
                        let scale = gam[j] * inv_std[j];
                        *d += if *train {
                            scale / n * (n * g[k] - sum_g[j] - xhat[k] * sum_gx[j])
                        } else {
                            scale * g[k]
                        };
                    }
                }
                Op::Bce { p, labels, eps } => {
                    let pd = nodes[p.0].value.data();
                    let n = labels.len() as f64;
                    let dp = slot(&mut grads, nodes, *p);
                    for ((d, &pv), &y) in dp.iter_mut().zip(pd).zip(labels) {
                        if pv > *eps && pv < 1.0 - eps {
                            *d += g[0] * (-(y / pv) + (1.0 - y) / (1.0 - pv)) / n;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn conv1d_backward(
    g: &[f64],
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    x: Var,
    w: Var,
    b: Var,
    segments: &[usize],
) {
    let xt = &nodes[x.0].value;
    let wt = &nodes[w.0].value;
    let (c_in, k, c_out) = (xt.cols(), wt.shape()[0], wt.shape()[2]);
    let pad = (k - 1) / 2;
    let (xd, wd) = (xt.data(), wt.data());
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wd.len()];
    let mut db = vec![0.0; c_out];
    let mut offset = 0;
    for &len in segments {
        for t in 0..len {
            let grow = &g[(offset + t) * c_out..(offset + t + 1) * c_out];
            add_into(&mut db, grow);
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                let base = (offset + src) * c_in;
                for ci in 0..c_in {
                    let widx = (j * c_in + ci) * c_out;
                    let wrow = &wd[widx..widx + c_out];
                    dx[base + ci] += grow.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                    let xv = xd[base + ci];
                    if xv != 0.0 {
                        for (d, gv) in dw[widx..widx + c_out].iter_mut().zip(grow) {
                            *d += xv * gv;
                        }
                    }
                }
            }
        }
        offset += len;
    }
    for (v, d) in [(x, dx), (w, dw), (b, db)] {
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
        add_into(slot, &d);
    }
}
