use super::tensor::{gemm, Tensor};
use crate::{DoaError, Result};

pub const LAYERNORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044_715;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    GroupMatMul { a: Var, b: Var, groups: usize, trans_b: bool },
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    AddTiled { x: Var, tile: Var },
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    SoftmaxRows(Var),
    Gelu(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SelectRows { a: Var, rows: Vec<usize> },
    SliceCols { a: Var, start: usize },
    PrependRowPerGroup { row: Var, x: Var, groups: usize },
    RowRmse { pred: Var, target: Tensor },
    CosineRows { a: Var, target: Tensor },
    SqDistRows { a: Var, target: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation so it can be differentiated in reverse.
/// Nodes are appended in evaluation order, which is already topological.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node reached from the loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `v`; zeros when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0].take().unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn dim_err(what: &str, a: &[usize], b: &[usize]) -> DoaError {
    DoaError::Dimension(format!("{what}: {a:?} vs {b:?}"))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(DoaError::Numeric(format!("non-finite value produced by {:?}", op_name(&op))));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    fn rc(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    /// `a·b`, or `a·bᵀ` when `trans_b`.
    pub fn matmul_t(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.rc(a);
        let (br, bc) = self.rc(b);
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(dim_err("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(false, trans_b, m, k, n, self.value(a).data(), self.value(b).data(), 0.0, &mut out);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul { a, b, trans_b })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false)
    }

    /// Block-diagonal product: rows of `a` and `b` are split into `groups`
    /// equal blocks and block `g` of the output is `a_g·b_g` (or `a_g·b_gᵀ`).
    pub fn group_matmul(&mut self, a: Var, b: Var, groups: usize, trans_b: bool) -> Result<Var> {
        let (ar, k) = self.rc(a);
        let (br, bc) = self.rc(b);
        if groups == 0 || ar % groups != 0 || br % groups != 0 {
            return Err(dim_err("group_matmul groups", self.value(a).shape(), self.value(b).shape()));
        }
        let m = ar / groups;
        let bgr = br / groups;
        let (kb, n) = if trans_b { (bc, bgr) } else { (bgr, bc) };
        if k != kb {
            return Err(dim_err("group_matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let mut out = vec![0.0; groups * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for g in 0..groups {
            gemm(
                false,
                trans_b,
                m,
                k,
                n,
                &ad[g * m * k..],
                &bd[g * bgr * bc..],
                0.0,
                &mut out[g * m * n..(g + 1) * m * n],
            );
        }
        self.push(Tensor::matrix(groups * m, n, out)?, Op::GroupMatMul { a, b, groups, trans_b })
    }

    /// `x·wᵀ + b` with `w` stored `out × in`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (m, k) = self.rc(x);
        let (n, kw) = self.rc(w);
        if k != kw {
            return Err(dim_err("linear weight", self.value(x).shape(), self.value(w).shape()));
        }
        let mut out = vec![0.0; m * n];
        if let Some(b) = b {
            let bias = self.value(b);
            if bias.len() != n {
                return Err(dim_err("linear bias", &[n], bias.shape()));
            }
            for row in out.chunks_mut(n) {
                row.copy_from_slice(bias.data());
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(false, true, m, k, n, self.value(x).data(), self.value(w).data(), beta, &mut out);
        self.push(Tensor::matrix(m, n, out)?, Op::Linear { x, w, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("add", ta.shape(), tb.shape()));
        }
        let out = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = ta.like(out);
        self.push(t, Op::Add(a, b))
    }

    /// Adds `tile` (r × c) to every consecutive block of r rows of `x`.
    pub fn add_tiled(&mut self, x: Var, tile: Var) -> Result<Var> {
        let (xr, xc) = self.rc(x);
        let (tr, tc) = self.rc(tile);
        if xc != tc || tr == 0 || xr % tr != 0 {
            return Err(dim_err("add_tiled", self.value(x).shape(), self.value(tile).shape()));
        }
        let td = self.value(tile).data();
        let out: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + td[i % (tr * tc)])
            .collect();
        let t = self.value(x).like(out);
        self.push(t, Op::AddTiled { x, tile })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("mul", ta.shape(), tb.shape()));
        }
        let out = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = ta.like(out);
        self.push(t, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a);
        let t = t.like(t.data().iter().map(|v| v * c).collect());
        self.push(t, Op::Scale(a, c))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (rows, d) = self.rc(x);
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(dim_err("layernorm", self.value(x).shape(), self.value(gain).shape()));
        }
        let xd = self.value(x).data();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![0.0; rows * d];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; rows * d];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LAYERNORM_EPS).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let h = (row[c] - mean) * rs;
                xhat[r * d + c] = h;
                out[r * d + c] = h * g[c] + b[c];
            }
        }
        let t = self.value(x).like(out);
        self.push(t, Op::LayerNorm { x, gain, bias, xhat, rstd })
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let c = t.cols();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(c) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let t = t.like(out);
        self.push(t, Op::SoftmaxRows(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let out = t
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()))
            .collect();
        let t = t.like(out);
        self.push(t, Op::Gelu(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = parts.first().map(|&p| self.value(p).cols()).ok_or_else(|| DoaError::Empty("concat_rows".into()))?;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != c {
                return Err(dim_err("concat_rows", &[c], t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let rows = data.len() / c;
        self.push(Tensor::matrix(rows, c, data)?, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map(|&p| self.value(p).rows()).ok_or_else(|| DoaError::Empty("concat_cols".into()))?;
        let mut total = 0;
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(dim_err("concat_cols", &[rows], self.value(p).shape()));
            }
            total += self.value(p).cols();
        }
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            let c = t.cols();
            for r in 0..rows {
                data[r * total + off..r * total + off + c].copy_from_slice(t.row_slice(r));
            }
            off += c;
        }
        self.push(Tensor::matrix(rows, total, data)?, Op::ConcatCols(parts.to_vec()))
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (n, c) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= n {
                return Err(DoaError::Dimension(format!("row {r} out of {n}")));
            }
            data.extend_from_slice(t.row_slice(r));
        }
        self.push(Tensor::matrix(rows.len(), c, data)?, Op::SelectRows { a, rows: rows.to_vec() })
    }

    pub fn slice_row(&mut self, a: Var, row: usize) -> Result<Var> {
        self.select_rows(a, &[row])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let (rows, c) = (t.rows(), t.cols());
        if start + len > c {
            return Err(DoaError::Dimension(format!("columns {start}..{} out of {c}", start + len)));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.row_slice(r)[start..start + len]);
        }
        self.push(Tensor::matrix(rows, len, data)?, Op::SliceCols { a, start })
    }

    /// Inserts `row` (1 × c) in front of each of the `groups` row blocks of `x`.
    pub fn prepend_row_per_group(&mut self, row: Var, x: Var, groups: usize) -> Result<Var> {
        let (xr, c) = self.rc(x);
        if self.value(row).len() != c || groups == 0 || xr % groups != 0 {
            return Err(dim_err("prepend_row_per_group", self.value(row).shape(), self.value(x).shape()));
        }
        let per = xr / groups;
        let (rd, xd) = (self.value(row).data(), self.value(x).data());
        let mut data = Vec::with_capacity((xr + groups) * c);
        for g in 0..groups {
            data.extend_from_slice(rd);
            data.extend_from_slice(&xd[g * per * c..(g + 1) * per * c]);
        }
        self.push(Tensor::matrix(xr + groups, c, data)?, Op::PrependRowPerGroup { row, x, groups })
    }

    /// Mean over rows of `sqrt(mean_c (pred − target)²)`.
    pub fn row_rmse(&mut self, pred: Var, target: Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.rows() != target.rows() || p.cols() != target.cols() {
            return Err(dim_err("row_rmse", p.shape(), target.shape()));
        }
        let c = p.cols();
        let total: f64 = p
            .data()
            .chunks(c)
            .zip(target.data().chunks(c))
            .map(|(pr, tr)| (pr.iter().zip(tr).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / c as f64).sqrt())
            .sum();
        let v = total / p.rows() as f64;
        self.push(Tensor::scalar(v), Op::RowRmse { pred, target })
    }

    /// Mean over rows of `1 − cos(a_r, target_r)`; a zero row counts as 1.
    pub fn cosine_rows(&mut self, a: Var, target: Tensor) -> Result<Var> {
        let t = self.value(a);
        if t.rows() != target.rows() || t.cols() != target.cols() {
            return Err(dim_err("cosine_rows", t.shape(), target.shape()));
        }
        let c = t.cols();
        let total: f64 = t
            .data()
            .chunks(c)
            .zip(target.data().chunks(c))
            .map(|(x, y)| cosine_row(x, y).0)
            .sum();
        let v = total / t.rows() as f64;
        self.push(Tensor::scalar(v), Op::CosineRows { a, target })
    }

    /// Mean over rows of `‖a_r − target_r‖²`.
    pub fn sq_dist_rows(&mut self, a: Var, target: Tensor) -> Result<Var> {
        let t = self.value(a);
        if t.rows() != target.rows() || t.cols() != target.cols() {
            return Err(dim_err("sq_dist_rows", t.shape(), target.shape()));
        }
        let total: f64 = t.data().iter().zip(target.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let v = total / t.rows() as f64;
        self.push(Tensor::scalar(v), Op::SqDistRows { a, target })
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(DoaError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(self.value(loss).like(vec![1.0]));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(e) => e.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.rows(), ta.cols());
                let n = g.cols();
                let mut da = vec![0.0; m * k];
                // da = g · op(b)ᵀ
                gemm(false, !*trans_b, m, n, k, g.data(), tb.data(), 0.0, &mut da);
                acc(*a, ta.like(da));
                let mut db = vec![0.0; tb.len()];
                if *trans_b {
                    gemm(true, false, n, m, k, g.data(), ta.data(), 0.0, &mut db);
                } else {
                    gemm(true, false, k, m, n, ta.data(), g.data(), 0.0, &mut db);
                }
                acc(*b, tb.like(db));
            }
            Op::GroupMatMul { a, b, groups, trans_b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let k = ta.cols();
                let m = ta.rows() / groups;
                let bgr = tb.rows() / groups;
                let bc = tb.cols();
                let n = g.cols();
                let mut da = vec![0.0; ta.len()];
                let mut db = vec![0.0; tb.len()];
                for gi in 0..*groups {
                    let gs = &g.data()[gi * m * n..(gi + 1) * m * n];
                    let ag = &ta.data()[gi * m * k..(gi + 1) * m * k];
                    let bg = &tb.data()[gi * bgr * bc..(gi + 1) * bgr * bc];
                    gemm(false, !*trans_b, m, n, k, gs, bg, 0.0, &mut da[gi * m * k..(gi + 1) * m * k]);
                    let dbg = &mut db[gi * bgr * bc..(gi + 1) * bgr * bc];
                    if *trans_b {
                        gemm(true, false, n, m, k, gs, ag, 0.0, dbg);
                    } else {
                        gemm(true, false, k, m, n, ag, gs, 0.0, dbg);
                    }
                }
                acc(*a, ta.like(da));
                acc(*b, tb.like(db));
            }
            Op::Linear { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (m, k) = (tx.rows(), tx.cols());
                let n = tw.rows();
                let mut dx = vec![0.0; m * k];
                gemm(false, false, m, n, k, g.data(), tw.data(), 0.0, &mut dx);
                acc(*x, tx.like(dx));
                let mut dw = vec![0.0; n * k];
                gemm(true, false, n, m, k, g.data(), tx.data(), 0.0, &mut dw);
                acc(*w, tw.like(dw));
                if let Some(b) = b {
                    let mut db = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(*b, self.value(*b).like(db));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddTiled { x, tile } => {
                let tt = self.value(*tile);
                let block = tt.len();
                let mut dt = vec![0.0; block];
                for (i, v) in g.data().iter().enumerate() {
                    dt[i % block] += v;
                }
                acc(*x, g.clone());
                acc(*tile, tt.like(dt));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = g.data().iter().zip(tb.data()).map(|(gv, bv)| gv * bv).collect();
                let db = g.data().iter().zip(ta.data()).map(|(gv, av)| gv * av).collect();
                acc(*a, ta.like(da));
                acc(*b, tb.like(db));
            }
            Op::Scale(a, c) => acc(*a, g.like(g.data().iter().map(|v| v * c).collect())),
            Op::Sum(a) => {
                let t = self.value(*a);
                acc(*a, t.like(vec![g.item(); t.len()]));
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let d = out.cols();
                let gd = self.value(*gain).data();
                let mut dx = vec![0.0; out.len()];
                let mut dg = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                let mut dxhat = vec![0.0; d];
                for (r, &rs) in rstd.iter().enumerate() {
                    let gr = &g.data()[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let (mut m1, mut m2) = (0.0, 0.0);
                    for c in 0..d {
                        dg[c] += gr[c] * hr[c];
                        dbias[c] += gr[c];
                        dxhat[c] = gr[c] * gd[c];
                        m1 += dxhat[c];
                        m2 += dxhat[c] * hr[c];
                    }
                    m1 /= d as f64;
                    m2 /= d as f64;
                    for c in 0..d {
                        dx[r * d + c] = rs * (dxhat[c] - m1 - hr[c] * m2);
                    }
                }
                acc(*x, out.like(dx));
                acc(*gain, self.value(*gain).like(dg));
                acc(*bias, self.value(*bias).like(dbias));
            }
            Op::SoftmaxRows(a) => {
                let c = out.cols();
                let mut dx = vec![0.0; out.len()];
                for ((dr, yr), gr) in dx.chunks_mut(c).zip(out.data().chunks(c)).zip(g.data().chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, gv)| y * gv).sum();
                    for i in 0..c {
                        dr[i] = yr[i] * (gr[i] - dot);
                    }
                }
                acc(*a, out.like(dx));
            }
            Op::Gelu(a) => {
                let t = self.value(*a);
                let dx = t
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&x, gv)| {
                        let th = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                        let d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        gv * d
                    })
                    .collect();
                acc(*a, t.like(dx));
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let t = self.value(*p);
                    acc(*p, t.like(g.data()[off..off + t.len()].to_vec()));
                    off += t.len();
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut off = 0;
                for p in parts {
                    let t = self.value(*p);
                    let c = t.cols();
                    let mut d = Vec::with_capacity(t.len());
                    for r in 0..t.rows() {
                        d.extend_from_slice(&g.data()[r * total + off..r * total + off + c]);
                    }
                    acc(*p, t.like(d));
                    off += c;
                }
            }
            Op::SelectRows { a, rows } => {
                let t = self.value(*a);
                let c = t.cols();
                let mut d = vec![0.0; t.len()];
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..c {
                        d[r * c + j] += g.data()[i * c + j];
                    }
                }
                acc(*a, t.like(d));
            }
            Op::SliceCols { a, start } => {
                let t = self.value(*a);
                let (c, len) = (t.cols(), g.cols());
                let mut d = vec![0.0; t.len()];
                for r in 0..t.rows() {
                    d[r * c + start..r * c + start + len].copy_from_slice(g.row_slice(r));
                }
                acc(*a, t.like(d));
            }
            Op::PrependRowPerGroup { row, x, groups } => {
                let (tr, tx) = (self.value(*row), self.value(*x));
                let c = tx.cols();
                let per = tx.rows() / groups;
                let mut drow = vec![0.0; c];
                let mut dx = Vec::with_capacity(tx.len());
                for gi in 0..*groups {
                    let base = gi * (per + 1) * c;
                    for (d, v) in drow.iter_mut().zip(&g.data()[base..base + c]) {
                        *d += v;
                    }
                    dx.extend_from_slice(&g.data()[base + c..base + (per + 1) * c]);
                }
                acc(*row, tr.like(drow));
                acc(*x, tx.like(dx));
            }
            Op::RowRmse { pred, target } => {
                let p = self.value(*pred);
                let (rows, c) = (p.rows(), p.cols());
                let scale = g.item() / rows as f64;
                let mut d = vec![0.0; p.len()];
                for r in 0..rows {
                    let pr = p.row_slice(r);
                    let tr = target.row_slice(r);
                    let rms = (pr.iter().zip(tr).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / c as f64).sqrt();
                    if rms > 0.0 {
                        for j in 0..c {
                            d[r * c + j] = scale * (pr[j] - tr[j]) / (c as f64 * rms);
                        }
                    }
                }
                acc(*pred, p.like(d));
            }
            Op::CosineRows { a, target } => {
                let t = self.value(*a);
                let (rows, c) = (t.rows(), t.cols());
                let scale = g.item() / rows as f64;
                let mut d = vec![0.0; t.len()];
                for r in 0..rows {
                    let x = t.row_slice(r);
                    let y = target.row_slice(r);
                    let (_, dot, nx, ny) = cosine_row(x, y);
                    if nx > 0.0 && ny > 0.0 {
                        for j in 0..c {
                            d[r * c + j] = -scale * (y[j] / (nx * ny) - dot * x[j] / (nx * nx * nx * ny));
                        }
                    }
                }
                acc(*a, t.like(d));
            }
            Op::SqDistRows { a, target } => {
                let t = self.value(*a);
                let scale = 2.0 * g.item() / t.rows() as f64;
                let d = t.data().iter().zip(target.data()).map(|(x, y)| scale * (x - y)).collect();
                acc(*a, t.like(d));
            }
        }
    }
}

/// `(1 − cos, dot, ‖x‖, ‖y‖)`; the loss is 1 when either vector is zero.
pub(crate) fn cosine_row(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return (1.0, dot, nx, ny);
    }
    // 1 − cos written as half the squared distance of the unit vectors,
    // which is exactly zero for equal inputs.
    let half_sq: f64 = x.iter().zip(y).map(|(a, b)| (a / nx - b / ny).powi(2)).sum::<f64>() / 2.0;
    (half_sq, dot, nx, ny)
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul { .. } => "matmul",
        Op::GroupMatMul { .. } => "group_matmul",
        Op::Linear { .. } => "linear",
        Op::Add(..) => "add",
        Op::AddTiled { .. } => "add_tiled",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Sum(_) => "sum",
        Op::LayerNorm { .. } => "layernorm",
        Op::SoftmaxRows(_) => "softmax_rows",
        Op::Gelu(_) => "gelu",
        Op::ConcatRows(_) => "concat_rows",
        Op::ConcatCols(_) => "concat_cols",
        Op::SelectRows { .. } => "select_rows",
        Op::SliceCols { .. } => "slice_cols",
        Op::PrependRowPerGroup { .. } => "prepend_row_per_group",
        Op::RowRmse { .. } => "row_rmse",
        Op::CosineRows { .. } => "cosine_rows",
        Op::SqDistRows { .. } => "sq_dist_rows",
    }
}
