//! A small reverse-mode tape over dense row-major `f64` matrices.
//!
//! Only the operations the control transformer needs are provided. Nodes
//! that do not depend on a gradient-requiring leaf are never visited in the
//! backward pass.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat({}x{})", self.rows, self.cols)
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec({rows}, {cols})");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_t inner dims");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * other.rows..(i + 1) * other.rows];
            for (j, oj) in o.iter_mut().enumerate() {
                *oj = dot(a, other.row(j));
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dims");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (oj, bj) in o.iter_mut().zip(other.row(k)) {
                    *oj += a * bj;
                }
            }
        }
        out
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "t_matmul inner dims");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (oj, bj) in o.iter_mut().zip(b) {
                    *oj += ai * bj;
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMulT(Var, Var),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    AddRowsAt(Var, Var, usize),
    Scale(Var, f64),
    LayerNorm(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Mse(Var, Mat),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Mat, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.leaf(value, false)
    }

    /// `a · bᵀ`; with `b` a `[out, in]` weight this is a linear layer.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMulT(a, b), g)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), g)
    }

    /// Adds the `1 x cols` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows, 1);
        assert_eq!(b.cols, self.value(a).cols);
        let mut v = self.value(a).clone();
        let bias_row = b.data.clone();
        for row in v.data.chunks_exact_mut(v.cols) {
            for (x, bb) in row.iter_mut().zip(&bias_row) {
                *x += bb;
            }
        }
        let g = self.needs(a) || self.needs(bias);
        self.push(v, Op::AddRow(a, bias), g)
    }

    /// Adds `b` to rows `offset..offset + b.rows` of `a`.
    pub fn add_rows_at(&mut self, a: Var, b: Var, offset: usize) -> Var {
        let bv = self.value(b).clone();
        let mut v = self.value(a).clone();
        assert_eq!(bv.cols, v.cols);
        assert!(offset + bv.rows <= v.rows);
        for (x, y) in v.data[offset * v.cols..(offset + bv.rows) * v.cols]
            .iter_mut()
            .zip(&bv.data)
        {
            *x += y;
        }
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::AddRowsAt(a, b, offset), g)
    }

    /// Linear layer `x · Wᵀ + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul_t(x, w);
        self.add_row(y, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x *= s);
        let g = self.needs(a);
        self.push(v, Op::Scale(a, s), g)
    }

    /// Row-wise layer norm without affine parameters.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for row in v.data.chunks_exact_mut(x.cols) {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|r| *r = (*r - mean) * inv);
        }
        let g = self.needs(a);
        self.push(v, Op::LayerNorm(a), g)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x = gelu(*x));
        let g = self.needs(a);
        self.push(v, Op::Gelu(a), g)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for row in v.data.chunks_exact_mut(v.cols) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for r in row.iter_mut() {
                *r = (*r - m).exp();
                s += *r;
            }
            row.iter_mut().for_each(|r| *r /= s);
        }
        let g = self.needs(a);
        self.push(v, Op::SoftmaxRows(a), g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols);
        let v = Mat::from_fn(x.rows, len, |r, c| x.at(r, start + c));
        let g = self.needs(a);
        self.push(v, Op::SliceCols(a, start), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows, rows);
            for r in 0..rows {
                v.data[r * cols + off..r * cols + off + m.cols].copy_from_slice(m.row(r));
            }
            off += m.cols;
        }
        let g = parts.iter().any(|p| self.needs(*p));
        self.push(v, Op::ConcatCols(parts.to_vec()), g)
    }

    /// Mean squared error against a constant target, as a `1 x 1` node.
    pub fn mse(&mut self, a: Var, target: &Mat) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), target.shape());
        let n = x.data.len() as f64;
        let s: f64 = x.data.iter().zip(&target.data).map(|(p, t)| (p - t) * (p - t)).sum();
        let g = self.needs(a);
        self.push(Mat::from_vec(1, 1, vec![s / n]), Op::Mse(a, target.clone()), g)
    }

    /// Back-propagates from the scalar node `loss`. Returns a gradient slot per
    /// node; leaves that required gradients get `Some`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar");
        grads[loss.0] = Some(Mat::from_vec(1, 1, vec![1.0]));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(dy);
                    continue;
                }
                Op::MatMulT(a, b) => {
                    if self.needs(*a) {
                        let da = dy.matmul(self.value(*b));
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = dy.t_matmul(self.value(*a));
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let da = dy.matmul_t(self.value(*b));
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = self.value(*a).t_matmul(&dy);
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, dy.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, dy);
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.needs(*bias) {
                        let mut db = Mat::zeros(1, dy.cols);
                        for row in dy.data.chunks_exact(dy.cols) {
                            for (d, r) in db.data.iter_mut().zip(row) {
                                *d += r;
                            }
                        }
                        accumulate(&mut grads, *bias, db);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, dy);
                    }
                }
                Op::AddRowsAt(a, b, offset) => {
                    if self.needs(*b) {
                        let rows = self.value(*b).rows;
                        let db = Mat::from_vec(
                            rows,
                            dy.cols,
                            dy.data[offset * dy.cols..(offset + rows) * dy.cols].to_vec(),
                        );
                        accumulate(&mut grads, *b, db);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, dy);
                    }
                }
                Op::Scale(a, s) => {
                    let mut da = dy;
                    da.data.iter_mut().for_each(|x| *x *= s);
                    accumulate(&mut grads, *a, da);
                }
                Op::LayerNorm(a) => {
                    let y = &node.value;
                    let x = self.value(*a);
                    let mut da = Mat::zeros(dy.rows, dy.cols);
                    for r in 0..dy.rows {
                        let xr = x.row(r);
                        let n = xr.len() as f64;
                        let mean = xr.iter().sum::<f64>() / n;
                        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                        let (dyr, yr) = (dy.row(r), y.row(r));
                        let mean_dy = dyr.iter().sum::<f64>() / n;
                        let mean_dyy = dyr.iter().zip(yr).map(|(d, yy)| d * yy).sum::<f64>() / n;
                        for c in 0..dy.cols {
                            da.data[r * dy.cols + c] = inv * (dyr[c] - mean_dy - yr[c] * mean_dyy);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut da = dy;
                    for (d, xv) in da.data.iter_mut().zip(&x.data) {
                        *d *= gelu_grad(*xv);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut da = Mat::zeros(dy.rows, dy.cols);
                    for r in 0..dy.rows {
                        let (dyr, yr) = (dy.row(r), y.row(r));
                        let s: f64 = dyr.iter().zip(yr).map(|(d, yy)| d * yy).sum();
                        for c in 0..dy.cols {
                            da.data[r * dy.cols + c] = yr[c] * (dyr[c] - s);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut da = Mat::zeros(src.rows, src.cols);
                    for r in 0..dy.rows {
                        da.data[r * src.cols + start..r * src.cols + start + dy.cols].copy_from_slice(dy.row(r));
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let cols = self.value(*p).cols;
                        if self.needs(*p) {
                            let dp = Mat::from_fn(dy.rows, cols, |r, c| dy.at(r, off + c));
                            accumulate(&mut grads, *p, dp);
                        }
                        off += cols;
                    }
                }
                Op::Mse(a, target) => {
                    let x = self.value(*a);
                    let scale = 2.0 * dy.data[0] / x.data.len() as f64;
                    let da = Mat::from_vec(
                        x.rows,
                        x.cols,
                        x.data.iter().zip(&target.data).map(|(p, t)| scale * (p - t)).collect(),
                    );
                    accumulate(&mut grads, *a, da);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Mat> {
        self.grads[v.0].take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Mat {
        Mat::from_vec(rows, cols, rng::normal_vec(&mut rng::seeded(seed), rows * cols))
    }

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Mat, f: impl Fn(&Mat) -> f64) -> Mat {
        let h = 1e-5;
        let mut g = Mat::zeros(x.rows, x.cols);
        for i in 0..x.data.len() {
            let mut p = x.clone();
            p.data[i] += h;
            let mut m = x.clone();
            m.data[i] -= h;
            g.data[i] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    fn assert_close(a: &Mat, b: &Mat, tol: f64) {
        for (x, y) in a.data.iter().zip(&b.data) {
            let scale = x.abs().max(y.abs()).max(1e-3);
            assert!((x - y).abs() / scale < tol, "{x} vs {y}");
        }
    }

    /// Every op composed into one scalar; checked against finite differences.
    fn composite(tape: &mut Tape, x: Var, w: Var, b: Var, target: &Mat) -> Var {
        let h = tape.linear(x, w, b);
        let h = tape.layer_norm(h);
        let h = tape.gelu(h);
        let l = tape.slice_cols(h, 0, 2);
        let r = tape.slice_cols(h, 2, 2);
        let s = tape.matmul_t(l, r);
        let s = tape.scale(s, 0.7);
        let p = tape.softmax_rows(s);
        let o = tape.matmul(p, r);
        let o = tape.concat_cols(&[o, l]);
        let extra = tape.slice_cols(o, 0, 4);
        let o = tape.add(o, extra);
        let top = tape.slice_cols(h, 0, 4);
        let o = tape.add_rows_at(o, top, 0);
        tape.mse(o, target)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x0 = random(3, 5, 1);
        let w0 = random(4, 5, 2);
        let b0 = random(1, 4, 3);
        let target = random(3, 4, 4);
        let run = |x: &Mat, w: &Mat, b: &Mat| {
            let mut t = Tape::new();
            let (xv, wv, bv) = (
                t.leaf(x.clone(), true),
                t.leaf(w.clone(), true),
                t.leaf(b.clone(), true),
            );
            let loss = composite(&mut t, xv, wv, bv, &target);
            (t, loss, [xv, wv, bv])
        };
        let (tape, loss, vars) = run(&x0, &w0, &b0);
        let grads = tape.backward(loss);
        let f_x = |x: &Mat| {
            let (t, l, _) = run(x, &w0, &b0);
            t.value(l).data[0]
        };
        let f_w = |w: &Mat| {
            let (t, l, _) = run(&x0, w, &b0);
            t.value(l).data[0]
        };
        let f_b = |b: &Mat| {
            let (t, l, _) = run(&x0, &w0, b);
            t.value(l).data[0]
        };
        assert_close(grads.get(vars[0]).unwrap(), &numeric_grad(&x0, f_x), 1e-5);
        assert_close(grads.get(vars[1]).unwrap(), &numeric_grad(&w0, f_w), 1e-5);
        assert_close(grads.get(vars[2]).unwrap(), &numeric_grad(&b0, f_b), 1e-5);
    }

    #[test]
    fn frozen_leaves_get_no_gradient() {
        let mut t = Tape::new();
        let x = t.constant(random(2, 3, 5));
        let w = t.leaf(random(2, 3, 6), true);
        let frozen = t.leaf(random(1, 2, 7), false);
        let y = t.linear(x, w, frozen);
        let loss = t.mse(y, &Mat::zeros(2, 2));
        let g = t.backward(loss);
        assert!(g.get(w).is_some());
        assert!(g.get(frozen).is_none());
        assert!(g.get(x).is_none());
    }

    #[test]
    fn matmul_variants_agree() {
        let a = random(3, 4, 8);
        let b = random(4, 2, 9);
        let bt = Mat::from_fn(2, 4, |r, c| b.at(c, r));
        assert_close(&a.matmul(&b), &a.matmul_t(&bt), 1e-12);
        let at = Mat::from_fn(4, 3, |r, c| a.at(c, r));
        assert_close(&at.t_matmul(&b), &a.matmul(&b), 1e-12);
    }
}
