//! A small reverse-mode automatic differentiation tape over dense matrices.
//!
//! Every value is a row-major `f64` matrix. Operations append nodes; calling
//! [`Tape::backward`] walks the nodes in reverse and accumulates gradients for
//! the parameters that were bound with [`Tape::param`]. Nodes that do not
//! depend on a parameter are never differentiated.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};

use crate::params::{Matrix, ParamId, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    LogClamped(Var, f64),
    Abs(Var),
    Square(Var),
    Sum(Var),
    RowSum(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Reshape(Var),
    Gather(Var, Vec<usize>),
    BlockSelect(Var, usize, Vec<usize>),
    LogSoftmax(Var),
    Gru {
        gi: Var,
        gh: Var,
        h: Var,
        r: Matrix,
        z: Matrix,
        n: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to every bound parameter.
#[derive(Debug, Default)]
pub struct Gradients {
    by_param: HashMap<(u64, usize), Matrix>,
}

impl Gradients {
    pub fn get(&self, params: &ParamSet, id: ParamId) -> Option<&Matrix> {
        self.by_param.get(&(params.uid(), id.index()))
    }

    pub fn global_norm(&self, params: &ParamSet) -> f64 {
        params
            .ids()
            .filter_map(|id| self.get(params, id))
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<(u64, usize), Var>,
    params_of: Vec<(Var, (u64, usize))>,
    grad_enabled: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: HashMap::new(),
            params_of: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape on which parameters are bound as constants.
    pub fn no_grad() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Binds a parameter; repeated bindings of the same parameter share a node.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let key = (params.uid(), id.index());
        if let Some(&v) = self.bound.get(&key) {
            return v;
        }
        let value = params.get(id).clone();
        let v = if self.grad_enabled {
            let v = self.push(value, Op::Param, true);
            self.params_of.push((v, key));
            v
        } else {
            self.push(value, Op::Constant, false)
        };
        self.bound.insert(key, v);
        v
    }

    /// Copies a value into a constant node, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    /// `a + row` where `row` is `1 × cols` and broadcasts over rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1, "add_row expects a single row");
        let value = self.value(a) + self.value(row);
        let ng = self.needs(a) || self.needs(row);
        self.push(value, Op::AddRow(a, row), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, c), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        let ng = self.needs(a);
        self.push(value, Op::Relu(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        let ng = self.needs(a);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let ng = self.needs(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        let ng = self.needs(a);
        self.push(value, Op::Exp(a), ng)
    }

    /// `ln(max(x, floor))`; entries at or below the floor get no gradient.
    pub fn log_clamped(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).mapv(|x| x.max(floor).ln());
        let ng = self.needs(a);
        self.push(value, Op::LogClamped(a, floor), ng)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::abs);
        let ng = self.needs(a);
        self.push(value, Op::Abs(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x * x);
        let ng = self.needs(a);
        self.push(value, Op::Square(a), ng)
    }

    /// Sum of all entries as a `1 × 1` matrix.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.needs(a);
        self.push(value, Op::Sum(a), ng)
    }

    /// Per-row sums as an `m × 1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.needs(a);
        self.push(value, Op::RowSum(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts must agree");
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("column counts must agree");
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![start..start + len, ..]).to_owned();
        let ng = self.needs(a);
        self.push(value, Op::SliceRows(a, start), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let ng = self.needs(a);
        self.push(value, Op::SliceCols(a, start), ng)
    }

    /// Row-major reshape preserving the element count.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.len(), rows * cols, "reshape must preserve size");
        let value = Array2::from_shape_vec((rows, cols), src.iter().copied().collect())
            .expect("shape checked above");
        let ng = self.needs(a);
        self.push(value, Op::Reshape(a), ng)
    }

    /// Picks `a[i, cols[i]]` for every row, giving an `m × 1` column.
    pub fn gather(&mut self, a: Var, cols: Vec<usize>) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), cols.len());
        let value = Array2::from_shape_fn((cols.len(), 1), |(i, _)| src[[i, cols[i]]]);
        let ng = self.needs(a);
        self.push(value, Op::Gather(a, cols), ng)
    }

    /// Per-row maximum; ties resolve to the lowest column.
    pub fn row_max(&mut self, a: Var) -> Var {
        let cols: Vec<usize> = self.value(a).rows().into_iter().map(argmax).collect();
        self.gather(a, cols)
    }

    /// For row `i`, selects columns `blocks[i]*width .. (blocks[i]+1)*width`.
    pub fn block_select(&mut self, a: Var, width: usize, blocks: Vec<usize>) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), blocks.len());
        let value =
            Array2::from_shape_fn((blocks.len(), width), |(i, k)| src[[i, blocks[i] * width + k]]);
        let ng = self.needs(a);
        self.push(value, Op::BlockSelect(a, width, blocks), ng)
    }

    /// Row-wise log-softmax with max subtraction.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let lse = log_sum_exp(row.iter().copied());
            row.mapv_inplace(|x| x - lse);
        }
        let ng = self.needs(a);
        self.push(value, Op::LogSoftmax(a), ng)
    }

    /// Fused gated recurrent cell.
    ///
    /// `gi` and `gh` hold the input and hidden projections (biases included)
    /// laid out as `[reset | update | candidate]` blocks of the hidden width.
    pub fn gru(&mut self, gi: Var, gh: Var, h: Var) -> Var {
        let hd = self.shape(h).1;
        let (gi_v, gh_v, h_v) = (self.value(gi), self.value(gh), self.value(h));
        let r = (&gi_v.slice(s![.., 0..hd]) + &gh_v.slice(s![.., 0..hd])).mapv(sigmoid);
        let z = (&gi_v.slice(s![.., hd..2 * hd]) + &gh_v.slice(s![.., hd..2 * hd])).mapv(sigmoid);
        let mut n = &r * &gh_v.slice(s![.., 2 * hd..3 * hd]);
        n += &gi_v.slice(s![.., 2 * hd..3 * hd]);
        n.mapv_inplace(f64::tanh);
        let mut out = Matrix::zeros(h_v.raw_dim());
        Zip::from(&mut out)
            .and(&z)
            .and(&n)
            .and(h_v)
            .for_each(|o, &z, &n, &h| *o = (1.0 - z) * n + z * h);
        let ng = self.needs(gi) || self.needs(gh) || self.needs(h);
        self.push(out, Op::Gru { gi, gh, h, r, z, n }, ng)
    }

    /// Reverse pass from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Constant => {}
                Op::Param => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let da = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, -&g);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(*row) {
                        let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *row, dr);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::Relu(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&node.value)
                        .for_each(|d, &y| {
                            if y <= 0.0 {
                                *d = 0.0
                            }
                        });
                    accumulate(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= y * (1.0 - y));
                    accumulate(&mut grads, *a, d);
                }
                Op::Exp(a) => accumulate(&mut grads, *a, g * &node.value),
                Op::LogClamped(a, floor) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| *d = if x > *floor { *d / x } else { 0.0 });
                    accumulate(&mut grads, *a, d);
                }
                Op::Abs(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| *d *= sign(x));
                    accumulate(&mut grads, *a, d);
                }
                Op::Square(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| *d *= 2.0 * x);
                    accumulate(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let d = Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, d);
                }
                Op::RowSum(a) => {
                    let (m, n) = self.shape(*a);
                    let d = Array2::from_shape_fn((m, n), |(i, _)| g[[i, 0]]);
                    accumulate(&mut grads, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        if self.needs(p) {
                            accumulate(&mut grads, p, g.slice(s![.., start..start + w]).to_owned());
                        }
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        if self.needs(p) {
                            accumulate(&mut grads, p, g.slice(s![start..start + h, ..]).to_owned());
                        }
                        start += h;
                    }
                }
                Op::SliceRows(a, start) => {
                    let len = g.nrows();
                    let dst = grad_slot(&mut grads, *a, self.value(*a));
                    let mut view = dst.slice_mut(s![*start..*start + len, ..]);
                    view += &g;
                }
                Op::SliceCols(a, start) => {
                    let len = g.ncols();
                    let dst = grad_slot(&mut grads, *a, self.value(*a));
                    let mut view = dst.slice_mut(s![.., *start..*start + len]);
                    view += &g;
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).raw_dim();
                    let d = Array2::from_shape_vec(shape, g.iter().copied().collect())
                        .expect("reshape preserves size");
                    accumulate(&mut grads, *a, d);
                }
                Op::Gather(a, cols) => {
                    let dst = grad_slot(&mut grads, *a, self.value(*a));
                    for (i, &c) in cols.iter().enumerate() {
                        dst[[i, c]] += g[[i, 0]];
                    }
                }
                Op::BlockSelect(a, width, blocks) => {
                    let dst = grad_slot(&mut grads, *a, self.value(*a));
                    for (i, &b) in blocks.iter().enumerate() {
                        for k in 0..*width {
                            dst[[i, b * width + k]] += g[[i, k]];
                        }
                    }
                }
                Op::LogSoftmax(a) => {
                    let mut d = g;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(node.value.rows()) {
                        let total: f64 = drow.sum();
                        Zip::from(&mut drow)
                            .and(&yrow)
                            .for_each(|d, &y| *d -= y.exp() * total);
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Gru { gi, gh, h, r, z, n } => {
                    let hd = r.ncols();
                    let gh_v = self.value(*gh);
                    let h_v = self.value(*h);
                    let rows = g.nrows();
                    let mut dgi = Matrix::zeros((rows, 3 * hd));
                    let mut dgh = Matrix::zeros((rows, 3 * hd));
                    let mut dh = Matrix::zeros((rows, hd));
                    for i in 0..rows {
                        for k in 0..hd {
                            let (rv, zv, nv) = (r[[i, k]], z[[i, k]], n[[i, k]]);
                            let dout = g[[i, k]];
                            let dn = dout * (1.0 - zv);
                            let dz = dout * (h_v[[i, k]] - nv);
                            dh[[i, k]] = dout * zv;
                            let dpre_n = dn * (1.0 - nv * nv);
                            let dr = dpre_n * gh_v[[i, 2 * hd + k]];
                            let dpre_r = dr * rv * (1.0 - rv);
                            let dpre_z = dz * zv * (1.0 - zv);
                            dgi[[i, k]] = dpre_r;
                            dgi[[i, hd + k]] = dpre_z;
                            dgi[[i, 2 * hd + k]] = dpre_n;
                            dgh[[i, k]] = dpre_r;
                            dgh[[i, hd + k]] = dpre_z;
                            dgh[[i, 2 * hd + k]] = dpre_n * rv;
                        }
                    }
                    if self.needs(*gi) {
                        accumulate(&mut grads, *gi, dgi);
                    }
                    if self.needs(*gh) {
                        accumulate(&mut grads, *gh, dgh);
                    }
                    if self.needs(*h) {
                        accumulate(&mut grads, *h, dh);
                    }
                }
            }
        }

        let mut by_param = HashMap::new();
        for &(v, key) in &self.params_of {
            if let Some(g) = grads[v.0].take() {
                by_param.insert(key, g);
            }
        }
        Gradients { by_param }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &d,
        slot @ None => *slot = Some(d),
    }
}

fn grad_slot<'a>(grads: &'a mut [Option<Matrix>], v: Var, like: &Matrix) -> &'a mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(like.raw_dim()))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Index of the largest element; the lowest index wins ties.
pub fn argmax<'a>(xs: impl IntoIterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &x) in xs.into_iter().enumerate() {
        if x > best_val {
            best = i;
            best_val = x;
        }
    }
    best
}
