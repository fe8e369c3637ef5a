//! A minimal reverse-mode tape over batched matrices. It covers the
//! operations the network losses need: affine layers, ReLU and tanh,
//! fixed per-column affine maps, column selection, masked mean squared error
//! and weighted sums.

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Tanh(Var),
    ColAffine { x: Var, scale: Vec<f64> },
    Select { x: Var, cols: Vec<usize> },
    MaskedMse { pred: Var, target: Matrix, mask: Matrix, count: f64 },
    Sum(Vec<(Var, f64)>),
    Add(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Constant, false)
    }

    /// Trainable leaf; its gradient is reported under `id`.
    pub fn param(&mut self, id: usize, m: Matrix) -> Var {
        self.push(m, Op::Param(id), true)
    }

    /// `x · w + b`, with `b` a 1 × k row broadcast over the batch.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let mut y = self.value(x).matmul(self.value(w));
        let bias = self.value(b).row(0).to_vec();
        for i in 0..y.rows() {
            for (v, bj) in y.row_mut(i).iter_mut().zip(&bias) {
                *v += bj;
            }
        }
        let g = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(y, Op::Linear { x, w, b }, g)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v.max(0.0));
        let g = self.needs(x);
        self.push(y, Op::Relu(x), g)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).map(f64::tanh);
        let g = self.needs(x);
        self.push(y, Op::Tanh(x), g)
    }

    /// Column-wise `x·scale + shift` with fixed coefficients.
    pub fn col_affine(&mut self, x: Var, scale: &[f64], shift: &[f64]) -> Var {
        let mut y = self.value(x).clone();
        assert_eq!(y.cols(), scale.len());
        for i in 0..y.rows() {
            for (j, v) in y.row_mut(i).iter_mut().enumerate() {
                *v = *v * scale[j] + shift[j];
            }
        }
        let g = self.needs(x);
        self.push(y, Op::ColAffine { x, scale: scale.to_vec() }, g)
    }

    pub fn select_cols(&mut self, x: Var, cols: &[usize]) -> Var {
        let src = self.value(x);
        let mut y = Matrix::zeros(src.rows(), cols.len());
        for i in 0..src.rows() {
            for (k, &c) in cols.iter().enumerate() {
                y[(i, k)] = src[(i, c)];
            }
        }
        let g = self.needs(x);
        self.push(y, Op::Select { x, cols: cols.to_vec() }, g)
    }

    /// `Σ mask·(pred − target)² / Σ mask`; zero when the mask is empty.
    pub fn masked_mse(&mut self, pred: Var, target: &Matrix, mask: &Matrix) -> Var {
        let p = self.value(pred);
        assert_eq!((p.rows(), p.cols()), (target.rows(), target.cols()));
        assert_eq!((p.rows(), p.cols()), (mask.rows(), mask.cols()));
        let count: f64 = mask.as_slice().iter().sum();
        let mut s = 0.0;
        for ((a, b), m) in p.as_slice().iter().zip(target.as_slice()).zip(mask.as_slice()) {
            s += m * (a - b) * (a - b);
        }
        let v = if count > 0.0 { s / count } else { 0.0 };
        let g = self.needs(pred);
        self.push(
            Matrix::from_vec(1, 1, vec![v]),
            Op::MaskedMse { pred, target: target.clone(), mask: mask.clone(), count },
            g,
        )
    }

    pub fn mse(&mut self, pred: Var, target: &Matrix) -> Var {
        let mask = Matrix::from_vec(target.rows(), target.cols(), vec![1.0; target.rows() * target.cols()]);
        self.masked_mse(pred, target, &mask)
    }

    /// `Σ w_i·s_i` over scalar nodes, accumulated left to right starting from
    /// the first term.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let mut acc = 0.0;
        for (k, &(v, w)) in terms.iter().enumerate() {
            let x = w * self.scalar(v);
            acc = if k == 0 { x } else { acc + x };
        }
        let g = terms.iter().any(|(v, _)| self.needs(*v));
        self.push(Matrix::from_vec(1, 1, vec![acc]), Op::Sum(terms.to_vec()), g)
    }

    /// Elementwise `a + b` of equally shaped matrices.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut y = self.value(a).clone();
        for (v, w) in y.as_mut_slice().iter_mut().zip(self.value(b).as_slice()) {
            *v += w;
        }
        let g = self.needs(a) || self.needs(b);
        self.push(y, Op::Add(a, b), g)
    }

    /// Gradient of the scalar `loss` with respect to every parameter leaf,
    /// indexed by parameter id (`None` when a parameter did not reach `loss`).
    pub fn backward(&self, loss: Var) -> Vec<Option<Matrix>> {
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));
        let mut out: Vec<Option<Matrix>> = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    if out.len() <= *id {
                        out.resize(*id + 1, None);
                    }
                    out[*id] = Some(g);
                }
                Op::Linear { x, w, b } => {
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, g.matmul_t(self.value(*w)));
                    }
                    if self.needs(*w) {
                        accumulate(&mut grads, *w, self.value(*x).t_matmul(&g));
                    }
                    if self.needs(*b) {
                        let mut db = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (d, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let mut dx = g;
                    for (d, v) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                        if *v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let mut dx = g;
                    for (d, y) in dx.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                        *d *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ColAffine { x, scale } => {
                    let mut dx = g;
                    for r in 0..dx.rows() {
                        for (d, s) in dx.row_mut(r).iter_mut().zip(scale) {
                            *d *= s;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Select { x, cols } => {
                    let src = self.value(*x);
                    let mut dx = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..g.rows() {
                        for (k, &c) in cols.iter().enumerate() {
                            dx[(r, c)] += g[(r, k)];
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::MaskedMse { pred, target, mask, count } => {
                    let p = self.value(*pred);
                    let scale = if *count > 0.0 { 2.0 * g[(0, 0)] / count } else { 0.0 };
                    let mut dp = Matrix::zeros(p.rows(), p.cols());
                    for (((d, a), b), m) in
                        dp.as_mut_slice().iter_mut().zip(p.as_slice()).zip(target.as_slice()).zip(mask.as_slice())
                    {
                        *d = scale * m * (a - b);
                    }
                    accumulate(&mut grads, *pred, dp);
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sum(terms) => {
                    for &(v, w) in terms {
                        if self.needs(v) {
                            accumulate(&mut grads, v, Matrix::from_vec(1, 1, vec![w * g[(0, 0)]]));
                        }
                    }
                }
            }
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += b;
            }
        }
        slot => *slot = Some(g),
    }
}
