//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! A `Tape` records eagerly-evaluated matrix ops; `backward` walks the record
//! in reverse accumulating adjoints. Only what the training objectives need is
//! implemented: affine maps, pointwise nonlinearities, row gathers, reductions,
//! column concatenation, and products with constant sparse matrices.
//!
//! Clamp-style kinks (rectifier, `clamp_min`) propagate subgradient zero at
//! the boundary so finite-difference checks away from kinks match exactly.

use std::rc::Rc;

use ndarray::{Array2, Axis};

use crate::sparse::CsrMatrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Abs(usize),
    ClampMin(usize, f64),
    GatherRows(usize, Rc<Vec<usize>>),
    RowSum(usize),
    Sum(usize),
    ConcatCols(usize, usize),
    Spmm(Rc<CsrMatrix>, usize),
    SpmmT(Rc<CsrMatrix>, usize),
}

/// Growing record of one forward computation.
#[derive(Default)]
pub struct Tape {
    values: Vec<Array2<f64>>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    /// Register a leaf (parameter or constant input).
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.values[v.0]
    }

    /// `a · b`
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.values[a.0].dot(&self.values[b.0]);
        self.push(out, Op::MatMul(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = &self.values[a.0] + &self.values[b.0];
        self.push(out, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = &self.values[a.0] - &self.values[b.0];
        self.push(out, Op::Sub(a.0, b.0))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = &self.values[a.0] * &self.values[b.0];
        self.push(out, Op::Mul(a.0, b.0))
    }

    /// Broadcast-add a 1×d row (bias) to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = &self.values[a.0] + &self.values[row.0];
        self.push(out, Op::AddRow(a.0, row.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = &self.values[a.0] * c;
        self.push(out, Op::Scale(a.0, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = &self.values[a.0] + c;
        self.push(out, Op::AddScalar(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(out, Op::Sigmoid(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(f64::exp);
        self.push(out, Op::Exp(a.0))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(f64::ln);
        self.push(out, Op::Ln(a.0))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(f64::abs);
        self.push(out, Op::Abs(a.0))
    }

    /// Elementwise `max(x, c)`.
    pub fn clamp_min(&mut self, a: Var, c: f64) -> Var {
        let out = self.values[a.0].mapv(|x| x.max(c));
        self.push(out, Op::ClampMin(a.0, c))
    }

    /// Positive part `max(x, 0)` shifted by a margin: `[x − m]₊`.
    pub fn hinge(&mut self, a: Var, margin: f64) -> Var {
        let shifted = self.add_scalar(a, -margin);
        self.relu(shifted)
    }

    /// Select rows by index (repeats allowed); backward scatter-adds.
    pub fn gather_rows(&mut self, a: Var, indices: Rc<Vec<usize>>) -> Var {
        let src = &self.values[a.0];
        let mut out = Array2::zeros((indices.len(), src.ncols()));
        for (i, &r) in indices.iter().enumerate() {
            out.row_mut(i).assign(&src.row(r));
        }
        self.push(out, Op::GatherRows(a.0, indices))
    }

    /// Sum each row into a column vector (n×1).
    pub fn row_sum(&mut self, a: Var) -> Var {
        let sums = self.values[a.0].sum_axis(Axis(1));
        let out = sums.insert_axis(Axis(1));
        self.push(out, Op::RowSum(a.0))
    }

    /// Sum all entries into a 1×1 scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.values[a.0].sum());
        self.push(out, Op::Sum(a.0))
    }

    /// Concatenate columns: `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(va.nrows(), vb.nrows(), "concat_cols row mismatch");
        let mut out = Array2::zeros((va.nrows(), va.ncols() + vb.ncols()));
        out.slice_mut(ndarray::s![.., ..va.ncols()]).assign(va);
        out.slice_mut(ndarray::s![.., va.ncols()..]).assign(vb);
        self.push(out, Op::ConcatCols(a.0, b.0))
    }

    /// Constant sparse times variable: `S · a`.
    pub fn spmm(&mut self, s: Rc<CsrMatrix>, a: Var) -> Var {
        let out = s.dot_dense(&self.values[a.0]);
        self.push(out, Op::Spmm(s, a.0))
    }

    /// Transposed constant sparse times variable: `Sᵀ · a`.
    pub fn spmm_t(&mut self, s: Rc<CsrMatrix>, a: Var) -> Var {
        let out = s.transpose_dot_dense(&self.values[a.0]);
        self.push(out, Op::SpmmT(s, a.0))
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = &self.values[v.0];
        assert_eq!(val.dim(), (1, 1), "scalar() needs a 1x1 node");
        val[[0, 0]]
    }

    /// Reverse sweep from a 1×1 `loss` node; returns one adjoint per node.
    pub fn backward(&mut self, loss: Var) -> Gradients {
        let mut grads: Vec<Array2<f64>> = self
            .values
            .iter()
            .map(|v| Array2::zeros(v.dim()))
            .collect();
        grads[loss.0][[0, 0]] = 1.0;

        for i in (0..=loss.0).rev() {
            let g = grads[i].clone();
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            match &self.ops[i] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.values[*b].t());
                    let gb = self.values[*a].t().dot(&g);
                    grads[*a] += &ga;
                    grads[*b] += &gb;
                }
                Op::Add(a, b) => {
                    grads[*a] += &g;
                    grads[*b] += &g;
                }
                Op::Sub(a, b) => {
                    grads[*a] += &g;
                    grads[*b] -= &g;
                }
                Op::Mul(a, b) => {
                    let ga = &g * &self.values[*b];
                    let gb = &g * &self.values[*a];
                    grads[*a] += &ga;
                    grads[*b] += &gb;
                }
                Op::AddRow(a, r) => {
                    grads[*a] += &g;
                    let col_sums = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    grads[*r] += &col_sums;
                }
                Op::Scale(a, c) => {
                    grads[*a].scaled_add(*c, &g);
                }
                Op::AddScalar(a) => {
                    grads[*a] += &g;
                }
                Op::Relu(a) => {
                    let mask = self.values[*a].mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    grads[*a] += &(&g * &mask);
                }
                Op::Sigmoid(a) => {
                    let s = &self.values[i];
                    let ds = s * &s.mapv(|x| 1.0 - x);
                    grads[*a] += &(&g * &ds);
                }
                Op::Exp(a) => {
                    let ga = &g * &self.values[i];
                    grads[*a] += &ga;
                }
                Op::Ln(a) => {
                    let ga = &g / &self.values[*a];
                    grads[*a] += &ga;
                }
                Op::Abs(a) => {
                    let sign = self.values[*a].mapv(|x| {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    grads[*a] += &(&g * &sign);
                }
                Op::ClampMin(a, c) => {
                    let mask = self.values[*a].mapv(|x| if x > *c { 1.0 } else { 0.0 });
                    grads[*a] += &(&g * &mask);
                }
                Op::GatherRows(a, indices) => {
                    for (row, &r) in indices.iter().enumerate() {
                        let addend = g.row(row).to_owned();
                        let mut target = grads[*a].row_mut(r);
                        target += &addend;
                    }
                }
                Op::RowSum(a) => {
                    let cols = self.values[*a].ncols();
                    for r in 0..g.nrows() {
                        let gr = g[[r, 0]];
                        for c in 0..cols {
                            grads[*a][[r, c]] += gr;
                        }
                    }
                }
                Op::Sum(a) => {
                    grads[*a] += g[[0, 0]];
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.values[*a].ncols();
                    let ga = g.slice(ndarray::s![.., ..ca]).to_owned();
                    let gb = g.slice(ndarray::s![.., ca..]).to_owned();
                    grads[*a] += &ga;
                    grads[*b] += &gb;
                }
                Op::Spmm(s, a) => {
                    let ga = s.transpose_dot_dense(&g);
                    grads[*a] += &ga;
                }
                Op::SpmmT(s, a) => {
                    let ga = s.dot_dense(&g);
                    grads[*a] += &ga;
                }
            }
        }
        Gradients { grads }
    }
}

/// Adjoints from one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Array2<f64>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &Array2<f64> {
        &self.grads[v.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Wires a loss through `wire`, then checks every analytic leaf gradient
    /// against central finite differences.
    fn check_grad(wire: impl Fn(&mut Tape, &[Var]) -> Var, leaves: &[Array2<f64>]) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = leaves.iter().map(|l| tape.leaf(l.clone())).collect();
        let loss = wire(&mut tape, &vars);
        let grads = tape.backward(loss);

        let eps = 1e-6;
        for (li, leaf) in leaves.iter().enumerate() {
            for r in 0..leaf.nrows() {
                for c in 0..leaf.ncols() {
                    let eval = |delta: f64| {
                        let mut tape = Tape::new();
                        let vars: Vec<Var> = leaves
                            .iter()
                            .enumerate()
                            .map(|(i, l)| {
                                let mut v = l.clone();
                                if i == li {
                                    v[[r, c]] += delta;
                                }
                                tape.leaf(v)
                            })
                            .collect();
                        let loss = wire(&mut tape, &vars);
                        tape.scalar(loss)
                    };
                    let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
                    let an = grads.get(vars[li])[[r, c]];
                    let denom = an.abs().max(fd.abs()).max(1e-8);
                    assert!(
                        (an - fd).abs() / denom < 1e-5,
                        "leaf {li} entry ({r},{c}): analytic {an} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn matmul_chain_matches_fd() {
        let a = array![[0.3, -0.5], [0.8, 0.1], [-0.2, 0.4]];
        let b = array![[0.7, 0.2, -0.3], [0.5, -0.6, 0.9]];
        check_grad(
            |t, v| {
                let y = t.matmul(v[0], v[1]);
                let y = t.sigmoid(y);
                t.sum(y)
            },
            &[a, b],
        );
    }

    #[test]
    fn pointwise_ops_match_fd() {
        let x = array![[0.4, -0.7], [1.2, 0.3]];
        check_grad(
            |t, v| {
                let e = t.exp(v[0]);
                let l = t.clamp_min(e, 0.9);
                let l = t.ln(l);
                let a = t.abs(l);
                let s = t.scale(a, 0.5);
                let s = t.add_scalar(s, 0.1);
                t.sum(s)
            },
            &[x],
        );
    }

    #[test]
    fn gather_concat_rowsum_match_fd() {
        let x = array![[0.2, 0.5], [-0.4, 0.9], [0.7, -0.1]];
        let y = array![[0.3], [-0.2], [0.6]];
        check_grad(
            |t, v| {
                let g = t.gather_rows(v[0], Rc::new(vec![2, 0, 2]));
                let h = t.gather_rows(v[1], Rc::new(vec![1, 1, 0]));
                let cat = t.concat_cols(g, h);
                let r = t.row_sum(cat);
                let r = t.relu(r);
                t.sum(r)
            },
            &[x, y],
        );
    }

    #[test]
    fn hinge_and_bias_match_fd() {
        let x = array![[0.9, 0.1], [0.4, 0.8]];
        let b = array![[0.05, -0.3]];
        check_grad(
            |t, v| {
                let y = t.add_row(v[0], v[1]);
                let d = t.mul(y, y);
                let d = t.row_sum(d);
                let h = t.hinge(d, 0.5);
                t.sum(h)
            },
            &[x, b],
        );
    }

    #[test]
    fn sparse_products_match_fd() {
        let s = Rc::new(CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 1, 2.0), (1, 0, 0.5), (2, 2, -1.0), (0, 2, 0.7)],
        ));
        let x = array![[0.3, -0.2], [0.8, 0.5], [-0.6, 0.1]];
        let s2 = Rc::clone(&s);
        check_grad(
            move |t, v| {
                let a = t.spmm(Rc::clone(&s), v[0]);
                let b = t.spmm_t(Rc::clone(&s2), v[0]);
                let y = t.add(a, b);
                let y = t.mul(y, y);
                t.sum(y)
            },
            &[x],
        );
    }

    #[test]
    fn sub_backward_negates() {
        let a = array![[1.0, 2.0]];
        let b = array![[0.5, 0.25]];
        let mut tape = Tape::new();
        let va = tape.leaf(a);
        let vb = tape.leaf(b);
        let d = tape.sub(va, vb);
        let s = tape.sum(d);
        let g = tape.backward(s);
        assert_eq!(g.get(va), &array![[1.0, 1.0]]);
        assert_eq!(g.get(vb), &array![[-1.0, -1.0]]);
    }

    #[test]
    fn clamp_kink_uses_zero_subgradient() {
        let mut tape = Tape::new();
        let v = tape.leaf(array![[0.0]]);
        let r = tape.relu(v);
        let s = tape.sum(r);
        let g = tape.backward(s);
        assert_eq!(g.get(v)[[0, 0]], 0.0);
    }
}
