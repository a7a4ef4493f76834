//! Matrix-valued reverse-mode gradient tape.

use nalgebra::DMatrix;

use crate::scalar::{lit, Scalar};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Adds a `1×n` row to every row.
    AddRow(Var, Var),
    /// Multiplies every row elementwise by a `1×n` row.
    MulRow(Var, Var),
    Relu(Var),
    Scale(Var, T),
    AddScalar(Var),
    Hadamard(Var, Var),
    Exp(Var),
    ClampMin(Var, T),
    Sum(Var),
    Transpose(Var),
    SliceRows(Var, usize),
    LogSoftmaxRows(Var),
    WeightedSum(Var, DMatrix<T>),
    SumSquares(Var),
    /// Scalar with a precomputed gradient with respect to its input.
    Custom(Var, DMatrix<T>),
}

#[derive(Debug, Clone)]
struct Node<T: Scalar> {
    value: DMatrix<T>,
    op: Op<T>,
}

/// Records operations on dense matrices and replays them backwards.
#[derive(Debug, Clone, Default)]
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: DMatrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: DMatrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &DMatrix<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row).clone();
        let mut v = self.value(a).clone();
        for mut x in v.row_iter_mut() {
            x += &r;
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row).clone();
        let mut v = self.value(a).clone();
        for mut x in v.row_iter_mut() {
            x.component_mul_assign(&r);
        }
        self.push(v, Op::MulRow(a, row))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(T::zero()));
        self.push(v, Op::Relu(a))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).component_mul(self.value(b));
        self.push(v, Op::Hadamard(a, b))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.exp());
        self.push(v, Op::Exp(a))
    }

    /// `max(a, floor)` elementwise; no gradient where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: T) -> Var {
        let v = self.value(a).map(|x| x.max(floor));
        self.push(v, Op::ClampMin(a, floor))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = DMatrix::from_element(1, 1, self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).rows(start, len).into_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.row_iter_mut() {
            let m = row.max();
            let lse = m + row.iter().fold(T::zero(), |acc, &x| acc + (x - m).exp()).ln();
            row.apply(|x| *x -= lse);
        }
        self.push(v, Op::LogSoftmaxRows(a))
    }

    /// `Σ a ∘ w` for a constant weight matrix `w`.
    pub fn weighted_sum(&mut self, a: Var, w: DMatrix<T>) -> Var {
        let v = DMatrix::from_element(1, 1, self.value(a).component_mul(&w).sum());
        self.push(v, Op::WeightedSum(a, w))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let v = DMatrix::from_element(1, 1, self.value(a).norm_squared());
        self.push(v, Op::SumSquares(a))
    }

    /// Scalar `value` whose gradient with respect to `a` is `grad`.
    pub fn custom(&mut self, a: Var, value: T, grad: DMatrix<T>) -> Var {
        self.push(DMatrix::from_element(1, 1, value), Op::Custom(a, grad))
    }

    /// Gradients of the scalar `out` with respect to every node; nodes
    /// that do not influence `out` get `None`.
    pub fn backward(&self, out: Var) -> Vec<Option<DMatrix<T>>> {
        let mut grads: Vec<Option<DMatrix<T>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(DMatrix::from_element(1, 1, T::one()));
        fn acc<T: Scalar>(grads: &mut [Option<DMatrix<T>>], v: Var, g: DMatrix<T>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += g,
                slot => *slot = Some(g),
            }
        }
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, &g * self.value(*b).transpose());
                    acc(&mut grads, *b, self.value(*a).transpose() * &g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, -g.clone());
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *row, row_sums(&g));
                    acc(&mut grads, *a, g.clone());
                }
                Op::MulRow(a, row) => {
                    let r = self.value(*row);
                    let mut ga = g.clone();
                    for mut x in ga.row_iter_mut() {
                        x.component_mul_assign(r);
                    }
                    acc(&mut grads, *row, row_sums(&g.component_mul(self.value(*a))));
                    acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let mask = self.value(*a).map(|x| if x > T::zero() { T::one() } else { T::zero() });
                    acc(&mut grads, *a, g.component_mul(&mask));
                }
                Op::Scale(a, c) => acc(&mut grads, *a, &g * *c),
                Op::AddScalar(a) => acc(&mut grads, *a, g.clone()),
                Op::Hadamard(a, b) => {
                    acc(&mut grads, *a, g.component_mul(self.value(*b)));
                    acc(&mut grads, *b, g.component_mul(self.value(*a)));
                }
                Op::Exp(a) => acc(&mut grads, *a, g.component_mul(&node.value)),
                Op::ClampMin(a, floor) => {
                    let mask = self.value(*a).map(|x| if x > *floor { T::one() } else { T::zero() });
                    acc(&mut grads, *a, g.component_mul(&mask));
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, DMatrix::from_element(r, c, g[(0, 0)]));
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::SliceRows(a, start) => {
                    let (r, c) = self.value(*a).shape();
                    let mut full = DMatrix::zeros(r, c);
                    full.rows_mut(*start, g.nrows()).copy_from(&g);
                    acc(&mut grads, *a, full);
                }
                Op::LogSoftmaxRows(a) => {
                    let soft = node.value.map(|x| x.exp());
                    let mut ga = g.clone();
                    for (r, mut row) in ga.row_iter_mut().enumerate() {
                        let s = g.row(r).sum();
                        for c in 0..row.len() {
                            row[c] -= soft[(r, c)] * s;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::WeightedSum(a, w) => acc(&mut grads, *a, w * g[(0, 0)]),
                Op::SumSquares(a) => acc(&mut grads, *a, self.value(*a) * (lit::<T>(2.0) * g[(0, 0)])),
                Op::Custom(a, grad) => acc(&mut grads, *a, grad * g[(0, 0)]),
            }
            grads[i] = Some(g);
        }
        grads
    }
}

fn row_sums<T: Scalar>(g: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(1, g.ncols());
    for row in g.row_iter() {
        out += row;
    }
    out
}
