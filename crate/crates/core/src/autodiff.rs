//! Minimal reverse-mode automatic differentiation over dense arrays.
//!
//! Operations are recorded on a [`Tape`] in creation order; [`Tape::backward`]
//! replays them in reverse, accumulating adjoints. Each tape is single-threaded;
//! independent tapes can live on independent threads.

use crate::array::Array;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    /// Input, parameter or constant. No parents.
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Ln(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    /// Multiply every entry by a plain constant (scalar broadcast).
    Scale(NodeId, f64),
    /// Add a plain constant to every entry (scalar broadcast).
    Offset(NodeId),
    /// Hard clamp to `[lo, hi]`; gradient passes through strictly inside the
    /// interval and is zero where the clamp is active.
    Clamp(NodeId, f64, f64),
}

struct Node {
    value: Array,
    op: Op,
}

/// Gradients of one backward pass, indexed by node id. Nodes not reachable
/// from the root hold all-zero gradients.
pub struct GradTable {
    grads: Vec<Array>,
}

impl GradTable {
    pub fn get(&self, id: NodeId) -> &Array {
        &self.grads[id.0]
    }
}

/// Append-only record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Array, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    /// Record an input, parameter or constant.
    pub fn leaf(&mut self, value: Array) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(Array::scalar(v))
    }

    /// Elementwise shapes must match, or one side must be a 1x1 scalar.
    fn broadcast_check(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if (ar, ac) == (br, bc) || (ar == 1 && ac == 1) || (br == 1 && bc == 1) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                op,
                left_rows: ar,
                left_cols: ac,
                right_rows: br,
                right_cols: bc,
            })
        }
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Array {
        let va = self.value(a);
        let vb = self.value(b);
        if va.shape() == vb.shape() {
            let data = va
                .as_slice()
                .iter()
                .zip(vb.as_slice())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Array::from_vec(va.rows(), va.cols(), data)
        } else if va.is_scalar() {
            let s = va.scalar_value();
            vb.map(|y| f(s, y))
        } else {
            let s = vb.scalar_value();
            va.map(|x| f(x, s))
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast_check("add", a, b)?;
        let value = self.zip(a, b, |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast_check("subtract", a, b)?;
        let value = self.zip(a, b, |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast_check("multiply", a, b)?;
        let value = self.zip(a, b, |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left_rows: ar,
                left_cols: ac,
                right_rows: br,
                right_cols: bc,
            });
        }
        let value = self.value(a).matmul(self.value(b));
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(value, Op::Sigmoid(a))
    }

    /// Natural log. Non-positive entries are an error; callers clamp first.
    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        if let Some((index, &value)) = self
            .value(a)
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, &x)| x <= 0.0)
        {
            return Err(Error::LogDomain { value, index });
        }
        let value = self.value(a).map(f64::ln);
        Ok(self.push(value, Op::Ln(a)))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| x * x);
        self.push(value, Op::Square(a))
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).as_slice().iter().sum();
        self.push(Array::scalar(s), Op::Sum(a))
    }

    /// Mean of all entries, as a 1x1 node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let s: f64 = v.as_slice().iter().sum();
        let n = v.len() as f64;
        self.push(Array::scalar(s / n), Op::Mean(a))
    }

    /// `c * a` for a plain constant `c`.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).map(|x| c * x);
        self.push(value, Op::Scale(a, c))
    }

    /// `a + c` for a plain constant `c`.
    pub fn offset(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::Offset(a))
    }

    /// Hard clamp to `[lo, hi]`. Subgradient: identity inside, zero outside.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    /// Reverse pass from a scalar root. Gradients accumulate additively on
    /// fan-out and start from zero, so the result depends only on tape
    /// contents (bit-for-bit deterministic).
    pub fn backward(&self, root: NodeId) -> Result<GradTable> {
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(Error::NotScalar {
                op: "backward",
                rows: rv.rows(),
                cols: rv.cols(),
            });
        }
        let mut grads: Vec<Array> = self
            .nodes
            .iter()
            .map(|n| Array::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[root.0] = Array::scalar(1.0);

        for idx in (0..=root.0).rev() {
            let g = std::mem::replace(&mut grads[idx], Array::zeros(0, 0));
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = g;
        }
        Ok(GradTable { grads })
    }

    /// Add `g`'s contribution to the parents of node `idx`.
    fn accumulate(&self, idx: usize, g: &Array, grads: &mut [Array]) {
        // Accumulate into a parent, summing over broadcast when the parent is
        // a scalar but the contribution is not.
        fn acc(grads: &mut [Array], id: NodeId, contrib: &Array) {
            let dst = &mut grads[id.0];
            if dst.shape() == contrib.shape() {
                for (d, c) in dst.as_mut_slice().iter_mut().zip(contrib.as_slice()) {
                    *d += c;
                }
            } else {
                debug_assert!(dst.is_scalar());
                let s: f64 = contrib.as_slice().iter().sum();
                dst.as_mut_slice()[0] += s;
            }
        }

        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(grads, *a, g);
                acc(grads, *b, g);
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g);
                acc(grads, *b, &g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let da = if vb.is_scalar() && !va.is_scalar() {
                    g.map(|x| x * vb.scalar_value())
                } else if va.is_scalar() && !vb.is_scalar() {
                    // contribution to scalar a is sum(g .* b); acc reduces
                    let mut c = g.clone();
                    for (x, y) in c.as_mut_slice().iter_mut().zip(vb.as_slice()) {
                        *x *= y;
                    }
                    c
                } else {
                    let mut c = g.clone();
                    for (x, y) in c.as_mut_slice().iter_mut().zip(vb.as_slice()) {
                        *x *= y;
                    }
                    c
                };
                acc(grads, *a, &da);
                let db = if va.is_scalar() && !vb.is_scalar() {
                    g.map(|x| x * va.scalar_value())
                } else {
                    let mut c = g.clone();
                    for (x, y) in c.as_mut_slice().iter_mut().zip(va.as_slice()) {
                        *x *= y;
                    }
                    c
                };
                acc(grads, *b, &db);
            }
            Op::MatMul(a, b) => {
                let da = g.matmul(&self.value(*b).transpose());
                let db = self.value(*a).transpose().matmul(g);
                acc(grads, *a, &da);
                acc(grads, *b, &db);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[idx].value;
                let mut c = g.clone();
                for (x, t) in c.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *x *= 1.0 - t * t;
                }
                acc(grads, *a, &c);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value;
                let mut c = g.clone();
                for (x, s) in c.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *x *= s * (1.0 - s);
                }
                acc(grads, *a, &c);
            }
            Op::Ln(a) => {
                let va = self.value(*a);
                let mut c = g.clone();
                for (x, v) in c.as_mut_slice().iter_mut().zip(va.as_slice()) {
                    *x /= v;
                }
                acc(grads, *a, &c);
            }
            Op::Exp(a) => {
                let y = &self.nodes[idx].value;
                let mut c = g.clone();
                for (x, e) in c.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *x *= e;
                }
                acc(grads, *a, &c);
            }
            Op::Square(a) => {
                let va = self.value(*a);
                let mut c = g.clone();
                for (x, v) in c.as_mut_slice().iter_mut().zip(va.as_slice()) {
                    *x *= 2.0 * v;
                }
                acc(grads, *a, &c);
            }
            Op::Sum(a) => {
                let gv = g.scalar_value();
                let va = self.value(*a);
                acc(grads, *a, &Array::filled(va.rows(), va.cols(), gv));
            }
            Op::Mean(a) => {
                let va = self.value(*a);
                let gv = g.scalar_value() / va.len() as f64;
                acc(grads, *a, &Array::filled(va.rows(), va.cols(), gv));
            }
            Op::Scale(a, c0) => {
                acc(grads, *a, &g.map(|x| x * c0));
            }
            Op::Offset(a) => {
                acc(grads, *a, g);
            }
            Op::Clamp(a, lo, hi) => {
                let va = self.value(*a);
                let mut c = g.clone();
                for (x, v) in c.as_mut_slice().iter_mut().zip(va.as_slice()) {
                    if *v < *lo || *v > *hi {
                        *x = 0.0;
                    }
                }
                acc(grads, *a, &c);
            }
        }
    }
}

/// Max relative error between an analytic gradient and central finite
/// differences: `max_i |analytic_i - fd_i| / (|analytic_i| + 1e-12)`.
///
/// `f` maps a parameter vector to `(value, analytic gradient)` and must be
/// deterministic (reseed any internal randomness per call).
pub fn finite_diff_check<F>(f: F, theta: &[f64], step: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(theta);
    assert_eq!(analytic.len(), theta.len());
    let mut worst = 0.0f64;
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let hi = f(&probe).0;
        probe[i] = theta[i] - step;
        let lo = f(&probe).0;
        probe[i] = theta[i];
        let fd = (hi - lo) / (2.0 * step);
        let rel = (analytic[i] - fd).abs() / (analytic[i].abs() + 1e-12);
        if rel > worst {
            worst = rel;
        }
    }
    worst
}
