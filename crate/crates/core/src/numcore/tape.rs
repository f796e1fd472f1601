//! Vector-granular reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! output vector. Nodes only reference earlier nodes, so the node order is a
//! topological order and [`Tape::backward`] is a single reverse sweep.
//! Parameters are not copied into the tape unless an op needs a private copy;
//! matrix products read the [`ParamStore`] directly and accumulate their
//! weight gradients back into it.

use super::{ParamId, ParamStore, Scalar};
use crate::error::{bail, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<F> {
    Constant,
    Param(ParamId),
    Row(ParamId, usize),
    /// `W x (+ b)`.
    Affine { w: ParamId, b: Option<ParamId>, x: Var },
    Add(Var, Var),
    Mul(Var, Var),
    /// Vector times a length-1 node.
    Scale(Var, Var),
    ScaleConst(Var, F),
    Neg(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Cosine(Var, Var),
    Dot(Var, Var),
    Softmax(Var),
    /// `Σ_j w_j · items_j`.
    WeightedSum { weights: Var, items: Vec<Var> },
    /// Elementwise sum of equal-length nodes.
    Sum(Vec<Var>),
    /// Fused LSTM activation. Input is the pre-activation gate vector
    /// `[i; f; o; g]` and the previous cell; output is `[h'; c']`.
    LstmAct { gates: Var, cell: Var },
    /// `-ln(max(x[index], floor))`.
    NegLogPick { x: Var, index: usize, floor: F },
}

#[derive(Clone, Debug)]
struct Node<F> {
    value: Vec<F>,
    op: Op<F>,
}

/// Recorded forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    first_non_finite: Option<(usize, &'static str)>,
}

/// Gradients of a scalar root with respect to every tape node.
#[derive(Debug)]
pub struct Grads<F> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Grads<F> {
    /// Gradient for `v`; `None` if `v` does not influence the root.
    pub fn wrt(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

#[inline]
fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

pub(crate) fn softmax_values<F: Scalar>(x: &[F]) -> Vec<F> {
    let max = x.iter().copied().fold(F::neg_infinity(), F::max);
    let mut out: Vec<F> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: F = out.iter().copied().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), first_non_finite: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.nodes[v.0].value
    }

    /// Value of a length-1 node.
    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v.0].value[0]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    /// First node whose output contained NaN or ±Inf, with the op name.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.first_non_finite
    }

    fn push(&mut self, value: Vec<F>, op: Op<F>, name: &'static str) -> Var {
        let idx = self.nodes.len();
        if self.first_non_finite.is_none() && value.iter().any(|x| !x.is_finite()) {
            self.first_non_finite = Some((idx, name));
        }
        self.nodes.push(Node { value, op });
        Var(idx)
    }

    pub fn constant(&mut self, value: Vec<F>) -> Var {
        self.push(value, Op::Constant, "constant")
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(vec![F::zero(); n])
    }

    /// Full copy of a parameter as a tape node.
    pub fn param(&mut self, params: &ParamStore<F>, id: ParamId) -> Var {
        let value = params.value(id).data().to_vec();
        self.push(value, Op::Param(id), "param")
    }

    /// Row `row` of a matrix parameter (embedding lookup).
    pub fn row(&mut self, params: &ParamStore<F>, id: ParamId, row: usize) -> Var {
        let value = params.value(id).row(row).to_vec();
        self.push(value, Op::Row(id, row), "row")
    }

    /// `W x + b` for a `rows × cols` matrix `W` and optional length-`rows` bias.
    pub fn affine(
        &mut self,
        params: &ParamStore<F>,
        w: ParamId,
        b: Option<ParamId>,
        x: Var,
    ) -> Var {
        let wt = params.value(w);
        let (rows, cols) = (wt.rows(), wt.cols());
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), cols, "affine: input length {} vs {} columns", xv.len(), cols);
        let mut out = match b {
            Some(b) => params.value(b).data().to_vec(),
            None => vec![F::zero(); rows],
        };
        assert_eq!(out.len(), rows, "affine: bias length mismatch");
        let wd = wt.data();
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(&wd[r * cols..(r + 1) * cols], xv);
        }
        self.push(out, Op::Affine { w, b, x }, "affine")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "add: length mismatch");
        let out = av.iter().zip(bv).map(|(&x, &y)| x + y).collect();
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "mul: length mismatch");
        let out = av.iter().zip(bv).map(|(&x, &y)| x * y).collect();
        self.push(out, Op::Mul(a, b), "mul")
    }

    /// Multiplies vector `x` by the length-1 node `s`.
    pub fn scale(&mut self, x: Var, s: Var) -> Var {
        assert_eq!(self.nodes[s.0].value.len(), 1, "scale: factor must be length 1");
        let k = self.nodes[s.0].value[0];
        let out = self.nodes[x.0].value.iter().map(|&v| v * k).collect();
        self.push(out, Op::Scale(x, s), "scale")
    }

    pub fn scale_const(&mut self, x: Var, k: F) -> Var {
        let out = self.nodes[x.0].value.iter().map(|&v| v * k).collect();
        self.push(out, Op::ScaleConst(x, k), "scale_const")
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let out = self.nodes[x.0].value.iter().map(|&v| -v).collect();
        self.push(out, Op::Neg(x), "neg")
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.nodes[x.0].value.iter().map(|&v| sigmoid(v)).collect();
        self.push(out, Op::Sigmoid(x), "sigmoid")
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.nodes[x.0].value.iter().map(|&v| v.tanh()).collect();
        self.push(out, Op::Tanh(x), "tanh")
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.nodes[x.0].value.iter().map(|&v| v.exp()).collect();
        self.push(out, Op::Exp(x), "exp")
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let total = parts.iter().map(|p| self.nodes[p.0].value.len()).sum();
        let mut out = Vec::with_capacity(total);
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(out, Op::Concat(parts.to_vec()), "concat")
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.nodes[x.0].value[start..start + len].to_vec();
        self.push(out, Op::Slice { x, start }, "slice")
    }

    /// Cosine similarity as a length-1 node. Zero-norm inputs give 0 with a
    /// zero gradient.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "cosine: length mismatch");
        let (na, nb) = (norm(av), norm(bv));
        let value = if na == F::zero() || nb == F::zero() {
            F::zero()
        } else {
            dot(av, bv) / (na * nb)
        };
        self.push(vec![value], Op::Cosine(a, b), "cosine")
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "dot: length mismatch");
        let value = dot(av, bv);
        self.push(vec![value], Op::Dot(a, b), "dot")
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        assert!(!self.nodes[x.0].value.is_empty(), "softmax: empty input");
        let out = softmax_values(&self.nodes[x.0].value);
        self.push(out, Op::Softmax(x), "softmax")
    }

    /// `Σ_j weights[j] · items[j]`; `weights` must have one entry per item.
    /// With no items the result is a zero vector of length `dim`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var], dim: usize) -> Var {
        let wv = &self.nodes[weights.0].value;
        assert_eq!(wv.len(), items.len(), "weighted_sum: weight count mismatch");
        let mut out = vec![F::zero(); dim];
        for (&w, item) in wv.iter().zip(items) {
            let iv = &self.nodes[item.0].value;
            assert_eq!(iv.len(), dim, "weighted_sum: item length mismatch");
            for (o, &x) in out.iter_mut().zip(iv) {
                *o += w * x;
            }
        }
        self.push(out, Op::WeightedSum { weights, items: items.to_vec() }, "weighted_sum")
    }

    pub fn sum(&mut self, items: &[Var]) -> Var {
        assert!(!items.is_empty(), "sum: no inputs");
        let mut out = self.nodes[items[0].0].value.clone();
        for item in &items[1..] {
            let iv = &self.nodes[item.0].value;
            assert_eq!(iv.len(), out.len(), "sum: length mismatch");
            out.iter_mut().zip(iv).for_each(|(o, &x)| *o += x);
        }
        self.push(out, Op::Sum(items.to_vec()), "sum")
    }

    /// One LSTM cell update from pre-activation gates `[i; f; o; g]` (each of
    /// length `H`) and previous cell state. Returns `(h', c')`.
    pub fn lstm_act(&mut self, gates: Var, cell: Var) -> (Var, Var) {
        let hidden = self.nodes[cell.0].value.len();
        let z = &self.nodes[gates.0].value;
        assert_eq!(z.len(), 4 * hidden, "lstm_act: gate length mismatch");
        let c = &self.nodes[cell.0].value;
        let mut out = vec![F::zero(); 2 * hidden];
        for k in 0..hidden {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[hidden + k]);
            let o = sigmoid(z[2 * hidden + k]);
            let g = z[3 * hidden + k].tanh();
            let c_new = f * c[k] + i * g;
            out[k] = o * c_new.tanh();
            out[hidden + k] = c_new;
        }
        let both = self.push(out, Op::LstmAct { gates, cell }, "lstm_act");
        let h = self.slice(both, 0, hidden);
        let c = self.slice(both, hidden, hidden);
        (h, c)
    }

    /// `-ln(max(x[index], floor))` as a length-1 node.
    pub fn neg_log_pick(&mut self, x: Var, index: usize, floor: F) -> Var {
        let p = self.nodes[x.0].value[index];
        let value = -(p.max(floor)).ln();
        self.push(vec![value], Op::NegLogPick { x, index, floor }, "neg_log_pick")
    }

    /// Reverse sweep from the length-1 node `root`. Parameter gradients are
    /// accumulated (added) into `params`.
    pub fn backward(&self, root: Var, params: &mut ParamStore<F>) -> Result<Grads<F>> {
        if let Some((idx, op)) = self.first_non_finite {
            bail!(Numeric, "non-finite value produced by {op} at tape node {idx}");
        }
        if self.nodes[root.0].value.len() != 1 {
            bail!(Argument, "backward root must be a scalar node");
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![F::one()]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads, params);
            grads[idx] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn propagate(
        &self,
        node: &Node<F>,
        g: &[F],
        grads: &mut [Option<Vec<F>>],
        params: &mut ParamStore<F>,
    ) {
        fn acc<F: Scalar>(grads: &mut [Option<Vec<F>>], v: Var, n: usize) -> &mut [F] {
            grads[v.0].get_or_insert_with(|| vec![F::zero(); n]).as_mut_slice()
        }
        let val = |v: Var| -> &[F] { &self.nodes[v.0].value };

        match &node.op {
            Op::Constant => {}
            Op::Param(id) => {
                let p = params.get_mut(*id);
                p.grad.data_mut().iter_mut().zip(g).for_each(|(d, &x)| *d += x);
            }
            Op::Row(id, row) => {
                let p = params.get_mut(*id);
                p.grad.row_mut(*row).iter_mut().zip(g).for_each(|(d, &x)| *d += x);
            }
            Op::Affine { w, b, x } => {
                let xv = val(*x);
                let cols = xv.len();
                {
                    let p = params.get_mut(*w);
                    let gw = p.grad.data_mut();
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == F::zero() {
                            continue;
                        }
                        let row = &mut gw[r * cols..(r + 1) * cols];
                        row.iter_mut().zip(xv).for_each(|(d, &xi)| *d += gr * xi);
                    }
                }
                if let Some(b) = b {
                    let p = params.get_mut(*b);
                    p.grad.data_mut().iter_mut().zip(g).for_each(|(d, &x)| *d += x);
                }
                let wd = params.value(*w).data();
                let gx = acc(grads, *x, cols);
                for (r, &gr) in g.iter().enumerate() {
                    if gr == F::zero() {
                        continue;
                    }
                    let row = &wd[r * cols..(r + 1) * cols];
                    gx.iter_mut().zip(row).for_each(|(d, &wv)| *d += gr * wv);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    let gv = acc(grads, v, g.len());
                    gv.iter_mut().zip(g).for_each(|(d, &x)| *d += x);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).to_vec(), val(*b).to_vec());
                let ga = acc(grads, *a, g.len());
                ga.iter_mut().zip(g).zip(&bv).for_each(|((d, &x), &y)| *d += x * y);
                let gb = acc(grads, *b, g.len());
                gb.iter_mut().zip(g).zip(&av).for_each(|((d, &x), &y)| *d += x * y);
            }
            Op::Scale(x, s) => {
                let k = val(*s)[0];
                let ds = dot(g, val(*x));
                let gx = acc(grads, *x, g.len());
                gx.iter_mut().zip(g).for_each(|(d, &v)| *d += v * k);
                acc(grads, *s, 1)[0] += ds;
            }
            Op::ScaleConst(x, k) => {
                let gx = acc(grads, *x, g.len());
                gx.iter_mut().zip(g).for_each(|(d, &v)| *d += v * *k);
            }
            Op::Neg(x) => {
                let gx = acc(grads, *x, g.len());
                gx.iter_mut().zip(g).for_each(|(d, &v)| *d -= v);
            }
            Op::Sigmoid(x) => {
                let gx = acc(grads, *x, g.len());
                for ((d, &gv), &y) in gx.iter_mut().zip(g).zip(&node.value) {
                    *d += gv * y * (F::one() - y);
                }
            }
            Op::Tanh(x) => {
                let gx = acc(grads, *x, g.len());
                for ((d, &gv), &y) in gx.iter_mut().zip(g).zip(&node.value) {
                    *d += gv * (F::one() - y * y);
                }
            }
            Op::Exp(x) => {
                let gx = acc(grads, *x, g.len());
                for ((d, &gv), &y) in gx.iter_mut().zip(g).zip(&node.value) {
                    *d += gv * y;
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.len();
                    let gp = acc(grads, *p, n);
                    gp.iter_mut().zip(&g[offset..offset + n]).for_each(|(d, &v)| *d += v);
                    offset += n;
                }
            }
            Op::Slice { x, start } => {
                let n = self.nodes[x.0].value.len();
                let gx = acc(grads, *x, n);
                gx[*start..*start + g.len()].iter_mut().zip(g).for_each(|(d, &v)| *d += v);
            }
            Op::Cosine(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (na, nb) = (norm(av), norm(bv));
                if na == F::zero() || nb == F::zero() {
                    return;
                }
                let cos = node.value[0];
                let gs = g[0];
                // d cos / d a = b / (|a||b|) - cos · a / |a|²
                let ga: Vec<F> = av
                    .iter()
                    .zip(bv)
                    .map(|(&x, &y)| gs * (y / (na * nb) - cos * x / (na * na)))
                    .collect();
                let gb: Vec<F> = av
                    .iter()
                    .zip(bv)
                    .map(|(&x, &y)| gs * (x / (na * nb) - cos * y / (nb * nb)))
                    .collect();
                let n = av.len();
                acc(grads, *a, n).iter_mut().zip(&ga).for_each(|(d, &v)| *d += v);
                acc(grads, *b, n).iter_mut().zip(&gb).for_each(|(d, &v)| *d += v);
            }
            Op::Dot(a, b) => {
                let (av, bv) = (val(*a).to_vec(), val(*b).to_vec());
                let gs = g[0];
                let n = av.len();
                acc(grads, *a, n).iter_mut().zip(&bv).for_each(|(d, &y)| *d += gs * y);
                acc(grads, *b, n).iter_mut().zip(&av).for_each(|(d, &x)| *d += gs * x);
            }
            Op::Softmax(x) => {
                let p = &node.value;
                let gp = dot(g, p);
                let gx = acc(grads, *x, p.len());
                for ((d, &gv), &pv) in gx.iter_mut().zip(g).zip(p) {
                    *d += pv * (gv - gp);
                }
            }
            Op::WeightedSum { weights, items } => {
                let wv = val(*weights).to_vec();
                let dw: Vec<F> = items.iter().map(|it| dot(g, val(*it))).collect();
                let gw = acc(grads, *weights, wv.len());
                gw.iter_mut().zip(&dw).for_each(|(d, &v)| *d += v);
                for (it, &w) in items.iter().zip(&wv) {
                    let gi = acc(grads, *it, g.len());
                    gi.iter_mut().zip(g).for_each(|(d, &v)| *d += w * v);
                }
            }
            Op::Sum(items) => {
                for it in items {
                    let gi = acc(grads, *it, g.len());
                    gi.iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
            }
            Op::LstmAct { gates, cell } => {
                let hidden = g.len() / 2;
                let z = val(*gates);
                let c = val(*cell);
                let mut gz = vec![F::zero(); 4 * hidden];
                let mut gc = vec![F::zero(); hidden];
                for k in 0..hidden {
                    let i = sigmoid(z[k]);
                    let f = sigmoid(z[hidden + k]);
                    let o = sigmoid(z[2 * hidden + k]);
                    let gg = z[3 * hidden + k].tanh();
                    let tc = node.value[hidden + k].tanh();
                    let (gh, gcn) = (g[k], g[hidden + k]);
                    let dc = gcn + gh * o * (F::one() - tc * tc);
                    let d_o = gh * tc;
                    let d_i = dc * gg;
                    let d_f = dc * c[k];
                    let d_g = dc * i;
                    gz[k] = d_i * i * (F::one() - i);
                    gz[hidden + k] = d_f * f * (F::one() - f);
                    gz[2 * hidden + k] = d_o * o * (F::one() - o);
                    gz[3 * hidden + k] = d_g * (F::one() - gg * gg);
                    gc[k] = dc * f;
                }
                acc(grads, *gates, 4 * hidden).iter_mut().zip(&gz).for_each(|(d, &v)| *d += v);
                acc(grads, *cell, hidden).iter_mut().zip(&gc).for_each(|(d, &v)| *d += v);
            }
            Op::NegLogPick { x, index, floor } => {
                let xv = val(*x);
                let p = xv[*index];
                let n = xv.len();
                if p > *floor {
                    acc(grads, *x, n)[*index] -= g[0] / p;
                }
            }
        }
    }
}
