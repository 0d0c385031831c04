//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its variables. Calling
//! [`Graph::backward`] walks the records in reverse insertion order, which is
//! a valid reverse topological order because an operation can only consume
//! variables that already exist.

use std::collections::BTreeSet;

use crate::error::TensorError;
use crate::tensor::{strides, Scalar, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Inputs visible to a backward rule.
pub struct BackwardCtx<'a, T> {
    pub inputs: Vec<&'a Tensor<T>>,
    pub output: &'a Tensor<T>,
    pub grad: &'a Tensor<T>,
    /// `needs[i]` is false when input `i` does not participate in differentiation.
    pub needs: Vec<bool>,
}

/// Vector-Jacobian product of one recorded operation.
pub trait Backward<T: Scalar> {
    /// Returns one gradient per input, `None` where `needs` is false.
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>>;
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    inputs: Vec<Var>,
    rule: Option<Box<dyn Backward<T>>>,
    requires_grad: bool,
}

/// The tape. One graph belongs to one forward/backward pass.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    div_guard: f64,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), div_guard: 1e-30 }
    }

    /// Divisors with magnitude below `guard` are rejected by [`Graph::div`].
    pub fn with_div_guard(mut self, guard: f64) -> Self {
        self.div_guard = guard;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. It participates in differentiation when
    /// `tensor.requires_grad()` is set.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let requires_grad = tensor.requires_grad();
        self.push_node(Node { value: tensor, inputs: Vec::new(), rule: None, requires_grad })
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_grad())
    }

    pub fn constant(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.set_requires_grad(false);
        self.leaf(tensor)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_node(&mut self, node: Node<T>) -> Var {
        debug_assert!(node.inputs.iter().all(|i| i.0 < self.nodes.len()));
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Records the result of an operation. The backward rule is dropped when
    /// no input requires a gradient.
    pub fn record(&mut self, value: Tensor<T>, inputs: Vec<Var>, rule: Box<dyn Backward<T>>) -> Var {
        debug_assert!(
            !inputs.iter().all(|&i| self.value(i).is_finite()) || value.is_finite(),
            "non-finite output from finite inputs"
        );
        let requires_grad = inputs.iter().any(|&i| self.nodes[i.0].requires_grad);
        let rule = requires_grad.then_some(rule);
        self.push_node(Node { value, inputs, rule, requires_grad })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, BinaryKind::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, BinaryKind::Div)
    }

    /// `a ∘ b` where `b` broadcasts to `a` along trailing dimensions.
    pub fn elementwise(&mut self, a: Var, b: Var, kind: BinaryKind) -> Result<Var, TensorError> {
        let av = self.value(a);
        let bv = self.value(b);
        let map = BroadcastMap::new(av.shape(), bv.shape(), kind.name())?;
        if kind == BinaryKind::Div {
            let guard = self.div_guard;
            if bv.data().iter().any(|x| x.abs().as_f64() < guard) {
                return Err(TensorError::DivisionDomain { guard });
            }
        }
        let (ad, bd) = (av.data(), bv.data());
        let mut out = Vec::with_capacity(ad.len());
        for (i, &x) in ad.iter().enumerate() {
            let y = bd[map.index(i)];
            out.push(kind.apply(x, y));
        }
        let value = Tensor::from_vec(av.shape(), out);
        Ok(self.record(value, vec![a, b], Box::new(BinaryRule { kind, map })))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, c: T) -> Result<Var, TensorError> {
        let k = self.constant(Tensor::scalar(c));
        self.mul(x, k)
    }

    /// Sums over `axes`; an empty axis set is the identity.
    pub fn reduce_sum(&mut self, x: Var, axes: &[usize], keep_dims: bool) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let rank = xv.ndim();
        let axes: BTreeSet<usize> = axes.iter().copied().collect();
        if let Some(&axis) = axes.iter().find(|&&a| a >= rank) {
            return Err(TensorError::AxisOutOfRange { axis, rank });
        }
        let in_shape = xv.shape().to_vec();
        let kept: Vec<usize> =
            in_shape.iter().enumerate().map(|(i, &d)| if axes.contains(&i) { 1 } else { d }).collect();
        let map = BroadcastMap::new(&in_shape, &kept, "reduce_sum")?;
        let mut out = vec![T::zero(); kept.iter().product()];
        for (i, &v) in xv.data().iter().enumerate() {
            out[map.index(i)] += v;
        }
        let mut out_shape: Vec<usize> = if keep_dims {
            kept.clone()
        } else {
            in_shape.iter().enumerate().filter(|(i, _)| !axes.contains(i)).map(|(_, &d)| d).collect()
        };
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let value = Tensor::from_vec(&out_shape, out);
        Ok(self.record(value, vec![x], Box::new(SumRule { map })))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var, TensorError> {
        let axes: Vec<usize> = (0..self.value(x).ndim()).collect();
        self.reduce_sum(x, &axes, false)
    }

    /// Reverse pass from a single-element root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>, TensorError> {
        let root_value = self.value(root);
        if root_value.numel() != 1 {
            return Err(TensorError::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::ones(root_value.shape()));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(rule) = node.rule.as_ref() else {
                continue; // leaf: keep its gradient
            };
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let ctx = BackwardCtx {
                inputs: node.inputs.iter().map(|&i| &self.nodes[i.0].value).collect(),
                output: &node.value,
                grad: &grad,
                needs: node.inputs.iter().map(|&i| self.nodes[i.0].requires_grad).collect(),
            };
            let input_grads = rule.backward(&ctx);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (&input, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), self.nodes[input.0].value.shape());
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign_tensor(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the root with respect to `v`; `None` when `v` does not
    /// influence the root or does not require gradients.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryKind {
    fn name(self) -> &'static str {
        match self {
            Self::Add => "add",
            Self::Sub => "sub",
            Self::Mul => "mul",
            Self::Div => "div",
        }
    }

    #[inline]
    fn apply<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Self::Add => x + y,
            Self::Sub => x - y,
            Self::Mul => x * y,
            Self::Div => x / y,
        }
    }
}

/// Maps flat indices of a full shape onto a shape broadcast along trailing
/// dimensions.
#[derive(Clone, Debug)]
struct BroadcastMap {
    kind: MapKind,
}

#[derive(Clone, Debug)]
enum MapKind {
    Same,
    Scalar,
    General { full_shape: Vec<usize>, small_strides: Vec<usize> },
}

impl BroadcastMap {
    fn new(full: &[usize], small: &[usize], op: &'static str) -> Result<Self, TensorError> {
        let mismatch = || TensorError::ShapeMismatch { op, lhs: full.to_vec(), rhs: small.to_vec() };
        if small.len() > full.len() {
            return Err(mismatch());
        }
        let offset = full.len() - small.len();
        let mut aligned = vec![1usize; full.len()];
        for (i, &d) in small.iter().enumerate() {
            let f = full[offset + i];
            if d != f && d != 1 {
                return Err(mismatch());
            }
            aligned[offset + i] = d;
        }
        if aligned == full {
            return Ok(Self { kind: MapKind::Same });
        }
        if aligned.iter().all(|&d| d == 1) {
            return Ok(Self { kind: MapKind::Scalar });
        }
        let s = strides(&aligned);
        let small_strides = aligned.iter().zip(s).map(|(&d, st)| if d == 1 { 0 } else { st }).collect();
        Ok(Self { kind: MapKind::General { full_shape: full.to_vec(), small_strides } })
    }

    #[inline]
    fn index(&self, mut flat: usize) -> usize {
        match &self.kind {
            MapKind::Same => flat,
            MapKind::Scalar => 0,
            MapKind::General { full_shape, small_strides } => {
                let mut idx = 0;
                for k in (0..full_shape.len()).rev() {
                    let d = full_shape[k];
                    idx += (flat % d) * small_strides[k];
                    flat /= d;
                }
                idx
            }
        }
    }
}

struct BinaryRule {
    kind: BinaryKind,
    map: BroadcastMap,
}

impl<T: Scalar> Backward<T> for BinaryRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (a, b) = (ctx.inputs[0], ctx.inputs[1]);
        let g = ctx.grad.data();
        let (ad, bd) = (a.data(), b.data());
        let ga = ctx.needs[0].then(|| {
            let data = match self.kind {
                BinaryKind::Add => g.to_vec(),
                BinaryKind::Sub => g.to_vec(),
                BinaryKind::Mul => g.iter().enumerate().map(|(i, &gi)| gi * bd[self.map.index(i)]).collect(),
                BinaryKind::Div => g.iter().enumerate().map(|(i, &gi)| gi / bd[self.map.index(i)]).collect(),
            };
            Tensor::from_vec(a.shape(), data)
        });
        let gb = ctx.needs[1].then(|| {
            let mut acc = vec![T::zero(); b.numel()];
            for (i, &gi) in g.iter().enumerate() {
                let j = self.map.index(i);
                acc[j] += match self.kind {
                    BinaryKind::Add => gi,
                    BinaryKind::Sub => -gi,
                    BinaryKind::Mul => gi * ad[i],
                    BinaryKind::Div => -gi * ad[i] / (bd[j] * bd[j]),
                };
            }
            Tensor::from_vec(b.shape(), acc)
        });
        vec![ga, gb]
    }
}

struct SumRule {
    map: BroadcastMap,
}

impl<T: Scalar> Backward<T> for SumRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let x = ctx.inputs[0];
        let g = ctx.grad.data();
        let data = (0..x.numel()).map(|i| g[self.map.index(i)]).collect();
        vec![Some(Tensor::from_vec(x.shape(), data))]
    }
}

/// Central-difference gradient check.
///
/// Returns the maximum over coordinates of
/// `|analytic − numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var, TensorError>,
{
    let eval = |t: &Tensor<f64>| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let v = g.constant(t.clone());
        let out = f(&mut g, v)?;
        let val = g.value(out);
        if val.numel() != 1 {
            return Err(TensorError::NonScalarRoot(val.shape().to_vec()));
        }
        let y = val.item();
        if !y.is_finite() {
            return Err(TensorError::NonFiniteEvaluation);
        }
        Ok(y)
    };

    let mut g = Graph::new();
    let v = g.param(x.clone());
    let out = f(&mut g, v)?;
    if !g.value(out).item().is_finite() {
        return Err(TensorError::NonFiniteEvaluation);
    }
    let grads = g.backward(out)?;
    let zeros = Tensor::zeros(x.shape());
    let analytic = grads.get(v).unwrap_or(&zeros);

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec())
    }

    #[test]
    fn add_sub_mul_div() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(t(&[2], &[1.0, 2.0]));
        let b = g.constant(t(&[2], &[3.0, 4.0]));
        let s = g.add(a, b).unwrap();
        assert_eq!(g.value(s).data(), &[4.0, 6.0]);
        let z = g.constant(Tensor::zeros(&[2]));
        let id = g.add(a, z).unwrap();
        assert_eq!(g.value(id).data(), g.value(a).data());
        let x = g.constant(t(&[2], &[2.0, 3.0]));
        let half = g.constant(Tensor::scalar(0.5));
        let m = g.mul(x, half).unwrap();
        assert_eq!(g.value(m).data(), &[1.0, 1.5]);
    }

    #[test]
    fn broadcast_rules() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::ones(&[2, 3, 4]));
        let row = g.constant(t(&[4], &[1.0, 2.0, 3.0, 4.0]));
        let col = g.constant(Tensor::ones(&[3, 1]));
        let bad = g.constant(Tensor::ones(&[3]));
        let s = g.add(a, row).unwrap();
        assert_eq!(g.value(s).data()[5], 3.0);
        assert!(g.add(a, col).is_ok());
        assert!(matches!(g.add(a, bad), Err(TensorError::ShapeMismatch { .. })));
        // Result shape always follows the left operand.
        assert!(g.add(row, a).is_err());
    }

    #[test]
    fn division_guard() {
        let mut g = Graph::<f64>::new().with_div_guard(1e-6);
        let a = g.constant(Tensor::ones(&[2]));
        let b = g.constant(t(&[2], &[1.0, 1e-9]));
        assert!(matches!(g.div(a, b), Err(TensorError::DivisionDomain { .. })));
    }

    #[test]
    fn reduce_sum_cases() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let s = g.reduce_sum(x, &[0, 1], false).unwrap();
        assert_eq!(g.value(s).data(), &[10.0]);
        let id = g.reduce_sum(x, &[], false).unwrap();
        assert_eq!(g.value(id), g.value(x));
        let ones = g.constant(Tensor::ones(&[2, 3, 4]));
        let r = g.reduce_sum(ones, &[1], false).unwrap();
        assert_eq!(g.shape(r), &[2, 4]);
        assert!(g.value(r).data().iter().all(|&v| v == 3.0));
        let k = g.reduce_sum(ones, &[1], true).unwrap();
        assert_eq!(g.shape(k), &[2, 1, 4]);
        assert!(matches!(g.reduce_sum(ones, &[3], false), Err(TensorError::AxisOutOfRange { .. })));
    }

    #[test]
    fn backward_square() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[3], &[1.0, 2.0, 3.0]));
        let sq = g.mul(x, x).unwrap();
        let root = g.sum_all(sq).unwrap();
        let grads = g.backward(root).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_sum_is_ones_and_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2, 2], &[0.3, -1.0, 5.0, 2.0]));
        let y = g.add(x, x).unwrap();
        let root = g.sum_all(y).unwrap();
        let grads = g.backward(root).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 2.0));

        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[3], &[0.3, -1.0, 5.0]));
        let root = g.sum_all(x).unwrap();
        let grads = g.backward(root).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::ones(&[2]));
        assert!(matches!(g.backward(x), Err(TensorError::NonScalarRoot(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::ones(&[2]));
        let c = g.constant(Tensor::full(&[2], 3.0));
        let y = g.mul(x, c).unwrap();
        let root = g.sum_all(y).unwrap();
        let grads = g.backward(root).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn broadcast_backward_reduces() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::full(&[2, 3], 2.0));
        let b = g.param(t(&[3], &[1.0, 2.0, 4.0]));
        let d = g.div(a, b).unwrap();
        let root = g.sum_all(d).unwrap();
        let grads = g.backward(root).unwrap();
        // d/db Σ a/b = -Σ_rows a / b²
        let gb = grads.get(b).unwrap().data();
        assert!((gb[0] + 4.0).abs() < 1e-12);
        assert!((gb[1] + 1.0).abs() < 1e-12);
        assert!((gb[2] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn grad_check_linear_and_quadratic() {
        let x = t(&[2, 3], &[0.1, -0.4, 0.9, 0.3, -0.7, 0.5]);
        let err = grad_check(|g, v| g.sum_all(v), &x, 1e-3).unwrap();
        assert!(err < 1e-10, "{err}");
        let err = grad_check(
            |g, v| {
                let sq = g.mul(v, v)?;
                g.sum_all(sq)
            },
            &x,
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn grad_check_reports_non_finite() {
        let x = t(&[1], &[0.0]);
        let r = grad_check(
            |g, v| {
                let one = g.constant(Tensor::scalar(1.0));
                let inv = g.elementwise(one, v, BinaryKind::Div)?;
                g.sum_all(inv)
            },
            &x,
            1e-3,
        );
        assert!(r.is_err());
    }
}
