//! Reverse-mode differentiation over an operation record.
//!
//! Every forward call appends a node holding its output and whatever it
//! needs for the backward pass. [`GradientTape::backward`] replays the record
//! in reverse, so gradients come out for every node that fed the chosen root.

use super::ops::{self, Padding};
use super::{shape_str, ParamSet, Real, Result, Tensor, TensorError};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    Conv2d { x: usize, w: usize, b: Option<usize>, padding: Padding },
    ConvTranspose2x2 { x: usize, w: usize, b: Option<usize> },
    MaxPool2x2 { x: usize, argmax: Vec<u32> },
    Upsample2x { x: usize },
    Relu { x: usize },
    Sigmoid { x: usize },
    Concat { a: usize, b: usize },
}

#[derive(Debug)]
struct Node<T: Real> {
    value: Tensor<T>,
    op: Op,
}

/// Ordered record of executed operations with cached activations.
#[derive(Debug, Default)]
pub struct GradientTape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

/// Output of [`GradientTape::backward`].
#[derive(Debug)]
pub struct Gradients<T: Real = f32> {
    /// One tensor per slot of the parameter set; zero for parameters that
    /// did not take part in the forward pass.
    pub params: Vec<Tensor<T>>,
    nodes: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient with respect to a recorded value, if it fed the root.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }
}

impl<T: Real> GradientTape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        self.nodes.get(v.0).ok_or_else(|| TensorError::Invalid(format!("variable {} not on this tape", v.0)))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Takes ownership of a recorded value, leaving an empty tensor behind.
    pub fn take_value(&mut self, v: Var) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros([0, 0, 0, 0]))
    }

    /// Records a non-trainable input.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input)
    }

    /// Records parameter `slot` of `params`.
    pub fn param(&mut self, params: &ParamSet<T>, slot: usize) -> Var {
        self.push(params.get(slot).clone(), Op::Param(slot))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, padding: Padding) -> Result<Var> {
        let bias = match b {
            Some(b) => Some(self.node(b)?.value.data()),
            None => None,
        };
        let out = ops::conv2d_forward(&self.node(x)?.value, &self.node(w)?.value, bias, padding)?;
        Ok(self.push(out, Op::Conv2d { x: x.0, w: w.0, b: b.map(|b| b.0), padding }))
    }

    pub fn conv_transpose2x2(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let bias = match b {
            Some(b) => Some(self.node(b)?.value.data()),
            None => None,
        };
        let out = ops::conv_transpose2x2_forward(&self.node(x)?.value, &self.node(w)?.value, bias)?;
        Ok(self.push(out, Op::ConvTranspose2x2 { x: x.0, w: w.0, b: b.map(|b| b.0) }))
    }

    pub fn max_pool2x2(&mut self, x: Var) -> Result<Var> {
        let (out, argmax) = ops::max_pool2x2_forward(&self.node(x)?.value)?;
        Ok(self.push(out, Op::MaxPool2x2 { x: x.0, argmax }))
    }

    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let out = ops::upsample2x_forward(&self.node(x)?.value);
        Ok(self.push(out, Op::Upsample2x { x: x.0 }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = ops::relu_forward(&self.node(x)?.value);
        Ok(self.push(out, Op::Relu { x: x.0 }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = ops::sigmoid_forward(&self.node(x)?.value);
        Ok(self.push(out, Op::Sigmoid { x: x.0 }))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::concat_forward(&self.node(a)?.value, &self.node(b)?.value)?;
        Ok(self.push(out, Op::Concat { a: a.0, b: b.0 }))
    }

    /// Propagates `loss_grad` (the cotangent of `root`) back through the
    /// record. `params` supplies the slot count and shapes of the returned
    /// parameter gradients.
    pub fn backward(&self, root: Var, loss_grad: &Tensor<T>, params: &ParamSet<T>) -> Result<Gradients<T>> {
        let recorded = self.nodes.iter().any(|n| !matches!(n.op, Op::Input | Op::Param(_)));
        if !recorded || root.0 >= self.nodes.len() {
            return Err(TensorError::NoForward);
        }
        let root_val = &self.nodes[root.0].value;
        if root_val.shape() != loss_grad.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "backward",
                left: format!("output {}", shape_str(&root_val.shape())),
                right: format!("loss gradient {}", shape_str(&loss_grad.shape())),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(loss_grad.clone());

        fn acc<T: Real>(grads: &mut [Option<Tensor<T>>], i: usize, g: Tensor<T>) -> Result<()> {
            match &mut grads[i] {
                Some(existing) => existing.add_assign(&g),
                slot => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        }
        let bias_tensor = |len: usize, v: Vec<T>| Tensor::from_vec([len, 1, 1, 1], v);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::Conv2d { x, w, b, padding } => {
                    let (dx, dw, db) =
                        ops::conv2d_backward(&self.nodes[*x].value, &self.nodes[*w].value, &g, *padding)?;
                    acc(&mut grads, *x, dx)?;
                    acc(&mut grads, *w, dw)?;
                    if let Some(b) = b {
                        let shape = self.nodes[*b].value.shape();
                        acc(&mut grads, *b, bias_tensor(db.len(), db)?.reshape(shape)?)?;
                    }
                }
                Op::ConvTranspose2x2 { x, w, b } => {
                    let (dx, dw, db) =
                        ops::conv_transpose2x2_backward(&self.nodes[*x].value, &self.nodes[*w].value, &g)?;
                    acc(&mut grads, *x, dx)?;
                    acc(&mut grads, *w, dw)?;
                    if let Some(b) = b {
                        let shape = self.nodes[*b].value.shape();
                        acc(&mut grads, *b, bias_tensor(db.len(), db)?.reshape(shape)?)?;
                    }
                }
                Op::MaxPool2x2 { x, argmax } => {
                    let dx = ops::max_pool2x2_backward(self.nodes[*x].value.shape(), argmax, &g);
                    acc(&mut grads, *x, dx)?;
                }
                Op::Upsample2x { x } => acc(&mut grads, *x, ops::upsample2x_backward(&g))?,
                Op::Relu { x } => acc(&mut grads, *x, ops::relu_backward(&self.nodes[*x].value, &g))?,
                Op::Sigmoid { x } => acc(&mut grads, *x, ops::sigmoid_backward(&node.value, &g))?,
                Op::Concat { a, b } => {
                    let (da, db) = ops::concat_backward(self.nodes[*a].value.shape()[1], &g);
                    acc(&mut grads, *a, da)?;
                    acc(&mut grads, *b, db)?;
                }
            }
            grads[i] = Some(g);
        }

        let mut param_grads: Vec<Tensor<T>> = params.entries().iter().map(|e| Tensor::zeros(e.value.shape())).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(slot), Some(g)) = (&node.op, &grads[i]) {
                let Some(target) = param_grads.get_mut(*slot) else {
                    return Err(TensorError::Invalid(format!("parameter slot {slot} outside the set")));
                };
                target.add_assign(g)?;
            }
        }
        Ok(Gradients { params: param_grads, nodes: grads })
    }
}
