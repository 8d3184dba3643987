use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a node's backward pass sees.
pub struct BackwardCtx<'a> {
    pub inputs: &'a [&'a Tensor],
    pub output: &'a Tensor,
    /// Upstream gradient, same shape as `output`.
    pub grad: &'a Tensor,
    /// `needs[i]` is false when input `i` does not require a gradient.
    pub needs: &'a [bool],
}

/// Vector-Jacobian product of a recorded op.
///
/// Returns one entry per input. Entries for inputs with `needs[i] == false`
/// may be `None`.
pub trait Function: Send {
    fn name(&self) -> &'static str;
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Tensor>>>;
}

pub(crate) struct FnBackward<F> {
    name: &'static str,
    f: F,
}

impl<F> Function for FnBackward<F>
where
    F: Fn(&BackwardCtx<'_>) -> Result<Vec<Option<Tensor>>> + Send,
{
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Tensor>>> {
        (self.f)(ctx)
    }
}

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    func: Option<Box<dyn Function>>,
    requires_grad: bool,
}

/// Tape of recorded operations. Nodes are appended in execution order, which
/// is a topological order, so backward is a single reverse sweep.
///
/// A graph is meant for one forward/backward pass: build, call
/// [`Graph::backward`] once, read gradients, drop.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Node {
            value,
            inputs: Vec::new(),
            func: None,
            requires_grad: false,
        })
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Node {
            value,
            inputs: Vec::new(),
            func: None,
            requires_grad: true,
        })
    }

    /// Copy of `v`'s value cut off from the tape.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Names of the recorded ops that take part in differentiation, in
    /// recording order.
    pub fn op_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.nodes
            .iter()
            .filter_map(|n| n.func.as_ref().map(|f| f.name()))
    }

    /// Gradient of the last backward's loss w.r.t. `v`, if any reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Records an op output. Fails if `value` holds a NaN or infinity.
    pub fn record(
        &mut self,
        value: Tensor,
        inputs: &[Var],
        func: Box<dyn Function>,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite value",
                func.name()
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(Node {
            value,
            inputs: inputs.to_vec(),
            func: requires_grad.then_some(func),
            requires_grad,
        }))
    }

    pub(crate) fn record_fn<F>(
        &mut self,
        name: &'static str,
        value: Tensor,
        inputs: &[Var],
        f: F,
    ) -> Result<Var>
    where
        F: Fn(&BackwardCtx<'_>) -> Result<Vec<Option<Tensor>>> + Send + 'static,
    {
        self.record(value, inputs, Box::new(FnBackward { name, f }))
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Graph(
                "backward already ran on this graph; build a new graph per step".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.requires_grad(loss) {
            return Err(Error::Graph(
                "loss is detached from every differentiable input".into(),
            ));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss).to_vec(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(func) = node.func.as_ref() else {
                continue;
            };
            let Some(grad) = grads[i].take() else {
                continue;
            };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let input_grads = func.backward(&BackwardCtx {
                inputs: &inputs,
                output: &node.value,
                grad: &grad,
                needs: &needs,
            })?;
            if input_grads.len() != node.inputs.len() {
                return Err(Error::Graph(format!(
                    "{} returned {} gradients for {} inputs",
                    func.name(),
                    input_grads.len(),
                    node.inputs.len()
                )));
            }
            for ((v, need), g) in node.inputs.iter().zip(&needs).zip(input_grads) {
                let Some(g) = g.filter(|_| *need) else {
                    continue;
                };
                if g.shape() != self.nodes[v.0].value.shape() {
                    return Err(Error::Graph(format!(
                        "{} produced gradient of shape {:?} for input of shape {:?}",
                        func.name(),
                        g.shape(),
                        self.nodes[v.0].value.shape()
                    )));
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
            grads[i] = Some(grad);
        }
        self.grads = grads;
        Ok(())
    }
}
