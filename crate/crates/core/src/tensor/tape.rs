use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Vector-Jacobian product of one recorded operation.
///
/// `needs[k]` tells whether input `k` requires a gradient; entries for inputs
/// that do not may be returned as `None`.
pub trait Backward: Send + Sync {
    fn name(&self) -> &'static str;

    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>>;
}

struct Node {
    value: Tensor,
    inputs: Vec<usize>,
    op: Option<Box<dyn Backward>>,
    requires_grad: bool,
}

/// Records operations in execution order; inputs always precede outputs.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor. Leaves with `requires_grad` collect gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Records the result of an operation. The backward rule is dropped when
    /// no input requires a gradient.
    pub fn push_op(&mut self, value: Tensor, inputs: &[Var], op: Box<dyn Backward>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            inputs: if requires_grad {
                inputs.iter().map(|v| v.0).collect()
            } else {
                Vec::new()
            },
            op: if requires_grad { Some(op) } else { None },
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
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

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.leaf_grads {
            *g = None;
        }
    }

    /// Propagates d(loss)/d(leaf) for every reachable leaf, accumulating into
    /// existing leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        if !root.requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                None => {
                    if node.requires_grad {
                        match &mut self.leaf_grads[id] {
                            Some(acc) => acc.add_assign(&g),
                            slot => *slot = Some(g),
                        }
                    }
                }
                Some(op) => {
                    let inputs: Vec<&Tensor> =
                        node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
                    let needs: Vec<bool> = node
                        .inputs
                        .iter()
                        .map(|&i| self.nodes[i].requires_grad)
                        .collect();
                    let input_grads = op.backward(&inputs, &node.value, &g, &needs);
                    debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", op.name());
                    for ((&inp, need), ig) in node.inputs.iter().zip(&needs).zip(input_grads) {
                        if !need {
                            continue;
                        }
                        let Some(ig) = ig else { continue };
                        debug_assert_eq!(
                            ig.shape(),
                            self.nodes[inp].value.shape(),
                            "gradient shape from {}",
                            op.name()
                        );
                        match &mut grads[inp] {
                            Some(acc) => acc.add_assign(&ig),
                            slot => *slot = Some(ig),
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
