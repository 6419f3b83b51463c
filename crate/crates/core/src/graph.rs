//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Each training step builds a fresh `Graph`; operations append nodes and
//! return `Var` handles. `backward` walks the tape once in reverse and
//! returns gradients for leaf nodes (parameters and inputs).

use std::collections::HashMap;

use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) type BackFn<F> =
    Box<dyn Fn(&Graph<F>, Var, &Tensor<F>) -> Vec<(Var, Tensor<F>)>>;

pub(crate) struct Node<F: Real> {
    pub value: Tensor<F>,
    pub backward: Option<BackFn<F>>,
}

pub struct Graph<F: Real> {
    pub(crate) nodes: Vec<Node<F>>,
    param_cache: HashMap<usize, Var>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(1024), param_cache: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Leaf without gradient tracking.
    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(t, None)
    }

    /// Leaf that receives gradients (an input or a parameter).
    pub fn leaf(&mut self, t: Tensor<F>) -> Var {
        // Leaves are marked by a no-op backward so their gradients are kept.
        self.push(t, Some(Box::new(|_, _, _| Vec::new())))
    }

    /// Bind a parameter slot; repeated binds of the same slot share one node
    /// so gradients from all uses accumulate.
    pub fn bind_param(&mut self, slot: usize, t: &Tensor<F>) -> Var {
        if let Some(&v) = self.param_cache.get(&slot) {
            return v;
        }
        let v = self.leaf(t.clone());
        self.param_cache.insert(slot, v);
        v
    }

    pub(crate) fn push(&mut self, value: Tensor<F>, backward: Option<BackFn<F>>) -> Var {
        self.nodes.push(Node { value, backward });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar root. Returns per-node gradients; interior
    /// gradients are dropped eagerly, leaf gradients are kept.
    pub fn backward(&self, root: Var) -> Gradients<F> {
        assert_eq!(self.value(root).len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor<F>>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        grads[root.0] = Some(Tensor::ones(self.value(root).shape()));
        for id in (0..=root.0).rev() {
            if grads[id].is_none() {
                continue;
            }
            let node = &self.nodes[id];
            let Some(back) = &node.backward else {
                // Constant: gradient irrelevant, free it.
                grads[id] = None;
                continue;
            };
            let g = grads[id].take().unwrap();
            let contribs = back(self, Var(id), &g);
            if contribs.is_empty() {
                // Leaf: keep its gradient for the caller.
                grads[id] = Some(g);
                continue;
            }
            for (parent, pg) in contribs {
                debug_assert_eq!(
                    pg.shape(),
                    self.value(parent).shape(),
                    "gradient shape mismatch for node {}",
                    parent.0
                );
                grads[parent.0] = Some(match grads[parent.0].take() {
                    None => pg,
                    Some(acc) => acc.zip(&pg, |a, b| a + b),
                });
            }
        }
        Gradients { grads }
    }
}

pub struct Gradients<F: Real> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf, zeros if the leaf never influenced the root.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor<F> {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}
