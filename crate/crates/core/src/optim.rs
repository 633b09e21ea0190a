//! Named parameter collections and the Adam optimizer.

use std::collections::HashMap;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Graph leaves created for every tensor of a store, in store order.
#[derive(Debug, Clone)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    /// Wraps vars created elsewhere; they must follow store order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Binding { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `t` under `name`. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|i| self.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Puts every tensor on `g` as a gradient-tracking leaf.
    pub fn bind(&self, g: &mut Graph) -> Binding {
        Binding {
            vars: self.tensors.iter().map(|t| g.param(t)).collect(),
        }
    }

    /// Puts every tensor on `g` as a constant; gradients still flow *through*
    /// the operations that use them but never reach these tensors.
    pub fn bind_frozen(&self, g: &mut Graph) -> Binding {
        Binding {
            vars: self.tensors.iter().map(|t| g.constant(t)).collect(),
        }
    }

    /// Adds the leaf gradients accumulated on `g` into the tensors' buffers.
    pub fn pull_grads(&mut self, g: &Graph, b: &Binding) {
        for (t, &v) in self.tensors.iter_mut().zip(&b.vars) {
            if let Some(gr) = g.grad(v) {
                t.accumulate_grad(gr);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers, one pair per parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_store(store: &ParamStore) -> Self {
        AdamState {
            m: store.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: store.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update of every gradient-tracking tensor in
/// `store`. `t` is the 1-based step count.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, cfg: &AdamConfig, t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::contract("adam step counter starts at 1"));
    }
    if state.m.len() != store.len() {
        return Err(Error::contract("adam state does not match parameter store"));
    }
    for (i, p) in store.tensors.iter().enumerate() {
        if p.requires_grad && p.grad.is_none() {
            return Err(Error::contract(format!(
                "parameter `{}` has no gradient",
                store.names[i]
            )));
        }
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (i, p) in store.tensors.iter_mut().enumerate() {
        if !p.requires_grad {
            continue;
        }
        let grad = p.grad.take().expect("checked above");
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((w, g), mi), vi) in p.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        p.grad = Some(grad);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(w).with_grad());
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::new(&[3], vec![1.0, -2.0, 3.0]).unwrap().with_grad());
        let mut st = AdamState::for_store(&s);
        s.get_mut(ParamId(0)).accumulate_grad(&[0.0; 3]);
        adam_step(&mut s, &mut st, &AdamConfig::default(), 1).unwrap();
        assert_eq!(s.get(ParamId(0)).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..Default::default()
        };
        for g in [3.0, -0.2] {
            let mut s = scalar_store(1.0);
            let mut st = AdamState::for_store(&s);
            s.get_mut(ParamId(0)).accumulate_grad(&[g]);
            adam_step(&mut s, &mut st, &cfg, 1).unwrap();
            let delta = s.get(ParamId(0)).data()[0] - 1.0;
            assert!((delta + cfg.lr * f64::signum(g)).abs() < 1e-6, "{delta}");
        }
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut s = scalar_store(0.0);
        let mut st = AdamState::for_store(&s);
        let err = adam_step(&mut s, &mut st, &AdamConfig::default(), 1).unwrap_err();
        assert!(err.to_string().contains("`w`"), "{err}");
    }

    #[test]
    fn converges_on_quadratic() {
        // f(w) = (w - 3)^2
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut s = scalar_store(0.0);
        let mut st = AdamState::for_store(&s);
        let mut dist = Vec::new();
        for t in 1..=50 {
            let w = s.get(ParamId(0)).data()[0];
            s.zero_grad();
            s.get_mut(ParamId(0)).accumulate_grad(&[2.0 * (w - 3.0)]);
            adam_step(&mut s, &mut st, &cfg, t).unwrap();
            dist.push((s.get(ParamId(0)).data()[0] - 3.0).abs());
        }
        // Far from the optimum every step has magnitude ~lr, so |w - 3|
        // shrinks monotonically until the iterate first reaches the basin.
        for w in dist[..25].windows(2) {
            assert!(w[1] < w[0], "{dist:?}");
        }
        assert!(dist[49] < dist[0] && dist[49] < 0.5, "{dist:?}");
    }

    #[test]
    fn bind_and_pull_grads() {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::new(&[2], vec![1.0, 2.0]).unwrap().with_grad());
        let mut g = Graph::new();
        let b = s.bind(&mut g);
        let sq = g.mul(b.var(id), b.var(id)).unwrap();
        let l = g.sum(sq);
        g.backward(l).unwrap();
        s.pull_grads(&g, &b);
        assert_eq!(s.get(id).grad.as_deref(), Some(&[2.0, 4.0][..]));

        let mut g = Graph::new();
        let b = s.bind_frozen(&mut g);
        assert!(!g.requires_grad(b.var(id)));
    }
}
