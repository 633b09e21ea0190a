//! Training objectives of the adversarial multi-task model.
//!
//! All losses are built from differentiable graph primitives, so gradients
//! reach every tensor input.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::optim::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Probability clamp applied before every logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Default weight of the L1 term in the image loss.
pub const DEFAULT_LAMBDA: f64 = 100.0;

fn clamp_prob(g: &mut Graph, p: Var) -> Var {
    g.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
}

/// `mean(-log(1 - D(fake)) - log(D(real)))`.
pub fn discriminator_loss(g: &mut Graph, d_fake: Var, d_real: Var) -> Result<Var> {
    if g.value(d_fake).len() != g.value(d_real).len() {
        return Err(Error::dim(format!(
            "discriminator outputs {:?} vs {:?}",
            g.shape(d_fake),
            g.shape(d_real)
        )));
    }
    let f = clamp_prob(g, d_fake);
    let nf = g.scale(f, -1.0);
    let one_minus = g.add_scalar(nf, 1.0);
    let log_fake = g.log(one_minus);
    let r = clamp_prob(g, d_real);
    let log_real = g.log(r);
    let sum = g.add(log_fake, log_real)?;
    let m = g.mean(sum);
    Ok(g.scale(m, -1.0))
}

/// Categorical cross-entropy `mean(-log p[label])` of softmax outputs.
pub fn categorical_loss(g: &mut Graph, probs: Var, labels: &[usize]) -> Result<Var> {
    let s = g.shape(probs).to_vec();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::dim(format!(
            "{} labels for class probabilities {s:?}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= s[1]) {
        return Err(Error::contract(format!("label {bad} outside 0..{}", s[1])));
    }
    let p = g.pick(probs, labels)?;
    let p = clamp_prob(g, p);
    let lp = g.log(p);
    let m = g.mean(lp);
    Ok(g.scale(m, -1.0))
}

/// Pieces of the image loss, kept separately for logging.
#[derive(Debug, Clone, Copy)]
pub struct ImageLoss {
    /// `mean |pred - target|`
    pub l1: Var,
    /// `-mean(log D(fake))`
    pub adv: Var,
    /// `lambda * l1 + adv`
    pub total: Var,
}

/// `lambda * mean|pred - target| - mean(log D(fake))`. The L1 mean runs over
/// every pixel of every sample.
pub fn image_loss(g: &mut Graph, pred: Var, target: Var, d_fake: Var, lambda: f64) -> Result<ImageLoss> {
    if g.value(pred).len() != g.value(target).len() {
        return Err(Error::dim(format!(
            "image loss: prediction {:?} vs target {:?}",
            g.shape(pred),
            g.shape(target)
        )));
    }
    let diff = g.sub(pred, target)?;
    let a = g.abs(diff);
    let l1 = g.mean(a);
    let f = clamp_prob(g, d_fake);
    let lf = g.log(f);
    let mlf = g.mean(lf);
    let adv = g.scale(mlf, -1.0);
    let wl1 = g.scale(l1, lambda);
    let total = g.add(wl1, adv)?;
    Ok(ImageLoss { l1, adv, total })
}

/// `l_cat / s1^2 + l_img / (2 s2^2) + log s1 + log s2` with `s_i = exp(log_sigma_i)`.
pub fn generator_total(g: &mut Graph, l_cat: Var, l_img: Var, log_sigma1: Var, log_sigma2: Var) -> Result<Var> {
    let w1 = g.scale(log_sigma1, -2.0);
    let w1 = g.exp(w1);
    let w2 = g.scale(log_sigma2, -2.0);
    let w2 = g.exp(w2);
    let t1 = g.mul(l_cat, w1)?;
    let t2 = g.mul(l_img, w2)?;
    let t2 = g.scale(t2, 0.5);
    let s = g.add(t1, t2)?;
    let s = g.add(s, log_sigma1)?;
    g.add(s, log_sigma2)
}

/// Trainable task-uncertainty scalars, stored as `log sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyParams {
    pub store: ParamStore,
    pub log_sigma1: ParamId,
    pub log_sigma2: ParamId,
}

impl UncertaintyParams {
    /// Both sigmas start at the same value.
    pub fn new(initial_log_sigma: f64) -> Self {
        let mut store = ParamStore::new();
        let log_sigma1 = store.add("unc.log_sigma1", Tensor::scalar(initial_log_sigma).with_grad());
        let log_sigma2 = store.add("unc.log_sigma2", Tensor::scalar(initial_log_sigma).with_grad());
        UncertaintyParams {
            store,
            log_sigma1,
            log_sigma2,
        }
    }

    pub fn from_store(store: ParamStore) -> Result<Self> {
        let log_sigma1 = store
            .id("unc.log_sigma1")
            .ok_or_else(|| Error::contract("missing unc.log_sigma1"))?;
        let log_sigma2 = store
            .id("unc.log_sigma2")
            .ok_or_else(|| Error::contract("missing unc.log_sigma2"))?;
        Ok(UncertaintyParams {
            store,
            log_sigma1,
            log_sigma2,
        })
    }

    pub fn sigma1(&self) -> f64 {
        self.store.get(self.log_sigma1).data()[0].exp()
    }

    pub fn sigma2(&self) -> f64 {
        self.store.get(self.log_sigma2).data()[0].exp()
    }
}

impl Default for UncertaintyParams {
    fn default() -> Self {
        UncertaintyParams::new(0.0)
    }
}

/// Scalar values of every loss term for one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_d: f64,
    pub l_cat: f64,
    pub l_l1: f64,
    pub l_adv: f64,
    pub l_img: f64,
    pub l_g_total: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [
            self.l_d,
            self.l_cat,
            self.l_l1,
            self.l_adv,
            self.l_img,
            self.l_g_total,
            self.sigma1,
            self.sigma2,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}
