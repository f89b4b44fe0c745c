//! Adam with decoupled weight decay, wrapped in Lookahead.

use crate::error::{Error, Result};
use crate::numerics::{ParamId, Params, Tensor};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(params: &Params, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, _, p)| Tensor::zeros(p.shape())).collect();
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. Parameters without a gradient entry see a zero gradient.
    pub fn step(&mut self, params: &mut Params, grads: &BTreeMap<ParamId, Tensor>) -> Result<()> {
        check_finite(params, grads)?;
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let decay = 1.0 - self.lr * self.weight_decay;
        let ids: Vec<ParamId> = params.ids().collect();
        for id in ids {
            let p = params.get_mut(id).data_mut();
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let g = grads.get(&id).map(|g| g.data());
            for j in 0..p.len() {
                let gj = g.map_or(0.0, |g| g[j]);
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let step = (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                p[j] = p[j] * decay - self.lr * step;
            }
        }
        Ok(())
    }
}

fn check_finite(params: &Params, grads: &BTreeMap<ParamId, Tensor>) -> Result<()> {
    for (id, g) in grads {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(params.name(*id).to_string()));
        }
        if g.shape() != params.get(*id).shape() {
            return Err(Error::shape("optimizer", params.get(*id).shape(), g.shape()));
        }
    }
    Ok(())
}

/// Lookahead around [`AdamW`]: every `k` inner steps the slow weights move
/// `alpha` of the way towards the fast weights and the fast weights reset to them.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranger {
    pub inner: AdamW,
    pub k: u64,
    pub alpha: f64,
    slow: Vec<Tensor>,
}

impl Ranger {
    pub fn new(params: &Params, lr: f64, weight_decay: f64) -> Self {
        Self {
            inner: AdamW::new(params, lr, weight_decay),
            k: 6,
            alpha: 0.5,
            slow: params.iter().map(|(_, _, p)| p.clone()).collect(),
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &BTreeMap<ParamId, Tensor>) -> Result<()> {
        self.inner.step(params, grads)?;
        if self.inner.steps() % self.k == 0 {
            let ids: Vec<ParamId> = params.ids().collect();
            for id in ids {
                let fast = params.get_mut(id).data_mut();
                let slow = self.slow[id.0].data_mut();
                for (s, f) in slow.iter_mut().zip(fast.iter_mut()) {
                    *s += self.alpha * (*f - *s);
                    *f = *s;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(x: f64) -> (Params, ParamId) {
        let mut p = Params::new();
        let id = p.add("x", Tensor::vector(vec![x]));
        (p, id)
    }

    fn grad(id: ParamId, g: f64) -> BTreeMap<ParamId, Tensor> {
        BTreeMap::from([(id, Tensor::vector(vec![g]))])
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let (mut p, id) = one(1.5);
        let mut opt = Ranger::new(&p, 0.01, 0.0);
        for _ in 0..13 {
            opt.step(&mut p, &grad(id, 0.0)).unwrap();
        }
        assert_eq!(p.get(id).data(), &[1.5]);
    }

    #[test]
    fn quadratic_decreases_monotonically() {
        let (mut p, id) = one(1.0);
        let mut adam = AdamW::new(&p, 0.01, 0.0);
        let mut prev = 1.0f64;
        for _ in 0..100 {
            let x = p.get(id).data()[0];
            adam.step(&mut p, &grad(id, 2.0 * x)).unwrap();
            let now = p.get(id).data()[0].abs();
            assert!(now < prev, "{now} >= {prev}");
            prev = now;
        }
    }

    #[test]
    fn lookahead_decreases_at_every_sync() {
        // the fast weights are pulled back at each sync, so monotonicity
        // holds inside each window and across the synced (slow) weights
        let (mut p, id) = one(1.0);
        let mut opt = Ranger::new(&p, 0.01, 0.0);
        let (mut prev, mut prev_sync) = (1.0f64, 1.0f64);
        for step in 1..=102 {
            let x = p.get(id).data()[0];
            opt.step(&mut p, &grad(id, 2.0 * x)).unwrap();
            let now = p.get(id).data()[0].abs();
            if step % 6 == 0 {
                assert!(now < prev_sync, "sync {step}: {now} >= {prev_sync}");
                prev_sync = now;
            } else {
                assert!(now < prev, "step {step}: {now} >= {prev}");
            }
            prev = now;
        }
        assert!(prev < 0.9);
    }

    #[test]
    fn decoupled_decay_shrinks_geometrically() {
        let (mut p, id) = one(2.0);
        let (lr, wd) = (0.1, 0.01);
        let mut opt = AdamW::new(&p, lr, wd);
        for step in 1..=5 {
            opt.step(&mut p, &grad(id, 0.0)).unwrap();
            let expected = 2.0 * (1.0 - lr * wd).powi(step);
            assert!((p.get(id).data()[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let (mut p, id) = one(0.0);
        let mut opt = AdamW::new(&p, 0.05, 0.0);
        opt.step(&mut p, &grad(id, 3.0)).unwrap();
        assert!((p.get(id).data()[0] + 0.05).abs() < 1e-9);
    }

    #[test]
    fn lookahead_syncs_every_k_steps() {
        let (mut p, id) = one(0.0);
        let mut opt = Ranger::new(&p, 0.1, 0.0);
        let mut plain = AdamW::new(&p, 0.1, 0.0);
        let mut q = p.clone();
        for _ in 0..6 {
            opt.step(&mut p, &grad(id, 1.0)).unwrap();
            plain.step(&mut q, &grad(id, 1.0)).unwrap();
        }
        // slow started at 0, so after the sync the weight is half the fast one
        assert!((p.get(id).data()[0] - 0.5 * q.get(id).data()[0]).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut p = Params::new();
        p.add("ok", Tensor::vector(vec![0.0]));
        let bad = p.add("block0.attn.wq", Tensor::vector(vec![0.0]));
        let mut opt = Ranger::new(&p, 0.1, 0.0);
        let before = p.clone();
        match opt.step(&mut p, &grad(bad, f64::NAN)) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "block0.attn.wq"),
            other => panic!("{other:?}"),
        }
        assert_eq!(p, before);
    }
}
