use std::collections::BTreeMap;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Suffixes of non-trainable batch-norm buffers stored next to parameters.
pub const RUNNING_MEAN: &str = "running_mean";
pub const RUNNING_VAR: &str = "running_var";

/// Whether `name` denotes a trainable parameter rather than a statistics buffer.
pub fn is_trainable_name(name: &str) -> bool {
    let last = name.rsplit('/').next().unwrap_or(name);
    last != RUNNING_MEAN && last != RUNNING_VAR
}

#[derive(Debug, Clone, PartialEq)]
struct Entry<T> {
    value: Tensor<T>,
    m: Option<Tensor<T>>,
    v: Option<Tensor<T>>,
}

/// Named parameter arrays plus their optimizer state.
///
/// Iteration order is lexicographic by name, which fixes the checkpoint
/// layout and keeps updates deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    entries: BTreeMap<String, Entry<T>>,
    adam_steps: u64,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
            adam_steps: 0,
        }
    }

    /// Insert or replace an entry. Replacing resets its optimizer state.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if name.is_empty() {
            return Err(TensorError::Argument {
                op: "ParamStore::insert",
                detail: "parameter names must be non-empty".into(),
            });
        }
        self.entries.insert(
            name,
            Entry {
                value,
                m: None,
                v: None,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.iter().filter(|(k, _)| is_trainable_name(k))
    }

    /// Number of scalar values across trainable entries.
    pub fn num_trainable(&self) -> usize {
        self.trainable().map(|(_, t)| t.numel()).sum()
    }

    /// Copy every entry into a store of another element type.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (k, t) in self.iter() {
            out.insert(k, t.cast()).expect("names already validated");
        }
        out
    }

    /// Merge all entries of `other` into `self`, replacing same-named ones.
    pub fn extend(&mut self, other: ParamStore<T>) {
        for (k, e) in other.entries {
            self.entries.insert(k, e);
        }
    }

    /// Drop all optimizer moments and the Adam step count, keeping values.
    pub fn reset_optimizer_state(&mut self) {
        for e in self.entries.values_mut() {
            e.m = None;
            e.v = None;
        }
        self.adam_steps = 0;
    }

    /// Entries whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (k, t) in self.iter().filter(|(k, _)| k.starts_with(prefix)) {
            out.insert(k, t.clone()).expect("non-empty name");
        }
        out
    }

    pub(crate) fn state_dims_consistent(&self) -> bool {
        self.entries.values().all(|e| {
            e.m.as_ref().is_none_or(|m| m.dims() == e.value.dims())
                && e.v.as_ref().is_none_or(|v| v.dims() == e.value.dims())
        })
    }
}

/// Gradients of a scalar loss, keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport<T: Scalar = f32> {
    pub loss: f64,
    pub grads: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> GradReport<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }
}

/// First-order update rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    RmsProp { decay: f64, eps: f64 },
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub const fn rmsprop() -> Self {
        Optimizer::RmsProp {
            decay: 0.9,
            eps: 1e-8,
        }
    }
}

/// Apply one optimizer update in place to every trainable entry of `params`.
pub fn optimizer_step<T: Scalar>(
    opt: Optimizer,
    params: &mut ParamStore<T>,
    grads: &GradReport<T>,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(TensorError::Argument {
            op: "optimizer_step",
            detail: format!("learning rate {lr} must be positive"),
        });
    }
    if let Some(extra) = grads.grads.keys().find(|k| !params.contains(k)) {
        return Err(TensorError::Consistency(format!(
            "gradient for unknown parameter {extra:?}"
        )));
    }
    for (name, e) in params.entries.iter().filter(|(k, _)| is_trainable_name(k)) {
        match grads.grads.get(name) {
            None => {
                return Err(TensorError::Consistency(format!(
                    "missing gradient for trainable parameter {name:?}"
                )))
            }
            Some(g) if g.dims() != e.value.dims() => {
                return Err(TensorError::Consistency(format!(
                    "gradient dims {:?} differ from parameter {name:?} dims {:?}",
                    g.dims(),
                    e.value.dims()
                )))
            }
            Some(_) => {}
        }
    }
    let lr = T::from_f64_lossy(lr);
    if let Optimizer::Adam { .. } = opt {
        params.adam_steps += 1;
    }
    let t = params.adam_steps as i32;
    for (name, e) in params.entries.iter_mut().filter(|(k, _)| is_trainable_name(k)) {
        let g = grads.grads[name].data();
        let dims = e.value.dims().to_vec();
        match opt {
            Optimizer::Adam { beta1, beta2, eps } => {
                let (b1, b2, eps) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2), T::from_f64_lossy(eps));
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                let m = e.m.get_or_insert_with(|| Tensor::zeros(&dims));
                let v = e.v.get_or_insert_with(|| Tensor::zeros(&dims));
                for (((p, &gi), mi), vi) in e
                    .value
                    .data_mut()
                    .iter_mut()
                    .zip(g)
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                {
                    *mi = b1 * *mi + (T::one() - b1) * gi;
                    *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                    let mhat = *mi / c1;
                    let vhat = *vi / c2;
                    *p = *p - lr * mhat / (vhat.sqrt() + eps);
                }
            }
            Optimizer::RmsProp { decay, eps } => {
                let (d, eps) = (T::from_f64_lossy(decay), T::from_f64_lossy(eps));
                let ms = e.v.get_or_insert_with(|| Tensor::zeros(&dims));
                for ((p, &gi), si) in e.value.data_mut().iter_mut().zip(g).zip(ms.data_mut()) {
                    *si = d * *si + (T::one() - d) * gi * gi;
                    *p = *p - lr * gi / (si.sqrt() + eps);
                }
            }
        }
        if !e.value.all_finite() {
            return Err(TensorError::NonFinite { op: "optimizer_step" });
        }
    }
    debug_assert!(params.state_dims_consistent());
    Ok(())
}

/// Project every trainable value into `[-c, c]`.
pub fn clip_weights<T: Scalar>(params: &mut ParamStore<T>, c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(TensorError::Argument {
            op: "clip_weights",
            detail: format!("clip bound {c} must be positive"),
        });
    }
    let c = T::from_f64_toward_zero(c);
    for (_, e) in params.entries.iter_mut().filter(|(k, _)| is_trainable_name(k)) {
        for v in e.value.data_mut() {
            *v = v.max(-c).min(c);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(p: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::scalar(p)).unwrap();
        s
    }

    fn grad(g: f64) -> GradReport<f64> {
        GradReport {
            loss: 0.0,
            grads: [("p".to_string(), Tensor::scalar(g))].into(),
        }
    }

    #[test]
    fn rmsprop_descends() {
        let mut s = scalar_store(1.0);
        optimizer_step(Optimizer::rmsprop(), &mut s, &grad(1.0), 0.1).unwrap();
        assert!(s.get("p").unwrap().data()[0] < 1.0);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut s = ParamStore::<f32>::new();
        s.insert("a", Tensor::from_fn(&[2, 3], |i| i as f32 - 2.5)).unwrap();
        let before = s.clone();
        let g = GradReport {
            loss: 0.0,
            grads: [("a".to_string(), Tensor::zeros(&[2, 3]))].into(),
        };
        for _ in 0..5 {
            optimizer_step(Optimizer::adam(), &mut s, &g, 1e-2).unwrap();
        }
        assert_eq!(s.get("a"), before.get("a"));
    }

    #[test]
    fn reset_state_matches_fresh_store() {
        let mut used = scalar_store(1.0);
        for _ in 0..3 {
            optimizer_step(Optimizer::adam(), &mut used, &grad(0.5), 0.1).unwrap();
        }
        let mut fresh = scalar_store(used.get("p").unwrap().data()[0]);
        used.reset_optimizer_state();
        assert_eq!(used, fresh);
        optimizer_step(Optimizer::rmsprop(), &mut used, &grad(0.3), 0.1).unwrap();
        optimizer_step(Optimizer::rmsprop(), &mut fresh, &grad(0.3), 0.1).unwrap();
        assert_eq!(used, fresh);
    }

    #[test]
    fn adam_quadratic_matches_scalar_recurrence() {
        // Independent scalar Adam recurrence on (p - 3)^2.
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.1f64);
        let (mut p, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = 2.0 * (p - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            p -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        assert!((p - 3.0).abs() < 0.05, "reference recurrence ended at {p}");

        let mut s = scalar_store(0.0);
        for _ in 0..200 {
            let cur = s.get("p").unwrap().data()[0];
            optimizer_step(Optimizer::adam(), &mut s, &grad(2.0 * (cur - 3.0)), lr).unwrap();
        }
        let got = s.get("p").unwrap().data()[0];
        assert!((got - 3.0).abs() < 0.05);
        assert!((got - p).abs() < 1e-12);
    }

    #[test]
    fn missing_gradient_is_consistency_error() {
        let mut s = scalar_store(1.0);
        s.insert("q", Tensor::scalar(2.0)).unwrap();
        let err = optimizer_step(Optimizer::adam(), &mut s, &grad(1.0), 0.1).unwrap_err();
        assert!(matches!(err, TensorError::Consistency(_)));
    }

    #[test]
    fn buffers_are_not_optimized_or_clipped() {
        let mut s = scalar_store(0.2);
        s.insert("bn/running_var", Tensor::scalar(4.0)).unwrap();
        optimizer_step(Optimizer::rmsprop(), &mut s, &grad(1.0), 0.01).unwrap();
        clip_weights(&mut s, 0.05).unwrap();
        assert_eq!(s.get("p").unwrap().data()[0], 0.05);
        assert_eq!(s.get("bn/running_var").unwrap().data()[0], 4.0);
    }

    #[test]
    fn clip_examples() {
        let mut s = ParamStore::<f32>::new();
        s.insert("w", Tensor::new(vec![3], vec![0.2, -0.01, -7.0]).unwrap()).unwrap();
        clip_weights(&mut s, 0.05).unwrap();
        // 0.05f32 lies above 0.05, so the bound rounds one step toward zero.
        let b = 0.05f32.next_down();
        assert_eq!(s.get("w").unwrap().data(), &[b, -0.01, -b]);
        assert!(s.get("w").unwrap().data().iter().all(|v| (v.abs() as f64) <= 0.05));
        assert!(clip_weights(&mut s, 0.0).is_err());
    }
}
