//! Named layers that bind their parameters from a [`ParamStore`].

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TensorError};
use crate::graph::{BatchStats, Graph, Var};
use crate::kernels::Padding;
use crate::params::{ParamStore, RUNNING_MEAN, RUNNING_VAR};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// He-normal tensor: zero mean, standard deviation `sqrt(2 / fan_in)`.
pub fn he_normal<T: Scalar, R: Rng + ?Sized>(dims: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(dims, |_| T::from_f64_lossy(dist.sample(rng)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv2d {
    /// 3×3 convolution with same padding.
    pub fn new(name: impl Into<String>, in_ch: usize, out_ch: usize, stride: usize) -> Self {
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel: 3,
            stride,
            padding: Padding::Same,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}/w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}/b", self.name)
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        let k = self.kernel;
        let fan_in = self.in_ch * k * k;
        store.insert(self.weight_name(), he_normal(&[self.out_ch, self.in_ch, k, k], fan_in, rng))?;
        store.insert(self.bias_name(), Tensor::zeros(&[self.out_ch]))
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, &self.weight_name())?;
        let b = g.param(store, &self.bias_name())?;
        g.conv2d(x, w, Some(b), self.stride, self.padding)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(name: impl Into<String>, inputs: usize, outputs: usize) -> Self {
        Self {
            name: name.into(),
            inputs,
            outputs,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}/w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}/b", self.name)
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        store.insert(self.weight_name(), he_normal(&[self.outputs, self.inputs], self.inputs, rng))?;
        store.insert(self.bias_name(), Tensor::zeros(&[self.outputs]))
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, &self.weight_name())?;
        let b = g.param(store, &self.bias_name())?;
        g.dense(x, w, Some(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub name: String,
    pub channels: usize,
}

impl BatchNorm {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self {
            name: name.into(),
            channels,
        }
    }

    pub fn gamma_name(&self) -> String {
        format!("{}/gamma", self.name)
    }

    pub fn beta_name(&self) -> String {
        format!("{}/beta", self.name)
    }

    /// `gamma = 1`, `beta = 0`. Running statistics appear after the first
    /// training-mode batch is committed.
    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        store.insert(self.gamma_name(), Tensor::ones(&[self.channels]))?;
        store.insert(self.beta_name(), Tensor::zeros(&[self.channels]))
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, mode: Mode) -> Result<Var> {
        let gamma = g.param(store, &self.gamma_name())?;
        let beta = g.param(store, &self.beta_name())?;
        let eps = T::from_f64_lossy(BN_EPS);
        match mode {
            Mode::Train => {
                let (y, stats) = g.batch_norm_train(x, gamma, beta, eps)?;
                g.push_batch_stats(self.name.clone(), stats);
                Ok(y)
            }
            Mode::Infer => {
                let mean = store.get(&format!("{}/{RUNNING_MEAN}", self.name));
                let var = store.get(&format!("{}/{RUNNING_VAR}", self.name));
                let (Some(mean), Some(var)) = (mean, var) else {
                    return Err(TensorError::State(format!(
                        "batch norm {:?} used in inference before any training batch",
                        self.name
                    )));
                };
                let (mean, var) = (mean.data().to_vec(), var.data().to_vec());
                g.batch_norm_infer(x, gamma, beta, &mean, &var, eps)
            }
        }
    }
}

/// Fold training-batch statistics into the running averages stored next to
/// each batch norm: `running = momentum · running + (1 − momentum) · batch`,
/// starting from mean 0 and variance 1.
pub fn commit_batch_stats<T: Scalar>(store: &mut ParamStore<T>, updates: Vec<(String, BatchStats<T>)>) -> Result<()> {
    let mom = T::from_f64_lossy(BN_MOMENTUM);
    for (layer, stats) in updates {
        let c = stats.mean.len();
        for (suffix, batch, init) in [
            (RUNNING_MEAN, &stats.mean, T::zero()),
            (RUNNING_VAR, &stats.var, T::one()),
        ] {
            let key = format!("{layer}/{suffix}");
            if !store.contains(&key) {
                store.insert(key.clone(), Tensor::full(&[c], init))?;
            }
            let run = store.get_mut(&key).expect("inserted above");
            for (r, &b) in run.data_mut().iter_mut().zip(batch) {
                *r = mom * *r + (T::one() - mom) * b;
            }
        }
    }
    Ok(())
}
