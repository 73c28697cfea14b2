use rand::Rng;
use ran_tensor::{BatchNorm, Conv2d, Graph, Mode, ParamStore, Scalar, Tensor, Var};

use super::config::NetworkConfig;
use super::{init_bn, RESTORATOR};
use crate::error::Result;
use crate::image::{batch_tensor, unbatch_tensor, ImagePlane};

/// Initial gamma of the second batch norm in each residual block.
pub const RESIDUAL_GAMMA: f64 = 0.01;

/// `[out_c, in_c, 3, 3]` kernels with a centre tap of 1 where `out == in`.
fn delta<T: Scalar>(out_c: usize, in_c: usize) -> Tensor<T> {
    Tensor::from_fn(&[out_c, in_c, 3, 3], |i| {
        let (o, rest) = (i / (in_c * 9), i % (in_c * 9));
        let (c, k) = (rest / 9, rest % 9);
        if o == c && k == 4 {
            T::one()
        } else {
            T::zero()
        }
    })
}

#[derive(Debug, Clone)]
struct ResBlock {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
}

/// Entry conv, a stack of residual blocks, exit conv back to RGB.
#[derive(Debug, Clone)]
pub struct Restorator {
    entry: Conv2d,
    blocks: Vec<ResBlock>,
    exit: Conv2d,
    slope: f64,
}

impl Restorator {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let ch = cfg.restorator.channels;
        let blocks = (0..cfg.restorator.n_blocks)
            .map(|i| {
                let p = format!("{RESTORATOR}/block{i}");
                ResBlock {
                    conv1: Conv2d::new(format!("{p}/conv1"), ch, ch, 1),
                    bn1: BatchNorm::new(format!("{p}/bn1"), ch),
                    conv2: Conv2d::new(format!("{p}/conv2"), ch, ch, 1),
                    bn2: BatchNorm::new(format!("{p}/bn2"), ch),
                }
            })
            .collect();
        Self {
            entry: Conv2d::new(format!("{RESTORATOR}/entry"), 3, ch, 1),
            blocks,
            exit: Conv2d::new(format!("{RESTORATOR}/exit"), ch, 3, 1),
            slope: cfg.slope,
        }
    }

    /// He-initialized, then bent toward a pass-through: the first three entry
    /// channels copy the input, the exit conv reads only those back, and each
    /// residual branch starts at `RESIDUAL_GAMMA` of unit scale.
    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        self.entry.init(store, rng)?;
        for b in &self.blocks {
            b.conv1.init(store, rng)?;
            init_bn(&b.bn1, store)?;
            b.conv2.init(store, rng)?;
            init_bn(&b.bn2, store)?;
            store.insert(b.bn2.gamma_name(), Tensor::full(&[b.bn2.channels], T::from_f64_lossy(RESIDUAL_GAMMA)))?;
        }
        self.exit.init(store, rng)?;
        let w = store.get_mut(&self.entry.weight_name()).expect("entry initialized");
        let rows = delta::<T>(3, 3);
        w.data_mut()[..rows.numel()].copy_from_slice(rows.data());
        store.insert(self.exit.weight_name(), delta(3, self.exit.in_ch))?;
        Ok(())
    }

    /// Linear output; callers clamp at inference.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, mode: Mode) -> Result<Var> {
        let slope = T::from_f64_lossy(self.slope);
        let h = self.entry.forward(g, store, x)?;
        let mut h = g.leaky_relu(h, slope)?;
        for b in &self.blocks {
            let r = b.conv1.forward(g, store, h)?;
            let r = b.bn1.forward(g, store, r, mode)?;
            let r = g.leaky_relu(r, slope)?;
            let r = b.conv2.forward(g, store, r)?;
            let r = b.bn2.forward(g, store, r, mode)?;
            h = g.add(h, r)?;
        }
        Ok(self.exit.forward(g, store, h)?)
    }

    /// Inference-mode restoration, clamped into `[0, 1]`.
    pub fn restore(&self, store: &ParamStore<f32>, patches: &[&ImagePlane]) -> Result<Vec<ImagePlane>> {
        let mut g = Graph::new();
        g.freeze(RESTORATOR);
        let x = g.input(batch_tensor(patches)?);
        let y = self.forward(&mut g, store, x, Mode::Infer)?;
        unbatch_tensor(g.value(y))
    }

    /// Overwrite `store` so the network is an exact pass-through on inputs in
    /// `[0, 1]`: delta kernels on the first three channels of the entry and exit
    /// convs, and zeroed residual branches.
    pub fn set_identity<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        store.insert(self.entry.weight_name(), delta(self.entry.out_ch, 3))?;
        store.insert(self.entry.bias_name(), Tensor::zeros(&[self.entry.out_ch]))?;
        store.insert(self.exit.weight_name(), delta(3, self.exit.in_ch))?;
        store.insert(self.exit.bias_name(), Tensor::zeros(&[3]))?;
        for b in &self.blocks {
            for conv in [&b.conv1, &b.conv2] {
                store.insert(conv.weight_name(), Tensor::zeros(&[conv.out_ch, conv.in_ch, 3, 3]))?;
                store.insert(conv.bias_name(), Tensor::zeros(&[conv.out_ch]))?;
            }
            init_bn(&b.bn1, store)?;
            init_bn(&b.bn2, store)?;
            store.insert(b.bn2.gamma_name(), Tensor::zeros(&[b.bn2.channels]))?;
        }
        Ok(())
    }
}
