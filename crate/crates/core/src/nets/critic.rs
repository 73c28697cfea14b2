use rand::Rng;
use ran_tensor::{BatchNorm, Conv2d, Dense, Graph, Mode, ParamStore, Scalar, Var};

use super::config::NetworkConfig;
use super::{init_bn, DISCRIMINATOR, EVALUATOR};
use crate::error::Result;

/// Strided conv stages (conv, L-ReLU, BN) followed by global average pooling.
#[derive(Debug, Clone)]
pub struct Trunk {
    stages: Vec<(Conv2d, BatchNorm)>,
    slope: f64,
}

impl Trunk {
    pub fn new(prefix: &str, channels: &[usize], slope: f64) -> Self {
        let mut in_ch = 3;
        let stages = channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let stride = if i % 2 == 0 { 1 } else { 2 };
                let conv = Conv2d::new(format!("{prefix}/conv{i}"), in_ch, c, stride);
                in_ch = c;
                (conv, BatchNorm::new(format!("{prefix}/bn{i}"), c))
            })
            .collect();
        Self { stages, slope }
    }

    pub fn out_channels(&self) -> usize {
        self.stages.last().map_or(3, |(c, _)| c.out_ch)
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        for (conv, bn) in &self.stages {
            conv.init(store, rng)?;
            init_bn(bn, store)?;
        }
        Ok(())
    }

    /// `[n, 3, h, w] -> [n, out_channels]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, mode: Mode) -> Result<Var> {
        let slope = T::from_f64_lossy(self.slope);
        let mut h = x;
        for (conv, bn) in &self.stages {
            h = conv.forward(g, store, h)?;
            h = g.leaky_relu(h, slope)?;
            h = bn.forward(g, store, h, mode)?;
        }
        Ok(g.global_avg_pool(h)?)
    }
}

fn dense_stack(prefix: &str, inputs: usize, widths: &[usize]) -> Vec<Dense> {
    let mut fan_in = inputs;
    widths
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let d = Dense::new(format!("{prefix}{i}"), fan_in, w);
            fan_in = w;
            d
        })
        .collect()
}

/// Dense layers with L-ReLU between them and a linear last layer.
fn dense_forward<T: Scalar>(layers: &[Dense], slope: f64, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
    let mut h = x;
    for (i, d) in layers.iter().enumerate() {
        h = d.forward(g, store, h)?;
        if i + 1 < layers.len() {
            h = g.leaky_relu(h, T::from_f64_lossy(slope))?;
        }
    }
    Ok(h)
}

/// Wasserstein critic: unbounded scalar per patch.
#[derive(Debug, Clone)]
pub struct Discriminator {
    trunk: Trunk,
    fcs: Vec<Dense>,
    slope: f64,
}

impl Discriminator {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let trunk = Trunk::new(
            &format!("{DISCRIMINATOR}/trunk"),
            &cfg.discriminator.stage_channels,
            cfg.slope,
        );
        let fcs = dense_stack(&format!("{DISCRIMINATOR}/fc"), trunk.out_channels(), &cfg.discriminator.fc_widths);
        Self {
            trunk,
            fcs,
            slope: cfg.slope,
        }
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        self.trunk.init(store, rng)?;
        for d in &self.fcs {
            d.init(store, rng)?;
        }
        Ok(())
    }

    /// Name of the final dense weight, the layer that sets the output scale.
    pub fn last_weight_name(&self) -> String {
        self.fcs.last().expect("at least one dense layer").weight_name()
    }

    /// `[n, 3, h, w] -> [n, 1]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, mode: Mode) -> Result<Var> {
        let f = self.trunk.forward(g, store, x, mode)?;
        dense_forward(&self.fcs, self.slope, g, store, f)
    }
}

/// Graph handles of one evaluator pass over `n` patch pairs.
#[derive(Debug, Clone, Copy)]
pub struct EvalOutput {
    /// `[n, fused_width]`.
    pub fused: Var,
    /// `[n, 1]` quality scores.
    pub s: Var,
    /// `[n, 1]` strictly positive weights.
    pub w: Var,
}

pub const WEIGHT_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Evaluator {
    trunk_d: Trunk,
    /// `None` when both inputs share `trunk_d`.
    trunk_r: Option<Trunk>,
    score_head: Vec<Dense>,
    weight_head: Vec<Dense>,
    slope: f64,
}

impl Evaluator {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let ch = &cfg.discriminator.stage_channels;
        let (trunk_d, trunk_r) = if cfg.evaluator.shared_trunk {
            (Trunk::new(&format!("{EVALUATOR}/trunk"), ch, cfg.slope), None)
        } else {
            (
                Trunk::new(&format!("{EVALUATOR}/trunk_d"), ch, cfg.slope),
                Some(Trunk::new(&format!("{EVALUATOR}/trunk_r"), ch, cfg.slope)),
            )
        };
        let fused = 2 * trunk_d.out_channels();
        Self {
            score_head: dense_stack(&format!("{EVALUATOR}/score"), fused, &cfg.evaluator.head_widths),
            weight_head: dense_stack(&format!("{EVALUATOR}/weight"), fused, &cfg.evaluator.head_widths),
            trunk_d,
            trunk_r,
            slope: cfg.slope,
        }
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        self.trunk_d.init(store, rng)?;
        if let Some(t) = &self.trunk_r {
            t.init(store, rng)?;
        }
        for d in self.score_head.iter().chain(&self.weight_head) {
            d.init(store, rng)?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        distorted: Var,
        restored: Var,
        mode: Mode,
    ) -> Result<EvalOutput> {
        let (fd, fr) = match &self.trunk_r {
            None => {
                // One pass over the stacked pair keeps a single set of batch statistics.
                let n = g.value(distorted).dims()[0];
                let both = g.concat_batch(distorted, restored)?;
                let f = self.trunk_d.forward(g, store, both, mode)?;
                (g.slice_batch(f, 0, n)?, g.slice_batch(f, n, n)?)
            }
            Some(tr) => (
                self.trunk_d.forward(g, store, distorted, mode)?,
                tr.forward(g, store, restored, mode)?,
            ),
        };
        let fused = g.concat_channels(fd, fr)?;
        let s = dense_forward(&self.score_head, self.slope, g, store, fused)?;
        let w = dense_forward(&self.weight_head, self.slope, g, store, fused)?;
        let w = g.softplus(w)?;
        let w = g.add_scalar(w, T::from_f64_lossy(WEIGHT_FLOOR))?;
        Ok(EvalOutput { fused, s, w })
    }
}
