use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ran_tensor::{Conv2d, Graph, ParamStore, Scalar, Var};

use super::config::NetworkConfig;
use super::FEATNET;
use crate::error::Result;

/// Frozen random feature extractor with five tap points, each followed by a
/// stride-2 conv that halves the resolution for the next stage.
#[derive(Debug, Clone)]
pub struct FeatureNet {
    taps: Vec<Conv2d>,
    downs: Vec<Conv2d>,
    slope: f64,
}

impl FeatureNet {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let mut in_ch = 3;
        let (mut taps, mut downs) = (Vec::new(), Vec::new());
        for (i, &c) in cfg.feature_net.channels.iter().enumerate() {
            taps.push(Conv2d::new(format!("{FEATNET}/stage{i}/conv"), in_ch, c, 1));
            downs.push(Conv2d::new(format!("{FEATNET}/stage{i}/down"), c, c, 2));
            in_ch = c;
        }
        Self {
            taps,
            downs,
            slope: cfg.slope,
        }
    }

    /// Network plus its weights, drawn once from the configured seed.
    pub fn build<T: Scalar>(cfg: &NetworkConfig) -> Result<(Self, ParamStore<T>)> {
        let net = Self::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.feature_net.seed);
        let mut store = ParamStore::new();
        for (t, d) in net.taps.iter().zip(&net.downs) {
            t.init(&mut store, &mut rng)?;
            d.init(&mut store, &mut rng)?;
        }
        Ok((net, store))
    }

    /// The five tap activations. The weights enter the graph as constants.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Vec<Var>> {
        g.freeze(FEATNET);
        let slope = T::from_f64_lossy(self.slope);
        let mut out = Vec::with_capacity(self.taps.len());
        let mut h = x;
        for (i, (tap, down)) in self.taps.iter().zip(&self.downs).enumerate() {
            let t = tap.forward(g, store, h)?;
            let t = g.leaky_relu(t, slope)?;
            out.push(t);
            // The last stage's downsampling feeds nothing.
            if i + 1 < self.taps.len() {
                h = down.forward(g, store, t)?;
            }
        }
        Ok(out)
    }
}
