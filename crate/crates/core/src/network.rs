//! Sigmoid feed-forward networks, sparse denoising autoencoders and greedy
//! layerwise stacking.
//!
//! Samples are rows. Layer `l` maps `a_l` (m x s_l) to
//! `a_{l+1} = sigmoid(a_l W_l^T + b_l)` with `W_l` of shape s_{l+1} x s_l.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{self, Minimum, OptimizerConfig};
use crate::seed;

/// Clamp applied to observed mean activations before the KL penalty.
pub const RHO_HAT_CLAMP: f64 = 1e-8;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Plain row-major form used for serialization.
#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl From<Network> for NetworkRepr {
    fn from(net: Network) -> Self {
        NetworkRepr {
            weights: net.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: net.biases.iter().map(|b| b.to_vec()).collect(),
            layer_sizes: net.layer_sizes,
        }
    }
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(r: NetworkRepr) -> Result<Self> {
        if r.layer_sizes.len() < 2 || r.weights.len() != r.layer_sizes.len() - 1 || r.biases.len() != r.weights.len()
        {
            return Err(Error::Format("layer count does not match parameter arrays".into()));
        }
        let mut weights = Vec::with_capacity(r.weights.len());
        for (l, w) in r.weights.into_iter().enumerate() {
            let shape = (r.layer_sizes[l + 1], r.layer_sizes[l]);
            weights.push(
                Array2::from_shape_vec(shape, w)
                    .map_err(|_| Error::Format(format!("weight matrix {} has the wrong size", l + 1)))?,
            );
        }
        let biases = r.biases.into_iter().map(Array1::from_vec).collect();
        Network::from_parts(r.layer_sizes, weights, biases)
    }
}

impl Network {
    pub fn from_parts(layer_sizes: Vec<usize>, weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Shape("a network needs at least two layers".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Shape("layer sizes must be positive".into()));
        }
        if weights.len() != layer_sizes.len() - 1 || biases.len() != weights.len() {
            return Err(Error::Shape("parameter count does not match layer count".into()));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.dim() != (layer_sizes[l + 1], layer_sizes[l]) || b.len() != layer_sizes[l + 1] {
                return Err(Error::Shape(format!("layer {} parameters have the wrong shape", l + 1)));
            }
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIntermediate {
                    layer: l + 1,
                    what: "parameter".into(),
                });
            }
        }
        Ok(Network {
            layer_sizes,
            weights,
            biases,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        let weights = layer_sizes.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect();
        let biases = layer_sizes[1..].iter().map(|&s| Array1::zeros(s)).collect();
        Network::from_parts(layer_sizes.to_vec(), weights, biases)
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn random(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Network::zeros(layer_sizes)?;
        let mut rng = seed::rng(seed);
        for w in &mut net.weights {
            let r = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-r..=r));
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Parameters as one vector: per layer, `W` row-major then `b`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut it = flat.iter();
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v = *it.next().unwrap());
        }
    }

    pub fn with_flat(&self, flat: &[f64]) -> Network {
        let mut net = self.clone();
        net.set_flat(flat);
        net
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Activations of every layer, starting with the input itself.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layer_sizes.len());
        acts.push(x.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(&w.t());
            z += b;
            z.mapv_inplace(sigmoid);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIntermediate {
                    layer: l + 2,
                    what: "activation".into(),
                });
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Last-layer activations.
    pub fn encode(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x)?.pop().expect("at least input layer"))
    }

    /// First `layers + 1` layers as a network.
    pub fn truncate(&self, layers: usize) -> Result<Network> {
        if layers == 0 || layers >= self.layer_sizes.len() {
            return Err(Error::OutOfRange(format!("cannot keep {layers} weight layers")));
        }
        Network::from_parts(
            self.layer_sizes[..=layers].to_vec(),
            self.weights[..layers].to_vec(),
            self.biases[..layers].to_vec(),
        )
    }

    /// Squared-error cost `(1/m) sum_i 1/2 ||a_L(x_i) - t_i||^2` against
    /// per-sample targets for the last layer, and its gradient with respect
    /// to every parameter (same layout as [`Network::to_flat`]).
    pub fn target_cost_grad(&self, x: &Array2<f64>, targets: &Array2<f64>) -> Result<(f64, Vec<f64>)> {
        if targets.dim() != (x.nrows(), self.output_width()) {
            return Err(Error::Shape(format!(
                "targets are {:?}, expected ({}, {})",
                targets.dim(),
                x.nrows(),
                self.output_width()
            )));
        }
        let m = x.nrows().max(1) as f64;
        let acts = self.forward(x)?;
        let out = acts.last().unwrap();
        let diff = out - targets;
        let cost = 0.5 * diff.iter().map(|v| v * v).sum::<f64>() / m;
        let mut delta = diff * &out.mapv(|a| a * (1.0 - a));
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.weights.len());
        for l in (0..self.weights.len()).rev() {
            let gw = delta.t().dot(&acts[l]) / m;
            let gb = delta.sum_axis(Axis(0)) / m;
            if l > 0 {
                let back = delta.dot(&self.weights[l]);
                delta = back * &acts[l].mapv(|a| a * (1.0 - a));
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        Ok((cost, flatten_grads(&grads)))
    }
}

fn flatten_grads(grads: &[(Array2<f64>, Array1<f64>)]) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in grads {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    /// Desired mean hidden activation.
    pub rho: f64,
    pub beta_sparse: f64,
    pub lambda: f64,
    /// Additive Gaussian input noise at this signal-to-noise ratio; `None`
    /// disables denoising.
    pub denoise_snr_db: Option<f64>,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            rho: 0.1,
            beta_sparse: 3.0,
            lambda: 1e-4,
            denoise_snr_db: Some(10.0),
        }
    }
}

impl AeConfig {
    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            errors.push(format!("{ctx}.rho must lie in (0, 1)"));
        }
        if !(self.beta_sparse >= 0.0) {
            errors.push(format!("{ctx}.beta_sparse must be >= 0"));
        }
        if !(self.lambda >= 0.0) {
            errors.push(format!("{ctx}.lambda must be >= 0"));
        }
        if self.denoise_snr_db.is_some_and(|s| !s.is_finite()) {
            errors.push(format!("{ctx}.denoise_snr_db must be finite"));
        }
    }
}

/// `KL(rho || rho_hat)` for Bernoulli means.
pub fn kl_bernoulli(rho: f64, rho_hat: f64) -> f64 {
    rho * (rho / rho_hat).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).ln()
}

/// Observed mean activation of each hidden unit.
pub fn mean_activation(hidden: &Array2<f64>) -> Array1<f64> {
    hidden.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(hidden.ncols()))
}

/// Sparse autoencoder cost and gradient.
///
/// `ae` must have exactly one hidden layer. The cost is the mean half
/// squared reconstruction error of `input` against `target`, plus
/// `lambda / 2` times the squared weights (biases excluded), plus `beta`
/// times the summed KL divergence between `rho` and each hidden unit's mean
/// activation (clamped to `[1e-8, 1 - 1e-8]`; the penalty is flat outside).
pub fn ae_cost_grad(ae: &Network, input: &Array2<f64>, target: &Array2<f64>, cfg: &AeConfig) -> Result<(f64, Vec<f64>)> {
    if ae.layer_sizes.len() != 3 {
        return Err(Error::Shape(format!(
            "autoencoder needs exactly one hidden layer, got {} layers",
            ae.layer_sizes.len()
        )));
    }
    if target.dim() != (input.nrows(), ae.output_width()) {
        return Err(Error::Shape(format!(
            "target is {:?}, expected ({}, {})",
            target.dim(),
            input.nrows(),
            ae.output_width()
        )));
    }
    let m = input.nrows().max(1) as f64;
    let acts = ae.forward(input)?;
    let (hidden, out) = (&acts[1], &acts[2]);
    let (w1, w2) = (&ae.weights[0], &ae.weights[1]);

    let diff = out - target;
    let mut cost = 0.5 * diff.iter().map(|v| v * v).sum::<f64>() / m;
    cost += 0.5 * cfg.lambda * (w1.iter().chain(w2.iter()).map(|v| v * v).sum::<f64>());

    let rho_hat = mean_activation(hidden);
    let lo = RHO_HAT_CLAMP;
    let hi = 1.0 - RHO_HAT_CLAMP;
    let mut sparse_grad = Array1::zeros(rho_hat.len());
    if cfg.beta_sparse > 0.0 {
        for (g, &r) in sparse_grad.iter_mut().zip(&rho_hat) {
            let rc = r.clamp(lo, hi);
            cost += cfg.beta_sparse * kl_bernoulli(cfg.rho, rc);
            if r > lo && r < hi {
                *g = cfg.beta_sparse * (-cfg.rho / rc + (1.0 - cfg.rho) / (1.0 - rc));
            }
        }
    }
    if !cost.is_finite() {
        return Err(Error::NonFiniteIntermediate {
            layer: 3,
            what: "cost".into(),
        });
    }

    let delta3 = diff * &out.mapv(|a| a * (1.0 - a));
    let mut back = delta3.dot(w2);
    back += &sparse_grad;
    let delta2 = back * &hidden.mapv(|a| a * (1.0 - a));

    let mut gw2 = delta3.t().dot(hidden) / m;
    gw2.scaled_add(cfg.lambda, w2);
    let gb2 = delta3.sum_axis(Axis(0)) / m;
    let mut gw1 = delta2.t().dot(input) / m;
    gw1.scaled_add(cfg.lambda, w1);
    let gb1 = delta2.sum_axis(Axis(0)) / m;
    Ok((cost, flatten_grads(&[(gw1, gb1), (gw2, gb2)])))
}

/// Adds zero-mean Gaussian noise whose per-column variance is the column's
/// mean signal power divided by `10^(snr_db / 10)`. Zero-power columns are
/// left untouched.
pub fn corrupt(x: &Array2<f64>, snr_db: f64, seed: u64) -> Array2<f64> {
    let mut out = x.clone();
    let ratio = 10f64.powf(snr_db / 10.0);
    let mut rng = seed::rng(seed);
    let m = x.nrows().max(1) as f64;
    for mut col in out.columns_mut() {
        let power = col.iter().map(|v| v * v).sum::<f64>() / m;
        let sd = (power / ratio).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            continue;
        }
        let noise = Normal::new(0.0, sd).expect("positive finite sd");
        col.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    out
}

/// Trains a single-hidden-layer autoencoder to reconstruct `x`, from a
/// corrupted copy when denoising is enabled. Returns the network and the
/// optimizer record.
pub fn train_ae_traced(
    x: &Array2<f64>,
    hidden: usize,
    cfg: &AeConfig,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<(Network, Minimum)> {
    if hidden == 0 {
        return Err(Error::InvalidArgument("hidden layer width must be >= 1".into()));
    }
    let n = x.ncols();
    let init = Network::random(&[n, hidden, n], seed::derive(seed, "ae_init", 0))?;
    let input = match cfg.denoise_snr_db {
        Some(snr) => corrupt(x, snr, seed::derive(seed, "ae_noise", 0)),
        None => x.clone(),
    };
    let mut scratch = init.clone();
    let objective = |flat: &[f64], grad: &mut [f64]| -> f64 {
        scratch.set_flat(flat);
        match ae_cost_grad(&scratch, &input, x, cfg) {
            Ok((c, g)) => {
                grad.copy_from_slice(&g);
                c
            }
            Err(_) => f64::NAN,
        }
    };
    let min = optim::minimize(objective, &init.to_flat(), opt)?;
    if !min.cost.is_finite() {
        return Err(Error::Numerical("autoencoder cost diverged".into()));
    }
    let ae = init.with_flat(&min.x);
    Ok((ae, min))
}

pub fn train_ae(x: &Array2<f64>, hidden: usize, cfg: &AeConfig, opt: &OptimizerConfig, seed: u64) -> Result<Network> {
    train_ae_traced(x, hidden, cfg, opt, seed).map(|(ae, _)| ae)
}

/// Greedy layerwise pretraining: one autoencoder per hidden layer, each
/// trained on the codes of the previous one. Returns the stacked encoder.
pub fn stack(x: &Array2<f64>, hidden_sizes: &[usize], cfg: &AeConfig, opt: &OptimizerConfig, seed: u64) -> Result<Network> {
    if hidden_sizes.is_empty() {
        return Err(Error::InvalidArgument("at least one hidden layer is required".into()));
    }
    let mut sizes = vec![x.ncols()];
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut codes = x.clone();
    for (l, &h) in hidden_sizes.iter().enumerate() {
        let ae = train_ae(&codes, h, cfg, opt, seed::derive(seed, "stack_layer", l as u64))?;
        let encoder = ae.truncate(1)?;
        codes = encoder.encode(&codes)?;
        sizes.push(h);
        weights.push(encoder.weights[0].clone());
        biases.push(encoder.biases[0].clone());
    }
    Network::from_parts(sizes, weights, biases)
}
