use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;
use crate::world::sigmoid;

/// Feature-masked feedforward scorer: tanh hidden layers, linear output.
///
/// Parameters live in one flat vector, layer by layer, each layer stored as
/// its weight matrix (row-major, `out x in`) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    layer_dims: Vec<usize>,
    mask: Vec<bool>,
    params: Vec<f64>,
    active: Vec<usize>,
}

/// Per-layer activations kept between forward and backward passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Predictor {
    pub fn zeros(layer_dims: Vec<usize>, mask: Vec<bool>) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::config("model.layer_dims", "need at least input and output"));
        }
        if layer_dims.contains(&0) {
            return Err(Error::config("model.layer_dims", "dimensions must be positive"));
        }
        if *layer_dims.last().unwrap() != 1 {
            return Err(Error::config("model.layer_dims", "output dimension must be 1"));
        }
        if mask.len() != layer_dims[0] {
            return Err(Error::config(
                "model.mask",
                format!("mask has {} entries, input has {}", mask.len(), layer_dims[0]),
            ));
        }
        let count = layer_dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        let active = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        Ok(Predictor {
            layer_dims,
            mask,
            params: vec![0.0; count],
            active,
        })
    }

    /// Gaussian init with variance `1 / fan_in`; masked input columns and all
    /// biases start at zero.
    pub fn init(layer_dims: Vec<usize>, mask: Vec<bool>, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(layer_dims, mask)?;
        let mut rng = rng::stream(seed, "predictor-init", 0);
        let mut offset = 0;
        for l in 0..p.layer_dims.len() - 1 {
            let (fan_in, fan_out) = (p.layer_dims[l], p.layer_dims[l + 1]);
            let effective = if l == 0 { p.active.len().max(1) } else { fan_in };
            let sd = 1.0 / (effective as f64).sqrt();
            for j in 0..fan_out {
                for i in 0..fan_in {
                    let w: f64 = StandardNormal.sample(&mut rng);
                    if l > 0 || p.mask[i] {
                        p.params[offset + j * fan_in + i] = sd * w;
                    }
                }
            }
            offset += fan_out * fan_in + fan_out;
        }
        Ok(p)
    }

    pub fn from_parts(layer_dims: Vec<usize>, mask: Vec<bool>, params: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(layer_dims, mask)?;
        if params.len() != p.params.len() {
            return Err(Error::data(format!(
                "expected {} parameters, got {}",
                p.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite parameter"));
        }
        p.params = params;
        Ok(p)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn mask_fraction(&self) -> f64 {
        self.active.len() as f64 / self.mask.len() as f64
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, phi: &[f64]) -> f64 {
        let mut ws = Workspace::default();
        self.forward_with(phi, &mut ws)
    }

    pub fn predict_prob(&self, phi: &[f64]) -> f64 {
        sigmoid(self.forward(phi))
    }

    /// Forward pass that keeps activations in `ws` for [`Predictor::backward`].
    pub fn forward_with(&self, phi: &[f64], ws: &mut Workspace) -> f64 {
        self.forward_impl(phi, ws, true)
    }

    /// Logit with the output bias left out. Losses that only see score
    /// differences use this so the bias cancels exactly rather than up to
    /// rounding.
    pub fn forward_unbiased_with(&self, phi: &[f64], ws: &mut Workspace) -> f64 {
        self.forward_impl(phi, ws, false)
    }

    /// Index of the output bias in [`Predictor::params`].
    pub fn output_bias_index(&self) -> usize {
        self.params.len() - 1
    }

    fn forward_impl(&self, phi: &[f64], ws: &mut Workspace, output_bias: bool) -> f64 {
        debug_assert_eq!(phi.len(), self.input_dim());
        let layers = self.layer_dims.len() - 1;
        ws.acts.resize_with(layers, Vec::new);
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &self.params[offset..offset + fan_out * fan_in];
            let b = &self.params[offset + fan_out * fan_in..offset + fan_out * fan_in + fan_out];
            let (prev, rest) = ws.acts.split_at_mut(l);
            let out = &mut rest[0];
            out.clear();
            for j in 0..fan_out {
                let row = &w[j * fan_in..(j + 1) * fan_in];
                let bias = if l + 1 < layers || output_bias { b[j] } else { 0.0 };
                let z = bias
                    + if l == 0 {
                        self.active.iter().map(|&i| row[i] * phi[i]).sum::<f64>()
                    } else {
                        row.iter().zip(&prev[l - 1]).map(|(a, x)| a * x).sum::<f64>()
                    };
                out.push(if l + 1 < layers { z.tanh() } else { z });
            }
            offset += fan_out * fan_in + fan_out;
        }
        ws.acts[layers - 1][0]
    }

    /// Accumulate `dlogit * d(logit)/d(params)` into `grad`, using the
    /// activations left in `ws` by the last [`Predictor::forward_with`] on `phi`.
    pub fn backward(&self, phi: &[f64], dlogit: f64, ws: &mut Workspace, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.layer_dims.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.layer_dims[l + 1] * self.layer_dims[l] + self.layer_dims[l + 1];
        }
        ws.delta.clear();
        ws.delta.push(dlogit);
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let base = offsets[l];
            for j in 0..fan_out {
                let d = ws.delta[j];
                grad[base + fan_out * fan_in + j] += d;
                if d == 0.0 {
                    continue;
                }
                let g_row = &mut grad[base + j * fan_in..base + (j + 1) * fan_in];
                if l == 0 {
                    for &i in &self.active {
                        g_row[i] += d * phi[i];
                    }
                } else {
                    for (g, a) in g_row.iter_mut().zip(&ws.acts[l - 1]) {
                        *g += d * a;
                    }
                }
            }
            if l > 0 {
                let w = &self.params[base..base + fan_out * fan_in];
                ws.delta_prev.clear();
                ws.delta_prev.resize(fan_in, 0.0);
                for j in 0..fan_out {
                    let d = ws.delta[j];
                    for (acc, wji) in ws.delta_prev.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                        *acc += wji * d;
                    }
                }
                for (acc, a) in ws.delta_prev.iter_mut().zip(&ws.acts[l - 1]) {
                    *acc *= 1.0 - a * a;
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
    }
}

/// Mask keeping the first `round(fraction * dim)` coordinates of a fixed
/// seeded permutation. Masks built from the same `order_seed` are nested:
/// a smaller fraction always selects a subset of a larger one.
pub fn nested_mask(dim: usize, fraction: f64, order_seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config("mask_fraction", format!("{fraction} outside [0, 1]")));
    }
    let keep = (fraction * dim as f64).round() as usize;
    let mut order: Vec<(u64, usize)> = (0..dim)
        .map(|i| (rng::derive_seed(order_seed, "mask-order", i as u64), i))
        .collect();
    order.sort_unstable();
    let mut mask = vec![false; dim];
    for &(_, i) in order.iter().take(keep) {
        mask[i] = true;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_half() {
        let p = Predictor::zeros(vec![3, 4, 1], vec![true; 3]).unwrap();
        assert_eq!(p.forward(&[1.0, -2.0, 0.5]), 0.0);
        assert_eq!(p.predict_prob(&[1.0, -2.0, 0.5]), 0.5);
    }

    #[test]
    fn single_layer_direct_evaluation() {
        let p = Predictor::from_parts(vec![3, 1], vec![true; 3], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.forward(&[2.0, 5.0, -1.0]), 2.0);
        assert!((p.predict_prob(&[2.0, 5.0, -1.0]) - 0.880_797_1).abs() < 1e-7);
    }

    #[test]
    fn all_masked_is_constant() {
        let p = Predictor::init(vec![4, 3, 1], vec![false; 4], 9).unwrap();
        let a = p.forward(&[1.0, 2.0, 3.0, 4.0]);
        let b = p.forward(&[-7.0, 0.0, 0.5, 100.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn masked_coordinate_is_ignored() {
        let mask = vec![true, false, true];
        let p = Predictor::init(vec![3, 5, 2, 1], mask, 4).unwrap();
        let a = p.forward(&[0.3, 1.0, -0.2]);
        let b = p.forward(&[0.3, -50.0, -0.2]);
        assert_eq!(a, b);
    }

    #[test]
    fn shape_validation() {
        assert!(Predictor::zeros(vec![3], vec![true; 3]).is_err());
        assert!(Predictor::zeros(vec![3, 2], vec![true; 3]).is_err());
        assert!(Predictor::zeros(vec![3, 1], vec![true; 2]).is_err());
        assert_eq!(Predictor::zeros(vec![3, 4, 1], vec![true; 3]).unwrap().param_count(), 21);
        assert!(Predictor::from_parts(vec![2, 1], vec![true; 2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn masks_are_nested() {
        let small = nested_mask(50, 0.1, 3).unwrap();
        let med = nested_mask(50, 0.3, 3).unwrap();
        let big = nested_mask(50, 0.5, 3).unwrap();
        assert_eq!(small.iter().filter(|&&m| m).count(), 5);
        assert_eq!(big.iter().filter(|&&m| m).count(), 25);
        for i in 0..50 {
            assert!(!small[i] || med[i]);
            assert!(!med[i] || big[i]);
        }
        assert!(nested_mask(5, 1.5, 0).is_err());
    }
}
