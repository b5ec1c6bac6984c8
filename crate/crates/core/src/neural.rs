//! Fully connected tanh networks over a flat parameter vector.
//!
//! Layout: for each layer, the `n_out × n_in` weight matrix row-major, then
//! its `n_out` biases. Hidden layers use tanh, the output layer is affine.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<MlpSpec> {
        if layer_sizes.len() < 3 || layer_sizes.contains(&0) {
            return Err(Error::invalid(
                "network",
                format!("need input, at least one hidden and an output layer, got {layer_sizes:?}"),
            ));
        }
        Ok(MlpSpec { layer_sizes })
    }

    /// `hidden` layers between `n_in` inputs and `n_out` outputs.
    pub fn with_hidden(n_in: usize, hidden: &[usize], n_out: usize) -> Result<MlpSpec> {
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(n_out);
        MlpSpec::new(sizes)
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// `Σ (n_in·n_out + n_out)`.
    pub fn n_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offset of layer `l`'s weights in the flat vector.
    pub fn offset(&self, l: usize) -> usize {
        self.layer_sizes[..l + 1]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Parses an architecture string like `2x300` or `64,32` into hidden sizes.
pub fn parse_arch(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::invalid("arch", format!("expected DEPTHxWIDTH or comma-separated widths, got {s:?}"));
    let s = s.trim();
    let sizes: Vec<usize> = if let Some((d, w)) = s.split_once(['x', 'X']) {
        let d: usize = d.trim().parse().map_err(|_| bad())?;
        let w: usize = w.trim().parse().map_err(|_| bad())?;
        vec![w; d]
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?
    };
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(bad());
    }
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> MlpParams {
        MlpParams {
            params: vec![0.0; spec.n_params()],
            spec: spec.clone(),
        }
    }

    /// Xavier-uniform weights with limit `√(6/(n_in+n_out))`, zero biases.
    pub fn init(spec: &MlpSpec, seed: u64) -> MlpParams {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let mut params = Vec::with_capacity(spec.n_params());
        for w in spec.layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                params.push(rng.gen_range(-limit..=limit));
            }
            params.extend(std::iter::repeat(0.0).take(n_out));
        }
        MlpParams {
            spec: spec.clone(),
            params,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn unflatten(spec: &MlpSpec, flat: &[f64]) -> Result<MlpParams> {
        if flat.len() != spec.n_params() {
            return Err(Error::invalid(
                "network parameters",
                format!("expected {} values, got {}", spec.n_params(), flat.len()),
            ));
        }
        Ok(MlpParams {
            spec: spec.clone(),
            params: flat.to_vec(),
        })
    }

    /// Weight matrix of layer `l`, row-major `n_out × n_in`.
    pub fn weights(&self, l: usize) -> &[f64] {
        let (o, n_in, n_out) = self.layer_dims(l);
        &self.params[o..o + n_in * n_out]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let (o, n_in, n_out) = self.layer_dims(l);
        &mut self.params[o..o + n_in * n_out]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let (o, n_in, n_out) = self.layer_dims(l);
        &self.params[o + n_in * n_out..o + n_in * n_out + n_out]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let (o, n_in, n_out) = self.layer_dims(l);
        &mut self.params[o + n_in * n_out..o + n_in * n_out + n_out]
    }

    fn layer_dims(&self, l: usize) -> (usize, usize, usize) {
        let s = &self.spec.layer_sizes;
        (self.spec.offset(l), s[l], s[l + 1])
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        forward(&self.spec, &self.params, x)
    }
}

/// Network output for input `x` with flat parameters `p`.
pub fn forward<R: Real>(spec: &MlpSpec, p: &[R], x: &[R]) -> Vec<R> {
    assert_eq!(p.len(), spec.n_params(), "parameter count mismatch");
    assert_eq!(x.len(), spec.n_inputs(), "input length mismatch");
    let mut h: Vec<R> = x.to_vec();
    let mut o = 0;
    let last = spec.n_layers() - 1;
    for (l, w) in spec.layer_sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &p[o..o + n_in * n_out];
        let bias = &p[o + n_in * n_out..o + n_in * n_out + n_out];
        let z: Vec<R> = (0..n_out)
            .map(|j| R::dot(&weights[j * n_in..(j + 1) * n_in], &h) + bias[j])
            .collect();
        h = if l == last { z } else { z.into_iter().map(R::tanh).collect() };
        o += n_in * n_out + n_out;
    }
    h
}
