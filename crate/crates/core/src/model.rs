//! Problem instance, data synthesis, forward model, loss and quantizer.
//!
//! Weights live on the scaled hypercube `{±1/√n}ⁿ`. Both the activation and
//! the quantizer map zero to the positive side, so `θ(z·w)` with
//! `w = quantize(x)` never disagrees with the sign convention.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Magnitude of every hypercube coordinate, `1/√n`.
pub fn unit(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// Heaviside step `1{x ≥ 0}`.
pub fn heaviside(x: &[f64]) -> Vec<u8> {
    x.iter().map(|&v| u8::from(v >= 0.0)).collect()
}

/// Projection onto the scaled hypercube: `sign(x)/√n` with `sign(0) = +1`.
pub fn quantize(x: &[f64]) -> Vec<f64> {
    let u = unit(x.len());
    x.iter().map(|&v| if v >= 0.0 { u } else { -u }).collect()
}

/// True when every coordinate of `w` is exactly `±1/√n`.
pub fn in_hypercube(w: &[f64]) -> bool {
    let u = unit(w.len());
    w.iter().all(|&v| v == u || v == -u)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `vᵀθ(Zw)` without shape checks; `z` is row-major `m × n`.
#[inline]
pub(crate) fn forward_unchecked(w: &[f64], z: &[f64], v: &[f64]) -> f64 {
    let n = w.len();
    let mut out = 0.0;
    for (row, &vj) in z.chunks_exact(n).zip(v) {
        if dot(row, w) >= 0.0 {
            out += vj;
        }
    }
    out
}

/// Network output `vᵀθ(Zw)` for one sample matrix `z` (row-major, `m × n`).
pub fn forward(w: &[f64], z: &[f64], v: &[f64]) -> Result<f64> {
    if w.is_empty() || v.is_empty() || z.len() != v.len() * w.len() {
        return Err(Error::invalid(format!(
            "forward: Z has {} entries, expected m*n = {}*{}",
            z.len(),
            v.len(),
            w.len()
        )));
    }
    Ok(forward_unchecked(w, z, v))
}

/// Ground truth and fixed second layer of the teacher network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    m: usize,
    n: usize,
    v: Vec<f64>,
    w_star: Vec<f64>,
}

impl NetworkSpec {
    /// Validates `v ≠ 0` and `w_star ∈ {±1/√n}ⁿ` (entries within 1e-12 are
    /// snapped to the exact hypercube value).
    pub fn new(v: Vec<f64>, w_star: Vec<f64>) -> Result<Self> {
        let (m, n) = (v.len(), w_star.len());
        if m == 0 || n == 0 {
            return Err(Error::invalid("network needs m >= 1 and n >= 1"));
        }
        if v.iter().all(|&x| x == 0.0) {
            return Err(Error::invalid(
                "second-layer weights v must not be all zero",
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("second-layer weights must be finite"));
        }
        let u = unit(n);
        let mut snapped = Vec::with_capacity(n);
        for (j, &x) in w_star.iter().enumerate() {
            if (x - u).abs() <= 1e-12 {
                snapped.push(u);
            } else if (x + u).abs() <= 1e-12 {
                snapped.push(-u);
            } else {
                return Err(Error::invalid(format!(
                    "w_star[{j}] = {x} is not ±1/sqrt({n})"
                )));
            }
        }
        Ok(Self {
            m,
            n,
            v,
            w_star: snapped,
        })
    }

    /// `v` with i.i.d. standard Gaussian entries, `w_star` uniform on the hypercube.
    pub fn random<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::invalid("network needs m >= 1 and n >= 1"));
        }
        let v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let u = unit(n);
        let w_star = (0..n)
            .map(|_| if rng.gen::<bool>() { u } else { -u })
            .collect();
        Self::new(v, w_star)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn v_norm_sq(&self) -> f64 {
        self.v.iter().map(|x| x * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    Gaussian { sigma: f64 },
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "noise sigma must be >= 0, got {sigma}"
            )));
        }
        Ok(NoiseSpec::Gaussian { sigma })
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { sigma } => sigma,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

/// `N` labelled samples `(Z⁽ⁱ⁾, y⁽ⁱ⁾)` with `y⁽ⁱ⁾ = vᵀθ(Z⁽ⁱ⁾w*) + ξ⁽ⁱ⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    spec: NetworkSpec,
    samples: Vec<f64>,
    noises: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from stored samples (row-major, `N·m·n` values) and
    /// noise draws; labels are derived.
    pub fn from_parts(spec: NetworkSpec, samples: Vec<f64>, noises: Vec<f64>) -> Result<Self> {
        let per = spec.m * spec.n;
        if noises.is_empty() || samples.len() != noises.len() * per {
            return Err(Error::invalid(format!(
                "dataset: {} sample entries for {} noises, expected {} per sample",
                samples.len(),
                noises.len(),
                per
            )));
        }
        let labels = samples
            .chunks_exact(per)
            .zip(&noises)
            .map(|(z, &xi)| forward_unchecked(&spec.w_star, z, &spec.v) + xi)
            .collect();
        Ok(Self {
            spec,
            samples,
            noises,
            labels,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Number of samples `N`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sample matrix `Z⁽ⁱ⁾`, row-major `m × n`.
    pub fn sample(&self, i: usize) -> &[f64] {
        let per = self.spec.m * self.spec.n;
        &self.samples[i * per..(i + 1) * per]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn noises(&self) -> &[f64] {
        &self.noises
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

/// Draws `N` standard Gaussian sample matrices followed by `N` noise values
/// from the stream keyed by `seed`.
pub fn synthesize_dataset(
    spec: &NetworkSpec,
    n_samples: usize,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::invalid("dataset needs N >= 1"));
    }
    let mut rng = rng::stream(seed, &[rng::tag::DATA]);
    let total = n_samples * spec.m * spec.n;
    let samples: Vec<f64> = (0..total).map(|_| rng.sample(StandardNormal)).collect();
    let noises: Vec<f64> = (0..n_samples).map(|_| noise.draw(&mut rng)).collect();
    Dataset::from_parts(spec.clone(), samples, noises)
}

/// Loss and surrogate gradient at one point, computed in a single pass.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Evaluation {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

/// One fixed-order pass over samples `i = 0..N`: accumulates the squared
/// residuals and, when `with_gradient`, `Σᵢ Z⁽ⁱ⁾ᵀ(θ(Z⁽ⁱ⁾w)⊙v)·rᵢ`.
pub(crate) fn evaluate(w: &[f64], data: &Dataset, with_gradient: bool) -> Evaluation {
    let spec = &data.spec;
    let (m, n) = (spec.m, spec.n);
    let mut active = vec![false; m];
    let mut gradient = vec![0.0; if with_gradient { n } else { 0 }];
    let mut loss = 0.0;
    for (z, &y) in data.samples.chunks_exact(m * n).zip(&data.labels) {
        let mut out = 0.0;
        for ((row, &vj), a) in z.chunks_exact(n).zip(&spec.v).zip(active.iter_mut()) {
            *a = dot(row, w) >= 0.0;
            if *a {
                out += vj;
            }
        }
        let r = out - y;
        loss += r * r;
        if with_gradient && r != 0.0 {
            for ((row, &vj), &a) in z.chunks_exact(n).zip(&spec.v).zip(&active) {
                if a {
                    let c = vj * r;
                    for (g, &zk) in gradient.iter_mut().zip(row) {
                        *g += c * zk;
                    }
                }
            }
        }
    }
    let count = data.len() as f64;
    for g in &mut gradient {
        *g /= count;
    }
    Evaluation {
        loss: loss / (2.0 * count),
        gradient,
    }
}

/// Empirical risk `(1/2N)·Σᵢ (vᵀθ(Z⁽ⁱ⁾w) − y⁽ⁱ⁾)²`.
pub fn empirical_loss(w: &[f64], data: &Dataset) -> Result<f64> {
    if w.len() != data.spec.n {
        return Err(Error::invalid(format!(
            "loss: w has length {}, expected {}",
            w.len(),
            data.spec.n
        )));
    }
    Ok(evaluate(w, data, false).loss)
}
