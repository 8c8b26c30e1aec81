//! Isotropic Gaussian mixtures with a fixed, known variance.
//!
//! The free parameter vector is `w = (a_1..a_{K-1}, b_11..b_{K d_c})`: the
//! last mixing ratio is implied by the others and every component mean is
//! listed component by component.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetKind, LabeledPoint};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Points drawn per random substream when sampling in parallel.
pub const SAMPLE_CHUNK: usize = 4096;

/// `ln Σ exp(v)` without overflow or underflow.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln N(x | mean, variance·I)`.
pub fn log_normal(x: &[f64], mean: &[f64], variance: f64) -> f64 {
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * x.len() as f64 * (2.0 * PI * variance).ln() - 0.5 * sq / variance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    mixing: Vec<f64>,
    /// Component means, flattened component by component.
    means: Vec<f64>,
    dim: usize,
    variance: f64,
}

impl GaussianMixture {
    /// Builds and validates a mixture: positive mixing ratios summing to one,
    /// pairwise distinct means of equal length, positive variance.
    pub fn new(mixing: Vec<f64>, means: Vec<Vec<f64>>, variance: f64) -> Result<Self> {
        if mixing.is_empty() {
            return Err(Error::InvalidParams("no components".into()));
        }
        if means.len() != mixing.len() {
            return Err(Error::InvalidParams(format!(
                "{} mixing ratios but {} means",
                mixing.len(),
                means.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::InvalidParams(
                "component means must share a nonzero length".into(),
            ));
        }
        Self::from_parts(mixing, means.concat(), dim, variance)
    }

    fn from_parts(mixing: Vec<f64>, means: Vec<f64>, dim: usize, variance: f64) -> Result<Self> {
        if mixing.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "mixing ratios must be positive: {mixing:?}"
            )));
        }
        let total: f64 = mixing.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("mixing ratios sum to {total}, not 1")));
        }
        if means.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParams("means must be finite".into()));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidParams(format!(
                "variance must be positive, got {variance}"
            )));
        }
        let mix = Self {
            mixing,
            means,
            dim,
            variance,
        };
        for i in 0..mix.k() {
            for j in i + 1..mix.k() {
                if mix.mean(i) == mix.mean(j) {
                    return Err(Error::InvalidParams(format!(
                        "components {} and {} share the same mean",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(mix)
    }

    /// Decodes a `w` vector.
    pub fn from_w(w: &[f64], k: usize, dim: usize, variance: f64) -> Result<Self> {
        let expected = Self::w_dim_for(k, dim);
        if w.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: w.len() });
        }
        let mut mixing: Vec<f64> = w[..k - 1].to_vec();
        mixing.push(1.0 - mixing.iter().sum::<f64>());
        Self::from_parts(mixing, w[k - 1..].to_vec(), dim, variance)
    }

    pub fn w_dim_for(k: usize, dim: usize) -> usize {
        k - 1 + k * dim
    }

    pub fn to_w(&self) -> Vec<f64> {
        let mut w = self.mixing[..self.k() - 1].to_vec();
        w.extend_from_slice(&self.means);
        w
    }

    pub fn k(&self) -> usize {
        self.mixing.len()
    }

    /// Dimension of each component mean.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn w_dim(&self) -> usize {
        Self::w_dim_for(self.k(), self.dim)
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn mixing(&self) -> &[f64] {
        &self.mixing
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn means_flat(&self) -> &[f64] {
        &self.means
    }

    /// Same component densities, different mixing ratios.
    pub fn with_mixing(&self, mixing: Vec<f64>) -> Result<Self> {
        Self::from_parts(mixing, self.means.clone(), self.dim, self.variance)
    }

    pub fn log_component(&self, k: usize, x: &[f64]) -> f64 {
        log_normal(x, self.mean(k), self.variance)
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.k() {
            Err(Error::LabelOutOfRange {
                label: y + 1,
                k: self.k(),
            })
        } else {
            Ok(())
        }
    }

    /// `ln Σ_k a_k N(x | b_k, σ²I)`.
    pub fn logpdf_x(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.k())
            .map(|k| self.mixing[k].ln() + self.log_component(k, x))
            .collect();
        log_sum_exp(&terms)
    }

    /// `ln a_y + ln N(x | b_y, σ²I)`.
    pub fn logpdf_xy(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.mixing[y].ln() + self.log_component(y, x))
    }

    /// Writes the posterior label probabilities into `out` and returns `ln p(x)`.
    pub fn responsibilities_into(&self, x: &[f64], out: &mut [f64]) -> f64 {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.mixing[k].ln() + self.log_component(k, x);
        }
        normalize_log_weights(out)
    }

    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.k()];
        self.responsibilities_into(x, &mut r);
        r
    }

    /// Gradient of `ln p(x | w)` with respect to `w`.
    pub fn score_x(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.w_dim()];
        let mut r = vec![0.0; self.k()];
        self.score_x_into(x, &mut r, &mut out);
        out
    }

    /// Allocation-free [`score_x`](Self::score_x); `resp` is scratch of length K.
    pub fn score_x_into(&self, x: &[f64], resp: &mut [f64], out: &mut [f64]) {
        self.responsibilities_into(x, resp);
        self.score_from_weights(x, resp, out);
    }

    /// Gradient of `ln p(x, y | w)` with respect to `w`.
    pub fn score_xy(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        self.check_label(y)?;
        let mut out = vec![0.0; self.w_dim()];
        let mut onehot = vec![0.0; self.k()];
        self.score_xy_into(x, y, &mut onehot, &mut out);
        Ok(out)
    }

    /// Allocation-free [`score_xy`](Self::score_xy); the label must be in range.
    pub fn score_xy_into(&self, x: &[f64], y: usize, scratch: &mut [f64], out: &mut [f64]) {
        scratch.fill(0.0);
        scratch[y] = 1.0;
        self.score_from_weights(x, scratch, out);
    }

    /// Shared score formula: with label weights `r` (posterior or one-hot),
    /// `∂/∂a_k = r_k/a_k − r_K/a_K` and `∂/∂b_k = r_k (x − b_k)/σ²`.
    pub(crate) fn score_from_weights(&self, x: &[f64], r: &[f64], out: &mut [f64]) {
        let k_last = self.k() - 1;
        let tail = r[k_last] / self.mixing[k_last];
        for k in 0..k_last {
            out[k] = r[k] / self.mixing[k] - tail;
        }
        let mean_block = &mut out[k_last..];
        for k in 0..self.k() {
            let mean = self.mean(k);
            for j in 0..self.dim {
                mean_block[k * self.dim + j] = r[k] * (x[j] - mean[j]) / self.variance;
            }
        }
    }

    /// Draws a label and a position.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R, labels: &WeightedIndex<f64>) -> LabeledPoint {
        let y = labels.sample(rng);
        let sd = self.variance.sqrt();
        let x = self
            .mean(y)
            .iter()
            .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        LabeledPoint::labeled(x, y)
    }

    pub fn label_distribution(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.mixing).expect("mixing ratios are positive")
    }

    /// Draws `n` labeled points i.i.d. from `p(x, y | w)`.
    ///
    /// Points are generated in chunks of [`SAMPLE_CHUNK`], chunk `i` using
    /// `stream.child(i)`, so the result does not depend on the thread count.
    pub fn sample_xy(&self, n: usize, stream: Stream) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Empty("sample request"));
        }
        let labels = self.label_distribution();
        let points = sample_chunked(n, stream, |rng| self.sample_point(rng, &labels));
        Dataset::new(points, DatasetKind::Initial)
    }
}

/// Turns log-weights into probabilities in place and returns their log-sum.
pub(crate) fn normalize_log_weights(w: &mut [f64]) -> f64 {
    let lse = log_sum_exp(w);
    let mut total = 0.0;
    for v in w.iter_mut() {
        *v = (*v - lse).exp();
        total += *v;
    }
    for v in w.iter_mut() {
        *v /= total;
    }
    lse
}

/// Runs `draw` `n` times in deterministic parallel chunks.
pub(crate) fn sample_chunked<T, F>(n: usize, stream: Stream, draw: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut crate::rng::StreamRng) -> T + Sync,
{
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream.child(c as u64).rng();
            let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

    fn w_star() -> GaussianMixture {
        GaussianMixture::new(vec![0.3, 0.7], vec![vec![0.0], vec![-2.0]], 1.0).unwrap()
    }

    #[test]
    fn standard_normal_at_mode() {
        let g = GaussianMixture::new(vec![1.0], vec![vec![0.0]], 1.0).unwrap();
        assert_relative_eq!(g.logpdf_x(&[0.0]), -LN_SQRT_2PI, epsilon = 1e-15);
        assert_eq!(g.w_dim(), 1);
        assert_relative_eq!(g.score_x(&[1.5])[0], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn two_component_values() {
        let g = w_star();
        // ln(0.3 N(0|0,1) + 0.7 N(0|-2,1)), evaluated in extended precision
        assert_relative_eq!(g.logpdf_x(&[0.0]), -1.848_479_922_904_003_6, epsilon = 1e-14);
        assert_relative_eq!(
            g.logpdf_xy(&[0.0], 0).unwrap(),
            0.3f64.ln() - LN_SQRT_2PI,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            g.logpdf_xy(&[-2.0], 1).unwrap(),
            0.7f64.ln() - LN_SQRT_2PI,
            epsilon = 1e-15
        );
        assert!(matches!(g.logpdf_xy(&[0.0], 2), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn responsibilities_examples() {
        let sym = GaussianMixture::new(vec![0.5, 0.5], vec![vec![1.0], vec![-1.0]], 1.0).unwrap();
        let r = sym.responsibilities(&[0.0]);
        assert_relative_eq!(r[0], 0.5, epsilon = 1e-15);
        let g = w_star();
        assert!(g.responsibilities(&[50.0])[0] > 1.0 - 1e-10);
        // x = -1 is equidistant from both means, so the posterior equals the prior
        let r = g.responsibilities(&[-1.0]);
        assert_relative_eq!(r[0], 0.3, epsilon = 1e-15);
        assert_relative_eq!(r[1], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn marginal_dominates_joint_and_marginalizes() {
        let g = w_star();
        for x in [-5.0, -1.0, 0.3, 4.0] {
            let lx = g.logpdf_x(&[x]);
            let joint: f64 = (0..2).map(|y| g.logpdf_xy(&[x], y).unwrap().exp()).sum();
            assert!(lx >= g.logpdf_xy(&[x], 0).unwrap());
            assert!(lx >= g.logpdf_xy(&[x], 1).unwrap());
            assert_relative_eq!(joint, lx.exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn no_underflow_in_far_tail() {
        let g = w_star();
        let v = g.logpdf_x(&[-400.0]);
        assert!(v.is_finite());
        assert!(g.score_x(&[-400.0]).iter().all(|s| s.is_finite()));
    }

    #[test]
    fn mixing_score_identity() {
        let g = w_star();
        let x = [0.7];
        let r = g.responsibilities(&x);
        assert_relative_eq!(g.score_x(&x)[0], r[0] / 0.3 - r[1] / 0.7, epsilon = 1e-14);
    }

    #[test]
    fn score_xy_zero_at_component_mode() {
        let g = w_star();
        let s = g.score_xy(&[-2.0], 1).unwrap();
        assert_eq!(&s[1..], &[0.0, 0.0]);
        assert_relative_eq!(s[0], -1.0 / 0.7, epsilon = 1e-15);
    }

    #[test]
    fn validation() {
        assert!(GaussianMixture::new(vec![0.5, 0.5], vec![vec![1.0], vec![1.0]], 1.0).is_err());
        assert!(GaussianMixture::new(vec![0.5, 0.6], vec![vec![1.0], vec![0.0]], 1.0).is_err());
        assert!(GaussianMixture::new(vec![1.0, 0.0], vec![vec![1.0], vec![0.0]], 1.0).is_err());
        assert!(GaussianMixture::new(vec![0.5, 0.5], vec![vec![1.0], vec![0.0]], 0.0).is_err());
        assert!(GaussianMixture::from_w(&[1.2, 0.0, 1.0], 2, 1, 1.0).is_err());
        let g = w_star();
        assert_eq!(GaussianMixture::from_w(&g.to_w(), 2, 1, 1.0).unwrap(), g);
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let g = w_star();
        let a = g.sample_xy(10_000, Stream::new(9)).unwrap();
        let b = g.sample_xy(10_000, Stream::new(9)).unwrap();
        assert_eq!(a, b);
        let one = g.sample_xy(1, Stream::new(1)).unwrap();
        assert!(one.points()[0].y.unwrap() < 2);
        assert!(matches!(g.sample_xy(0, Stream::new(1)), Err(Error::Empty(_))));
    }
}
