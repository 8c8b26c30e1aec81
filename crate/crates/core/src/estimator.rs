//! MAP estimation of the joint parameter by expectation–maximization.
//!
//! The objective is
//! `Π p_i(x_j | u) · Π p_a(z_j | u) · φ(u)` with conjugate priors: a
//! symmetric Dirichlet on every mixing vector and an independent zero-mean
//! Gaussian on every mean coordinate (component means and extra-feature
//! means alike). Labeled points enter with their labels; unlabeled points get
//! responsibilities under the model that generated them.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledPoint};
use crate::error::{Error, Result};
use crate::mixtures::{log_normal, log_sum_exp};
use crate::rng::Stream;
use crate::scenarios::{Coord, JointParameter, Scenario, ScenarioKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorHyperparams {
    /// Symmetric Dirichlet concentration for every mixing vector.
    pub dirichlet_concentration: f64,
    /// Variance `τ²` of the zero-mean Gaussian prior on each mean coordinate.
    pub mean_prior_variance: f64,
}

impl Default for PriorHyperparams {
    fn default() -> Self {
        Self {
            dirichlet_concentration: 2.0,
            mean_prior_variance: 100.0,
        }
    }
}

impl PriorHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dirichlet_concentration.is_finite() && self.dirichlet_concentration > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Dirichlet concentration must exceed 1, got {}",
                self.dirichlet_concentration
            )));
        }
        if !(self.mean_prior_variance.is_finite() && self.mean_prior_variance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mean prior variance must be positive, got {}",
                self.mean_prior_variance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Stop once the log-posterior changes by less than this.
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 2000,
            restarts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEstimate {
    pub u_hat: JointParameter,
    /// Log-posterior at `u_hat`, up to an additive constant.
    pub log_posterior: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-posterior after every iteration of the winning restart.
    #[serde(skip)]
    pub trace: Vec<f64>,
    /// Index of the winning restart.
    pub restart: usize,
}

/// Allowed decrease between consecutive log-posterior values.
pub fn monotonicity_slack(value: f64) -> f64 {
    1e-10_f64.max(1e-14 * value.abs())
}

impl MapEstimate {
    /// True when the recorded log-posterior never decreases beyond rounding.
    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1] >= w[0] - monotonicity_slack(w[0]))
    }
}

/// Mixture state in natural coordinates.
#[derive(Debug, Clone, PartialEq)]
struct Params {
    mixing: Vec<f64>,
    means: Vec<f64>,
    feature_means: Vec<f64>,
    additional_mixing: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Stats {
    mixing: Vec<f64>,
    additional_mixing: Vec<f64>,
    weight: Vec<f64>,
    sum_x: Vec<f64>,
    feature_weight: Vec<f64>,
    sum_feature: Vec<f64>,
}

impl Stats {
    fn zeros(k: usize, dim: usize) -> Self {
        Self {
            mixing: vec![0.0; k],
            additional_mixing: vec![0.0; k],
            weight: vec![0.0; k],
            sum_x: vec![0.0; k * dim],
            feature_weight: vec![0.0; k],
            sum_feature: vec![0.0; k],
        }
    }

    fn add_mean(&mut self, k: usize, r: f64, x: &[f64]) {
        self.weight[k] += r;
        let dim = x.len();
        for (s, xv) in self.sum_x[k * dim..(k + 1) * dim].iter_mut().zip(x) {
            *s += r * xv;
        }
    }
}

struct Em<'a> {
    scenario: &'a Scenario,
    init: &'a Dataset,
    add: &'a Dataset,
    prior: PriorHyperparams,
    k: usize,
    dim: usize,
    variance: f64,
}

impl Em<'_> {
    fn mean<'p>(&self, p: &'p Params, k: usize) -> &'p [f64] {
        &p.means[k * self.dim..(k + 1) * self.dim]
    }

    /// Log-terms `ln weight_k + ln N(x | b_k)` for a mixing vector.
    fn terms(&self, p: &Params, mixing: &[f64], x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = mixing[k].ln() + log_normal(x, self.mean(p, k), self.variance);
        }
    }

    fn posterior_weights(terms: &mut [f64]) -> f64 {
        let lse = log_sum_exp(terms);
        for t in terms.iter_mut() {
            *t = (*t - lse).exp();
        }
        lse
    }

    /// Accumulates sufficient statistics at `p` and returns the log-likelihood there.
    fn e_step(&self, p: &Params) -> (Stats, f64) {
        let mut stats = Stats::zeros(self.k, self.dim);
        let mut loglik = 0.0;
        let mut t = vec![0.0; self.k];
        for point in self.init.points() {
            match point.y {
                Some(y) => {
                    loglik += p.mixing[y].ln() + log_normal(&point.x, self.mean(p, y), self.variance);
                    stats.mixing[y] += 1.0;
                    stats.add_mean(y, 1.0, &point.x);
                }
                None => {
                    self.terms(p, &p.mixing, &point.x, &mut t);
                    loglik += Self::posterior_weights(&mut t);
                    for (k, &w) in t.iter().enumerate() {
                        stats.mixing[k] += w;
                        stats.add_mean(k, w, &point.x);
                    }
                }
            }
        }
        for point in self.add.points() {
            loglik += self.additional_point(p, point, &mut t, &mut stats);
        }
        (stats, loglik)
    }

    fn additional_point(&self, p: &Params, z: &LabeledPoint, t: &mut [f64], stats: &mut Stats) -> f64 {
        match self.scenario.kind() {
            ScenarioKind::SameUnlabeled => {
                self.terms(p, &p.mixing, &z.x, t);
                let ll = Self::posterior_weights(t);
                for (k, &w) in t.iter().enumerate() {
                    stats.mixing[k] += w;
                    stats.add_mean(k, w, &z.x);
                }
                ll
            }
            ScenarioKind::SemiSupervisedLabeled => {
                let y = z.y.expect("validated labeled");
                stats.mixing[y] += 1.0;
                stats.add_mean(y, 1.0, &z.x);
                p.mixing[y].ln() + log_normal(&z.x, self.mean(p, y), self.variance)
            }
            ScenarioKind::PositiveLabeled { target } => {
                stats.add_mean(target, 1.0, &z.x);
                log_normal(&z.x, self.mean(p, target), self.variance)
            }
            ScenarioKind::AddedFeature => {
                let xp = z.x_prime.expect("validated feature");
                self.terms(p, &p.mixing, &z.x, t);
                for (k, tk) in t.iter_mut().enumerate() {
                    *tk += log_normal(&[xp], &[p.feature_means[k]], 1.0);
                }
                let ll = Self::posterior_weights(t);
                for (k, &w) in t.iter().enumerate() {
                    stats.mixing[k] += w;
                    stats.add_mean(k, w, &z.x);
                    stats.feature_weight[k] += w;
                    stats.sum_feature[k] += w * xp;
                }
                ll
            }
            ScenarioKind::ClassPriorChange { .. } => match z.y {
                Some(y) => {
                    stats.additional_mixing[y] += 1.0;
                    stats.add_mean(y, 1.0, &z.x);
                    p.additional_mixing[y].ln() + log_normal(&z.x, self.mean(p, y), self.variance)
                }
                None => {
                    self.terms(p, &p.additional_mixing, &z.x, t);
                    let ll = Self::posterior_weights(t);
                    for (k, &w) in t.iter().enumerate() {
                        stats.additional_mixing[k] += w;
                        stats.add_mean(k, w, &z.x);
                    }
                    ll
                }
            },
        }
    }

    fn uses_feature(&self) -> bool {
        self.scenario.kind() == ScenarioKind::AddedFeature
    }

    fn uses_additional_mixing(&self) -> bool {
        matches!(self.scenario.kind(), ScenarioKind::ClassPriorChange { .. })
    }

    fn log_prior(&self, p: &Params) -> f64 {
        let conc = self.prior.dirichlet_concentration - 1.0;
        let tau2 = self.prior.mean_prior_variance;
        let mut lp = conc * p.mixing.iter().map(|a| a.ln()).sum::<f64>();
        lp -= p.means.iter().map(|b| b * b).sum::<f64>() / (2.0 * tau2);
        if self.uses_feature() {
            lp -= p.feature_means.iter().map(|c| c * c).sum::<f64>() / (2.0 * tau2);
        }
        if self.uses_additional_mixing() {
            lp += conc * p.additional_mixing.iter().map(|c| c.ln()).sum::<f64>();
        }
        lp
    }

    fn dirichlet_map(&self, counts: &[f64]) -> Vec<f64> {
        let conc = self.prior.dirichlet_concentration - 1.0;
        let total: f64 = counts.iter().sum::<f64>() + conc * counts.len() as f64;
        counts.iter().map(|n| (n + conc) / total).collect()
    }

    fn m_step(&self, stats: &Stats, previous: &Params) -> Params {
        let shrink = self.variance / self.prior.mean_prior_variance;
        let mut means = vec![0.0; self.k * self.dim];
        for k in 0..self.k {
            for j in 0..self.dim {
                means[k * self.dim + j] = stats.sum_x[k * self.dim + j] / (stats.weight[k] + shrink);
            }
        }
        let feature_means = if self.uses_feature() {
            let shrink = 1.0 / self.prior.mean_prior_variance;
            (0..self.k)
                .map(|k| stats.sum_feature[k] / (stats.feature_weight[k] + shrink))
                .collect()
        } else {
            previous.feature_means.clone()
        };
        let additional_mixing = if self.uses_additional_mixing() {
            self.dirichlet_map(&stats.additional_mixing)
        } else {
            previous.additional_mixing.clone()
        };
        Params {
            mixing: self.dirichlet_map(&stats.mixing),
            means,
            feature_means,
            additional_mixing,
        }
    }

    fn run(&self, start: Params, opts: &EmOptions) -> (Params, f64, usize, bool, Vec<f64>) {
        let mut params = start;
        let mut trace = Vec::new();
        let mut previous: Option<f64> = None;
        for iter in 1..=opts.max_iters {
            let (stats, loglik) = self.e_step(&params);
            let lp = loglik + self.log_prior(&params);
            trace.push(lp);
            if let Some(prev) = previous {
                if (lp - prev).abs() < opts.tol {
                    return (params, lp, iter, true, trace);
                }
            }
            previous = Some(lp);
            params = self.m_step(&stats, &params);
        }
        let (_, loglik) = self.e_step(&params);
        let lp = loglik + self.log_prior(&params);
        trace.push(lp);
        (params, lp, opts.max_iters, false, trace)
    }

    fn pooled_x(&self) -> Vec<&[f64]> {
        self.init
            .points()
            .iter()
            .chain(self.add.points())
            .map(|p| p.x.as_slice())
            .collect()
    }

    /// Restart 0 starts from quantile centers; later restarts draw means
    /// uniformly over the data range and mixing ratios from a flat Dirichlet.
    fn initial_params(&self, restart: usize, stream: Stream) -> Params {
        let xs = self.pooled_x();
        let k = self.k;
        let uniform = vec![1.0 / k as f64; k];
        let features: Vec<f64> = self.add.points().iter().filter_map(|p| p.x_prime).collect();
        let mut means = vec![0.0; k * self.dim];
        let (mixing, feature_means, additional_mixing);
        if restart == 0 {
            let mut sorted = xs.clone();
            sorted.sort_by(|a, b| b[0].total_cmp(&a[0]));
            for c in 0..k {
                let idx = (((c as f64 + 0.5) / k as f64) * sorted.len() as f64) as usize;
                means[c * self.dim..(c + 1) * self.dim].copy_from_slice(sorted[idx.min(sorted.len() - 1)]);
            }
            mixing = uniform.clone();
            additional_mixing = uniform;
            let f_mean = if features.is_empty() {
                0.0
            } else {
                features.iter().sum::<f64>() / features.len() as f64
            };
            feature_means = vec![f_mean; k];
        } else {
            let mut rng = stream.rng();
            for j in 0..self.dim {
                let lo = xs.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min);
                let hi = xs.iter().map(|x| x[j]).fold(f64::NEG_INFINITY, f64::max);
                for c in 0..k {
                    means[c * self.dim + j] = if hi > lo { rng.random_range(lo..hi) } else { lo };
                }
            }
            // flat Dirichlet: normalized unit exponentials
            let flat = |rng: &mut crate::rng::StreamRng| -> Vec<f64> {
                (0..k).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>().normalized()
            };
            mixing = flat(&mut rng);
            additional_mixing = flat(&mut rng);
            let (lo, hi) = features.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            });
            feature_means = (0..k)
                .map(|_| if hi > lo { rng.random_range(lo..hi) } else { 0.0 })
                .collect();
        }
        // identical starting means would stay identical under EM
        for c in 1..k {
            for d in 0..c {
                if means[c * self.dim..(c + 1) * self.dim] == means[d * self.dim..(d + 1) * self.dim] {
                    means[c * self.dim] += 1e-3 * (c as f64);
                }
            }
        }
        Params {
            mixing: mixing
                .into_iter()
                .map(|a: f64| a.max(1e-6))
                .collect::<Vec<_>>()
                .normalized(),
            means,
            feature_means,
            additional_mixing: additional_mixing
                .into_iter()
                .map(|a: f64| a.max(1e-6))
                .collect::<Vec<_>>()
                .normalized(),
        }
    }

    fn to_u(&self, p: &Params) -> JointParameter {
        let values = self
            .scenario
            .layout
            .coords
            .iter()
            .map(|coord| match *coord {
                Coord::Mixing { component } => p.mixing[component],
                Coord::Mean { component, axis } => p.means[component * self.dim + axis],
                Coord::FeatureMean { component } => p.feature_means[component],
                Coord::AdditionalMixing { component } => p.additional_mixing[component],
            })
            .collect();
        JointParameter::new(values)
    }
}

trait Normalized {
    fn normalized(self) -> Self;
}

impl Normalized for Vec<f64> {
    fn normalized(mut self) -> Self {
        let total: f64 = self.iter().sum();
        for v in &mut self {
            *v /= total;
        }
        self
    }
}

/// MAP estimate of `u` from initial and additional data; the best of
/// `opts.restarts` EM runs, with components put in canonical order.
pub fn map_em(
    scenario: &Scenario,
    init: &Dataset,
    add: &Dataset,
    prior: &PriorHyperparams,
    opts: &EmOptions,
    stream: Stream,
) -> Result<MapEstimate> {
    prior.validate()?;
    if opts.restarts == 0 || opts.max_iters == 0 {
        return Err(Error::InvalidArgument(
            "EM needs at least one restart and one iteration".into(),
        ));
    }
    let dim = scenario.dim();
    let shape = init.shape();
    if shape.dim != dim || shape.extra_feature {
        return Err(Error::ShapeMismatch {
            scenario: "initial data".into(),
            detail: format!("expected {dim}-dimensional points without extra feature, found {shape:?}"),
        });
    }
    init.check_labels(scenario.k())?;
    scenario.check_additional(add)?;

    let em = Em {
        scenario,
        init,
        add,
        prior: *prior,
        k: scenario.k(),
        dim,
        variance: scenario.variance,
    };
    let runs: Vec<_> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let start = em.initial_params(r, stream.child(r as u64));
            let (params, lp, iterations, converged, trace) = em.run(start, opts);
            let estimate = MapEstimate {
                u_hat: em.to_u(&params),
                log_posterior: lp,
                iterations,
                converged,
                trace,
                restart: r,
            };
            // runs that collapse onto invalid parameters are dropped
            let valid = lp.is_finite()
                && scenario.initial_model(&estimate.u_hat).is_ok()
                && scenario.additional_model(&estimate.u_hat).is_ok();
            valid.then_some(estimate)
        })
        .collect();
    let best = runs
        .into_iter()
        .flatten()
        .fold(None::<MapEstimate>, |best, e| match best {
            Some(b) if b.log_posterior >= e.log_posterior => Some(b),
            _ => Some(e),
        })
        .ok_or_else(|| Error::DegenerateParameter("every EM restart collapsed".into()))?;
    align_components(scenario, best)
}

/// Puts components in descending order of their first mean coordinate, ties
/// (within 1e-9) broken by descending mixing ratio. Mixing, mean and
/// scenario-specific blocks move together.
///
/// Labeled data tie components to fixed labels, so estimates for the
/// semi-supervised and labeled class-prior scenarios are returned unchanged;
/// for the positive-labeled scenario the target component stays in place.
pub fn align_components(scenario: &Scenario, estimate: MapEstimate) -> Result<MapEstimate> {
    let labels_pin_order = matches!(
        scenario.kind(),
        ScenarioKind::SemiSupervisedLabeled | ScenarioKind::ClassPriorChange { labeled: true }
    );
    if labels_pin_order {
        return Ok(estimate);
    }
    let model = scenario.initial_model(&estimate.u_hat)?;
    let pinned = match scenario.kind() {
        ScenarioKind::PositiveLabeled { target } => Some(target),
        _ => None,
    };
    let mut free: Vec<usize> = (0..model.k()).filter(|c| Some(*c) != pinned).collect();
    let slots = free.clone();
    free.sort_by(|&i, &j| {
        let (bi, bj) = (model.mean(i)[0], model.mean(j)[0]);
        if (bi - bj).abs() <= 1e-9 {
            model.mixing()[j].total_cmp(&model.mixing()[i])
        } else {
            bj.total_cmp(&bi)
        }
    });
    let mut perm: Vec<usize> = (0..model.k()).collect();
    for (slot, src) in slots.into_iter().zip(free) {
        perm[slot] = src;
    }
    if perm.iter().enumerate().all(|(i, p)| i == *p) {
        return Ok(estimate);
    }
    let values = scenario.layout.permute_components(estimate.u_hat.as_slice(), &perm)?;
    Ok(MapEstimate {
        u_hat: JointParameter::new(values),
        ..estimate
    })
}
