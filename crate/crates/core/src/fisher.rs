//! Fisher information matrices of the labeled, unlabeled and additional-data
//! models, by Monte Carlo regeneration or by deterministic quadrature.
//!
//! All three matrices live in the joint parameter space `u`. `I_XY` and `I_X`
//! are zero outside the initial block `[0, d1 + d2)` and `I_Z` is zero outside
//! the additional block `[d1, d1 + d2 + d3)`; the zeros are exact because the
//! matrices are computed over `w` (or `v`) and scattered into `u`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledPoint;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_pd, min_eigenvalue, principal_block, symmetrize};
use crate::mixtures::GaussianMixture;
use crate::rng::{Stream, StreamRng};
use crate::scenarios::{AdditionalModel, JointParameter, ParameterLayout, Scenario};

/// Default number of regenerated points per Monte Carlo estimate.
pub const DEFAULT_N_PRIME: usize = 500_000;

/// Draws per random substream in Monte Carlo accumulation.
pub const FISHER_CHUNK: usize = 8192;

/// Smallest mixing ratio accepted at the evaluation point.
pub const MIXING_FLOOR: f64 = 1e-10;

/// Uniform grid used by the quadrature path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    /// Nodes per axis.
    pub points: usize,
    /// Half-width of the integration range beyond the extreme means, in
    /// standard deviations.
    pub halfwidth_sigmas: f64,
    /// Recompute on a grid of half the resolution and fail if any entry moves
    /// by more than [`GRID_SHIFT_TOL`].
    pub check_resolution: bool,
}

/// Largest entry shift tolerated between the two grid resolutions.
pub const GRID_SHIFT_TOL: f64 = 1e-6;

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self {
            points: 4001,
            halfwidth_sigmas: 10.0,
            check_resolution: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FisherMethod {
    MonteCarlo { n_prime: usize },
    Quadrature(QuadratureGrid),
}

impl Default for FisherMethod {
    fn default() -> Self {
        Self::MonteCarlo {
            n_prime: DEFAULT_N_PRIME,
        }
    }
}

/// Trapezoid nodes `(position, weight)` over `[lo, hi]`.
pub fn trapezoid_nodes(lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)> {
    assert!(points >= 2 && hi > lo);
    let h = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| {
            let w = if i == 0 || i + 1 == points { 0.5 * h } else { h };
            (lo + h * i as f64, w)
        })
        .collect()
}

/// Tensor-product rule over positions, optional extra feature and labels.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub x_nodes: Vec<(f64, f64)>,
    pub feature_nodes: Option<Vec<(f64, f64)>>,
    /// Labels summed over exactly; `None` integrates unlabeled points.
    pub labels: Option<Vec<usize>>,
}

fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

fn add_outer(acc: &mut [f64], s: &[f64], weight: f64) {
    let mut idx = 0;
    for i in 0..s.len() {
        let si = s[i] * weight;
        for &sj in &s[i..] {
            acc[idx] += si * sj;
            idx += 1;
        }
    }
}

fn unpack(acc: &[f64], dim: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    let mut idx = 0;
    for i in 0..dim {
        for j in i..dim {
            m[(i, j)] = acc[idx] * scale;
            m[(j, i)] = acc[idx] * scale;
            idx += 1;
        }
    }
    m
}

/// Monte Carlo estimates `(1/n′) Σ s sᵀ` for several score functions evaluated
/// on the same draws.
///
/// `score` writes `count` consecutive score vectors of length `dim` into its
/// output buffer. Draw `i` of chunk `c` uses `stream.child(c)`, and chunk sums
/// are reduced in chunk order, so the result depends only on the stream.
pub fn monte_carlo_outer<P, S, F>(
    dim: usize,
    count: usize,
    n_prime: usize,
    stream: Stream,
    sampler: S,
    score: F,
) -> Result<Vec<DMatrix<f64>>>
where
    S: Fn(&mut StreamRng) -> P + Sync,
    F: Fn(&P, &mut [f64]) + Sync,
{
    if n_prime == 0 {
        return Err(Error::Empty("Monte Carlo sample"));
    }
    let packed = packed_len(dim);
    let chunks = n_prime.div_ceil(FISHER_CHUNK);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.child(c as u64).rng();
            let len = FISHER_CHUNK.min(n_prime - c * FISHER_CHUNK);
            let mut acc = vec![0.0; packed * count];
            let mut buf = vec![0.0; dim * count];
            for _ in 0..len {
                let point = sampler(&mut rng);
                score(&point, &mut buf);
                for m in 0..count {
                    add_outer(
                        &mut acc[m * packed..(m + 1) * packed],
                        &buf[m * dim..(m + 1) * dim],
                        1.0,
                    );
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; packed * count];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    let scale = 1.0 / n_prime as f64;
    Ok((0..count)
        .map(|m| unpack(&total[m * packed..(m + 1) * packed], dim, scale))
        .collect())
}

/// Empirical Fisher matrix `(1/n′) Σ s(z_l) s(z_l)ᵀ` over `n′` fresh draws.
pub fn empirical_fisher<P, S, F>(
    dim: usize,
    n_prime: usize,
    stream: Stream,
    sampler: S,
    score: F,
) -> Result<DMatrix<f64>>
where
    S: Fn(&mut StreamRng) -> P + Sync,
    F: Fn(&P, &mut [f64]) + Sync,
{
    Ok(monte_carlo_outer(dim, 1, n_prime, stream, sampler, score)?.remove(0))
}

/// Quadrature approximation of `E[s sᵀ]` under the density `exp(logpdf)`.
pub fn quadrature_fisher<L, F>(dim: usize, rule: &QuadratureRule, logpdf: L, score: F) -> DMatrix<f64>
where
    L: Fn(&LabeledPoint) -> f64 + Sync,
    F: Fn(&LabeledPoint, &mut [f64]) + Sync,
{
    let packed = packed_len(dim);
    let no_feature = [(f64::NAN, 1.0)];
    let features: &[(f64, f64)] = rule.feature_nodes.as_deref().unwrap_or(&no_feature);
    let labels: Vec<Option<usize>> = match &rule.labels {
        Some(l) => l.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let rows: Vec<Vec<f64>> = rule
        .x_nodes
        .par_iter()
        .map(|&(x, wx)| {
            let mut acc = vec![0.0; packed];
            let mut s = vec![0.0; dim];
            let mut point = LabeledPoint {
                x: vec![x],
                y: None,
                x_prime: None,
            };
            for &(xp, wf) in features {
                point.x_prime = rule.feature_nodes.as_ref().map(|_| xp);
                for &y in &labels {
                    point.y = y;
                    let lp = logpdf(&point);
                    if lp < -745.0 {
                        continue;
                    }
                    score(&point, &mut s);
                    add_outer(&mut acc, &s, wx * wf * lp.exp());
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; packed];
    for row in &rows {
        for (t, r) in total.iter_mut().zip(row) {
            *t += r;
        }
    }
    unpack(&total, dim, 1.0)
}

/// The three Fisher matrices of a scenario at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherTriple {
    pub i_xy: DMatrix<f64>,
    pub i_x: DMatrix<f64>,
    pub i_z: DMatrix<f64>,
    pub at_point: JointParameter,
    pub method: FisherMethod,
}

fn embed(m: &DMatrix<f64>, positions: &[usize], dim_u: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim_u, dim_u);
    for (a, &i) in positions.iter().enumerate() {
        for (b, &j) in positions.iter().enumerate() {
            out[(i, j)] = m[(a, b)];
        }
    }
    out
}

fn check_interior(mixing: &[f64], what: &str) -> Result<()> {
    if mixing.iter().any(|&a| a < MIXING_FLOOR) {
        return Err(Error::DegenerateParameter(format!("{what} mixing ratios {mixing:?}")));
    }
    Ok(())
}

fn axis_range(centers: impl Iterator<Item = f64>, sd: f64, grid: &QuadratureGrid) -> (f64, f64) {
    let (lo, hi) = centers.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c)));
    (lo - grid.halfwidth_sigmas * sd, hi + grid.halfwidth_sigmas * sd)
}

impl FisherTriple {
    /// Computes the triple for `scenario` at `u`. The stream is used only by
    /// the Monte Carlo method.
    pub fn compute(scenario: &Scenario, u: &JointParameter, method: FisherMethod, stream: Stream) -> Result<Self> {
        let initial = scenario.initial_model(u)?;
        let additional = scenario.additional_model(u)?;
        check_interior(initial.mixing(), "initial")?;
        match &additional {
            AdditionalModel::Mixture { mixture, .. }
            | AdditionalModel::Feature { mixture, .. }
            | AdditionalModel::ClassPrior { mixture, .. } => check_interior(mixture.mixing(), "additional")?,
            AdditionalModel::Component { .. } => {}
        }
        let layout = &scenario.layout;
        let (w_xy, w_x, v_z) = match method {
            FisherMethod::MonteCarlo { n_prime } => {
                let (xy, x) = mc_initial(&initial, n_prime, stream.named("initial"))?;
                let z = mc_additional(&additional, layout.v_dim(), n_prime, stream.named("additional"))?;
                (xy, x, z)
            }
            FisherMethod::Quadrature(grid) => {
                let run = |grid: &QuadratureGrid| -> Result<_> {
                    let (xy, x) = quad_initial(&initial, grid)?;
                    let z = quad_additional(&additional, layout.v_dim(), grid)?;
                    Ok((xy, x, z))
                };
                let fine = run(&grid)?;
                if grid.check_resolution {
                    let coarse_grid = QuadratureGrid {
                        points: grid.points / 2 + 1,
                        ..grid
                    };
                    let coarse = run(&coarse_grid)?;
                    for (f, c) in [(&fine.0, &coarse.0), (&fine.1, &coarse.1), (&fine.2, &coarse.2)] {
                        check_shift(f, c)?;
                    }
                }
                fine
            }
        };
        let dim_u = layout.dim_u();
        Ok(Self {
            i_xy: symmetrize(&embed(&w_xy, &layout.psi_i, dim_u)),
            i_x: symmetrize(&embed(&w_x, &layout.psi_i, dim_u)),
            i_z: symmetrize(&embed(&v_z, &layout.psi_a, dim_u)),
            at_point: u.clone(),
            method,
        })
    }

    pub fn dim(&self) -> usize {
        self.i_xy.nrows()
    }

    /// Multiplies all three matrices by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            i_xy: &self.i_xy * factor,
            i_x: &self.i_x * factor,
            i_z: &self.i_z * factor,
            ..self.clone()
        }
    }

    /// Checks the structural and definiteness properties against a layout:
    /// symmetry, exact structural zeros, positive definite `w`/`v` blocks and
    /// `I_XY ⪰ I_X` on the `w` block up to `psd_slack`.
    pub fn validate(&self, layout: &ParameterLayout, psd_slack: f64) -> Result<()> {
        let n = layout.dim_u();
        for (name, m) in [("I_XY", &self.i_xy), ("I_X", &self.i_x), ("I_Z", &self.i_z)] {
            if m.shape() != (n, n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: m.nrows(),
                });
            }
            let asym = (m - m.transpose()).amax();
            if asym > 1e-12 * m.amax().max(1.0) {
                return Err(Error::InvalidArgument(format!("{name} is not symmetric ({asym:e})")));
            }
        }
        let w_range = layout.initial_range();
        let v_range = layout.additional_range();
        for i in 0..n {
            for j in 0..n {
                let in_w = w_range.contains(&i) && w_range.contains(&j);
                let in_v = v_range.contains(&i) && v_range.contains(&j);
                if (!in_w && (self.i_xy[(i, j)] != 0.0 || self.i_x[(i, j)] != 0.0))
                    || (!in_v && self.i_z[(i, j)] != 0.0)
                {
                    return Err(Error::InvalidArgument(format!(
                        "structural zero violated at ({i}, {j})"
                    )));
                }
            }
        }
        let w_len = w_range.len();
        cholesky_pd(&principal_block(&self.i_xy, 0, w_len), "I_XY w-block")?;
        cholesky_pd(&principal_block(&self.i_x, 0, w_len), "I_X w-block")?;
        cholesky_pd(&principal_block(&self.i_z, layout.d1, v_range.len()), "I_Z v-block")?;
        let gap = principal_block(&(&self.i_xy - &self.i_x), 0, w_len);
        let min = min_eigenvalue(&gap);
        if min < -psd_slack {
            return Err(Error::InvalidArgument(format!(
                "I_XY - I_X has eigenvalue {min:e} below -{psd_slack:e}"
            )));
        }
        Ok(())
    }
}

fn check_shift(fine: &DMatrix<f64>, coarse: &DMatrix<f64>) -> Result<()> {
    for i in 0..fine.nrows() {
        for j in 0..fine.ncols() {
            let shift = (fine[(i, j)] - coarse[(i, j)]).abs();
            if shift > GRID_SHIFT_TOL {
                return Err(Error::GridTooCoarse { row: i, col: j, shift });
            }
        }
    }
    Ok(())
}

fn mc_initial(model: &GaussianMixture, n_prime: usize, stream: Stream) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dim = model.w_dim();
    let labels = model.label_distribution();
    let mut out = monte_carlo_outer(
        dim,
        2,
        n_prime,
        stream,
        |rng| model.sample_point(rng, &labels),
        |p, buf| {
            let mut scratch = vec![0.0; model.k()];
            let (xy, x) = buf.split_at_mut(dim);
            model.score_xy_into(&p.x, p.y.expect("sampled points are labeled"), &mut scratch, xy);
            model.score_x_into(&p.x, &mut scratch, x);
        },
    )?;
    let x = out.pop().expect("two matrices");
    let xy = out.pop().expect("two matrices");
    Ok((xy, x))
}

fn mc_additional(model: &AdditionalModel, v_dim: usize, n_prime: usize, stream: Stream) -> Result<DMatrix<f64>> {
    let k = match model {
        AdditionalModel::Mixture { mixture, .. }
        | AdditionalModel::Feature { mixture, .. }
        | AdditionalModel::ClassPrior { mixture, .. } => mixture.k(),
        AdditionalModel::Component { .. } => 1,
    };
    empirical_fisher(
        v_dim,
        n_prime,
        stream,
        |rng| model.sample(rng).0,
        |p, buf| {
            let mut scratch = vec![0.0; k];
            model.score_v_into(p, &mut scratch, buf);
        },
    )
}

fn one_dimensional(dim: usize) -> Result<()> {
    if dim != 1 {
        return Err(Error::Unsupported(format!(
            "quadrature Fisher matrices need one-dimensional components, got {dim}"
        )));
    }
    Ok(())
}

fn quad_initial(model: &GaussianMixture, grid: &QuadratureGrid) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    one_dimensional(model.dim())?;
    let sd = model.variance().sqrt();
    let (lo, hi) = axis_range(model.means_flat().iter().copied(), sd, grid);
    let x_nodes = trapezoid_nodes(lo, hi, grid.points);
    let dim = model.w_dim();
    let labeled = QuadratureRule {
        x_nodes: x_nodes.clone(),
        feature_nodes: None,
        labels: Some((0..model.k()).collect()),
    };
    let i_xy = quadrature_fisher(
        dim,
        &labeled,
        |p| model.logpdf_xy(&p.x, p.y.unwrap()).unwrap_or(f64::NEG_INFINITY),
        |p, s| {
            let mut scratch = vec![0.0; model.k()];
            model.score_xy_into(&p.x, p.y.unwrap(), &mut scratch, s);
        },
    );
    let unlabeled = QuadratureRule {
        x_nodes,
        feature_nodes: None,
        labels: None,
    };
    let i_x = quadrature_fisher(
        dim,
        &unlabeled,
        |p| model.logpdf_x(&p.x),
        |p, s| {
            let mut scratch = vec![0.0; model.k()];
            model.score_x_into(&p.x, &mut scratch, s);
        },
    );
    Ok((i_xy, i_x))
}

fn quad_additional(model: &AdditionalModel, v_dim: usize, grid: &QuadratureGrid) -> Result<DMatrix<f64>> {
    let (rule, k) = match model {
        AdditionalModel::Mixture { mixture, labeled } | AdditionalModel::ClassPrior { mixture, labeled } => {
            one_dimensional(mixture.dim())?;
            let (lo, hi) = axis_range(mixture.means_flat().iter().copied(), mixture.variance().sqrt(), grid);
            let rule = QuadratureRule {
                x_nodes: trapezoid_nodes(lo, hi, grid.points),
                feature_nodes: None,
                labels: labeled.then(|| (0..mixture.k()).collect()),
            };
            (rule, mixture.k())
        }
        AdditionalModel::Component { mean, variance, target } => {
            one_dimensional(mean.len())?;
            let (lo, hi) = axis_range(mean.iter().copied(), variance.sqrt(), grid);
            let rule = QuadratureRule {
                x_nodes: trapezoid_nodes(lo, hi, grid.points),
                feature_nodes: None,
                labels: Some(vec![*target]),
            };
            (rule, 1)
        }
        AdditionalModel::Feature { mixture, feature_means } => {
            one_dimensional(mixture.dim())?;
            let (lo, hi) = axis_range(mixture.means_flat().iter().copied(), mixture.variance().sqrt(), grid);
            let (flo, fhi) = axis_range(feature_means.iter().copied(), 1.0, grid);
            let rule = QuadratureRule {
                x_nodes: trapezoid_nodes(lo, hi, grid.points),
                feature_nodes: Some(trapezoid_nodes(flo, fhi, grid.points)),
                labels: None,
            };
            (rule, mixture.k())
        }
    };
    Ok(quadrature_fisher(
        v_dim,
        &rule,
        |p| model.logpdf(p),
        |p, s| {
            let mut scratch = vec![0.0; k];
            model.score_v_into(p, &mut scratch, s);
        },
    ))
}

/// `J_XY = I_XY + α I_Z` and `J_X = I_X + α I_Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct JPair {
    pub j_xy: DMatrix<f64>,
    pub j_x: DMatrix<f64>,
    pub alpha: f64,
}

/// Adds the weighted additional-data information to both initial matrices.
/// `alpha = 0` is accepted and returns the initial matrices unchanged.
pub fn assemble_j(triple: &FisherTriple, alpha: f64) -> Result<JPair> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidAlpha(format!("alpha must be nonnegative, got {alpha}")));
    }
    Ok(JPair {
        j_xy: &triple.i_xy + &triple.i_z * alpha,
        j_x: &triple.i_x + &triple.i_z * alpha,
        alpha,
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct TripleRepr<'a> {
    i_xy: Vec<Vec<f64>>,
    i_x: Vec<Vec<f64>>,
    i_z: Vec<Vec<f64>>,
    at_point: &'a JointParameter,
    method: &'a FisherMethod,
}

impl Serialize for FisherTriple {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TripleRepr {
            i_xy: rows(&self.i_xy),
            i_x: rows(&self.i_x),
            i_z: rows(&self.i_z),
            at_point: &self.at_point,
            method: &self.method,
        }
        .serialize(serializer)
    }
}
