//! The five kinds of additional data, their parameter layouts and densities.
//!
//! Each scenario joins the initial model `p_i(x | w)` and the additional-data
//! model `p_a(z | v)` into one parameter vector `u`, ordered as
//! `(initial-only | shared | additional-only)` with block sizes `(d1, d2, d3)`.
//! `psi_i[j]` is the position in `u` of the `j`-th coordinate of `w`, and
//! `psi_a[j]` the position of the `j`-th coordinate of `v`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetKind, LabeledPoint, PointShape};
use crate::error::{Error, Result};
use crate::mixtures::{log_normal, log_sum_exp, normalize_log_weights, sample_chunked, GaussianMixture};
use crate::rng::Stream;

/// Allowed gap between `alpha * n` and the nearest integer.
pub const ALPHA_INTEGRALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Unlabeled data from the same source as the initial data.
    SameUnlabeled,
    /// Labeled data from the same source.
    SemiSupervisedLabeled,
    /// Labeled data from a single component (`target`, zero-based).
    PositiveLabeled { target: usize },
    /// Unlabeled data carrying one extra scalar feature per point.
    AddedFeature,
    /// Same components, different mixing ratios.
    ClassPriorChange { labeled: bool },
}

impl ScenarioKind {
    pub const NAMES: [&'static str; 5] = [
        "same-unlabeled",
        "semi-supervised",
        "positive-labeled",
        "added-feature",
        "class-prior-change",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::SameUnlabeled => "same-unlabeled",
            Self::SemiSupervisedLabeled => "semi-supervised",
            Self::PositiveLabeled { .. } => "positive-labeled",
            Self::AddedFeature => "added-feature",
            Self::ClassPriorChange { .. } => "class-prior-change",
        }
    }

    /// Shape of an additional data point under this scenario.
    pub fn point_shape(&self, dim: usize) -> PointShape {
        let labeled = match self {
            Self::SemiSupervisedLabeled | Self::PositiveLabeled { .. } => true,
            Self::ClassPriorChange { labeled } => *labeled,
            Self::SameUnlabeled | Self::AddedFeature => false,
        };
        PointShape {
            dim,
            labeled,
            extra_feature: matches!(self, Self::AddedFeature),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PositiveLabeled { target } => write!(f, "positive-labeled({})", target + 1),
            Self::ClassPriorChange { labeled: true } => f.write_str("class-prior-change(labeled)"),
            other => f.write_str(other.name()),
        }
    }
}

/// Parses the names printed by `Display`. Bare `positive-labeled` targets
/// component 1 and bare `class-prior-change` is the unlabeled variant.
impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || {
            Error::Unsupported(format!(
                "unknown scenario `{s}` (expected one of {})",
                Self::NAMES.join(", ")
            ))
        };
        let (name, arg) = match s.split_once('(') {
            Some((name, rest)) => (name, Some(rest.strip_suffix(')').ok_or_else(unknown)?)),
            None => (s, None),
        };
        match (name, arg) {
            ("same-unlabeled", None) => Ok(Self::SameUnlabeled),
            ("semi-supervised", None) => Ok(Self::SemiSupervisedLabeled),
            ("added-feature", None) => Ok(Self::AddedFeature),
            ("positive-labeled", None) => Ok(Self::PositiveLabeled { target: 0 }),
            ("positive-labeled", Some(k)) => match k.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Self::PositiveLabeled { target: k - 1 }),
                _ => Err(unknown()),
            },
            ("class-prior-change", None) => Ok(Self::ClassPriorChange { labeled: false }),
            ("class-prior-change", Some("labeled")) => Ok(Self::ClassPriorChange { labeled: true }),
            ("class-prior-change", Some("unlabeled")) => Ok(Self::ClassPriorChange { labeled: false }),
            _ => Err(unknown()),
        }
    }
}

/// A scenario kind together with the additional-to-initial size ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub alpha: f64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidAlpha(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { kind, alpha })
    }

    /// Number of additional points, `alpha * n`, which must be a positive integer.
    pub fn additional_count(&self, n: usize) -> Result<usize> {
        let m = self.alpha * n as f64;
        let rounded = m.round();
        if (m - rounded).abs() > ALPHA_INTEGRALITY_TOL {
            return Err(Error::InvalidAlpha(format!(
                "alpha * n = {} * {n} = {m} is not an integer",
                self.alpha
            )));
        }
        if rounded < 1.0 {
            return Err(Error::InvalidAlpha(format!(
                "alpha * n = {m} leaves no additional data"
            )));
        }
        Ok(rounded as usize)
    }
}

/// What a coordinate of `u` means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "kebab-case")]
pub enum Coord {
    Mixing { component: usize },
    Mean { component: usize, axis: usize },
    FeatureMean { component: usize },
    AdditionalMixing { component: usize },
}

impl Coord {
    fn component(&self) -> usize {
        match *self {
            Coord::Mixing { component }
            | Coord::Mean { component, .. }
            | Coord::FeatureMean { component }
            | Coord::AdditionalMixing { component } => component,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub kind: ScenarioKind,
    pub k: usize,
    pub dim: usize,
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub psi_i: Vec<usize>,
    pub psi_a: Vec<usize>,
    pub coords: Vec<Coord>,
}

/// Builds the joint layout for a scenario with `k` components of dimension `dim`.
pub fn layout_for(kind: ScenarioKind, k: usize, dim: usize) -> Result<ParameterLayout> {
    if k < 2 {
        return Err(Error::Unsupported(format!(
            "{kind} needs at least two components, got {k}"
        )));
    }
    if dim == 0 {
        return Err(Error::Unsupported("component dimension must be positive".into()));
    }
    let w_dim = GaussianMixture::w_dim_for(k, dim);
    let mixing = (0..k - 1).map(|component| Coord::Mixing { component });
    let means = |component: usize| (0..dim).map(move |axis| Coord::Mean { component, axis });
    let identity: Vec<usize> = (0..w_dim).collect();
    let w_coords: Vec<Coord> = mixing.clone().chain((0..k).flat_map(means)).collect();

    let layout = match kind {
        ScenarioKind::SameUnlabeled | ScenarioKind::SemiSupervisedLabeled => ParameterLayout {
            kind,
            k,
            dim,
            d1: 0,
            d2: w_dim,
            d3: 0,
            psi_i: identity.clone(),
            psi_a: identity,
            coords: w_coords,
        },
        ScenarioKind::PositiveLabeled { target } => {
            if target >= k {
                return Err(Error::Unsupported(format!(
                    "positive-labeled target {} exceeds K = {k}",
                    target + 1
                )));
            }
            let d1 = k - 1 + (k - 1) * dim;
            let mut psi_i: Vec<usize> = (0..k - 1).collect();
            for c in 0..k {
                for axis in 0..dim {
                    psi_i.push(match c.cmp(&target) {
                        std::cmp::Ordering::Equal => d1 + axis,
                        std::cmp::Ordering::Less => k - 1 + c * dim + axis,
                        std::cmp::Ordering::Greater => k - 1 + (c - 1) * dim + axis,
                    });
                }
            }
            let coords = mixing
                .chain((0..k).filter(|c| *c != target).flat_map(means))
                .chain(means(target))
                .collect();
            ParameterLayout {
                kind,
                k,
                dim,
                d1,
                d2: dim,
                d3: 0,
                psi_i,
                psi_a: (d1..d1 + dim).collect(),
                coords,
            }
        }
        ScenarioKind::AddedFeature => ParameterLayout {
            kind,
            k,
            dim,
            d1: 0,
            d2: w_dim,
            d3: k,
            psi_i: identity,
            psi_a: (0..w_dim + k).collect(),
            coords: w_coords
                .into_iter()
                .chain((0..k).map(|component| Coord::FeatureMean { component }))
                .collect(),
        },
        ScenarioKind::ClassPriorChange { .. } => ParameterLayout {
            kind,
            k,
            dim,
            d1: k - 1,
            d2: k * dim,
            d3: k - 1,
            psi_i: identity,
            psi_a: (k - 1..w_dim + k - 1).collect(),
            coords: w_coords
                .into_iter()
                .chain((0..k - 1).map(|component| Coord::AdditionalMixing { component }))
                .collect(),
        },
    };
    debug_assert_eq!(layout.coords.len(), layout.dim_u());
    Ok(layout)
}

impl ParameterLayout {
    pub fn dim_u(&self) -> usize {
        self.d1 + self.d2 + self.d3
    }

    pub fn w_dim(&self) -> usize {
        self.psi_i.len()
    }

    pub fn v_dim(&self) -> usize {
        self.psi_a.len()
    }

    /// Positions of `w` in `u`: `[0, d1 + d2)`.
    pub fn initial_range(&self) -> Range<usize> {
        0..self.d1 + self.d2
    }

    /// Positions of `v` in `u`: `[d1, d1 + d2 + d3)`.
    pub fn additional_range(&self) -> Range<usize> {
        self.d1..self.dim_u()
    }

    pub fn shared_range(&self) -> Range<usize> {
        self.d1..self.d1 + self.d2
    }

    fn check_u(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim_u() {
            return Err(Error::DimensionMismatch {
                expected: self.dim_u(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Reads `w` out of `u`.
    pub fn embed_w(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_u(u)?;
        Ok(self.psi_i.iter().map(|&i| u[i]).collect())
    }

    /// Reads `v` out of `u`.
    pub fn extract_v(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_u(u)?;
        Ok(self.psi_a.iter().map(|&i| u[i]).collect())
    }

    /// Assembles `u` from `w` and `v`; the two must agree on the shared block.
    pub fn project_u(&self, w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.w_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.w_dim(),
                got: w.len(),
            });
        }
        if v.len() != self.v_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.v_dim(),
                got: v.len(),
            });
        }
        let mut u = vec![f64::NAN; self.dim_u()];
        for (&i, &value) in self.psi_i.iter().zip(w) {
            u[i] = value;
        }
        for (&i, &value) in self.psi_a.iter().zip(v) {
            if self.shared_range().contains(&i) && u[i] != value {
                return Err(Error::InvalidArgument(format!(
                    "w and v disagree on shared coordinate {i}: {} vs {value}",
                    u[i]
                )));
            }
            u[i] = value;
        }
        Ok(u)
    }

    /// Scatters a gradient over `w` into a gradient over `u`.
    pub fn scatter_w(&self, grad_w: &[f64], out_u: &mut [f64]) {
        out_u.fill(0.0);
        for (&i, &g) in self.psi_i.iter().zip(grad_w) {
            out_u[i] = g;
        }
    }

    /// Scatters a gradient over `v` into a gradient over `u`.
    pub fn scatter_v(&self, grad_v: &[f64], out_u: &mut [f64]) {
        out_u.fill(0.0);
        for (&i, &g) in self.psi_a.iter().zip(grad_v) {
            out_u[i] = g;
        }
    }

    /// Permutation of `u` induced by relabeling components: component `c`
    /// of the result is component `perm[c]` of the input.
    pub fn permute_components(&self, u: &[f64], perm: &[usize]) -> Result<Vec<f64>> {
        self.check_u(u)?;
        if perm.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: perm.len(),
            });
        }
        // work on full (K-entry) mixing vectors so the implied last ratio moves too
        let w = self.embed_w(u)?;
        let init = GaussianMixture::from_w(&w, self.k, self.dim, 1.0)?;
        let mut out = vec![0.0; u.len()];
        for (pos, coord) in self.coords.iter().enumerate() {
            let src = perm[coord.component()];
            out[pos] = match *coord {
                Coord::Mixing { .. } => init.mixing()[src],
                Coord::Mean { axis, .. } => init.mean(src)[axis],
                Coord::FeatureMean { .. } => u[self.position(Coord::FeatureMean { component: src })],
                Coord::AdditionalMixing { .. } => {
                    let c = self.additional_mixing(u);
                    c[src]
                }
            };
        }
        Ok(out)
    }

    fn position(&self, coord: Coord) -> usize {
        self.coords
            .iter()
            .position(|c| *c == coord)
            .expect("coordinate present in layout")
    }

    /// Full K-vector of additional mixing ratios (class-prior change only).
    fn additional_mixing(&self, u: &[f64]) -> Vec<f64> {
        let mut c: Vec<f64> = (0..self.k - 1)
            .map(|component| u[self.position(Coord::AdditionalMixing { component })])
            .collect();
        c.push(1.0 - c.iter().sum::<f64>());
        c
    }
}

/// Scenario-specific true values that are not part of `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioExtras {
    /// Mixing ratios of the additional data under class-prior change (length K).
    pub class_prior: Vec<f64>,
    /// Means of the extra feature per component (length K).
    pub feature_means: Vec<f64>,
}

impl ScenarioExtras {
    pub fn reference(k: usize) -> Self {
        assert_eq!(k, 2, "reference extras are defined for two components");
        Self {
            class_prior: vec![0.7, 0.3],
            feature_means: vec![0.0, 0.0],
        }
    }
}

/// The joint parameter `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointParameter {
    pub values: Vec<f64>,
}

impl JointParameter {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Decoded additional-data model `p_a(z | v)`.
#[derive(Debug, Clone)]
pub enum AdditionalModel {
    Mixture {
        mixture: GaussianMixture,
        labeled: bool,
    },
    Component {
        mean: Vec<f64>,
        variance: f64,
        target: usize,
    },
    Feature {
        mixture: GaussianMixture,
        feature_means: Vec<f64>,
    },
    ClassPrior {
        mixture: GaussianMixture,
        labeled: bool,
    },
}

/// A scenario bound to a component count, dimension and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub layout: ParameterLayout,
    pub variance: f64,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec, k: usize, dim: usize, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidParams(format!(
                "variance must be positive, got {variance}"
            )));
        }
        Ok(Self {
            layout: layout_for(spec.kind, k, dim)?,
            spec,
            variance,
        })
    }

    pub fn kind(&self) -> ScenarioKind {
        self.spec.kind
    }

    pub fn k(&self) -> usize {
        self.layout.k
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn additional_shape(&self) -> PointShape {
        self.kind().point_shape(self.dim())
    }

    /// Builds `u*` from the initial model and the scenario extras.
    pub fn true_parameter(&self, w: &GaussianMixture, extras: &ScenarioExtras) -> Result<JointParameter> {
        if w.k() != self.k() || w.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.w_dim(),
                got: w.w_dim(),
            });
        }
        let k = self.k();
        let wv = w.to_w();
        let v: Vec<f64> = match self.kind() {
            ScenarioKind::SameUnlabeled | ScenarioKind::SemiSupervisedLabeled => wv.clone(),
            ScenarioKind::PositiveLabeled { target } => w.mean(target).to_vec(),
            ScenarioKind::AddedFeature => {
                if extras.feature_means.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        got: extras.feature_means.len(),
                    });
                }
                wv.iter().chain(&extras.feature_means).copied().collect()
            }
            ScenarioKind::ClassPriorChange { .. } => {
                // validates the additional mixing ratios
                let c = w.with_mixing(extras.class_prior.clone())?;
                w.means_flat().iter().chain(&c.mixing()[..k - 1]).copied().collect()
            }
        };
        Ok(JointParameter::new(self.layout.project_u(&wv, &v)?))
    }

    /// Decodes the initial model `p_i(x | u)`.
    pub fn initial_model(&self, u: &JointParameter) -> Result<GaussianMixture> {
        let w = self.layout.embed_w(u.as_slice())?;
        GaussianMixture::from_w(&w, self.k(), self.dim(), self.variance)
    }

    /// Decodes the additional model `p_a(z | u)`.
    pub fn additional_model(&self, u: &JointParameter) -> Result<AdditionalModel> {
        let v = self.layout.extract_v(u.as_slice())?;
        let (k, dim) = (self.k(), self.dim());
        let w_dim = GaussianMixture::w_dim_for(k, dim);
        Ok(match self.kind() {
            ScenarioKind::SameUnlabeled | ScenarioKind::SemiSupervisedLabeled => AdditionalModel::Mixture {
                mixture: GaussianMixture::from_w(&v, k, dim, self.variance)?,
                labeled: self.kind() == ScenarioKind::SemiSupervisedLabeled,
            },
            ScenarioKind::PositiveLabeled { target } => AdditionalModel::Component {
                mean: v,
                variance: self.variance,
                target,
            },
            ScenarioKind::AddedFeature => AdditionalModel::Feature {
                mixture: GaussianMixture::from_w(&v[..w_dim], k, dim, self.variance)?,
                feature_means: v[w_dim..].to_vec(),
            },
            ScenarioKind::ClassPriorChange { labeled } => {
                // v = (means, c_1..c_{K-1}); reorder into mixture w-order
                let mut cw: Vec<f64> = v[k * dim..].to_vec();
                cw.extend_from_slice(&v[..k * dim]);
                AdditionalModel::ClassPrior {
                    mixture: GaussianMixture::from_w(&cw, k, dim, self.variance)?,
                    labeled,
                }
            }
        })
    }

    /// `ln p_a(z | u)`.
    pub fn logpdf_z(&self, u: &JointParameter, z: &LabeledPoint) -> Result<f64> {
        let model = self.additional_model(u)?;
        model.check_point(z, &self.spec.kind)?;
        Ok(model.logpdf(z))
    }

    /// Gradient of `ln p_a(z | u)` over the whole of `u`; the initial-only
    /// block is identically zero.
    pub fn score_z(&self, u: &JointParameter, z: &LabeledPoint) -> Result<Vec<f64>> {
        let model = self.additional_model(u)?;
        model.check_point(z, &self.spec.kind)?;
        let mut scratch = vec![0.0; self.k()];
        let mut grad_v = vec![0.0; self.layout.v_dim()];
        model.score_v_into(z, &mut scratch, &mut grad_v);
        let mut out = vec![0.0; self.layout.dim_u()];
        self.layout.scatter_v(&grad_v, &mut out);
        Ok(out)
    }

    /// Draws `m` additional points from `p_a(z | u)` together with the latent
    /// component of each point.
    pub fn sample_additional_with_latent(
        &self,
        u: &JointParameter,
        m: usize,
        stream: Stream,
    ) -> Result<(Dataset, Vec<usize>)> {
        if m == 0 {
            return Err(Error::Empty("additional sample request"));
        }
        let model = self.additional_model(u)?;
        let draws = sample_chunked(m, stream, |rng| model.sample(rng));
        let (points, latent) = draws.into_iter().unzip();
        Ok((Dataset::new(points, DatasetKind::Additional)?, latent))
    }

    pub fn sample_additional(&self, u: &JointParameter, m: usize, stream: Stream) -> Result<Dataset> {
        Ok(self.sample_additional_with_latent(u, m, stream)?.0)
    }

    /// Validates an additional data set against this scenario.
    pub fn check_additional(&self, data: &Dataset) -> Result<()> {
        let expected = self.additional_shape();
        if data.shape() != expected {
            return Err(Error::ShapeMismatch {
                scenario: self.kind().to_string(),
                detail: format!("expected {expected:?}, found {:?}", data.shape()),
            });
        }
        data.check_labels(self.k())?;
        if let ScenarioKind::PositiveLabeled { target } = self.kind() {
            if let Some(p) = data.points().iter().find(|p| p.y != Some(target)) {
                return Err(Error::ShapeMismatch {
                    scenario: self.kind().to_string(),
                    detail: format!(
                        "point labeled {:?} in a positive set for {}",
                        p.y.map(|y| y + 1),
                        target + 1
                    ),
                });
            }
        }
        Ok(())
    }
}

impl AdditionalModel {
    fn check_point(&self, z: &LabeledPoint, kind: &ScenarioKind) -> Result<()> {
        let dim = match self {
            Self::Mixture { mixture, .. } | Self::Feature { mixture, .. } | Self::ClassPrior { mixture, .. } => {
                mixture.dim()
            }
            Self::Component { mean, .. } => mean.len(),
        };
        let expected = kind.point_shape(dim);
        let mismatch = |detail: String| Error::ShapeMismatch {
            scenario: kind.to_string(),
            detail,
        };
        if z.shape() != expected {
            return Err(mismatch(format!("expected {expected:?}, found {:?}", z.shape())));
        }
        if let Some(y) = z.y {
            let k = match self {
                Self::Mixture { mixture, .. } | Self::Feature { mixture, .. } | Self::ClassPrior { mixture, .. } => {
                    mixture.k()
                }
                Self::Component { target, .. } => {
                    if y != *target {
                        return Err(mismatch(format!(
                            "label {} in a positive set for {}",
                            y + 1,
                            target + 1
                        )));
                    }
                    usize::MAX
                }
            };
            if y >= k {
                return Err(Error::LabelOutOfRange { label: y + 1, k });
            }
        }
        Ok(())
    }

    /// `ln p_a(z)`; the point must have the scenario's shape.
    pub fn logpdf(&self, z: &LabeledPoint) -> f64 {
        match self {
            Self::Mixture { mixture, labeled } | Self::ClassPrior { mixture, labeled } => match (labeled, z.y) {
                (true, Some(y)) => mixture.mixing()[y].ln() + mixture.log_component(y, &z.x),
                _ => mixture.logpdf_x(&z.x),
            },
            Self::Component { mean, variance, .. } => log_normal(&z.x, mean, *variance),
            Self::Feature { mixture, feature_means } => {
                let xp = z.x_prime.unwrap_or(f64::NAN);
                let terms: Vec<f64> = (0..mixture.k())
                    .map(|k| {
                        mixture.mixing()[k].ln()
                            + mixture.log_component(k, &z.x)
                            + log_normal(&[xp], &[feature_means[k]], 1.0)
                    })
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }

    /// Gradient over `v`; `scratch` must hold K entries.
    pub fn score_v_into(&self, z: &LabeledPoint, scratch: &mut [f64], out: &mut [f64]) {
        match self {
            Self::Mixture { mixture, labeled } => match (labeled, z.y) {
                (true, Some(y)) => mixture.score_xy_into(&z.x, y, scratch, out),
                _ => mixture.score_x_into(&z.x, scratch, out),
            },
            Self::Component { mean, variance, .. } => {
                for ((o, x), m) in out.iter_mut().zip(&z.x).zip(mean) {
                    *o = (x - m) / variance;
                }
            }
            Self::Feature { mixture, feature_means } => {
                let xp = z.x_prime.unwrap_or(f64::NAN);
                let k = mixture.k();
                for (c, s) in scratch.iter_mut().enumerate() {
                    *s = mixture.mixing()[c].ln()
                        + mixture.log_component(c, &z.x)
                        + log_normal(&[xp], &[feature_means[c]], 1.0);
                }
                normalize_log_weights(scratch);
                let w_dim = mixture.w_dim();
                mixture.score_from_weights(&z.x, scratch, &mut out[..w_dim]);
                for c in 0..k {
                    out[w_dim + c] = scratch[c] * (xp - feature_means[c]);
                }
            }
            Self::ClassPrior { mixture, labeled } => {
                // mixture order is (c_1..c_{K-1}, means); v order is (means, c)
                let k = mixture.k();
                let w_dim = mixture.w_dim();
                let mut grad = vec![0.0; w_dim];
                match (labeled, z.y) {
                    (true, Some(y)) => mixture.score_xy_into(&z.x, y, scratch, &mut grad),
                    _ => mixture.score_x_into(&z.x, scratch, &mut grad),
                }
                let means = w_dim - (k - 1);
                out[..means].copy_from_slice(&grad[k - 1..]);
                out[means..].copy_from_slice(&grad[..k - 1]);
            }
        }
    }

    /// Draws one point and its latent component.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (LabeledPoint, usize) {
        match self {
            Self::Mixture { mixture, labeled } | Self::ClassPrior { mixture, labeled } => {
                let p = mixture.sample_point(rng, &mixture.label_distribution());
                let y = p.y.expect("sampled points carry labels");
                let point = if *labeled { p } else { LabeledPoint::unlabeled(p.x) };
                (point, y)
            }
            Self::Component { mean, variance, target } => {
                let sd = variance.sqrt();
                let x = mean
                    .iter()
                    .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                (LabeledPoint::labeled(x, *target), *target)
            }
            Self::Feature { mixture, feature_means } => {
                let p = mixture.sample_point(rng, &mixture.label_distribution());
                let y = p.y.expect("sampled points carry labels");
                let xp = feature_means[y] + rng.sample::<f64, _>(StandardNormal);
                (LabeledPoint::with_feature(p.x, xp), y)
            }
        }
    }
}
