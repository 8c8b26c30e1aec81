//! Configuration file loading.
//!
//! The file is TOML with flat keys; grouped settings use dotted keys:
//!
//! ```toml
//! seed = 7
//! n_list = [10, 100]
//! em.restarts = 4
//! fisher.n_prime = 100000
//! fisher.true_row = "quadrature"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clusterinfo::experiment::ExperimentConfig;
use clusterinfo::{FisherMethod, QuadratureGrid, ScenarioKind};
use serde::Deserialize;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "CLUSTERINFO_CONFIG";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    seed: Option<u64>,
    alpha: Option<f64>,
    n_list: Option<Vec<usize>>,
    trials: Option<usize>,
    mixing: Option<Vec<f64>>,
    means: Option<Means>,
    variance: Option<f64>,
    scenarios: Option<Vec<String>>,
    #[serde(default)]
    em: EmSection,
    #[serde(default)]
    prior: PriorSection,
    #[serde(default)]
    fisher: FisherSection,
    #[serde(default)]
    extras: ExtrasSection,
}

/// Means as one scalar per component or one vector per component.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Means {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmSection {
    tol: Option<f64>,
    max_iters: Option<usize>,
    restarts: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorSection {
    dirichlet_concentration: Option<f64>,
    mean_prior_variance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FisherSection {
    n_prime: Option<usize>,
    /// `quadrature` or `monte-carlo`.
    true_row: Option<String>,
    quadrature_points: Option<usize>,
    halfwidth_sigmas: Option<f64>,
    check_resolution: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtrasSection {
    class_prior: Option<Vec<f64>>,
    feature_means: Option<Vec<f64>>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl FileConfig {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        toml::from_str(text).with_context(|| format!("invalid config file {}", source.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text, path)
    }

    /// Overlays the file's values on `base`.
    pub fn apply(self, mut base: ExperimentConfig) -> Result<ExperimentConfig> {
        set(&mut base.master_seed, self.seed);
        set(&mut base.alpha, self.alpha);
        set(&mut base.n_list, self.n_list);
        set(&mut base.trials, self.trials);
        set(&mut base.mixing, self.mixing);
        set(&mut base.variance, self.variance);
        if let Some(means) = self.means {
            base.means = match means {
                Means::Scalar(v) => v.into_iter().map(|b| vec![b]).collect(),
                Means::Vector(v) => v,
            };
        }
        if let Some(names) = self.scenarios {
            base.scenarios = names
                .iter()
                .map(|n| n.parse::<ScenarioKind>())
                .collect::<Result<_, _>>()?;
        }
        set(&mut base.em.tol, self.em.tol);
        set(&mut base.em.max_iters, self.em.max_iters);
        set(&mut base.em.restarts, self.em.restarts);
        set(
            &mut base.prior.dirichlet_concentration,
            self.prior.dirichlet_concentration,
        );
        set(&mut base.prior.mean_prior_variance, self.prior.mean_prior_variance);
        set(&mut base.extras.class_prior, self.extras.class_prior);
        set(&mut base.extras.feature_means, self.extras.feature_means);
        set(&mut base.n_prime, self.fisher.n_prime);

        let mut grid = match base.true_row_method {
            FisherMethod::Quadrature(g) => g,
            FisherMethod::MonteCarlo { .. } => QuadratureGrid::default(),
        };
        set(&mut grid.points, self.fisher.quadrature_points);
        set(&mut grid.halfwidth_sigmas, self.fisher.halfwidth_sigmas);
        set(&mut grid.check_resolution, self.fisher.check_resolution);
        let quadrature = match self.fisher.true_row.as_deref() {
            None => matches!(base.true_row_method, FisherMethod::Quadrature(_)),
            Some("quadrature") => true,
            Some("monte-carlo") => false,
            Some(other) => bail!("fisher.true_row must be `quadrature` or `monte-carlo`, got `{other}`"),
        };
        base.true_row_method = if quadrature {
            FisherMethod::Quadrature(grid)
        } else {
            FisherMethod::MonteCarlo { n_prime: base.n_prime }
        };
        Ok(base)
    }
}

/// The config path from the flag, else from the environment.
pub fn resolve_path(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| {
        std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
}

/// Defaults overlaid with the config file, if any.
pub fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    let base = ExperimentConfig::default();
    match path {
        Some(p) => FileConfig::load(p)?.apply(base),
        None => Ok(base),
    }
}
