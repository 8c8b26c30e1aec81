//! The synthetic Gaussian-mixture experiment and the data-set selection
//! workflow built on it.
//!
//! Random streams form a tree rooted at the master seed:
//! `trials / n / trial / {initial, scenario s / {additional, em, fisher}}`,
//! so every trial is reproducible on its own and independent of execution
//! order.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{ic_report, ICReport, VERDICT_TOL};
use crate::dataset::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::estimator::{map_em, EmOptions, MapEstimate, PriorHyperparams};
use crate::fisher::{FisherMethod, FisherTriple, QuadratureGrid, DEFAULT_N_PRIME};
use crate::format;
use crate::mixtures::GaussianMixture;
use crate::rng::Stream;
use crate::scenarios::{Scenario, ScenarioExtras, ScenarioKind, ScenarioSpec};

/// The four additional data sets of the reference experiment, in table order.
pub const REFERENCE_SCENARIOS: [ScenarioKind; 4] = [
    ScenarioKind::SameUnlabeled,
    ScenarioKind::PositiveLabeled { target: 0 },
    ScenarioKind::AddedFeature,
    ScenarioKind::ClassPriorChange { labeled: false },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mixing: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variance: f64,
    pub extras: ScenarioExtras,
    pub scenarios: Vec<ScenarioKind>,
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub alpha: f64,
    /// Draws per Fisher matrix for estimated parameters.
    pub n_prime: usize,
    pub master_seed: u64,
    /// Fisher method at the true parameter.
    pub true_row_method: FisherMethod,
    pub prior: PriorHyperparams,
    pub em: EmOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mixing: vec![0.3, 0.7],
            means: vec![vec![0.0], vec![-2.0]],
            variance: 1.0,
            extras: ScenarioExtras::reference(2),
            scenarios: REFERENCE_SCENARIOS.to_vec(),
            n_list: vec![10, 50, 100, 500, 1000],
            trials: 5,
            alpha: 1.0,
            n_prime: DEFAULT_N_PRIME,
            master_seed: 20_240_101,
            true_row_method: FisherMethod::Quadrature(QuadratureGrid::default()),
            prior: PriorHyperparams::default(),
            em: EmOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn true_mixture(&self) -> Result<GaussianMixture> {
        GaussianMixture::new(self.mixing.clone(), self.means.clone(), self.variance)
    }

    pub fn k(&self) -> usize {
        self.mixing.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Binds `kind` to this configuration's mixture shape.
    pub fn scenario(&self, kind: ScenarioKind, alpha: f64) -> Result<Scenario> {
        Scenario::new(ScenarioSpec::new(kind, alpha)?, self.k(), self.dim(), self.variance)
    }

    pub fn validate(&self) -> Result<()> {
        self.true_mixture()?;
        self.prior.validate()?;
        if self.scenarios.is_empty() {
            return Err(Error::InvalidArgument("no scenarios configured".into()));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::InvalidArgument("initial sizes must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trial count must be positive".into()));
        }
        if self.n_prime == 0 {
            return Err(Error::InvalidArgument("n_prime must be positive".into()));
        }
        for &kind in &self.scenarios {
            let scenario = self.scenario(kind, self.alpha)?;
            for &n in &self.n_list {
                scenario.spec.additional_count(n)?;
            }
        }
        Ok(())
    }
}

/// IC at the true parameter for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueRowEntry {
    pub scenario: ScenarioKind,
    pub label: String,
    #[serde(serialize_with = "format::serialize_vec")]
    pub u_star: Vec<f64>,
    pub report: ICReport,
}

/// IC for every configured scenario at `u*`, without estimation.
pub fn run_true_row(config: &ExperimentConfig) -> Result<Vec<TrueRowEntry>> {
    let truth = config.true_mixture()?;
    let root = Stream::new(config.master_seed).named("true-row");
    config
        .scenarios
        .par_iter()
        .enumerate()
        .map(|(s, &kind)| {
            let scenario = config.scenario(kind, config.alpha.max(f64::MIN_POSITIVE))?;
            let u = scenario.true_parameter(&truth, &config.extras)?;
            let triple = FisherTriple::compute(&scenario, &u, config.true_row_method, root.child(s as u64))?;
            Ok(TrueRowEntry {
                scenario: kind,
                label: kind.to_string(),
                u_star: u.values,
                report: ic_report(&triple, &scenario.layout, config.alpha, VERDICT_TOL)?,
            })
        })
        .collect()
}

/// Outcome of one scenario within one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub scenario: ScenarioKind,
    pub label: String,
    #[serde(serialize_with = "format::serialize_vec")]
    pub u_hat: Vec<f64>,
    pub converged: bool,
    pub report: Option<ICReport>,
    /// Why no report was produced.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub n: usize,
    pub trial: usize,
    pub outcomes: Vec<ScenarioOutcome>,
    /// Label of the scenario with the largest log IC.
    pub selected: Option<String>,
    /// Set when any scenario failed or its EM did not converge.
    pub flagged: bool,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// MAP estimate, Fisher matrices regenerated from it, and the IC report.
pub fn estimate_ic(
    scenario: &Scenario,
    init: &Dataset,
    add: &Dataset,
    config: &ExperimentConfig,
    method: FisherMethod,
    stream: Stream,
) -> Result<(MapEstimate, ICReport)> {
    let estimate = map_em(scenario, init, add, &config.prior, &config.em, stream.named("em"))?;
    let triple = FisherTriple::compute(scenario, &estimate.u_hat, method, stream.named("fisher"))?;
    let report = ic_report(&triple, &scenario.layout, scenario.spec.alpha, VERDICT_TOL)?;
    Ok((estimate, report))
}

fn run_scenario(
    config: &ExperimentConfig,
    truth: &GaussianMixture,
    init: &Dataset,
    n: usize,
    kind: ScenarioKind,
    stream: Stream,
) -> Result<ScenarioOutcome> {
    let scenario = config.scenario(kind, config.alpha)?;
    let u_star = scenario.true_parameter(truth, &config.extras)?;
    let m = scenario.spec.additional_count(n)?;
    let add = scenario.sample_additional(&u_star, m, stream.named("additional"))?;
    let method = FisherMethod::MonteCarlo {
        n_prime: config.n_prime,
    };
    let estimate = map_em(&scenario, init, &add, &config.prior, &config.em, stream.named("em"))?;
    let report = FisherTriple::compute(&scenario, &estimate.u_hat, method, stream.named("fisher"))
        .and_then(|triple| ic_report(&triple, &scenario.layout, config.alpha, VERDICT_TOL));
    let (report, error) = match report {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ScenarioOutcome {
        scenario: kind,
        label: kind.to_string(),
        u_hat: estimate.u_hat.values,
        converged: estimate.converged,
        report,
        error,
    })
}

fn run_trial(config: &ExperimentConfig, truth: &GaussianMixture, n: usize, trial: usize) -> Result<TrialResult> {
    let start = Instant::now();
    let stream = Stream::new(config.master_seed)
        .named("trials")
        .child(n as u64)
        .child(trial as u64);
    let init = truth.sample_xy(n, stream.named("initial"))?.without_labels();
    let outcomes: Vec<ScenarioOutcome> = config
        .scenarios
        .par_iter()
        .enumerate()
        .map(|(s, &kind)| {
            run_scenario(config, truth, &init, n, kind, stream.named("scenario").child(s as u64)).unwrap_or_else(|e| {
                ScenarioOutcome {
                    scenario: kind,
                    label: kind.to_string(),
                    u_hat: Vec::new(),
                    converged: false,
                    report: None,
                    error: Some(e.to_string()),
                }
            })
        })
        .collect();
    let selected =
        select_best(outcomes.iter().map(|o| o.report.as_ref().map(|r| r.log_ic))).map(|i| outcomes[i].label.clone());
    let flagged = outcomes.iter().any(|o| o.report.is_none() || !o.converged);
    Ok(TrialResult {
        n,
        trial,
        outcomes,
        selected,
        flagged,
        elapsed: start.elapsed(),
    })
}

/// Index of the largest value; earlier entries win ties.
fn select_best(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v {
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Every `(n, trial)` of the configuration, ordered by `n` then trial.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let truth = config.true_mixture()?;
    let jobs: Vec<(usize, usize)> = config
        .n_list
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();
    jobs.into_par_iter()
        .map(|(n, t)| run_trial(config, &truth, n, t))
        .collect()
}

/// Mean and sample standard deviation of log IC per `(n, scenario)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub scenario: String,
    /// Trials that produced a report.
    pub count: usize,
    pub mean_log_ic: f64,
    pub std_log_ic: f64,
}

pub fn summarize(results: &[TrialResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, String)> = Vec::new();
    for r in results {
        for o in &r.outcomes {
            let key = (r.n, o.label.clone());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    keys.into_iter()
        .map(|(n, label)| {
            let values: Vec<f64> = results
                .iter()
                .filter(|r| r.n == n)
                .flat_map(|r| &r.outcomes)
                .filter(|o| o.label == label)
                .filter_map(|o| o.report.as_ref().map(|rep| rep.log_ic))
                .collect();
            let (mean, std) = mean_std(&values);
            SummaryRow {
                n,
                scenario: label,
                count: values.len(),
                mean_log_ic: mean,
                std_log_ic: std,
            }
        })
        .collect()
}

/// Arithmetic mean and sample (`n − 1`) standard deviation; a single value
/// has deviation zero and an empty slice gives NaNs.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "scenario", "count", "mean_log_ic", "std_log_ic"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.scenario.clone(),
            r.count.to_string(),
            format::fmt9(r.mean_log_ic),
            format::fmt9(r.std_log_ic),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// An additional data set offered for selection.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub label: String,
    pub data: Dataset,
    pub kind: ScenarioKind,
    /// Defaults to `|data| / |init|`.
    pub alpha: Option<f64>,
}

/// A candidate file; see [`rank_additional_files`].
#[derive(Debug, Clone)]
pub struct CandidateFile {
    pub path: PathBuf,
    pub kind: ScenarioKind,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCandidate {
    /// 1-based position in the ranking.
    pub rank: usize,
    /// Position in the input list.
    pub index: usize,
    pub label: String,
    pub scenario: ScenarioKind,
    #[serde(serialize_with = "format::serialize_vec")]
    pub u_hat: Vec<f64>,
    pub converged: bool,
    pub report: ICReport,
}

/// Size ratio of an additional to an initial data set.
pub fn default_alpha(init: &Dataset, add: &Dataset) -> f64 {
    add.len() as f64 / init.len() as f64
}

/// Estimates, computes IC for each candidate and sorts by descending log IC;
/// ties keep input order. Errors name the offending candidate.
pub fn rank_additional(
    init: &Dataset,
    candidates: &[Candidate],
    config: &ExperimentConfig,
) -> Result<Vec<RankedCandidate>> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    let root = Stream::new(config.master_seed).named("rank");
    let method = FisherMethod::MonteCarlo {
        n_prime: config.n_prime,
    };
    let mut ranked = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let wrap = |e: Error| Error::Candidate {
                label: c.label.clone(),
                source: Box::new(e),
            };
            let alpha = c.alpha.unwrap_or_else(|| default_alpha(init, &c.data));
            let scenario = config.scenario(c.kind, alpha).map_err(wrap)?;
            let (estimate, report) =
                estimate_ic(&scenario, init, &c.data, config, method, root.child(i as u64)).map_err(wrap)?;
            Ok(RankedCandidate {
                rank: 0,
                index: i,
                label: c.label.clone(),
                scenario: c.kind,
                u_hat: estimate.u_hat.values,
                converged: estimate.converged,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.report.log_ic.total_cmp(&a.report.log_ic).then(a.index.cmp(&b.index)));
    for (r, c) in ranked.iter_mut().enumerate() {
        c.rank = r + 1;
    }
    Ok(ranked)
}

/// [`rank_additional`] on CSV files; candidates are labeled by path.
pub fn rank_additional_files(
    init_path: &Path,
    candidates: &[CandidateFile],
    config: &ExperimentConfig,
) -> Result<Vec<RankedCandidate>> {
    let init = Dataset::read_csv_path(init_path, DatasetKind::Initial, config.k())?;
    let loaded = candidates
        .iter()
        .map(|c| {
            let label = c.path.display().to_string();
            let data =
                Dataset::read_csv_path(&c.path, DatasetKind::Additional, config.k()).map_err(|e| Error::Candidate {
                    label: label.clone(),
                    source: Box::new(e),
                })?;
            Ok(Candidate {
                label,
                data,
                kind: c.kind,
                alpha: c.alpha,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rank_additional(&init, &loaded, config)
}
