//! Configuration-driven experiment runner.
//!
//! Five scenarios reproduce the library's qualitative claims:
//!
//! - `contamination`: scale-uniform data with a far-out contaminated
//!   fraction; records how the likelihood posterior jumps to the
//!   contaminant while the robust posterior stays at the truth.
//! - `agreement`: a regular family without contamination; records the
//!   squared Hellinger distance between the likelihood posterior and the
//!   robust posterior along a ladder of sample sizes, plus its log-log
//!   slope.
//! - `histogram`: Dirichlet Monte Carlo prior over histograms; records the
//!   posterior-mean Hellinger distance to the truth and ball masses.
//! - `model_selection`: a nested ladder of polynomial exponential-family
//!   nets with penalties; records per-model posterior masses and the
//!   selected model.
//! - `bounds_report`: tabulates every computable bound for a net/prior.
//!
//! Every run is reproducible bit-for-bit from `(config, seed)`:
//! replication `r` derives its RNG stream from the pair `(seed, r)` only, so
//! results do not depend on thread count, and rows are emitted in a fixed
//! order. Output is CSV with a fixed header plus a sidecar metadata file
//! carrying the config hash, the seed and the crate version.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bounds::{self, BoundReport, BoundsError};
use crate::estimators::EstimatorError;
use crate::kernel::{self, KernelError};
use crate::model::{
    build_grid_net, dirichlet_prior_net, sample_dataset, Contaminant,
    ContaminationSpec, DensityMember, ExpFamilySpec, FamilySpec, ModelError, Net, Partition,
    WeightVector,
};
use crate::posterior::{
    classical_posterior, model_selection_posterior, penalty, posterior_ball_mass,
    posterior_hellinger_sq, rho_posterior, DensityMatrix, ModelCollection, ModelEntry,
    PosteriorError,
};

/// Errors from configuration validation and experiment execution.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("posterior error: {0}")]
    Posterior(#[from] PosteriorError),
    #[error("bounds error: {0}")]
    Bounds(#[from] BoundsError),
    #[error("estimator error: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("kernel error: {0}")]
    Kernel(#[from] KernelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// True when the error indicates invalid configuration rather than a
    /// numerical failure during computation.
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
    }
}

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Contamination,
    Agreement,
    Histogram,
    ModelSelection,
    BoundsReport,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Contamination => "contamination",
            Scenario::Agreement => "agreement",
            Scenario::Histogram => "histogram",
            Scenario::ModelSelection => "model_selection",
            Scenario::BoundsReport => "bounds_report",
        }
    }
}

/// An inclusive arithmetic grid `lo, lo+step, ..., <= hi`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>, ExperimentError> {
        if !(self.step > 0.0) || self.hi < self.lo {
            return Err(ExperimentError::Config(format!(
                "grid must have positive step and hi >= lo, got {self:?}"
            )));
        }
        let mut axis = Vec::new();
        let mut v = self.lo;
        while v <= self.hi + 1e-12 {
            axis.push(v);
            v += self.step;
        }
        Ok(axis)
    }
}

/// Family and net description.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    UniformScale { grid: GridSpec },
    UniformCube { axes: Vec<GridSpec> },
    GammaTranslation { alpha: f64, grid: GridSpec },
    Histogram { edges: Vec<f64> },
    ExpFamily { degree: usize, bound: f64, axes: Vec<GridSpec> },
}

/// Prior over the net.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    /// Uniform weights on the grid net.
    Uniform,
    /// Monte Carlo atoms drawn from a Dirichlet distribution (histogram
    /// family only); replaces the grid net.
    Dirichlet { alpha: Vec<f64>, atoms: usize },
    /// Weights proportional to `param^-alpha` (scale-uniform family only).
    PowerLaw { alpha: f64 },
}

/// Contamination mixed into every sampled dataset.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationConfig {
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Extra knobs for the model-selection scenario.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSelectionConfig {
    /// Highest polynomial degree in the ladder.
    pub m_max: usize,
    /// Coefficient box half-width.
    pub bound: f64,
    /// Grid values per free coefficient (symmetric around zero).
    pub values_per_axis: usize,
}

/// Extra knobs for the bounds report.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Sample size the bounds refer to.
    pub n: usize,
    /// Monte Carlo replications for the fluctuation estimate (0 disables).
    pub mc_reps: usize,
    /// Combinatorial dimension of the score class, when known.
    pub vc_dim: Option<usize>,
    pub xi: f64,
    pub xi_prime: f64,
}

/// A full experiment description, deserialized from JSON.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub family: FamilyConfig,
    pub prior: PriorConfig,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub n_ladder: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Parameters of the data-generating density (family member).
    pub truth: Vec<f64>,
    #[serde(default)]
    pub contamination: Option<ContaminationConfig>,
    #[serde(default)]
    pub model_selection: Option<ModelSelectionConfig>,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    /// Output directory; overridable by CLI flag and environment variable.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Hellinger radius used for ball-mass metrics.
    #[serde(default = "default_ball_radius")]
    pub ball_radius: f64,
}

fn default_beta() -> f64 {
    kernel::DEFAULT_BETA
}

fn default_ball_radius() -> f64 {
    0.2
}

/// One output record.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: &'static str,
    pub n: usize,
    pub replication: usize,
    pub metric: String,
    pub value: f64,
}

/// The closed vocabulary of metric names; `model_mass_<m>` is the one
/// parametrized entry.
pub const METRIC_NAMES: &[&str] = &[
    "classical_median",
    "rho_median",
    "classical_ball_mass_truth",
    "rho_ball_mass_truth",
    "classical_ball_mass_contaminant",
    "rho_ball_mass_contaminant",
    "agreement_h2",
    "agreement_h2_median",
    "loglog_slope",
    "loglog_slope_stderr",
    "post_mean_hellinger",
    "ball_mass_truth",
    "selected_model",
];

/// Check a metric name against the closed vocabulary.
pub fn is_known_metric(name: &str) -> bool {
    if METRIC_NAMES.contains(&name) {
        return true;
    }
    name.strip_prefix("model_mass_")
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

impl ExperimentConfig {
    /// Parse a JSON config; parse errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(ExperimentError::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.scenario != Scenario::BoundsReport {
            if self.n_ladder.is_empty() {
                return Err(ExperimentError::Config("n_ladder must be nonempty".into()));
            }
            if self.replications == 0 {
                return Err(ExperimentError::Config("replications must be positive".into()));
            }
        }
        if self.n_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::Config(
                "n_ladder must be strictly increasing".into(),
            ));
        }
        if let Some(c) = &self.contamination {
            if !(0.0..=1.0).contains(&c.rate) || !(c.lo < c.hi) {
                return Err(ExperimentError::Config(format!(
                    "contamination needs rate in [0,1] and lo < hi, got {c:?}"
                )));
            }
        }
        match (&self.scenario, &self.family) {
            (Scenario::Contamination, FamilyConfig::UniformScale { .. }) => {}
            (Scenario::Contamination, f) => {
                return Err(ExperimentError::Config(format!(
                    "contamination scenario needs the uniform_scale family, got {f:?}"
                )))
            }
            (Scenario::Agreement, FamilyConfig::ExpFamily { .. })
            | (Scenario::Agreement, FamilyConfig::Histogram { .. }) => {}
            (Scenario::Agreement, f) => {
                return Err(ExperimentError::Config(format!(
                    "agreement scenario needs a regular family (exp_family or histogram), got {f:?}"
                )))
            }
            (Scenario::Histogram, FamilyConfig::Histogram { .. }) => {}
            (Scenario::Histogram, f) => {
                return Err(ExperimentError::Config(format!(
                    "histogram scenario needs the histogram family, got {f:?}"
                )))
            }
            (Scenario::ModelSelection, FamilyConfig::ExpFamily { .. }) => {}
            (Scenario::ModelSelection, f) => {
                return Err(ExperimentError::Config(format!(
                    "model_selection scenario needs the exp_family family, got {f:?}"
                )))
            }
            (Scenario::BoundsReport, _) => {}
        }
        if self.scenario == Scenario::ModelSelection && self.model_selection.is_none() {
            return Err(ExperimentError::Config(
                "model_selection scenario needs a model_selection section".into(),
            ));
        }
        if self.scenario == Scenario::BoundsReport && self.bounds.is_none() {
            return Err(ExperimentError::Config(
                "bounds_report scenario needs a bounds section".into(),
            ));
        }
        if matches!(self.prior, PriorConfig::Dirichlet { .. })
            && !matches!(self.family, FamilyConfig::Histogram { .. })
        {
            return Err(ExperimentError::Config(
                "the Dirichlet prior applies to the histogram family only".into(),
            ));
        }
        if matches!(self.prior, PriorConfig::PowerLaw { .. })
            && !matches!(self.family, FamilyConfig::UniformScale { .. })
        {
            return Err(ExperimentError::Config(
                "the power-law prior applies to the uniform_scale family only".into(),
            ));
        }
        Ok(())
    }

    fn family_spec(&self) -> Result<FamilySpec, ExperimentError> {
        Ok(match &self.family {
            FamilyConfig::UniformScale { .. } => FamilySpec::UniformScale,
            FamilyConfig::UniformCube { axes } => FamilySpec::UniformCube { d: axes.len() },
            FamilyConfig::GammaTranslation { alpha, .. } => {
                FamilySpec::GammaTranslation { alpha: *alpha }
            }
            FamilyConfig::Histogram { edges } => FamilySpec::Histogram {
                partition: Partition::new(edges.clone())?,
            },
            FamilyConfig::ExpFamily { degree, bound, .. } => {
                FamilySpec::ExpFamily(ExpFamilySpec::new(*degree, *bound)?)
            }
        })
    }

    fn truth_member(&self) -> Result<DensityMember, ExperimentError> {
        Ok(self.family_spec()?.member(&self.truth)?)
    }

    /// Build the net and prior for the scenario.
    pub fn net_and_prior(&self) -> Result<(Net, WeightVector), ExperimentError> {
        if let PriorConfig::Dirichlet { alpha, atoms } = &self.prior {
            let FamilyConfig::Histogram { edges } = &self.family else {
                return Err(ExperimentError::Config(
                    "Dirichlet prior needs the histogram family".into(),
                ));
            };
            let partition = Partition::new(edges.clone())?;
            return Ok(dirichlet_prior_net(alpha, partition, *atoms, self.seed)?);
        }
        let spec = self.family_spec()?;
        let axes: Vec<Vec<f64>> = match &self.family {
            FamilyConfig::UniformScale { grid } | FamilyConfig::GammaTranslation { grid, .. } => {
                vec![grid.values()?]
            }
            FamilyConfig::UniformCube { axes } | FamilyConfig::ExpFamily { axes, .. } => {
                axes.iter().map(|g| g.values()).collect::<Result<_, _>>()?
            }
            FamilyConfig::Histogram { .. } => {
                return Err(ExperimentError::Config(
                    "histogram nets come from the Dirichlet prior section".into(),
                ))
            }
        };
        let net = build_grid_net(&spec, &axes)?;
        let prior = match &self.prior {
            PriorConfig::Uniform => WeightVector::uniform(net.len())?,
            PriorConfig::PowerLaw { alpha } => {
                let raw: Vec<f64> = net
                    .members()
                    .iter()
                    .map(|m| m.params()[0].powf(-alpha))
                    .collect();
                let z: f64 = raw.iter().sum();
                WeightVector::new(raw.iter().map(|&w| w / z).collect())?
            }
            PriorConfig::Dirichlet { .. } => unreachable!("handled above"),
        };
        Ok((net, prior))
    }

    fn contamination_spec(&self) -> Result<Option<ContaminationSpec>, ExperimentError> {
        Ok(match &self.contamination {
            None => None,
            Some(c) => Some(ContaminationSpec::new(
                c.rate,
                Contaminant::Uniform { lo: c.lo, hi: c.hi },
            )?),
        })
    }
}

fn rep_seed(seed: u64, n: usize, rep: usize) -> u64 {
    let mix = (n as u64)
        .wrapping_mul(0xA24B_AED4_963E_E407)
        .wrapping_add(rep as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    seed ^ mix
}

/// Weighted median of the first parameter under posterior weights: the
/// smallest grid value whose cumulative mass reaches one half.
fn weighted_median(net: &Net, weights: &[f64]) -> f64 {
    let mut pairs: Vec<(f64, f64)> = net
        .members()
        .iter()
        .map(|m| m.params()[0])
        .zip(weights.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut acc = 0.0;
    for (v, w) in &pairs {
        acc += w;
        if acc >= 0.5 {
            return *v;
        }
    }
    pairs.last().map_or(f64::NAN, |p| p.0)
}

/// Contamination experiment: per replication, both posteriors' medians and
/// ball masses around the truth and around the contaminant location.
pub fn run_contamination(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    cfg.validate()?;
    if cfg.scenario != Scenario::Contamination {
        return Err(ExperimentError::Config("scenario must be contamination".into()));
    }
    let (net, prior) = cfg.net_and_prior()?;
    let truth = cfg.truth_member()?;
    let contamination = cfg.contamination_spec()?;
    let contaminant_center = match &cfg.contamination {
        Some(c) => DensityMember::uniform_scale(0.5 * (c.lo + c.hi))?,
        None => DensityMember::uniform_scale(cfg.truth[0] + 100.0)?,
    };
    let dists_truth = net.distances_from(&truth)?;
    let dists_cont = net.distances_from(&contaminant_center)?;
    let mut rows = Vec::new();
    for &n in &cfg.n_ladder {
        let per_rep: Vec<Result<Vec<(String, f64)>, ExperimentError>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let ds = sample_dataset(&truth, contamination.as_ref(), n, rep_seed(cfg.seed, n, rep))?;
                let mat = DensityMatrix::new(&net, &ds)?;
                let rho = rho_posterior(&mat, &prior, cfg.beta)?;
                let classical = classical_posterior(&mat, &prior, 1.0)?;
                let r = cfg.ball_radius;
                Ok(vec![
                    ("classical_median".into(), weighted_median(&net, &classical.weights)),
                    ("rho_median".into(), weighted_median(&net, &rho.weights)),
                    (
                        "classical_ball_mass_truth".into(),
                        posterior_ball_mass(&classical.weights, &dists_truth, r)?,
                    ),
                    (
                        "rho_ball_mass_truth".into(),
                        posterior_ball_mass(&rho.weights, &dists_truth, r)?,
                    ),
                    (
                        "classical_ball_mass_contaminant".into(),
                        posterior_ball_mass(&classical.weights, &dists_cont, r)?,
                    ),
                    (
                        "rho_ball_mass_contaminant".into(),
                        posterior_ball_mass(&rho.weights, &dists_cont, r)?,
                    ),
                ])
            })
            .collect();
        for (rep, res) in per_rep.into_iter().enumerate() {
            for (metric, value) in res? {
                rows.push(ResultRow {
                    scenario: "contamination",
                    n,
                    replication: rep,
                    metric,
                    value,
                });
            }
        }
    }
    Ok(rows)
}

fn median_of(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Least-squares slope of `y` on `x` with its standard error.
fn slope_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&u, &v)| (u - mx) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&u, &v)| {
            let e = v - (intercept + slope * u);
            e * e
        })
        .sum();
    let dof = (x.len().max(3) - 2) as f64;
    (slope, (rss / dof / sxx).sqrt())
}

/// Agreement experiment: squared Hellinger distance between the likelihood
/// posterior and the robust posterior per replication, the per-`n` medians,
/// and the log-log slope of the medians.
pub fn run_agreement(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    cfg.validate()?;
    if cfg.scenario != Scenario::Agreement {
        return Err(ExperimentError::Config("scenario must be agreement".into()));
    }
    let (net, prior) = cfg.net_and_prior()?;
    let truth = cfg.truth_member()?;
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for &n in &cfg.n_ladder {
        let per_rep: Vec<Result<f64, ExperimentError>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let ds = sample_dataset(&truth, None, n, rep_seed(cfg.seed, n, rep))?;
                let mat = DensityMatrix::new(&net, &ds)?;
                let rho = rho_posterior(&mat, &prior, cfg.beta)?;
                let classical = classical_posterior(&mat, &prior, 1.0)?;
                Ok(posterior_hellinger_sq(&classical.weights, &rho.weights)?)
            })
            .collect();
        let mut h2s = Vec::with_capacity(cfg.replications);
        for (rep, res) in per_rep.into_iter().enumerate() {
            let h2 = res?;
            rows.push(ResultRow {
                scenario: "agreement",
                n,
                replication: rep,
                metric: "agreement_h2".into(),
                value: h2,
            });
            h2s.push(h2);
        }
        let med = median_of(h2s);
        rows.push(ResultRow {
            scenario: "agreement",
            n,
            replication: cfg.replications,
            metric: "agreement_h2_median".into(),
            value: med,
        });
        medians.push(med);
    }
    if cfg.n_ladder.len() >= 3 && medians.iter().all(|&m| m > 0.0) {
        let xs: Vec<f64> = cfg.n_ladder.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = medians.iter().map(|&m| m.ln()).collect();
        let (slope, stderr) = slope_fit(&xs, &ys);
        rows.push(ResultRow {
            scenario: "agreement",
            n: 0,
            replication: 0,
            metric: "loglog_slope".into(),
            value: slope,
        });
        rows.push(ResultRow {
            scenario: "agreement",
            n: 0,
            replication: 0,
            metric: "loglog_slope_stderr".into(),
            value: stderr,
        });
    }
    Ok(rows)
}

/// Histogram experiment: posterior-mean Hellinger distance to the truth and
/// ball mass around it, per replication and sample size.
pub fn run_histogram(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    cfg.validate()?;
    if cfg.scenario != Scenario::Histogram {
        return Err(ExperimentError::Config("scenario must be histogram".into()));
    }
    let (net, prior) = cfg.net_and_prior()?;
    let truth = cfg.truth_member()?;
    let contamination = cfg.contamination_spec()?;
    let dists = net.distances_from(&truth)?;
    let mut rows = Vec::new();
    for &n in &cfg.n_ladder {
        let per_rep: Vec<Result<(f64, f64), ExperimentError>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let ds = sample_dataset(&truth, contamination.as_ref(), n, rep_seed(cfg.seed, n, rep))?;
                let mat = DensityMatrix::new(&net, &ds)?;
                let rho = rho_posterior(&mat, &prior, cfg.beta)?;
                let mean_h: f64 = rho
                    .weights
                    .iter()
                    .zip(&dists)
                    .map(|(&w, &d)| w * d)
                    .sum();
                let mass = posterior_ball_mass(&rho.weights, &dists, cfg.ball_radius)?;
                Ok((mean_h, mass))
            })
            .collect();
        for (rep, res) in per_rep.into_iter().enumerate() {
            let (mean_h, mass) = res?;
            rows.push(ResultRow {
                scenario: "histogram",
                n,
                replication: rep,
                metric: "post_mean_hellinger".into(),
                value: mean_h,
            });
            rows.push(ResultRow {
                scenario: "histogram",
                n,
                replication: rep,
                metric: "ball_mass_truth".into(),
                value: mass,
            });
        }
    }
    Ok(rows)
}

/// Build the nested polynomial ladder for model selection: model `m` holds
/// densities `exp[sum_{j=1..m} theta_j x^j - A]` on a symmetric coefficient
/// grid with the top coefficient nonzero, so the models are disjoint; model
/// 0 is the single flat density. Complexity weights are dyadic,
/// `L_m = (m+1) log 2`, with the final model reusing its predecessor's
/// weight so the total mass `sum exp(-L_m)` is exactly one.
pub fn build_model_ladder(
    ms: &ModelSelectionConfig,
    n: usize,
    beta: f64,
) -> Result<ModelCollection, ExperimentError> {
    if ms.values_per_axis < 2 {
        return Err(ExperimentError::Config(
            "values_per_axis must be at least 2".into(),
        ));
    }
    let mut entries = Vec::new();
    for m in 0..=ms.m_max {
        let spec = ExpFamilySpec::new(m, ms.bound)?;
        let net = if m == 0 {
            Net::from_members(vec![DensityMember::exp_family(vec![0.0], spec)?])?
        } else {
            let axis: Vec<f64> = (0..ms.values_per_axis)
                .map(|i| {
                    -ms.bound + 2.0 * ms.bound * i as f64 / (ms.values_per_axis - 1) as f64
                })
                .collect();
            let mut axes = vec![vec![0.0]];
            for _ in 1..m {
                axes.push(axis.clone());
            }
            axes.push(axis.iter().copied().filter(|&v| v != 0.0).collect());
            let grid = build_grid_net(&FamilySpec::ExpFamily(spec), &axes)?;
            grid
        };
        let l_m = if m == ms.m_max && ms.m_max > 0 {
            ms.m_max as f64 * 2f64.ln()
        } else {
            (m + 1) as f64 * 2f64.ln()
        };
        let (pen, _) = penalty(m + 3, n, beta, l_m)?;
        let prior = WeightVector::uniform(net.len())?;
        entries.push(ModelEntry { net, prior, pen, l_m });
    }
    // dyadic weights with a doubled last term sum to exactly one
    let mass: f64 = entries.iter().map(|e| (-e.l_m).exp()).sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(ExperimentError::Config(format!(
            "complexity weights sum to {mass}, expected 1"
        )));
    }
    Ok(ModelCollection::new(entries)?)
}

/// Model-selection experiment: per-model posterior masses and the selected
/// model per replication and sample size.
pub fn run_model_selection(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    cfg.validate()?;
    if cfg.scenario != Scenario::ModelSelection {
        return Err(ExperimentError::Config("scenario must be model_selection".into()));
    }
    let ms = cfg.model_selection.as_ref().expect("validated");
    let truth = cfg.truth_member()?;
    let mut rows = Vec::new();
    for &n in &cfg.n_ladder {
        let collection = build_model_ladder(ms, n, cfg.beta)?;
        let per_rep: Vec<Result<Vec<f64>, ExperimentError>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let ds = sample_dataset(&truth, None, n, rep_seed(cfg.seed, n, rep))?;
                let sel = model_selection_posterior(&collection, &ds, cfg.beta)?;
                Ok(sel.model_mass)
            })
            .collect();
        for (rep, res) in per_rep.into_iter().enumerate() {
            let masses = res?;
            let selected = masses
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            for (m, &mass) in masses.iter().enumerate() {
                rows.push(ResultRow {
                    scenario: "model_selection",
                    n,
                    replication: rep,
                    metric: format!("model_mass_{m}"),
                    value: mass,
                });
            }
            rows.push(ResultRow {
                scenario: "model_selection",
                n,
                replication: rep,
                metric: "selected_model".into(),
                value: selected as f64,
            });
        }
    }
    Ok(rows)
}

/// Bounds report: every computable bound for the configured net and prior.
pub fn run_bounds_report(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>, ExperimentError> {
    cfg.validate()?;
    if cfg.scenario != Scenario::BoundsReport {
        return Err(ExperimentError::Config("scenario must be bounds_report".into()));
    }
    let bc = cfg.bounds.as_ref().expect("validated");
    if bc.n == 0 || !(bc.xi > 0.0 && bc.xi_prime > 0.0) {
        return Err(ExperimentError::Config(
            "bounds section needs n > 0 and positive xi, xi'".into(),
        ));
    }
    let (net, prior) = cfg.net_and_prior()?;
    let truth = cfg.truth_member()?;
    let n = bc.n;
    let scale = (n as f64).sqrt();
    let gamma = cfg.beta / 8.0;
    let sqrt_n = scale;
    let mut reports = Vec::new();
    let eps_finite = bounds::eps_finite_bound(net.len(), n)?;
    reports.push(BoundReport {
        quantity: "eps_finite_bound".into(),
        formula_value: eps_finite,
        mc_estimate: None,
        std_err: None,
        vacuous_flag: eps_finite >= sqrt_n,
    });
    let mut eps_best = eps_finite;
    if let Some(d) = bc.vc_dim {
        let v = bounds::eps_vc_bound(d, n)?;
        reports.push(BoundReport {
            quantity: "eps_vc_bound".into(),
            formula_value: v,
            mc_estimate: None,
            std_err: None,
            vacuous_flag: v >= sqrt_n,
        });
        eps_best = eps_best.min(v);
    }
    if bc.mc_reps > 0 {
        let est = bounds::eps_monte_carlo(&net, &truth, n, bc.mc_reps, cfg.seed, None)?;
        let std_err = est
            .w_curve
            .iter()
            .map(|p| p.w_std_err)
            .fold(0.0f64, f64::max);
        reports.push(BoundReport {
            quantity: "eps_monte_carlo".into(),
            formula_value: est.epsilon_upper,
            mc_estimate: Some(est.epsilon),
            std_err: Some(std_err),
            vacuous_flag: est.epsilon >= sqrt_n,
        });
        eps_best = eps_best.min(est.epsilon_upper);
    }
    // exact prior concentration radius at every net point, and at the truth
    let mut etas_bold = Vec::with_capacity(net.len());
    for center in net.members() {
        let dists = net.distances_from(center)?;
        etas_bold.push(bounds::eta_exact(&dists, prior.weights(), gamma, scale)?.eta_bold);
    }
    let eta_max = etas_bold.iter().copied().fold(0.0f64, f64::max);
    reports.push(BoundReport {
        quantity: "eta_exact_max".into(),
        formula_value: eta_max,
        mc_estimate: None,
        std_err: None,
        vacuous_flag: eta_max >= sqrt_n,
    });
    if let PriorConfig::Dirichlet { alpha, .. } = &cfg.prior {
        let v = bounds::eta_dirichlet_bound(alpha, gamma)?;
        reports.push(BoundReport {
            quantity: "eta_dirichlet_bound".into(),
            formula_value: v,
            mc_estimate: None,
            std_err: None,
            vacuous_flag: v >= sqrt_n,
        });
    }
    if let FamilyConfig::UniformCube { .. } = &cfg.family {
        let d = cfg.truth.len() as i32;
        let v = bounds::eta_param_bound(
            2f64.powi(d),
            1.0,
            (1.0 - (-1f64).exp()).sqrt(),
            0.5,
            gamma,
        )?;
        reports.push(BoundReport {
            quantity: "eta_param_bound".into(),
            formula_value: v,
            mc_estimate: None,
            std_err: None,
            vacuous_flag: v >= sqrt_n,
        });
    }
    let truth_dists = net.distances_from(&truth)?;
    let eta_bar = bounds::eta_bar_sq(&truth_dists, prior.weights(), cfg.beta, scale)?;
    reports.push(BoundReport {
        quantity: "eta_bar_sq_truth".into(),
        formula_value: eta_bar,
        mc_estimate: None,
        std_err: None,
        vacuous_flag: eta_bar >= 4.01 * n as f64,
    });
    let (pen, eps_bar) = penalty(net.len().min(n).max(1), n, cfg.beta, 2f64.ln())?;
    reports.push(BoundReport {
        quantity: "penalty".into(),
        formula_value: pen,
        mc_estimate: None,
        std_err: None,
        vacuous_flag: false,
    });
    reports.push(BoundReport {
        quantity: "penalty_eps_bar".into(),
        formula_value: eps_bar,
        mc_estimate: None,
        std_err: None,
        vacuous_flag: eps_bar >= sqrt_n,
    });
    let dists_bold: Vec<f64> = truth_dists.iter().map(|&d| d * scale).collect();
    let rb = bounds::rbar(
        &dists_bold,
        &etas_bold,
        eps_best,
        bc.xi,
        bc.xi_prime,
        cfg.beta,
        n,
    )?;
    reports.push(BoundReport {
        quantity: "rbar".into(),
        formula_value: rb.rbar,
        mc_estimate: None,
        std_err: None,
        vacuous_flag: rb.vacuous,
    });
    Ok(reports)
}

/// Run the configured scenario and return its rows (empty for the bounds
/// report, which produces a JSON report instead).
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    match cfg.scenario {
        Scenario::Contamination => run_contamination(cfg),
        Scenario::Agreement => run_agreement(cfg),
        Scenario::Histogram => run_histogram(cfg),
        Scenario::ModelSelection => run_model_selection(cfg),
        Scenario::BoundsReport => Err(ExperimentError::Config(
            "bounds_report produces a report, not a result table".into(),
        )),
    }
}

/// Write rows as CSV with the fixed header
/// `scenario,n,replication,metric,value`.
pub fn write_rows_csv(rows: &[ResultRow], out: &mut impl Write) -> Result<(), ExperimentError> {
    writeln!(out, "scenario,n,replication,metric,value")?;
    for r in rows {
        debug_assert!(is_known_metric(&r.metric), "unknown metric {}", r.metric);
        writeln!(out, "{},{},{},{},{:?}", r.scenario, r.n, r.replication, r.metric, r.value)?;
    }
    Ok(())
}

/// Sidecar metadata written next to every output file.
#[derive(Debug, serde::Serialize)]
pub struct RunMetadata {
    pub config_sha256: String,
    pub seed: u64,
    pub crate_version: &'static str,
    pub schema_version: u32,
}

/// Hash the raw config text.
pub fn config_hash(config_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write the result table plus its metadata sidecar into `dir`, one file
/// per scenario: `<scenario>.csv` and `<scenario>.meta.json`.
pub fn write_outputs(
    dir: &Path,
    scenario: Scenario,
    rows: &[ResultRow],
    config_text: &str,
    seed: u64,
) -> Result<PathBuf, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", scenario.label()));
    let mut csv = std::fs::File::create(&csv_path)?;
    write_rows_csv(rows, &mut csv)?;
    let meta = RunMetadata {
        config_sha256: config_hash(config_text),
        seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        schema_version: 1,
    };
    let meta_path = dir.join(format!("{}.meta.json", scenario.label()));
    let mut mf = std::fs::File::create(&meta_path)?;
    serde_json::to_writer_pretty(&mut mf, &meta)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    writeln!(mf)?;
    Ok(csv_path)
}

/// Write the bounds report plus metadata into `dir`.
pub fn write_bounds_outputs(
    dir: &Path,
    reports: &[BoundReport],
    config_text: &str,
    seed: u64,
) -> Result<PathBuf, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("bounds_report.json");
    let mut f = std::fs::File::create(&path)?;
    bounds::write_bounds_json(reports, &mut f)?;
    let meta = RunMetadata {
        config_sha256: config_hash(config_text),
        seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        schema_version: 1,
    };
    let meta_path = dir.join("bounds_report.meta.json");
    let mut mf = std::fs::File::create(&meta_path)?;
    serde_json::to_writer_pretty(&mut mf, &meta)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    writeln!(mf)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contamination_config() -> ExperimentConfig {
        ExperimentConfig {
            scenario: Scenario::Contamination,
            family: FamilyConfig::UniformScale {
                grid: GridSpec { lo: 8.0, hi: 112.0, step: 2.0 },
            },
            prior: PriorConfig::Uniform,
            beta: 4.0,
            n_ladder: vec![100],
            replications: 8,
            seed: 11,
            truth: vec![10.0],
            contamination: Some(ContaminationConfig {
                rate: 0.01,
                lo: 110.0,
                hi: 110.01,
            }),
            model_selection: None,
            bounds: None,
            output: None,
            ball_radius: 0.2,
        }
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let cfg = contamination_config();
        let text = serde_json::to_string(&cfg).unwrap();
        let parsed = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(parsed.seed, 11);
        // bad ladder rejected
        let bad = text.replace("[100]", "[100,100]");
        let err = ExperimentConfig::from_json(&bad).unwrap_err();
        assert!(err.is_config());
        // unknown field rejected with position info
        let bad = text.replace("\"seed\":11", "\"sead\":11");
        let err = ExperimentConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("line"));
        // scenario-family mismatch rejected
        let mut cfg2 = contamination_config();
        cfg2.scenario = Scenario::Histogram;
        assert!(cfg2.validate().is_err());
    }

    #[test]
    fn metric_vocabulary() {
        assert!(is_known_metric("rho_median"));
        assert!(is_known_metric("model_mass_3"));
        assert!(!is_known_metric("model_mass_"));
        assert!(!is_known_metric("model_mass_x"));
        assert!(!is_known_metric("made_up"));
    }

    #[test]
    fn contamination_rows_and_reproducibility() {
        let cfg = contamination_config();
        let rows = run_contamination(&cfg).unwrap();
        // exactly R rows per metric
        for metric in [
            "classical_median",
            "rho_median",
            "classical_ball_mass_truth",
            "rho_ball_mass_truth",
            "classical_ball_mass_contaminant",
            "rho_ball_mass_contaminant",
        ] {
            let count = rows.iter().filter(|r| r.metric == metric).count();
            assert_eq!(count, cfg.replications, "{metric}");
        }
        for r in &rows {
            assert!(is_known_metric(&r.metric), "{}", r.metric);
        }
        let rows2 = run_contamination(&cfg).unwrap();
        assert_eq!(rows, rows2);
    }

    #[test]
    fn contamination_clean_medians_near_truth() {
        let mut cfg = contamination_config();
        cfg.contamination = None;
        cfg.n_ladder = vec![200];
        let rows = run_contamination(&cfg).unwrap();
        for r in rows.iter().filter(|r| r.metric.ends_with("_median")) {
            assert!(
                (r.value - 10.0).abs() <= 2.0 + 10.0 * 10.0 / 200.0,
                "{:?}",
                r
            );
        }
    }

    #[test]
    fn agreement_rows_and_slope() {
        let spec_axes = vec![
            GridSpec { lo: -1.0, hi: 1.0, step: 0.5 },
            GridSpec { lo: -1.0, hi: 1.0, step: 0.5 },
        ];
        let cfg = ExperimentConfig {
            scenario: Scenario::Agreement,
            family: FamilyConfig::ExpFamily { degree: 1, bound: 1.0, axes: spec_axes },
            prior: PriorConfig::Uniform,
            beta: 4.0,
            n_ladder: vec![25, 50, 100, 200],
            replications: 6,
            seed: 5,
            truth: vec![0.0, 0.5],
            contamination: None,
            model_selection: None,
            bounds: None,
            output: None,
            ball_radius: 0.2,
        };
        let rows = run_agreement(&cfg).unwrap();
        for r in rows.iter().filter(|r| r.metric == "agreement_h2") {
            assert!((0.0..=1.0).contains(&r.value), "{:?}", r);
        }
        let slopes: Vec<&ResultRow> =
            rows.iter().filter(|r| r.metric == "loglog_slope").collect();
        assert_eq!(slopes.len(), 1);
        let medians = rows
            .iter()
            .filter(|r| r.metric == "agreement_h2_median")
            .count();
        assert_eq!(medians, cfg.n_ladder.len());
        // determinism
        let rows2 = run_agreement(&cfg).unwrap();
        assert_eq!(rows, rows2);
    }

    #[test]
    fn histogram_rows_symmetry() {
        let cfg = ExperimentConfig {
            scenario: Scenario::Histogram,
            family: FamilyConfig::Histogram { edges: vec![0.0, 0.5, 1.0] },
            prior: PriorConfig::Dirichlet { alpha: vec![1.0, 1.0], atoms: 200 },
            beta: 4.0,
            n_ladder: vec![100, 400],
            replications: 5,
            seed: 9,
            truth: vec![0.5, 0.5],
            contamination: None,
            model_selection: None,
            bounds: None,
            output: None,
            ball_radius: 0.25,
        };
        let rows = run_histogram(&cfg).unwrap();
        assert_eq!(rows.len(), cfg.n_ladder.len() * cfg.replications * 2);
        // concentration improves with n
        let mean_at = |n: usize| -> f64 {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.metric == "post_mean_hellinger")
                .map(|r| r.value)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        assert!(mean_at(400) <= mean_at(100) + 0.02);
    }

    #[test]
    fn model_ladder_structure() {
        let ms = ModelSelectionConfig {
            m_max: 3,
            bound: 2.0,
            values_per_axis: 3,
        };
        let coll = build_model_ladder(&ms, 500, 4.0).unwrap();
        assert_eq!(coll.entries().len(), 4);
        assert_eq!(coll.entries()[0].net.len(), 1);
        // model m: free coordinates 2..m each take 3 values, top coordinate
        // the 2 nonzero ones
        assert_eq!(coll.entries()[1].net.len(), 2);
        // model 2: theta_0 fixed at 0, theta_1 over 3 values, theta_2 nonzero
        assert_eq!(coll.entries()[2].net.len(), 3 * 2);
        // dyadic mass closes to exactly one
        let mass: f64 = coll.entries().iter().map(|e| (-e.l_m).exp()).sum();
        assert_eq!(mass, 1.0);
        // penalties increase with model index
        for w in coll.entries().windows(2) {
            assert!(w[0].pen < w[1].pen);
        }
        // every top coefficient in model m is nonzero
        for (m, e) in coll.entries().iter().enumerate().skip(1) {
            for member in e.net.members() {
                assert_ne!(member.params()[m], 0.0);
            }
        }
    }

    #[test]
    fn bounds_report_structure() {
        let cfg = ExperimentConfig {
            scenario: Scenario::BoundsReport,
            family: FamilyConfig::UniformScale {
                grid: GridSpec { lo: 1.0, hi: 4.0, step: 0.5 },
            },
            prior: PriorConfig::Uniform,
            beta: 4.0,
            n_ladder: vec![],
            replications: 0,
            seed: 3,
            truth: vec![2.0],
            contamination: None,
            model_selection: None,
            bounds: Some(BoundsConfig {
                n: 100,
                mc_reps: 3,
                vc_dim: Some(3),
                xi: 1.0,
                xi_prime: 1.0,
            }),
            output: None,
            ball_radius: 0.2,
        };
        let reports = run_bounds_report(&cfg).unwrap();
        let names: Vec<&str> = reports.iter().map(|r| r.quantity.as_str()).collect();
        for want in [
            "eps_finite_bound",
            "eps_vc_bound",
            "eps_monte_carlo",
            "eta_exact_max",
            "eta_bar_sq_truth",
            "penalty",
            "rbar",
        ] {
            assert!(names.contains(&want), "missing {want}");
        }
        // rbar at these constants towers above sqrt(100)
        let rb = reports.iter().find(|r| r.quantity == "rbar").unwrap();
        assert!(rb.vacuous_flag);
    }

    #[test]
    fn csv_and_metadata_outputs() {
        let cfg = contamination_config();
        let rows = run_contamination(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let csv_path = write_outputs(dir.path(), cfg.scenario, &rows, &text, cfg.seed).unwrap();
        let body = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next().unwrap(), "scenario,n,replication,metric,value");
        assert_eq!(body.lines().count(), rows.len() + 1);
        let meta: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("contamination.meta.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(meta["seed"], 11);
        assert_eq!(meta["config_sha256"], serde_json::json!(config_hash(&text)));
    }
}
