//! Density families, finite nets, priors and data generation.
//!
//! Five concrete families are supported, each with an analytic Hellinger
//! distance where one exists:
//!
//! | family            | density                                             | Hellinger |
//! |-------------------|-----------------------------------------------------|-----------|
//! | uniform_scale     | `1/t` on `(0,t)`, `t > 0`                           | `rho = min(t,t')/sqrt(t t')` |
//! | uniform_cube      | uniform on `prod_j [theta_j, theta_j+1]`            | `rho = prod_j (1 - |theta_j - theta'_j|)_+` |
//! | gamma_translation | `(x-theta)^(2a-1) e^-(x-theta) / Gamma(2a)`         | quadrature |
//! | histogram         | `theta_j / mu(I_j)` on cell `I_j`, theta in simplex | `h^2 = 1/2 sum_j (sqrt(theta_j) - sqrt(theta'_j))^2` |
//! | exp_family        | `exp[sum_j theta_j x^j - A(theta)]` on `[0,1]`      | `h^2 = 1 - exp[A((t+t')/2) - (A(t)+A(t'))/2]` |
//!
//! A [`Net`] is an ordered finite collection of members of one family; it is
//! the support of every prior and posterior in this crate. Priors are
//! [`WeightVector`]s over a net; continuous priors (such as the Dirichlet
//! prior over histograms) are represented by equal-weight Monte Carlo atom
//! nets. Datasets are drawn i.i.d. from a truth member, optionally mixed with
//! a contaminant, under a deterministic seed.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::distributions::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::kernel::{self, KernelError, QuadratureSpec};

/// Errors from net construction, evaluation, sampling and serialization.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameters {0:?} outside the family's parameter set: {1}")]
    BadParams(Vec<f64>, String),
    #[error("observation dimension {got} does not match family dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("members belong to different families ({0} vs {1})")]
    FamilyMismatch(FamilyTag, FamilyTag),
    #[error("net must be nonempty")]
    EmptyNet,
    #[error("weight vector invalid: {0}")]
    BadWeights(String),
    #[error("kernel error: {0}")]
    Kernel(#[from] KernelError),
    #[error("invalid Dirichlet parameters: {0}")]
    BadDirichlet(String),
    #[error("sampling unsupported: {0}")]
    UnsupportedSampling(String),
    #[error("contamination rate {0} outside [0,1]")]
    BadContaminationRate(f64),
    #[error("serialization error: {0}")]
    Serde(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Tag identifying a density family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    UniformScale,
    UniformCube,
    GammaTranslation,
    Histogram,
    ExpFamily,
}

impl std::fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FamilyTag::UniformScale => "uniform_scale",
            FamilyTag::UniformCube => "uniform_cube",
            FamilyTag::GammaTranslation => "gamma_translation",
            FamilyTag::Histogram => "histogram",
            FamilyTag::ExpFamily => "exp_family",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for FamilyTag {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s {
            "uniform_scale" => Ok(FamilyTag::UniformScale),
            "uniform_cube" => Ok(FamilyTag::UniformCube),
            "gamma_translation" => Ok(FamilyTag::GammaTranslation),
            "histogram" => Ok(FamilyTag::Histogram),
            "exp_family" => Ok(FamilyTag::ExpFamily),
            other => Err(ModelError::Serde(format!("unknown family tag {other:?}"))),
        }
    }
}

/// A partition of an interval into `k` cells, shared by all histogram
/// members of a net.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Partition {
    /// `k + 1` strictly increasing cell edges.
    pub edges: Vec<f64>,
}

impl Partition {
    pub fn new(edges: Vec<f64>) -> Result<Arc<Self>, ModelError> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ModelError::BadParams(
                edges,
                "partition edges must be strictly increasing with at least 2 entries".into(),
            ));
        }
        Ok(Arc::new(Partition { edges }))
    }

    /// Evenly spaced partition of `[lo, hi]` into `k` cells.
    pub fn equispaced(lo: f64, hi: f64, k: usize) -> Result<Arc<Self>, ModelError> {
        let edges = (0..=k)
            .map(|i| lo + (hi - lo) * i as f64 / k as f64)
            .collect();
        Partition::new(edges)
    }

    pub fn k(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn width(&self, j: usize) -> f64 {
        self.edges[j + 1] - self.edges[j]
    }

    /// Cell containing `x`; cells are right-open except the last, which is
    /// closed. `None` outside the partition's range.
    pub fn cell_index(&self, x: f64) -> Option<usize> {
        let k = self.k();
        if x < self.edges[0] || x > self.edges[k] {
            return None;
        }
        if x == self.edges[k] {
            return Some(k - 1);
        }
        // binary search for the rightmost edge <= x
        let idx = self.edges.partition_point(|&e| e <= x);
        Some(idx - 1)
    }
}

/// Specification of a polynomial exponential family on `[0,1]`:
/// `t_theta(x) = exp[sum_{j=0..=degree} theta_j x^j - A(theta)]` with the
/// box constraint `|theta_j| <= bound`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExpFamilySpec {
    /// Highest monomial power; members have `degree + 1` parameters.
    pub degree: usize,
    /// Box half-width for every coordinate.
    pub bound: f64,
    /// Quadrature used for the log-partition function.
    pub quad: QuadratureSpec,
}

impl ExpFamilySpec {
    pub fn new(degree: usize, bound: f64) -> Result<Arc<Self>, ModelError> {
        if !(bound > 0.0) {
            return Err(ModelError::BadParams(
                vec![bound],
                "exp_family box bound must be positive".into(),
            ));
        }
        Ok(Arc::new(ExpFamilySpec {
            degree,
            bound,
            quad: QuadratureSpec::new(0.0, 1.0),
        }))
    }

    fn poly(theta: &[f64], x: f64) -> f64 {
        // Horner evaluation of sum_j theta_j x^j
        theta.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Log-partition function `A(theta) = log int_0^1 exp(sum theta_j x^j) dx`.
    pub fn log_partition(&self, theta: &[f64]) -> Result<f64, ModelError> {
        // shift by the max of the polynomial at the endpoints and midpoint to
        // keep the integrand in a safe range
        let shift = [0.0, 0.5, 1.0]
            .iter()
            .map(|&x| Self::poly(theta, x))
            .fold(f64::NEG_INFINITY, f64::max);
        let integral = kernel::integrate(|x| (Self::poly(theta, x) - shift).exp(), &self.quad)?;
        Ok(shift + integral.ln())
    }
}

/// One candidate density. Members are immutable; family-level shared state
/// (partition, exponential-family spec) is held behind `Arc`s.
#[derive(Debug, Clone)]
pub enum DensityMember {
    /// Uniform on `(0, t)` with `t > 0`.
    UniformScale { t: f64 },
    /// Uniform on the translated unit cube `prod_j [theta_j, theta_j + 1]`
    /// with `sum_j |theta_j| <= 1/2`.
    UniformCube { theta: Vec<f64> },
    /// Gamma(2 alpha) density translated by `theta in [-1, 1]`, `0 < alpha < 1`.
    GammaTranslation { alpha: f64, theta: f64 },
    /// Piecewise-constant density `theta_j / mu(I_j)` with `theta` in the
    /// open simplex.
    Histogram {
        theta: Vec<f64>,
        partition: Arc<Partition>,
    },
    /// Exponential family member; `log_norm` caches `A(theta)`.
    ExpFamily {
        theta: Vec<f64>,
        log_norm: f64,
        spec: Arc<ExpFamilySpec>,
    },
}

impl DensityMember {
    pub fn uniform_scale(t: f64) -> Result<Self, ModelError> {
        if !(t > 0.0) {
            return Err(ModelError::BadParams(vec![t], "scale must be positive".into()));
        }
        Ok(DensityMember::UniformScale { t })
    }

    pub fn uniform_cube(theta: Vec<f64>) -> Result<Self, ModelError> {
        let l1: f64 = theta.iter().map(|v| v.abs()).sum();
        if theta.is_empty() || !(l1 <= 0.5) {
            return Err(ModelError::BadParams(
                theta,
                "cube offsets must satisfy sum |theta_j| <= 1/2".into(),
            ));
        }
        Ok(DensityMember::UniformCube { theta })
    }

    pub fn gamma_translation(alpha: f64, theta: f64) -> Result<Self, ModelError> {
        if !(alpha > 0.0 && alpha < 1.0) || !(-1.0..=1.0).contains(&theta) {
            return Err(ModelError::BadParams(
                vec![alpha, theta],
                "need 0 < alpha < 1 and theta in [-1, 1]".into(),
            ));
        }
        Ok(DensityMember::GammaTranslation { alpha, theta })
    }

    pub fn histogram(theta: Vec<f64>, partition: Arc<Partition>) -> Result<Self, ModelError> {
        if theta.len() != partition.k() {
            return Err(ModelError::BadParams(
                theta,
                format!("need exactly {} cell probabilities", partition.k()),
            ));
        }
        let sum: f64 = theta.iter().sum();
        if theta.iter().any(|&v| !(v > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::BadParams(
                theta,
                "cell probabilities must be positive and sum to 1".into(),
            ));
        }
        Ok(DensityMember::Histogram { theta, partition })
    }

    pub fn exp_family(theta: Vec<f64>, spec: Arc<ExpFamilySpec>) -> Result<Self, ModelError> {
        if theta.len() != spec.degree + 1 {
            return Err(ModelError::BadParams(
                theta,
                format!("need exactly {} coefficients", spec.degree + 1),
            ));
        }
        if theta.iter().any(|v| v.abs() > spec.bound + 1e-12) {
            return Err(ModelError::BadParams(
                theta,
                format!("coefficients must lie in [-{m}, {m}]", m = spec.bound),
            ));
        }
        let log_norm = spec.log_partition(&theta)?;
        Ok(DensityMember::ExpFamily { theta, log_norm, spec })
    }

    pub fn family(&self) -> FamilyTag {
        match self {
            DensityMember::UniformScale { .. } => FamilyTag::UniformScale,
            DensityMember::UniformCube { .. } => FamilyTag::UniformCube,
            DensityMember::GammaTranslation { .. } => FamilyTag::GammaTranslation,
            DensityMember::Histogram { .. } => FamilyTag::Histogram,
            DensityMember::ExpFamily { .. } => FamilyTag::ExpFamily,
        }
    }

    /// Dimension of the sample space.
    pub fn dim(&self) -> usize {
        match self {
            DensityMember::UniformCube { theta } => theta.len(),
            _ => 1,
        }
    }

    /// Free parameters, in serialization order.
    pub fn params(&self) -> Vec<f64> {
        match self {
            DensityMember::UniformScale { t } => vec![*t],
            DensityMember::UniformCube { theta } => theta.clone(),
            DensityMember::GammaTranslation { theta, .. } => vec![*theta],
            DensityMember::Histogram { theta, .. } => theta.clone(),
            DensityMember::ExpFamily { theta, .. } => theta.clone(),
        }
    }

    /// Exact density value at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            DensityMember::UniformScale { t } => {
                if x[0] >= 0.0 && x[0] <= *t {
                    1.0 / t
                } else {
                    0.0
                }
            }
            DensityMember::UniformCube { theta } => {
                let inside = theta
                    .iter()
                    .zip(x)
                    .all(|(&th, &xi)| xi >= th && xi <= th + 1.0);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            DensityMember::GammaTranslation { alpha, theta } => {
                let z = x[0] - theta;
                if z <= 0.0 {
                    0.0
                } else {
                    ((2.0 * alpha - 1.0) * z.ln() - z - ln_gamma(2.0 * alpha)).exp()
                }
            }
            DensityMember::Histogram { theta, partition } => match partition.cell_index(x[0]) {
                Some(j) => theta[j] / partition.width(j),
                None => 0.0,
            },
            DensityMember::ExpFamily { theta, log_norm, .. } => {
                if (0.0..=1.0).contains(&x[0]) {
                    (ExpFamilySpec::poly(theta, x[0]) - log_norm).exp()
                } else {
                    0.0
                }
            }
        })
    }
}

/// Hellinger distance between two members of the same family, analytic where
/// a closed form exists and by quadrature for the translated Gamma family.
pub fn hellinger_pair(a: &DensityMember, b: &DensityMember) -> Result<f64, ModelError> {
    if a.family() != b.family() {
        return Err(ModelError::FamilyMismatch(a.family(), b.family()));
    }
    let h2: f64 = match (a, b) {
        (DensityMember::UniformScale { t: ta }, DensityMember::UniformScale { t: tb }) => {
            1.0 - ta.min(*tb) / (ta * tb).sqrt()
        }
        (DensityMember::UniformCube { theta: pa }, DensityMember::UniformCube { theta: pb }) => {
            if pa.len() != pb.len() {
                return Err(ModelError::DimensionMismatch {
                    expected: pa.len(),
                    got: pb.len(),
                });
            }
            let rho: f64 = pa
                .iter()
                .zip(pb)
                .map(|(&u, &v)| (1.0 - (u - v).abs()).max(0.0))
                .product();
            1.0 - rho
        }
        (DensityMember::Histogram { theta: pa, partition: qa },
         DensityMember::Histogram { theta: pb, partition: qb }) => {
            if qa != qb {
                return Err(ModelError::Serde(
                    "histogram members must share one partition".into(),
                ));
            }
            0.5 * pa
                .iter()
                .zip(pb)
                .map(|(&u, &v)| (u.sqrt() - v.sqrt()).powi(2))
                .sum::<f64>()
        }
        (DensityMember::ExpFamily { theta: pa, log_norm: la, spec },
         DensityMember::ExpFamily { theta: pb, log_norm: lb, .. }) => {
            let mid: Vec<f64> = pa.iter().zip(pb).map(|(&u, &v)| 0.5 * (u + v)).collect();
            let a_mid = spec.log_partition(&mid)?;
            1.0 - (a_mid - 0.5 * (la + lb)).exp()
        }
        (DensityMember::GammaTranslation { alpha, theta: th_a },
         DensityMember::GammaTranslation { alpha: alpha_b, theta: th_b }) => {
            if (alpha - alpha_b).abs() > 1e-12 {
                return Err(ModelError::Serde(
                    "translated Gamma members must share one shape".into(),
                ));
            }
            if th_a == th_b {
                return Ok(0.0);
            }
            1.0 - gamma_translation_affinity(*alpha, *th_a, *th_b)?
        }
        _ => unreachable!("family equality checked above"),
    };
    Ok(h2.max(0.0).sqrt())
}

/// Affinity `int sqrt(t_a t_b)` for the translated Gamma family, via the
/// substitution `x = theta_max + u^2` which removes the edge singularity:
/// the integrand becomes `2 u^(2 alpha) (u^2 + d)^(alpha - 1/2)
/// exp(-u^2 - d/2) / Gamma(2 alpha)` with `d = |theta_a - theta_b| > 0`.
fn gamma_translation_affinity(alpha: f64, th_a: f64, th_b: f64) -> Result<f64, ModelError> {
    let d = (th_a - th_b).abs();
    let lg = ln_gamma(2.0 * alpha);
    // upper limit u = sqrt(60): truncated tail mass below e^-60
    let spec = QuadratureSpec::new(0.0, 60f64.sqrt());
    let rho = kernel::integrate(
        |u| {
            if u == 0.0 {
                0.0
            } else {
                2.0 * u.powf(2.0 * alpha)
                    * (u * u + d).powf(alpha - 0.5)
                    * (-u * u - 0.5 * d - lg).exp()
            }
        },
        &spec,
    )?;
    Ok(rho.min(1.0))
}

/// Finite ordered collection of candidate densities from one family, with an
/// optionally cached pairwise Hellinger matrix.
#[derive(Debug, Clone)]
pub struct Net {
    members: Vec<DensityMember>,
    family: FamilyTag,
    hellinger: Option<Arc<Vec<f64>>>,
}

impl Net {
    pub fn from_members(members: Vec<DensityMember>) -> Result<Self, ModelError> {
        let family = members.first().ok_or(ModelError::EmptyNet)?.family();
        if let Some(m) = members.iter().find(|m| m.family() != family) {
            return Err(ModelError::FamilyMismatch(family, m.family()));
        }
        Ok(Net {
            members,
            family,
            hellinger: None,
        })
    }

    pub fn members(&self) -> &[DensityMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn family(&self) -> FamilyTag {
        self.family
    }

    /// Fill the pairwise Hellinger matrix cache (symmetric, zero diagonal).
    pub fn ensure_hellinger(&mut self) -> Result<(), ModelError> {
        if self.hellinger.is_some() {
            return Ok(());
        }
        let n = self.members.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let h = hellinger_pair(&self.members[i], &self.members[j])?;
                m[i * n + j] = h;
                m[j * n + i] = h;
            }
        }
        self.hellinger = Some(Arc::new(m));
        Ok(())
    }

    /// Cached pairwise distance; call [`Net::ensure_hellinger`] first.
    pub fn cached_hellinger(&self, i: usize, j: usize) -> Option<f64> {
        self.hellinger
            .as_ref()
            .map(|m| m[i * self.members.len() + j])
    }

    /// Pairwise distance, from the cache when available.
    pub fn pair_distance(&self, i: usize, j: usize) -> Result<f64, ModelError> {
        if let Some(h) = self.cached_hellinger(i, j) {
            return Ok(h);
        }
        hellinger_pair(&self.members[i], &self.members[j])
    }

    /// Hellinger distances from an external center to every member.
    pub fn distances_from(&self, center: &DensityMember) -> Result<Vec<f64>, ModelError> {
        self.members
            .iter()
            .map(|m| hellinger_pair(center, m))
            .collect()
    }
}

/// Family-level data needed to build members from parameter vectors.
#[derive(Debug, Clone)]
pub enum FamilySpec {
    UniformScale,
    UniformCube { d: usize },
    GammaTranslation { alpha: f64 },
    Histogram { partition: Arc<Partition> },
    ExpFamily(Arc<ExpFamilySpec>),
}

impl FamilySpec {
    /// Build one member from a full parameter vector.
    pub fn member(&self, params: &[f64]) -> Result<DensityMember, ModelError> {
        match self {
            FamilySpec::UniformScale => {
                if params.len() != 1 {
                    return Err(ModelError::BadParams(params.to_vec(), "need one scale".into()));
                }
                DensityMember::uniform_scale(params[0])
            }
            FamilySpec::UniformCube { d } => {
                if params.len() != *d {
                    return Err(ModelError::BadParams(
                        params.to_vec(),
                        format!("need {d} offsets"),
                    ));
                }
                DensityMember::uniform_cube(params.to_vec())
            }
            FamilySpec::GammaTranslation { alpha } => {
                if params.len() != 1 {
                    return Err(ModelError::BadParams(params.to_vec(), "need one shift".into()));
                }
                DensityMember::gamma_translation(*alpha, params[0])
            }
            FamilySpec::Histogram { partition } => {
                DensityMember::histogram(params.to_vec(), partition.clone())
            }
            FamilySpec::ExpFamily(spec) => {
                DensityMember::exp_family(params.to_vec(), spec.clone())
            }
        }
    }
}

/// Deterministic row-major product grid over per-coordinate axis values.
pub fn build_grid_net(family: &FamilySpec, axes: &[Vec<f64>]) -> Result<Net, ModelError> {
    if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
        return Err(ModelError::EmptyNet);
    }
    let mut members = Vec::new();
    let mut index = vec![0usize; axes.len()];
    loop {
        let params: Vec<f64> = index.iter().zip(axes).map(|(&i, ax)| ax[i]).collect();
        members.push(family.member(&params)?);
        // advance the row-major odometer (last axis fastest)
        let mut pos = axes.len();
        loop {
            if pos == 0 {
                return Net::from_members(members);
            }
            pos -= 1;
            index[pos] += 1;
            if index[pos] < axes[pos].len() {
                break;
            }
            index[pos] = 0;
        }
    }
}

/// Greedy Hellinger cover: walk the candidates in order and retain each one
/// farther than `eps` from everything already retained. Every candidate ends
/// up within `eps` of a retained member; the retained set is a subset of the
/// candidates and the construction is deterministic.
pub fn build_eps_net(candidates: &Net, eps: f64) -> Result<Net, ModelError> {
    let mut retained: Vec<usize> = Vec::new();
    for (i, cand) in candidates.members.iter().enumerate() {
        let mut covered = false;
        for &r in &retained {
            if hellinger_pair(cand, &candidates.members[r])? <= eps {
                covered = true;
                break;
            }
        }
        if !covered {
            retained.push(i);
        }
    }
    Net::from_members(retained.iter().map(|&i| candidates.members[i].clone()).collect())
}

/// Check the ball-counting bound `|{t in net : scale * h(s,t) <= r}| <=
/// exp[D (r/eps)^2]` for every probe `s` and every radius `r >= 2 eps` on
/// the grid formed by `2 eps` and all scaled probe-to-member distances.
pub fn verify_metric_dimension(
    net: &Net,
    d: f64,
    eps: f64,
    probes: &[DensityMember],
    scale: f64,
) -> Result<bool, ModelError> {
    if !(eps > 0.0) || d < 0.5 {
        return Err(ModelError::BadParams(vec![d, eps], "need eps > 0, D >= 1/2".into()));
    }
    for probe in probes {
        let dists: Vec<f64> = net
            .distances_from(probe)?
            .into_iter()
            .map(|h| h * scale)
            .collect();
        let mut radii: Vec<f64> = dists.iter().copied().filter(|&r| r >= 2.0 * eps).collect();
        radii.push(2.0 * eps);
        for &r in &radii {
            let count = dists.iter().filter(|&&h| h <= r).count();
            if (count as f64) > (d * (r / eps).powi(2)).exp() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Nonnegative normalized weights aligned with a net.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::BadWeights("empty weight vector".into()));
        }
        if weights.iter().any(|&w| w.is_nan() || w < 0.0) {
            return Err(ModelError::BadWeights("weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::BadWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector { weights })
    }

    pub fn uniform(len: usize) -> Result<Self, ModelError> {
        if len == 0 {
            return Err(ModelError::BadWeights("empty weight vector".into()));
        }
        Ok(WeightVector {
            weights: vec![1.0 / len as f64; len],
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Contaminant distribution mixed into a dataset.
#[derive(Debug, Clone)]
pub enum Contaminant {
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Another density member.
    Member(Box<DensityMember>),
}

/// Mixture specification `(1 - rate) * truth + rate * contaminant`.
#[derive(Debug, Clone)]
pub struct ContaminationSpec {
    pub rate: f64,
    pub contaminant: Contaminant,
}

impl ContaminationSpec {
    pub fn new(rate: f64, contaminant: Contaminant) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(ModelError::BadContaminationRate(rate));
        }
        Ok(ContaminationSpec { rate, contaminant })
    }
}

/// Ordered observations plus the generating specification.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub observations: Vec<Vec<f64>>,
    pub truth: Option<DensityMember>,
    pub contamination: Option<ContaminationSpec>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn from_observations(observations: Vec<Vec<f64>>) -> Self {
        Dataset {
            observations,
            truth: None,
            contamination: None,
            seed: None,
        }
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }
}

/// Cumulative-inverse sampling table for exponential-family members.
struct InverseCdfTable {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdfTable {
    fn build(member: &DensityMember) -> Result<Self, ModelError> {
        // 2048 Simpson panels over [0,1]
        let panels = 2048usize;
        let h = 1.0 / panels as f64;
        let mut xs = Vec::with_capacity(panels + 1);
        let mut cdf = Vec::with_capacity(panels + 1);
        let mut acc = 0.0;
        xs.push(0.0);
        cdf.push(0.0);
        let mut f_left = member.eval(&[0.0])?;
        for i in 0..panels {
            let a = i as f64 * h;
            let m = a + 0.5 * h;
            let b = a + h;
            let fm = member.eval(&[m])?;
            let fb = member.eval(&[b])?;
            acc += h / 6.0 * (f_left + 4.0 * fm + fb);
            xs.push(b);
            cdf.push(acc);
            f_left = fb;
        }
        let total = acc;
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(InverseCdfTable { xs, cdf })
    }

    fn sample(&self, u: f64) -> f64 {
        let idx = self.cdf.partition_point(|&c| c < u);
        if idx == 0 {
            return self.xs[0];
        }
        if idx >= self.cdf.len() {
            return *self.xs.last().unwrap();
        }
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let (x0, x1) = (self.xs[idx - 1], self.xs[idx]);
        if c1 > c0 {
            x0 + (x1 - x0) * (u - c0) / (c1 - c0)
        } else {
            x0
        }
    }
}

enum MemberSampler {
    Direct,
    ExpTable(InverseCdfTable),
}

fn make_sampler(member: &DensityMember) -> Result<MemberSampler, ModelError> {
    match member {
        DensityMember::ExpFamily { .. } => Ok(MemberSampler::ExpTable(InverseCdfTable::build(member)?)),
        _ => Ok(MemberSampler::Direct),
    }
}

fn sample_member(
    member: &DensityMember,
    sampler: &MemberSampler,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>, ModelError> {
    Ok(match (member, sampler) {
        (DensityMember::UniformScale { t }, _) => vec![rng.gen::<f64>() * t],
        (DensityMember::UniformCube { theta }, _) => {
            theta.iter().map(|&th| th + rng.gen::<f64>()).collect()
        }
        (DensityMember::GammaTranslation { alpha, theta }, _) => {
            let g = rand_distr::Gamma::new(2.0 * alpha, 1.0)
                .map_err(|e| ModelError::UnsupportedSampling(e.to_string()))?;
            vec![theta + g.sample(rng)]
        }
        (DensityMember::Histogram { theta, partition }, _) => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut cell = partition.k() - 1;
            for (j, &p) in theta.iter().enumerate() {
                acc += p;
                if u <= acc {
                    cell = j;
                    break;
                }
            }
            let lo = partition.edges[cell];
            vec![lo + rng.gen::<f64>() * partition.width(cell)]
        }
        (DensityMember::ExpFamily { .. }, MemberSampler::ExpTable(table)) => {
            vec![table.sample(rng.gen())]
        }
        (DensityMember::ExpFamily { .. }, MemberSampler::Direct) => {
            return Err(ModelError::UnsupportedSampling(
                "exponential family needs an inverse-CDF table".into(),
            ))
        }
    })
}

/// Draw `n` i.i.d. observations from `(1 - rate) * truth + rate * contaminant`,
/// deterministically under `seed`.
pub fn sample_dataset(
    truth: &DensityMember,
    contamination: Option<&ContaminationSpec>,
    n: usize,
    seed: u64,
) -> Result<Dataset, ModelError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let truth_sampler = make_sampler(truth)?;
    let cont_sampler = match contamination.map(|c| &c.contaminant) {
        Some(Contaminant::Member(m)) => Some(make_sampler(m)?),
        _ => None,
    };
    let mut observations = Vec::with_capacity(n);
    for _ in 0..n {
        let contaminated = match contamination {
            Some(spec) => rng.gen::<f64>() < spec.rate,
            None => false,
        };
        let obs = if contaminated {
            match &contamination.unwrap().contaminant {
                Contaminant::Uniform { lo, hi } => vec![lo + rng.gen::<f64>() * (hi - lo)],
                Contaminant::Member(m) => sample_member(m, cont_sampler.as_ref().unwrap(), &mut rng)?,
            }
        } else {
            sample_member(truth, &truth_sampler, &mut rng)?
        };
        observations.push(obs);
    }
    Ok(Dataset {
        observations,
        truth: Some(truth.clone()),
        contamination: contamination.cloned(),
        seed: Some(seed),
    })
}

/// Monte Carlo discretization of the Dirichlet prior over histograms on a
/// partition: `n_atoms` i.i.d. Dirichlet(alpha) draws mapped to histogram
/// members with equal weights.
///
/// Zero draws (possible at floating precision for small alpha) are clamped
/// to `1e-12` and renormalized so the members stay in the open simplex.
pub fn dirichlet_prior_net(
    alpha: &[f64],
    partition: Arc<Partition>,
    n_atoms: usize,
    seed: u64,
) -> Result<(Net, WeightVector), ModelError> {
    if alpha.len() != partition.k() || alpha.len() < 2 {
        return Err(ModelError::BadDirichlet(format!(
            "need k = {} >= 2 concentration parameters",
            partition.k()
        )));
    }
    if alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(ModelError::BadDirichlet("alpha must be positive".into()));
    }
    if n_atoms == 0 {
        return Err(ModelError::EmptyNet);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let gammas: Vec<rand_distr::Gamma<f64>> = alpha
        .iter()
        .map(|&a| rand_distr::Gamma::new(a, 1.0).map_err(|e| ModelError::BadDirichlet(e.to_string())))
        .collect::<Result<_, _>>()?;
    let mut members = Vec::with_capacity(n_atoms);
    for _ in 0..n_atoms {
        let mut draw: Vec<f64> = gammas.iter().map(|g| g.sample(&mut rng)).collect();
        let mut sum: f64 = draw.iter().sum();
        if sum <= 0.0 {
            draw.iter_mut().for_each(|v| *v = 1.0);
            sum = draw.len() as f64;
        }
        draw.iter_mut().for_each(|v| *v /= sum);
        if draw.iter().any(|&v| v < 1e-12) {
            draw.iter_mut().for_each(|v| *v = v.max(1e-12));
            let s: f64 = draw.iter().sum();
            draw.iter_mut().for_each(|v| *v /= s);
        }
        members.push(DensityMember::histogram(draw, partition.clone())?);
    }
    Ok((Net::from_members(members)?, WeightVector::uniform(n_atoms)?))
}

/// Write a net (with optional weights) in the line-oriented text format:
/// a header describing the family, then one member per line with full
/// precision comma-separated parameters and an optional trailing weight.
pub fn write_net(
    net: &Net,
    weights: Option<&WeightVector>,
    out: &mut impl Write,
) -> Result<(), ModelError> {
    if let Some(w) = weights {
        if w.len() != net.len() {
            return Err(ModelError::BadWeights("weights misaligned with net".into()));
        }
    }
    writeln!(out, "family={}", net.family())?;
    match net.members.first() {
        Some(DensityMember::Histogram { partition, .. }) => {
            let edges: Vec<String> = partition.edges.iter().map(|e| format!("{e:?}")).collect();
            writeln!(out, "edges={}", edges.join(";"))?;
        }
        Some(DensityMember::GammaTranslation { alpha, .. }) => {
            writeln!(out, "alpha={alpha:?}")?;
        }
        Some(DensityMember::ExpFamily { spec, .. }) => {
            writeln!(out, "degree={} bound={:?}", spec.degree, spec.bound)?;
        }
        _ => {}
    }
    let k = net.members.first().map_or(0, |m| m.params().len());
    writeln!(out, "params={k}")?;
    writeln!(out, "members={}", net.len())?;
    for (i, m) in net.members.iter().enumerate() {
        let fields: Vec<String> = m.params().iter().map(|p| format!("{p:?}")).collect();
        let mut line = fields.join(",");
        if let Some(w) = weights {
            line.push(',');
            line.push_str(&format!("{:?}", w.weights()[i]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.strip_prefix(key).and_then(|r| r.strip_prefix('='))
}

/// Parse the text format produced by [`write_net`].
pub fn read_net(input: &mut impl BufRead) -> Result<(Net, Option<WeightVector>), ModelError> {
    let mut lines = input.lines();
    let mut next_line = |what: &str| -> Result<String, ModelError> {
        lines
            .next()
            .ok_or_else(|| ModelError::Serde(format!("missing {what}")))?
            .map_err(ModelError::Io)
    };
    let family_line = next_line("family header")?;
    let family: FamilyTag = header_value(&family_line, "family")
        .ok_or_else(|| ModelError::Serde("expected family=... header".into()))?
        .parse()?;
    let mut line = next_line("params header")?;
    let spec = match family {
        FamilyTag::Histogram => {
            let edges_str = header_value(&line, "edges")
                .ok_or_else(|| ModelError::Serde("expected edges=... header".into()))?;
            let edges: Vec<f64> = edges_str
                .split(';')
                .map(|s| s.parse().map_err(|_| ModelError::Serde(format!("bad edge {s:?}"))))
                .collect::<Result<_, _>>()?;
            line = next_line("params header")?;
            FamilySpec::Histogram {
                partition: Partition::new(edges)?,
            }
        }
        FamilyTag::GammaTranslation => {
            let alpha: f64 = header_value(&line, "alpha")
                .ok_or_else(|| ModelError::Serde("expected alpha=... header".into()))?
                .parse()
                .map_err(|_| ModelError::Serde("bad alpha".into()))?;
            line = next_line("params header")?;
            FamilySpec::GammaTranslation { alpha }
        }
        FamilyTag::ExpFamily => {
            let mut parts = line.split_whitespace();
            let degree: usize = parts
                .next()
                .and_then(|p| header_value(p, "degree"))
                .ok_or_else(|| ModelError::Serde("expected degree=... header".into()))?
                .parse()
                .map_err(|_| ModelError::Serde("bad degree".into()))?;
            let bound: f64 = parts
                .next()
                .and_then(|p| header_value(p, "bound"))
                .ok_or_else(|| ModelError::Serde("expected bound=... header".into()))?
                .parse()
                .map_err(|_| ModelError::Serde("bad bound".into()))?;
            line = next_line("params header")?;
            FamilySpec::ExpFamily(ExpFamilySpec::new(degree, bound)?)
        }
        FamilyTag::UniformScale => FamilySpec::UniformScale,
        FamilyTag::UniformCube => FamilySpec::UniformCube { d: 0 },
    };
    let k: usize = header_value(&line, "params")
        .ok_or_else(|| ModelError::Serde("expected params=... header".into()))?
        .parse()
        .map_err(|_| ModelError::Serde("bad params count".into()))?;
    let spec = match spec {
        FamilySpec::UniformCube { .. } => FamilySpec::UniformCube { d: k },
        other => other,
    };
    let count_line = next_line("members header")?;
    let count: usize = header_value(&count_line, "members")
        .ok_or_else(|| ModelError::Serde("expected members=... header".into()))?
        .parse()
        .map_err(|_| ModelError::Serde("bad member count".into()))?;
    let mut members = Vec::with_capacity(count);
    let mut weights = Vec::new();
    for _ in 0..count {
        let row = next_line("member row")?;
        let fields: Vec<f64> = row
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| ModelError::Serde(format!("bad number {s:?}"))))
            .collect::<Result<_, _>>()?;
        if fields.len() == k + 1 {
            weights.push(fields[k]);
            members.push(spec.member(&fields[..k])?);
        } else if fields.len() == k {
            members.push(spec.member(&fields)?);
        } else {
            return Err(ModelError::Serde(format!(
                "row has {} fields, expected {k} or {}",
                fields.len(),
                k + 1
            )));
        }
    }
    let net = Net::from_members(members)?;
    let weights = if weights.is_empty() {
        None
    } else if weights.len() == net.len() {
        Some(WeightVector::new(weights)?)
    } else {
        return Err(ModelError::Serde("inconsistent weight column".into()));
    };
    Ok((net, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist2(a: f64) -> DensityMember {
        let part = Partition::equispaced(0.0, 1.0, 2).unwrap();
        DensityMember::histogram(vec![a, 1.0 - a], part).unwrap()
    }

    #[test]
    fn density_eval_fixed_points() {
        let m = DensityMember::uniform_scale(2.0).unwrap();
        assert_eq!(m.eval(&[1.0]).unwrap(), 0.5);
        assert_eq!(m.eval(&[3.0]).unwrap(), 0.0);
        let c = DensityMember::uniform_cube(vec![0.0, 0.0]).unwrap();
        assert_eq!(c.eval(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(c.eval(&[1.5, 0.5]).unwrap(), 0.0);
        assert!(c.eval(&[0.5]).is_err());
        let h = hist2(0.5);
        assert_eq!(h.eval(&[0.25]).unwrap(), 1.0);
    }

    #[test]
    fn exp_family_log_partition_flat() {
        // theta = (c, 0): density is uniform regardless of c
        let spec = ExpFamilySpec::new(1, 5.0).unwrap();
        let m = DensityMember::exp_family(vec![3.0, 0.0], spec).unwrap();
        assert!((m.eval(&[0.3]).unwrap() - 1.0).abs() < 1e-9);
        assert!((m.eval(&[0.9]).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hellinger_pair_uniform_scale() {
        let a = DensityMember::uniform_scale(1.0).unwrap();
        let b = DensityMember::uniform_scale(4.0).unwrap();
        let h = hellinger_pair(&a, &b).unwrap();
        assert!((h * h - 0.5).abs() < 1e-12);
        assert_eq!(hellinger_pair(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn hellinger_pair_uniform_cube() {
        let a = DensityMember::uniform_cube(vec![0.0, 0.0]).unwrap();
        let b = DensityMember::uniform_cube(vec![0.3, 0.2]).unwrap();
        let h = hellinger_pair(&a, &b).unwrap();
        assert!((h * h - 0.44).abs() < 1e-12);
    }

    #[test]
    fn hellinger_pair_histogram() {
        let a = hist2(0.5);
        let b = hist2(0.2);
        let h = hellinger_pair(&a, &b).unwrap();
        let expect = 0.5
            * ((0.5f64.sqrt() - 0.2f64.sqrt()).powi(2) + (0.5f64.sqrt() - 0.8f64.sqrt()).powi(2));
        assert!((h * h - expect).abs() < 1e-12);
    }

    #[test]
    fn exp_family_matches_quadrature() {
        let spec = ExpFamilySpec::new(2, 2.0).unwrap();
        let a = DensityMember::exp_family(vec![0.5, -1.0, 0.7], spec.clone()).unwrap();
        let b = DensityMember::exp_family(vec![-0.3, 0.8, -1.5], spec).unwrap();
        let analytic = hellinger_pair(&a, &b).unwrap();
        let qspec = QuadratureSpec::new(0.0, 1.0);
        let (ac, bc) = (a.clone(), b.clone());
        let numeric = kernel::hellinger_quadrature(
            move |x| ac.eval(&[x]).unwrap(),
            move |x| bc.eval(&[x]).unwrap(),
            &qspec,
        )
        .unwrap();
        assert!((analytic - numeric).abs() < 1e-8, "{analytic} vs {numeric}");
    }

    #[test]
    fn gamma_translation_quadrature_consistency() {
        let a = DensityMember::gamma_translation(0.7, -0.2).unwrap();
        let b = DensityMember::gamma_translation(0.7, 0.4).unwrap();
        let h = hellinger_pair(&a, &b).unwrap();
        assert!(h > 0.0 && h < 1.0);
        // symmetric and zero on identical params
        let h2 = hellinger_pair(&b, &a).unwrap();
        assert!((h - h2).abs() < 1e-12);
        assert_eq!(hellinger_pair(&a, &a).unwrap(), 0.0);
        // compare against a direct quadrature on the raw (singular) densities
        // with a window starting slightly above the support edge
        let qspec = QuadratureSpec {
            lower: 0.4 + 1e-12,
            upper: 60.0,
            abs_tol: 1e-9,
            max_subdivisions: 1 << 20,
        };
        let (ac, bc) = (a.clone(), b.clone());
        let rho = kernel::integrate(
            move |x| (ac.eval(&[x]).unwrap() * bc.eval(&[x]).unwrap()).sqrt(),
            &qspec,
        )
        .unwrap();
        let h_direct = (1.0 - rho).max(0.0).sqrt();
        assert!((h - h_direct).abs() < 1e-4, "{h} vs {h_direct}");
    }

    #[test]
    fn grid_net_counts() {
        let axes = vec![(0..11).map(|i| 1.0 + 0.1 * i as f64).collect::<Vec<_>>()];
        let net = build_grid_net(&FamilySpec::UniformScale, &axes).unwrap();
        assert_eq!(net.len(), 11);
        let axes = vec![
            (-10..=10).map(|i| i as f64 * 0.024).collect::<Vec<f64>>(),
        ];
        let net = build_grid_net(&FamilySpec::UniformCube { d: 1 }, &axes).unwrap();
        assert_eq!(net.len(), 21);
        let spec = ExpFamilySpec::new(1, 2.0).unwrap();
        let ax: Vec<f64> = (0..5).map(|i| -2.0 + i as f64).collect();
        let net = build_grid_net(&FamilySpec::ExpFamily(spec), &[ax.clone(), ax]).unwrap();
        assert_eq!(net.len(), 25);
        for m in net.members() {
            if let DensityMember::ExpFamily { log_norm, .. } = m {
                assert!(log_norm.is_finite());
            }
        }
    }

    #[test]
    fn grid_net_row_major_order() {
        let spec = ExpFamilySpec::new(1, 2.0).unwrap();
        let net = build_grid_net(
            &FamilySpec::ExpFamily(spec),
            &[vec![-1.0, 1.0], vec![-2.0, 0.0, 2.0]],
        )
        .unwrap();
        let got: Vec<Vec<f64>> = net.members().iter().map(|m| m.params()).collect();
        assert_eq!(got[0], vec![-1.0, -2.0]);
        assert_eq!(got[1], vec![-1.0, 0.0]);
        assert_eq!(got[3], vec![1.0, -2.0]);
    }

    #[test]
    fn eps_net_cases() {
        let axes = vec![(0..11).map(|i| 1.0 + 0.1 * i as f64).collect::<Vec<_>>()];
        let net = build_grid_net(&FamilySpec::UniformScale, &axes).unwrap();
        let single = build_eps_net(&net, 1.0).unwrap();
        assert_eq!(single.len(), 1);
        let all = build_eps_net(&net, 0.0).unwrap();
        assert_eq!(all.len(), net.len());
        // brute-force greedy cover oracle
        let eps = 0.1;
        let mut retained: Vec<usize> = Vec::new();
        for i in 0..net.len() {
            let covered = retained
                .iter()
                .any(|&r| hellinger_pair(&net.members()[i], &net.members()[r]).unwrap() <= eps);
            if !covered {
                retained.push(i);
            }
        }
        let got = build_eps_net(&net, eps).unwrap();
        assert_eq!(got.len(), retained.len());
        // cover property
        for m in net.members() {
            let dmin = got
                .members()
                .iter()
                .map(|r| hellinger_pair(m, r).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(dmin <= eps + 1e-12);
        }
    }

    #[test]
    fn metric_dimension_single_member() {
        let net = Net::from_members(vec![DensityMember::uniform_scale(1.0).unwrap()]).unwrap();
        let probe = DensityMember::uniform_scale(2.0).unwrap();
        assert!(verify_metric_dimension(&net, 0.5, 0.3, &[probe], 1.0).unwrap());
    }

    #[test]
    fn metric_dimension_boundary_matches_counting() {
        // equispaced 1-D net; find the failing/holding boundary by bisection
        // and check against direct counting at the critical radius
        let axes = vec![(0..60).map(|i| (0.005 * i as f64).exp()).collect::<Vec<_>>()];
        let net = build_grid_net(&FamilySpec::UniformScale, &axes).unwrap();
        let probes: Vec<DensityMember> = net.members().to_vec();
        let eps = 0.1;
        let (mut lo, mut hi) = (0.5, 50.0);
        assert!(!verify_metric_dimension(&net, lo, eps, &probes, 1.0).unwrap());
        assert!(verify_metric_dimension(&net, hi, eps, &probes, 1.0).unwrap());
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if verify_metric_dimension(&net, mid, eps, &probes, 1.0).unwrap() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // oracle: exhaustive max over probes and radii of eps^2 ln(count) / r^2
        let mut d_star: f64 = 0.0;
        for probe in &probes {
            let dists = net.distances_from(probe).unwrap();
            let mut radii: Vec<f64> = dists.iter().copied().filter(|&r| r >= 2.0 * eps).collect();
            radii.push(2.0 * eps);
            for &r in &radii {
                let count = dists.iter().filter(|&&h| h <= r).count();
                d_star = d_star.max((count as f64).ln() * (eps / r).powi(2));
            }
        }
        assert!(
            (hi - d_star.max(0.5)).abs() < 1e-6,
            "bisection {hi} vs oracle {d_star}"
        );
    }

    #[test]
    fn dirichlet_net_moments_and_determinism() {
        let part = Partition::equispaced(0.0, 1.0, 3).unwrap();
        let (net, w) = dirichlet_prior_net(&[1.0, 1.0, 1.0], part.clone(), 1, 7).unwrap();
        assert_eq!(net.len(), 1);
        assert_eq!(w.weights(), &[1.0]);
        let n_atoms = 4000;
        let (net, _) = dirichlet_prior_net(&[1.0, 1.0, 1.0], part.clone(), n_atoms, 7).unwrap();
        for j in 0..3 {
            let mean: f64 = net
                .members()
                .iter()
                .map(|m| m.params()[j])
                .sum::<f64>()
                / n_atoms as f64;
            // Dirichlet(1,1,1) coordinate variance is 1/18
            let se = (1.0 / 18.0 / n_atoms as f64).sqrt();
            assert!((mean - 1.0 / 3.0).abs() < 3.0 * se, "coordinate {j} mean {mean}");
        }
        let (net2, _) = dirichlet_prior_net(&[1.0, 1.0, 1.0], part, n_atoms, 7).unwrap();
        for (a, b) in net.members().iter().zip(net2.members()) {
            assert_eq!(a.params(), b.params());
        }
    }

    #[test]
    fn sample_dataset_cases() {
        let truth = DensityMember::uniform_scale(10.0).unwrap();
        let ds = sample_dataset(&truth, None, 200, 3).unwrap();
        assert_eq!(ds.n(), 200);
        assert!(ds.observations.iter().all(|x| x[0] >= 0.0 && x[0] <= 10.0));
        let spec = ContaminationSpec::new(
            1.0,
            Contaminant::Uniform { lo: 110.0, hi: 110.01 },
        )
        .unwrap();
        let ds = sample_dataset(&truth, Some(&spec), 50, 3).unwrap();
        assert!(ds.observations.iter().all(|x| x[0] >= 110.0 && x[0] <= 110.01));
        // determinism
        let a = sample_dataset(&truth, None, 20, 11).unwrap();
        let b = sample_dataset(&truth, None, 20, 11).unwrap();
        assert_eq!(a.observations, b.observations);
    }

    #[test]
    fn contamination_max_frequency() {
        // P(max > 110) = 1 - (1 - 1/n)^n for rate 1/n, checked over many
        // replications
        let n = 100;
        let truth = DensityMember::uniform_scale(10.0).unwrap();
        let spec = ContaminationSpec::new(
            1.0 / n as f64,
            Contaminant::Uniform { lo: 110.0, hi: 110.01 },
        )
        .unwrap();
        let reps = 10_000;
        let mut hits = 0usize;
        for r in 0..reps {
            let ds = sample_dataset(&truth, Some(&spec), n, 1000 + r).unwrap();
            if ds.observations.iter().any(|x| x[0] > 110.0) {
                hits += 1;
            }
        }
        let freq = hits as f64 / reps as f64;
        let expect = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
        assert!((freq - expect).abs() < 0.02, "freq {freq}, expect {expect}");
    }

    #[test]
    fn exp_family_sampling_matches_density() {
        // moment check: empirical mean within MC error of the quadrature mean
        let spec = ExpFamilySpec::new(2, 2.0).unwrap();
        let truth = DensityMember::exp_family(vec![0.0, 1.5, -2.0], spec).unwrap();
        let t2 = truth.clone();
        let mean_true = kernel::integrate(
            |x| x * t2.eval(&[x]).unwrap(),
            &QuadratureSpec::new(0.0, 1.0),
        )
        .unwrap();
        let ds = sample_dataset(&truth, None, 20_000, 5).unwrap();
        let mean_emp: f64 =
            ds.observations.iter().map(|x| x[0]).sum::<f64>() / ds.n() as f64;
        assert!(
            (mean_emp - mean_true).abs() < 0.01,
            "{mean_emp} vs {mean_true}"
        );
    }

    #[test]
    fn net_round_trip() {
        let part = Partition::equispaced(0.0, 1.0, 3).unwrap();
        let (net, w) = dirichlet_prior_net(&[0.5, 1.0, 0.8], part, 5, 2).unwrap();
        let mut buf = Vec::new();
        write_net(&net, Some(&w), &mut buf).unwrap();
        let (net2, w2) = read_net(&mut buf.as_slice()).unwrap();
        assert_eq!(net.len(), net2.len());
        assert_eq!(w2.unwrap().weights(), w.weights());
        for (a, b) in net.members().iter().zip(net2.members()) {
            assert_eq!(a.params(), b.params());
        }
        // exp family round trip without weights
        let spec = ExpFamilySpec::new(1, 2.0).unwrap();
        let ax: Vec<f64> = vec![-1.0, 0.0, 1.0];
        let net = build_grid_net(&FamilySpec::ExpFamily(spec), &[ax.clone(), ax]).unwrap();
        let mut buf = Vec::new();
        write_net(&net, None, &mut buf).unwrap();
        let (net2, none) = read_net(&mut buf.as_slice()).unwrap();
        assert!(none.is_none());
        for (a, b) in net.members().iter().zip(net2.members()) {
            assert_eq!(a.params(), b.params());
        }
    }

    #[test]
    fn cube_norm_equivalence() {
        // sqrt(1 - e^-1) |theta - theta'|_1^(1/2) <= h <= |theta - theta'|_1^(1/2)
        // whenever |theta - theta'|_1 <= 1
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let a_low = (1.0 - (-1f64).exp()).sqrt();
        for _ in 0..500 {
            let d = rng.gen_range(1..=4);
            let draw = |rng: &mut ChaCha12Rng| -> Vec<f64> {
                loop {
                    let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
                    if v.iter().map(|x| x.abs()).sum::<f64>() <= 0.5 {
                        return v;
                    }
                }
            };
            let ta = draw(&mut rng);
            let tb = draw(&mut rng);
            let l1: f64 = ta.iter().zip(&tb).map(|(u, v)| (u - v).abs()).sum();
            let h = hellinger_pair(
                &DensityMember::uniform_cube(ta).unwrap(),
                &DensityMember::uniform_cube(tb).unwrap(),
            )
            .unwrap();
            assert!(h <= l1.sqrt() + 1e-12);
            assert!(h >= a_low * l1.sqrt() - 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn hellinger_triangle_uniform_scale(
            a in 0.1f64..10.0, b in 0.1f64..10.0, c in 0.1f64..10.0,
        ) {
            let ma = DensityMember::uniform_scale(a).unwrap();
            let mb = DensityMember::uniform_scale(b).unwrap();
            let mc = DensityMember::uniform_scale(c).unwrap();
            let hab = hellinger_pair(&ma, &mb).unwrap();
            let hbc = hellinger_pair(&mb, &mc).unwrap();
            let hac = hellinger_pair(&ma, &mc).unwrap();
            prop_assert!(hac <= hab + hbc + 1e-9);
            prop_assert!((hab - hellinger_pair(&mb, &ma).unwrap()).abs() < 1e-15);
        }

        #[test]
        fn hellinger_triangle_histogram(
            a in 0.05f64..0.95, b in 0.05f64..0.95, c in 0.05f64..0.95,
        ) {
            let (ma, mb, mc) = (hist2(a), hist2(b), hist2(c));
            let hab = hellinger_pair(&ma, &mb).unwrap();
            let hbc = hellinger_pair(&mb, &mc).unwrap();
            let hac = hellinger_pair(&ma, &mc).unwrap();
            prop_assert!(hac <= hab + hbc + 1e-12);
        }

        #[test]
        fn hellinger_triangle_gamma(
            a in -0.9f64..0.9, b in -0.9f64..0.9, c in -0.9f64..0.9,
        ) {
            let ma = DensityMember::gamma_translation(0.6, a).unwrap();
            let mb = DensityMember::gamma_translation(0.6, b).unwrap();
            let mc = DensityMember::gamma_translation(0.6, c).unwrap();
            let hab = hellinger_pair(&ma, &mb).unwrap();
            let hbc = hellinger_pair(&mb, &mc).unwrap();
            let hac = hellinger_pair(&ma, &mc).unwrap();
            prop_assert!(hac <= hab + hbc + 1e-9);
        }
    }
}
