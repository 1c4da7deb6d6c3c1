//! Pseudo-posteriors over finite nets and their classical counterparts.
//!
//! For a dataset `X = (X_1, ..., X_n)` and candidates `t, t'` the comparison
//! statistic is
//!
//! ```text
//! Psi(X, t, t') = sum_i psi( sqrt( t'(X_i) / t(X_i) ) ),   psi(x) = (x-1)/(x+1),
//! ```
//!
//! so each observation contributes a value in `[-1, 1]` no matter how extreme
//! it is. The pseudo-posterior weights a candidate by how well it survives its
//! worst comparison over the net:
//!
//! ```text
//! post(t) proportional to prior(t) * exp[ -beta * sup_{t'} Psi(X, t, t') ],
//! ```
//!
//! while the classical posterior uses `prior(t) * exp[ beta_L * loglik(t) ]`.
//! Both are computed in the log domain with a max-shift normalization.
//!
//! Collections of nets with penalties support a penalized variant: the
//! comparison statistic becomes `sup_{m', t'} [Psi(X, t, t') - pen(m')]` and
//! the prior on net `m` carries an extra factor `exp[-beta * pen(m)]`. With a
//! single net every penalty difference is exactly zero and the computation
//! reduces bit-for-bit to the unpenalized pseudo-posterior.

use std::io::Write;

use thiserror::Error;

use crate::kernel::{self, KernelError};
use crate::model::{Dataset, DensityMember, ModelError, Net, WeightVector};

/// Errors from posterior computation.
#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("kernel error: {0}")]
    Kernel(#[from] KernelError),
    #[error("every candidate has zero posterior weight")]
    DegeneratePosterior,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("inverse temperature must be positive and finite, got {0}")]
    BadBeta(f64),
    #[error("invalid model collection: {0}")]
    BadCollection(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

struct HistFast {
    /// Observation count per cell (observations outside the partition score
    /// zero against every member and are dropped).
    counts: Vec<f64>,
    /// `sqrt(theta_j)` per member, row-major `n_members x k`.
    sqrt_theta: Vec<f64>,
    k: usize,
}

/// Square roots of every member density at every observation, the shared
/// input of all comparison statistics. For nets of histograms on one
/// partition a sufficient-statistic fast path reduces the per-pair cost from
/// the number of observations to the number of cells.
pub struct DensityMatrix {
    n_obs: usize,
    n_members: usize,
    /// Row-major `n_members x n_obs` matrix of `sqrt(t_i(X_o))`.
    sqrt_vals: Vec<f64>,
    hist: Option<HistFast>,
}

impl DensityMatrix {
    pub fn new(net: &Net, dataset: &Dataset) -> Result<Self, PosteriorError> {
        let n_obs = dataset.n();
        let n_members = net.len();
        let mut sqrt_vals = vec![0.0; n_members * n_obs];
        for (i, member) in net.members().iter().enumerate() {
            for (o, x) in dataset.observations.iter().enumerate() {
                let v = member.eval(x)?;
                if !v.is_finite() || v < 0.0 {
                    return Err(PosteriorError::NonFinite(format!(
                        "density of member {i} at observation {o}"
                    )));
                }
                sqrt_vals[i * n_obs + o] = v.sqrt();
            }
        }
        let hist = match net.members().first() {
            Some(DensityMember::Histogram { partition, .. }) => {
                let k = partition.k();
                let mut counts = vec![0.0; k];
                for x in &dataset.observations {
                    if let Some(j) = partition.cell_index(x[0]) {
                        counts[j] += 1.0;
                    }
                }
                let mut sqrt_theta = vec![0.0; n_members * k];
                for (i, member) in net.members().iter().enumerate() {
                    if let DensityMember::Histogram { theta, .. } = member {
                        for (j, &p) in theta.iter().enumerate() {
                            sqrt_theta[i * k + j] = p.sqrt();
                        }
                    }
                }
                Some(HistFast { counts, sqrt_theta, k })
            }
            _ => None,
        };
        Ok(DensityMatrix {
            n_obs,
            n_members,
            sqrt_vals,
            hist,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.sqrt_vals[i * self.n_obs..(i + 1) * self.n_obs]
    }

    /// `Psi(X, t_i, t_j)`: the observation-wise sum of bounded scores
    /// comparing candidate `j` against candidate `i`.
    pub fn psi_statistic(&self, i: usize, j: usize) -> f64 {
        if let Some(h) = &self.hist {
            let ti = &h.sqrt_theta[i * h.k..(i + 1) * h.k];
            let tj = &h.sqrt_theta[j * h.k..(j + 1) * h.k];
            return h
                .counts
                .iter()
                .zip(ti.iter().zip(tj))
                .map(|(&c, (&si, &sj))| c * kernel::psi_from_sqrts(sj, si))
                .sum();
        }
        psi_rows(self.row(i), self.row(j))
    }

    /// `sup_{t' in net} Psi(X, t_i, t')`.
    pub fn sup_psi(&self, i: usize) -> f64 {
        (0..self.n_members)
            .map(|j| self.psi_statistic(i, j))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Log-likelihood of candidate `i`; `-inf` when any observation falls
    /// outside its support.
    pub fn log_likelihood(&self, i: usize) -> f64 {
        let mut acc = 0.0;
        for &s in self.row(i) {
            if s == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += s.ln();
        }
        2.0 * acc
    }
}

fn psi_rows(row_t: &[f64], row_tp: &[f64]) -> f64 {
    row_t
        .iter()
        .zip(row_tp)
        .map(|(&si, &sj)| kernel::psi_from_sqrts(sj, si))
        .sum()
}

/// `Psi(X, t, t')` with `t` from one matrix and `t'` from another built on
/// the same dataset.
pub fn psi_cross(
    mat_t: &DensityMatrix,
    i: usize,
    mat_tp: &DensityMatrix,
    j: usize,
) -> Result<f64, PosteriorError> {
    if mat_t.n_obs != mat_tp.n_obs {
        return Err(PosteriorError::LengthMismatch(
            "density matrices built on different datasets".into(),
        ));
    }
    if let (Some(ha), Some(hb)) = (&mat_t.hist, &mat_tp.hist) {
        if ha.k == hb.k && ha.counts == hb.counts {
            let ti = &ha.sqrt_theta[i * ha.k..(i + 1) * ha.k];
            let tj = &hb.sqrt_theta[j * hb.k..(j + 1) * hb.k];
            return Ok(ha
                .counts
                .iter()
                .zip(ti.iter().zip(tj))
                .map(|(&c, (&si, &sj))| c * kernel::psi_from_sqrts(sj, si))
                .sum());
        }
    }
    Ok(psi_rows(mat_t.row(i), mat_tp.row(j)))
}

/// Normalized posterior with its log-domain intermediates.
#[derive(Debug, Clone)]
pub struct Posterior {
    /// Unnormalized log-weights, before the max shift.
    pub log_unnorm: Vec<f64>,
    /// Normalized weights, summing to one.
    pub weights: Vec<f64>,
    /// `log sum_i exp(log_unnorm[i])`.
    pub log_norm: f64,
}

impl Posterior {
    /// Normalize unnormalized log-weights by a max shift.
    pub fn from_log_unnorm(log_unnorm: Vec<f64>) -> Result<Self, PosteriorError> {
        if log_unnorm.is_empty() {
            return Err(PosteriorError::LengthMismatch("empty log-weight vector".into()));
        }
        if log_unnorm.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(PosteriorError::NonFinite("log-weights".into()));
        }
        let max = log_unnorm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(PosteriorError::DegeneratePosterior);
        }
        let shifted: Vec<f64> = log_unnorm.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = shifted.iter().sum();
        let weights = shifted.iter().map(|&w| w / sum).collect();
        Ok(Posterior {
            log_unnorm,
            weights,
            log_norm: max + sum.ln(),
        })
    }

    pub fn weight_vector(&self) -> Result<WeightVector, PosteriorError> {
        // renormalize defensively: the sum can drift by an ulp from 1
        let sum: f64 = self.weights.iter().sum();
        Ok(WeightVector::new(
            self.weights.iter().map(|&w| w / sum).collect(),
        )?)
    }
}

fn check_beta(beta: f64) -> Result<(), PosteriorError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(PosteriorError::BadBeta(beta));
    }
    Ok(())
}

fn check_prior(prior: &WeightVector, n: usize) -> Result<(), PosteriorError> {
    if prior.len() != n {
        return Err(PosteriorError::LengthMismatch(format!(
            "prior has {} weights for {} members",
            prior.len(),
            n
        )));
    }
    Ok(())
}

/// The robust pseudo-posterior `post(t) prop prior(t) exp[-beta sup_t' Psi]`.
pub fn rho_posterior(
    matrix: &DensityMatrix,
    prior: &WeightVector,
    beta: f64,
) -> Result<Posterior, PosteriorError> {
    check_beta(beta)?;
    check_prior(prior, matrix.n_members)?;
    let log_unnorm = (0..matrix.n_members)
        .map(|i| prior.weights()[i].ln() - beta * matrix.sup_psi(i))
        .collect();
    Posterior::from_log_unnorm(log_unnorm)
}

/// The classical likelihood posterior `post(t) prop prior(t) exp[beta_l loglik(t)]`.
/// Fails with [`PosteriorError::DegeneratePosterior`] when every candidate
/// with positive prior mass has zero likelihood.
pub fn classical_posterior(
    matrix: &DensityMatrix,
    prior: &WeightVector,
    beta_l: f64,
) -> Result<Posterior, PosteriorError> {
    check_beta(beta_l)?;
    check_prior(prior, matrix.n_members)?;
    let log_unnorm = (0..matrix.n_members)
        .map(|i| prior.weights()[i].ln() + beta_l * matrix.log_likelihood(i))
        .collect();
    Posterior::from_log_unnorm(log_unnorm)
}

/// Closed-form classical posterior CDF for the scale-uniform family under a
/// power-law prior `prior(t) prop t^-alpha` on `[a, +inf)`:
/// `G(t | X) = 1 - ((a v X_max) / t)^(n + alpha - 1)` for `t > a v X_max`.
pub fn uniform_scale_posterior_cdf(a: f64, alpha: f64, n: usize, x_max: f64, t: f64) -> f64 {
    let lo = a.max(x_max);
    if t <= lo {
        0.0
    } else {
        1.0 - (lo / t).powf(n as f64 + alpha - 1.0)
    }
}

/// Posterior mass of the closed Hellinger ball of radius `r` around the
/// center whose member distances are `dists`.
pub fn posterior_ball_mass(
    weights: &[f64],
    dists: &[f64],
    r: f64,
) -> Result<f64, PosteriorError> {
    if weights.len() != dists.len() {
        return Err(PosteriorError::LengthMismatch(
            "weights and distances differ in length".into(),
        ));
    }
    Ok(weights
        .iter()
        .zip(dists)
        .filter(|&(_, &d)| d <= r)
        .map(|(&w, _)| w)
        .sum())
}

/// Squared Hellinger distance between two posteriors over the same net:
/// `h^2 = 1 - sum_j sqrt(a_j b_j)`.
pub fn posterior_hellinger_sq(a: &[f64], b: &[f64]) -> Result<f64, PosteriorError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(PosteriorError::LengthMismatch(
            "posteriors must be nonempty and aligned".into(),
        ));
    }
    let affinity: f64 = a.iter().zip(b).map(|(&x, &y)| (x * y).sqrt()).sum();
    Ok((1.0 - affinity).max(0.0))
}

/// Posterior mean of the squared Hellinger distance to a center.
pub fn posterior_expected_h2(weights: &[f64], dists: &[f64]) -> Result<f64, PosteriorError> {
    if weights.len() != dists.len() {
        return Err(PosteriorError::LengthMismatch(
            "weights and distances differ in length".into(),
        ));
    }
    Ok(weights.iter().zip(dists).map(|(&w, &d)| w * d * d).sum())
}

/// One net in a penalized collection.
pub struct ModelEntry {
    pub net: Net,
    pub prior: WeightVector,
    /// Penalty `pen(m) >= 0` entering both the prior tilt and the statistic.
    pub pen: f64,
    /// Complexity weight `L_m`; the collection must satisfy
    /// `sum_m exp(-L_m) <= 1`.
    pub l_m: f64,
}

/// Validated collection of penalized nets.
pub struct ModelCollection {
    entries: Vec<ModelEntry>,
}

impl ModelCollection {
    pub fn new(entries: Vec<ModelEntry>) -> Result<Self, PosteriorError> {
        if entries.is_empty() {
            return Err(PosteriorError::BadCollection("no models".into()));
        }
        for (m, e) in entries.iter().enumerate() {
            if !(e.pen >= 0.0 && e.pen.is_finite()) {
                return Err(PosteriorError::BadCollection(format!(
                    "model {m} has invalid penalty {}",
                    e.pen
                )));
            }
            if e.prior.len() != e.net.len() {
                return Err(PosteriorError::BadCollection(format!(
                    "model {m} prior misaligned with its net"
                )));
            }
        }
        let mass: f64 = entries.iter().map(|e| (-e.l_m).exp()).sum();
        if mass > 1.0 + 1e-9 {
            return Err(PosteriorError::BadCollection(format!(
                "complexity weights violate sum exp(-L_m) = {mass} <= 1"
            )));
        }
        Ok(ModelCollection { entries })
    }

    pub fn entries(&self) -> &[ModelEntry] {
        &self.entries
    }
}

/// Penalty and fluctuation-radius bound for a net of combinatorial dimension
/// `d_m`: `eps_bar = (11 c0 / 4) sqrt(cbar (d_m ^ n)) log^(3/2)(e n / (d_m ^ n))`
/// and `pen = c5 eps_bar^2 + (c6 + 1/beta) l_m`.
pub fn penalty(d_m: usize, n: usize, beta: f64, l_m: f64) -> Result<(f64, f64), PosteriorError> {
    check_beta(beta)?;
    if d_m == 0 || n == 0 {
        return Err(PosteriorError::BadCollection(
            "dimension and sample size must be positive".into(),
        ));
    }
    let c = kernel::make_constants(beta, n)?;
    let d = d_m.min(n) as f64;
    let nf = n as f64;
    let eps_bar =
        (11.0 * c.c0 / 4.0) * (c.cbar * d).sqrt() * (std::f64::consts::E * nf / d).ln().powf(1.5);
    let pen = c.c5 * eps_bar * eps_bar + (c.c6 + 1.0 / beta) * l_m;
    Ok((pen, eps_bar))
}

/// The penalized comparison statistic
/// `sup_{m', t'} [Psi(X, t, t') - pen(m')]` for candidate `t` of model `m`.
pub fn penalized_sup_psi(
    matrices: &[DensityMatrix],
    pens: &[f64],
    m: usize,
    t: usize,
) -> Result<f64, PosteriorError> {
    shifted_sup_psi(matrices, pens, m, t, 0.0)
}

fn shifted_sup_psi(
    matrices: &[DensityMatrix],
    pens: &[f64],
    m: usize,
    t: usize,
    pen_m: f64,
) -> Result<f64, PosteriorError> {
    if matrices.len() != pens.len() {
        return Err(PosteriorError::LengthMismatch(
            "one penalty per density matrix required".into(),
        ));
    }
    let mut best = f64::NEG_INFINITY;
    for (mp, mat) in matrices.iter().enumerate() {
        let shift = pens[mp] - pen_m;
        for tp in 0..mat.n_members() {
            let v = psi_cross(&matrices[m], t, mat, tp)? - shift;
            if v > best {
                best = v;
            }
        }
    }
    Ok(best)
}

/// Joint posterior over all `(model, member)` pairs of a collection.
pub struct ModelSelectionPosterior {
    /// Posterior over the flattened pairs, in model order.
    pub flat: Posterior,
    /// Model id of each flat entry.
    pub model_index: Vec<usize>,
    /// Member id within its model of each flat entry.
    pub member_index: Vec<usize>,
    /// Total posterior mass per model.
    pub model_mass: Vec<f64>,
}

/// Penalized pseudo-posterior over a collection of nets. The log-weight of
/// pair `(m, t)` is computed as
/// `log prior_m(t) - beta * sup_{m', t'} [Psi(X, t, t') - (pen(m') - pen(m))]`,
/// which equals `log prior_m(t) - beta pen(m) - beta * penalized_sup_psi`
/// exactly in real arithmetic; with a single model every penalty difference
/// is exactly `0.0`, reducing bit-for-bit to [`rho_posterior`].
pub fn model_selection_posterior(
    collection: &ModelCollection,
    dataset: &Dataset,
    beta: f64,
) -> Result<ModelSelectionPosterior, PosteriorError> {
    check_beta(beta)?;
    let matrices: Vec<DensityMatrix> = collection
        .entries
        .iter()
        .map(|e| DensityMatrix::new(&e.net, dataset))
        .collect::<Result<_, _>>()?;
    let pens: Vec<f64> = collection.entries.iter().map(|e| e.pen).collect();
    let mut log_unnorm = Vec::new();
    let mut model_index = Vec::new();
    let mut member_index = Vec::new();
    for (m, entry) in collection.entries.iter().enumerate() {
        for t in 0..entry.net.len() {
            let stat = shifted_sup_psi(&matrices, &pens, m, t, pens[m])?;
            log_unnorm.push(entry.prior.weights()[t].ln() - beta * stat);
            model_index.push(m);
            member_index.push(t);
        }
    }
    let flat = Posterior::from_log_unnorm(log_unnorm)?;
    let mut model_mass = vec![0.0; collection.entries.len()];
    for (i, &m) in model_index.iter().enumerate() {
        model_mass[m] += flat.weights[i];
    }
    Ok(ModelSelectionPosterior {
        flat,
        model_index,
        member_index,
        model_mass,
    })
}

/// Write posterior rows as CSV with the schema
/// `model_id,member_id,param_0..param_{k-1},prior_w,log_unnorm,post_w`.
/// Nets of lower parameter dimension leave trailing parameter columns empty.
pub fn write_posterior_csv(
    out: &mut impl Write,
    nets: &[&Net],
    priors: &[&WeightVector],
    model_index: &[usize],
    member_index: &[usize],
    posterior: &Posterior,
) -> Result<(), PosteriorError> {
    if nets.len() != priors.len()
        || model_index.len() != posterior.weights.len()
        || member_index.len() != posterior.weights.len()
    {
        return Err(PosteriorError::LengthMismatch("posterior CSV inputs".into()));
    }
    let max_k = nets
        .iter()
        .map(|n| n.members().first().map_or(0, |m| m.params().len()))
        .max()
        .unwrap_or(0);
    let mut header = String::from("model_id,member_id");
    for j in 0..max_k {
        header.push_str(&format!(",param_{j}"));
    }
    header.push_str(",prior_w,log_unnorm,post_w");
    writeln!(out, "{header}")?;
    for (row, (&m, &t)) in model_index.iter().zip(member_index).enumerate() {
        let params = nets[m].members()[t].params();
        let mut line = format!("{m},{t}");
        for j in 0..max_k {
            line.push(',');
            if j < params.len() {
                line.push_str(&format!("{:?}", params[j]));
            }
        }
        line.push_str(&format!(
            ",{:?},{:?},{:?}",
            priors[m].weights()[t],
            posterior.log_unnorm[row],
            posterior.weights[row]
        ));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::psi;
    use crate::model::{
        build_grid_net, dirichlet_prior_net, sample_dataset, Contaminant, ContaminationSpec,
        FamilySpec, Partition,
    };
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn scale_net(lo: f64, hi: f64, step: f64) -> Net {
        let mut axis = Vec::new();
        let mut t = lo;
        while t <= hi + 1e-9 {
            axis.push(t);
            t += step;
        }
        build_grid_net(&FamilySpec::UniformScale, &[axis]).unwrap()
    }

    fn naive_psi(net: &Net, ds: &Dataset, i: usize, j: usize) -> f64 {
        let (ti, tj) = (&net.members()[i], &net.members()[j]);
        ds.observations
            .iter()
            .map(|x| {
                let (a, b) = (ti.eval(x).unwrap(), tj.eval(x).unwrap());
                if a == 0.0 && b == 0.0 {
                    0.0
                } else if a == 0.0 {
                    1.0
                } else {
                    psi((b / a).sqrt()).unwrap()
                }
            })
            .sum()
    }

    #[test]
    fn psi_statistic_matches_naive_loop() {
        let net = scale_net(1.0, 5.0, 0.5);
        let truth = DensityMember::uniform_scale(3.0).unwrap();
        let ds = sample_dataset(&truth, None, 40, 1).unwrap();
        let mat = DensityMatrix::new(&net, &ds).unwrap();
        for i in 0..net.len() {
            for j in 0..net.len() {
                let fast = mat.psi_statistic(i, j);
                let slow = naive_psi(&net, &ds, i, j);
                assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0), "{i},{j}");
            }
        }
    }

    #[test]
    fn histogram_fast_path_matches_naive_loop() {
        let part = Partition::equispaced(0.0, 1.0, 5).unwrap();
        let (net, _) = dirichlet_prior_net(&[1.0; 5], part.clone(), 12, 9).unwrap();
        let truth = net.members()[0].clone();
        let ds = sample_dataset(&truth, None, 100, 2).unwrap();
        let mat = DensityMatrix::new(&net, &ds).unwrap();
        assert!(mat.hist.is_some());
        for i in 0..net.len() {
            for j in 0..net.len() {
                let fast = mat.psi_statistic(i, j);
                let slow = naive_psi(&net, &ds, i, j);
                assert!(
                    (fast - slow).abs() <= 1e-10 * slow.abs().max(1.0),
                    "{i},{j}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn psi_statistic_antisymmetric() {
        let net = scale_net(1.0, 4.0, 0.7);
        let truth = DensityMember::uniform_scale(2.0).unwrap();
        let ds = sample_dataset(&truth, None, 25, 3).unwrap();
        let mat = DensityMatrix::new(&net, &ds).unwrap();
        for i in 0..net.len() {
            for j in 0..net.len() {
                assert_eq!(mat.psi_statistic(i, j), -mat.psi_statistic(j, i));
            }
        }
    }

    #[test]
    fn score_expectation_and_variance_bounds() {
        // For histograms the per-observation expectations under s are exact
        // cell sums; check E_s[psi] <= 4 h^2(s,t) - (3/8) h^2(s,t') and
        // E_s[psi^2] <= 3 sqrt(2) [h^2(s,t) + h^2(s,t')].
        let part = Partition::equispaced(0.0, 1.0, 6).unwrap();
        let (net, _) = dirichlet_prior_net(&[0.8; 6], part, 30, 17).unwrap();
        let ms = net.members();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..300 {
            let s = &ms[rng.gen_range(0..ms.len())];
            let t = &ms[rng.gen_range(0..ms.len())];
            let tp = &ms[rng.gen_range(0..ms.len())];
            let (sv, tv, tpv) = (s.params(), t.params(), tp.params());
            let mut e1 = 0.0;
            let mut e2 = 0.0;
            for j in 0..sv.len() {
                let p = psi((tpv[j] / tv[j]).sqrt()).unwrap();
                e1 += sv[j] * p;
                e2 += sv[j] * p * p;
            }
            let h2st = crate::model::hellinger_pair(s, t).unwrap().powi(2);
            let h2stp = crate::model::hellinger_pair(s, tp).unwrap().powi(2);
            assert!(e1 <= 4.0 * h2st - 0.375 * h2stp + 1e-12);
            assert!(e2 <= 3.0 * 2f64.sqrt() * (h2st + h2stp) + 1e-12);
        }
    }

    #[test]
    fn rho_posterior_normalizes_and_prefers_truth() {
        let net = scale_net(1.0, 8.0, 0.25);
        let truth = DensityMember::uniform_scale(3.0).unwrap();
        let ds = sample_dataset(&truth, None, 300, 4).unwrap();
        let mat = DensityMatrix::new(&net, &ds).unwrap();
        let prior = WeightVector::uniform(net.len()).unwrap();
        let post = rho_posterior(&mat, &prior, 4.0).unwrap();
        let sum: f64 = post.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let dists = net.distances_from(&truth).unwrap();
        let mass_near = posterior_ball_mass(&post.weights, &dists, 0.2).unwrap();
        assert!(mass_near > 0.9, "mass near truth {mass_near}");
    }

    #[test]
    fn classical_posterior_degenerate_error() {
        // all candidates have support disjoint from the data
        let net = scale_net(1.0, 2.0, 0.5);
        let ds = Dataset::from_observations(vec![vec![5.0], vec![6.0]]);
        let mat = DensityMatrix::new(&net, &ds).unwrap();
        let prior = WeightVector::uniform(net.len()).unwrap();
        let err = classical_posterior(&mat, &prior, 1.0).unwrap_err();
        assert!(matches!(err, PosteriorError::DegeneratePosterior));
    }

    #[test]
    fn classical_posterior_matches_closed_form_cdf() {
        // fine grid + power-law prior approximates the continuous posterior
        let a = 1.0;
        let alpha = 2.0;
        let truth = DensityMember::uniform_scale(3.0).unwrap();
        let ds = sample_dataset(&truth, None, 50, 6).unwrap();
        let x_max = ds
            .observations
            .iter()
            .map(|x| x[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let step = 0.002;
        let net = scale_net(a, 6.0, step);
        let raw: Vec<f64> = net
            .members()
            .iter()
            .map(|m| m.params()[0].powf(-alpha))
            .collect();
        let z: f64 = raw.iter().sum();
        let prior = WeightVector::new(raw.iter().map(|&w| w / z).collect()).unwrap();
        let mat = DensityMatrix::new(&net, &ds).unwrap();
        let post = classical_posterior(&mat, &prior, 1.0).unwrap();
        for probe in [3.2, 3.5, 4.0, 5.0] {
            let emp: f64 = net
                .members()
                .iter()
                .zip(&post.weights)
                .filter(|(m, _)| m.params()[0] <= probe)
                .map(|(_, &w)| w)
                .sum();
            let exact = uniform_scale_posterior_cdf(a, alpha, ds.n(), x_max, probe);
            assert!((emp - exact).abs() < 0.02, "probe {probe}: {emp} vs {exact}");
        }
    }

    #[test]
    fn robustness_contrast_on_contaminated_scale_data() {
        // one far-out contaminated block: the likelihood posterior is forced
        // above the contaminant, the robust one stays near the truth
        let truth = DensityMember::uniform_scale(10.0).unwrap();
        let spec = ContaminationSpec::new(
            0.05,
            Contaminant::Uniform { lo: 100.0, hi: 110.0 },
        )
        .unwrap();
        let ds = sample_dataset(&truth, Some(&spec), 200, 8).unwrap();
        let net = scale_net(8.0, 112.0, 0.5);
        let prior = WeightVector::uniform(net.len()).unwrap();
        let mat = DensityMatrix::new(&net, &ds).unwrap();
        let dists = net.distances_from(&truth).unwrap();
        let robust = rho_posterior(&mat, &prior, 4.0).unwrap();
        let classical = classical_posterior(&mat, &prior, 1.0).unwrap();
        let robust_h2 = posterior_expected_h2(&robust.weights, &dists).unwrap();
        let classical_h2 = posterior_expected_h2(&classical.weights, &dists).unwrap();
        assert!(robust_h2 < 0.05, "robust h2 {robust_h2}");
        assert!(classical_h2 > 0.5, "classical h2 {classical_h2}");
    }

    #[test]
    fn posterior_hellinger_sq_cases() {
        let a = [0.5, 0.5];
        assert_eq!(posterior_hellinger_sq(&a, &a).unwrap(), 0.0);
        let b = [1.0, 0.0];
        let h2 = posterior_hellinger_sq(&a, &b).unwrap();
        assert!((h2 - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        let c = [0.0, 1.0];
        assert_eq!(posterior_hellinger_sq(&b, &c).unwrap(), 1.0);
        assert!(posterior_hellinger_sq(&a, &[1.0]).is_err());
    }

    #[test]
    fn single_model_selection_is_bitwise_rho_posterior() {
        let part = Partition::equispaced(0.0, 1.0, 4).unwrap();
        let (net, prior) = dirichlet_prior_net(&[1.0; 4], part, 40, 21).unwrap();
        let truth = net.members()[0].clone();
        let ds = sample_dataset(&truth, None, 120, 22).unwrap();
        let beta = 4.0;
        let mat = DensityMatrix::new(&net, &ds).unwrap();
        let reference = rho_posterior(&mat, &prior, beta).unwrap();
        let collection = ModelCollection::new(vec![ModelEntry {
            net,
            prior,
            pen: 1234.5,
            l_m: 0.0,
        }])
        .unwrap();
        let sel = model_selection_posterior(&collection, &ds, beta).unwrap();
        assert_eq!(sel.flat.log_unnorm, reference.log_unnorm);
        assert_eq!(sel.flat.weights, reference.weights);
        assert_eq!(sel.model_mass, vec![1.0]);
    }

    #[test]
    fn penalized_sup_psi_shifts_by_penalty() {
        let net_a = scale_net(1.0, 3.0, 1.0);
        let net_b = scale_net(1.5, 2.5, 0.5);
        let truth = DensityMember::uniform_scale(2.0).unwrap();
        let ds = sample_dataset(&truth, None, 30, 30).unwrap();
        let mats = vec![
            DensityMatrix::new(&net_a, &ds).unwrap(),
            DensityMatrix::new(&net_b, &ds).unwrap(),
        ];
        // oracle: explicit double loop
        let pens = [0.7, 0.2];
        for t in 0..net_a.len() {
            let got = penalized_sup_psi(&mats, &pens, 0, t).unwrap();
            let mut want = f64::NEG_INFINITY;
            for (mp, mat) in mats.iter().enumerate() {
                for tp in 0..mat.n_members() {
                    want = want.max(psi_cross(&mats[0], t, mat, tp).unwrap() - pens[mp]);
                }
            }
            assert_eq!(got, want);
        }
    }

    #[test]
    fn penalty_formula() {
        let beta = 4.0;
        let n = 100;
        let (pen, eps_bar) = penalty(3, n, beta, 2.0 * 2f64.ln()).unwrap();
        let c = kernel::make_constants(beta, n).unwrap();
        let d = 3.0;
        let want_eps = (11.0 * c.c0 / 4.0)
            * (c.cbar * d).sqrt()
            * (std::f64::consts::E * 100.0 / d).ln().powf(1.5);
        assert_eq!(eps_bar, want_eps);
        assert_eq!(pen, c.c5 * want_eps * want_eps + (c.c6 + 0.25) * 2.0 * 2f64.ln());
        // dimension capped by n
        let (_, e1) = penalty(1000, 10, beta, 0.0).unwrap();
        let (_, e2) = penalty(10, 10, beta, 0.0).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn collection_validation() {
        let net = scale_net(1.0, 2.0, 1.0);
        let prior = WeightVector::uniform(net.len()).unwrap();
        let bad = ModelCollection::new(vec![
            ModelEntry {
                net: net.clone(),
                prior: prior.clone(),
                pen: 0.0,
                l_m: 0.0,
            },
            ModelEntry {
                net,
                prior,
                pen: 0.0,
                l_m: 0.0,
            },
        ]);
        assert!(matches!(bad, Err(PosteriorError::BadCollection(_))));
    }

    #[test]
    fn posterior_csv_round_shape() {
        let net = scale_net(1.0, 3.0, 1.0);
        let prior = WeightVector::uniform(net.len()).unwrap();
        let truth = DensityMember::uniform_scale(2.0).unwrap();
        let ds = sample_dataset(&truth, None, 10, 40).unwrap();
        let mat = DensityMatrix::new(&net, &ds).unwrap();
        let post = rho_posterior(&mat, &prior, 4.0).unwrap();
        let model_index = vec![0; net.len()];
        let member_index: Vec<usize> = (0..net.len()).collect();
        let mut buf = Vec::new();
        write_posterior_csv(&mut buf, &[&net], &[&prior], &model_index, &member_index, &post)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "model_id,member_id,param_0,prior_w,log_unnorm,post_w");
        assert_eq!(lines.len(), net.len() + 1);
        // rows parse back to the original weights
        for (i, line) in lines[1..].iter().enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 6);
            let w: f64 = fields[5].parse().unwrap();
            assert_eq!(w, post.weights[i]);
        }
    }
}
