//! Computable ingredients of the posterior concentration radius.
//!
//! The radius bounding where the pseudo-posterior concentrates combines
//! three measurable quantities:
//!
//! - `epsilon`: the fluctuation radius of the recentred comparison process.
//!   With `Z(X,t,t') = Psi(X,t,t') - E[Psi(X,t,t')]` and
//!   `w(y) = E[ sup |Z| over pairs in the ball of radius y around the truth ]`,
//!   it is `sup { y >= 1 : w(y) > 6 y^2 / c0 }` (with `sup {} = 1`). It admits
//!   closed-form upper bounds for finite nets and for families whose score
//!   class has bounded combinatorial dimension, and a Monte Carlo estimate.
//! - `eta`: the prior concentration radius at a candidate `t`, the smallest
//!   `r` such that `prior(B(t, 2r')) <= exp(gamma r'^2) prior(B(t, r'))` for
//!   every `r' >= r`, with `gamma = beta / 8`. For a discrete prior this is
//!   computed exactly: the two ball masses are step functions, so the failure
//!   set is a finite union of intervals with analytic endpoints.
//! - the tail term `c4 sqrt(xi + xi' + 2.61)`.
//!
//! The combined radius is
//! `rbar = inf_t [c1 h(s,t) + c2 eta(t)] + c3 epsilon + c4 sqrt(xi + xi' + 2.61)`
//! on the product scale where distances are `sqrt(n)` times the
//! per-observation Hellinger distance; it is vacuous once it reaches
//! `sqrt(n)`. An integral-ratio audit checks the doubling-mass implication
//! used in deriving the radius on concrete discrete priors.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::kernel::{self, KernelError, QuadratureSpec};
use crate::model::{sample_dataset, DensityMember, ModelError, Net};
use crate::posterior::{DensityMatrix, PosteriorError};

/// Errors from bound computation.
#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("posterior error: {0}")]
    Posterior(#[from] PosteriorError),
    #[error("kernel error: {0}")]
    Kernel(#[from] KernelError),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("workload too large: {0}")]
    TooLarge(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_weights(dists: &[f64], weights: &[f64]) -> Result<Vec<f64>, BoundsError> {
    if dists.len() != weights.len() || dists.is_empty() {
        return Err(BoundsError::BadInput(
            "distances and weights must be nonempty and aligned".into(),
        ));
    }
    if dists.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
        return Err(BoundsError::BadInput("distances must be finite and nonnegative".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(BoundsError::BadInput("weights must be finite and nonnegative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        return Err(BoundsError::BadInput("weights must have positive total mass".into()));
    }
    Ok(weights.iter().map(|&w| w / sum).collect())
}

/// Closed-form fluctuation bound for a finite net of `net_size` candidates:
/// `sqrt((c0/3) min{(1 + c0 sqrt(2)) log(2 |net|^2), n})`.
pub fn eps_finite_bound(net_size: usize, n: usize) -> Result<f64, BoundsError> {
    if net_size == 0 || n == 0 {
        return Err(BoundsError::BadInput("net size and sample size must be positive".into()));
    }
    let c0 = 1000.0;
    let m = net_size as f64;
    let cap = ((1.0 + c0 * 2f64.sqrt()) * (2.0 * m * m).ln()).min(n as f64);
    Ok((c0 / 3.0 * cap).sqrt())
}

/// Closed-form fluctuation bound for a score class of combinatorial
/// dimension `d`:
/// `(11 c0 / 4) sqrt(cbar (d ^ n)) log^(3/2)(e n / (d ^ n))`.
pub fn eps_vc_bound(d: usize, n: usize) -> Result<f64, BoundsError> {
    if d == 0 || n == 0 {
        return Err(BoundsError::BadInput("dimension and sample size must be positive".into()));
    }
    let c = kernel::make_constants(kernel::DEFAULT_BETA, n)?;
    let dm = d.min(n) as f64;
    Ok((11.0 * c.c0 / 4.0)
        * (c.cbar * dm).sqrt()
        * (std::f64::consts::E * n as f64 / dm).ln().powf(1.5))
}

/// Exact per-observation expectation `E_s[ psi( sqrt(t'(X)/t(X)) ) ]`,
/// analytic for scale-uniform members and histograms sharing a partition,
/// and by piecewise quadrature between support breakpoints otherwise.
pub fn expected_psi_per_obs(
    s: &DensityMember,
    t: &DensityMember,
    tp: &DensityMember,
) -> Result<f64, BoundsError> {
    match (s, t, tp) {
        (
            DensityMember::UniformScale { t: ts },
            DensityMember::UniformScale { t: ta },
            DensityMember::UniformScale { t: tb },
        ) => {
            // psi(sqrt(t'/t)) is piecewise constant: psi(sqrt(a/b)) below
            // min(a,b), +1 on (a,b] when a < b, -1 on (b,a] when b < a,
            // 0 beyond max(a,b)
            let p_min = ta.min(*tb).min(*ts) / ts;
            let p_mid = (ta.max(*tb).min(*ts) - ta.min(*tb).min(*ts)) / ts;
            let inner = kernel::psi_from_sqrts(ta.sqrt(), tb.sqrt());
            let sign = if ta < tb {
                1.0
            } else if tb < ta {
                -1.0
            } else {
                0.0
            };
            Ok(p_min * inner + p_mid * sign)
        }
        (
            DensityMember::Histogram { theta: sv, partition: ps },
            DensityMember::Histogram { theta: tv, partition: pt },
            DensityMember::Histogram { theta: tpv, partition: ptp },
        ) if ps == pt && pt == ptp => Ok(sv
            .iter()
            .zip(tv.iter().zip(tpv))
            .map(|(&sj, (&tj, &tpj))| sj * kernel::psi_from_sqrts(tpj.sqrt(), tj.sqrt()))
            .sum()),
        _ => expected_psi_quadrature(s, t, tp),
    }
}

fn support_window(m: &DensityMember) -> Result<(f64, f64), BoundsError> {
    Ok(match m {
        DensityMember::UniformScale { t } => (0.0, *t),
        DensityMember::Histogram { partition, .. } => {
            (partition.edges[0], *partition.edges.last().unwrap())
        }
        DensityMember::ExpFamily { .. } => (0.0, 1.0),
        DensityMember::GammaTranslation { theta, .. } => (*theta, theta + 60.0),
        DensityMember::UniformCube { theta } => {
            if theta.len() != 1 {
                return Err(BoundsError::BadInput(
                    "expectation quadrature supports one-dimensional members only".into(),
                ));
            }
            (theta[0], theta[0] + 1.0)
        }
    })
}

pub(crate) fn expected_psi_quadrature(
    s: &DensityMember,
    t: &DensityMember,
    tp: &DensityMember,
) -> Result<f64, BoundsError> {
    // integrate s(x) psi(sqrt(t'(x)/t(x))) piecewise between support
    // endpoints, where the integrand is smooth
    let (slo, shi) = support_window(s)?;
    let mut cuts = vec![slo, shi];
    for m in [t, tp] {
        let (lo, hi) = support_window(m)?;
        for c in [lo, hi] {
            if c > slo && c < shi {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let spec = QuadratureSpec {
            lower: w[0],
            upper: w[1],
            abs_tol: 1e-10,
            max_subdivisions: 1 << 20,
        };
        total += kernel::integrate(
            |x| {
                let sv = s.eval(&[x]).unwrap_or(0.0);
                if sv == 0.0 {
                    return 0.0;
                }
                let tv = t.eval(&[x]).unwrap_or(0.0);
                let tpv = tp.eval(&[x]).unwrap_or(0.0);
                sv * kernel::psi_from_sqrts(tpv.sqrt(), tv.sqrt())
            },
            &spec,
        )?;
    }
    Ok(total)
}

/// One point of the estimated fluctuation curve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct WPoint {
    /// Ball radius `y` on the product scale.
    pub y: f64,
    /// Monte Carlo mean of the supremum of `|Z|` over pairs in the ball.
    pub w_mean: f64,
    /// Standard error of the mean across replications.
    pub w_std_err: f64,
    /// The comparison threshold `6 y^2 / c0`.
    pub threshold: f64,
    /// Number of net members inside the ball.
    pub ball_size: usize,
}

/// Monte Carlo estimate of the fluctuation radius, with the audited curve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpsEstimate {
    /// Largest audited grid radius violating the threshold (1 when none).
    pub epsilon: f64,
    /// Next grid radius after `epsilon`; the radius defined through the true
    /// expectation curve lies within the grid bracket.
    pub epsilon_upper: f64,
    /// The estimated curve, one entry per grid radius.
    pub w_curve: Vec<WPoint>,
    /// Number of dataset replications used.
    pub replications: usize,
}

/// Estimate the fluctuation radius for `net` around the data-generating
/// density `truth` by direct simulation: `reps` datasets of size `n` are
/// drawn from `truth`, and for every grid radius the supremum of the
/// recentred comparison statistic over ball pairs is averaged.
///
/// Datasets depend only on `(seed, replication)`, so enlarging the net or
/// the grid reuses the same draws and the estimate stays monotone under net
/// growth.
pub fn eps_monte_carlo(
    net: &Net,
    truth: &DensityMember,
    n: usize,
    reps: usize,
    seed: u64,
    y_grid: Option<&[f64]>,
) -> Result<EpsEstimate, BoundsError> {
    if n == 0 || reps == 0 {
        return Err(BoundsError::BadInput("need positive n and replications".into()));
    }
    let c0 = 1000.0;
    let scale = (n as f64).sqrt();
    let y_max_cap = (c0 * n as f64 / 3.0).sqrt();
    let grid: Vec<f64> = match y_grid {
        Some(g) => {
            if g.is_empty() || g.windows(2).any(|w| !(w[0] < w[1])) || g[0] < 1.0 {
                return Err(BoundsError::BadInput(
                    "radius grid must be strictly increasing and start at >= 1".into(),
                ));
            }
            g.to_vec()
        }
        None => {
            let mut g = Vec::new();
            let mut y = 1.0;
            while y < y_max_cap {
                g.push(y);
                y *= 1.25;
            }
            g.push(y_max_cap);
            g
        }
    };
    let dists: Vec<f64> = net
        .distances_from(truth)?
        .into_iter()
        .map(|h| h * scale)
        .collect();
    // members sorted by distance from the truth; balls grow along this order
    let mut order: Vec<usize> = (0..net.len()).collect();
    order.sort_by(|&i, &j| dists[i].partial_cmp(&dists[j]).unwrap());
    let y_last = *grid.last().unwrap();
    let active: Vec<usize> = order
        .iter()
        .copied()
        .take_while(|&i| dists[i] <= y_last)
        .collect();
    let b_max = active.len();
    if b_max * b_max > 4_000_000 {
        return Err(BoundsError::TooLarge(format!(
            "{b_max} members in the largest ball give {} pairs; shrink the net or the grid",
            b_max * b_max
        )));
    }
    // ball size per grid radius
    let ball_sizes: Vec<usize> = grid
        .iter()
        .map(|&y| active.iter().filter(|&&i| dists[i] <= y).count())
        .collect();
    // expected statistic per ordered pair of active members
    let sub_net = Net::from_members(active.iter().map(|&i| net.members()[i].clone()).collect());
    let sub_net = match sub_net {
        Ok(nn) => Some(nn),
        Err(ModelError::EmptyNet) => None,
        Err(e) => return Err(e.into()),
    };
    let mut exp_psi = vec![0.0; b_max * b_max];
    if let Some(sn) = &sub_net {
        for i in 0..b_max {
            for j in 0..b_max {
                if i != j {
                    exp_psi[i * b_max + j] = n as f64
                        * expected_psi_per_obs(truth, &sn.members()[i], &sn.members()[j])?;
                }
            }
        }
    }
    let mut sup_sum = vec![0.0; grid.len()];
    let mut sup_sq = vec![0.0; grid.len()];
    for rep in 0..reps {
        let rep_seed = seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(rep as u64);
        let ds = sample_dataset(truth, None, n, rep_seed)?;
        let sups: Vec<f64> = match &sub_net {
            None => vec![0.0; grid.len()],
            Some(sn) => {
                let mat = DensityMatrix::new(sn, &ds)?;
                let mut sups = Vec::with_capacity(grid.len());
                let mut cur = 0.0f64;
                let mut filled = 0usize;
                for &bs in &ball_sizes {
                    while filled < bs {
                        let m = filled;
                        for j in 0..m {
                            let z1 = (mat.psi_statistic(m, j) - exp_psi[m * b_max + j]).abs();
                            let z2 = (mat.psi_statistic(j, m) - exp_psi[j * b_max + m]).abs();
                            cur = cur.max(z1).max(z2);
                        }
                        filled += 1;
                    }
                    sups.push(cur);
                }
                sups
            }
        };
        for (k, &s) in sups.iter().enumerate() {
            sup_sum[k] += s;
            sup_sq[k] += s * s;
        }
    }
    let mut w_curve = Vec::with_capacity(grid.len());
    for (k, &y) in grid.iter().enumerate() {
        let mean = sup_sum[k] / reps as f64;
        let var = (sup_sq[k] / reps as f64 - mean * mean).max(0.0);
        let std_err = if reps > 1 {
            (var / (reps - 1) as f64).sqrt()
        } else {
            0.0
        };
        w_curve.push(WPoint {
            y,
            w_mean: mean,
            w_std_err: std_err,
            threshold: 6.0 * y * y / c0,
            ball_size: ball_sizes[k],
        });
    }
    let mut epsilon = 1.0;
    let mut epsilon_upper = grid[0];
    for (k, p) in w_curve.iter().enumerate() {
        if p.w_mean > p.threshold {
            epsilon = p.y;
            epsilon_upper = if k + 1 < grid.len() { grid[k + 1] } else { y_max_cap };
        }
    }
    Ok(EpsEstimate {
        epsilon,
        epsilon_upper,
        w_curve,
        replications: reps,
    })
}

/// Intervals of radii on which the doubling-mass condition fails, on the
/// product scale. Computed exactly: ball masses are step functions of the
/// radius, constant between points of the grid formed by the distances and
/// their halves, so each failure interval ends either at a grid point or at
/// the analytic threshold `sqrt(log(m2/m1) / gamma)`.
fn doubling_failures(
    dists_bold: &[f64],
    weights: &[f64],
    gamma: f64,
) -> Vec<(f64, f64)> {
    let mut grid: Vec<f64> = Vec::with_capacity(2 * dists_bold.len() + 1);
    grid.push(0.0);
    for &d in dists_bold {
        if d > 0.0 {
            grid.push(d);
            grid.push(d / 2.0);
        }
    }
    grid.sort_by(|x, y| x.partial_cmp(y).unwrap());
    grid.dedup();
    let mass = |r: f64| -> f64 {
        dists_bold
            .iter()
            .zip(weights)
            .filter(|&(&d, _)| d <= r)
            .map(|(_, &w)| w)
            .sum()
    };
    let mut failures: Vec<(f64, f64)> = Vec::new();
    for (l, &g) in grid.iter().enumerate() {
        let g_next = grid.get(l + 1).copied().unwrap_or(f64::INFINITY);
        let m1 = mass(g);
        let m2 = mass(2.0 * g);
        let end = if m1 == 0.0 && m2 > 0.0 {
            // the doubled ball has mass, the ball has none: fails throughout
            g_next
        } else if m1 > 0.0 && m2 > m1 {
            let r_star = ((m2 / m1).ln() / gamma).sqrt();
            if r_star > g {
                g_next.min(r_star)
            } else {
                continue;
            }
        } else {
            continue;
        };
        if end > g {
            failures.push((g, end));
        }
    }
    failures
}

/// Exact prior concentration radius for a discrete prior.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EtaResult {
    /// Radius on the per-observation scale (`eta_bold / scale`).
    pub eta: f64,
    /// Radius on the product scale used by the doubling condition.
    pub eta_bold: f64,
    /// Failure intervals of the doubling condition, product scale.
    pub violating_radii: Vec<(f64, f64)>,
}

/// Compute the prior concentration radius exactly. `dists` are
/// per-observation Hellinger distances from the center to the prior atoms,
/// `weights` the prior masses; distances are multiplied by `scale`
/// (typically `sqrt(n)`) before the doubling condition is evaluated with
/// `gamma = beta / 8`.
pub fn eta_exact(
    dists: &[f64],
    weights: &[f64],
    gamma: f64,
    scale: f64,
) -> Result<EtaResult, BoundsError> {
    if !(gamma > 0.0) || !(scale > 0.0) {
        return Err(BoundsError::BadInput("gamma and scale must be positive".into()));
    }
    let weights = check_weights(dists, weights)?;
    let bold: Vec<f64> = dists.iter().map(|&d| d * scale).collect();
    let failures = doubling_failures(&bold, &weights, gamma);
    let eta_bold = failures
        .iter()
        .map(|&(_, e)| e)
        .fold(0.0f64, f64::max);
    if !eta_bold.is_finite() {
        return Err(BoundsError::BadInput(
            "unbounded failure interval; mass function is inconsistent".into(),
        ));
    }
    Ok(EtaResult {
        eta: eta_bold / scale,
        eta_bold,
        violating_radii: failures,
    })
}

/// Closed-form radius bound for parametric families whose Hellinger
/// distance is norm-equivalent with exponent `alpha` and constants
/// `a_lower |u|^alpha <= h <= a_upper |u|^alpha`, under a prior whose ball
/// masses satisfy a doubling bound with constant `kappa0`:
/// `sqrt( (log kappa0 / gamma) [ log(2 a_upper / a_lower)/(alpha log 2) + 1 ] )`.
pub fn eta_param_bound(
    kappa0: f64,
    a_upper: f64,
    a_lower: f64,
    alpha: f64,
    gamma: f64,
) -> Result<f64, BoundsError> {
    if !(kappa0 >= 1.0) || !(a_upper >= a_lower) || !(a_lower > 0.0) || !(alpha > 0.0) || !(gamma > 0.0)
    {
        return Err(BoundsError::BadInput(
            "need kappa0 >= 1, 0 < a_lower <= a_upper, alpha > 0, gamma > 0".into(),
        ));
    }
    let bracket = (2.0 * a_upper / a_lower).ln() / (alpha * 2f64.ln()) + 1.0;
    Ok((kappa0.ln() / gamma * bracket).sqrt())
}

/// Closed-form radius bound for the Dirichlet prior over `k`-cell
/// histograms: `sqrt( (k/gamma) log(75 k^2 / Lambda) )` with
/// `Lambda = [ prod_j min(2 alpha_j, 1) ]^(1/k)`.
pub fn eta_dirichlet_bound(alpha: &[f64], gamma: f64) -> Result<f64, BoundsError> {
    let k = alpha.len();
    if k < 2 || !(gamma > 0.0) {
        return Err(BoundsError::BadInput("need k >= 2 and gamma > 0".into()));
    }
    if alpha.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
        return Err(BoundsError::BadInput("concentration parameters must lie in (0, 1]".into()));
    }
    let lambda = alpha
        .iter()
        .map(|&a| (2.0 * a).min(1.0).ln())
        .sum::<f64>()
        / k as f64;
    let lambda = lambda.exp();
    Ok((k as f64 / gamma * (75.0 * (k * k) as f64 / lambda).ln()).sqrt())
}

/// Growth exponent of the radius when the prior density vanishes like
/// `exp(-1/(2 |u|^delta))` at the center of a translation family with edge
/// exponent `alpha`: the radius grows like `n^(delta / (2 (2 alpha + delta)))`.
pub fn eta_smallmass_exponent(alpha: f64, delta: f64) -> Result<f64, BoundsError> {
    if !(alpha > 0.0 && alpha < 1.0) || !(delta > 0.0) {
        return Err(BoundsError::BadInput("need 0 < alpha < 1 and delta > 0".into()));
    }
    Ok(delta / (2.0 * (2.0 * alpha + delta)))
}

/// Net-based radius bound: a uniform prior on an `eps`-net whose metric
/// dimension `d` satisfies `d <= (gamma/4) eps^2` (with `eps >= 1/2`) has
/// concentration radius at most `eps` at every net point.
pub fn eta_net_bound(eps: f64, d: f64, gamma: f64) -> Result<Option<f64>, BoundsError> {
    if !(eps > 0.0) || !(d >= 0.5) || !(gamma > 0.0) {
        return Err(BoundsError::BadInput("need eps > 0, d >= 1/2, gamma > 0".into()));
    }
    Ok(if eps >= 0.5 && d <= gamma / 4.0 * eps * eps {
        Some(eps)
    } else {
        None
    })
}

/// Penalized concentration functional
/// `inf_r [ c7 r^2 + (1/(2 beta)) log(1 / prior(B(t, r))) ]`, computed
/// exactly for a discrete prior: the infimum is attained at a distance
/// value, so only the distinct scaled distances (and zero) are scanned.
pub fn eta_bar_sq(
    dists: &[f64],
    weights: &[f64],
    beta: f64,
    scale: f64,
) -> Result<f64, BoundsError> {
    if !(beta > 0.0) || !(scale > 0.0) {
        return Err(BoundsError::BadInput("beta and scale must be positive".into()));
    }
    let weights = check_weights(dists, weights)?;
    let c7 = 4.01;
    let mut bold: Vec<(f64, f64)> = dists
        .iter()
        .zip(&weights)
        .map(|(&d, &w)| (d * scale, w))
        .collect();
    bold.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut best = f64::INFINITY;
    let mut mass = 0.0;
    let mut idx = 0;
    while idx < bold.len() {
        let r = bold[idx].0;
        // accumulate all atoms at exactly this distance
        while idx < bold.len() && bold[idx].0 == r {
            mass += bold[idx].1;
            idx += 1;
        }
        if mass > 0.0 {
            best = best.min(c7 * r * r + (1.0 / (2.0 * beta)) * (1.0 / mass).ln());
        }
    }
    Ok(best)
}

/// Combined concentration radius on the product scale.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RbarResult {
    /// The radius itself.
    pub rbar: f64,
    /// The minimized approximation-plus-concentration term.
    pub inf_term: f64,
    /// Index of the minimizing candidate.
    pub argmin: usize,
    /// True when the radius is at least `sqrt(n)`, where the statement
    /// carries no information because all distances are below it anyway.
    pub vacuous: bool,
}

/// Evaluate
/// `rbar = min_t [c1 h_bold(s,t) + c2 eta_bold(t)] + c3 eps + c4 sqrt(xi + xi' + 2.61)`
/// over candidates with product-scale distances `dists_bold` from the truth
/// and concentration radii `etas_bold`.
pub fn rbar(
    dists_bold: &[f64],
    etas_bold: &[f64],
    eps: f64,
    xi: f64,
    xi_prime: f64,
    beta: f64,
    n: usize,
) -> Result<RbarResult, BoundsError> {
    if dists_bold.len() != etas_bold.len() || dists_bold.is_empty() {
        return Err(BoundsError::BadInput(
            "distances and radii must be nonempty and aligned".into(),
        ));
    }
    if !(xi > 0.0 && xi_prime > 0.0 && eps >= 0.0) {
        return Err(BoundsError::BadInput("need xi, xi' > 0 and eps >= 0".into()));
    }
    let c = kernel::make_constants(beta, n)?;
    let mut inf_term = f64::INFINITY;
    let mut argmin = 0;
    for (i, (&h, &e)) in dists_bold.iter().zip(etas_bold).enumerate() {
        let v = c.c1 * h + c.c2 * e;
        if v < inf_term {
            inf_term = v;
            argmin = i;
        }
    }
    let rbar = inf_term + c.c3 * eps + c.c4 * (xi + xi_prime + 2.61).sqrt();
    Ok(RbarResult {
        rbar,
        inf_term,
        argmin,
        vacuous: rbar >= (n as f64).sqrt(),
    })
}

/// Outcome of the integral-ratio audit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PropIntAudit {
    /// `0 < 1/r^2 <= a <= b` and `4^(J-1) >= b/a` all hold.
    pub preconditions_ok: bool,
    /// The doubling-mass condition with rate `3a/8` holds for every radius
    /// at least `r / 2^J`.
    pub doubling_ok: bool,
    /// `int_{outside B(t,r)} e^(-a h^2) dprior / int e^(-b h^2) dprior`.
    pub ratio: f64,
    /// The guaranteed bound `exp((1 - a r^2) / 4)`.
    pub bound: f64,
    /// `ratio <= bound`.
    pub holds: bool,
}

/// Audit the integral-ratio implication on a discrete prior: whenever the
/// preconditions and the doubling-mass condition hold, the ratio of the two
/// tilted integrals must stay below `exp((1 - a r^2)/4)`.
pub fn prop_int_check(
    dists_bold: &[f64],
    weights: &[f64],
    a: f64,
    b: f64,
    r: f64,
    j_levels: u32,
) -> Result<PropIntAudit, BoundsError> {
    if !(r > 0.0) || j_levels == 0 {
        return Err(BoundsError::BadInput("need r > 0 and at least one halving level".into()));
    }
    let weights = check_weights(dists_bold, weights)?;
    let preconditions_ok =
        1.0 / (r * r) <= a && a <= b && 4f64.powi(j_levels as i32 - 1) >= b / a;
    let r0 = r / 2f64.powi(j_levels as i32);
    let failures = doubling_failures(dists_bold, &weights, 3.0 * a / 8.0);
    let doubling_ok = failures.iter().all(|&(_, end)| end <= r0);
    let num: f64 = dists_bold
        .iter()
        .zip(&weights)
        .filter(|&(&d, _)| d > r)
        .map(|(&d, &w)| w * (-a * d * d).exp())
        .sum();
    let den: f64 = dists_bold
        .iter()
        .zip(&weights)
        .map(|(&d, &w)| w * (-b * d * d).exp())
        .sum();
    let ratio = if den > 0.0 { num / den } else { f64::INFINITY };
    let bound = ((1.0 - a * r * r) / 4.0).exp();
    Ok(PropIntAudit {
        preconditions_ok,
        doubling_ok,
        ratio,
        bound,
        holds: ratio <= bound,
    })
}

/// One line of the bounds report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundReport {
    /// Name of the reported quantity.
    pub quantity: String,
    /// Closed-form value, when one applies.
    pub formula_value: f64,
    /// Monte Carlo estimate, when one was run.
    pub mc_estimate: Option<f64>,
    /// Standard error of the Monte Carlo estimate.
    pub std_err: Option<f64>,
    /// True when the quantity makes its bound vacuous.
    pub vacuous_flag: bool,
}

/// Serialize bound reports as a JSON array.
pub fn write_bounds_json(reports: &[BoundReport], out: &mut impl Write) -> Result<(), BoundsError> {
    serde_json::to_writer_pretty(&mut *out, reports)
        .map_err(|e| BoundsError::BadInput(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

/// Deterministic pseudo-random discrete prior configurations for audits.
pub fn random_audit_config(seed: u64, max_atoms: usize) -> (Vec<f64>, Vec<f64>) {
    use rand::Rng;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let k = rng.gen_range(2..=max_atoms.max(2));
    let dists: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..10.0)).collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    (dists, raw.into_iter().map(|w| w / sum).collect())
}
