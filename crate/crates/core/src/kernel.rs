//! Scalar kernel for robust density comparison.
//!
//! The whole library is built on the bounded link function
//!
//! ```text
//!     psi(x) = (x - 1) / (x + 1)   for x in [0, +inf),    psi(+inf) = 1,
//! ```
//!
//! applied to square roots of density ratios, with the conventions
//! `a/0 = +inf` for `a > 0` and `0/0 = 1`. These conventions are part of the
//! statistic's definition, not numerical conveniences: a candidate density
//! that vanishes at an observation still produces a finite, bounded score,
//! which is the mechanism that makes the resulting pseudo-posterior robust
//! where the likelihood collapses to `-inf`.
//!
//! `phi(x) = 4 psi(sqrt(x))` is a bounded surrogate for `log x`: the two
//! functions coincide at 1 together with their first and second derivatives,
//! and on `[1/2, 2]`
//!
//! ```text
//!     0.99 < phi(x)/log x <= 1,      |phi(x) - log x| <= 0.055 |x - 1|^3.
//! ```
//!
//! The module also provides Hellinger distance/affinity computations
//! (discrete and by adaptive Simpson quadrature) and the table of numerical
//! constants used by the concentration bounds:
//!
//! ```text
//!     c0 = 1e3   c1 = 15     c2 = 16      c3 = 0.62
//!     c4 = 3.5 max(375, beta^-1/2)        c5 = 0.016    c6 = 7e4
//!     c7 = 4.01  c8 = 0.365  c9 = c8^-1 max(2 c6, beta^-1)
//!     cbar(n) = 1 + log 2 / log(e n)      gamma = beta / 8
//! ```

use thiserror::Error;

/// Default tilt parameter of the robust posterior.
pub const DEFAULT_BETA: f64 = 4.0;

/// Errors from the scalar kernel.
#[derive(Debug, Error)]
pub enum KernelError {
    #[error("argument must be nonnegative or +inf, got {0}")]
    Domain(f64),
    #[error("probability vectors have mismatched lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("vector does not sum to 1 within tolerance (sum = {0})")]
    NotNormalized(f64),
    #[error("quadrature failed to converge: best estimate {estimate}, error bound {error}")]
    QuadratureNonConvergence { estimate: f64, error: f64 },
    #[error("densities do not integrate to 1 over the quadrature window (got {0})")]
    NotADensity(f64),
    #[error("invalid quadrature spec: {0}")]
    BadQuadratureSpec(String),
    #[error("beta must be positive, got {0}")]
    BadBeta(f64),
}

/// `psi(x) = (x-1)/(x+1)`, extended by `psi(+inf) = 1`.
///
/// Antisymmetric under inversion (`psi(1/x) = -psi(x)`), bounded by 1 in
/// absolute value, Lipschitz with constant 2 on the half line.
pub fn psi(x: f64) -> Result<f64, KernelError> {
    if x.is_nan() || x < 0.0 {
        return Err(KernelError::Domain(x));
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok((x - 1.0) / (x + 1.0))
}

/// `phi(x) = 4 psi(sqrt(x))`, extended by `phi(+inf) = 4`.
///
/// Deliberately computed through `psi` rather than through `log` so that
/// comparisons against `log` in the tests are genuine cross-validations.
pub fn phi(x: f64) -> Result<f64, KernelError> {
    if x.is_nan() || x < 0.0 {
        return Err(KernelError::Domain(x));
    }
    Ok(4.0 * psi(x.sqrt())?)
}

/// `psi(sqrt(num/den))` with the ratio conventions `0/0 = 1` (score 0) and
/// `a/0 = +inf` for `a > 0` (score 1).
///
/// The conventions are applied exactly at floating-point zero; no epsilon
/// flooring is performed.
pub fn psi_sqrt_ratio(num: f64, den: f64) -> Result<f64, KernelError> {
    if num.is_nan() || num < 0.0 {
        return Err(KernelError::Domain(num));
    }
    if den.is_nan() || den < 0.0 {
        return Err(KernelError::Domain(den));
    }
    Ok(psi_sqrt_ratio_unchecked(num, den))
}

/// Same as [`psi_sqrt_ratio`] without domain checks; used in hot loops where
/// the inputs are cached density values known to be nonnegative.
#[inline]
pub(crate) fn psi_sqrt_ratio_unchecked(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            1.0
        }
    } else if num == 0.0 {
        -1.0
    } else {
        let r = (num / den).sqrt();
        if r.is_infinite() {
            1.0
        } else {
            (r - 1.0) / (r + 1.0)
        }
    }
}

/// `psi` of the square-root ratio given the square roots themselves:
/// `(sa - sb)/(sa + sb)` where `sa = sqrt(num)`, `sb = sqrt(den)`.
///
/// Algebraically identical to [`psi_sqrt_ratio`] and used in the supremum
/// loops, which cache one square root per density value.
#[inline]
pub(crate) fn psi_from_sqrts(sa: f64, sb: f64) -> f64 {
    if sa == sb {
        // covers 0/0 -> psi(1) = 0 and exact ties
        0.0
    } else if sb == 0.0 {
        1.0
    } else if sa == 0.0 {
        -1.0
    } else {
        (sa - sb) / (sa + sb)
    }
}

fn check_prob_vector(p: &[f64]) -> Result<(), KernelError> {
    let mut sum = 0.0;
    for &v in p {
        if v.is_nan() || v < 0.0 {
            return Err(KernelError::Domain(v));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-12 {
        return Err(KernelError::NotNormalized(sum));
    }
    Ok(())
}

/// Hellinger distance and affinity between two discrete probability vectors.
///
/// Returns `(h, rho)` with `rho = sum_i sqrt(p_i q_i)` and `h = sqrt(1 - rho)`.
/// Tiny negative round-off in `1 - rho` is clamped to 0.
pub fn hellinger_discrete(p: &[f64], q: &[f64]) -> Result<(f64, f64), KernelError> {
    if p.len() != q.len() {
        return Err(KernelError::LengthMismatch(p.len(), q.len()));
    }
    check_prob_vector(p)?;
    check_prob_vector(q)?;
    let rho: f64 = p.iter().zip(q).map(|(&a, &b)| (a * b).sqrt()).sum();
    let h = (1.0 - rho).max(0.0).sqrt();
    Ok((h, rho))
}

/// Specification of a 1-D adaptive quadrature.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    pub lower: f64,
    pub upper: f64,
    pub abs_tol: f64,
    pub max_subdivisions: u32,
}

impl QuadratureSpec {
    pub fn new(lower: f64, upper: f64) -> Self {
        QuadratureSpec {
            lower,
            upper,
            abs_tol: 1e-10,
            max_subdivisions: 1 << 20,
        }
    }

    fn validate(&self) -> Result<(), KernelError> {
        if !(self.lower < self.upper) {
            return Err(KernelError::BadQuadratureSpec(format!(
                "lower {} must be below upper {}",
                self.lower, self.upper
            )));
        }
        if !(self.abs_tol > 0.0) {
            return Err(KernelError::BadQuadratureSpec(format!(
                "abs_tol {} must be positive",
                self.abs_tol
            )));
        }
        Ok(())
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::new(0.0, 1.0)
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

struct AdaptiveState {
    subdivisions: u32,
    budget_exhausted: bool,
}

fn adaptive_step(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    state: &mut AdaptiveState,
    max_subdivisions: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || state.subdivisions >= max_subdivisions {
        if delta.abs() > 15.0 * tol {
            state.budget_exhausted = true;
        }
        return left + right + delta / 15.0;
    }
    state.subdivisions += 2;
    adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, state, max_subdivisions)
        + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, state, max_subdivisions)
}

/// Adaptive Simpson integration of `f` over `[spec.lower, spec.upper]` to
/// absolute tolerance `spec.abs_tol`.
///
/// Errors with the best available estimate if the subdivision budget is
/// exhausted before the local error criteria are met.
pub fn integrate(mut f: impl FnMut(f64) -> f64, spec: &QuadratureSpec) -> Result<f64, KernelError> {
    spec.validate()?;
    // seed with a fixed 16-panel split so that integrands with small support
    // inside a wide window are not missed by a single Simpson probe
    let panels = 16usize;
    let width = (spec.upper - spec.lower) / panels as f64;
    let mut total = 0.0;
    let mut state = AdaptiveState {
        subdivisions: panels as u32,
        budget_exhausted: false,
    };
    for i in 0..panels {
        let a = spec.lower + i as f64 * width;
        let b = if i + 1 == panels { spec.upper } else { a + width };
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = simpson(a, b, fa, fm, fb);
        total += adaptive_step(
            &mut f,
            a,
            b,
            fa,
            fm,
            fb,
            whole,
            spec.abs_tol / panels as f64,
            &mut state,
            spec.max_subdivisions,
        );
    }
    if state.budget_exhausted {
        return Err(KernelError::QuadratureNonConvergence {
            estimate: total,
            error: spec.abs_tol,
        });
    }
    Ok(total)
}

/// Hellinger distance between two densities on `[spec.lower, spec.upper]`
/// via `h = sqrt(1 - int sqrt(f g))`, computed by adaptive Simpson.
///
/// Both inputs must integrate to 1 over the window within `10 * abs_tol`.
pub fn hellinger_quadrature(
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    spec: &QuadratureSpec,
) -> Result<f64, KernelError> {
    let mass_f = integrate(&f, spec)?;
    if (mass_f - 1.0).abs() > 10.0 * spec.abs_tol {
        return Err(KernelError::NotADensity(mass_f));
    }
    let mass_g = integrate(&g, spec)?;
    if (mass_g - 1.0).abs() > 10.0 * spec.abs_tol {
        return Err(KernelError::NotADensity(mass_g));
    }
    let rho = integrate(|x| (f(x) * g(x)).sqrt(), spec)?;
    Ok((1.0 - rho).max(0.0).sqrt())
}

/// The numerical constants used by the concentration bounds, bundled for a
/// given tilt `beta` and sample size `n`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Constants {
    pub beta: f64,
    pub gamma: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub cbar: f64,
    pub n: usize,
    /// Coefficients of the moment inequalities for psi scores:
    /// `E_s[psi] <= a0 h^2(s,t) - a1 h^2(s,t')` and
    /// `E_s[psi^2] <= a2_sq (h^2(s,t) + h^2(s,t'))`.
    pub a0: f64,
    pub a1: f64,
    pub a2_sq: f64,
}

/// Build the constants table for tilt `beta` and sample size `n`.
pub fn make_constants(beta: f64, n: usize) -> Result<Constants, KernelError> {
    if !(beta > 0.0) {
        return Err(KernelError::BadBeta(beta));
    }
    if n == 0 {
        return Err(KernelError::Domain(0.0));
    }
    let c6 = 7e4;
    let c8 = 0.365;
    Ok(Constants {
        beta,
        gamma: beta / 8.0,
        c0: 1e3,
        c1: 15.0,
        c2: 16.0,
        c3: 0.62,
        c4: 3.5 * 375f64.max(beta.powf(-0.5)),
        c5: 16e-3,
        c6,
        c7: 4.01,
        c8,
        c9: (2.0 * c6).max(1.0 / beta) / c8,
        cbar: 1.0 + 2f64.ln() / (std::f64::consts::E * n as f64).ln(),
        n,
        a0: 4.0,
        a1: 3.0 / 8.0,
        a2_sq: 3.0 * std::f64::consts::SQRT_2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn psi_fixed_points() {
        assert_eq!(psi(1.0).unwrap(), 0.0);
        assert_eq!(psi(f64::INFINITY).unwrap(), 1.0);
        assert_eq!(psi(3.0).unwrap(), 0.5);
        assert_eq!(psi(0.0).unwrap(), -1.0);
        assert!(psi(-1.0).is_err());
        assert!(psi(f64::NAN).is_err());
    }

    #[test]
    fn phi_fixed_points() {
        assert_eq!(phi(1.0).unwrap(), 0.0);
        assert!((phi(4.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(phi(f64::INFINITY).unwrap(), 4.0);
        let v = phi(2.0).unwrap();
        let r = v / 2f64.ln();
        assert!(r > 0.99 && r <= 1.0, "phi(2)/log 2 = {r}");
    }

    #[test]
    fn psi_sqrt_ratio_conventions() {
        assert_eq!(psi_sqrt_ratio(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(psi_sqrt_ratio(5.0, 0.0).unwrap(), 1.0);
        assert_eq!(psi_sqrt_ratio(0.0, 5.0).unwrap(), -1.0);
        assert!((psi_sqrt_ratio(1.0, 4.0).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert!(psi_sqrt_ratio(-1.0, 1.0).is_err());
        assert!(psi_sqrt_ratio(1.0, f64::NAN).is_err());
    }

    #[test]
    fn psi_from_sqrts_matches_ratio_form() {
        let grid = [0.0, 1e-300, 0.3, 1.0, 2.5, 1e12];
        for &a in &grid {
            for &b in &grid {
                let direct = psi_sqrt_ratio(a, b).unwrap();
                let via_sqrts = psi_from_sqrts(a.sqrt(), b.sqrt());
                assert!(
                    (direct - via_sqrts).abs() < 1e-14,
                    "mismatch at ({a},{b}): {direct} vs {via_sqrts}"
                );
            }
        }
    }

    #[test]
    fn hellinger_discrete_basics() {
        let (h, rho) = hellinger_discrete(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert!(h < 1e-8);
        assert!((rho - 1.0).abs() < 1e-12);
        let (h, rho) = hellinger_discrete(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(h, 1.0);
        assert_eq!(rho, 0.0);
        let (h, _) = hellinger_discrete(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        let expected = (1.0 - 0.5f64.sqrt()).sqrt();
        assert!((h - expected).abs() < 1e-15);
        assert!(hellinger_discrete(&[1.0], &[0.5, 0.5]).is_err());
        assert!(hellinger_discrete(&[0.5, 0.4], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn quadrature_uniform_overlaps() {
        let spec = QuadratureSpec::new(0.0, 4.0);
        let u01 = |x: f64| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 };
        let u04 = |x: f64| if (0.0..=4.0).contains(&x) { 0.25 } else { 0.0 };
        let h = hellinger_quadrature(u01, u01, &spec).unwrap();
        assert!(h < 1e-5);
        let h = hellinger_quadrature(u01, u04, &spec).unwrap();
        assert!((h * h - 0.5).abs() < 1e-6, "h^2 = {}", h * h);
        let u23 = |x: f64| if (2.0..=3.0).contains(&x) { 1.0 } else { 0.0 };
        let h = hellinger_quadrature(u01, u23, &spec).unwrap();
        assert!((h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadrature_matches_discrete_on_piecewise_constant() {
        // densities piecewise constant on quarters of [0,1]
        let p = [0.1, 0.2, 0.3, 0.4];
        let q = [0.4, 0.3, 0.2, 0.1];
        let f = move |x: f64| {
            if !(0.0..1.0).contains(&x) {
                0.0
            } else {
                4.0 * p[(x * 4.0) as usize % 4]
            }
        };
        let g = move |x: f64| {
            if !(0.0..1.0).contains(&x) {
                0.0
            } else {
                4.0 * q[(x * 4.0) as usize % 4]
            }
        };
        let spec = QuadratureSpec::new(0.0, 1.0);
        let hq = hellinger_quadrature(f, g, &spec).unwrap();
        let (hd, _) = hellinger_discrete(&p, &q).unwrap();
        assert!((hq - hd).abs() < 1e-8, "{hq} vs {hd}");
    }

    #[test]
    fn integrate_smooth() {
        let spec = QuadratureSpec::new(0.0, std::f64::consts::PI);
        let v = integrate(|x| x.sin(), &spec).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constants_at_default_beta() {
        let c = make_constants(4.0, 1).unwrap();
        assert_eq!(c.gamma, 0.5);
        assert_eq!(c.c4, 1312.5);
        assert_eq!(c.c9, 140000.0 / 0.365);
        assert!((c.cbar - (1.0 + 2f64.ln())).abs() < 1e-15);
        assert_eq!(c.a0, 4.0);
        assert_eq!(c.a1, 0.375);
        assert!((c.a2_sq - 3.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(make_constants(0.0, 1).is_err());
        assert!(make_constants(-1.0, 1).is_err());
        // tiny beta switches both max branches
        let c = make_constants(1e-6, 10).unwrap();
        assert!((c.c4 - 3.5 * 1e3).abs() < 1e-9);
        assert!((c.c9 - 1e6 / 0.365).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn psi_antisymmetry(a in 0f64..10.0, b in 0f64..10.0) {
            let fwd = psi_sqrt_ratio(a, b).unwrap();
            let bwd = psi_sqrt_ratio(b, a).unwrap();
            prop_assert!((fwd + bwd).abs() < 1e-12);
        }

        #[test]
        fn psi_antisymmetry_with_zeros(a in 0f64..10.0) {
            prop_assert_eq!(psi_sqrt_ratio(a, 0.0).unwrap(), -psi_sqrt_ratio(0.0, a).unwrap());
            prop_assert_eq!(psi_sqrt_ratio(0.0, 0.0).unwrap(), 0.0);
        }

        #[test]
        fn psi_bounded(x in 0f64..1e12) {
            prop_assert!(psi(x).unwrap().abs() <= 1.0);
            prop_assert!(phi(x).unwrap().abs() <= 4.0);
        }

        #[test]
        fn psi_lipschitz(u in 0f64..100.0, v in 0f64..100.0) {
            let lhs = (psi(u).unwrap() - psi(v).unwrap()).abs();
            prop_assert!(lhs <= 2.0 * (u - v).abs() + 1e-12);
        }

        #[test]
        fn hellinger_triangle_discrete(
            raw_p in proptest::collection::vec(1e-6f64..1.0, 4),
            raw_q in proptest::collection::vec(1e-6f64..1.0, 4),
            raw_r in proptest::collection::vec(1e-6f64..1.0, 4),
        ) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let (p, q, r) = (norm(&raw_p), norm(&raw_q), norm(&raw_r));
            let (hpq, _) = hellinger_discrete(&p, &q).unwrap();
            let (hqr, _) = hellinger_discrete(&q, &r).unwrap();
            let (hpr, _) = hellinger_discrete(&p, &r).unwrap();
            prop_assert!(hpr <= hpq + hqr + 1e-10);
        }

        #[test]
        fn tv_sandwich(
            raw_p in proptest::collection::vec(1e-6f64..1.0, 5),
            raw_q in proptest::collection::vec(1e-6f64..1.0, 5),
        ) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let (p, q) = (norm(&raw_p), norm(&raw_q));
            let (h, _) = hellinger_discrete(&p, &q).unwrap();
            let tv: f64 = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
            prop_assert!(h * h <= tv + 1e-12);
            prop_assert!(tv <= 2f64.sqrt() * h + 1e-12);
        }
    }
}
