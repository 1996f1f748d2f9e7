//! Deterministic scalar root finding, Gaussian quadrature for standard-normal
//! expectations, and the nested two-multiplier solve.
//!
//! All target maps in this crate are monotone (a consequence of strict
//! concavity of the utility families), so bisection with automatic bracket
//! expansion is used throughout. No randomness, no adaptivity: identical
//! inputs give bit-identical outputs.

use nalgebra::DMatrix;
use thiserror::Error;

/// Upper end of the multiplier scan in [`nested_solve`].
const LAMBDA_MAX: f64 = 1099511627776.0; // 2^40

/// Number of points on the geometric multiplier scan grid.
const LAMBDA_SCAN_POINTS: usize = 128;

/// Standard-normal expectations are clipped to this many standard deviations
/// when an integration segment is half-infinite; the discarded tail mass is
/// below 1e-43.
const NORMAL_CLIP: f64 = 14.0;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("no sign change found after {0} bracket expansions")]
    NoBracket(usize),
    #[error("tolerance not met after {0} bisection iterations")]
    MaxIter(usize),
    #[error("function evaluated to NaN at x = {0}")]
    NanEncountered(f64),
    #[error("quadrature order {0} outside supported range 1..=256")]
    OrderOutOfRange(usize),
    #[error("invalid root-finder configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("risk residual has no sign change for lambda in [0, 2^40]")]
    NoMultiplierBracket,
}

/// Tolerances and iteration caps for the bisection root finder.
#[derive(Debug, Clone)]
pub struct RootConfig {
    /// Absolute tolerance on the residual |f(x)|.
    pub abs_tol: f64,
    /// Relative tolerance on the bracket width.
    pub rel_tol: f64,
    /// Maximum bisection iterations.
    pub max_iter: usize,
    /// Maximum number of bracket doublings during expansion.
    pub bracket_expansion_cap: usize,
}

impl Default for RootConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_iter: 200,
            bracket_expansion_cap: 200,
        }
    }
}

impl RootConfig {
    fn validate(&self) -> Result<(), NumericsError> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(NumericsError::InvalidConfig("tolerances must be positive"));
        }
        if self.max_iter == 0 {
            return Err(NumericsError::InvalidConfig("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Bisection with automatic bracket expansion for a continuous monotone `f`.
///
/// If `f(lo)` and `f(hi)` share a sign, the bracket is pushed outward on the
/// side where the monotone trend predicts the root, doubling its width each
/// step, up to `cfg.bracket_expansion_cap` doublings. Returns `x` with
/// `|f(x)| <= abs_tol` or bracket width `<= rel_tol * |x|`.
pub fn find_root(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    cfg: &RootConfig,
) -> Result<f64, NumericsError> {
    cfg.validate()?;
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo.is_nan() {
        return Err(NumericsError::NanEncountered(lo));
    }
    if fhi.is_nan() {
        return Err(NumericsError::NanEncountered(hi));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }

    let mut expansions = 0;
    while flo.signum() == fhi.signum() {
        if expansions >= cfg.bracket_expansion_cap {
            return Err(NumericsError::NoBracket(expansions));
        }
        let width = hi - lo;
        // For a monotone trend the root lies above `hi` exactly when the
        // function is increasing towards a sign change (fhi < 0) or
        // decreasing towards one (fhi > 0).
        let root_above = (fhi > flo) == (fhi < 0.0);
        if root_above {
            lo = hi;
            flo = fhi;
            hi += 2.0 * width;
            fhi = f(hi);
            if fhi.is_nan() {
                return Err(NumericsError::NanEncountered(hi));
            }
            if fhi == 0.0 {
                return Ok(hi);
            }
        } else {
            hi = lo;
            fhi = flo;
            lo -= 2.0 * width;
            flo = f(lo);
            if flo.is_nan() {
                return Err(NumericsError::NanEncountered(lo));
            }
            if flo == 0.0 {
                return Ok(lo);
            }
        }
        expansions += 1;
    }

    for _ in 0..cfg.max_iter {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.is_nan() {
            return Err(NumericsError::NanEncountered(mid));
        }
        if fm == 0.0 || fm.abs() <= cfg.abs_tol {
            return Ok(mid);
        }
        if (hi - lo).abs() <= cfg.rel_tol * mid.abs() {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Err(NumericsError::MaxIter(cfg.max_iter))
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
///
/// Returns `(argmin, min)`. Used for the inner dual minimization over
/// martingale measures and by the bi-dual round-trip checks; convexity of the
/// conjugates guarantees unimodality along lines.
pub fn golden_section_min(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut a = hi - INVPHI * (hi - lo);
    let mut b = lo + INVPHI * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..max_iter {
        if (hi - lo).abs() <= rel_tol * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INVPHI * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INVPHI * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Quadrature nodes and weights normalized against the standard normal law:
/// `sum_i w_i f(z_i)` approximates `E[f(Z)]` for `Z ~ N(0,1)` (possibly
/// restricted to a segment, see [`normal_segment_rule`]).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    /// Weighted sum `sum_i w_i f(z_i)`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(&z, &w)| w * f(z))
            .sum()
    }

    /// Total weight of the rule (1 for a full Gauss-Hermite rule, the
    /// segment probability for a segment rule).
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Eigenvalue nodes and first-component weights of a symmetric tridiagonal
/// Jacobi matrix (Golub-Welsch). `offdiag` has length `order - 1`; weights
/// are scaled so they sum to `mass`.
fn golub_welsch(offdiag: &[f64], mass: f64) -> (Vec<f64>, Vec<f64>) {
    let n = offdiag.len() + 1;
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for (k, &b) in offdiag.iter().enumerate() {
        jacobi[(k, k + 1)] = b;
        jacobi[(k + 1, k)] = b;
    }
    let eigen = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eigen.eigenvalues[i];
            let first = eigen.eigenvectors[(0, i)];
            (node, mass * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
    )
}

/// Gauss-Hermite rule in the probabilists' normalization:
/// `sum_i w_i f(z_i) ~= E[f(Z)]`, `Z ~ N(0,1)`.
///
/// A rule of order `n` integrates polynomials up to degree `2n - 1` exactly.
/// Nodes are symmetrized about zero and weights renormalized to sum to one,
/// which removes the residual asymmetry of the eigenvalue solve.
pub fn gauss_hermite(order: usize) -> Result<QuadratureRule, NumericsError> {
    if order < 1 || order > 256 {
        return Err(NumericsError::OrderOutOfRange(order));
    }
    // Probabilists' Hermite recurrence He_{k+1} = x He_k - k He_{k-1} gives
    // off-diagonal entries sqrt(k).
    let offdiag: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
    let (mut nodes, mut weights) = golub_welsch(&offdiag, 1.0);

    // Enforce exact symmetry by averaging mirrored pairs.
    let n = order;
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let s = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -s;
        nodes[j] = s;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        order,
    })
}

/// Gauss-Legendre rule on [-1, 1] with unit weight (total mass 2).
fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let offdiag: Vec<f64> = (1..order)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&offdiag, 2.0)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Quadrature rule for `E[f(Z) 1{lo < Z < hi}]`, `Z ~ N(0,1)`.
///
/// Composite Gauss-Legendre panels of width at most 2 carry the normal
/// density in their weights, so integrands with a kink or cutoff at `lo`/`hi`
/// are integrated to near machine precision once split at those points.
/// Infinite ends are clipped at 14 standard deviations.
pub fn normal_segment_rule(lo: f64, hi: f64, order: usize) -> Result<QuadratureRule, NumericsError> {
    if order < 1 || order > 256 {
        return Err(NumericsError::OrderOutOfRange(order));
    }
    let a = lo.max(-NORMAL_CLIP);
    let b = hi.min(NORMAL_CLIP);
    if !(a < b) {
        return Ok(QuadratureRule {
            nodes: Vec::new(),
            weights: Vec::new(),
            order,
        });
    }
    let (gl_nodes, gl_weights) = gauss_legendre(order);
    let panels = ((b - a) / 2.0).ceil().max(1.0) as usize;
    let step = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let left = a + p as f64 * step;
        let center = left + 0.5 * step;
        let half = 0.5 * step;
        for (&xi, &wi) in gl_nodes.iter().zip(gl_weights.iter()) {
            let z = center + half * xi;
            nodes.push(z);
            weights.push(half * wi * normal_pdf(z));
        }
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        order,
    })
}

/// Result of the nested `(y, lambda)` solve.
#[derive(Debug, Clone)]
pub struct NestedSolution {
    /// Budget multiplier.
    pub y: f64,
    /// Risk multiplier, zero when the constraint is not binding.
    pub lambda: f64,
    /// Whether the risk residual was driven to zero (as opposed to being
    /// nonpositive already at `lambda = 0`).
    pub binding: bool,
    /// False when the risk residual changed sign more than once on the scan
    /// grid; the smallest root was chosen in that case.
    pub monotone: bool,
    /// Residuals at the returned point.
    pub budget_residual: f64,
    pub risk_residual: f64,
}

/// Solves the two-multiplier system: for each `lambda` the budget residual is
/// driven to zero in `y` (strictly decreasing, solved in log space), and the
/// risk residual along the budget-binding curve `y*(lambda)` is scanned on a
/// geometric grid over `lambda in [0, 2^40]` and bisected to a root.
///
/// Monotonicity of the risk residual in `lambda` is verified from the scan's
/// sign structure rather than assumed. With several sign changes the smallest
/// root is returned and `monotone` is set to false. Residual functions should
/// be normalized so that `cfg.abs_tol` is a meaningful absolute threshold for
/// both.
pub fn nested_solve(
    mut budget: impl FnMut(f64, f64) -> f64,
    mut risk: impl FnMut(f64, f64) -> f64,
    cfg: &RootConfig,
) -> Result<NestedSolution, NumericsError> {
    cfg.validate()?;
    let inner = RootConfig {
        abs_tol: cfg.abs_tol,
        rel_tol: 1e-15,
        max_iter: cfg.max_iter,
        bracket_expansion_cap: cfg.bracket_expansion_cap,
    };
    // y solved on a log scale to stay in (0, inf).
    let solve_y = |lambda: f64, budget: &mut dyn FnMut(f64, f64) -> f64| {
        find_root(|s| budget(s.exp(), lambda), -14.0, 5.0, &inner).map(f64::exp)
    };

    let zero_tol = cfg.abs_tol;
    let y0 = solve_y(0.0, &mut budget)?;
    let r0 = risk(y0, 0.0);
    if r0 <= zero_tol {
        return Ok(NestedSolution {
            y: y0,
            lambda: 0.0,
            binding: r0.abs() <= zero_tol,
            monotone: true,
            budget_residual: budget(y0, 0.0),
            risk_residual: r0,
        });
    }

    // Geometric scan grid over (0, 2^40], anchored at lambda = 0.
    let lam_min: f64 = 1e-9;
    let ratio = (LAMBDA_MAX / lam_min).powf(1.0 / (LAMBDA_SCAN_POINTS as f64 - 1.0));
    let mut lambdas = vec![0.0];
    let mut residuals = vec![r0];
    let mut lam = lam_min;
    for _ in 0..LAMBDA_SCAN_POINTS {
        let y = solve_y(lam, &mut budget)?;
        lambdas.push(lam);
        residuals.push(risk(y, lam));
        lam *= ratio;
    }

    // Sign structure: zeros are treated as roots, a -/+ transition or a
    // second +/- transition marks non-monotonicity.
    let mut first_zero: Option<usize> = None;
    let mut transitions: Vec<usize> = Vec::new(); // index i: change between i and i+1
    let mut last_sign = residuals[0].signum();
    let mut saw_negative = false;
    let mut nonmonotone = false;
    for (i, &r) in residuals.iter().enumerate() {
        if r.abs() <= zero_tol {
            if first_zero.is_none() {
                first_zero = Some(i);
            }
            continue;
        }
        if r < 0.0 {
            saw_negative = true;
        } else if saw_negative || (first_zero.is_some() && first_zero.unwrap() < i) {
            // residual came back up after a root region
            nonmonotone = true;
        }
        if i > 0 && r.signum() != last_sign && last_sign != 0.0 {
            transitions.push(i - 1);
        }
        last_sign = r.signum();
    }
    if transitions.len() > 1 {
        nonmonotone = true;
    }

    let lambda_star = if let Some(iz) = first_zero {
        let before_first_transition = transitions.first().map_or(true, |&t| iz <= t);
        if before_first_transition {
            lambdas[iz]
        } else {
            let t = transitions[0];
            find_root(
                |l| {
                    let y = solve_y(l, &mut budget).unwrap_or(f64::NAN);
                    risk(y, l)
                },
                lambdas[t],
                lambdas[t + 1],
                &RootConfig {
                    abs_tol: zero_tol,
                    rel_tol: 1e-13,
                    max_iter: cfg.max_iter,
                    bracket_expansion_cap: 0,
                },
            )?
        }
    } else if let Some(&t) = transitions.first() {
        find_root(
            |l| {
                let y = solve_y(l, &mut budget).unwrap_or(f64::NAN);
                risk(y, l)
            },
            lambdas[t],
            lambdas[t + 1],
            &RootConfig {
                abs_tol: zero_tol,
                rel_tol: 1e-13,
                max_iter: cfg.max_iter,
                bracket_expansion_cap: 0,
            },
        )?
    } else {
        return Err(NumericsError::NoMultiplierBracket);
    };

    let y_star = solve_y(lambda_star, &mut budget)?;
    Ok(NestedSolution {
        y: y_star,
        lambda: lambda_star,
        binding: true,
        monotone: !nonmonotone,
        budget_residual: budget(y_star, lambda_star),
        risk_residual: risk(y_star, lambda_star),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn root_of_x_squared_minus_two() {
        let cfg = RootConfig::default();
        let root = find_root(|x| x * x - 2.0, 0.0, 2.0, &cfg).unwrap();
        assert!((root - std::f64::consts::SQRT_2).abs() < 1e-10);
    }

    #[test]
    fn root_of_identity_is_zero() {
        let cfg = RootConfig::default();
        let root = find_root(|x| x, -1.0, 1.0, &cfg).unwrap();
        assert!(root.abs() < 1e-12);
    }

    #[test]
    fn root_of_exp_decay() {
        let cfg = RootConfig::default();
        let root = find_root(|x| (-x).exp() - 1.0, -1.0, 1.0, &cfg).unwrap();
        assert!(root.abs() < 1e-10);
    }

    #[test]
    fn bracket_expands_upward_and_downward() {
        let cfg = RootConfig::default();
        // root far above the initial bracket
        let r = find_root(|x| x - 1e6, 0.0, 1.0, &cfg).unwrap();
        assert_relative_eq!(r, 1e6, max_relative = 1e-9);
        // root far below, decreasing function
        let r = find_root(|x| -(x + 1e5), 0.0, 1.0, &cfg).unwrap();
        assert_relative_eq!(r, -1e5, max_relative = 1e-9);
    }

    #[test]
    fn no_bracket_reported() {
        let cfg = RootConfig {
            bracket_expansion_cap: 8,
            ..RootConfig::default()
        };
        let err = find_root(|_| 1.0, 0.0, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, NumericsError::NoBracket(8)));
    }

    #[test]
    fn find_root_is_deterministic() {
        let cfg = RootConfig::default();
        let f = |x: f64| x.exp() - 3.0;
        let a = find_root(f, 0.0, 2.0, &cfg).unwrap();
        let b = find_root(f, 0.0, 2.0, &cfg).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn hermite_order_one_and_two() {
        let rule = gauss_hermite(1).unwrap();
        assert_eq!(rule.nodes, vec![0.0]);
        assert_relative_eq!(rule.weights[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(rule.expect(|z| z), 0.0, epsilon = 1e-14);

        let rule = gauss_hermite(2).unwrap();
        let second = rule.expect(|z| z * z);
        assert_relative_eq!(second, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn hermite_matches_lognormal_moment() {
        let rule = gauss_hermite(64).unwrap();
        let sigma = 0.5_f64;
        let got = rule.expect(|z| (sigma * z).exp());
        assert_relative_eq!(got, (sigma * sigma / 2.0).exp(), max_relative = 1e-12);
    }

    #[test]
    fn hermite_rule_invariants() {
        for order in [3, 16, 64, 128] {
            let rule = gauss_hermite(order).unwrap();
            assert!((rule.total_weight() - 1.0).abs() < 1e-13);
            for i in 0..order / 2 {
                let j = order - 1 - i;
                assert!((rule.nodes[i] + rule.nodes[j]).abs() < 1e-13);
            }
            // normal moments: E[z^k] = 0 (odd), (k-1)!! (even); odd moments
            // cancel pairwise, so judge them against the absolute-moment
            // scale the summation works at
            let mut double_fact = 1.0;
            for k in 1..=(2 * order - 1).min(20) {
                let got = rule.expect(|z| z.powi(k as i32));
                let scale = rule.expect(|z| z.abs().powi(k as i32)).max(1.0);
                if k % 2 == 1 {
                    assert!(got.abs() < 1e-10 * scale, "odd moment {k} = {got}");
                } else {
                    double_fact *= (k - 1) as f64;
                    assert_relative_eq!(got, double_fact, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn hermite_order_out_of_range() {
        assert!(matches!(
            gauss_hermite(0),
            Err(NumericsError::OrderOutOfRange(0))
        ));
        assert!(matches!(
            gauss_hermite(257),
            Err(NumericsError::OrderOutOfRange(257))
        ));
    }

    #[test]
    fn segment_rule_full_line_matches_hermite() {
        let seg = normal_segment_rule(f64::NEG_INFINITY, f64::INFINITY, 32).unwrap();
        assert_relative_eq!(seg.total_weight(), 1.0, max_relative = 1e-13);
        let sigma = 1.0_f64;
        let got = seg.expect(|z| (sigma * z).exp());
        assert_relative_eq!(got, (0.5 * sigma * sigma).exp(), max_relative = 1e-12);
    }

    #[test]
    fn segment_rule_half_line() {
        let seg = normal_segment_rule(0.0, f64::INFINITY, 32).unwrap();
        assert_relative_eq!(seg.total_weight(), 0.5, max_relative = 1e-12);
        // E[Z 1{Z>0}] = 1/sqrt(2 pi)
        let got = seg.expect(|z| z);
        assert_relative_eq!(
            got,
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn segment_rule_empty() {
        let seg = normal_segment_rule(2.0, 2.0, 16).unwrap();
        assert_eq!(seg.nodes.len(), 0);
        assert_eq!(seg.expect(|_| 1.0), 0.0);
    }

    #[test]
    fn golden_section_finds_parabola_min() {
        let (x, v) = golden_section_min(|x| (x - 3.0) * (x - 3.0) + 1.0, -10.0, 10.0, 1e-12, 200);
        assert!((x - 3.0).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nested_solve_unconstrained_instance() {
        // both residuals vanish at (1, 0)
        let cfg = RootConfig::default();
        let sol = nested_solve(|y, _| y.ln(), |_, _| -1.0, &cfg).unwrap();
        assert_relative_eq!(sol.y, 1.0, max_relative = 1e-10);
        assert_eq!(sol.lambda, 0.0);
        assert!(!sol.binding);
        assert!(sol.monotone);
    }

    #[test]
    fn nested_solve_separable_toy() {
        // budget sqrt(1/y) - 1 gives y* = 1; risk exp(-lambda) - 0.5 gives ln 2.
        let cfg = RootConfig::default();
        let sol = nested_solve(
            |y, _| (1.0 / y).sqrt() - 1.0,
            |_, l| (-l).exp() - 0.5,
            &cfg,
        )
        .unwrap();
        assert_relative_eq!(sol.y, 1.0, max_relative = 1e-9);
        assert_relative_eq!(sol.lambda, std::f64::consts::LN_2, max_relative = 1e-9);
        assert!(sol.binding);
        assert!(sol.monotone);
    }

    #[test]
    fn nested_solve_flags_nonmonotone_scan() {
        // Residual constant at zero up to alternating noise: the degenerate
        // reciprocal-pair situation where the risk residual does not depend
        // on lambda. Smallest root must be reported.
        let cfg = RootConfig::default();
        let sol = nested_solve(
            |y, _| y.ln(),
            |_, l| {
                if l == 0.0 {
                    2.0 * cfg.abs_tol // just above the zero tolerance
                } else {
                    1e-6 * (l.ln() * 1e3).sin()
                }
            },
            &cfg,
        )
        .unwrap();
        assert!(!sol.monotone);
        assert!(sol.lambda <= 1e-8, "smallest root expected, got {}", sol.lambda);
    }

    #[test]
    fn nested_solve_no_bracket() {
        let cfg = RootConfig::default();
        let err = nested_solve(|y, _| y.ln(), |_, _| 1.0, &cfg).unwrap_err();
        assert!(matches!(err, NumericsError::NoMultiplierBracket));
    }
}
