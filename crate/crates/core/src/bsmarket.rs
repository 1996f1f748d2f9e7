//! Complete Black-Scholes market: the martingale density process, the
//! `(y, lambda*)` dual solve, the terminal-wealth distribution, the
//! closed-form wealth process and explicit hedging strategy for the
//! reciprocal preference pair, and Monte-Carlo replication.
//!
//! Coefficients are piecewise constant on a time grid, so the market price of
//! risk `theta = sigma^{-1} (mu - r)` and the cumulative variance
//! `m(t) = int_t^T ||theta_s||^2 ds` are exact. Conditional on time `t` the
//! terminal density factorizes as `N_T = N_t exp(a + b eta)` with
//! `a = -m(t)/2`, `b = -sqrt(m(t))` and `eta` standard normal, which turns
//! every expectation the solver needs into a one-dimensional Gaussian
//! integral.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, NumericsError, QuadratureRule, RootConfig};
use crate::preferences::{LagrangianUtility, LossFn, PreferenceError, UtilityFn};
use crate::risk::{self, FeasibilityInterval, FeasibilityStatus, RiskError};

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid market model: {0}")]
    InvalidModel(String),
    #[error("sigma sigma' on cell {cell} has condition number {condition:.3e} > 1e12")]
    IllConditioned { cell: usize, condition: f64 },
    #[error("infeasible: x1 < r_min ({x1} < {r_min})")]
    Infeasible { x1: f64, r_min: f64 },
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("operation requires the reciprocal preference pair (shifted_reciprocal utility, scaled_reciprocal loss)")]
    RequiresReciprocalPair,
    #[error("operation requires an untruncated solution")]
    RequiresUntruncated,
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

/// Standard normal distribution function, accurate to double precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// ---------------------------------------------------------------------------
// market model
// ---------------------------------------------------------------------------

/// Raw market coefficients as they appear in the JSON interface:
/// `{"T":1.0, "grid":[0,1], "r":[0.0], "mu":[[0.06]], "sigma":[[[0.2]]]}`.
/// Rates, drifts and volatilities are per grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub grid: Vec<f64>,
    pub r: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<Vec<f64>>>,
}

/// A validated complete Black-Scholes market with derived market price of
/// risk and cumulative variance. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MarketSpec", into = "MarketSpec")]
pub struct MarketModel {
    spec: MarketSpec,
    n_assets: usize,
    thetas: Vec<Vec<f64>>,
    theta_sq: Vec<f64>,
    max_condition: f64,
}

impl TryFrom<MarketSpec> for MarketModel {
    type Error = MarketError;

    fn try_from(spec: MarketSpec) -> Result<Self, Self::Error> {
        MarketModel::new(spec)
    }
}

impl From<MarketModel> for MarketSpec {
    fn from(m: MarketModel) -> Self {
        m.spec
    }
}

impl MarketModel {
    pub fn new(spec: MarketSpec) -> Result<Self, MarketError> {
        let bad = |msg: String| Err(MarketError::InvalidModel(msg));
        if !(spec.horizon > 0.0) || !spec.horizon.is_finite() {
            return bad(format!("horizon T must be positive, got {}", spec.horizon));
        }
        if spec.grid.len() < 2 {
            return bad("grid needs at least two points".into());
        }
        if (spec.grid[0]).abs() > 1e-12 {
            return bad(format!("grid must start at 0, got {}", spec.grid[0]));
        }
        if (spec.grid[spec.grid.len() - 1] - spec.horizon).abs() > 1e-12 {
            return bad("grid must end at the horizon T".into());
        }
        for w in spec.grid.windows(2) {
            if !(w[1] > w[0]) {
                return bad("grid must be strictly increasing".into());
            }
        }
        let cells = spec.grid.len() - 1;
        if spec.r.len() != cells || spec.mu.len() != cells || spec.sigma.len() != cells {
            return bad(format!(
                "r, mu, sigma must have one entry per grid cell ({cells})"
            ));
        }
        let n_assets = spec.mu[0].len();
        if n_assets == 0 {
            return bad("at least one asset required".into());
        }

        let mut thetas = Vec::with_capacity(cells);
        let mut theta_sq = Vec::with_capacity(cells);
        let mut max_condition: f64 = 0.0;
        for cell in 0..cells {
            if spec.mu[cell].len() != n_assets {
                return bad(format!("mu[{cell}] must have {n_assets} entries"));
            }
            if spec.sigma[cell].len() != n_assets
                || spec.sigma[cell].iter().any(|row| row.len() != n_assets)
            {
                return bad(format!("sigma[{cell}] must be {n_assets}x{n_assets}"));
            }
            let sigma = DMatrix::from_fn(n_assets, n_assets, |i, j| spec.sigma[cell][i][j]);
            let gram = &sigma * sigma.transpose();
            let sv = gram.svd(false, false).singular_values;
            let s_max = sv.iter().cloned().fold(0.0_f64, f64::max);
            let s_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            let condition = if s_min > 0.0 {
                s_max / s_min
            } else {
                f64::INFINITY
            };
            if !(condition <= 1e12) {
                return Err(MarketError::IllConditioned { cell, condition });
            }
            max_condition = max_condition.max(condition);

            let alpha = DMatrix::from_fn(n_assets, 1, |i, _| spec.mu[cell][i] - spec.r[cell]);
            let theta = sigma
                .lu()
                .solve(&alpha)
                .ok_or_else(|| MarketError::InvalidModel(format!("sigma[{cell}] is singular")))?;
            let theta: Vec<f64> = theta.iter().cloned().collect();
            if theta.iter().any(|t| !t.is_finite()) {
                return bad(format!("market price of risk on cell {cell} is not finite"));
            }
            theta_sq.push(theta.iter().map(|t| t * t).sum());
            thetas.push(theta);
        }
        Ok(Self {
            spec,
            n_assets,
            thetas,
            theta_sq,
            max_condition,
        })
    }

    pub fn spec(&self) -> &MarketSpec {
        &self.spec
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn n_cells(&self) -> usize {
        self.spec.grid.len() - 1
    }

    pub fn grid(&self) -> &[f64] {
        &self.spec.grid
    }

    /// Largest condition number of `sigma sigma'` across cells.
    pub fn max_condition(&self) -> f64 {
        self.max_condition
    }

    /// Index of the cell containing time `t` (left-closed; `t = T` maps to
    /// the last cell).
    pub fn cell_of(&self, t: f64) -> usize {
        let cells = self.n_cells();
        for cell in 0..cells {
            if t < self.spec.grid[cell + 1] {
                return cell;
            }
        }
        cells - 1
    }

    /// Market price of risk on a cell.
    pub fn theta(&self, cell: usize) -> &[f64] {
        &self.thetas[cell]
    }

    /// `||theta||^2` on a cell.
    pub fn theta_norm_sq(&self, cell: usize) -> f64 {
        self.theta_sq[cell]
    }

    pub fn rate(&self, cell: usize) -> f64 {
        self.spec.r[cell]
    }

    pub fn drift(&self, cell: usize) -> &[f64] {
        &self.spec.mu[cell]
    }

    pub fn sigma_rows(&self, cell: usize) -> &Vec<Vec<f64>> {
        &self.spec.sigma[cell]
    }

    pub fn sigma(&self, cell: usize) -> DMatrix<f64> {
        let n = self.n_assets;
        DMatrix::from_fn(n, n, |i, j| self.spec.sigma[cell][i][j])
    }

    /// Remaining cumulative variance `m(t) = int_t^T ||theta_s||^2 ds`,
    /// exact for piecewise-constant coefficients. `m(T) = 0` and `m` is
    /// nonincreasing in `t`.
    pub fn remaining_variance(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.spec.horizon);
        let mut total = 0.0;
        for cell in 0..self.n_cells() {
            let lo = self.spec.grid[cell].max(t);
            let hi = self.spec.grid[cell + 1];
            if hi > lo {
                total += self.theta_sq[cell] * (hi - lo);
            }
        }
        total
    }

    /// `(sigma_t')^{-1} theta_t` on a cell, the vector driving the hedging
    /// strategy.
    pub fn sigma_t_inv_theta(&self, cell: usize) -> Result<Vec<f64>, MarketError> {
        let n = self.n_assets;
        let sigma_t = self.sigma(cell).transpose();
        let rhs = DMatrix::from_fn(n, 1, |i, _| self.thetas[cell][i]);
        let sol = sigma_t
            .lu()
            .solve(&rhs)
            .ok_or_else(|| MarketError::InvalidModel(format!("sigma[{cell}]' is singular")))?;
        Ok(sol.iter().cloned().collect())
    }
}

/// Terminal density factor `N_T / N_t = exp(a + b z)` with `a = -m(t)/2`,
/// `b = -sqrt(m(t))` and `z` standard normal; its mean over `z` is one.
pub fn density_terminal(model: &MarketModel, t: f64, z: f64) -> f64 {
    let m = model.remaining_variance(t);
    (-0.5 * m - m.sqrt() * z).exp()
}

// ---------------------------------------------------------------------------
// truncation band
// ---------------------------------------------------------------------------

/// A band `(lo, hi)` on the terminal density `N_T` outside of which the
/// optimal wealth is forced to zero. The default `(0, inf)` is inactive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }
}

impl Truncation {
    pub fn new(lo: f64, hi: f64) -> Result<Self, MarketError> {
        if !(lo >= 0.0) || !(hi > lo) {
            return Err(MarketError::Domain(
                "truncation requires 0 <= lo < hi (hi possibly infinite)",
            ));
        }
        Ok(Self { lo, hi })
    }

    /// Whether the band is the trivial `(0, inf)`.
    pub fn is_inactive(&self) -> bool {
        self.lo <= 0.0 && self.hi.is_infinite()
    }

    pub fn contains(&self, n: f64) -> bool {
        self.lo < n && n < self.hi
    }

    /// The `eta` interval on which `lo < z exp(a + b eta) < hi`, for `b < 0`.
    fn eta_interval(&self, z: f64, a: f64, b: f64) -> (f64, f64) {
        let lower = if self.hi.is_infinite() {
            f64::NEG_INFINITY
        } else {
            ((self.hi / z).ln() - a) / b
        };
        let upper = if self.lo <= 0.0 {
            f64::INFINITY
        } else {
            ((self.lo / z).ln() - a) / b
        };
        (lower, upper)
    }
}

impl Serialize for Truncation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let hi = if self.hi.is_infinite() {
            None
        } else {
            Some(self.hi)
        };
        (self.lo, hi).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Truncation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (lo, hi) = <(f64, Option<f64>)>::deserialize(deserializer)?;
        Truncation::new(lo, hi.unwrap_or(f64::INFINITY)).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// dual solution
// ---------------------------------------------------------------------------

/// Residuals of the solved multiplier system.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Residuals {
    pub budget: f64,
    pub risk: f64,
}

/// The solved multipliers for one constrained problem, together with the
/// preference pair and diagnostics. The optimal terminal wealth is
/// `H_{lambda*}(y N_T)` inside the truncation band and zero outside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualSolution {
    pub utility: UtilityFn,
    pub loss: LossFn,
    pub y: f64,
    pub lambda_star: f64,
    pub x: f64,
    pub x1: f64,
    pub feasibility: FeasibilityInterval,
    pub residuals: Residuals,
    pub truncation: Truncation,
    /// False when the multiplier scan saw a non-monotone risk residual and
    /// the smallest binding multiplier was chosen.
    pub multiplier_scan_monotone: bool,
}

impl DualSolution {
    /// The Lagrangian utility at the solved multiplier.
    pub fn lagrangian(&self) -> LagrangianUtility {
        LagrangianUtility::new(self.utility, self.loss, self.lambda_star)
            .expect("solved multiplier is nonnegative")
    }

    /// Builds a solution from externally fixed multipliers, recomputing
    /// residuals and feasibility. Intended for closed-form instances where
    /// `lambda` is pinned by hand.
    #[allow(clippy::too_many_arguments)]
    pub fn with_multipliers(
        model: &MarketModel,
        utility: UtilityFn,
        loss: LossFn,
        x: f64,
        x1: f64,
        y: f64,
        lambda: f64,
        truncation: Truncation,
        quad_order: usize,
    ) -> Result<Self, MarketError> {
        let lag = LagrangianUtility::new(utility, loss, lambda)?;
        let ctx = SolveContext::new(model, truncation, quad_order)?;
        let budget = ctx.budget_expectation(&lag, y)? - x;
        let risk_resid = match ctx.risk_expectation(&lag, y) {
            Ok(v) => v - x1,
            Err(_) => f64::NAN,
        };
        let feasibility = risk::feasible_interval(model, &utility, &loss, x, x1, quad_order)?;
        Ok(Self {
            utility,
            loss,
            y,
            lambda_star: lambda,
            x,
            x1,
            feasibility,
            residuals: Residuals {
                budget,
                risk: risk_resid,
            },
            truncation,
            multiplier_scan_monotone: true,
        })
    }
}

/// Quadrature context shared by the budget and risk expectations of one
/// solve: the `z`-parameterization of `N_T` at `t = 0` plus the truncation
/// band split into an inside rule and an outside probability mass.
struct SolveContext {
    rule: QuadratureRule,
    outside_mass: f64,
    a: f64,
    b: f64,
    deterministic: bool,
}

impl SolveContext {
    fn new(model: &MarketModel, truncation: Truncation, order: usize) -> Result<Self, MarketError> {
        let m = model.remaining_variance(0.0);
        let a = -0.5 * m;
        let b = -m.sqrt();
        if m == 0.0 {
            // deterministic market: N_T = 1
            return Ok(Self {
                rule: QuadratureRule {
                    nodes: vec![0.0],
                    weights: vec![1.0],
                    order: 1,
                },
                outside_mass: if truncation.contains(1.0) { 0.0 } else { 1.0 },
                a,
                b,
                deterministic: true,
            });
        }
        if truncation.is_inactive() {
            Ok(Self {
                rule: numerics::gauss_hermite(order)?,
                outside_mass: 0.0,
                a,
                b,
                deterministic: false,
            })
        } else {
            let (lo, hi) = truncation.eta_interval(1.0, a, b);
            let rule = numerics::normal_segment_rule(lo, hi, order)?;
            let inside_mass = normal_cdf(hi) - normal_cdf(lo);
            Ok(Self {
                rule,
                outside_mass: (1.0 - inside_mass).max(0.0),
                a,
                b,
                deterministic: false,
            })
        }
    }

    fn density(&self, eta: f64) -> f64 {
        if self.deterministic {
            1.0
        } else {
            (self.a + self.b * eta).exp()
        }
    }

    /// `E[N_T H(y N_T) 1{band}]`.
    fn budget_expectation(&self, lag: &LagrangianUtility, y: f64) -> Result<f64, MarketError> {
        if self.deterministic {
            if self.outside_mass > 0.0 {
                return Ok(0.0);
            }
            return Ok(lag.inverse_marginal(y)?);
        }
        let mut bad = None;
        let v = self.rule.expect(|eta| {
            let n = self.density(eta);
            match lag.inverse_marginal(y * n) {
                Ok(h) => n * h,
                Err(e) => {
                    bad = Some(e);
                    f64::NAN
                }
            }
        });
        match bad {
            Some(e) => Err(e.into()),
            None => Ok(v),
        }
    }

    /// `E[L(-H(y N_T) 1{band})]`, charging `L(0-)` on the outside mass.
    fn risk_expectation(&self, lag: &LagrangianUtility, y: f64) -> Result<f64, MarketError> {
        let outside = if self.outside_mass > 0.0 {
            let l0 = lag
                .loss()
                .value_at_zero()
                .ok_or(MarketError::Risk(RiskError::LossUndefinedAtZero))?;
            l0 * self.outside_mass
        } else {
            0.0
        };
        if self.deterministic {
            if self.outside_mass > 0.0 {
                return Ok(outside);
            }
            let h = lag.inverse_marginal(y)?;
            return Ok(lag.loss().value(-h));
        }
        let mut bad = None;
        let v = self.rule.expect(|eta| {
            let n = self.density(eta);
            match lag.inverse_marginal(y * n) {
                Ok(h) => lag.loss().value(-h),
                Err(e) => {
                    bad = Some(e);
                    f64::NAN
                }
            }
        });
        match bad {
            Some(e) => Err(e.into()),
            None => Ok(v + outside),
        }
    }
}

/// Solves the budget equation `E[N_T H_lambda(y N_T) 1{band}] = x` for `y`
/// at a fixed multiplier `lambda`.
pub fn budget_binding_y(
    model: &MarketModel,
    utility: &UtilityFn,
    loss: &LossFn,
    lambda: f64,
    x: f64,
    truncation: Truncation,
    quad_order: usize,
) -> Result<f64, MarketError> {
    if !(x > 0.0) {
        return Err(MarketError::Domain("initial capital must be positive"));
    }
    let lag = LagrangianUtility::new(*utility, *loss, lambda)?;
    let ctx = SolveContext::new(model, truncation, quad_order)?;
    let cfg = RootConfig {
        abs_tol: 1e-13,
        rel_tol: 1e-15,
        max_iter: 300,
        bracket_expansion_cap: 200,
    };
    let s = numerics::find_root(
        |s| match ctx.budget_expectation(&lag, s.exp()) {
            Ok(v) => v / x - 1.0,
            Err(_) => f64::NAN,
        },
        -14.0,
        5.0,
        &cfg,
    )?;
    Ok(s.exp())
}

/// Solves the full constrained problem on a complete market: the budget
/// binds in `y` for every `lambda`, and `lambda*` is the smallest multiplier
/// driving the risk expectation to the budget `x1` (zero when the constraint
/// is not binding).
pub fn solve_dual(
    model: &MarketModel,
    utility: &UtilityFn,
    loss: &LossFn,
    x: f64,
    x1: f64,
    truncation: Truncation,
    quad_order: usize,
) -> Result<DualSolution, MarketError> {
    if !(x > 0.0) {
        return Err(MarketError::Domain("initial capital must be positive"));
    }
    let feasibility = risk::feasible_interval(model, utility, loss, x, x1, quad_order)?;
    // a degenerate interval can still be classified while x1 sits below it
    let below_r_min = x1 < feasibility.r_min - 1e-9 * feasibility.r_min.abs().max(1.0);
    if feasibility.status == FeasibilityStatus::Infeasible || below_r_min {
        return Err(MarketError::Infeasible {
            x1,
            r_min: feasibility.r_min,
        });
    }
    let ctx = SolveContext::new(model, truncation, quad_order)?;
    let risk_scale = x1.abs().max(1.0);

    let budget = |y: f64, lambda: f64| -> f64 {
        let lag = match LagrangianUtility::new(*utility, *loss, lambda) {
            Ok(l) => l,
            Err(_) => return f64::NAN,
        };
        match ctx.budget_expectation(&lag, y) {
            Ok(v) => v / x - 1.0,
            Err(_) => f64::NAN,
        }
    };
    let risk_fn = |y: f64, lambda: f64| -> f64 {
        let lag = match LagrangianUtility::new(*utility, *loss, lambda) {
            Ok(l) => l,
            Err(_) => return f64::NAN,
        };
        match ctx.risk_expectation(&lag, y) {
            Ok(v) => (v - x1) / risk_scale,
            Err(_) => f64::NAN,
        }
    };
    let cfg = RootConfig {
        abs_tol: 1e-11,
        rel_tol: 1e-13,
        max_iter: 300,
        bracket_expansion_cap: 200,
    };
    let nested = numerics::nested_solve(budget, risk_fn, &cfg)?;

    let lag = LagrangianUtility::new(*utility, *loss, nested.lambda)?;
    let budget_resid = ctx.budget_expectation(&lag, nested.y)? - x;
    let risk_resid = ctx.risk_expectation(&lag, nested.y)? - x1;
    Ok(DualSolution {
        utility: *utility,
        loss: *loss,
        y: nested.y,
        lambda_star: nested.lambda,
        x,
        x1,
        feasibility,
        residuals: Residuals {
            budget: budget_resid,
            risk: risk_resid,
        },
        truncation,
        multiplier_scan_monotone: nested.monotone,
    })
}

/// Optimal terminal wealth `H_{lambda*}(y n)` inside the truncation band,
/// zero outside; decreasing in `n` on the band.
pub fn optimal_terminal_wealth(sol: &DualSolution, n: f64) -> f64 {
    if !sol.truncation.contains(n) {
        return 0.0;
    }
    sol.lagrangian()
        .inverse_marginal(sol.y * n)
        .expect("inverse marginal converges for positive arguments")
}

/// Distribution function `P(X(T) <= a)` of the optimal terminal wealth on an
/// untruncated solution:
/// `Phi((ln(y / W'_{lambda*}(a)) - m/2) / sqrt(m))` with `m = m(0)`.
///
/// This is the sign-corrected orientation: it increases from 0 to 1 as `a`
/// grows, and it is validated against the empirical law of seeded samples.
pub fn terminal_cdf(sol: &DualSolution, model: &MarketModel, a: f64) -> Result<f64, MarketError> {
    if !sol.truncation.is_inactive() {
        return Err(MarketError::RequiresUntruncated);
    }
    if !(a > 0.0) {
        return Err(MarketError::Domain("terminal_cdf requires a > 0"));
    }
    let m = model.remaining_variance(0.0);
    if m == 0.0 {
        // deterministic wealth H(y)
        let x_t = optimal_terminal_wealth(sol, 1.0);
        return Ok(if a >= x_t { 1.0 } else { 0.0 });
    }
    let w_prime = sol.lagrangian().marginal(a);
    Ok(normal_cdf(((sol.y / w_prime).ln() - 0.5 * m) / m.sqrt()))
}

/// Closed-form wealth process `F(z, t)` for the reciprocal preference pair:
///
/// `F(z,t) = z^{-1/2} e^{a/2 + b^2/8} sqrt((1 + beta lambda*) / y)
///           [Phi(d(lo)) - Phi(d(hi))]`
///
/// with `d(k) = (ln(k/z) - a)/b - b/2`, `a = -m(t)/2`, `b = -sqrt(m(t))`.
/// Since `b < 0`, `Phi(d(lo)) - Phi(d(hi))` is the larger-minus-smaller
/// orientation and `F >= 0`. Equals the conditional expectation
/// `E[(N_T/N_t) H_{lambda*}(y N_T) 1{band} | N_t = z]`.
///
/// At `m(t) = 0` (in particular at `t = T`) the terminal payoff is returned
/// directly.
pub fn closed_form_wealth(
    model: &MarketModel,
    sol: &DualSolution,
    z: f64,
    t: f64,
) -> Result<f64, MarketError> {
    let lag = sol.lagrangian();
    let coef = lag
        .reciprocal_pair_coef()
        .ok_or(MarketError::RequiresReciprocalPair)?;
    if !(z > 0.0) {
        return Err(MarketError::Domain("density state z must be positive"));
    }
    if sol.truncation.lo >= sol.truncation.hi {
        return Ok(0.0);
    }
    let m = model.remaining_variance(t);
    if m == 0.0 {
        return Ok(optimal_terminal_wealth(sol, z));
    }
    let a = -0.5 * m;
    let b = -m.sqrt();
    let d = |k: f64| ((k / z).ln() - a) / b - 0.5 * b;
    let phi_diff = normal_cdf(d(sol.truncation.lo)) - normal_cdf(d(sol.truncation.hi));
    let scale = (0.5 * a + b * b / 8.0).exp() * (coef / sol.y).sqrt();
    Ok(scale / z.sqrt() * phi_diff)
}

/// Partial derivative `F_z(z, t)` of [`closed_form_wealth`] in the density
/// state, in analytic form. Cross-checked against central finite differences
/// of `F`, which are authoritative where they disagree.
pub fn closed_form_wealth_dz(
    model: &MarketModel,
    sol: &DualSolution,
    z: f64,
    t: f64,
) -> Result<f64, MarketError> {
    let lag = sol.lagrangian();
    let coef = lag
        .reciprocal_pair_coef()
        .ok_or(MarketError::RequiresReciprocalPair)?;
    if !(z > 0.0) {
        return Err(MarketError::Domain("density state z must be positive"));
    }
    let m = model.remaining_variance(t);
    if m == 0.0 {
        return Err(MarketError::Domain(
            "wealth derivative undefined at zero remaining variance",
        ));
    }
    let a = -0.5 * m;
    let b = -m.sqrt();
    let d = |k: f64| ((k / z).ln() - a) / b - 0.5 * b;
    let d_lo = d(sol.truncation.lo);
    let d_hi = d(sol.truncation.hi);
    let phi_diff = normal_cdf(d_lo) - normal_cdf(d_hi);
    let density_diff = normal_pdf(d_lo) - normal_pdf(d_hi);
    let scale = (0.5 * a + b * b / 8.0).exp() * (coef / sol.y).sqrt();
    // each d(k) has d/dz = -1/(z b)
    Ok(scale * z.powf(-1.5) * (-0.5 * phi_diff - density_diff / b))
}

/// Explicit hedging strategy for the reciprocal preference pair:
/// `pi*_t = -diag(S_t)^{-1} (sigma_t')^{-1} theta_t n_t F_z(n_t, t)`,
/// the number of shares per asset replicating the optimal wealth.
pub fn closed_form_strategy(
    model: &MarketModel,
    sol: &DualSolution,
    t: f64,
    n_t: f64,
    s_t: &[f64],
) -> Result<Vec<f64>, MarketError> {
    if t >= model.horizon() {
        return Err(MarketError::Domain("strategy requires t < T"));
    }
    if s_t.len() != model.n_assets() {
        return Err(MarketError::Domain("price vector length mismatch"));
    }
    let lag = sol.lagrangian();
    if lag.reciprocal_pair_coef().is_none() {
        return Err(MarketError::RequiresReciprocalPair);
    }
    if sol.truncation.lo >= sol.truncation.hi {
        return Ok(vec![0.0; model.n_assets()]);
    }
    let cell = model.cell_of(t);
    if model.theta_norm_sq(cell) == 0.0 || model.remaining_variance(t) == 0.0 {
        return Ok(vec![0.0; model.n_assets()]);
    }
    let fz = closed_form_wealth_dz(model, sol, n_t, t)?;
    let dir = model.sigma_t_inv_theta(cell)?;
    Ok(dir
        .iter()
        .zip(s_t.iter())
        .map(|(&v, &s)| -v / s * n_t * fz)
        .collect())
}

/// Conditional-expectation wealth
/// `E[(N_T/N_t) H_{lambda*}(y N_T) 1{band} | N_t = z]` for any preference
/// pair, by Gaussian quadrature split at the truncation boundaries.
/// Dispatches to the closed form when the reciprocal pair is in play.
pub fn wealth_process_value(
    model: &MarketModel,
    sol: &DualSolution,
    z: f64,
    t: f64,
    quad_order: usize,
) -> Result<f64, MarketError> {
    let lag = sol.lagrangian();
    if lag.reciprocal_pair_coef().is_some() {
        return closed_form_wealth(model, sol, z, t);
    }
    if !(z > 0.0) {
        return Err(MarketError::Domain("density state z must be positive"));
    }
    let m = model.remaining_variance(t);
    if m == 0.0 {
        return Ok(optimal_terminal_wealth(sol, z));
    }
    let a = -0.5 * m;
    let b = -m.sqrt();
    let rule = if sol.truncation.is_inactive() {
        numerics::gauss_hermite(quad_order)?
    } else {
        let (lo, hi) = sol.truncation.eta_interval(z, a, b);
        numerics::normal_segment_rule(lo, hi, quad_order)?
    };
    let mut bad = None;
    let v = rule.expect(|eta| {
        let g = (a + b * eta).exp();
        match lag.inverse_marginal(sol.y * z * g) {
            Ok(h) => g * h,
            Err(e) => {
                bad = Some(e);
                f64::NAN
            }
        }
    });
    match bad {
        Some(e) => Err(e.into()),
        None => Ok(v),
    }
}

/// Expected utility `E[U(X~(T))]` of the solved terminal wealth.
pub fn expected_utility(
    model: &MarketModel,
    sol: &DualSolution,
    quad_order: usize,
) -> Result<f64, MarketError> {
    let u = sol.utility;
    expected_terminal(model, sol, quad_order, move |w| u.value(w))
}

/// Expected Lagrangian utility `E[W_{lambda*}(X~(T))]`.
pub fn expected_w(
    model: &MarketModel,
    sol: &DualSolution,
    quad_order: usize,
) -> Result<f64, MarketError> {
    let lag = sol.lagrangian();
    expected_terminal(model, sol, quad_order, move |w| lag.value(w))
}

/// `E[f(X~(T))]` over the solved terminal wealth, charging `f(0+)` on any
/// truncated-away mass (IEEE limits give the right values for the shipped
/// families).
pub fn expected_terminal(
    model: &MarketModel,
    sol: &DualSolution,
    quad_order: usize,
    f: impl Fn(f64) -> f64,
) -> Result<f64, MarketError> {
    let ctx = SolveContext::new(model, sol.truncation, quad_order)?;
    let lag = sol.lagrangian();
    if ctx.deterministic {
        let w = if ctx.outside_mass > 0.0 {
            0.0
        } else {
            lag.inverse_marginal(sol.y)?
        };
        return Ok(f(w));
    }
    let mut bad = None;
    let inside = ctx.rule.expect(|eta| {
        let n = ctx.density(eta);
        match lag.inverse_marginal(sol.y * n) {
            Ok(h) => f(h),
            Err(e) => {
                bad = Some(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = bad {
        return Err(e.into());
    }
    let outside = if ctx.outside_mass > 0.0 {
        f(0.0) * ctx.outside_mass
    } else {
        0.0
    };
    Ok(inside + outside)
}

// ---------------------------------------------------------------------------
// simulation
// ---------------------------------------------------------------------------

/// Simulated Brownian, price, density and optimal-wealth paths on a uniform
/// step grid. Arrays are path-major, then step, then asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub n_assets: usize,
    /// `n_steps + 1` time points.
    pub times: Vec<f64>,
    /// Brownian levels, `n_paths x (n_steps+1) x n_assets`.
    pub brownian: Vec<f64>,
    /// Discounted asset prices, same shape as `brownian`.
    pub prices: Vec<f64>,
    /// Martingale density, `n_paths x (n_steps+1)`.
    pub density: Vec<f64>,
    /// Optimal wealth along the path, `n_paths x (n_steps+1)`.
    pub wealth: Vec<f64>,
}

impl PathSet {
    fn idx(&self, path: usize, step: usize) -> usize {
        path * (self.n_steps + 1) + step
    }

    fn idx_asset(&self, path: usize, step: usize, asset: usize) -> usize {
        (path * (self.n_steps + 1) + step) * self.n_assets + asset
    }

    pub fn price(&self, path: usize, step: usize, asset: usize) -> f64 {
        self.prices[self.idx_asset(path, step, asset)]
    }

    pub fn density_at(&self, path: usize, step: usize) -> f64 {
        self.density[self.idx(path, step)]
    }

    pub fn wealth_at(&self, path: usize, step: usize) -> f64 {
        self.wealth[self.idx(path, step)]
    }

    /// Writes the `path,step,t,B,S_1..S_n,N,X` CSV representation.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        let mut header = String::from("path,step,t");
        if self.n_assets == 1 {
            header.push_str(",B,S_1");
        } else {
            for i in 1..=self.n_assets {
                header.push_str(&format!(",B_{i}"));
            }
            for i in 1..=self.n_assets {
                header.push_str(&format!(",S_{i}"));
            }
        }
        header.push_str(",N,X");
        writeln!(out, "{header}")?;
        for p in 0..self.n_paths {
            for k in 0..=self.n_steps {
                let mut line = format!("{p},{k},{}", self.times[k]);
                for a in 0..self.n_assets {
                    line.push_str(&format!(",{}", self.brownian[self.idx_asset(p, k, a)]));
                }
                for a in 0..self.n_assets {
                    line.push_str(&format!(",{}", self.prices[self.idx_asset(p, k, a)]));
                }
                line.push_str(&format!(
                    ",{},{}",
                    self.density_at(p, k),
                    self.wealth_at(p, k)
                ));
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }
}

fn path_seed(seed: u64, path: usize) -> u64 {
    // splitmix64 of the pair keeps per-path streams decorrelated
    let mut z = seed ^ (path as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates price, density and wealth paths with exact per-step lognormal
/// increments on a uniform grid. Deterministic given `(seed, n_paths,
/// n_steps)`: each path draws from its own seeded stream, so results do not
/// depend on evaluation order.
pub fn simulate(
    model: &MarketModel,
    sol: &DualSolution,
    seed: u64,
    n_paths: usize,
    n_steps: usize,
) -> Result<PathSet, MarketError> {
    if n_paths < 1 || n_steps < 1 {
        return Err(MarketError::Domain("need at least one path and one step"));
    }
    let n = model.n_assets();
    let horizon = model.horizon();
    let dt = horizon / n_steps as f64;
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();

    let mut set = PathSet {
        seed,
        n_paths,
        n_steps,
        n_assets: n,
        times: times.clone(),
        brownian: vec![0.0; n_paths * (n_steps + 1) * n],
        prices: vec![0.0; n_paths * (n_steps + 1) * n],
        density: vec![0.0; n_paths * (n_steps + 1)],
        wealth: vec![0.0; n_paths * (n_steps + 1)],
    };

    let cells: Vec<usize> = (0..n_steps).map(|k| model.cell_of(times[k])).collect();
    let wealth_t0 = wealth_process_value(model, sol, 1.0, 0.0, 64)?;
    let stride = n_steps + 1;
    let idx = |p: usize, k: usize| p * stride + k;
    let idxa = |p: usize, k: usize, a: usize| (p * stride + k) * n + a;

    for p in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, p));
        let mut b_level = vec![0.0_f64; n];
        let mut s = vec![1.0_f64; n]; // discounted prices start at 1
        let mut n_t = 1.0_f64;
        for a in 0..n {
            set.prices[idxa(p, 0, a)] = s[a];
        }
        set.density[idx(p, 0)] = 1.0;
        set.wealth[idx(p, 0)] = wealth_t0;

        for k in 0..n_steps {
            let cell = cells[k];
            let theta = model.theta(cell);
            let theta_sq = model.theta_norm_sq(cell);
            let sigma = model.sigma_rows(cell);
            let r = model.rate(cell);
            let mu = model.drift(cell);

            let dw: Vec<f64> = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * dt.sqrt()
                })
                .collect();

            let mut theta_dw = 0.0;
            for a in 0..n {
                b_level[a] += dw[a];
                theta_dw += theta[a] * dw[a];
            }
            n_t *= (-theta_dw - 0.5 * theta_sq * dt).exp();

            for i in 0..n {
                let alpha = mu[i] - r;
                let row_var: f64 = sigma[i].iter().map(|v| v * v).sum();
                let mut diffusion = 0.0;
                for j in 0..n {
                    diffusion += sigma[i][j] * dw[j];
                }
                s[i] *= ((alpha - 0.5 * row_var) * dt + diffusion).exp();
            }

            let step = k + 1;
            for a in 0..n {
                set.brownian[idxa(p, step, a)] = b_level[a];
                set.prices[idxa(p, step, a)] = s[a];
            }
            set.density[idx(p, step)] = n_t;
            set.wealth[idx(p, step)] = wealth_process_value(model, sol, n_t, times[step], 64)?;
        }
    }
    Ok(set)
}

/// Self-financing replication along simulated paths: the wealth
/// `x + sum pi' dS` with the explicit strategy rebalanced at each step,
/// minus the optimal terminal payoff, per path. The root-mean-square error
/// decreases as the step count grows.
pub fn hedge_replication_error(
    model: &MarketModel,
    sol: &DualSolution,
    paths: &PathSet,
) -> Result<Vec<f64>, MarketError> {
    let n = paths.n_assets;
    let mut errors = Vec::with_capacity(paths.n_paths);
    let mut s_t = vec![0.0; n];
    for p in 0..paths.n_paths {
        let mut wealth = sol.x;
        for k in 0..paths.n_steps {
            let t = paths.times[k];
            for a in 0..n {
                s_t[a] = paths.price(p, k, a);
            }
            let pi = closed_form_strategy(model, sol, t, paths.density_at(p, k), &s_t)?;
            let mut gain = 0.0;
            for a in 0..n {
                gain += pi[a] * (paths.price(p, k + 1, a) - paths.price(p, k, a));
            }
            wealth += gain;
        }
        let target = optimal_terminal_wealth(sol, paths.density_at(p, paths.n_steps));
        errors.push(wealth - target);
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn single_asset_market(theta: f64, horizon: f64) -> MarketModel {
        // sigma = 0.2 with mu - r = 0.2 * theta
        let spec = MarketSpec {
            horizon,
            grid: vec![0.0, horizon],
            r: vec![0.0],
            mu: vec![vec![0.2 * theta]],
            sigma: vec![vec![vec![0.2]]],
        };
        MarketModel::new(spec).unwrap()
    }

    fn reciprocal_pair() -> (UtilityFn, LossFn) {
        (
            UtilityFn::shifted_reciprocal(1.0).unwrap(),
            LossFn::scaled_reciprocal(3.0).unwrap(),
        )
    }

    #[test]
    fn model_derives_market_price_of_risk() {
        let model = single_asset_market(0.3, 1.0);
        assert_relative_eq!(model.theta(0)[0], 0.3, epsilon = 1e-14);
        assert_relative_eq!(model.remaining_variance(0.0), 0.09, epsilon = 1e-14);
        assert_relative_eq!(model.remaining_variance(1.0), 0.0, epsilon = 1e-14);
        assert_relative_eq!(model.remaining_variance(0.5), 0.045, epsilon = 1e-14);
    }

    #[test]
    fn model_time_varying_cells() {
        let spec = MarketSpec {
            horizon: 2.0,
            grid: vec![0.0, 1.0, 2.0],
            r: vec![0.0, 0.01],
            mu: vec![vec![0.06], vec![0.05]],
            sigma: vec![vec![vec![0.2]], vec![vec![0.1]]],
        };
        let model = MarketModel::new(spec).unwrap();
        assert_relative_eq!(model.theta(0)[0], 0.3);
        assert_relative_eq!(model.theta(1)[0], 0.4);
        assert_relative_eq!(model.remaining_variance(0.0), 0.25, epsilon = 1e-14);
        assert_relative_eq!(model.remaining_variance(1.5), 0.08, epsilon = 1e-14);
        assert_eq!(model.cell_of(0.5), 0);
        assert_eq!(model.cell_of(1.5), 1);
        assert_eq!(model.cell_of(2.0), 1);
    }

    #[test]
    fn model_validation_errors() {
        let mut spec = MarketSpec {
            horizon: 1.0,
            grid: vec![0.0, 1.0],
            r: vec![0.0],
            mu: vec![vec![0.06]],
            sigma: vec![vec![vec![0.2]]],
        };
        spec.grid = vec![0.0, 0.5];
        assert!(MarketModel::new(spec.clone()).is_err());
        spec.grid = vec![0.0, 1.0];
        spec.sigma = vec![vec![vec![0.0]]];
        assert!(MarketModel::new(spec.clone()).is_err());
        spec.sigma = vec![vec![vec![0.2]]];
        spec.r = vec![0.0, 0.0];
        assert!(MarketModel::new(spec).is_err());
    }

    #[test]
    fn density_terminal_examples() {
        let flat = single_asset_market(0.0, 1.0);
        assert_relative_eq!(density_terminal(&flat, 0.0, 1.3), 1.0, epsilon = 1e-14);

        let model = single_asset_market(0.3, 1.0);
        assert_relative_eq!(
            density_terminal(&model, 0.0, 0.0),
            (-0.045_f64).exp(),
            epsilon = 1e-14
        );

        // E_z[N] = 1 at order 64 for m = 1
        let unit = single_asset_market(1.0, 1.0);
        let rule = numerics::gauss_hermite(64).unwrap();
        let mean = rule.expect(|z| density_terminal(&unit, 0.0, z));
        assert_relative_eq!(mean, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn lognormal_half_moment_identity() {
        // E[N^{1/2}] = e^{-m/8} for m in {0.01, 0.09, 1.0}
        let rule = numerics::gauss_hermite(64).unwrap();
        for m in [0.01_f64, 0.09, 1.0] {
            let model = single_asset_market(m.sqrt(), 1.0);
            let got = rule.expect(|z| density_terminal(&model, 0.0, z).sqrt());
            assert_relative_eq!(got, (-m / 8.0).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn budget_binding_y_matches_closed_form() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        let m = 0.09_f64;
        let x = 1.0;
        for lambda in [0.0_f64, 1.0, 5.0] {
            let y =
                budget_binding_y(&model, &u, &l, lambda, x, Truncation::default(), 64).unwrap();
            let expected = (1.0 + 3.0 * lambda) * (-m / 4.0).exp() / (x * x);
            assert_relative_eq!(y, expected, max_relative = 1e-8);
        }
    }

    #[test]
    fn optimal_terminal_wealth_examples() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        let sol = DualSolution::with_multipliers(
            &model,
            u,
            l,
            1.0,
            3.0,
            4.0,
            1.0,
            Truncation::default(),
            64,
        )
        .unwrap();
        assert_relative_eq!(optimal_terminal_wealth(&sol, 1.0), 1.0, epsilon = 1e-14);

        let sol = DualSolution {
            truncation: Truncation::new(0.8, 1.2).unwrap(),
            ..sol
        };
        assert_eq!(optimal_terminal_wealth(&sol, 0.5), 0.0);
        assert_eq!(optimal_terminal_wealth(&sol, 1.5), 0.0);
        assert!(optimal_terminal_wealth(&sol, 1.0) > 0.0);
    }

    #[test]
    fn closed_form_wealth_reduces_to_half_moment() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        let m = 0.09_f64;
        let sol = DualSolution::with_multipliers(
            &model,
            u,
            l,
            1.0,
            3.0,
            1.0,
            0.0,
            Truncation::default(),
            64,
        )
        .unwrap();
        let f = closed_form_wealth(&model, &sol, 1.0, 0.0).unwrap();
        assert_relative_eq!(f, (-m / 8.0_f64).exp(), max_relative = 1e-12);
        assert!((f - 0.988813).abs() < 1e-6);
    }

    #[test]
    fn closed_form_wealth_empty_band_is_zero() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        let mut sol = DualSolution::with_multipliers(
            &model,
            u,
            l,
            1.0,
            3.0,
            1.0,
            0.0,
            Truncation::default(),
            64,
        )
        .unwrap();
        sol.truncation = Truncation { lo: 1.0, hi: 1.0 };
        assert_eq!(closed_form_wealth(&model, &sol, 1.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_wealth_matches_conditional_expectation_quadrature() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        for (trunc, lambda, y) in [
            (Truncation::default(), 1.0, 3.9),
            (Truncation::new(0.8, 1.2).unwrap(), 1.0, 3.9),
            (Truncation::new(0.5, f64::INFINITY).unwrap(), 0.5, 2.0),
        ] {
            let sol = DualSolution::with_multipliers(&model, u, l, 1.0, 3.0, y, lambda, trunc, 64)
                .unwrap();
            for (z, t) in [(1.0, 0.0), (0.7, 0.3), (1.3, 0.9)] {
                let f = closed_form_wealth(&model, &sol, z, t).unwrap();
                // independent fine Simpson oracle over the eta segment; the
                // indicator is absorbed into the integration limits so the
                // integrand stays smooth at the endpoints
                let m = model.remaining_variance(t);
                let a = -0.5 * m;
                let b = -m.sqrt();
                let coef = 1.0 + 3.0 * lambda;
                let integrand = |eta: f64| {
                    let n_ratio = (a + b * eta).exp();
                    let n_terminal = z * n_ratio;
                    n_ratio * (coef / (y * n_terminal)).sqrt() * normal_pdf(eta)
                };
                let (lo, hi) = trunc.eta_interval(z, a, b);
                let (lo, hi) = (lo.max(-12.0), hi.min(12.0));
                let n_panels = 200_000;
                let h = (hi - lo) / n_panels as f64;
                let mut acc = integrand(lo) + integrand(hi);
                for i in 1..n_panels {
                    let eta = lo + i as f64 * h;
                    acc += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(eta);
                }
                let oracle = acc * h / 3.0;
                assert_relative_eq!(f, oracle, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn strategy_zero_outside_band_and_for_flat_market() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        let mut sol = DualSolution::with_multipliers(
            &model,
            u,
            l,
            1.0,
            3.0,
            1.0,
            0.0,
            Truncation::default(),
            64,
        )
        .unwrap();
        sol.truncation = Truncation { lo: 1.0, hi: 1.0 };
        let pi = closed_form_strategy(&model, &sol, 0.5, 1.0, &[1.0]).unwrap();
        assert_eq!(pi, vec![0.0]);
    }

    #[test]
    fn strategy_long_when_risk_premium_positive() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        let sol = DualSolution::with_multipliers(
            &model,
            u,
            l,
            1.0,
            3.0,
            3.9,
            1.0,
            Truncation::default(),
            64,
        )
        .unwrap();
        // F_z < 0 and theta > 0 compose to a long position
        let fz = closed_form_wealth_dz(&model, &sol, 1.0, 0.0).unwrap();
        assert!(fz < 0.0);
        let pi = closed_form_strategy(&model, &sol, 0.0, 1.0, &[1.0]).unwrap();
        assert!(pi[0] > 0.0);
    }

    #[test]
    fn analytic_wealth_derivative_matches_finite_differences() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        for trunc in [Truncation::default(), Truncation::new(0.8, 1.2).unwrap()] {
            let sol =
                DualSolution::with_multipliers(&model, u, l, 1.0, 3.0, 3.9, 1.0, trunc, 64)
                    .unwrap();
            for (z, t) in [(1.0, 0.0), (0.9, 0.4), (1.1, 0.7)] {
                let analytic = closed_form_wealth_dz(&model, &sol, z, t).unwrap();
                let h = 1e-6 * z;
                let fd = (closed_form_wealth(&model, &sol, z + h, t).unwrap()
                    - closed_form_wealth(&model, &sol, z - h, t).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(analytic, fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn terminal_cdf_median_and_limits() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        let m = 0.09_f64;
        let y = 3.9;
        let sol = DualSolution::with_multipliers(
            &model,
            u,
            l,
            1.0,
            3.0,
            y,
            1.0,
            Truncation::default(),
            64,
        )
        .unwrap();
        // W'(a) = y e^{-m/2} at the lognormal median
        let a_med = (4.0 / (y * (-m / 2.0).exp())).sqrt();
        assert_relative_eq!(
            terminal_cdf(&sol, &model, a_med).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert!(terminal_cdf(&sol, &model, 1e9).unwrap() > 1.0 - 1e-9);
        assert!(terminal_cdf(&sol, &model, 1e-9).unwrap() < 1e-9);
        assert!(terminal_cdf(&sol, &model, 0.0).is_err());

        let truncated = DualSolution {
            truncation: Truncation::new(0.8, 1.2).unwrap(),
            ..sol
        };
        assert!(matches!(
            terminal_cdf(&truncated, &model, 1.0),
            Err(MarketError::RequiresUntruncated)
        ));
    }

    #[test]
    fn simulate_is_deterministic_and_martingale() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        let sol = DualSolution::with_multipliers(
            &model,
            u,
            l,
            1.0,
            3.0,
            3.9,
            1.0,
            Truncation::default(),
            64,
        )
        .unwrap();
        let a = simulate(&model, &sol, 42, 64, 16).unwrap();
        let b = simulate(&model, &sol, 42, 64, 16).unwrap();
        assert_eq!(a, b);

        // sample mean of N_T within 3 standard errors of 1
        let big = simulate(&model, &sol, 7, 20_000, 8).unwrap();
        let n_terminal: Vec<f64> = (0..big.n_paths)
            .map(|p| big.density_at(p, big.n_steps))
            .collect();
        let mean: f64 = n_terminal.iter().sum::<f64>() / n_terminal.len() as f64;
        let var: f64 = n_terminal
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n_terminal.len() - 1) as f64;
        let se = (var / n_terminal.len() as f64).sqrt();
        assert!(
            (mean - 1.0).abs() < 3.0 * se,
            "mean {mean} not within 3se {se} of 1"
        );
    }

    #[test]
    fn simulate_flat_market_keeps_prices_constant() {
        let spec = MarketSpec {
            horizon: 1.0,
            grid: vec![0.0, 1.0],
            r: vec![0.03],
            mu: vec![vec![0.03]],
            sigma: vec![vec![vec![1e-12]]],
        };
        let model = MarketModel::new(spec).unwrap();
        let (u, l) = reciprocal_pair();
        let sol = DualSolution::with_multipliers(
            &model,
            u,
            l,
            1.0,
            3.0,
            1.0,
            0.0,
            Truncation::default(),
            64,
        )
        .unwrap();
        let paths = simulate(&model, &sol, 1, 8, 32).unwrap();
        for p in 0..paths.n_paths {
            for k in 0..=paths.n_steps {
                assert!((paths.price(p, k, 0) - 1.0).abs() < 1e-8);
            }
        }
        // nothing to hedge
        let errs = hedge_replication_error(&model, &sol, &paths).unwrap();
        for e in errs {
            assert!(e.abs() < 1e-6);
        }
    }

    #[test]
    fn path_csv_header_shape() {
        let (u, l) = reciprocal_pair();
        let model = single_asset_market(0.3, 1.0);
        let sol = DualSolution::with_multipliers(
            &model,
            u,
            l,
            1.0,
            3.0,
            1.0,
            0.0,
            Truncation::default(),
            64,
        )
        .unwrap();
        let paths = simulate(&model, &sol, 3, 2, 2).unwrap();
        let mut buf = Vec::new();
        paths.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "path,step,t,B,S_1,N,X");
        assert_eq!(text.lines().count(), 1 + 2 * 3);
    }
}
