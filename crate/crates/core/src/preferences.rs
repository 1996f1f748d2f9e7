//! Parametric utility and loss families, their Legendre conjugates and
//! inverse marginals, the Lagrangian utility `W_lambda`, and asymptotic
//! elasticity analysis.
//!
//! The families form a closed registry so that every member ships with an
//! analytic derivative, an inverse marginal and the boundedness metadata the
//! elasticity classifier needs:
//!
//! * utilities on `(0, inf)`: `ln x`, `x^p / p` with `0 < p < 1`, and the
//!   shifted reciprocal `c - 1/x`;
//! * losses on `(-inf, 0)`: `exp(gamma k)` and the scaled reciprocal
//!   `-beta / k`.
//!
//! For a multiplier `lambda >= 0` the Lagrangian utility
//! `W_lambda(x) = U(x) - lambda L(-x)` is itself a utility function (strictly
//! increasing, strictly concave, Inada), with conjugate `Z_lambda` and inverse
//! marginal `H_lambda = (W_lambda')^{-1} = -Z_lambda'`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreferenceError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inverse marginal bracket not found within {0} expansions")]
    NoConvergence(usize),
    #[error("asymptotic elasticity undetermined: {0}")]
    AeUndetermined(&'static str),
}

// ---------------------------------------------------------------------------
// utility families
// ---------------------------------------------------------------------------

/// A utility function from the shipped registry: strictly increasing,
/// strictly concave on `(0, inf)` and satisfying the Inada conditions
/// `U'(0) = +inf`, `U'(inf) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UtilitySpec", into = "UtilitySpec")]
pub enum UtilityFn {
    /// `U(x) = ln x`
    Log,
    /// `U(x) = x^p / p`, `0 < p < 1`
    Power { p: f64 },
    /// `U(x) = c - 1/x`
    ShiftedReciprocal { c: f64 },
}

impl UtilityFn {
    pub fn log() -> Self {
        UtilityFn::Log
    }

    pub fn power(p: f64) -> Result<Self, PreferenceError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(PreferenceError::InvalidParameter(format!(
                "power utility requires 0 < p < 1, got {p}"
            )));
        }
        Ok(UtilityFn::Power { p })
    }

    pub fn shifted_reciprocal(c: f64) -> Result<Self, PreferenceError> {
        if !c.is_finite() {
            return Err(PreferenceError::InvalidParameter(format!(
                "shifted reciprocal utility requires finite c, got {c}"
            )));
        }
        Ok(UtilityFn::ShiftedReciprocal { c })
    }

    /// `U(x)` for `x > 0`.
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            UtilityFn::Log => x.ln(),
            UtilityFn::Power { p } => x.powf(p) / p,
            UtilityFn::ShiftedReciprocal { c } => c - 1.0 / x,
        }
    }

    /// `U'(x)` for `x > 0`.
    pub fn marginal(&self, x: f64) -> f64 {
        match *self {
            UtilityFn::Log => 1.0 / x,
            UtilityFn::Power { p } => x.powf(p - 1.0),
            UtilityFn::ShiftedReciprocal { .. } => 1.0 / (x * x),
        }
    }

    /// Inverse marginal `I = (U')^{-1} = -V'`, defined for `y > 0`.
    pub fn inverse_marginal(&self, y: f64) -> Result<f64, PreferenceError> {
        if !(y > 0.0) {
            return Err(PreferenceError::Domain("inverse marginal requires y > 0"));
        }
        Ok(match *self {
            UtilityFn::Log => 1.0 / y,
            UtilityFn::Power { p } => y.powf(1.0 / (p - 1.0)),
            UtilityFn::ShiftedReciprocal { .. } => 1.0 / y.sqrt(),
        })
    }

    /// Legendre transform `V(y) = sup_{x>0} {U(x) - xy} = U(I(y)) - y I(y)`,
    /// defined for `y > 0`.
    pub fn conjugate(&self, y: f64) -> Result<f64, PreferenceError> {
        let i = self.inverse_marginal(y)?;
        Ok(self.value(i) - y * i)
    }

    /// `U(+inf)`, possibly infinite.
    pub fn sup_value(&self) -> f64 {
        match *self {
            UtilityFn::Log | UtilityFn::Power { .. } => f64::INFINITY,
            UtilityFn::ShiftedReciprocal { c } => c,
        }
    }

    /// Whether `U(+inf)` is finite.
    pub fn bounded_above(&self) -> bool {
        self.sup_value().is_finite()
    }

    /// The exact asymptotic elasticity `limsup_{x->inf} x U'(x) / U(x)`:
    /// `p` for the power family, 0 for the logarithm and for any family
    /// bounded above by a positive constant.
    pub fn analytic_ae(&self) -> f64 {
        match *self {
            UtilityFn::Log => 0.0,
            UtilityFn::Power { p } => p,
            UtilityFn::ShiftedReciprocal { .. } => 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// loss families
// ---------------------------------------------------------------------------

/// A loss function from the shipped registry: strictly increasing, strictly
/// convex on `(-inf, 0)` with `L'(-inf) = 0` and finite right derivative
/// limit at zero (possibly `+inf`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossSpec", into = "LossSpec")]
pub enum LossFn {
    /// `L(k) = exp(gamma k)`, `gamma > 0`. Extends smoothly to all of R,
    /// which the shortfall root search relies on.
    Exponential { gamma: f64 },
    /// `L(k) = -beta / k`, `beta > 0`, blowing up as `k -> 0-`.
    ScaledReciprocal { beta: f64 },
}

impl LossFn {
    pub fn exponential(gamma: f64) -> Result<Self, PreferenceError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(PreferenceError::InvalidParameter(format!(
                "exponential loss requires gamma > 0, got {gamma}"
            )));
        }
        Ok(LossFn::Exponential { gamma })
    }

    pub fn scaled_reciprocal(beta: f64) -> Result<Self, PreferenceError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(PreferenceError::InvalidParameter(format!(
                "scaled reciprocal loss requires beta > 0, got {beta}"
            )));
        }
        Ok(LossFn::ScaledReciprocal { beta })
    }

    /// `L(k)`. The exponential family is evaluated by its formula on all of
    /// R; the reciprocal family returns `+inf` for `k >= 0`.
    pub fn value(&self, k: f64) -> f64 {
        match *self {
            LossFn::Exponential { gamma } => (gamma * k).exp(),
            LossFn::ScaledReciprocal { beta } => {
                if k < 0.0 {
                    -beta / k
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `L'(k)` with the same domain convention as [`LossFn::value`].
    pub fn marginal(&self, k: f64) -> f64 {
        match *self {
            LossFn::Exponential { gamma } => gamma * (gamma * k).exp(),
            LossFn::ScaledReciprocal { beta } => {
                if k < 0.0 {
                    beta / (k * k)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `(L')^{-1}(v)` restricted to the domain `(-inf, 0)`: `None` when no
    /// `k < 0` has `L'(k) = v`, i.e. when `v >= L'(0-)`.
    pub fn inverse_marginal(&self, v: f64) -> Option<f64> {
        if !(v > 0.0) {
            return None;
        }
        match *self {
            LossFn::Exponential { gamma } => {
                if v < gamma {
                    Some((v / gamma).ln() / gamma)
                } else {
                    None
                }
            }
            LossFn::ScaledReciprocal { beta } => Some(-(beta / v).sqrt()),
        }
    }

    /// `lim_{k -> 0-} L(k)` when finite.
    pub fn value_at_zero(&self) -> Option<f64> {
        match *self {
            LossFn::Exponential { .. } => Some(1.0),
            LossFn::ScaledReciprocal { .. } => None,
        }
    }

    /// `lim_{k -> 0-} L'(k)`, possibly `+inf`.
    pub fn marginal_at_zero(&self) -> f64 {
        match *self {
            LossFn::Exponential { gamma } => gamma,
            LossFn::ScaledReciprocal { .. } => f64::INFINITY,
        }
    }

    /// `L(-inf)`; both shipped families vanish at `-inf`.
    pub fn inf_value(&self) -> f64 {
        0.0
    }

    /// Whether `L(-inf) > -inf`.
    pub fn bounded_below(&self) -> bool {
        true
    }

    /// Both shipped families are strictly positive on `(-inf, 0)`.
    pub fn positive_valued(&self) -> bool {
        true
    }

    /// Exact `AE_-(L) = limsup_{k -> -inf} k L'(k) / L(k)`: `-inf` for the
    /// exponential family, `-1` for the scaled reciprocal.
    pub fn analytic_ae_minus(&self) -> f64 {
        match *self {
            LossFn::Exponential { .. } => f64::NEG_INFINITY,
            LossFn::ScaledReciprocal { .. } => -1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Lagrangian utility
// ---------------------------------------------------------------------------

/// The bundle `(U, L, lambda)` exposing `W_lambda(x) = U(x) - lambda L(-x)`,
/// its derivative, inverse marginal `H_lambda` and conjugate `Z_lambda`.
///
/// Immutable after construction; all evaluations are pure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianUtility {
    utility: UtilityFn,
    loss: LossFn,
    lambda: f64,
}

impl LagrangianUtility {
    pub fn new(utility: UtilityFn, loss: LossFn, lambda: f64) -> Result<Self, PreferenceError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(PreferenceError::InvalidParameter(format!(
                "multiplier must be a finite nonnegative real, got {lambda}"
            )));
        }
        Ok(Self {
            utility,
            loss,
            lambda,
        })
    }

    pub fn utility(&self) -> &UtilityFn {
        &self.utility
    }

    pub fn loss(&self) -> &LossFn {
        &self.loss
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `W_lambda(x)` for `x > 0`.
    pub fn value(&self, x: f64) -> f64 {
        self.utility.value(x) - self.lambda * self.loss.value(-x)
    }

    /// `W_lambda'(x) = U'(x) + lambda L'(-x)` for `x > 0`.
    pub fn marginal(&self, x: f64) -> f64 {
        self.utility.marginal(x) + self.lambda * self.loss.marginal(-x)
    }

    /// `W_lambda(+inf) = U(+inf) - lambda L(-inf)`.
    pub fn sup_value(&self) -> f64 {
        self.utility.sup_value() - self.lambda * self.loss.inf_value()
    }

    /// For the reciprocal preference pair `U = c - 1/x`, `L = -beta/k` the
    /// marginal is `(1 + lambda beta) / x^2`; returns that coefficient when
    /// the pair matches, enabling the closed-form wealth process and
    /// strategy.
    pub fn reciprocal_pair_coef(&self) -> Option<f64> {
        match (self.utility, self.loss) {
            (UtilityFn::ShiftedReciprocal { .. }, LossFn::ScaledReciprocal { beta }) => {
                Some(1.0 + self.lambda * beta)
            }
            _ => None,
        }
    }

    /// Inverse marginal `H_lambda = (W_lambda')^{-1}`: the unique `x > 0`
    /// with `U'(x) + lambda L'(-x) = y`.
    ///
    /// Closed forms are used where the pair admits one; otherwise a bracketed
    /// bisection on `W_lambda'` starting from `[1e-12, 1]`, widened until the
    /// bracket contains `y`, run in log space to relative tolerance 1e-12 on
    /// `x` (or absolute 1e-14 on the residual).
    pub fn inverse_marginal(&self, y: f64) -> Result<f64, PreferenceError> {
        if !(y > 0.0) {
            return Err(PreferenceError::Domain("inverse marginal requires y > 0"));
        }
        if self.lambda == 0.0 {
            return self.utility.inverse_marginal(y);
        }
        if let Some(coef) = self.reciprocal_pair_coef() {
            return Ok((coef / y).sqrt());
        }
        if let (UtilityFn::Log, LossFn::ScaledReciprocal { beta }) = (self.utility, self.loss) {
            // 1/x + lambda beta / x^2 = y reduces to a quadratic in x.
            let lb = self.lambda * beta;
            return Ok((1.0 + (1.0 + 4.0 * y * lb).sqrt()) / (2.0 * y));
        }
        self.inverse_marginal_bisect(y)
    }

    fn inverse_marginal_bisect(&self, y: f64) -> Result<f64, PreferenceError> {
        const CAP: usize = 200;
        let mut lo: f64 = 1e-12;
        let mut hi: f64 = 1.0;
        let mut expansions = 0;
        while self.marginal(hi) >= y {
            hi *= 2.0;
            expansions += 1;
            if expansions > CAP {
                return Err(PreferenceError::NoConvergence(CAP));
            }
        }
        while self.marginal(lo) <= y {
            lo *= 0.25;
            expansions += 1;
            if expansions > CAP {
                return Err(PreferenceError::NoConvergence(CAP));
            }
        }
        // log-space bisection: ln-width 1e-12 bounds the relative error on x
        let mut slo = lo.ln();
        let mut shi = hi.ln();
        for _ in 0..200 {
            let sm = 0.5 * (slo + shi);
            let x = sm.exp();
            let resid = self.marginal(x) - y;
            if resid.abs() <= 1e-14 || (shi - slo) <= 1e-12 {
                return Ok(x);
            }
            if resid > 0.0 {
                slo = sm;
            } else {
                shi = sm;
            }
        }
        Ok((0.5 * (slo + shi)).exp())
    }

    /// Conjugate `Z_lambda(y) = sup_{x>0} {W_lambda(x) - xy}
    /// = W_lambda(H_lambda(y)) - y H_lambda(y)` for `y > 0`.
    ///
    /// Satisfies `Z_lambda < V` for positive-valued losses and
    /// `H_lambda = -Z_lambda'`.
    pub fn conjugate(&self, y: f64) -> Result<f64, PreferenceError> {
        let h = self.inverse_marginal(y)?;
        Ok(self.value(h) - y * h)
    }
}

// ---------------------------------------------------------------------------
// asymptotic elasticity
// ---------------------------------------------------------------------------

/// Verdict on `AE(W_lambda) < 1`, the sufficient condition for the duality
/// to attain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeVerdict {
    BelowOne,
    AtOrAboveOne,
    Undetermined,
}

/// Boundedness pattern of `(U(+inf), L(-inf))` distinguishing the branches
/// of the elasticity bound for `W_lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeCase {
    /// `U(+inf) < inf`, `L(-inf) > -inf`: `W_lambda` is bounded, so
    /// `AE(W_lambda) <= 0 < 1` unconditionally.
    BoundedBoth,
    /// `U(+inf) = inf`, `L(-inf) > -inf`: requires `AE(U) < 1`.
    UnboundedUtilityBoundedLoss,
    /// both unbounded: requires `AE(U) < 1` and `AE_-(L) < 1`.
    UnboundedBoth,
    /// `U(+inf) < inf`, `L(-inf) = -inf`: requires `AE_-(L) < 1`.
    BoundedUtilityUnboundedLoss,
}

/// Outcome of the elasticity classification for a preference pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeReport {
    /// Numeric estimate of `AE(W_1)` on the default grid, when defined.
    pub ae_estimate: Option<f64>,
    /// Analytic elasticity of `W_lambda` where family metadata determines it.
    pub analytic_ae: Option<f64>,
    pub verdict: AeVerdict,
    pub case: AeCase,
}

/// Numeric proxy for `AE(f) = limsup_{x->inf} x f'(x) / f(x)`: the maximum of
/// the elasticity over a log-spaced grid in `[x_max / 100, x_max]`.
///
/// This is an estimate, not the true limsup; the classifier prefers analytic
/// family metadata when available. Fails when `f` is nonpositive somewhere on
/// the grid, where the elasticity bound is not well-defined.
pub fn estimate_ae(
    f_value: impl Fn(f64) -> f64,
    f_derivative: impl Fn(f64) -> f64,
    x_max: f64,
    n_points: usize,
) -> Result<f64, PreferenceError> {
    if !(x_max >= 1e4) {
        return Err(PreferenceError::InvalidParameter(format!(
            "x_max must be at least 1e4, got {x_max}"
        )));
    }
    if n_points < 32 {
        return Err(PreferenceError::InvalidParameter(format!(
            "n_points must be at least 32, got {n_points}"
        )));
    }
    let x_min = x_max / 100.0;
    let log_lo = x_min.ln();
    let log_hi = x_max.ln();
    let mut best = f64::NEG_INFINITY;
    for i in 0..n_points {
        let t = i as f64 / (n_points - 1) as f64;
        let x = (log_lo + t * (log_hi - log_lo)).exp();
        let v = f_value(x);
        if !(v > 0.0) {
            return Err(PreferenceError::AeUndetermined(
                "function is nonpositive on the evaluation grid",
            ));
        }
        let e = x * f_derivative(x) / v;
        if e > best {
            best = e;
        }
    }
    Ok(best)
}

/// Numeric proxy for `AE_-(L) = limsup_{x->inf} -x L'(-x) / L(-x)` on the
/// same grid convention as [`estimate_ae`].
pub fn estimate_ae_minus(
    loss: &LossFn,
    x_max: f64,
    n_points: usize,
) -> Result<f64, PreferenceError> {
    estimate_ae(
        |x| loss.value(-x),
        |x| -loss.marginal(-x),
        x_max,
        n_points,
    )
}

/// Resolves the verdict for one elasticity requirement, preferring the
/// analytic value and reserving `Undetermined` for estimates within 0.02 of
/// one.
fn ae_condition(analytic: Option<f64>, estimate: Option<f64>) -> AeVerdict {
    if let Some(a) = analytic {
        return if a < 1.0 {
            AeVerdict::BelowOne
        } else {
            AeVerdict::AtOrAboveOne
        };
    }
    match estimate {
        Some(e) if (e - 1.0).abs() < 0.02 => AeVerdict::Undetermined,
        Some(e) if e < 1.0 => AeVerdict::BelowOne,
        Some(_) => AeVerdict::AtOrAboveOne,
        None => AeVerdict::Undetermined,
    }
}

fn combine(a: AeVerdict, b: AeVerdict) -> AeVerdict {
    use AeVerdict::*;
    match (a, b) {
        (BelowOne, BelowOne) => BelowOne,
        (AtOrAboveOne, _) | (_, AtOrAboveOne) => AtOrAboveOne,
        _ => Undetermined,
    }
}

/// Verdict for a boundedness case given analytic/estimated elasticities of
/// `U` and `L`. Factored out so every branch is testable directly.
pub fn ae_w_verdict(
    case: AeCase,
    ae_u_analytic: Option<f64>,
    ae_u_estimate: Option<f64>,
    ae_l_analytic: Option<f64>,
    ae_l_estimate: Option<f64>,
) -> AeVerdict {
    match case {
        AeCase::BoundedBoth => AeVerdict::BelowOne,
        AeCase::UnboundedUtilityBoundedLoss => ae_condition(ae_u_analytic, ae_u_estimate),
        AeCase::UnboundedBoth => combine(
            ae_condition(ae_u_analytic, ae_u_estimate),
            ae_condition(ae_l_analytic, ae_l_estimate),
        ),
        AeCase::BoundedUtilityUnboundedLoss => ae_condition(ae_l_analytic, ae_l_estimate),
    }
}

/// Classifies `AE(W_lambda)` for a preference pair from family boundedness
/// metadata and elasticity values. The verdict is `BelowOne` exactly when the
/// sufficient conditions hold: a bounded `W` needs nothing further, an
/// unbounded utility needs `AE(U) < 1` and an unbounded loss needs
/// `AE_-(L) < 1`.
pub fn classify_ae_w(utility: &UtilityFn, loss: &LossFn) -> AeReport {
    let case = match (utility.bounded_above(), loss.bounded_below()) {
        (true, true) => AeCase::BoundedBoth,
        (false, true) => AeCase::UnboundedUtilityBoundedLoss,
        (false, false) => AeCase::UnboundedBoth,
        (true, false) => AeCase::BoundedUtilityUnboundedLoss,
    };
    let ae_u_estimate = estimate_ae(|x| utility.value(x), |x| utility.marginal(x), 1e8, 256).ok();
    let ae_l_estimate = estimate_ae_minus(loss, 1e8, 256).ok();
    let verdict = ae_w_verdict(
        case,
        Some(utility.analytic_ae()),
        ae_u_estimate,
        Some(loss.analytic_ae_minus()),
        ae_l_estimate,
    );

    // W_lambda inherits U's tail when U is unbounded (the loss term vanishes
    // at +inf for a bounded loss) and is bounded otherwise.
    let analytic_ae = match case {
        AeCase::BoundedBoth => Some(0.0),
        AeCase::UnboundedUtilityBoundedLoss => Some(utility.analytic_ae()),
        _ => None,
    };
    let w = LagrangianUtility::new(*utility, *loss, 1.0).expect("lambda = 1 is valid");
    let ae_estimate = estimate_ae(|x| w.value(x), |x| w.marginal(x), 1e8, 256).ok();
    AeReport {
        ae_estimate,
        analytic_ae,
        verdict,
        case,
    }
}

// ---------------------------------------------------------------------------
// serialization specs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtilitySpec {
    family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
}

impl TryFrom<UtilitySpec> for UtilityFn {
    type Error = PreferenceError;

    fn try_from(spec: UtilitySpec) -> Result<Self, Self::Error> {
        let reject = |field: &str, family: &str| {
            Err(PreferenceError::InvalidParameter(format!(
                "field `{field}` is not accepted by utility family `{family}`"
            )))
        };
        match spec.family.as_str() {
            "log" => {
                if spec.p.is_some() {
                    return reject("p", "log");
                }
                if spec.c.is_some() {
                    return reject("c", "log");
                }
                Ok(UtilityFn::Log)
            }
            "power" => {
                if spec.c.is_some() {
                    return reject("c", "power");
                }
                let p = spec.p.ok_or_else(|| {
                    PreferenceError::InvalidParameter("power utility requires field `p`".into())
                })?;
                UtilityFn::power(p)
            }
            "shifted_reciprocal" => {
                if spec.p.is_some() {
                    return reject("p", "shifted_reciprocal");
                }
                let c = spec.c.ok_or_else(|| {
                    PreferenceError::InvalidParameter(
                        "shifted_reciprocal utility requires field `c`".into(),
                    )
                })?;
                UtilityFn::shifted_reciprocal(c)
            }
            other => Err(PreferenceError::InvalidParameter(format!(
                "unknown utility family `{other}`"
            ))),
        }
    }
}

impl From<UtilityFn> for UtilitySpec {
    fn from(u: UtilityFn) -> Self {
        match u {
            UtilityFn::Log => UtilitySpec {
                family: "log".into(),
                p: None,
                c: None,
            },
            UtilityFn::Power { p } => UtilitySpec {
                family: "power".into(),
                p: Some(p),
                c: None,
            },
            UtilityFn::ShiftedReciprocal { c } => UtilitySpec {
                family: "shifted_reciprocal".into(),
                p: None,
                c: Some(c),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossSpec {
    family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
}

impl TryFrom<LossSpec> for LossFn {
    type Error = PreferenceError;

    fn try_from(spec: LossSpec) -> Result<Self, Self::Error> {
        match spec.family.as_str() {
            "exponential" => {
                if spec.beta.is_some() {
                    return Err(PreferenceError::InvalidParameter(
                        "field `beta` is not accepted by loss family `exponential`".into(),
                    ));
                }
                let gamma = spec.gamma.ok_or_else(|| {
                    PreferenceError::InvalidParameter(
                        "exponential loss requires field `gamma`".into(),
                    )
                })?;
                LossFn::exponential(gamma)
            }
            "scaled_reciprocal" => {
                if spec.gamma.is_some() {
                    return Err(PreferenceError::InvalidParameter(
                        "field `gamma` is not accepted by loss family `scaled_reciprocal`".into(),
                    ));
                }
                let beta = spec.beta.ok_or_else(|| {
                    PreferenceError::InvalidParameter(
                        "scaled_reciprocal loss requires field `beta`".into(),
                    )
                })?;
                LossFn::scaled_reciprocal(beta)
            }
            other => Err(PreferenceError::InvalidParameter(format!(
                "unknown loss family `{other}`"
            ))),
        }
    }
}

impl From<LossFn> for LossSpec {
    fn from(l: LossFn) -> Self {
        match l {
            LossFn::Exponential { gamma } => LossSpec {
                family: "exponential".into(),
                gamma: Some(gamma),
                beta: None,
            },
            LossFn::ScaledReciprocal { beta } => LossSpec {
                family: "scaled_reciprocal".into(),
                gamma: None,
                beta: Some(beta),
            },
        }
    }
}
