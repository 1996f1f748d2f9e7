//! Finite-state one-period incomplete market on which the duality theory is
//! checked exactly: equivalent martingale measures form an affine family,
//! the dual value `z_lambda(y) = inf_Q E[Z_lambda(y dQ/dP)]` is a convex
//! minimization over that family, and the primal optimum is recovered
//! through `H_lambda`. Brute-force grid searches over trading positions
//! provide the independent oracle.
//!
//! The affine parameterization makes the one-period reduction literal: the
//! endpoints of the dual domain are exactly the densities `y dQ/dP`, so
//! every statement of the incomplete-market duality becomes finitely
//! checkable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, RootConfig};
use crate::preferences::{LagrangianUtility, LossFn, PreferenceError, UtilityFn};

#[derive(Debug, Error)]
pub enum DiscreteError {
    #[error("invalid discrete market: {0}")]
    InvalidMarket(String),
    #[error("arbitrage detected: no strictly positive martingale measure exists")]
    ArbitrageDetected,
    #[error("dimension {0} exceeds the supported desk scale")]
    UnsupportedDimension(usize),
    #[error("infeasible: x1 < r_min ({x1} < {r_min})")]
    Infeasible { x1: f64, r_min: f64 },
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

// ---------------------------------------------------------------------------
// market
// ---------------------------------------------------------------------------

/// One-period market with `n_states` terminal states and `n_assets` traded
/// assets quoted in discounted terms. Serialized as
/// `{"probs":[...], "payoffs":[[...]], "spot":[...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DiscreteMarketSpec", into = "DiscreteMarketSpec")]
pub struct DiscreteMarket {
    probs: Vec<f64>,
    payoffs: Vec<Vec<f64>>,
    spot: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscreteMarketSpec {
    probs: Vec<f64>,
    payoffs: Vec<Vec<f64>>,
    spot: Vec<f64>,
}

impl TryFrom<DiscreteMarketSpec> for DiscreteMarket {
    type Error = DiscreteError;

    fn try_from(spec: DiscreteMarketSpec) -> Result<Self, Self::Error> {
        DiscreteMarket::new(spec.probs, spec.payoffs, spec.spot)
    }
}

impl From<DiscreteMarket> for DiscreteMarketSpec {
    fn from(m: DiscreteMarket) -> Self {
        DiscreteMarketSpec {
            probs: m.probs,
            payoffs: m.payoffs,
            spot: m.spot,
        }
    }
}

impl DiscreteMarket {
    pub fn new(
        probs: Vec<f64>,
        payoffs: Vec<Vec<f64>>,
        spot: Vec<f64>,
    ) -> Result<Self, DiscreteError> {
        let bad = |msg: String| Err(DiscreteError::InvalidMarket(msg));
        let n_states = probs.len();
        if n_states < 2 {
            return bad("need at least two states".into());
        }
        if probs.iter().any(|&p| !(p > 0.0)) {
            return bad("every state needs strictly positive probability".into());
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("probabilities sum to {total}, expected 1"));
        }
        let probs: Vec<f64> = probs.into_iter().map(|p| p / total).collect();
        if payoffs.len() != n_states {
            return bad("payoffs must have one row per state".into());
        }
        let n_assets = spot.len();
        if n_assets == 0 {
            return bad("need at least one asset".into());
        }
        if payoffs.iter().any(|row| row.len() != n_assets) {
            return bad("payoff rows must match the number of assets".into());
        }
        if payoffs.iter().flatten().any(|&v| !(v >= 0.0)) {
            return bad("discounted payoffs must be nonnegative".into());
        }
        if spot.iter().any(|&s| !(s > 0.0)) {
            return bad("spot prices must be strictly positive".into());
        }
        Ok(Self {
            probs,
            payoffs,
            spot,
        })
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_assets(&self) -> usize {
        self.spot.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn payoffs(&self) -> &[Vec<f64>] {
        &self.payoffs
    }

    pub fn spot(&self) -> &[f64] {
        &self.spot
    }

    /// Discounted gain `payoff - spot` of an asset in a state.
    pub fn gain(&self, state: usize, asset: usize) -> f64 {
        self.payoffs[state][asset] - self.spot[asset]
    }

    /// Terminal wealth of the position vector `pi` with initial capital `x`.
    pub fn wealth(&self, x: f64, pi: &[f64]) -> Vec<f64> {
        (0..self.n_states())
            .map(|i| {
                x + pi
                    .iter()
                    .enumerate()
                    .map(|(a, &q)| q * self.gain(i, a))
                    .sum::<f64>()
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// measure set
// ---------------------------------------------------------------------------

/// Affine parameterization of the strictly positive solutions of the
/// martingale system: `q(t) = base + directions * t` with orthonormal
/// null-space directions, valid while every coordinate stays positive.
#[derive(Debug, Clone)]
pub struct MeasureSet {
    /// A strictly positive martingale measure.
    pub base: Vec<f64>,
    /// Orthonormal null-space directions, one vector per free parameter.
    pub directions: Vec<Vec<f64>>,
    /// Per-coordinate open parameter intervals through the base point.
    /// Exact for one free parameter; a bounding box for more (membership is
    /// then checked pointwise).
    pub box_bounds: Vec<(f64, f64)>,
}

impl MeasureSet {
    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// The measure at parameter `t`, or `None` if any coordinate is
    /// nonpositive.
    pub fn measure(&self, t: &[f64]) -> Option<Vec<f64>> {
        let q = self.measure_unchecked(t);
        if q.iter().all(|&v| v > 0.0) {
            Some(q)
        } else {
            None
        }
    }

    fn measure_unchecked(&self, t: &[f64]) -> Vec<f64> {
        let mut q = self.base.clone();
        for (k, dir) in self.directions.iter().enumerate() {
            for (qi, di) in q.iter_mut().zip(dir.iter()) {
                *qi += t[k] * di;
            }
        }
        q
    }

    /// Open positivity interval along coordinate `k` through the point `t`.
    fn segment_through(&self, t: &[f64], k: usize) -> (f64, f64) {
        let q = self.measure_unchecked(t);
        let dir = &self.directions[k];
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (qi, di) in q.iter().zip(dir.iter()) {
            if *di > 1e-14 {
                lo = lo.max(-qi / di);
            } else if *di < -1e-14 {
                hi = hi.min(-qi / di);
            }
        }
        (t[k] + lo, t[k] + hi)
    }
}

/// Computes the affine family of equivalent martingale measures: all
/// strictly positive `q` with `sum q_i = 1` and `sum q_i payoff_i = spot`.
/// The family dimension is `n_states - 1 - n_assets` when the system has
/// full rank. Fails with `ArbitrageDetected` when no strictly positive
/// solution exists.
pub fn emm_set(market: &DiscreteMarket) -> Result<MeasureSet, DiscreteError> {
    let n_states = market.n_states();
    let n_assets = market.n_assets();
    let rows = 1 + n_assets;

    let a = DMatrix::from_fn(rows, n_states, |i, j| {
        if i == 0 {
            1.0
        } else {
            market.payoffs[j][i - 1]
        }
    });
    let mut b = DVector::zeros(rows);
    b[0] = 1.0;
    for i in 0..n_assets {
        b[i + 1] = market.spot[i];
    }

    let scale = a.amax().max(1.0);
    let svd = a.clone().svd(true, true);
    let least_squares = svd
        .solve(&b, 1e-12 * scale)
        .map_err(|e| DiscreteError::InvalidMarket(e.to_string()))?;
    let residual = (&a * &least_squares - &b).amax();
    if residual > 1e-9 * scale {
        // the linear system itself has no solution
        return Err(DiscreteError::ArbitrageDetected);
    }

    // null space of A from the spectral decomposition of A'A
    let gram = a.transpose() * &a;
    let eigen = gram.symmetric_eigen();
    let lambda_max = eigen
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let eig_tol = 1e-12 * lambda_max.max(1.0);
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for i in 0..n_states {
        if eigen.eigenvalues[i].abs() <= eig_tol {
            directions.push(eigen.eigenvectors.column(i).iter().cloned().collect());
        }
    }
    let dim = directions.len();

    let q_ls: Vec<f64> = least_squares.iter().cloned().collect();
    if dim == 0 {
        if q_ls.iter().any(|&v| v <= 1e-10) {
            return Err(DiscreteError::ArbitrageDetected);
        }
        return Ok(MeasureSet {
            base: q_ls,
            directions,
            box_bounds: Vec::new(),
        });
    }
    if dim > 3 {
        return Err(DiscreteError::UnsupportedDimension(dim));
    }

    // maximize the positivity margin min_i q_i(t) (concave piecewise linear)
    // by multi-pass grid refinement; any probability vector lies within
    // radius 2 of the least-norm solution, so [-3, 3]^dim covers the set
    let margin = |t: &[f64]| -> f64 {
        let mut worst = f64::INFINITY;
        for i in 0..n_states {
            let mut qi = q_ls[i];
            for (k, dir) in directions.iter().enumerate() {
                qi += t[k] * dir[i];
            }
            worst = worst.min(qi);
        }
        worst
    };
    let points_per_dim: usize = match dim {
        1 => 201,
        2 => 61,
        _ => 21,
    };
    let mut center = vec![0.0; dim];
    let mut half_width = 3.0;
    let mut best_t = center.clone();
    let mut best = f64::NEG_INFINITY;
    for _pass in 0..5 {
        let mut counter = vec![0usize; dim];
        let mut t = vec![0.0; dim];
        'grid: loop {
            for k in 0..dim {
                t[k] = center[k] - half_width
                    + 2.0 * half_width * counter[k] as f64 / (points_per_dim - 1) as f64;
            }
            let m = margin(&t);
            if m > best {
                best = m;
                best_t = t.clone();
            }
            let mut k = 0;
            loop {
                counter[k] += 1;
                if counter[k] < points_per_dim {
                    break;
                }
                counter[k] = 0;
                k += 1;
                if k == dim {
                    break 'grid;
                }
            }
        }
        center = best_t.clone();
        half_width *= 4.0 / (points_per_dim - 1) as f64;
    }
    if best <= 1e-10 {
        return Err(DiscreteError::ArbitrageDetected);
    }

    let mut base = q_ls.clone();
    for (k, dir) in directions.iter().enumerate() {
        for (bi, di) in base.iter_mut().zip(dir.iter()) {
            *bi += best_t[k] * di;
        }
    }
    let set = MeasureSet {
        base,
        directions,
        box_bounds: Vec::new(),
    };
    let origin = vec![0.0; dim];
    let box_bounds = (0..dim).map(|k| set.segment_through(&origin, k)).collect();
    Ok(MeasureSet { box_bounds, ..set })
}

// ---------------------------------------------------------------------------
// dual value
// ---------------------------------------------------------------------------

/// Minimizer of the dual objective over the measure family.
#[derive(Debug, Clone)]
pub struct DualValue {
    pub value: f64,
    pub q_star: Vec<f64>,
    /// True when the argmin sits within 1e-8 of the positivity boundary,
    /// where the infimum may not be attained by a strict measure.
    pub boundary_warning: bool,
}

/// Dual value `z_lambda(y) = inf_Q E[Z_lambda(y dQ/dP)]` over the measure
/// family, by golden-section per free direction (the objective is convex in
/// the affine parameter, hence unimodal along lines).
pub fn dual_value_z(
    market: &DiscreteMarket,
    lag: &LagrangianUtility,
    y: f64,
) -> Result<DualValue, DiscreteError> {
    let measures = emm_set(market)?;
    dual_value_over(market, &measures, lag, y)
}

/// [`dual_value_z`] with a precomputed measure family, for solver loops.
pub fn dual_value_over(
    market: &DiscreteMarket,
    measures: &MeasureSet,
    lag: &LagrangianUtility,
    y: f64,
) -> Result<DualValue, DiscreteError> {
    if !(y > 0.0) {
        return Err(DiscreteError::InvalidMarket(format!(
            "dual value requires y > 0, got {y}"
        )));
    }
    let probs = market.probs();
    let objective = |q: &[f64]| -> f64 {
        let mut total = 0.0;
        for (qi, pi) in q.iter().zip(probs.iter()) {
            if *qi <= 0.0 {
                return f64::INFINITY;
            }
            match lag.conjugate(y * qi / pi) {
                Ok(z) => total += pi * z,
                Err(_) => return f64::INFINITY,
            }
        }
        total
    };

    let dim = measures.dim();
    if dim == 0 {
        let q = measures.base.clone();
        let value = objective(&q);
        return Ok(DualValue {
            value,
            q_star: q,
            boundary_warning: false,
        });
    }

    // cyclic coordinate golden-section inside the positivity region
    let mut t = vec![0.0; dim];
    let mut boundary_warning = false;
    for cycle in 0..80 {
        let mut moved = 0.0;
        for k in 0..dim {
            let (lo, hi) = measures.segment_through(&t, k);
            let width = hi - lo;
            let (lo_s, hi_s) = (lo + 1e-11 * width, hi - 1e-11 * width);
            let f = |tk: f64| {
                let mut probe = t.clone();
                probe[k] = tk;
                objective(&measures.measure_unchecked(&probe))
            };
            let (tk_star, _) = numerics::golden_section_min(f, lo_s, hi_s, 1e-13, 200);
            moved += (tk_star - t[k]).abs();
            t[k] = tk_star;
            if (tk_star - lo).abs() < 1e-8 * width.max(1.0)
                || (hi - tk_star).abs() < 1e-8 * width.max(1.0)
            {
                boundary_warning = true;
            }
        }
        if moved < 1e-13 || (dim == 1 && cycle == 0) {
            break;
        }
    }
    let q_star = measures.measure_unchecked(&t);
    Ok(DualValue {
        value: objective(&q_star),
        q_star,
        boundary_warning,
    })
}

// ---------------------------------------------------------------------------
// primal solves
// ---------------------------------------------------------------------------

/// Optimal wealth profile of the unconstrained Lagrangian problem at a fixed
/// multiplier.
#[derive(Debug, Clone)]
pub struct PrimalSolution {
    /// Terminal wealth per state, `X_i = H_lambda(y q*_i / p_i)`.
    pub wealth: Vec<f64>,
    /// Attained value `E[W_lambda(X)]`.
    pub w_lambda: f64,
    /// Budget multiplier with `sum q*_i X_i = x`.
    pub y: f64,
    /// The minimizing measure.
    pub q_star: Vec<f64>,
    pub boundary_warning: bool,
}

/// Solves `sup E[W_lambda(X)]` over attainable nonnegative wealths with
/// budget `x`: the dual measure is minimized per `y`, and `y` is driven to
/// the binding budget `sum q*_i H_lambda(y q*_i / p_i) = x`. The first-order
/// condition of the inner minimization makes the profile attainable (its
/// price agrees under every measure in the family).
pub fn primal_lagrangian(
    market: &DiscreteMarket,
    lag: &LagrangianUtility,
    x: f64,
) -> Result<PrimalSolution, DiscreteError> {
    if !(x > 0.0) {
        return Err(DiscreteError::InvalidMarket(
            "initial capital must be positive".into(),
        ));
    }
    let measures = emm_set(market)?;
    primal_over(market, &measures, lag, x)
}

fn primal_over(
    market: &DiscreteMarket,
    measures: &MeasureSet,
    lag: &LagrangianUtility,
    x: f64,
) -> Result<PrimalSolution, DiscreteError> {
    let probs = market.probs();
    let budget = |y: f64| -> f64 {
        match dual_value_over(market, measures, lag, y) {
            Ok(dv) => {
                let mut total = 0.0;
                for (qi, pi) in dv.q_star.iter().zip(probs.iter()) {
                    match lag.inverse_marginal(y * qi / pi) {
                        Ok(h) => total += qi * h,
                        Err(_) => return f64::NAN,
                    }
                }
                total / x - 1.0
            }
            Err(_) => f64::NAN,
        }
    };
    let cfg = RootConfig {
        abs_tol: 1e-12,
        rel_tol: 1e-15,
        max_iter: 300,
        bracket_expansion_cap: 200,
    };
    let y = numerics::find_root(|s| budget(s.exp()), -5.0, 5.0, &cfg)?.exp();
    let dv = dual_value_over(market, measures, lag, y)?;
    let wealth: Vec<f64> = dv
        .q_star
        .iter()
        .zip(probs.iter())
        .map(|(qi, pi)| lag.inverse_marginal(y * qi / pi))
        .collect::<Result<_, _>>()?;
    let w_lambda = wealth
        .iter()
        .zip(probs.iter())
        .map(|(&xi, &pi)| pi * lag.value(xi))
        .sum();
    Ok(PrimalSolution {
        wealth,
        w_lambda,
        y,
        q_star: dv.q_star,
        boundary_warning: dv.boundary_warning,
    })
}

/// Brute-force `(r_min, r_max)` over trading positions: `r_min` minimizes
/// the expected loss on a position grid with local refinement, `r_max` is
/// the expected loss of the unconstrained utility maximizer. Supported for
/// up to two assets.
pub fn risk_bounds(
    market: &DiscreteMarket,
    utility: &UtilityFn,
    loss: &LossFn,
    x: f64,
) -> Result<(f64, f64), DiscreteError> {
    let expected_loss = |wealth: &[f64]| -> f64 {
        wealth
            .iter()
            .zip(market.probs().iter())
            .map(|(&w, &p)| {
                if w > 0.0 {
                    p * loss.value(-w)
                } else {
                    match loss.value_at_zero() {
                        Some(l0) if w == 0.0 => p * l0,
                        _ => f64::INFINITY,
                    }
                }
            })
            .sum()
    };
    let (_, r_min) = brute_force_position(market, x, &expected_loss)?;

    let neg_utility = |wealth: &[f64]| -> f64 {
        -wealth
            .iter()
            .zip(market.probs().iter())
            .map(|(&w, &p)| {
                if w > 0.0 {
                    p * utility.value(w)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum::<f64>()
    };
    let (pi_star, _) = brute_force_position(market, x, &neg_utility)?;
    let r_max = expected_loss(&market.wealth(x, &pi_star));
    Ok((r_min, r_max))
}

/// Grid-plus-refinement minimization of an objective over feasible position
/// vectors (nonnegative wealth in every state). Returns the best position
/// and objective value. The independent test oracles are separate
/// implementations; this one backs the production feasibility gate.
pub fn brute_force_position(
    market: &DiscreteMarket,
    x: f64,
    objective: impl Fn(&[f64]) -> f64,
) -> Result<(Vec<f64>, f64), DiscreteError> {
    let n_assets = market.n_assets();
    if n_assets > 2 {
        return Err(DiscreteError::UnsupportedDimension(n_assets));
    }
    // coordinate ranges from the nonnegativity ratio tests along each axis
    let mut ranges = Vec::with_capacity(n_assets);
    for a in 0..n_assets {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..market.n_states() {
            let g = market.gain(i, a);
            if g > 1e-12 {
                lo = lo.max(-x / g);
            } else if g < -1e-12 {
                hi = hi.min(x / -g);
            }
        }
        let cap = 1e6 * x;
        ranges.push((lo.max(-cap), hi.min(cap)));
    }

    let evaluate = |pi: &[f64]| -> f64 {
        let wealth = market.wealth(x, pi);
        if wealth.iter().any(|&w| w < 0.0) {
            return f64::INFINITY;
        }
        objective(&wealth)
    };

    let points: usize = if n_assets == 1 { 2001 } else { 201 };
    let mut centers: Vec<f64> = ranges.iter().map(|r| 0.5 * (r.0 + r.1)).collect();
    let mut halves: Vec<f64> = ranges.iter().map(|r| 0.5 * (r.1 - r.0)).collect();
    let mut best_pi = centers.clone();
    let mut best = f64::INFINITY;
    for _pass in 0..4 {
        let mut counter = vec![0usize; n_assets];
        let mut pi = vec![0.0; n_assets];
        'grid: loop {
            for k in 0..n_assets {
                pi[k] = centers[k] - halves[k]
                    + 2.0 * halves[k] * counter[k] as f64 / (points - 1) as f64;
                pi[k] = pi[k].clamp(ranges[k].0, ranges[k].1);
            }
            let v = evaluate(&pi);
            if v < best {
                best = v;
                best_pi = pi.clone();
            }
            let mut k = 0;
            loop {
                counter[k] += 1;
                if counter[k] < points {
                    break;
                }
                counter[k] = 0;
                k += 1;
                if k == n_assets {
                    break 'grid;
                }
            }
        }
        centers = best_pi.clone();
        for h in halves.iter_mut() {
            *h *= 4.0 / (points - 1) as f64;
        }
    }
    Ok((best_pi, best))
}

// ---------------------------------------------------------------------------
// constrained solve and bi-dual verification
// ---------------------------------------------------------------------------

/// Solution of the risk-constrained problem on the discrete market.
#[derive(Debug, Clone, Serialize)]
pub struct ConstrainedSolution {
    pub wealth: Vec<f64>,
    pub u_value: f64,
    pub lambda_star: f64,
    pub y: f64,
    pub budget_residual: f64,
    pub risk_residual: f64,
    pub binding: bool,
    pub multiplier_scan_monotone: bool,
    pub r_min: f64,
}

/// Solves `sup E[U(X)]` subject to `E[L(-X)] <= x1` by the nested
/// two-multiplier search, with expectations evaluated on the discrete
/// states. Fails below the brute-forced `r_min`.
pub fn solve_constrained(
    market: &DiscreteMarket,
    utility: &UtilityFn,
    loss: &LossFn,
    x: f64,
    x1: f64,
) -> Result<ConstrainedSolution, DiscreteError> {
    let (r_min, _) = risk_bounds(market, utility, loss, x)?;
    if x1 < r_min - 1e-7 * r_min.abs().max(1.0) {
        return Err(DiscreteError::Infeasible { x1, r_min });
    }
    let measures = emm_set(market)?;
    let probs = market.probs().to_vec();
    let risk_scale = x1.abs().max(1.0);

    let profile = |y: f64, lambda: f64| -> Option<(Vec<f64>, Vec<f64>)> {
        let lag = LagrangianUtility::new(*utility, *loss, lambda).ok()?;
        let dv = dual_value_over(market, &measures, &lag, y).ok()?;
        let wealth: Option<Vec<f64>> = dv
            .q_star
            .iter()
            .zip(probs.iter())
            .map(|(qi, pi)| lag.inverse_marginal(y * qi / pi).ok())
            .collect();
        Some((wealth?, dv.q_star))
    };
    let budget = |y: f64, lambda: f64| -> f64 {
        match profile(y, lambda) {
            Some((wealth, q_star)) => {
                let price: f64 = wealth.iter().zip(q_star.iter()).map(|(w, q)| w * q).sum();
                price / x - 1.0
            }
            None => f64::NAN,
        }
    };
    let risk_fn = |y: f64, lambda: f64| -> f64 {
        match profile(y, lambda) {
            Some((wealth, _)) => {
                let el: f64 = wealth
                    .iter()
                    .zip(probs.iter())
                    .map(|(&w, &p)| p * loss.value(-w))
                    .sum();
                (el - x1) / risk_scale
            }
            None => f64::NAN,
        }
    };
    let cfg = RootConfig {
        abs_tol: 1e-10,
        rel_tol: 1e-13,
        max_iter: 300,
        bracket_expansion_cap: 200,
    };
    let nested = numerics::nested_solve(budget, risk_fn, &cfg)?;

    let (wealth, q_star) =
        profile(nested.y, nested.lambda).ok_or(DiscreteError::ArbitrageDetected)?;
    let u_value = wealth
        .iter()
        .zip(probs.iter())
        .map(|(&w, &p)| p * utility.value(w))
        .sum();
    let price: f64 = wealth.iter().zip(q_star.iter()).map(|(w, q)| w * q).sum();
    let el: f64 = wealth
        .iter()
        .zip(probs.iter())
        .map(|(&w, &p)| p * loss.value(-w))
        .sum();
    Ok(ConstrainedSolution {
        wealth,
        u_value,
        lambda_star: nested.lambda,
        y: nested.y,
        budget_residual: price - x,
        risk_residual: el - x1,
        binding: nested.binding,
        multiplier_scan_monotone: nested.monotone,
        r_min,
    })
}

/// One verified relation in a [`BidualReport`].
#[derive(Debug, Clone, Serialize)]
pub struct BidualCheck {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Outcome of the bi-dual verification on a solved instance.
#[derive(Debug, Clone, Serialize)]
pub struct BidualReport {
    pub lambda_star: f64,
    pub y: f64,
    pub u_value: f64,
    pub dual_min_y: f64,
    pub checks: Vec<BidualCheck>,
    pub all_pass: bool,
}

/// Verifies the conjugacy relations on a solved constrained instance:
///
/// 1. `u(x) = w_{lambda*}(x) + lambda* x1` within 1e-6;
/// 2. `u(x) = min_y { z_{lambda*}(y) + lambda* x1 + x y }` within 1e-5,
///    the minimum located by grid search plus golden-section refinement;
/// 3. concavity of `x -> u(x)` on a grid around `x` within 1e-9.
pub fn verify_bidual(
    market: &DiscreteMarket,
    utility: &UtilityFn,
    loss: &LossFn,
    x: f64,
    x1: f64,
) -> Result<BidualReport, DiscreteError> {
    let sol = solve_constrained(market, utility, loss, x, x1)?;
    let lag = LagrangianUtility::new(*utility, *loss, sol.lambda_star)?;
    let measures = emm_set(market)?;

    // (1) value relation through the Lagrangian problem at lambda*
    let primal = primal_over(market, &measures, &lag, x)?;
    let gap_w = (sol.u_value - (primal.w_lambda + sol.lambda_star * x1)).abs();

    // (2) bi-dual minimum over y
    let dual_objective = |y: f64| -> f64 {
        match dual_value_over(market, &measures, &lag, y) {
            Ok(dv) => dv.value + sol.lambda_star * x1 + x * y,
            Err(_) => f64::INFINITY,
        }
    };
    let mut best_y = sol.y;
    let mut best_val = dual_objective(sol.y);
    let n_grid = 121;
    for i in 0..n_grid {
        let y = sol.y * 10f64.powf(-2.0 + 4.0 * i as f64 / (n_grid - 1) as f64);
        let v = dual_objective(y);
        if v < best_val {
            best_val = v;
            best_y = y;
        }
    }
    let (y_refined, refined_val) =
        numerics::golden_section_min(dual_objective, best_y * 0.8, best_y * 1.25, 1e-12, 200);
    let (dual_min_y, dual_min) = if refined_val < best_val {
        (y_refined, refined_val)
    } else {
        (best_y, best_val)
    };
    let gap_dual = (sol.u_value - dual_min).abs();

    // (3) concavity of the value function around x
    let mut values = Vec::new();
    for frac in [0.95, 0.975, 1.0, 1.025, 1.05] {
        match solve_constrained(market, utility, loss, x * frac, x1) {
            Ok(s) => values.push(s.u_value),
            Err(DiscreteError::Infeasible { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let mut concavity_violation: f64 = 0.0;
    for w in values.windows(3) {
        concavity_violation = concavity_violation.max(0.5 * (w[0] + w[2]) - w[1]);
    }

    let checks = vec![
        BidualCheck {
            name: "u = w_lambda + lambda*x1",
            measured: gap_w,
            tolerance: 1e-6,
            pass: gap_w <= 1e-6,
        },
        BidualCheck {
            name: "u = min_y(z_lambda + lambda*x1 + xy)",
            measured: gap_dual,
            tolerance: 1e-5,
            pass: gap_dual <= 1e-5,
        },
        BidualCheck {
            name: "value function concave in x",
            measured: concavity_violation,
            tolerance: 1e-9,
            pass: values.len() >= 3 && concavity_violation <= 1e-9,
        },
    ];
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(BidualReport {
        lambda_star: sol.lambda_star,
        y: sol.y,
        u_value: sol.u_value,
        dual_min_y,
        checks,
        all_pass,
    })
}
