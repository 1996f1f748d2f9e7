//! Shortfall and entropic risk measures on finite atom distributions, and
//! the feasibility interval `[r_min, r_max]` for the risk budget.
//!
//! Distributions are finite atom lists; continuous laws enter only through
//! quadrature or Monte Carlo discretization, which keeps every expectation in
//! this layer an exact weighted sum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bsmarket::MarketModel;
use crate::numerics::{self, NumericsError, RootConfig};
use crate::preferences::{LossFn, PreferenceError, UtilityFn};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("loss function is undefined at zero wealth (L(0-) = +inf)")]
    LossUndefinedAtZero,
    #[error("risk budget {x1} is unattainable: expected loss exceeds it for every cash amount")]
    Unattainable { x1: f64 },
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("csv parse error on line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// The law of a nonnegative terminal wealth as a finite list of
/// `(value, weight)` atoms with strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthDistribution {
    atoms: Vec<(f64, f64)>,
}

impl WealthDistribution {
    /// Validates and normalizes an atom list: values must be nonnegative and
    /// finite, weights strictly positive, and the total weight within 1e-12
    /// of one (it is then renormalized exactly).
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self, RiskError> {
        if atoms.is_empty() {
            return Err(RiskError::InvalidDistribution("no atoms".into()));
        }
        let mut total = 0.0;
        for &(v, w) in &atoms {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(RiskError::InvalidDistribution(format!(
                    "atom value {v} is not a finite nonnegative real"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(RiskError::InvalidDistribution(format!(
                    "atom weight {w} is not strictly positive"
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(RiskError::InvalidDistribution(format!(
                "weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        let atoms = atoms.into_iter().map(|(v, w)| (v, w / total)).collect();
        Ok(Self { atoms })
    }

    /// Equally weighted atoms from a sample.
    pub fn from_samples(values: &[f64]) -> Result<Self, RiskError> {
        let w = 1.0 / values.len() as f64;
        Self::new(values.iter().map(|&v| (v, w)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Smallest atom value.
    pub fn min_value(&self) -> f64 {
        self.atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min)
    }

    /// `E[f(X)]`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(v, w)| w * f(v)).sum()
    }

    /// Shifts every atom by `m` (a deterministic cash addition).
    pub fn shifted(&self, m: f64) -> Result<Self, RiskError> {
        Self::new(self.atoms.iter().map(|&(v, w)| (v + m, w)).collect())
    }

    /// Writes the `value,weight` CSV representation.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "value,weight")?;
        for &(v, w) in &self.atoms {
            writeln!(out, "{v},{w}")?;
        }
        Ok(())
    }

    /// Parses the `value,weight` CSV representation.
    pub fn read_csv(data: &str) -> Result<Self, RiskError> {
        let mut atoms = Vec::new();
        for (i, line) in data.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if i == 0 {
                if line != "value,weight" {
                    return Err(RiskError::Csv {
                        line: 1,
                        reason: format!("expected header `value,weight`, got `{line}`"),
                    });
                }
                continue;
            }
            let mut parts = line.split(',');
            let mut parse = |what: &str| -> Result<f64, RiskError> {
                parts
                    .next()
                    .ok_or_else(|| RiskError::Csv {
                        line: i + 1,
                        reason: format!("missing {what}"),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| RiskError::Csv {
                        line: i + 1,
                        reason: e.to_string(),
                    })
            };
            let v = parse("value")?;
            let w = parse("weight")?;
            if parts.next().is_some() {
                return Err(RiskError::Csv {
                    line: i + 1,
                    reason: "too many columns".into(),
                });
            }
            atoms.push((v, w));
        }
        Self::new(atoms)
    }
}

/// `L(-v)` with the zero-wealth convention: a zero atom evaluates to the
/// finite limit `L(0-)` when the family has one and errors otherwise.
fn loss_at_wealth(loss: &LossFn, v: f64) -> Result<f64, RiskError> {
    if v > 0.0 {
        Ok(loss.value(-v))
    } else {
        loss.value_at_zero().ok_or(RiskError::LossUndefinedAtZero)
    }
}

/// Expected loss `E[L(-X)]` of a wealth distribution.
pub fn expected_loss(dist: &WealthDistribution, loss: &LossFn) -> Result<f64, RiskError> {
    let mut total = 0.0;
    for &(v, w) in dist.atoms() {
        total += w * loss_at_wealth(loss, v)?;
    }
    Ok(total)
}

/// Utility-based shortfall risk: the infimal cash amount `m` with
/// `E[L(-X - m)] <= x1`.
///
/// The map `m -> E[L(-X - m)]` is strictly decreasing, so the infimum is the
/// root of `E[L(-X - m)] = x1`, found by bracketed bisection. Values beyond
/// the loss domain evaluate to `+inf`, which the sign-based bisection handles
/// transparently. Satisfies `rho(X + rho(X)) = 0` up to solver tolerance.
pub fn shortfall_risk(
    dist: &WealthDistribution,
    loss: &LossFn,
    x1: f64,
) -> Result<f64, RiskError> {
    if !(x1 > 0.0) {
        // both shipped families vanish at -inf, so E[L] > 0 for every m
        return Err(RiskError::Unattainable { x1 });
    }
    // the loss families' natural extension: the exponential evaluates on
    // all of R (which makes the root agree exactly with the entropic form),
    // the reciprocal returns +inf at and beyond zero
    let shifted_loss = |m: f64| -> f64 {
        dist.atoms()
            .iter()
            .map(|&(v, w)| w * loss.value(-(v + m)))
            .sum()
    };
    let cfg = RootConfig {
        abs_tol: 1e-13 * x1.max(1.0),
        rel_tol: 1e-13,
        max_iter: 300,
        bracket_expansion_cap: 200,
    };
    numerics::find_root(|m| shifted_loss(m) - x1, -1.0, 1.0, &cfg).map_err(|e| match e {
        NumericsError::NoBracket(_) => RiskError::Unattainable { x1 },
        other => RiskError::Numerics(other),
    })
}

/// Entropic risk `(1/gamma) (ln E[exp(-gamma X)] - ln x1)`, the shortfall
/// risk of the exponential loss family in closed form. Evaluated through a
/// log-sum-exp to avoid overflow.
pub fn entropic_risk(dist: &WealthDistribution, gamma: f64, x1: f64) -> Result<f64, RiskError> {
    if !(gamma > 0.0) {
        return Err(RiskError::InvalidDistribution(format!(
            "entropic risk requires gamma > 0, got {gamma}"
        )));
    }
    if !(x1 > 0.0) {
        return Err(RiskError::Unattainable { x1 });
    }
    let a_max = dist
        .atoms()
        .iter()
        .map(|&(v, _)| -gamma * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let log_mean = a_max + dist.expect(|v| (-gamma * v - a_max).exp()).ln();
    Ok((log_mean - x1.ln()) / gamma)
}

/// Where the risk budget can sit relative to the attainable loss range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityStatus {
    /// `r_min <= x1 < r_max`: the constraint is active at the optimum.
    Binding,
    /// `x1 >= r_max`: the unconstrained optimum already satisfies it.
    NonBinding,
    /// `x1 < r_min`: no admissible wealth satisfies the constraint.
    Infeasible,
    /// `r_min = r_max` within 1e-10: minimizing loss and maximizing utility
    /// coincide, so the budget cannot be varied.
    Degenerate,
}

/// The attainable expected-loss interval for a given initial capital,
/// classified against a risk budget `x1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityInterval {
    pub r_min: f64,
    pub r_max: f64,
    pub x1: f64,
    pub status: FeasibilityStatus,
}

impl FeasibilityInterval {
    /// Classifies a budget against computed bounds. Degeneracy of the
    /// interval takes precedence over the budget comparison.
    pub fn classify(r_min: f64, r_max: f64, x1: f64) -> Self {
        let status = if (r_max - r_min).abs() <= 1e-10 {
            FeasibilityStatus::Degenerate
        } else if x1 < r_min {
            FeasibilityStatus::Infeasible
        } else if x1 >= r_max {
            FeasibilityStatus::NonBinding
        } else {
            FeasibilityStatus::Binding
        };
        Self {
            r_min,
            r_max,
            x1,
            status,
        }
    }
}

/// Computes `[r_min, r_max]` for a complete Black-Scholes market and
/// classifies the budget `x1` against it.
///
/// `r_max` is the expected loss of the unconstrained utility maximizer
/// `I(y0 N_T)` with `y0` solving the budget `E[N_T I(y0 N_T)] = x`. `r_min`
/// is the expected loss of the pointwise loss minimizer: `L'(-X_c) = c N_T`
/// where defined, projected to zero wealth in states where `c N_T` exceeds
/// `L'(0-)`, with `c` solving the same budget. The projection is the KKT
/// completion of the first-order condition under the nonnegativity
/// constraint on wealth.
pub fn feasible_interval(
    model: &MarketModel,
    utility: &UtilityFn,
    loss: &LossFn,
    x: f64,
    x1: f64,
    quad_order: usize,
) -> Result<FeasibilityInterval, RiskError> {
    let (r_min, r_max) = loss_bounds(model, utility, loss, x, quad_order)?;
    Ok(FeasibilityInterval::classify(r_min, r_max, x1))
}

/// The `(r_min, r_max)` pair underlying [`feasible_interval`].
pub fn loss_bounds(
    model: &MarketModel,
    utility: &UtilityFn,
    loss: &LossFn,
    x: f64,
    quad_order: usize,
) -> Result<(f64, f64), RiskError> {
    let m = model.remaining_variance(0.0);
    let b = -m.sqrt();
    let a = -0.5 * m;
    let density = move |z: f64| (a + b * z).exp();
    let rule = numerics::gauss_hermite(quad_order)?;
    let cfg = RootConfig {
        abs_tol: 1e-13 * x.max(1.0),
        rel_tol: 1e-14,
        max_iter: 300,
        bracket_expansion_cap: 200,
    };

    // r_max: budget-solve the unconstrained maximizer I(y0 N_T)
    let budget_unconstrained = |y: f64| -> f64 {
        rule.expect(|z| {
            let n = density(z);
            n * utility.inverse_marginal(y * n).unwrap_or(f64::NAN)
        }) - x
    };
    let y0 = numerics::find_root(|s| budget_unconstrained(s.exp()), -5.0, 5.0, &cfg)?.exp();
    let mut r_max = 0.0;
    for (&z, &w) in rule.nodes.iter().zip(rule.weights.iter()) {
        let wealth = utility.inverse_marginal(y0 * density(z))?;
        r_max += w * loss_at_wealth(loss, wealth)?;
    }

    // r_min: pointwise loss minimizer, clipped at zero wealth. The clip
    // boundary c N(z) = L'(0-) is located analytically so the segment rule
    // only sees smooth pieces.
    let min_wealth = |c: f64, z: f64| -> f64 {
        let v = c * density(z);
        match loss.inverse_marginal(v) {
            Some(k) => -k,
            None => 0.0,
        }
    };
    // smallest z with positive wealth (b < 0 makes c * density decreasing in z)
    let z_clip = |c: f64| -> f64 {
        let lprime0 = loss.marginal_at_zero();
        if lprime0.is_infinite() || m == 0.0 {
            f64::NEG_INFINITY
        } else {
            ((lprime0 / c).ln() - a) / b
        }
    };
    let budget_min = |c: f64| -> f64 {
        match numerics::normal_segment_rule(z_clip(c), f64::INFINITY, quad_order) {
            Ok(seg) => seg.expect(|z| density(z) * min_wealth(c, z)) - x,
            Err(_) => f64::NAN,
        }
    };
    let c = numerics::find_root(|s| budget_min(s.exp()), -5.0, 5.0, &cfg)?.exp();
    let zc = z_clip(c);
    let seg = numerics::normal_segment_rule(zc, f64::INFINITY, quad_order)?;
    let mut r_min = seg.expect(|z| loss.value(-min_wealth(c, z)));
    if zc.is_finite() {
        let clipped_mass = crate::bsmarket::normal_cdf(zc);
        if clipped_mass > 0.0 {
            let l0 = loss.value_at_zero().ok_or(RiskError::LossUndefinedAtZero)?;
            r_min += l0 * clipped_mass;
        }
    }

    Ok((r_min, r_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn exp_loss() -> LossFn {
        LossFn::exponential(1.0).unwrap()
    }

    fn rec_loss() -> LossFn {
        LossFn::scaled_reciprocal(3.0).unwrap()
    }

    fn constant(v: f64) -> WealthDistribution {
        WealthDistribution::new(vec![(v, 1.0)]).unwrap()
    }

    #[test]
    fn distribution_validation() {
        assert!(WealthDistribution::new(vec![]).is_err());
        assert!(WealthDistribution::new(vec![(-1.0, 1.0)]).is_err());
        assert!(WealthDistribution::new(vec![(1.0, 0.0)]).is_err());
        assert!(WealthDistribution::new(vec![(1.0, 0.5), (2.0, 0.6)]).is_err());
        assert!(WealthDistribution::new(vec![(1.0, 0.5), (2.0, 0.5)]).is_ok());
    }

    #[test]
    fn expected_loss_examples() {
        let d = constant(1.0);
        assert_relative_eq!(
            expected_loss(&d, &exp_loss()).unwrap(),
            (-1.0_f64).exp(),
            epsilon = 1e-12
        );
        assert_relative_eq!(expected_loss(&d, &rec_loss()).unwrap(), 3.0, epsilon = 1e-12);

        let d = WealthDistribution::new(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let expected = 0.5 * ((-1.0_f64).exp() + (-2.0_f64).exp());
        assert_relative_eq!(
            expected_loss(&d, &exp_loss()).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert!((expected - 0.251607).abs() < 1e-6);
    }

    #[test]
    fn expected_loss_zero_atom_conventions() {
        let d = WealthDistribution::new(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        // exponential: L(0-) = 1 is finite
        let got = expected_loss(&d, &exp_loss()).unwrap();
        assert_relative_eq!(got, 0.5 * (1.0 + (-1.0_f64).exp()), epsilon = 1e-12);
        // reciprocal: domain error
        assert!(matches!(
            expected_loss(&d, &rec_loss()),
            Err(RiskError::LossUndefinedAtZero)
        ));
    }

    #[test]
    fn shortfall_risk_examples() {
        let d = constant(0.0);
        let rho = shortfall_risk(&d, &exp_loss(), 1.0).unwrap();
        assert!(rho.abs() < 1e-10);

        let d = constant(1.0);
        let rho = shortfall_risk(&d, &exp_loss(), 1.0).unwrap();
        assert_relative_eq!(rho, -1.0, epsilon = 1e-10);

        let d = WealthDistribution::new(vec![(0.0, 0.5), (4.0_f64.ln(), 0.5)]).unwrap();
        let rho = shortfall_risk(&d, &exp_loss(), 1.0).unwrap();
        assert_relative_eq!(rho, (5.0_f64 / 8.0).ln(), epsilon = 1e-9);
        assert!((rho + 0.470004).abs() < 1e-6);
    }

    #[test]
    fn shortfall_risk_reciprocal_loss_respects_domain() {
        // root must stay above -min(X); check rho(X + rho(X)) = 0
        let d = WealthDistribution::new(vec![(0.5, 0.5), (3.0, 0.5)]).unwrap();
        let rho = shortfall_risk(&d, &rec_loss(), 2.0).unwrap();
        assert!(rho > -0.5);
        let shifted = d.shifted(rho).unwrap();
        let rho2 = shortfall_risk(&shifted, &rec_loss(), 2.0).unwrap();
        assert!(rho2.abs() < 1e-9);
    }

    #[test]
    fn entropic_risk_examples() {
        for c in [0.0, 0.7, 3.0] {
            let d = constant(c);
            for gamma in [0.5, 1.0, 4.0] {
                assert_relative_eq!(
                    entropic_risk(&d, gamma, 1.0).unwrap(),
                    -c,
                    epsilon = 1e-12
                );
            }
        }
        let d = WealthDistribution::new(vec![(0.0, 0.5), (4.0_f64.ln(), 0.5)]).unwrap();
        assert_relative_eq!(
            entropic_risk(&d, 1.0, 1.0).unwrap(),
            (5.0_f64 / 8.0).ln(),
            epsilon = 1e-12
        );
        let d = constant(0.0);
        assert_relative_eq!(
            entropic_risk(&d, 2.0, std::f64::consts::E.powi(2)).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropic_risk_guards_overflow() {
        let d = WealthDistribution::new(vec![(0.0, 0.5), (1000.0, 0.5)]).unwrap();
        let r = entropic_risk(&d, 5.0, 1.0).unwrap();
        assert!(r.is_finite());
        // dominated by the worst atom: E[e^{-5X}] ~ 0.5
        assert_relative_eq!(r, 0.5_f64.ln() / 5.0, max_relative = 1e-9);
    }

    fn random_distribution(rng: &mut impl Rng, n: usize) -> WealthDistribution {
        let mut total = 0.0;
        let raw: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let v = rng.random_range(0.2..5.0);
                let w = rng.random_range(0.1..1.0);
                total += w;
                (v, w)
            })
            .collect();
        let atoms = raw.into_iter().map(|(v, w)| (v, w / total)).collect();
        WealthDistribution::new(atoms).unwrap()
    }

    #[test]
    fn risk_measure_axioms_hold_on_random_distributions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for loss in [exp_loss(), rec_loss()] {
            for _ in 0..50 {
                let d = random_distribution(&mut rng, 6);
                let x1 = rng.random_range(0.5..2.0);
                let rho = shortfall_risk(&d, &loss, x1).unwrap();

                // translation invariance
                let m = rng.random_range(-0.1..0.5);
                let rho_shift = shortfall_risk(&d.shifted(m).unwrap(), &loss, x1).unwrap();
                assert!((rho_shift - (rho - m)).abs() < 1e-9);

                // monotonicity: adding a nonnegative amount cannot raise risk
                let bump: Vec<(f64, f64)> = d
                    .atoms()
                    .iter()
                    .map(|&(v, w)| (v + rng.random_range(0.0..1.0), w))
                    .collect();
                let d2 = WealthDistribution::new(bump).unwrap();
                let rho2 = shortfall_risk(&d2, &loss, x1).unwrap();
                assert!(rho2 <= rho + 1e-9);

                // convexity on a common atom support: a second payoff
                // profile over the same states and weights
                let d3 = WealthDistribution::new(
                    d.atoms()
                        .iter()
                        .map(|&(_, w)| (rng.random_range(0.2..5.0), w))
                        .collect(),
                )
                .unwrap();
                let mix: Vec<(f64, f64)> = d
                    .atoms()
                    .iter()
                    .zip(d3.atoms().iter())
                    .map(|(&(v1, w), &(v2, _))| (0.5 * v1 + 0.5 * v2, w))
                    .collect();
                let dm = WealthDistribution::new(mix).unwrap();
                let rho3 = shortfall_risk(&d3, &loss, x1).unwrap();
                let rho_mix = shortfall_risk(&dm, &loss, x1).unwrap();
                assert!(rho_mix <= 0.5 * rho + 0.5 * rho3 + 1e-9);
            }
        }
    }

    #[test]
    fn shortfall_sign_iff_expected_loss_within_budget() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let d = random_distribution(&mut rng, 5);
            let x1 = rng.random_range(0.2..3.0);
            for loss in [exp_loss(), rec_loss()] {
                let rho = shortfall_risk(&d, &loss, x1).unwrap();
                let el = expected_loss(&d, &loss).unwrap();
                if rho <= -1e-12 {
                    assert!(el <= x1 + 1e-9);
                }
                if el <= x1 - 1e-12 {
                    assert!(rho <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn entropic_matches_generic_shortfall() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let d = random_distribution(&mut rng, 8);
            let gamma = rng.random_range(0.3..3.0);
            let x1 = rng.random_range(0.3..2.0);
            let loss = LossFn::exponential(gamma).unwrap();
            let a = shortfall_risk(&d, &loss, x1).unwrap();
            let b = entropic_risk(&d, gamma, x1).unwrap();
            assert!((a - b).abs() < 1e-9, "shortfall {a} vs entropic {b}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let d = WealthDistribution::new(vec![(0.5, 0.25), (1.0, 0.25), (2.5, 0.5)]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let parsed = WealthDistribution::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(parsed, d);
        assert!(WealthDistribution::read_csv("nope\n1,2\n").is_err());
        assert!(WealthDistribution::read_csv("value,weight\n1,0.5,9\n").is_err());
    }

    #[test]
    fn classify_statuses() {
        use FeasibilityStatus::*;
        assert_eq!(FeasibilityInterval::classify(1.0, 2.0, 1.5).status, Binding);
        assert_eq!(
            FeasibilityInterval::classify(1.0, 2.0, 2.0).status,
            NonBinding
        );
        assert_eq!(
            FeasibilityInterval::classify(1.0, 2.0, 0.5).status,
            Infeasible
        );
        assert_eq!(
            FeasibilityInterval::classify(1.0, 1.0, 0.5).status,
            Degenerate
        );
    }
}
