//! Expected-utility maximization under a utility-based shortfall risk
//! constraint.
//!
//! The solver treats the risk constraint `E[L(-X(T))] <= x1` with a Lagrange
//! multiplier: `W_lambda(x) = U(x) - lambda * L(-x)` is again a utility
//! function, so the constrained problem reduces to an unconstrained one whose
//! dual is solved by classical convex-duality machinery. The crate ships
//!
//! * a closed registry of utility and loss families with analytic
//!   derivatives, inverse marginals, Legendre conjugates and asymptotic
//!   elasticity metadata ([`preferences`]),
//! * shortfall and entropic risk measures on finite atom distributions plus
//!   the feasibility interval `[r_min, r_max]` for the risk budget
//!   ([`risk`]),
//! * deterministic root finding, Gauss-Hermite quadrature and the nested
//!   two-multiplier solve ([`numerics`]),
//! * the complete Black-Scholes market: dual solve for `(y, lambda*)`,
//!   terminal wealth distribution, the closed-form wealth process and
//!   explicit hedging strategy for the reciprocal preference pair, and
//!   Monte-Carlo replication ([`bsmarket`]),
//! * a finite-state one-period incomplete market on which the bi-dual
//!   relations are checked exactly ([`discrete`]).

pub mod bsmarket;
pub mod discrete;
pub mod numerics;
pub mod preferences;
pub mod risk;

pub use bsmarket::{DualSolution, MarketModel, PathSet, Truncation};
pub use discrete::DiscreteMarket;
pub use numerics::{QuadratureRule, RootConfig};
pub use preferences::{LagrangianUtility, LossFn, UtilityFn};
pub use risk::{FeasibilityInterval, FeasibilityStatus, WealthDistribution};
