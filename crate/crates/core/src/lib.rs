//! Robust wage-policy design under career concerns.
//!
//! An employer pays a success-contingent wage to a worker whose project
//! outcome also feeds a labor market's re-evaluation of his ability. Market
//! expectations and work incentives are interdependent, so one contract can
//! induce multiple equilibria. This crate computes the incentive objects of
//! that model (career values, benchmark wages, strategic-uncertainty
//! diagnostics), constructs the robustly optimal wage distributions for both
//! uninformed and privately informed workers, and verifies every solver
//! output against an independent brute-force equilibrium-enumeration oracle.

pub mod comparative;
pub mod envgen;
pub mod environment;
pub mod informed;
pub mod numeric;
pub mod oracle;
pub mod policy;
pub mod uninformed;

pub use environment::{
    CareerValueFn, Complementarity, ComplementarityReport, EffectiveCost, EnvError, Environment,
    EnvironmentSpec, InfoMode, Posteriors, ValueFn,
};
pub use informed::{AssumptionReport, InformedSolution};
pub use oracle::{Classification, EquilibriumRecord, OracleConfig, Verdict};
pub use policy::{PolicyError, TailWagePolicy, WagePolicy};
pub use uninformed::UninformedSolution;
