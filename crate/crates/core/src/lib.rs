//! Data-driven weak compressibility of i.i.d. sources over the naturals.
//!
//! Distributions and divergences live in [`pmf`], source classes in
//! [`sources`], coding measures in [`codes`], executable lemma checks in
//! [`bounds`], the indicator scheme in [`dwc`], percentile / premium schemes in
//! [`insure`] and experiment orchestration in [`experiment`].

pub mod bounds;
pub mod codes;
pub mod dwc;
pub mod error;
pub mod experiment;
pub mod insure;
pub mod numeric;
pub mod pmf;
pub mod rng;
pub mod sources;

pub use error::{Error, Result};
pub use pmf::{entropy, j_divergence, kl, l1, percentile, tail_mass, ExtReal, Pmf, Symbol};
pub use sources::{SampleStream, SourceSpec};
pub use dwc::{
    phi_step, EmpiricalType, IndicatorState, PhiScheme, Quantization, ReachRule,
};
pub use experiment::{emit, run, ClassTag, ExperimentConfig, ExperimentKind, ExperimentReport, Format};
pub use insure::{premium, PercentileScheme};
