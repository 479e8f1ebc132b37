//! Symbolic exterior calculus for foliations, unimodular Poisson structures
//! and Dirac reduction, with seeded numerical verification.

pub mod cli;
pub mod dirac;
pub mod error;
pub mod expr;
pub mod exterior;
pub mod foliation;
pub mod matrix;
pub mod poisson;
pub mod verify;

pub use error::{Error, Result};
pub use expr::{parse_scalar, CoordinateSystem, ScalarExpr};
pub use exterior::{Form, Multivector, VolumeForm};
pub use verify::{CheckResult, SampleBox, Sampler, SamplingConfig, Status};
