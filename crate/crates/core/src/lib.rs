//! Φ-entropies, Φ-Sobolev inequalities and their numerical verification.

pub mod error;
pub mod field;
pub mod functionals;
pub mod interval;
pub mod maxent;
pub mod measure;
pub mod numeric;
pub mod phi;
pub mod concentration;
pub mod report;
pub mod semigroup;
pub mod verify;

pub use error::{Error, Result};
pub use field::{ScalarField, VectorMap};
pub use interval::Interval;
pub use measure::{ExpectationPlan, Measure, Nodes};
