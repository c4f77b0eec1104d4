//! Exact symbolic engine for Wick-type Fedosov connections on model Kahler
//! charts: star products and flat sections of the Weyl bundle, quantizable
//! functions classified by anti-holomorphic degree, and their realization as
//! holomorphic differential operators through the Bargmann-Fock module.
//!
//! All arithmetic is exact over Gaussian rationals; every identity asserted
//! by the engine is a polynomial identity checked to literal zero.

pub mod check;
pub mod error;
pub mod expr;
pub mod fedosov;
pub mod flatsect;
pub mod fock;
pub mod geometry;
pub mod hpoly;
pub mod moment;
pub mod poly;
pub mod ratfn;
pub mod scalar;
pub mod weyl;

pub use error::{Error, Result};
pub use fedosov::{AlphaSpec, FedosovData};
pub use flatsect::{FlatSection, QuantizabilityReport};
pub use geometry::{ChartGeometry, GeometryPreset};
pub use hpoly::HPoly;
pub use ratfn::RationalFn;
pub use scalar::Scalar;
pub use weyl::{HbarMode, TermIndex, Trunc, WeylSection};

/// JSON schema tag stamped on every serialized artifact.
pub const SCHEMA: &str = "fedwick/1";
