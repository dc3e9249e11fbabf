//! Finiteness criteria for the uniton number of harmonic maps into U(n).
//!
//! Fields are closed-form where possible and differentiated exactly through
//! truncated Taylor jets ([`jet`]); grid-sampled fields use central differences.

pub mod error;
pub mod jet;
pub mod fields;
pub mod laurent;
pub mod loops;
pub mod linalg;
pub mod window;
pub mod criteria;
pub mod grassmann;
pub mod dbar;
pub mod zoo;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
