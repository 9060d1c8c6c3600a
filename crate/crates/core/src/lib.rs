//! Box-Cox elliptical and truncated elliptical distributions.
//!
//! The crate covers density generating functions ([`dgf`]), truncated
//! elliptical laws on rectangles and their Gibbs sampler ([`truncated`]),
//! the extended Box-Cox transformation ([`boxcox`]), the Box-Cox elliptical
//! family with its marginals, conditionals, quantiles and moments ([`bce`]),
//! maximum-likelihood fitting ([`mle`]) and a parameter-recovery study
//! harness ([`simstudy`]).

pub mod bce;
pub mod boxcox;
pub mod dgf;
pub mod error;
pub mod integrate;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod mle;
pub mod qmc;
pub mod quadrature;
pub mod simstudy;
pub mod special;
pub mod truncated;

pub use error::{Error, Result};
