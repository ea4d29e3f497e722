//! Conditional average treatment effect (CATE) estimation.
//!
//! The centerpiece is [`causalnet`], a small convolutional network whose
//! [`diverter`] layer routes a shared representation into control and
//! treatment flows gated by the treatment indicator. It is trained on the
//! observed outcome alone, and the effect estimate is the difference of its
//! predictions under treatment and control.
//!
//! Supporting modules:
//!
//! - [`numerics`]: tensors and reverse-mode differentiation built from scratch.
//! - [`baselines`]: adjusted regression (with and without interaction) and S-/T-learners over random forests.
//! - [`datagen`]: seeded simulation of circle images and simple outcome relations.
//! - [`eval`]: CATE mean squared error and scatter exports.
//! - [`harness`]: experiment sweeps, appendix studies and the `causalnet` CLI.

pub mod baselines;
pub mod causalnet;
pub mod datagen;
pub mod diverter;
pub mod error;
pub mod eval;
pub mod harness;
pub mod hexfloat;
pub mod numerics;
pub mod optim;
pub(crate) mod rng;

pub use error::{Error, Result};
