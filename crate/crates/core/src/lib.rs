//! Dataset condensation by matching quadratic Bezier surrogates of SGD
//! trajectories.
//!
//! The crate is `no_std` (with `alloc`) and purely numerical: dense ReLU
//! networks with hand-written first and second-order reverse passes, expert
//! training, surrogate fitting, the condensation loop, evaluation metrics and
//! numerical checks of the surrogate guarantees. File formats and the command
//! line live in the `btm` crate.
//!
//! ```
//! use btm_core::bezier::{path_curvature, BezierPath};
//! use btm_core::ParamVector;
//!
//! let a = ParamVector(vec![0.0, 0.0]);
//! let b = ParamVector(vec![2.0, 0.0]);
//! let path = BezierPath::linear(a, b).unwrap();
//! assert_eq!(path_curvature(&path), 0.0);
//! assert_eq!(path.at(0.5).unwrap().0, vec![1.0, 0.0]);
//! ```

#![no_std]

extern crate alloc;

pub mod bezier;
pub mod condense;
pub mod cost;
pub mod data;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod metrics;
pub mod net;
pub mod objective;
pub mod quadrature;
pub mod rng;
pub mod theory;
pub mod train;
pub mod trajectory;
pub mod vector;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use net::{Batch, MlpSpec, ParamVector};
