//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Everything is double precision and single-threaded per [`Graph`].
//! Parameters live in a [`ParamStore`]; a forward pass pulls them onto a
//! graph by name, [`Graph::backward`] produces per-node gradients and
//! [`ParamStore::accumulate`] folds the parameter gradients back in so an
//! optimizer can step.
//!
//! ```
//! use bwm_tensor::{Graph, ParamStore, Tensor};
//!
//! let mut store = ParamStore::new();
//! store.insert("x", Tensor::row(&[3.0])).unwrap();
//! let mut g = Graph::new();
//! let x = g.param(&store, "x").unwrap();
//! let y = g.mul(x, x).unwrap();
//! let y = g.sum(y);
//! let grads = g.backward(y).unwrap();
//! store.zero_grad();
//! store.accumulate(&g, &grads);
//! assert_eq!(store.get("x").unwrap().grad().unwrap(), &[6.0]);
//! ```

pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use nn::{AttentionBlock, AttentionConfig, AttentionOutput, Linear};
pub use optim::{Adam, LrSchedule, OptimConfig, Optimizer, OptimizerKind, Sgd};
pub use params::ParamStore;
pub use tensor::{Result, Tensor, TensorError};
