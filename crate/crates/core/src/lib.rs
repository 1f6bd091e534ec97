//! Learning continuous pairwise Markov random fields from data.
//!
//! Beliefs of the Bethe approximation are expanded in an orthonormal basis and
//! truncated at order `K`. The truncated beliefs are closed-form functions of the
//! empirical basis moments, and the learned energy follows from them directly.
//!
//! ```
//! use cmrf::{BasisSystemF64, DatasetF64, Graph, IntervalF64};
//!
//! let iv = IntervalF64::unit();
//! let data = DatasetF64::from_rows(&[vec![0.2, 0.4], vec![0.7, 0.6], vec![0.1, 0.3]], iv).unwrap();
//! let graph = Graph::chain(2).unwrap();
//! let model = cmrf::learn::fit(&data, &graph, &BasisSystemF64::cosine(iv).unwrap(), 2, 1e-4).unwrap();
//! assert_eq!(model.k(), 2);
//! ```

// NaN-rejecting comparisons and index loops over parallel arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod dataset;
pub mod energy;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod infer;
pub mod learn;
pub mod quadrature;
pub mod sample;
pub mod scalar;

pub use basis::{BasisKind, BasisSystem};
pub use dataset::{load_dataset, save_dataset, Dataset, Interval};
pub use energy::{EnergyModel, LocalTerms};
pub use error::{Error, Result};
pub use eval::{Estimate, KldReference, Score};
pub use graph::{Graph, GraphShape};
pub use learn::{CoefficientSet, LearnedModel, MomentSet};
pub use sample::{GenerativeEnergy, SamplerConfig};
pub use scalar::Scalar;

pub type IntervalF64 = Interval<f64>;
pub type IntervalF32 = Interval<f32>;
pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type BasisSystemF64 = BasisSystem<f64>;
pub type BasisSystemF32 = BasisSystem<f32>;
pub type MomentSetF64 = MomentSet<f64>;
pub type MomentSetF32 = MomentSet<f32>;
pub type LearnedModelF64 = LearnedModel<f64>;
pub type LearnedModelF32 = LearnedModel<f32>;
pub type CoefficientSetF64 = CoefficientSet<f64>;
pub type CoefficientSetF32 = CoefficientSet<f32>;
