//! Learning a CMRF from data: empirical moments, truncated and cut-off beliefs,
//! the resulting energy, and recovery of the energy coefficients.

mod coefficients;
mod io;
mod model;
mod moments;

pub use coefficients::{
    bethe_free_energy, neg_entropies, recover_coefficients, recover_coefficients_to_order,
    CoefficientSet,
};
pub use io::{load_model, model_to_string, parse_model, save_model};
pub use model::{fit, LearnedModel, DEFAULT_EPSILON};
pub use moments::{compute_moments, MomentSet};
