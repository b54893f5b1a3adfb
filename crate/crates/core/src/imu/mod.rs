//! Internal-model units: canonical realizations of internal-model pairs,
//! the augmentation and immersion robust constructions, and the high-gain
//! error-feedback regulator.

mod augment;
mod companion;
mod immersion;
mod realize;
mod regulator;

pub use augment::{build_augmented_im, AugmentationIM, BasisSource, BASIS_CUTOFF, PROJECTION_TOL};
pub use companion::{build_companion, parse_eigenvalues};
pub use immersion::{find_immersion, immersion_states, solve_immersion, CandidateDiagnostic, ImmersionIM, ImmersionOptions};
pub use realize::{
    realize_explicit, realize_implicit, CanonicalRealization, InternalModelPair, PairForm, RealizeOptions,
    H_TRANSIENT_FACTOR,
};
pub use regulator::{assemble_error_feedback, ErrorFeedbackRegulator};
