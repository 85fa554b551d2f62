//! Truncated rotor density matrices and their Lindblad evolution.
//!
//! Every generator conserves j, so blocks outside the layout are simply
//! absent and truncation is exact for states supported inside it.

mod dissipator;
mod propagate;
mod state;

pub use dissipator::{
    apply_dissipator, build_dissipator, build_dissipator_with_orders, DissipatorInfo, DissipatorSet, Jump, Triplets,
    DISSIPATOR_TOL, MIN_Q_ORDER, MIN_SPHERE_ORDER,
};
pub use propagate::{
    extract_decay_rate, liouvillian_matrix, propagate, propagate_exact, propagate_with, CoherentGenerator, DecayFit,
    PropagationOptions, Trajectory, EXACT_MAX_DIM, HERMITICITY_TOL, MAX_PHASE_PER_STEP, MIN_FIT_SAMPLES,
};
pub use state::{alignment_signal, centrifuge_state, gaussian_coefficients, isotropic_state, BasisLayout, RotorState};
