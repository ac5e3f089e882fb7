//! Derivative engines and covariant tensor calculus.

mod dual;
mod engine;
mod tensor;

pub use dual::{gradient, Dual, Real};
pub use engine::{
    ad_partials, ad_value_and_partials, CoordFn, DerivEngine, DEFAULT_FD2_STEP, DEFAULT_FD4_STEP,
};
pub use tensor::{
    apply_connection, contract, covariant_derivative, covariant_derivative_at, divergence,
    divergence_at, lower_index, raise_index, Slot, Tensor, TensorField, Variance, MAX_RANK,
};
