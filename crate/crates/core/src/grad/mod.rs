//! Manual backpropagation and its finite-difference oracle.

pub mod backward;
pub mod check;

pub use backward::{backward, backward_into, cross_entropy};
pub use check::{
    compare_with_finite_differences, default_sweep, finite_diff_check, kink_margin, random_case, relative_error,
    GradCheckCase, GradCheckReport,
};
