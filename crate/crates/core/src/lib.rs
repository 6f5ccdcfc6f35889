#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.
pub mod distributions;
pub mod error;
pub mod measures;
pub mod model;
pub mod oracles;
pub mod quadrature;
pub mod special;
