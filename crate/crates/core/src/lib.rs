#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dichotomy;
pub mod ensemble;
pub mod error;
pub mod ff;
pub mod ft;
pub mod model;
pub mod solution;
