// `!(x > 0.0)` is used throughout to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod backtest;
pub mod checkpoint;
pub mod features;
pub mod graph_conv;
pub mod market_data;
pub mod portfolio;
pub mod tensor;
