//! Gate-level simulation of unmasked and Boolean-masked binarized neural
//! network accelerators, with synthetic power traces and the statistics
//! used to evaluate them.

pub mod adders;
pub mod analysis;
pub mod bnn;
pub mod leakage;
pub mod masked_gates;
pub mod netlist;
pub mod prng;
