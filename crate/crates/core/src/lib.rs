//! Large deviations for Gibbs measures of contractive iterated function
//! systems on `[0, 1]`, computed from both the finite-temperature side
//! (transfer operators) and the zero-temperature side (max-plus algebra).

pub mod ifs;
pub mod thermo;
pub mod tropical;
pub mod ldp;
pub mod config;
pub mod output;
pub mod cli;
