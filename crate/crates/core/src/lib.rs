//! Simulation of single-photon interferometry with a mirror in spatial
//! superposition, under standard quantum mechanics and under
//! spontaneous-collapse dynamics (QMUPL and CSL).

pub mod expm;
pub mod csl;
pub mod experiment;
pub mod fock;
pub mod ito;
pub mod master;
pub mod quad;
pub mod stochastic;
pub mod units;
