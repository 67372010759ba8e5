pub mod error;
pub mod field;
pub mod fit;
pub mod force;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod sum;
pub mod flow;
pub mod stability;
pub mod counterexample;
