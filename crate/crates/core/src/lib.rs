pub mod cli;
pub mod density;
pub mod engine;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod io;
pub mod kernel;
pub mod model;
pub mod rost;
pub mod rng;
pub mod simulator;
pub mod svgp;
