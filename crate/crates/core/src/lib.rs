pub mod error;
pub mod geom;
pub mod world;
pub mod rng;
pub mod sensors;
pub mod command;
pub mod faults;
pub mod scenario;
pub mod kernel;
pub mod safety;
pub mod nominal;
pub mod harness;
