pub mod bench;
pub mod config;
pub mod dataset;
pub mod first_stage;
pub mod gradient;
pub mod numeric;
pub mod protocol;
pub mod rdf;
pub mod simulator;
pub mod verify;
