pub mod design;
pub mod epidemics;
pub mod graph;
pub mod linalg;
pub mod netgen;
pub mod obsv;
pub mod placement;
pub mod powergrid;
pub mod rng;
pub mod scenario;
pub mod sim;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
