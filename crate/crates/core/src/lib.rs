pub mod aggregation;
pub mod bounds;
pub mod cli;
pub mod faulhaber;
pub mod generator;
pub mod lyapunov;
pub mod model;
pub mod oracle;
pub mod polynomial;
pub mod refinement;
pub mod solver;
