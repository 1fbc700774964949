pub mod dataset;
pub mod eval;
pub mod exec;
pub mod flowinone;
pub mod numcore;
pub mod qc;
pub mod render;
