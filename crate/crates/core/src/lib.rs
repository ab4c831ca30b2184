pub mod basis;
pub mod error;
pub mod coxcore;
pub mod survdata;
pub mod solver;
pub mod simulate;
pub mod report;
pub mod tuning;
pub mod inference;
pub mod cli;
