//! Problem files and the `run` / `check` drivers behind the `ros-cert` binary.

pub mod problem;
pub mod run;
