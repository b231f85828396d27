//! Data generators for the viscous Burgers and multiscale elliptic
//! benchmarks, sensor sampling, and the dataset file format.

pub mod burgers;
pub mod dataset;
pub mod elliptic;
pub mod sensors;
pub mod streams;

pub use burgers::{burgers_initial_condition, burgers_solve, BurgersConfig, BurgersSolver};
pub use dataset::{build_dataset, Dataset, DatasetMeta, ProblemConfig, Split, TestSet, TrainSet};
pub use elliptic::{elliptic_permeability, elliptic_solve, elliptic_source, EllipticConfig, GridSolution};
pub use sensors::{sample_sensors, SamplingMode, SensorLayout, SensorSampler};
pub use streams::{stream, Purpose};
