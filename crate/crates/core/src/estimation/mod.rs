//! Snapshot pairs, operator estimators, and their spectral decompositions.

pub mod dataset;
pub mod eigen;
pub mod fit;

pub use dataset::{
    parse_trajectory_csv, read_trajectory_csv, windowed_pairs, write_trajectory_csv, Trajectory,
    TrajectoryDataset, WindowLayout,
};
pub use eigen::{eigendecompose, generator_eigenvalues, EigenSystem};
pub use fit::{
    explicit_krr_linear, explicit_rrr_linear, fit_krr, fit_krr_with, fit_rrr, fit_rrr_with, EstimatedOperator,
    Estimator, FactorBlock, Solver,
};
