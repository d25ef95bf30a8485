//! Data layer: load, scale, split, and window multivariate series; build the
//! explicit sensor graph from distances; corrupt series with point/block
//! missingness; generate synthetic datasets with known dynamics.

mod graph;
mod missing;
mod series;
mod synthetic;
mod window;

pub use graph::{build_adjacency, load_distances, write_distances, ExplicitGraph};
pub use missing::{simulate_block_missing, simulate_point_missing, MissingScheme, MissingnessMask};
pub use series::{
    chronological_split, fit_scaler, load_series, write_series, RawSeries, ScalerStats, Splits,
};
pub use synthetic::{
    community_incidence, distances_from_adjacency, generate_synthetic, ring_adjacency,
    SyntheticSpec, SyntheticTruth,
};
pub use window::{make_windows, Window, WindowedDataset};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} at row {row}, col {col}: {reason}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;
