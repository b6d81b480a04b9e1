//! Forecast verification metrics.

pub mod crps;
pub mod csi;
pub mod levels;
pub mod psd;
pub mod wind;

pub use crps::{crps, Pooling};
pub use csi::{neighborhood_csi, Contingency, CsiResult};
pub use levels::{mae_by_level, LevelStat};
pub use psd::{psd_radial, Spectrum};
pub use wind::{cells_to_ms, read_stations, wind_match, StationObservation, WindMatch, WindRecord};
