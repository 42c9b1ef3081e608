//! From raw power series and gridded wind fields to model-ready windows.

mod nwp;
mod power;
mod prepare;
mod ramp;
mod split;
mod synth;
mod tabular;
mod time;
mod window;

pub use nwp::{
    interpolate_gfs, select_levels_by_correlation, wind_speed, NwpCube, NwpSource, NwpSourceSpec, SpeedGrid,
};
pub use power::{fill_short_gaps, minmax_fit_transform, MinMax, PowerSeries, Segment};
pub use prepare::{prepare_farm, FarmAnchors, PrepConfig, PreparedFarm};
pub use ramp::{class_weights, ramp_labels};
pub use split::{split_train_val_test, Split, SplitSpec};
pub use synth::{generate_synthetic_farm, SynthConfig, SyntheticFarm};
pub use tabular::{tabular_features, tabular_step, TabularLayout};
pub use time::{cyclic_time_features, Hour};
pub use window::{concat_farms_global, window_samples, Batch, FarmFrames, GridShape, SampleRef, WindowedDataset};

/// Forecast horizon in hours.
pub const HORIZON: usize = 24;
/// Hours of past power fed to the encoder.
pub const LOOKBACK: usize = 48;
/// Number of farms in the bundled experiments.
pub const FARMS: usize = 7;
/// Width of the cyclic time feature block.
pub const TIME_FEATURES: usize = 4;
