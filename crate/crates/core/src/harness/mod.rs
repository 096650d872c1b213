//! Experiment driver: configuration files, Monte Carlo RMSE tables, the
//! fractional Doppler sweep, fine ambiguity maps and single-scene estimation.
//! Every output is a pure function of the configuration and seed.

mod config;
mod maps;
mod montecarlo;
mod scene;
mod selftest;

pub use config::{parse_config, parse_config_str, parse_scene, parse_scene_str, ExperimentConfig, InputMode};
pub use maps::{
    ambiguity_map, count_local_maxima, doppler_cut, export_ambiguity_maps, map_combinations, map_file_name, MapRecord,
    LOCAL_MAX_FLOOR, MAP_HALF_EXTENT, MAP_POINTS,
};
pub use montecarlo::{
    bin_ranges, draw_scene, run_montecarlo, sweep_csv, sweep_eps_f, sweep_grid, trial_rng, write_sweep, DrawnPath,
    EstimateRecord, MonteCarloResult, RmseRow, SweepRow, SCENE_RETRIES,
};
pub use scene::{estimate_scene, physical, SceneEstimate};
pub use selftest::{run_selftest, Check};
