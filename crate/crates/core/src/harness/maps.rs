//! Fine ambiguity maps for every pulse/window pair.

use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::otfs::{modulate, pilot_grid, FrameConfig, PulseTrain, SampleGrid};
use crate::receiver::{fine_ambiguity, AmbiguitySurface};
use crate::waveforms::{PulseShape, WindowExtent, WindowShape, IDEAL_WINDOW_PERIODS};

/// Points per axis of an exported map.
pub const MAP_POINTS: usize = 101;
/// Half-extent of a map in units of `T_s` (delay) and `1 / T_B` (Doppler).
pub const MAP_HALF_EXTENT: f64 = 5.0;

/// The six pulse/window pairs, roll-offs set to `beta`.
pub fn map_combinations(beta: f64) -> Vec<(PulseShape, WindowShape)> {
    let pulses = [PulseShape::Rect, PulseShape::Sinc, PulseShape::Rrc { beta }];
    let windows = [WindowShape::Rect, WindowShape::Rrc { beta }];
    pulses.iter().flat_map(|p| windows.iter().map(move |w| (*p, *w))).collect()
}

/// Fine ambiguity of the pilot waveform over `+-5 T_s` and `+-5 / T_B`.
///
/// The RRC window keeps [`IDEAL_WINDOW_PERIODS`] periods so the map shows
/// the window's own shape rather than its truncation; the PRI is widened to
/// hold it.
pub fn ambiguity_map(frame: &FrameConfig, pulse: PulseShape, window: WindowShape) -> Result<AmbiguitySurface> {
    let mut cfg = FrameConfig { pulse, window, window_extent: WindowExtent::Periods(IDEAL_WINDOW_PERIODS), ..*frame };
    cfg.u = cfg.u.max(cfg.window_len().div_ceil(cfg.nm()) + 1);
    cfg.validate()?;
    let x = modulate(&pilot_grid(cfg.n, cfg.m)?, &cfg)?;
    let train = PulseTrain::new(x, &cfg);
    let pad = cfg.pulse_support().ceil() as i64 + 1;
    let grid = SampleGrid::slots(&cfg, -pad, train.coeffs.len() + 2 * pad as usize);
    fine_ambiguity(&train, grid, MAP_HALF_EXTENT * cfg.ts, MAP_HALF_EXTENT / cfg.block_duration(), MAP_POINTS)
}

/// `|A(0, nu)|` for `nu >= 0`, starting at the origin.
pub fn doppler_cut(surface: &AmbiguitySurface) -> Vec<f64> {
    let half = (surface.rows / 2) as i64;
    (0..=half).filter_map(|k| surface.magnitude(k, 0)).collect()
}

/// Interior local maxima of `values`: points exceeding both neighbours by
/// more than `floor` times the largest value.
pub fn count_local_maxima(values: &[f64], floor: f64) -> usize {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(*v));
    let margin = floor * peak;
    values.windows(3).filter(|w| w[1] > w[0] + margin && w[1] > w[2] + margin).count()
}

/// Relative floor used when counting maxima of a cut.
pub const LOCAL_MAX_FLOOR: f64 = 1e-6;

/// One exported map.
#[derive(Debug, Clone)]
pub struct MapRecord {
    pub pulse: PulseShape,
    pub window: WindowShape,
    pub path: PathBuf,
    pub surface: AmbiguitySurface,
}

pub fn map_file_name(pulse: PulseShape, window: WindowShape) -> String {
    format!("ambiguity_{}_{}.csv", pulse.name(), window.name())
}

/// Computes and writes all six maps into `dir`.
pub fn export_ambiguity_maps(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<MapRecord>> {
    map_combinations(cfg.window_beta)
        .into_iter()
        .map(|(pulse, window)| {
            let surface = ambiguity_map(&cfg.frame, pulse, window)?;
            let path = dir.join(map_file_name(pulse, window));
            surface.write(&path, "fine_ambiguity")?;
            Ok(MapRecord { pulse, window, path, surface })
        })
        .collect()
}
