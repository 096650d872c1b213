//! TOML experiment and scene files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelScene, PathParams, MAX_PATHS};
use crate::error::{Error, Result};
use crate::estimator::{InterpolationModel, ModelKind};
use crate::otfs::FrameConfig;
use crate::waveforms::{PulseShape, WindowShape};

/// Where the 2 x 2 blocks fed to the fit come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Blocks generated directly from the separable model.
    Exact,
    /// Blocks read off the cross-ambiguity surface of a simulated echo.
    Pipeline,
}

impl InputMode {
    pub fn name(&self) -> &'static str {
        match self {
            InputMode::Exact => "exact",
            InputMode::Pipeline => "pipeline",
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact_2x2" => Ok(InputMode::Exact),
            "pipeline" | "full_pipeline" => Ok(InputMode::Pipeline),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected exact or pipeline)"))),
        }
    }
}

/// Everything a harness run depends on besides the output location.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub frame: FrameConfig,
    /// Window roll-off used by the RRC interpolation model and the RRC window.
    pub window_beta: f64,
    /// Inclusive range of path counts P.
    pub paths: (usize, usize),
    pub n_sim: usize,
    pub models: Vec<ModelKind>,
    pub mode: InputMode,
    pub seed: u64,
    /// Not part of the recorded metadata: outputs depend only on content.
    #[serde(skip)]
    pub output_dir: PathBuf,
    /// Range of the drawn attenuation magnitudes.
    pub alpha_range: (f64, f64),
    pub cfar_factor: f64,
    pub max_paths: usize,
    /// Noise added to the matched-filter samples in pipeline mode.
    pub noise_sigma: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            frame: FrameConfig::default(),
            window_beta: 0.25,
            paths: (1, 5),
            n_sim: 100,
            models: vec![ModelKind::Linear, ModelKind::RrcAutocorr],
            mode: InputMode::Exact,
            seed: 0,
            output_dir: PathBuf::from("out"),
            alpha_range: (0.5, 1.0),
            cfar_factor: 1.0,
            max_paths: MAX_PATHS,
            noise_sigma: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        let (lo, hi) = self.paths;
        if lo < 1 || lo > hi || hi > MAX_PATHS {
            return Err(Error::Config(format!("path counts must satisfy 1 <= {lo} <= {hi} <= {MAX_PATHS}")));
        }
        if self.n_sim < 1 {
            return Err(Error::Config("n_sim must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        let (a, b) = self.alpha_range;
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return Err(Error::Config(format!("alpha range [{a}, {b}] must be positive and ordered")));
        }
        if !(self.cfar_factor > 0.0 && self.cfar_factor.is_finite()) {
            return Err(Error::Config(format!("cfar_factor must be positive, got {}", self.cfar_factor)));
        }
        if self.max_paths < 1 || self.max_paths > MAX_PATHS {
            return Err(Error::Config(format!("max_paths must be in 1..={MAX_PATHS}, got {}", self.max_paths)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        for kind in &self.models {
            self.model(*kind)?;
        }
        Ok(())
    }

    /// Interpolation model of the given kind for this frame.
    pub fn model(&self, kind: ModelKind) -> Result<InterpolationModel> {
        InterpolationModel::new(kind, self.window_beta, self.frame.pulse)
    }

    /// The model that generates exact blocks: RRC autocorrelation for an RRC
    /// window, the triangle for a rectangular one.
    pub fn truth_model(&self) -> Result<InterpolationModel> {
        match self.frame.window {
            WindowShape::Rrc { beta } => InterpolationModel::rrc(beta, self.frame.pulse),
            WindowShape::Rect => Ok(InterpolationModel::linear(self.frame.pulse)),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n: Option<i64>,
    m: Option<i64>,
    u: Option<i64>,
    os: Option<i64>,
    ts: Option<f64>,
    pulse: Option<String>,
    pulse_beta: Option<f64>,
    pulse_tail: Option<f64>,
    window: Option<String>,
    window_beta: Option<f64>,
    n_sim: Option<i64>,
    paths: Option<[i64; 2]>,
    models: Option<Vec<String>>,
    mode: Option<String>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    alpha_range: Option<[f64; 2]>,
    cfar_factor: Option<f64>,
    max_paths: Option<i64>,
    noise_sigma: Option<f64>,
}

/// 1-based line of the first assignment to `key`, if any.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|line| {
            let line = line.trim_start();
            line.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

struct Diagnostics<'a> {
    text: &'a str,
    origin: &'a Path,
}

impl Diagnostics<'_> {
    fn error(&self, key: &str, message: impl fmt::Display) -> Error {
        let message = match line_of(self.text, key) {
            Some(line) => format!("line {line}: `{key}`: {message}"),
            None => format!("`{key}`: {message}"),
        };
        Error::Parse { path: self.origin.to_path_buf(), message }
    }

    fn count(&self, key: &str, value: Option<i64>, default: usize, min: i64) -> Result<usize> {
        match value {
            None => Ok(default),
            Some(v) if v >= min => Ok(v as usize),
            Some(v) => Err(self.error(key, format!("must be at least {min}, got {v}"))),
        }
    }
}

fn pulse_from(name: &str, beta: f64) -> Option<PulseShape> {
    match name {
        "rect" => Some(PulseShape::Rect),
        "sinc" => Some(PulseShape::Sinc),
        "rrc" => Some(PulseShape::Rrc { beta }),
        _ => None,
    }
}

fn window_from(name: &str, beta: f64) -> Option<WindowShape> {
    match name {
        "rect" => Some(WindowShape::Rect),
        "rrc" => Some(WindowShape::Rrc { beta }),
        _ => None,
    }
}

/// Parses an experiment file. Absent keys take their defaults; unknown keys
/// are rejected.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string().trim_end().to_string() })?;
    let diag = Diagnostics { text, origin };
    let d = ExperimentConfig::default();
    let f = d.frame;

    let window_beta = raw.window_beta.unwrap_or(d.window_beta);
    let pulse_beta = raw.pulse_beta.unwrap_or(0.25);
    let pulse = match raw.pulse.as_deref() {
        None => f.pulse,
        Some(name) => pulse_from(name, pulse_beta)
            .ok_or_else(|| diag.error("pulse", format!("unknown pulse `{name}` (rect, sinc or rrc)")))?,
    };
    pulse.validate().map_err(|e| diag.error("pulse_beta", e))?;
    let window = match raw.window.as_deref() {
        None => WindowShape::Rrc { beta: window_beta },
        Some(name) => window_from(name, window_beta)
            .ok_or_else(|| diag.error("window", format!("unknown window `{name}` (rect or rrc)")))?,
    };
    window.validate().map_err(|e| diag.error("window_beta", e))?;

    let frame = FrameConfig {
        n: diag.count("n", raw.n, f.n, 1)?,
        m: diag.count("m", raw.m, f.m, 1)?,
        u: diag.count("u", raw.u, f.u, 2)?,
        os: diag.count("os", raw.os, f.os, 1)?,
        ts: raw.ts.unwrap_or(f.ts),
        pulse,
        window,
        pulse_tail: raw.pulse_tail.unwrap_or(f.pulse_tail),
        ..f
    };
    frame.validate().map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string() })?;

    let paths = match raw.paths {
        None => d.paths,
        Some([lo, hi]) if lo >= 1 && lo <= hi && hi <= MAX_PATHS as i64 => (lo as usize, hi as usize),
        Some([lo, hi]) => {
            return Err(diag.error("paths", format!("need 1 <= {lo} <= {hi} <= {MAX_PATHS}")));
        }
    };
    let models = match raw.models {
        None => d.models.clone(),
        Some(names) => names
            .iter()
            .map(|n| n.parse::<ModelKind>().map_err(|e| diag.error("models", e)))
            .collect::<Result<Vec<_>>>()?,
    };
    let mode = match raw.mode {
        None => d.mode,
        Some(name) => name.parse().map_err(|e| diag.error("mode", e))?,
    };
    let alpha_range = raw.alpha_range.map_or(d.alpha_range, |[a, b]| (a, b));

    let cfg = ExperimentConfig {
        frame,
        window_beta,
        paths,
        n_sim: diag.count("n_sim", raw.n_sim, d.n_sim, 1)?,
        models,
        mode,
        seed: raw.seed.unwrap_or(d.seed),
        output_dir: raw.output_dir.unwrap_or(d.output_dir),
        alpha_range,
        cfar_factor: raw.cfar_factor.unwrap_or(d.cfar_factor),
        max_paths: diag.count("max_paths", raw.max_paths, d.max_paths, 1)?,
        noise_sigma: raw.noise_sigma.unwrap_or(d.noise_sigma),
    };
    cfg.validate().map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    alpha_re: f64,
    #[serde(default)]
    alpha_im: f64,
    t_d: f64,
    f_d: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    #[serde(default)]
    noise_sigma: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    path: Vec<RawPath>,
}

/// Parses a scene file (`noise_sigma`, `seed` and `[[path]]` tables with
/// `alpha_re`, `alpha_im`, `t_d` in seconds and `f_d` in hertz) and checks it
/// against the frame.
pub fn parse_scene_str(text: &str, origin: &Path, frame: &FrameConfig) -> Result<ChannelScene> {
    let raw: RawScene = toml::from_str(text)
        .map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string().trim_end().to_string() })?;
    let mut scene = ChannelScene::new(
        raw.path.iter().map(|p| PathParams::new(Complex64::new(p.alpha_re, p.alpha_im), p.t_d, p.f_d)).collect(),
    );
    scene.noise_sigma = raw.noise_sigma;
    scene.seed = raw.seed;
    scene.validate(frame).map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
    Ok(scene)
}

pub fn parse_scene(path: &Path, frame: &FrameConfig) -> Result<ChannelScene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene_str(&text, path, frame)
}
