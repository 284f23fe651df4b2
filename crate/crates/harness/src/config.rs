//! Experiment configuration: sectioned TOML overlaid on a named preset.
//!
//! A config file may set `preset = "quick"` (or `"paper"`) at top level and
//! override any key of the sections below. Keys that the preset does not
//! define are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("unknown preset `{0}` (expected quick or paper)")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Omp,
    TurboCs,
    SbiSeparate,
    SbiJoint,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Omp, Method::TurboCs, Method::SbiSeparate, Method::SbiJoint];

    pub fn name(self) -> &'static str {
        match self {
            Method::Omp => "omp",
            Method::TurboCs => "turbo_cs",
            Method::SbiSeparate => "sbi_separate",
            Method::SbiJoint => "sbi_joint",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| ConfigError::Invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementCfg {
    OnGrid,
    OffGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserColumn {
    /// LoS path always present, user echo presence known.
    Known,
    /// User column treated like any grid column.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Side of the square sensing area centered on the origin, meters.
    pub area_side: f64,
    /// Grid resolution `d`, meters.
    pub resolution: f64,
    pub antennas: usize,
    /// Total subcarriers `N`.
    pub subcarriers: usize,
    /// Subcarrier spacing `f0`, Hz.
    pub f0: f64,
    /// Pilot every `pilot_spacing` subcarriers.
    pub pilot_spacing: usize,
    pub bs: [f64; 2],
}

impl SystemSection {
    pub fn bandwidth(&self) -> f64 {
        self.subcarriers as f64 * self.f0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub targets: usize,
    pub scatterers: usize,
    /// Positions shared by a target and a scatterer.
    pub overlap: usize,
    pub placement: PlacementCfg,
    pub min_separation_cells: f64,
    pub user_radar_visible: bool,
    /// Prior mean of the user position.
    pub user_mean: [f64; 2],
    /// Draw the true user position from its prior (else use the mean).
    pub user_from_prior: bool,
    /// Draw the true time offset uniformly within its bound (else zero).
    pub time_offset_from_prior: bool,
    pub gain_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// `sigma_p^2`, square meters.
    pub user_var: f64,
    /// Time-offset bound as a multiple of `1 / B`.
    pub tau_bound_factor: f64,
    pub slab_var: f64,
    pub user_column: UserColumn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub em_max_iters: usize,
    pub em_tol: f64,
    pub detection_threshold: f64,
    pub step_decay: f64,
    /// Initial grid step, meters.
    pub eps_r: f64,
    /// Initial user-position step, meters.
    pub eps_p: f64,
    /// Initial time-offset step as a multiple of `1 / B`.
    pub eps_t_factor: f64,
    pub active_threshold: f64,
    pub collision_cells: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurboSection {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
    /// Overrides `damping` with 1.
    pub undamped: bool,
    pub var_min: f64,
    pub var_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmijoSection {
    pub shrink: f64,
    pub sufficient_increase: f64,
    pub max_backtracks: usize,
    /// Step doublings tried after an outright accepted initial step.
    pub max_expansions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmpSection {
    /// Stop at `K + 1` / `L + 1` atoms using the true counts.
    pub use_true_counts: bool,
    pub residual_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub plots: bool,
    /// Matching gate radius in grid cells.
    pub gate_cells: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub scene: SceneSection,
    pub prior: PriorSection,
    pub solver: SolverSection,
    pub turbo: TurboSection,
    pub armijo: ArmijoSection,
    pub omp: OmpSection,
    pub sweep: SweepSection,
}

fn common(system: SystemSection, scene: SceneSection) -> ExperimentConfig {
    ExperimentConfig {
        system,
        scene,
        prior: PriorSection {
            user_var: 1.0,
            tau_bound_factor: 2.0,
            slab_var: 1.0,
            user_column: UserColumn::Known,
        },
        solver: SolverSection {
            em_max_iters: 30,
            em_tol: 1e-3,
            detection_threshold: 0.5,
            step_decay: 0.8,
            eps_r: 1.0,
            eps_p: 1.0,
            eps_t_factor: 0.1,
            active_threshold: 0.1,
            collision_cells: 0.1,
        },
        turbo: TurboSection {
            max_iters: 100,
            tol: 1e-6,
            damping: 0.5,
            undamped: false,
            var_min: 1e-12,
            var_max: 1e12,
        },
        armijo: ArmijoSection {
            shrink: 0.5,
            sufficient_increase: 1e-4,
            max_backtracks: 20,
            max_expansions: 0,
        },
        omp: OmpSection {
            use_true_counts: true,
            residual_tol: 1e-3,
        },
        sweep: SweepSection {
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            trials: 20,
            seed: 1,
            methods: Method::ALL.to_vec(),
            workers: 0,
            plots: true,
            gate_cells: 2.0,
        },
    }
}

/// 50 x 50 m, `d` = 10 m, 16 antennas, 8 pilots, 3 targets, 4 scatterers.
pub fn quick() -> ExperimentConfig {
    common(
        SystemSection {
            area_side: 50.0,
            resolution: 10.0,
            antennas: 16,
            subcarriers: 512,
            f0: 30e3,
            pilot_spacing: 64,
            bs: [-25.0, 0.0],
        },
        SceneSection {
            targets: 3,
            scatterers: 4,
            overlap: 2,
            placement: PlacementCfg::OffGrid,
            min_separation_cells: 2.0,
            user_radar_visible: true,
            user_mean: [15.0, 5.0],
            user_from_prior: true,
            time_offset_from_prior: true,
            gain_var: 1.0,
        },
    )
}

/// 100 x 100 m, `d` = 5 m, 64 antennas, 1024 subcarriers with a pilot every
/// 32, 9 targets, 10 scatterers.
pub fn paper() -> ExperimentConfig {
    let mut cfg = common(
        SystemSection {
            area_side: 100.0,
            resolution: 5.0,
            antennas: 64,
            subcarriers: 1024,
            f0: 30e3,
            pilot_spacing: 32,
            bs: [-50.0, 0.0],
        },
        SceneSection {
            targets: 9,
            scatterers: 10,
            overlap: 5,
            placement: PlacementCfg::OffGrid,
            min_separation_cells: 2.0,
            user_radar_visible: true,
            user_mean: [40.0, 0.0],
            user_from_prior: true,
            time_offset_from_prior: true,
            gain_var: 1.0,
        },
    );
    cfg.sweep.snr_db = vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
    cfg.sweep.trials = 100;
    cfg
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    match name {
        "quick" => Ok(quick()),
        "paper" => Ok(paper()),
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table, path: &str) -> Result<(), ConfigError> {
    for (key, value) in overlay {
        let full = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        match (base.get_mut(&key), value) {
            (None, _) => return Err(ConfigError::UnknownKey(full)),
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &full)?,
            (Some(toml::Value::Table(_)), _) => {
                return Err(ConfigError::Parse(format!("`{full}` must be a section")));
            }
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

/// Parses config text over a preset. `preset_override` wins over the file's
/// own `preset` key; the default preset is `quick`.
pub fn from_str(text: &str, preset_override: Option<&str>) -> Result<ExperimentConfig, ConfigError> {
    let mut overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let file_preset = match overlay.remove("preset") {
        Some(toml::Value::String(s)) => Some(s),
        Some(_) => return Err(ConfigError::Parse("`preset` must be a string".into())),
        None => None,
    };
    let name = preset_override.map(str::to_string).or(file_preset).unwrap_or_else(|| "quick".into());
    let base = preset(&name)?;
    let mut table = toml::Table::try_from(&base).map_err(|e| ConfigError::Parse(e.to_string()))?;
    merge(&mut table, overlay, "")?;
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: Option<&Path>, preset_override: Option<&str>) -> Result<ExperimentConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    from_str(&text, preset_override)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let s = &self.system;
        if !(s.area_side > 0.0 && s.resolution > 0.0 && s.f0 > 0.0) {
            return bad("area_side, resolution and f0 must be positive");
        }
        if s.antennas == 0 || s.subcarriers == 0 || s.pilot_spacing == 0 || s.pilot_spacing > s.subcarriers {
            return bad("antennas, subcarriers and pilot_spacing must be positive with spacing <= subcarriers");
        }
        let cells = s.area_side / s.resolution;
        if (cells - cells.round()).abs() > 1e-9 {
            return bad("resolution must divide area_side");
        }
        let sc = &self.scene;
        if sc.overlap > sc.targets.min(sc.scatterers) {
            return bad("overlap exceeds min(targets, scatterers)");
        }
        if !(sc.gain_var > 0.0 && sc.min_separation_cells >= 0.0) {
            return bad("gain_var must be positive and min_separation_cells non-negative");
        }
        let half = s.area_side / 2.0;
        if sc.user_mean.iter().any(|v| v.abs() > half) {
            return bad("user_mean outside the area");
        }
        let p = &self.prior;
        if !(p.user_var > 0.0 && p.tau_bound_factor > 0.0 && p.slab_var > 0.0) {
            return bad("prior variances and tau bound must be positive");
        }
        let sw = &self.sweep;
        if sw.snr_db.is_empty() || sw.snr_db.iter().any(|v| !v.is_finite()) {
            return bad("snr_db must be a non-empty list of finite values");
        }
        if sw.trials == 0 || sw.methods.is_empty() || !(sw.gate_cells > 0.0) {
            return bad("trials, methods and gate_cells must be positive / non-empty");
        }
        let o = &self.omp;
        if !(o.residual_tol >= 0.0) {
            return bad("omp residual_tol must be non-negative");
        }
        let core_cfg = crate::scenario::solver_config(self);
        core_cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        quick().validate().unwrap();
        paper().validate().unwrap();
    }

    #[test]
    fn overlay_and_unknown_keys() {
        let cfg = from_str("preset = \"paper\"\n[sweep]\ntrials = 3\nmethods = [\"omp\"]\n", None).unwrap();
        assert_eq!(cfg.system.antennas, 64);
        assert_eq!(cfg.sweep.trials, 3);
        assert_eq!(cfg.sweep.methods, vec![Method::Omp]);
        assert!(matches!(from_str("[sweep]\ntrails = 3\n", None), Err(ConfigError::UnknownKey(k)) if k == "sweep.trails"));
        assert!(matches!(from_str("bogus = 1\n", None), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(from_str("[sweep]\nsnr_db = []\n", None), Err(ConfigError::Invalid(_))));
        assert!(matches!(from_str("", Some("huge")), Err(ConfigError::UnknownPreset(_))));
    }

    #[test]
    fn round_trip() {
        let cfg = quick();
        assert_eq!(from_str(&cfg.to_toml(), None).unwrap(), cfg);
    }
}
