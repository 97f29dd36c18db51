//! Experiment configuration, stored as TOML.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tbeam_core::array::{DesiredLevel, ReceiveArray, SectorSpec, TransmitArray};
use tbeam_core::doa::EspritVariant;
use tbeam_core::RngStream;

use crate::error::{BenchError, BenchResult};

/// A scalar that is either a number or a named keyword.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberOr<T> {
    Value(T),
    Keyword(Keyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Keyword {
    Auto,
    PowerConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiveLayout {
    /// Uniform positions over the aperture, sorted.
    #[default]
    Random,
    /// Half-wavelength uniform linear array.
    Ula,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EspritKind {
    #[default]
    Ls,
    Tls,
}

impl From<EspritKind> for EspritVariant {
    fn from(k: EspritKind) -> Self {
        match k {
            EspritKind::Ls => EspritVariant::LeastSquares,
            EspritKind::Tls => EspritVariant::TotalLeastSquares,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    /// Transmit elements `M`.
    pub elements: usize,
    /// Transmit spacing in wavelengths.
    pub spacing: f64,
    /// Receive elements `N`.
    pub receivers: usize,
    /// Receive aperture in half wavelengths.
    pub receive_aperture: f64,
    pub receive_layout: ReceiveLayout,
    pub geometry_seed: u64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            elements: 10,
            spacing: 0.5,
            receivers: 10,
            receive_aperture: 9.0,
            receive_layout: ReceiveLayout::Random,
            geometry_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectorConfig {
    /// `[lo, hi]` pairs in degrees.
    pub bounds: Vec<[f64; 2]>,
    /// In-sector beampattern level, or `"power-consistent"`.
    pub level: NumberOr<f64>,
    /// Eigenvalue energy fraction for automatic waveform counts.
    pub energy_fraction: f64,
}

impl Default for SectorConfig {
    fn default() -> Self {
        Self {
            bounds: vec![[-10.0, 10.0]],
            level: NumberOr::Keyword(Keyword::PowerConsistent),
            energy_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Even waveform count, or `"auto"`.
    pub waveforms: NumberOr<usize>,
    /// Uniform design grid size over `[-90, 90]`.
    pub grid_points: usize,
    pub sdp_tol: f64,
    pub sdp_max_iters: usize,
    pub candidates: usize,
    /// Add the coherence-optimized rotation of the joint design (K >= 4).
    pub rotation: bool,
    pub rotation_max_iters: usize,
    pub rotation_tol: f64,
    /// Add the sector-by-sector design.
    pub sdd: bool,
    /// Explicit SDD subsectors; default is one per sector or an equal split.
    pub subsectors: Vec<[f64; 2]>,
    /// Add the joint design rotated by a fixed 2x2 unitary matrix
    /// (row-major `re, im` pairs), which unbalances the waveform powers.
    pub unbalancing_rotation: Vec<[f64; 2]>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            waveforms: NumberOr::Keyword(Keyword::Auto),
            grid_points: 181,
            sdp_tol: 1e-8,
            sdp_max_iters: 100,
            candidates: 500,
            rotation: true,
            rotation_max_iters: 500,
            rotation_tol: 1e-10,
            sdd: false,
            subsectors: Vec::new(),
            unbalancing_rotation: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Targets of the RMSE experiment, degrees.
    pub targets: Vec<f64>,
    /// Target pair of the resolution experiment; empty disables it.
    pub resolution_targets: Vec<f64>,
    pub reflection_var: f64,
    pub pulses: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            targets: vec![-5.0, 5.0],
            resolution_targets: Vec::new(),
            reflection_var: 1.0,
            pulses: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub esprit: EspritKind,
    /// Phase-profile sampling step, degrees.
    pub profile_step: f64,
    /// MUSIC scan spacing inside and outside the sectors, degrees.
    pub music_fine: f64,
    pub music_coarse: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            esprit: EspritKind::Ls,
            profile_step: 0.01,
            music_fine: 0.05,
            music_coarse: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Monte-Carlo trials per method and SNR.
    pub trials: usize,
    pub snr_db: Vec<f64>,
    /// Total transmit power `P_t`.
    pub total_power: f64,
    /// Beampattern output spacing, degrees.
    pub beampattern_step: f64,
    pub array: ArrayConfig,
    pub sector: SectorConfig,
    pub design: DesignConfig,
    pub scene: SceneConfig,
    pub estimator: EstimatorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 1,
            trials: 500,
            snr_db: (0..16).map(|i| -10.0 + 2.0 * i as f64).collect(),
            total_power: 10.0,
            beampattern_step: 0.1,
            array: ArrayConfig::default(),
            sector: SectorConfig::default(),
            design: DesignConfig::default(),
            scene: SceneConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

/// The `2x2` unitary matrix of the power-balance example, row-major.
pub const PUBLISHED_U2: [[f64; 2]; 4] =
    [[0.6925, 0.3994], [0.4903, 0.3468], [-0.4755, 0.3669], [0.6753, -0.4279]];

/// Preset names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 4] = ["example1", "example2", "example3", "example4"];

/// In-sector level of the presets: 15 dB on the `4 pi G` scale, i.e. 5 dB
/// above the traditional design at `P_t = 10`.
pub fn preset_level() -> f64 {
    10f64.powf(1.5) / (4.0 * PI)
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> BenchResult<Self> {
        let mut c = Self { name: name.into(), ..Self::default() };
        c.sector.level = NumberOr::Value(preset_level());
        match name {
            "example1" => {
                c.sector.bounds = vec![[-10.0, 10.0]];
                c.scene.targets = vec![-5.0, 5.0];
                c.design.rotation = false;
                c.design.unbalancing_rotation = PUBLISHED_U2.to_vec();
            }
            "example2" => {
                c.sector.bounds = vec![[-40.0, -20.0], [30.0, 50.0]];
                c.scene.targets = vec![-33.0, 41.0];
                c.scene.resolution_targets = vec![38.0, 40.0];
                c.design.sdd = true;
            }
            "example3" => {
                c.sector.bounds = vec![[-10.0, 0.0]];
                c.scene.targets = vec![-7.0, -2.0];
                c.scene.resolution_targets = vec![-3.0, -1.0];
            }
            "example4" => {
                c.sector.bounds = vec![[-15.0, 15.0]];
                c.scene.targets = vec![-12.0, 9.0];
                c.scene.resolution_targets = vec![-3.0, -1.0];
            }
            other => {
                return Err(BenchError::Config(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(c)
    }

    pub fn from_toml(text: &str) -> BenchResult<Self> {
        let c: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> BenchResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> BenchResult<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db must be a non-empty list of finite values".into());
        }
        if !(self.total_power > 0.0) || !self.total_power.is_finite() {
            return bad(format!("total_power must be positive, got {}", self.total_power));
        }
        if !(self.beampattern_step > 0.0) {
            return bad("beampattern_step must be positive".into());
        }
        if self.array.elements < 2 {
            return bad("array.elements must be at least 2".into());
        }
        if self.array.receivers == 0 {
            return bad("array.receivers must be at least 1".into());
        }
        if self.sector.bounds.is_empty() {
            return bad("sector.bounds is empty".into());
        }
        if let NumberOr::Keyword(Keyword::Auto) = self.sector.level {
            return bad("sector.level must be a number or \"power-consistent\"".into());
        }
        match self.design.waveforms {
            NumberOr::Keyword(Keyword::PowerConsistent) => {
                return bad("design.waveforms must be an even number or \"auto\"".into())
            }
            NumberOr::Value(k) if k == 0 || k % 2 != 0 || k > self.array.elements => {
                return bad(format!(
                    "design.waveforms = {k} must be even and in 2..={}",
                    self.array.elements
                ))
            }
            _ => {}
        }
        if self.design.grid_points < 3 || self.design.candidates == 0 {
            return bad("design.grid_points must be >= 3 and design.candidates >= 1".into());
        }
        if !self.design.unbalancing_rotation.is_empty() && self.design.unbalancing_rotation.len() != 4 {
            return bad("design.unbalancing_rotation needs 4 entries (2x2, row-major)".into());
        }
        if self.scene.targets.is_empty() {
            return bad("scene.targets is empty".into());
        }
        if !(self.scene.resolution_targets.is_empty() || self.scene.resolution_targets.len() == 2) {
            return bad("scene.resolution_targets needs exactly two angles (or none)".into());
        }
        if self.scene.pulses == 0 || !(self.scene.reflection_var > 0.0) {
            return bad("scene.pulses and scene.reflection_var must be positive".into());
        }
        let e = &self.estimator;
        if !(e.profile_step > 0.0 && e.music_fine > 0.0 && e.music_coarse > 0.0) {
            return bad("estimator steps must be positive".into());
        }
        self.sector_spec()?;
        self.transmit_array()?;
        Ok(())
    }

    pub fn level(&self) -> DesiredLevel {
        match self.sector.level {
            NumberOr::Value(v) => DesiredLevel::Linear(v),
            NumberOr::Keyword(_) => DesiredLevel::PowerConsistent,
        }
    }

    pub fn sector_spec(&self) -> BenchResult<SectorSpec> {
        let b: Vec<(f64, f64)> = self.sector.bounds.iter().map(|p| (p[0], p[1])).collect();
        SectorSpec::from_bounds(&b, self.level()).map_err(|e| BenchError::Config(format!("sector: {e}")))
    }

    pub fn transmit_array(&self) -> BenchResult<TransmitArray> {
        TransmitArray::new(self.array.elements, self.array.spacing)
            .map_err(|e| BenchError::Config(format!("array: {e}")))
    }

    /// Receive array drawn from the geometry seed.
    pub fn receive_array(&self) -> BenchResult<ReceiveArray> {
        let a = &self.array;
        let r = match a.receive_layout {
            ReceiveLayout::Ula => ReceiveArray::ula(a.receivers),
            ReceiveLayout::Random => {
                ReceiveArray::random(a.receivers, a.receive_aperture, &mut RngStream::new(a.geometry_seed, 0))
            }
        };
        r.map_err(|e| BenchError::Config(format!("receive array: {e}")))
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_toml())
    }
}
