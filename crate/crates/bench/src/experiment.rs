//! Method designs and the Monte-Carlo loop.

use std::cell::OnceCell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tbeam_core::array::{
    beampattern_at, select_waveform_count, waveform_beampatterns, AngularGrid, ReceiveArray, Sector, SectorSpec,
    TransmitArray,
};
use tbeam_core::design::sdp::IpmSettings;
use tbeam_core::design::{design_joint, design_sdd, row_powers, BeamspaceMatrix, DesignSettings};
use tbeam_core::doa::{
    estimate_esprit_paired, estimate_esprit_shift, resolved, scan_grid, squared_error, EspritVariant,
    MusicSpectrum, MusicSubspace, PhaseProfile,
};
use tbeam_core::rotation::{apply_rotation, optimize_rotation, rotate_columns, RotationProblem, UnitaryMatrix};
use tbeam_core::sim::{simulate, virtual_steering, SnapshotSet, TargetScene};
use tbeam_core::{c64, CMatrix, CVector, RngStream};

use crate::config::{ExperimentConfig, NumberOr};
use crate::error::{BenchError, BenchResult};

/// `W = sqrt(P_t / M) I_M`: one waveform per antenna, flat beampattern.
pub fn traditional_mimo(elements: usize, p_t: f64) -> CMatrix {
    CMatrix::identity(elements, elements).scale((p_t / elements as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// ESPRIT between the two accumulated beam groups.
    Paired,
    /// ESPRIT between shifted waveform blocks.
    Shift,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MethodSummary {
    pub name: String,
    pub waveforms: usize,
    pub estimator: Estimator,
    /// Relaxation optimum (designed methods only).
    pub relaxed_delta: Option<f64>,
    /// Min-max fit on the design grid (designed methods only).
    pub objective: Option<f64>,
    /// Largest relative deviation of a row power from `P_t / M`.
    pub row_power_error: f64,
    /// `||w_k||^2` per waveform.
    pub waveform_powers: Vec<f64>,
    /// Coherence objective before and after optimization (rotated method).
    pub rotation_objective: Option<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct MethodDesign {
    pub summary: MethodSummary,
    pub matrix: CMatrix,
    pub profile: PhaseProfile,
}

impl MethodDesign {
    pub fn name(&self) -> &str {
        &self.summary.name
    }

    fn new(
        name: &str,
        matrix: CMatrix,
        estimator: Estimator,
        profile: PhaseProfile,
        p_t: f64,
    ) -> Self {
        let m = matrix.nrows() as f64;
        let row_power_error = row_powers(&matrix)
            .iter()
            .map(|p| (p - p_t / m).abs() / (p_t / m))
            .fold(0.0, f64::max);
        let waveform_powers = matrix.column_iter().map(|c| c.norm_squared()).collect();
        Self {
            summary: MethodSummary {
                name: name.into(),
                waveforms: matrix.ncols(),
                estimator,
                relaxed_delta: None,
                objective: None,
                row_power_error,
                waveform_powers,
                rotation_objective: None,
            },
            matrix,
            profile,
        }
    }
}

/// Everything fixed per experiment: arrays, sectors and the designs.
#[derive(Debug, Clone)]
pub struct Setup {
    pub tx: TransmitArray,
    pub rx: ReceiveArray,
    pub spec: SectorSpec,
    pub waveforms: usize,
    pub methods: Vec<MethodDesign>,
}

pub fn design_settings(cfg: &ExperimentConfig) -> BenchResult<DesignSettings> {
    let grid = AngularGrid::uniform(cfg.design.grid_points).map_err(|e| BenchError::core("design grid", e))?;
    Ok(DesignSettings {
        grid,
        ipm: IpmSettings { tol: cfg.design.sdp_tol, max_iters: cfg.design.sdp_max_iters, ..IpmSettings::default() },
        candidates: cfg.design.candidates,
    })
}

/// Waveform count from the config, resolving `"auto"`.
pub fn waveform_count(cfg: &ExperimentConfig) -> BenchResult<usize> {
    match cfg.design.waveforms {
        NumberOr::Value(k) => Ok(k),
        NumberOr::Keyword(_) => select_waveform_count(&cfg.sector_spec()?, &cfg.transmit_array()?, cfg.sector.energy_fraction)
            .map_err(|e| BenchError::core("waveform selection", e)),
    }
}

const DESIGN_STREAM: u64 = 3 << 56;

fn paired_profile(w: &CMatrix, tx: &TransmitArray, spec: &SectorSpec, step: f64, name: &str) -> BenchResult<PhaseProfile> {
    PhaseProfile::paired(w, tx, spec.sectors(), step).map_err(|e| BenchError::core(format!("{name} phase profile"), e))
}

/// Arrays and method designs. Designs run once, in a fixed order, each from
/// its own stream.
pub fn prepare(cfg: &ExperimentConfig) -> BenchResult<Setup> {
    cfg.validate()?;
    let tx = cfg.transmit_array()?;
    let rx = cfg.receive_array()?;
    let spec = cfg.sector_spec()?;
    let k = waveform_count(cfg)?;
    let p_t = cfg.total_power;
    let step = cfg.estimator.profile_step;
    let settings = design_settings(cfg)?;
    let mut methods = Vec::new();

    let trad = traditional_mimo(tx.elements(), p_t);
    let full = [Sector::new(-90.0, 90.0).expect("valid")];
    let trad_profile =
        PhaseProfile::shift(&trad, &tx, &full, step).map_err(|e| BenchError::core("traditional phase profile", e))?;
    methods.push(MethodDesign::new("traditional", trad, Estimator::Shift, trad_profile, p_t));

    let joint = design_joint(&spec, &tx, k, p_t, &settings, &mut RngStream::new(cfg.seed, DESIGN_STREAM))
        .map_err(|e| BenchError::core("joint design", e))?;
    let jw = joint.matrix.matrix();
    let mut jm = MethodDesign::new("joint", jw.clone(), Estimator::Paired, paired_profile(&jw, &tx, &spec, step, "joint")?, p_t);
    jm.summary.relaxed_delta = Some(joint.relaxed_delta);
    jm.summary.objective = Some(joint.objective);
    methods.push(jm);

    if cfg.design.sdd {
        let subs: Option<Vec<Sector>> = if cfg.design.subsectors.is_empty() {
            None
        } else {
            Some(
                cfg.design
                    .subsectors
                    .iter()
                    .map(|b| Sector::new(b[0], b[1]))
                    .collect::<Result<_, _>>()
                    .map_err(|e| BenchError::Config(format!("design.subsectors: {e}")))?,
            )
        };
        let sdd = design_sdd(&spec, &tx, k, p_t, subs.as_deref(), &settings, &mut RngStream::new(cfg.seed, DESIGN_STREAM | 1))
            .map_err(|e| BenchError::core("SDD design", e))?;
        let w = sdd.matrix.matrix();
        let mut m = MethodDesign::new("sdd", w.clone(), Estimator::Paired, paired_profile(&w, &tx, &spec, step, "sdd")?, p_t);
        m.summary.relaxed_delta = Some(sdd.relaxed_delta);
        m.summary.objective = Some(sdd.objective);
        methods.push(m);
    }

    if cfg.design.rotation && k >= 4 {
        let problem = RotationProblem::build(&joint.matrix, &spec, &tx, &settings.grid)
            .map_err(|e| BenchError::core("rotation", e))?;
        let out = optimize_rotation(&problem, cfg.design.rotation_max_iters, cfg.design.rotation_tol);
        let rotated: BeamspaceMatrix =
            apply_rotation(&joint.matrix, &out.unitary).map_err(|e| BenchError::core("rotation", e))?;
        let w = rotated.matrix();
        let mut m = MethodDesign::new("rotated", w.clone(), Estimator::Paired, paired_profile(&w, &tx, &spec, step, "rotated")?, p_t);
        m.summary.relaxed_delta = Some(joint.relaxed_delta);
        m.summary.objective = Some(joint.objective);
        m.summary.rotation_objective = Some([out.initial_objective, out.objective]);
        methods.push(m);
    }

    if !cfg.design.unbalancing_rotation.is_empty() {
        if k != 2 {
            return Err(BenchError::Config(format!(
                "design.unbalancing_rotation is 2x2 but the design has K = {k}"
            )));
        }
        let e = &cfg.design.unbalancing_rotation;
        let u = CMatrix::from_row_slice(2, 2, &e.iter().map(|p| c64::new(p[0], p[1])).collect::<Vec<_>>());
        let u = UnitaryMatrix::nearest(u).map_err(|e| BenchError::core("unbalancing rotation", e))?;
        let w = rotate_columns(&jw, &u).map_err(|e| BenchError::core("unbalancing rotation", e))?;
        let mut m = MethodDesign::new("unbalanced", w.clone(), Estimator::Paired, paired_profile(&w, &tx, &spec, step, "unbalanced")?, p_t);
        m.summary.relaxed_delta = Some(joint.relaxed_delta);
        methods.push(m);
    }

    Ok(Setup { tx, rx, spec, waveforms: k, methods })
}

/// One point of an RMSE or resolution curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub snr_db: f64,
    /// RMSE in degrees or resolution probability.
    pub value: f64,
    pub trials: usize,
    /// Trials where the estimator failed. Excluded from RMSE; counted as
    /// unresolved.
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Parts {
    pub rmse: bool,
    pub resolution: bool,
}

impl Parts {
    pub const ALL: Self = Self { rmse: true, resolution: true };
    pub const NONE: Self = Self { rmse: false, resolution: false };
}

/// Angular samples of the beampattern outputs.
pub fn beampattern_angles(step: f64) -> Vec<f64> {
    let n = (180.0 / step).round() as usize;
    (0..=n).map(|i| ((-90.0 + 180.0 * i as f64 / n as f64) * 1e9).round() / 1e9).collect()
}

#[derive(Debug, Clone)]
pub struct Beampatterns {
    pub angles: Vec<f64>,
    /// `(method, G(theta))`.
    pub overall: Vec<(String, Vec<f64>)>,
    /// `(method, [G_k(theta)])`.
    pub per_waveform: Vec<(String, Vec<Vec<f64>>)>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub setup: Setup,
    pub rmse: Vec<CurvePoint>,
    pub resolution: Vec<CurvePoint>,
    pub beampatterns: Beampatterns,
}

pub fn beampatterns(setup: &Setup, step: f64) -> BenchResult<Beampatterns> {
    let angles = beampattern_angles(step);
    let mut overall = Vec::new();
    let mut per_waveform = Vec::new();
    for m in &setup.methods {
        let g = beampattern_at(&m.matrix, &setup.tx, &angles).map_err(|e| BenchError::core("beampattern", e))?;
        let gk = waveform_beampatterns(&m.matrix, &setup.tx, &angles).map_err(|e| BenchError::core("beampattern", e))?;
        overall.push((m.name().to_string(), g));
        per_waveform.push((m.name().to_string(), gk));
    }
    Ok(Beampatterns { angles, overall, per_waveform })
}

const RMSE_PURPOSE: u64 = 1;
const RESOLUTION_PURPOSE: u64 = 2;

/// Stream id of one trial. Methods share streams, so at equal `K` they see
/// identical reflection coefficients and noise.
pub fn trial_stream(purpose: u64, snr_index: usize, trial: usize) -> u64 {
    (purpose << 56) | ((snr_index as u64) << 32) | trial as u64
}

fn scene(cfg: &ExperimentConfig, targets: &[f64], snr_db: f64) -> BenchResult<TargetScene> {
    let v = cfg.scene.reflection_var;
    TargetScene::new(targets.to_vec(), v, v * 10f64.powf(-snr_db / 10.0), cfg.scene.pulses)
        .map_err(|e| BenchError::Config(format!("scene: {e}")))
}

struct Context<'a> {
    setup: &'a Setup,
    variant: EspritVariant,
}

impl Context<'_> {
    /// ESPRIT estimate; ambiguous profile matches go to the MUSIC spectrum.
    fn esprit(&self, m: &MethodDesign, snap: &SnapshotSet, sources: usize) -> tbeam_core::Result<Vec<f64>> {
        let sub: OnceCell<Option<MusicSubspace>> = OnceCell::new();
        let (tx, rx) = (&self.setup.tx, &self.setup.rx);
        let score = |t: f64| -> f64 {
            let s = sub.get_or_init(|| MusicSubspace::new(snap.data(), sources).ok());
            match (s, virtual_steering(&m.matrix, tx, rx, t)) {
                (Some(s), Ok(u)) => s.pseudospectrum(&u),
                _ => 0.0,
            }
        };
        let est = match m.summary.estimator {
            Estimator::Paired => estimate_esprit_paired(snap, sources, &m.profile, self.variant, Some(&score))?,
            Estimator::Shift => estimate_esprit_shift(snap, sources, &m.profile, self.variant, Some(&score))?,
        };
        Ok(est.angles)
    }
}

/// Squared error sum of one trial, or `None` on estimator failure.
fn rmse_trial(ctx: &Context, m: &MethodDesign, scene: &TargetScene, stream: u64, seed: u64) -> BenchResult<Option<f64>> {
    let s = ctx.setup;
    let snap = simulate(scene, &m.matrix, &s.tx, &s.rx, &mut RngStream::new(seed, stream))
        .map_err(|e| BenchError::core("simulation", e))?;
    Ok(ctx
        .esprit(m, &snap, scene.angles().len())
        .ok()
        .and_then(|est| squared_error(&est, scene.angles()).ok()))
}

/// MUSIC steering vectors over the scan grid.
fn scan_steering(m: &MethodDesign, setup: &Setup, scan: &[f64]) -> BenchResult<Vec<CVector>> {
    scan.iter()
        .map(|&t| virtual_steering(&m.matrix, &setup.tx, &setup.rx, t))
        .collect::<Result<_, _>>()
        .map_err(|e| BenchError::core("scan grid", e))
}

/// `Some(resolved)` or `None` on failure.
fn resolution_trial(
    setup: &Setup,
    m: &MethodDesign,
    scene: &TargetScene,
    scan: &[f64],
    steering: &[CVector],
    stream: u64,
    seed: u64,
) -> BenchResult<Option<bool>> {
    let snap = simulate(scene, &m.matrix, &setup.tx, &setup.rx, &mut RngStream::new(seed, stream))
        .map_err(|e| BenchError::core("simulation", e))?;
    let Ok(sub) = MusicSubspace::new(snap.data(), 2) else {
        return Ok(None);
    };
    let spectrum = MusicSpectrum {
        angles: scan.to_vec(),
        values: steering.iter().map(|u| sub.pseudospectrum(u)).collect(),
        regularized: sub.regularized,
    };
    let peaks = spectrum.peaks().len();
    let est = spectrum.estimate(2);
    Ok(Some(resolved(peaks, &est.angles, scene.angles())))
}

/// RMSE curves for every method over the SNR grid.
pub fn rmse_curves(cfg: &ExperimentConfig, setup: &Setup) -> BenchResult<Vec<CurvePoint>> {
    let ctx = Context { setup, variant: cfg.estimator.esprit.into() };
    let sources = cfg.scene.targets.len();
    let mut out = Vec::new();
    for m in &setup.methods {
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let sc = scene(cfg, &cfg.scene.targets, snr)?;
            let results: Vec<Option<f64>> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| rmse_trial(&ctx, m, &sc, trial_stream(RMSE_PURPOSE, si, t), cfg.seed))
                .collect::<BenchResult<_>>()?;
            let ok: Vec<f64> = results.iter().flatten().copied().collect();
            let failures = results.len() - ok.len();
            let value = if ok.is_empty() {
                f64::NAN
            } else {
                (ok.iter().sum::<f64>() / (ok.len() * sources) as f64).sqrt()
            };
            out.push(CurvePoint { method: m.name().into(), snr_db: snr, value, trials: cfg.trials, failures });
        }
    }
    Ok(out)
}

/// Resolution-probability curves; empty without resolution targets.
pub fn resolution_curves(cfg: &ExperimentConfig, setup: &Setup) -> BenchResult<Vec<CurvePoint>> {
    let targets = &cfg.scene.resolution_targets;
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let scan = scan_grid(setup.spec.sectors(), cfg.estimator.music_fine, cfg.estimator.music_coarse);
    let mut out = Vec::new();
    for m in &setup.methods {
        let steering = scan_steering(m, setup, &scan)?;
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let sc = scene(cfg, targets, snr)?;
            let results: Vec<Option<bool>> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| resolution_trial(setup, m, &sc, &scan, &steering, trial_stream(RESOLUTION_PURPOSE, si, t), cfg.seed))
                .collect::<BenchResult<_>>()?;
            let hits = results.iter().filter(|r| **r == Some(true)).count();
            let failures = results.iter().filter(|r| r.is_none()).count();
            out.push(CurvePoint {
                method: m.name().into(),
                snr_db: snr,
                value: hits as f64 / cfg.trials as f64,
                trials: cfg.trials,
                failures,
            });
        }
    }
    Ok(out)
}

/// Design every method, then run the requested Monte-Carlo parts.
pub fn run_experiment(cfg: &ExperimentConfig, parts: Parts) -> BenchResult<Experiment> {
    let setup = prepare(cfg)?;
    let rmse = if parts.rmse { rmse_curves(cfg, &setup)? } else { Vec::new() };
    let resolution = if parts.resolution { resolution_curves(cfg, &setup)? } else { Vec::new() };
    let beampatterns = beampatterns(&setup, cfg.beampattern_step)?;
    Ok(Experiment {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        setup,
        rmse,
        resolution,
        beampatterns,
    })
}
