//! Transmit beamspace design: semidefinite relaxation of the min-max
//! beampattern fit, randomized rounding, and the sector-by-sector variant.

mod beamspace;
pub mod format;
mod problem;
pub mod sdp;

pub use beamspace::{flip_conjugate, row_pairs, row_powers, BeamspaceMatrix};
pub use problem::{Rounded, SdpProblem, SdpSolution};

use crate::array::{AngularGrid, Sector, SectorSpec, TransmitArray};
use crate::numerics::{CMatrix, RngStream};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct DesignSettings {
    pub grid: AngularGrid,
    pub ipm: sdp::IpmSettings,
    /// Randomization candidates per design.
    pub candidates: usize,
}

impl Default for DesignSettings {
    fn default() -> Self {
        Self {
            grid: AngularGrid::default(),
            ipm: sdp::IpmSettings::default(),
            candidates: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Design {
    pub matrix: BeamspaceMatrix,
    /// Relaxation optimum (sum over pairs for sector-by-sector designs).
    pub relaxed_delta: f64,
    /// Objective of the rounded matrix on the design grid.
    pub objective: f64,
    pub converged: bool,
}

/// Joint design of all `K/2` free columns.
pub fn design_joint(
    spec: &SectorSpec,
    array: &TransmitArray,
    waveforms: usize,
    p_t: f64,
    settings: &DesignSettings,
    rng: &mut RngStream,
) -> Result<Design> {
    let problem = SdpProblem::build(spec, array, waveforms, p_t, &settings.grid)?;
    let sol = problem.solve(&settings.ipm)?;
    let rounded = problem.round(&sol, settings.candidates, rng)?;
    Ok(Design {
        matrix: rounded.matrix,
        relaxed_delta: sol.delta,
        objective: rounded.objective,
        converged: sol.converged,
    })
}

/// Default subsector assignment: one sector per pair when the counts match,
/// otherwise a single sector split into `pairs` equal-width pieces.
pub fn default_subsectors(spec: &SectorSpec, pairs: usize) -> Result<Vec<Sector>> {
    let sectors = spec.sectors();
    if sectors.len() == pairs {
        return Ok(sectors.to_vec());
    }
    if sectors.len() == 1 {
        let s = sectors[0];
        let w = (s.hi - s.lo) / pairs as f64;
        return (0..pairs)
            .map(|j| {
                let lo = s.lo + j as f64 * w;
                let hi = if j + 1 == pairs { s.hi } else { lo + w };
                Sector::new(lo, hi)
            })
            .collect();
    }
    Err(Error::InvalidArgument(format!(
        "cannot assign {} sectors to {pairs} waveform pairs; give subsectors explicitly",
        sectors.len()
    )))
}

/// Sector-by-sector design: each pair is designed alone for its own
/// subsector with power `2 P_t / K`, then the pairs are stacked.
pub fn design_sdd(
    spec: &SectorSpec,
    array: &TransmitArray,
    waveforms: usize,
    p_t: f64,
    subsectors: Option<&[Sector]>,
    settings: &DesignSettings,
    rng: &mut RngStream,
) -> Result<Design> {
    if waveforms == 0 || waveforms % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "K must be a positive even number, got {waveforms}"
        )));
    }
    let pairs = waveforms / 2;
    let subs = match subsectors {
        Some(s) => s.to_vec(),
        None => default_subsectors(spec, pairs)?,
    };
    if subs.len() != pairs {
        return Err(Error::InvalidArgument(format!(
            "{} subsectors for {pairs} waveform pairs",
            subs.len()
        )));
    }
    let mut sorted = subs.clone();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    if sorted.windows(2).any(|w| w[1].lo < w[0].hi) {
        return Err(Error::InvalidArgument("subsectors overlap".into()));
    }
    let pair_power = 2.0 * p_t / waveforms as f64;
    let mut free = CMatrix::zeros(array.elements(), pairs);
    let mut delta = 0.0;
    let mut converged = true;
    for (j, sub) in subs.iter().enumerate() {
        let sub_spec = SectorSpec::new(vec![*sub], spec.level())?;
        let d = design_joint(&sub_spec, array, 2, pair_power, settings, rng)?;
        free.set_column(j, &d.matrix.free_columns().column(0));
        delta += d.relaxed_delta;
        converged &= d.converged;
    }
    let matrix = BeamspaceMatrix::new(free, p_t)?;
    let problem = SdpProblem::build(spec, array, waveforms, p_t, &settings.grid)?;
    let objective = problem.objective(matrix.free_columns());
    Ok(Design {
        matrix,
        relaxed_delta: delta,
        objective,
        converged,
    })
}
