//! Array geometries, steering vectors, sector specifications and transmit
//! beampatterns.

use std::f64::consts::PI;

use crate::numerics::{c64, herm_eig, trapezoid_weights, CMatrix, CVector, RngStream};
use crate::{Error, Result};

const ANGLE_SLACK: f64 = 1e-9;

fn check_angle(theta_deg: f64) -> Result<()> {
    if !theta_deg.is_finite() || theta_deg.abs() > 90.0 + ANGLE_SLACK {
        return Err(Error::AngleOutOfRange(theta_deg));
    }
    Ok(())
}

/// Uniform linear transmit array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitArray {
    elements: usize,
    spacing: f64,
}

impl TransmitArray {
    /// `spacing` is in wavelengths.
    pub fn new(elements: usize, spacing: f64) -> Result<Self> {
        if elements < 2 {
            return Err(Error::InvalidArgument(format!(
                "transmit array needs at least 2 elements, got {elements}"
            )));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "element spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self { elements, spacing })
    }

    /// Half-wavelength ULA.
    pub fn half_wavelength(elements: usize) -> Result<Self> {
        Self::new(elements, 0.5)
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `a(theta)`, entry m is `exp(-j 2 pi d m sin(theta))` for m = 0..M-1.
    pub fn steering(&self, theta_deg: f64) -> Result<CVector> {
        check_angle(theta_deg)?;
        let k = -2.0 * PI * self.spacing * theta_deg.to_radians().sin();
        Ok(CVector::from_fn(self.elements, |m, _| {
            c64::from_polar(1.0, k * m as f64)
        }))
    }

    /// `d(theta) = conj(a(theta))`.
    pub fn steering_conj(&self, theta_deg: f64) -> Result<CVector> {
        Ok(self.steering(theta_deg)?.map(|z| z.conj()))
    }
}

/// `a(theta)` for a transmit ULA.
pub fn steering_tx(array: &TransmitArray, theta_deg: f64) -> Result<CVector> {
    array.steering(theta_deg)
}

/// Receive array with arbitrary linear element positions, in half-wavelength
/// units.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveArray {
    positions: Vec<f64>,
}

impl ReceiveArray {
    pub fn new(mut positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("receive array is empty".into()));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite receive position".into()));
        }
        positions.sort_by(f64::total_cmp);
        Ok(Self { positions })
    }

    /// Uniform array with positions `0, 1, ..., n-1` (half-wavelength ULA).
    pub fn ula(n: usize) -> Result<Self> {
        Self::new((0..n).map(|p| p as f64).collect())
    }

    /// `n` positions drawn uniformly from `[0, aperture]`.
    pub fn random(n: usize, aperture: f64, rng: &mut RngStream) -> Result<Self> {
        if !(aperture > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "receive aperture must be positive, got {aperture}"
            )));
        }
        Self::new((0..n).map(|_| rng.uniform_range(0.0, aperture)).collect())
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `b(theta)`, entry n is `exp(-j pi p_n sin(theta))`.
    pub fn steering(&self, theta_deg: f64) -> Result<CVector> {
        check_angle(theta_deg)?;
        let s = -PI * theta_deg.to_radians().sin();
        Ok(CVector::from_iterator(
            self.positions.len(),
            self.positions.iter().map(|p| c64::from_polar(1.0, s * p)),
        ))
    }
}

pub fn steering_rx(array: &ReceiveArray, theta_deg: f64) -> Result<CVector> {
    array.steering(theta_deg)
}

/// One angular sector `[lo, hi]` in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub lo: f64,
    pub hi: f64,
}

impl Sector {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        check_angle(lo)?;
        check_angle(hi)?;
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "sector bounds must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, theta_deg: f64) -> bool {
        theta_deg >= self.lo && theta_deg <= self.hi
    }

    pub fn width_rad(&self) -> f64 {
        (self.hi - self.lo).to_radians()
    }

    /// Width in `sin(theta)` space.
    pub fn sine_width(&self) -> f64 {
        self.hi.to_radians().sin() - self.lo.to_radians().sin()
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Quadrature nodes for this sector: both edges plus every grid point
    /// strictly inside.
    pub fn nodes(&self, grid: &AngularGrid) -> Vec<f64> {
        let mut v = vec![self.lo];
        v.extend(
            grid.points()
                .iter()
                .copied()
                .filter(|&t| t > self.lo && t < self.hi),
        );
        v.push(self.hi);
        v
    }

    /// Uniform nodes with at most `step` degrees between them.
    pub fn fine_nodes(&self, step: f64) -> Vec<f64> {
        let n = ((self.hi - self.lo) / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }
}

/// In-sector level of the desired beampattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesiredLevel {
    /// The level at which a pattern confined to the sectors radiates the
    /// total power `P_t` (integrated in `sin(theta)`), i.e.
    /// `P_t / (2 pi * sum of sector sine-widths)`. Exact for half-wavelength
    /// spacing.
    PowerConsistent,
    /// Plain linear level in beampattern units.
    Linear(f64),
}

/// Desired beampattern: a constant level inside a union of disjoint sectors,
/// zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorSpec {
    sectors: Vec<Sector>,
    level: DesiredLevel,
}

impl SectorSpec {
    pub fn new(mut sectors: Vec<Sector>, level: DesiredLevel) -> Result<Self> {
        if sectors.is_empty() {
            return Err(Error::InvalidArgument("sector list is empty".into()));
        }
        if let DesiredLevel::Linear(l) = level {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "desired level must be positive, got {l}"
                )));
            }
        }
        sectors.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if sectors.windows(2).any(|w| w[1].lo <= w[0].hi) {
            return Err(Error::InvalidArgument("sectors overlap".into()));
        }
        Ok(Self { sectors, level })
    }

    /// Convenience constructor from `(lo, hi)` pairs in degrees.
    pub fn from_bounds(bounds: &[(f64, f64)], level: DesiredLevel) -> Result<Self> {
        let sectors = bounds
            .iter()
            .map(|&(lo, hi)| Sector::new(lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sectors, level)
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn level(&self) -> DesiredLevel {
        self.level
    }

    pub fn with_level(&self, level: DesiredLevel) -> Self {
        Self {
            sectors: self.sectors.clone(),
            level,
        }
    }

    pub fn contains(&self, theta_deg: f64) -> bool {
        self.sectors.iter().any(|s| s.contains(theta_deg))
    }

    pub fn total_width_rad(&self) -> f64 {
        self.sectors.iter().map(Sector::width_rad).sum()
    }

    pub fn total_sine_width(&self) -> f64 {
        self.sectors.iter().map(Sector::sine_width).sum()
    }

    /// In-sector level in beampattern units for total power `p_t`.
    pub fn level_value(&self, p_t: f64) -> f64 {
        match self.level {
            DesiredLevel::Linear(l) => l,
            DesiredLevel::PowerConsistent => p_t / (2.0 * PI * self.total_sine_width()),
        }
    }

    /// `G_d(theta)`.
    pub fn desired(&self, theta_deg: f64, p_t: f64) -> f64 {
        if self.contains(theta_deg) {
            self.level_value(p_t)
        } else {
            0.0
        }
    }
}

/// Sampling directions `theta_q` in degrees, strictly increasing and
/// spanning `[-90, 90]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    points: Vec<f64>,
}

impl AngularGrid {
    /// `q` uniformly spaced points over `[-90, 90]`.
    pub fn uniform(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::EmptyGrid);
        }
        Self::new(
            (0..q)
                .map(|i| -90.0 + 180.0 * i as f64 / (q - 1) as f64)
                .collect(),
        )
    }

    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::EmptyGrid);
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "grid must be strictly increasing".into(),
            ));
        }
        let (first, last) = (points[0], points[points.len() - 1]);
        if (first + 90.0).abs() > ANGLE_SLACK || (last - 90.0).abs() > ANGLE_SLACK {
            return Err(Error::InvalidArgument(format!(
                "grid must span [-90, 90], got [{first}, {last}]"
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Grid with `factor` times as many intervals, keeping the original
    /// points.
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let mut pts = Vec::with_capacity((self.points.len() - 1) * factor + 1);
        for w in self.points.windows(2) {
            for i in 0..factor {
                pts.push(w[0] + (w[1] - w[0]) * i as f64 / factor as f64);
            }
        }
        pts.push(*self.points.last().unwrap());
        Self { points: pts }
    }
}

impl Default for AngularGrid {
    fn default() -> Self {
        Self::uniform(181).expect("181-point grid")
    }
}

fn check_rows(w: &CMatrix, array: &TransmitArray) -> Result<()> {
    if w.nrows() != array.elements() {
        return Err(Error::Dimension(format!(
            "beamspace matrix has {} rows, array has {} elements",
            w.nrows(),
            array.elements()
        )));
    }
    Ok(())
}

/// Per-waveform responses `d^H(theta) w_k` for all columns.
pub fn column_responses(w: &CMatrix, array: &TransmitArray, theta_deg: f64) -> Result<CVector> {
    check_rows(w, array)?;
    // d^H w_k = a^T w_k
    Ok(w.tr_mul(&array.steering(theta_deg)?))
}

/// `G(theta_q) = (1/4pi) sum_k |w_k^H d(theta_q)|^2` on every grid point.
pub fn beampattern(w: &CMatrix, array: &TransmitArray, grid: &AngularGrid) -> Result<Vec<f64>> {
    beampattern_at(w, array, grid.points())
}

/// Beampattern at arbitrary angles.
pub fn beampattern_at(w: &CMatrix, array: &TransmitArray, thetas: &[f64]) -> Result<Vec<f64>> {
    check_rows(w, array)?;
    thetas
        .iter()
        .map(|&t| {
            let r = column_responses(w, array, t)?;
            Ok(r.norm_squared() / (4.0 * PI))
        })
        .collect()
}

/// Individual beampatterns, one per column: `out[k][q]`.
pub fn waveform_beampatterns(
    w: &CMatrix,
    array: &TransmitArray,
    thetas: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_rows(w, array)?;
    let mut out = vec![Vec::with_capacity(thetas.len()); w.ncols()];
    for &t in thetas {
        let r = column_responses(w, array, t)?;
        for (k, z) in r.iter().enumerate() {
            out[k].push(z.norm_sqr() / (4.0 * PI));
        }
    }
    Ok(out)
}

/// `A = int_Theta a(theta) a^H(theta) dtheta`, by trapezoid on a 0.01 degree
/// grid per sector.
pub fn sector_correlation(spec: &SectorSpec, array: &TransmitArray) -> Result<CMatrix> {
    let m = array.elements();
    let mut a = CMatrix::zeros(m, m);
    for sector in spec.sectors() {
        let nodes = sector.fine_nodes(0.01);
        let rad: Vec<f64> = nodes.iter().map(|t| t.to_radians()).collect();
        let weights = trapezoid_weights(&rad)?;
        for (&t, &wq) in nodes.iter().zip(&weights) {
            let v = array.steering(t)?;
            a += (&v * v.adjoint()).scale(wq);
        }
    }
    Ok(a)
}

/// Number of orthogonal waveforms: the smallest count of dominant eigenvalues
/// of the sector correlation matrix holding at least `energy_fraction` of its
/// trace, rounded up to an even number.
pub fn select_waveform_count(
    spec: &SectorSpec,
    array: &TransmitArray,
    energy_fraction: f64,
) -> Result<usize> {
    if !(energy_fraction > 0.0 && energy_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy fraction must lie in (0, 1), got {energy_fraction}"
        )));
    }
    let a = sector_correlation(spec, array)?;
    let eig = herm_eig(&crate::numerics::hermitian_part(&a))?;
    let total: f64 = eig.values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("sector has zero width".into()));
    }
    let mut acc = 0.0;
    let mut count = eig.values.len();
    for (i, v) in eig.values.iter().enumerate() {
        acc += v;
        if acc >= energy_fraction * total {
            count = i + 1;
            break;
        }
    }
    let even = count + count % 2;
    Ok(even.min(array.elements() - array.elements() % 2))
}
