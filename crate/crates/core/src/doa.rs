//! Direction finding on virtual data: phase-profile ESPRIT, MUSIC and the
//! two-target resolution test.

use std::f64::consts::PI;

use crate::array::{ReceiveArray, Sector, TransmitArray};
use crate::numerics::{c64, herm_eig_sym, CMatrix, CVector};
use crate::sim::{accumulate_halves, virtual_steering, SnapshotSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PhaseLookup,
    Esprit,
    Music,
}

/// `arg(c1(theta)) - arg(c2(theta))`, sampled and unwrapped over one sector.
#[derive(Debug, Clone)]
pub struct ProfileSegment {
    pub sector: Sector,
    pub angles: Vec<f64>,
    pub phase: Vec<f64>,
    /// Either coefficient fell below the magnitude floor somewhere in the
    /// sector; the segment is skipped during inversion.
    pub degenerate: bool,
    pub monotonic: bool,
}

/// Look-up table from the inter-group phase to the direction.
#[derive(Debug, Clone)]
pub struct PhaseProfile {
    segments: Vec<ProfileSegment>,
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

impl PhaseProfile {
    /// Sample `coef(theta) = (c1, c2)` every `step` degrees over each sector.
    pub fn from_coefficients<F>(sectors: &[Sector], step: f64, floor: f64, coef: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<(c64, c64)>,
    {
        if sectors.is_empty() {
            return Err(Error::InvalidArgument("profile needs at least one sector".into()));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("profile step must be positive, got {step}")));
        }
        let mut segments = Vec::with_capacity(sectors.len());
        for s in sectors {
            let angles = s.fine_nodes(step);
            let mut phase = Vec::with_capacity(angles.len());
            let mut degenerate = false;
            for &t in &angles {
                let (c1, c2) = coef(t)?;
                if c1.norm() < floor || c2.norm() < floor {
                    degenerate = true;
                }
                let raw = c1.arg() - c2.arg();
                let p = match phase.last() {
                    Some(&prev) => prev + wrap(raw - prev),
                    None => wrap(raw),
                };
                phase.push(p);
            }
            let inc = phase.windows(2).all(|w| w[1] > w[0]);
            let dec = phase.windows(2).all(|w| w[1] < w[0]);
            segments.push(ProfileSegment {
                sector: *s,
                angles,
                phase,
                degenerate,
                monotonic: inc || dec,
            });
        }
        Ok(Self { segments })
    }

    /// Profile of a paired matrix: `c1 = sum_{k <= K/2} d^H w_k`,
    /// `c2 = sum_{k > K/2} d^H w_k`.
    pub fn paired(w: &CMatrix, tx: &TransmitArray, sectors: &[Sector], step: f64) -> Result<Self> {
        let k = w.ncols();
        if k % 2 != 0 {
            return Err(Error::InvalidArgument(format!("K = {k} is odd")));
        }
        let floor = 1e-6 * (w.norm_squared() * tx.elements() as f64).sqrt();
        Self::from_coefficients(sectors, step, floor, |t| {
            let r = w.tr_mul(&tx.steering(t)?);
            let c1 = r.rows(0, k / 2).sum();
            let c2 = r.rows(k / 2, k / 2).sum();
            Ok((c1, c2))
        })
    }

    /// Profile between consecutive columns, `c1 = d^H w_1`, `c2 = d^H w_2`,
    /// for shift-invariant matrices such as the scaled identity.
    pub fn shift(w: &CMatrix, tx: &TransmitArray, sectors: &[Sector], step: f64) -> Result<Self> {
        if w.ncols() < 2 {
            return Err(Error::InvalidArgument("shift profile needs two columns".into()));
        }
        let floor = 1e-6 * (w.norm_squared() * tx.elements() as f64).sqrt();
        Self::from_coefficients(sectors, step, floor, |t| {
            let r = w.tr_mul(&tx.steering(t)?);
            Ok((r[0], r[1]))
        })
    }

    pub fn segments(&self) -> &[ProfileSegment] {
        &self.segments
    }

    pub fn is_monotonic(&self) -> bool {
        self.segments.iter().all(|s| s.monotonic)
    }

    /// Interpolated unwrapped phase at `theta`, if inside a segment.
    pub fn value_at(&self, theta: f64) -> Option<f64> {
        let seg = self.segments.iter().find(|s| s.sector.contains(theta))?;
        let i = seg.angles.partition_point(|&a| a <= theta).clamp(1, seg.angles.len() - 1);
        let (t0, t1) = (seg.angles[i - 1], seg.angles[i]);
        let f = (theta - t0) / (t1 - t0);
        Some(seg.phase[i - 1] + f * (seg.phase[i] - seg.phase[i - 1]))
    }

    /// All directions whose profile value equals `psi` modulo `2 pi`, by
    /// linear interpolation between samples.
    pub fn candidates(&self, psi: f64) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for seg in self.segments.iter().filter(|s| !s.degenerate) {
            for i in 0..seg.angles.len() - 1 {
                let (p0, p1) = (seg.phase[i], seg.phase[i + 1]);
                let (lo, hi) = (p0.min(p1), p0.max(p1));
                let n0 = ((lo - psi) / (2.0 * PI)).ceil() as i64;
                let n1 = ((hi - psi) / (2.0 * PI)).floor() as i64;
                for n in n0..=n1 {
                    let target = psi + 2.0 * PI * n as f64;
                    let f = if p1 != p0 { (target - p0) / (p1 - p0) } else { 0.0 };
                    let t = seg.angles[i] + f * (seg.angles[i + 1] - seg.angles[i]);
                    if !out.iter().any(|&o| (o - t).abs() < 1e-9) {
                        out.push(t);
                    }
                }
            }
        }
        out
    }

    /// Sample with the smallest wrapped distance to `psi`.
    pub fn nearest(&self, psi: f64) -> Option<f64> {
        self.segments
            .iter()
            .filter(|s| !s.degenerate)
            .flat_map(|s| s.angles.iter().zip(&s.phase))
            .min_by(|a, b| wrap(a.1 - psi).abs().total_cmp(&wrap(b.1 - psi).abs()))
            .map(|(&t, _)| t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateInfo {
    /// Estimated phase (ESPRIT) or pseudospectrum height (MUSIC).
    pub value: f64,
    /// Magnitude of the ESPRIT eigenvalue; 1 for an ideal rotation.
    pub gain: f64,
    /// Number of profile matches; more than one means the choice was
    /// arbitrated.
    pub candidates: usize,
    /// No profile match; the nearest sample was used.
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct DoaEstimate {
    pub angles: Vec<f64>,
    pub method: Method,
    pub info: Vec<EstimateInfo>,
}

impl DoaEstimate {
    fn sorted(method: Method, mut pairs: Vec<(f64, EstimateInfo)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            angles: pairs.iter().map(|p| p.0).collect(),
            info: pairs.iter().map(|p| p.1).collect(),
            method,
        }
    }

    pub fn any_clamped(&self) -> bool {
        self.info.iter().any(|i| i.clamped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EspritVariant {
    #[default]
    LeastSquares,
    TotalLeastSquares,
}

fn sample_covariance(data: &CMatrix) -> CMatrix {
    let t = data.ncols() as f64;
    (data * data.adjoint()).unscale(t)
}

fn signal_subspace(data: &CMatrix, sources: usize) -> Result<CMatrix> {
    if data.ncols() < sources {
        return Err(Error::InsufficientSnapshots(format!(
            "{} pulses for {sources} sources",
            data.ncols()
        )));
    }
    let eig = herm_eig_sym(&sample_covariance(data));
    let top = eig.values[0];
    if !(top > 0.0) || eig.values[sources - 1] <= 1e-12 * top {
        return Err(Error::InsufficientSnapshots(format!(
            "covariance rank below {sources}"
        )));
    }
    Ok(eig.vectors.columns(0, sources).into_owned())
}

fn eigenvalues(m: &CMatrix) -> Vec<c64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)]];
    }
    let (_, t) = nalgebra::Schur::new(m.clone()).unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Rotation eigenvalues between the rows `sel1` and `sel2` of the
/// `sources`-dimensional signal subspace of `data`.
pub fn esprit_eigenvalues(
    data: &CMatrix,
    sel1: &[usize],
    sel2: &[usize],
    sources: usize,
    variant: EspritVariant,
) -> Result<Vec<c64>> {
    if sources == 0 {
        return Err(Error::InvalidArgument("need at least one source".into()));
    }
    if sel1.len() != sel2.len() || sel1.len() < sources {
        return Err(Error::Dimension("selection sets must match and exceed the source count".into()));
    }
    let es = signal_subspace(data, sources)?;
    let e1 = es.select_rows(sel1);
    let e2 = es.select_rows(sel2);
    let psi = match variant {
        EspritVariant::LeastSquares => {
            let g = e1.ad_mul(&e1);
            let rhs = e1.ad_mul(&e2);
            g.lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical("singular ESPRIT system".into()))?
        }
        EspritVariant::TotalLeastSquares => {
            let mut stacked = CMatrix::zeros(e1.nrows(), 2 * sources);
            stacked.columns_mut(0, sources).copy_from(&e1);
            stacked.columns_mut(sources, sources).copy_from(&e2);
            let c = stacked.ad_mul(&stacked);
            let v = herm_eig_sym(&c).vectors;
            let v12 = v.view((0, sources), (sources, sources)).into_owned();
            let v22 = v.view((sources, sources), (sources, sources)).into_owned();
            let inv = v22
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular TLS block".into()))?;
            -(v12 * inv)
        }
    };
    Ok(eigenvalues(&psi))
}

/// Map ESPRIT rotation eigenvalues `e^{-j dpsi}` to directions through the
/// profile. Ambiguous matches go to `score` (highest wins); without a scorer
/// the first match is kept.
pub fn invert_phases(
    eigs: &[c64],
    profile: &PhaseProfile,
    score: Option<&dyn Fn(f64) -> f64>,
) -> Result<DoaEstimate> {
    let mut out = Vec::with_capacity(eigs.len());
    for &lam in eigs {
        let psi = -lam.arg();
        let cands = profile.candidates(psi);
        let (angle, clamped) = match cands.len() {
            0 => (
                profile
                    .nearest(psi)
                    .ok_or_else(|| Error::Numerical("every profile segment is degenerate".into()))?,
                true,
            ),
            1 => (cands[0], false),
            _ => {
                let pick = match score {
                    Some(f) => *cands
                        .iter()
                        .max_by(|a, b| f(**a).total_cmp(&f(**b)))
                        .expect("non-empty"),
                    None => cands[0],
                };
                (pick, false)
            }
        };
        out.push((
            angle,
            EstimateInfo { value: psi, gain: lam.norm(), candidates: cands.len(), clamped },
        ));
    }
    Ok(DoaEstimate::sorted(Method::Esprit, out))
}

/// ESPRIT on `[g1; g2]` for a paired design.
pub fn estimate_esprit(
    g1: &CMatrix,
    g2: &CMatrix,
    sources: usize,
    profile: &PhaseProfile,
    variant: EspritVariant,
    score: Option<&dyn Fn(f64) -> f64>,
) -> Result<DoaEstimate> {
    if g1.shape() != g2.shape() {
        return Err(Error::Dimension("g1 and g2 differ in shape".into()));
    }
    let n = g1.nrows();
    let mut v = CMatrix::zeros(2 * n, g1.ncols());
    v.rows_mut(0, n).copy_from(g1);
    v.rows_mut(n, n).copy_from(g2);
    let sel1: Vec<usize> = (0..n).collect();
    let sel2: Vec<usize> = (n..2 * n).collect();
    let eigs = esprit_eigenvalues(&v, &sel1, &sel2, sources, variant)?;
    invert_phases(&eigs, profile, score)
}

/// ESPRIT between waveform blocks `1..K-1` and `2..K` (shift invariance
/// across transmit elements, e.g. for the scaled identity).
pub fn estimate_esprit_shift(
    snap: &SnapshotSet,
    sources: usize,
    profile: &PhaseProfile,
    variant: EspritVariant,
    score: Option<&dyn Fn(f64) -> f64>,
) -> Result<DoaEstimate> {
    let (k, n) = (snap.waveforms(), snap.receivers());
    if k < 2 {
        return Err(Error::InvalidArgument("shift ESPRIT needs two waveforms".into()));
    }
    let sel1: Vec<usize> = (0..(k - 1) * n).collect();
    let sel2: Vec<usize> = (n..k * n).collect();
    let eigs = esprit_eigenvalues(snap.data(), &sel1, &sel2, sources, variant)?;
    invert_phases(&eigs, profile, score)
}

/// ESPRIT for a paired snapshot set: accumulate the halves, then estimate.
pub fn estimate_esprit_paired(
    snap: &SnapshotSet,
    sources: usize,
    profile: &PhaseProfile,
    variant: EspritVariant,
    score: Option<&dyn Fn(f64) -> f64>,
) -> Result<DoaEstimate> {
    let (g1, g2) = accumulate_halves(snap)?;
    estimate_esprit(&g1, &g2, sources, profile, variant, score)
}

/// Signal subspace of the full virtual covariance.
#[derive(Debug, Clone)]
pub struct MusicSubspace {
    signal: CMatrix,
    pub regularized: bool,
}

impl MusicSubspace {
    pub fn new(data: &CMatrix, sources: usize) -> Result<Self> {
        if sources == 0 || sources >= data.nrows() {
            return Err(Error::InvalidArgument(format!(
                "source count {sources} must lie in 1..{}",
                data.nrows()
            )));
        }
        if data.ncols() < sources {
            return Err(Error::InsufficientSnapshots(format!(
                "{} pulses for {sources} sources",
                data.ncols()
            )));
        }
        let p = data.nrows();
        let mut r = sample_covariance(data);
        let sigma = 1e-10 * r.trace().re / p as f64;
        let mut eig = herm_eig_sym(&r);
        let regularized = *eig.values.last().expect("non-empty") < sigma;
        if regularized {
            for i in 0..p {
                r[(i, i)] += c64::new(sigma, 0.0);
            }
            eig = herm_eig_sym(&r);
        }
        Ok(Self { signal: eig.vectors.columns(0, sources).into_owned(), regularized })
    }

    /// `1 / (1 - ||E_s^H u||^2 / ||u||^2)`.
    pub fn pseudospectrum(&self, u: &CVector) -> f64 {
        let nu = u.norm_squared();
        if nu == 0.0 {
            return 1.0;
        }
        let proj = self.signal.ad_mul(u).norm_squared() / nu;
        1.0 / (1.0 - proj).max(1e-300)
    }
}

#[derive(Debug, Clone)]
pub struct MusicSpectrum {
    pub angles: Vec<f64>,
    pub values: Vec<f64>,
    pub regularized: bool,
}

impl MusicSpectrum {
    /// Interior local maxima `(angle, height)`, highest first.
    pub fn peaks(&self) -> Vec<(f64, f64)> {
        let v = &self.values;
        let mut out: Vec<(f64, f64)> = (1..v.len().saturating_sub(1))
            .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1])
            .map(|i| (self.angles[i], v[i]))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }

    /// The `sources` highest peaks (fewer if the spectrum has fewer).
    pub fn estimate(&self, sources: usize) -> DoaEstimate {
        let picks = self
            .peaks()
            .into_iter()
            .take(sources)
            .map(|(a, h)| (a, EstimateInfo { value: h, gain: 1.0, candidates: 1, clamped: false }))
            .collect();
        DoaEstimate::sorted(Method::Music, picks)
    }
}

/// MUSIC on the full `KN`-dimensional virtual data of `snap`.
pub fn music_spectrum(
    snap: &SnapshotSet,
    tx: &TransmitArray,
    rx: &ReceiveArray,
    sources: usize,
    scan: &[f64],
) -> Result<MusicSpectrum> {
    let sub = MusicSubspace::new(snap.data(), sources)?;
    let w = snap.transmit_matrix();
    let values = scan
        .iter()
        .map(|&t| Ok(sub.pseudospectrum(&virtual_steering(w, tx, rx, t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MusicSpectrum { angles: scan.to_vec(), values, regularized: sub.regularized })
}

/// Scan grid: `fine` spacing inside the sectors, `coarse` elsewhere, over
/// `[-90, 90]`.
pub fn scan_grid(sectors: &[Sector], fine: f64, coarse: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::new();
    let nc = (180.0 / coarse).round() as usize;
    pts.extend((0..=nc).map(|i| -90.0 + 180.0 * i as f64 / nc as f64));
    for s in sectors {
        let nf = ((s.hi - s.lo) / fine).round().max(1.0) as usize;
        pts.extend((0..=nf).map(|i| s.lo + (s.hi - s.lo) * i as f64 / nf as f64));
    }
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    pts
}

/// Two targets count as resolved when the spectrum has at least two peaks and
/// each sorted estimate lies within half the separation of its target.
pub fn resolved(peak_count: usize, estimates: &[f64], truth: &[f64]) -> bool {
    if truth.len() != 2 || peak_count < 2 || estimates.len() < 2 {
        return false;
    }
    let mut e = estimates[..2].to_vec();
    let mut t = truth.to_vec();
    e.sort_by(|a, b| a.total_cmp(b));
    t.sort_by(|a, b| a.total_cmp(b));
    let half = 0.5 * (t[1] - t[0]).abs();
    e.iter().zip(&t).all(|(a, b)| (a - b).abs() <= half)
}

/// Sum of squared errors after sorted pairing. Missing estimates are an error.
pub fn squared_error(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} estimates for {} targets",
            estimates.len(),
            truth.len()
        )));
    }
    let mut e = estimates.to_vec();
    let mut t = truth.to_vec();
    e.sort_by(|a, b| a.total_cmp(b));
    t.sort_by(|a, b| a.total_cmp(b));
    Ok(e.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum())
}

/// `sqrt(mean over runs and targets of the squared error)`, degrees.
pub fn rmse<'a, I>(runs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for (e, t) in runs {
        total += squared_error(e, t)?;
        count += t.len();
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no runs".into()));
    }
    Ok((total / count as f64).sqrt())
}
