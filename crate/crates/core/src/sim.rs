//! Matched-filter domain snapshots `y_k(tau) = sum_l beta_l(tau) (d^H(theta_l) w_k) b(theta_l) + z_k(tau)`
//! with Swerling II reflection coefficients and white noise.

use std::io::Write;

use crate::array::{ReceiveArray, TransmitArray};
use crate::numerics::{c64, CMatrix, CVector, RngStream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TargetScene {
    angles: Vec<f64>,
    reflection_var: f64,
    noise_var: f64,
    pulses: usize,
}

impl TargetScene {
    /// `noise_var = 0` gives noise-free data.
    pub fn new(angles: Vec<f64>, reflection_var: f64, noise_var: f64, pulses: usize) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::InvalidArgument("scene has no targets".into()));
        }
        if let Some(&a) = angles.iter().find(|a| !(a.abs() <= 90.0)) {
            return Err(Error::AngleOutOfRange(a));
        }
        if !(reflection_var > 0.0) || !reflection_var.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "reflection variance must be positive, got {reflection_var}"
            )));
        }
        if !(noise_var >= 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be non-negative, got {noise_var}"
            )));
        }
        if pulses == 0 {
            return Err(Error::InvalidArgument("need at least one pulse".into()));
        }
        Ok(Self { angles, reflection_var, noise_var, pulses })
    }

    /// Unit reflection variance and `noise_var = 10^(-snr/10)`.
    pub fn with_snr(angles: Vec<f64>, snr_db: f64, pulses: usize) -> Result<Self> {
        Self::new(angles, 1.0, 10f64.powf(-snr_db / 10.0), pulses)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn reflection_var(&self) -> f64 {
        self.reflection_var
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn pulses(&self) -> usize {
        self.pulses
    }

    /// `sigma_beta^2 / sigma_z^2` in dB (infinite when noise-free).
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.reflection_var / self.noise_var).log10()
    }
}

/// Virtual data: column `tau` stacks `y_1(tau), ..., y_K(tau)` (each of
/// length `N`).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    data: CMatrix,
    waveforms: usize,
    receivers: usize,
    w: CMatrix,
    scene: TargetScene,
}

impl SnapshotSet {
    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn waveforms(&self) -> usize {
        self.waveforms
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    pub fn pulses(&self) -> usize {
        self.data.ncols()
    }

    pub fn transmit_matrix(&self) -> &CMatrix {
        &self.w
    }

    pub fn scene(&self) -> &TargetScene {
        &self.scene
    }

    /// `y_k(tau)`, `k` zero-based.
    pub fn y(&self, k: usize, tau: usize) -> CVector {
        self.data.column(tau).rows(k * self.receivers, self.receivers).into_owned()
    }

    /// Rows `[k0, k1)` of waveform blocks as a `(k1 - k0) N x pulses` matrix.
    pub fn waveform_rows(&self, k0: usize, k1: usize) -> CMatrix {
        let n = self.receivers;
        self.data.rows(k0 * n, (k1 - k0) * n).into_owned()
    }

    /// Columnar text dump: `pulse,waveform,receiver,re,im`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "pulse,waveform,receiver,re,im")?;
        for tau in 0..self.pulses() {
            for k in 0..self.waveforms {
                for n in 0..self.receivers {
                    let z = self.data[(k * self.receivers + n, tau)];
                    writeln!(out, "{tau},{k},{n},{},{}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Draw a snapshot set. Per pulse the stream yields the `L` reflection
/// coefficients first, then the noise in `(k, n)` order.
pub fn simulate(
    scene: &TargetScene,
    w: &CMatrix,
    tx: &TransmitArray,
    rx: &ReceiveArray,
    rng: &mut RngStream,
) -> Result<SnapshotSet> {
    if w.nrows() != tx.elements() {
        return Err(Error::Dimension(format!(
            "W has {} rows, transmit array has {} elements",
            w.nrows(),
            tx.elements()
        )));
    }
    let k = w.ncols();
    let n = rx.len();
    let signatures: Vec<CVector> = scene
        .angles
        .iter()
        .map(|&t| virtual_steering(w, tx, rx, t))
        .collect::<Result<_>>()?;
    let mut data = CMatrix::zeros(k * n, scene.pulses);
    let mut betas = vec![c64::new(0.0, 0.0); signatures.len()];
    for tau in 0..scene.pulses {
        for b in betas.iter_mut() {
            *b = rng.complex_gaussian(scene.reflection_var);
        }
        let mut col = data.column_mut(tau);
        for (s, b) in signatures.iter().zip(&betas) {
            col.axpy(*b, s, c64::new(1.0, 0.0));
        }
        if scene.noise_var > 0.0 {
            for z in col.iter_mut() {
                *z += rng.complex_gaussian(scene.noise_var);
            }
        }
    }
    Ok(SnapshotSet { data, waveforms: k, receivers: n, w: w.clone(), scene: scene.clone() })
}

/// `u(theta) = (d^H w_1, ..., d^H w_K)^T (x) b(theta)`, waveform-major.
pub fn virtual_steering(w: &CMatrix, tx: &TransmitArray, rx: &ReceiveArray, theta: f64) -> Result<CVector> {
    let c = w.tr_mul(&tx.steering(theta)?);
    let b = rx.steering(theta)?;
    Ok(c.kronecker(&b))
}

/// `g1 = sum_{k <= K/2} y_k`, `g2 = sum_{k > K/2} y_k`, each `N x pulses`.
pub fn accumulate_halves(snap: &SnapshotSet) -> Result<(CMatrix, CMatrix)> {
    let k = snap.waveforms;
    if k % 2 != 0 {
        return Err(Error::InvalidArgument(format!("K = {k} is odd")));
    }
    let n = snap.receivers;
    let t = snap.pulses();
    let mut g1 = CMatrix::zeros(n, t);
    let mut g2 = CMatrix::zeros(n, t);
    for j in 0..k {
        let block = snap.data.rows(j * n, n);
        if j < k / 2 {
            g1 += block;
        } else {
            g2 += block;
        }
    }
    Ok((g1, g2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_validation() {
        assert!(TargetScene::new(vec![], 1.0, 1.0, 1).is_err());
        assert!(TargetScene::new(vec![91.0], 1.0, 1.0, 1).is_err());
        assert!(TargetScene::new(vec![0.0], 0.0, 1.0, 1).is_err());
        assert!(TargetScene::new(vec![0.0], 1.0, -1.0, 1).is_err());
        assert!(TargetScene::new(vec![0.0], 1.0, 1.0, 0).is_err());
        let s = TargetScene::with_snr(vec![0.0], 10.0, 5).unwrap();
        assert!((s.noise_var() - 0.1).abs() < 1e-15);
        assert!((s.snr_db() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn csv_dump_has_one_row_per_sample() {
        let tx = TransmitArray::half_wavelength(2).unwrap();
        let rx = ReceiveArray::ula(3).unwrap();
        let scene = TargetScene::new(vec![10.0], 1.0, 0.1, 2).unwrap();
        let w = CMatrix::identity(2, 2);
        let s = simulate(&scene, &w, &tx, &rx, &mut RngStream::new(0, 0)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 2 * 3);
    }
}
