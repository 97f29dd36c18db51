use crate::numerics::{c64, CMatrix, CVector};
use crate::{Error, Result};

/// `flip_conj(w)_i = conj(w_{M-1-i})`.
pub fn flip_conjugate(w: &CVector) -> CVector {
    let m = w.len();
    CVector::from_fn(m, |i, _| w[m - 1 - i].conj())
}

/// Index pairs `(i, M-1-i)` sharing a power constraint; the middle element of
/// odd `M` pairs with itself.
pub fn row_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m.div_ceil(2)).map(|i| (i, m - 1 - i)).collect()
}

/// Transmit matrix `W = [w_1 .. w_{K/2}, conj(flip(w_1)) .. conj(flip(w_{K/2}))]`
/// with the per-antenna power `P_t / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamspaceMatrix {
    free: CMatrix,
    p_t: f64,
}

impl BeamspaceMatrix {
    /// Relative tolerance on per-antenna power accepted by [`Self::new`].
    pub const POWER_TOL: f64 = 1e-9;

    /// Wrap `K/2` free columns; rejects matrices violating the per-antenna
    /// power constraint.
    pub fn new(free: CMatrix, p_t: f64) -> Result<Self> {
        let out = Self::unchecked(free, p_t)?;
        let err = out.power_error();
        if err > Self::POWER_TOL {
            return Err(Error::InvalidArgument(format!(
                "per-antenna power deviates from P_t/M by relative {err:.3e}"
            )));
        }
        Ok(out)
    }

    /// Rescale each row pair of `free` jointly so every antenna radiates
    /// exactly `P_t / M`. Rows that are identically zero get a uniform fill.
    pub fn normalized(mut free: CMatrix, p_t: f64) -> Result<Self> {
        check_shape(&free, p_t)?;
        normalize_rows(&mut free, p_t);
        Self::new(free, p_t)
    }

    fn unchecked(free: CMatrix, p_t: f64) -> Result<Self> {
        check_shape(&free, p_t)?;
        Ok(Self { free, p_t })
    }

    pub fn elements(&self) -> usize {
        self.free.nrows()
    }

    /// Total number of waveforms `K`.
    pub fn waveforms(&self) -> usize {
        2 * self.free.ncols()
    }

    pub fn total_power(&self) -> f64 {
        self.p_t
    }

    pub fn free_columns(&self) -> &CMatrix {
        &self.free
    }

    /// Full `M x K` matrix.
    pub fn matrix(&self) -> CMatrix {
        let (m, h) = self.free.shape();
        let mut w = CMatrix::zeros(m, 2 * h);
        for k in 0..h {
            let col = self.free.column(k).into_owned();
            w.set_column(k, &col);
            w.set_column(h + k, &flip_conjugate(&col));
        }
        w
    }

    /// Per-antenna transmit power `sum_k |W_ik|^2`.
    pub fn row_powers(&self) -> Vec<f64> {
        row_powers(&self.matrix())
    }

    /// Largest relative deviation of per-antenna power from `P_t / M`.
    pub fn power_error(&self) -> f64 {
        let target = self.p_t / self.elements() as f64;
        self.row_powers()
            .iter()
            .map(|p| (p - target).abs() / target)
            .fold(0.0, f64::max)
    }

    /// Recover the free columns from a full matrix, checking the paired
    /// structure to `tol` (absolute, elementwise).
    pub fn from_full(w: &CMatrix, p_t: f64, tol: f64) -> Result<Self> {
        let k = w.ncols();
        if k % 2 != 0 {
            return Err(Error::Dimension(format!("K = {k} is odd")));
        }
        let h = k / 2;
        for j in 0..h {
            let expect = flip_conjugate(&w.column(j).into_owned());
            let dev = (&expect - w.column(h + j)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if dev > tol {
                return Err(Error::InvalidArgument(format!(
                    "column {} is not the flipped conjugate of column {j} (deviation {dev:.3e})",
                    h + j
                )));
            }
        }
        let free = w.columns(0, h).into_owned();
        Self::new(free, p_t)
    }
}

fn check_shape(free: &CMatrix, p_t: f64) -> Result<()> {
    let (m, h) = free.shape();
    if m < 2 {
        return Err(Error::Dimension(format!("need at least 2 elements, got {m}")));
    }
    if h == 0 {
        return Err(Error::Dimension("no free columns".into()));
    }
    if 2 * h > m {
        return Err(Error::InvalidArgument(format!(
            "K = {} exceeds M = {m}",
            2 * h
        )));
    }
    if !(p_t > 0.0) || !p_t.is_finite() {
        return Err(Error::InvalidArgument(format!("P_t must be positive, got {p_t}")));
    }
    Ok(())
}

pub fn row_powers(w: &CMatrix) -> Vec<f64> {
    w.row_iter().map(|r| r.norm_squared()).collect()
}

/// Scale rows `i` and `M-1-i` of the free block jointly so the full matrix
/// has per-antenna power `p_t / M`.
pub(crate) fn normalize_rows(free: &mut CMatrix, p_t: f64) {
    let (m, h) = free.shape();
    let target = p_t / m as f64;
    for (i, j) in row_pairs(m) {
        let pair: f64 = if i == j {
            2.0 * free.row(i).norm_squared()
        } else {
            free.row(i).norm_squared() + free.row(j).norm_squared()
        };
        if pair > f64::MIN_POSITIVE {
            let s = (target / pair).sqrt();
            free.row_mut(i).iter_mut().for_each(|z| *z *= s);
            if j != i {
                free.row_mut(j).iter_mut().for_each(|z| *z *= s);
            }
        } else {
            let v = c64::new((p_t / (m as f64 * 2.0 * h as f64)).sqrt(), 0.0);
            free.row_mut(i).fill(v);
            free.row_mut(j).fill(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn random_free(m: usize, h: usize, seed: u64) -> CMatrix {
        let mut rng = RngStream::new(seed, 0);
        CMatrix::from_fn(m, h, |_, _| rng.complex_gaussian(1.0))
    }

    #[test]
    fn flip_conjugate_is_an_involution() {
        let w = random_free(7, 1, 3).column(0).into_owned();
        assert_eq!(flip_conjugate(&flip_conjugate(&w)), w);
        let f = flip_conjugate(&w);
        assert_eq!(f[0], w[6].conj());
        assert_eq!(f[3], w[3].conj());
    }

    #[test]
    fn normalization_meets_power_even_and_odd() {
        for (m, h) in [(10, 1), (10, 2), (9, 2), (5, 2), (2, 1)] {
            let b = BeamspaceMatrix::normalized(random_free(m, h, m as u64), 3.0).unwrap();
            assert!(b.power_error() < 1e-12);
            let total: f64 = b.row_powers().iter().sum();
            assert!((total - 3.0).abs() < 1e-12);
            assert_eq!(b.matrix().shape(), (m, 2 * h));
        }
    }

    #[test]
    fn zero_rows_are_filled() {
        let mut free = random_free(6, 2, 1);
        free.row_mut(0).fill(c64::new(0.0, 0.0));
        free.row_mut(5).fill(c64::new(0.0, 0.0));
        let b = BeamspaceMatrix::normalized(free, 6.0).unwrap();
        assert!(b.power_error() < 1e-12);
    }

    #[test]
    fn new_rejects_unnormalized_and_bad_shapes() {
        assert!(BeamspaceMatrix::new(random_free(6, 1, 2), 6.0).is_err());
        assert!(BeamspaceMatrix::normalized(random_free(4, 3, 2), 1.0).is_err());
        assert!(BeamspaceMatrix::normalized(random_free(4, 0, 2), 1.0).is_err());
        assert!(BeamspaceMatrix::normalized(random_free(4, 1, 2), 0.0).is_err());
    }

    #[test]
    fn full_round_trip() {
        let b = BeamspaceMatrix::normalized(random_free(8, 2, 5), 8.0).unwrap();
        let back = BeamspaceMatrix::from_full(&b.matrix(), 8.0, 0.0).unwrap();
        assert_eq!(back, b);
        let mut broken = b.matrix();
        broken[(0, 3)] += c64::new(1e-3, 0.0);
        assert!(BeamspaceMatrix::from_full(&broken, 8.0, 1e-6).is_err());
    }
}
