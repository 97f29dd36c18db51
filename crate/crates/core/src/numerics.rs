//! Dense complex linear algebra helpers, trapezoidal quadrature on angular
//! grids and reproducible random streams.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

#[allow(non_camel_case_types)]
pub type c64 = num_complex::Complex64;
pub type CMatrix = DMatrix<c64>;
pub type CVector = DVector<c64>;

/// Largest entry-wise deviation `max |X - X^H|`.
pub fn hermitian_deviation(x: &CMatrix) -> f64 {
    let n = x.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((x[(i, j)] - x[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn max_abs(x: &CMatrix) -> f64 {
    x.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// `(X + X^H) / 2`.
pub fn hermitian_part(x: &CMatrix) -> CMatrix {
    (x + x.adjoint()).scale(0.5)
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermEig {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub vectors: CMatrix,
}

impl HermEig {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = self.values[j];
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
        }
        scaled * self.vectors.adjoint()
    }
}

/// Hermitian eigendecomposition with eigenvalues sorted descending.
///
/// The input must be square and Hermitian to `1e-12 * max|X|`.
pub fn herm_eig(x: &CMatrix) -> Result<HermEig> {
    if x.nrows() != x.ncols() {
        return Err(Error::Dimension(format!(
            "herm_eig needs a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let dev = hermitian_deviation(x);
    if dev > 1e-12 * max_abs(x) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(herm_eig_sym(x))
}

/// Same as [`herm_eig`] but symmetrizes the input instead of validating it.
/// Used on iterates that are Hermitian only up to rounding.
pub(crate) fn herm_eig_sym(x: &CMatrix) -> HermEig {
    let n = x.nrows();
    if n == 0 {
        return HermEig {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(hermitian_part(x));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    HermEig { values, vectors }
}

/// Trapezoidal weights for samples at the (strictly increasing) abscissae `x`.
pub fn trapezoid_weights(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::EmptyGrid);
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "quadrature grid must be strictly increasing".into(),
        ));
    }
    let mut w = vec![0.0; x.len()];
    for (i, pair) in x.windows(2).enumerate() {
        let h = 0.5 * (pair[1] - pair[0]);
        w[i] += h;
        w[i + 1] += h;
    }
    Ok(w)
}

/// Trapezoidal integral over an angular grid given in degrees; the measure is
/// radians.
pub fn integrate_grid(grid_deg: &[f64], samples: &[f64]) -> Result<f64> {
    if grid_deg.len() != samples.len() {
        return Err(Error::Dimension(format!(
            "{} grid points but {} samples",
            grid_deg.len(),
            samples.len()
        )));
    }
    let rad: Vec<f64> = grid_deg.iter().map(|t| t.to_radians()).collect();
    let w = trapezoid_weights(&rad)?;
    Ok(w.iter().zip(samples).map(|(w, f)| w * f).sum())
}

/// Seeded random stream. Identical `(seed, stream)` pairs reproduce identical
/// draws bit for bit; distinct stream ids give independent sequences.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform phase in `[0, 2pi)`.
    pub fn phase(&mut self) -> f64 {
        std::f64::consts::TAU * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Circular complex Gaussian with `E|z|^2 = variance`.
    pub fn complex_gaussian(&mut self, variance: f64) -> c64 {
        let s = (0.5 * variance).sqrt();
        c64::new(s * self.standard_normal(), s * self.standard_normal())
    }
}

/// Vector of `n` i.i.d. entries uniformly distributed on the unit circle.
pub fn unit_circle_vector(n: usize, rng: &mut RngStream) -> CVector {
    CVector::from_fn(n, |_, _| c64::from_polar(1.0, rng.phase()))
}

/// Frobenius norm of a complex matrix.
pub fn fro(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `||U U^H - I||_F`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.nrows();
    fro(&(u * u.adjoint() - CMatrix::identity(n, n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_hermitian(n: usize, rng: &mut RngStream) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| rng.complex_gaussian(1.0));
        hermitian_part(&a)
    }

    #[test]
    fn identity_eigenvalues() {
        let eig = herm_eig(&CMatrix::identity(3, 3)).unwrap();
        for v in &eig.values {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-14);
        }
        assert!(unitarity_error(&eig.vectors) < 1e-12);
    }

    #[test]
    fn rank_one_eigenvalues() {
        let mut rng = RngStream::new(1, 0);
        let w = CVector::from_fn(6, |_, _| rng.complex_gaussian(1.0));
        let x = &w * w.adjoint();
        let eig = herm_eig(&x).unwrap();
        assert_abs_diff_eq!(eig.values[0], w.norm_squared(), epsilon = 1e-10);
        assert!(eig.values[1..].iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn two_by_two_matches_closed_form() {
        // [[a, b], [b*, c]] has eigenvalues (a+c)/2 +- sqrt(((a-c)/2)^2 + |b|^2)
        let (a, c, b) = (2.5, -1.0, c64::new(0.3, -1.7));
        let x = CMatrix::from_row_slice(2, 2, &[c64::new(a, 0.0), b, b.conj(), c64::new(c, 0.0)]);
        let eig = herm_eig(&x).unwrap();
        let m = 0.5 * (a + c);
        let r = ((0.5 * (a - c)).powi(2) + b.norm_sqr()).sqrt();
        assert_abs_diff_eq!(eig.values[0], m + r, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], m - r, epsilon = 1e-12);
    }

    #[test]
    fn three_by_three_against_characteristic_polynomial() {
        let mut rng = RngStream::new(7, 3);
        for _ in 0..20 {
            let x = random_hermitian(3, &mut rng);
            let eig = herm_eig(&x).unwrap();
            // det(X - lambda I) must vanish at every eigenvalue
            for &l in &eig.values {
                let shifted = &x - CMatrix::identity(3, 3).scale(l);
                let det = shifted.determinant().norm();
                assert!(det < 1e-10 * (1.0 + max_abs(&x).powi(3)), "det {det}");
            }
            // trace and determinant invariants
            let tr: f64 = (0..3).map(|i| x[(i, i)].re).sum();
            assert_abs_diff_eq!(eig.values.iter().sum::<f64>(), tr, epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruction_and_unitarity_on_random_hermitian() {
        let mut rng = RngStream::new(11, 0);
        for n in [1, 2, 5, 10, 20] {
            let x = random_hermitian(n, &mut rng);
            let eig = herm_eig(&x).unwrap();
            assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
            assert!(fro(&(&x - eig.reconstruct())) <= 1e-10 * fro(&x));
            assert!(unitarity_error(&eig.vectors) <= 1e-10);
        }
    }

    #[test]
    fn herm_eig_rejects_bad_input() {
        assert!(matches!(
            herm_eig(&CMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
        let mut x = CMatrix::identity(2, 2);
        x[(0, 1)] = c64::new(1.0, 0.0);
        assert!(matches!(herm_eig(&x), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn trapezoid_constant_and_odd() {
        let grid: Vec<f64> = (-10..=10).map(|t| t as f64).collect();
        let ones = vec![1.0; grid.len()];
        assert_abs_diff_eq!(
            integrate_grid(&grid, &ones).unwrap(),
            20f64.to_radians(),
            epsilon = 1e-12
        );
        let sines: Vec<f64> = grid.iter().map(|t| t.to_radians().sin()).collect();
        assert_abs_diff_eq!(integrate_grid(&grid, &sines).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn trapezoid_exact_for_affine() {
        let grid = [-3.0, -1.0, 0.5, 2.0, 7.0];
        let f: Vec<f64> = grid.iter().map(|t: &f64| 3.0 * t.to_radians() - 1.0).collect();
        let (a, b) = (grid[0].to_radians(), grid[4].to_radians());
        let exact = 1.5 * (b * b - a * a) - (b - a);
        assert_abs_diff_eq!(integrate_grid(&grid, &f).unwrap(), exact, epsilon = 1e-14);
    }

    #[test]
    fn trapezoid_second_order_convergence() {
        let f = |t: f64| (3.0 * t.to_radians()).cos();
        let exact = 2.0 * (3.0 * 40f64.to_radians()).sin() / 3.0;
        let err = |n: usize| {
            let g: Vec<f64> = (0..=n).map(|i| -40.0 + 80.0 * i as f64 / n as f64).collect();
            let s: Vec<f64> = g.iter().map(|&t| f(t)).collect();
            (integrate_grid(&g, &s).unwrap() - exact).abs()
        };
        let ratio = err(20) / err(40);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn trapezoid_errors() {
        assert!(matches!(integrate_grid(&[], &[]), Err(Error::EmptyGrid)));
        assert!(integrate_grid(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn unit_circle_vector_contract() {
        let mut rng = RngStream::new(5, 9);
        let v = unit_circle_vector(1, &mut rng);
        assert_abs_diff_eq!(v[0].norm(), 1.0, epsilon = 1e-12);
        let a = unit_circle_vector(10, &mut RngStream::new(42, 1));
        let b = unit_circle_vector(10, &mut RngStream::new(42, 1));
        assert_eq!(a, b);
        let c = unit_circle_vector(10, &mut RngStream::new(42, 2));
        assert_ne!(a, c);
        assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn unit_circle_phase_histogram_is_uniform() {
        // chi-square goodness of fit, 16 bins, 15 dof: 1% critical value 30.578
        let mut rng = RngStream::new(2024, 0);
        let bins = 16;
        let mut counts = vec![0usize; bins];
        let n = 100_000;
        let v = unit_circle_vector(n, &mut rng);
        for z in v.iter() {
            let p = z.arg().rem_euclid(std::f64::consts::TAU);
            counts[((p / std::f64::consts::TAU) * bins as f64) as usize % bins] += 1;
        }
        let e = n as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 30.578, "chi2 = {chi2}");
    }

    #[test]
    fn complex_gaussian_variance() {
        let mut rng = RngStream::new(3, 3);
        let n = 200_000;
        let s: f64 = (0..n).map(|_| rng.complex_gaussian(2.0).norm_sqr()).sum::<f64>() / n as f64;
        assert!((s - 2.0).abs() < 0.03, "{s}");
    }
}
