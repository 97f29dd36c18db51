//! Unitary rotation of the free beam columns.
//!
//! `W_f U` keeps the beampattern and the per-antenna powers of `W_f` for any
//! unitary `U`, but changes how coherently `sum_i d^H w_i` accumulates over
//! the sector. The rotation minimizes `tr(U E U^H D)` with
//! `D = int_Theta W_f^H d d^H W_f dtheta` by steepest descent on the unitary
//! group.

use crate::array::{AngularGrid, SectorSpec, TransmitArray};
use crate::design::BeamspaceMatrix;
use crate::numerics::{c64, hermitian_deviation, herm_eig_sym, trapezoid_weights, unitarity_error, CMatrix};
use crate::{Error, Result};

/// `(K/2) x (K/2)` unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(CMatrix);

impl UnitaryMatrix {
    pub const TOL: f64 = 1e-10;

    pub fn new(u: CMatrix) -> Result<Self> {
        if !u.is_square() {
            return Err(Error::Dimension(format!("{}x{} is not square", u.nrows(), u.ncols())));
        }
        let err = unitarity_error(&u);
        if err > Self::TOL {
            return Err(Error::InvalidArgument(format!(
                "matrix is not unitary (||U U^H - I||_F = {err:.3e})"
            )));
        }
        Ok(Self(u))
    }

    /// Closest unitary matrix in Frobenius norm (the polar factor). Useful for
    /// matrices given to a few significant digits.
    pub fn nearest(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        let svd = m.svd(true, true);
        let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
            return Err(Error::Numerical("SVD failed".into()));
        };
        Self::new(u * vt)
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct RotationProblem {
    d: CMatrix,
    e: CMatrix,
}

impl RotationProblem {
    /// `D` by trapezoid over each sector (edges plus interior grid points).
    /// `E = e e^H` with `e = [1, -1]` for `K = 4`; for larger `K` the
    /// coherent sum is maximized directly, `E = -1 1^T`.
    pub fn build(w: &BeamspaceMatrix, spec: &SectorSpec, array: &TransmitArray, grid: &AngularGrid) -> Result<Self> {
        let h = w.waveforms() / 2;
        if h < 2 {
            return Err(Error::InvalidArgument(
                "rotation needs K >= 4; for K = 2 it is a global phase".into(),
            ));
        }
        if w.elements() != array.elements() {
            return Err(Error::Dimension("array and matrix sizes differ".into()));
        }
        let free = w.free_columns();
        let mut d = CMatrix::zeros(h, h);
        for sector in spec.sectors() {
            let nodes = sector.nodes(grid);
            let rad: Vec<f64> = nodes.iter().map(|t| t.to_radians()).collect();
            let wts = trapezoid_weights(&rad)?;
            for (&t, &wq) in nodes.iter().zip(&wts) {
                // W^H d
                let r = free.ad_mul(&array.steering_conj(t)?);
                d += (&r * r.adjoint()).scale(wq);
            }
        }
        Ok(Self { d: crate::numerics::hermitian_part(&d), e: coherence_weight(h) })
    }

    /// Problem from explicit `D` and `E` (both Hermitian, same size).
    pub fn from_parts(d: CMatrix, e: CMatrix) -> Result<Self> {
        if !d.is_square() || d.shape() != e.shape() {
            return Err(Error::Dimension("D and E must be square and equal in size".into()));
        }
        for m in [&d, &e] {
            let dev = hermitian_deviation(m);
            if dev > 1e-12 * crate::numerics::max_abs(m).max(1.0) {
                return Err(Error::NotHermitian(dev));
            }
        }
        Ok(Self { d, e })
    }

    pub fn d(&self) -> &CMatrix {
        &self.d
    }

    pub fn e(&self) -> &CMatrix {
        &self.e
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    /// `tr(U E U^H D)`.
    pub fn objective(&self, u: &CMatrix) -> f64 {
        (u * &self.e * u.adjoint() * &self.d).trace().re
    }

    /// Riemannian gradient at `U` on the unitary group.
    pub fn gradient(&self, u: &CMatrix) -> CMatrix {
        let g = (&self.d * u * &self.e).scale(2.0);
        let a = u.ad_mul(&g);
        u * (&a - a.adjoint()).scale(0.5)
    }
}

/// `E` for `K/2` free columns.
pub fn coherence_weight(h: usize) -> CMatrix {
    if h == 2 {
        let e = nalgebra::DVector::from_vec(vec![c64::new(1.0, 0.0), c64::new(-1.0, 0.0)]);
        &e * e.adjoint()
    } else {
        CMatrix::from_element(h, h, c64::new(-1.0, 0.0))
    }
}

/// Unitary factor of a QR decomposition with positive diagonal of `R`.
fn qr_retract(m: &CMatrix) -> CMatrix {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        let rjj = r[(j, j)];
        if rjj.norm() > 0.0 {
            let ph = rjj / rjj.norm();
            q.column_mut(j).iter_mut().for_each(|z| *z *= ph);
        }
    }
    q
}

#[derive(Debug, Clone)]
pub struct RotationOutcome {
    pub unitary: UnitaryMatrix,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Steepest descent from `U = I` with QR retraction and backtracking (halving
/// from a unit step, Armijo constant `1e-4`).
pub fn optimize_rotation(problem: &RotationProblem, max_iters: usize, tol: f64) -> RotationOutcome {
    let n = problem.dim();
    let mut u = CMatrix::identity(n, n);
    let mut f = problem.objective(&u);
    let initial = f;
    let mut iterations = 0;
    let mut gnorm = crate::numerics::fro(&problem.gradient(&u));
    let mut converged = gnorm <= tol;
    while !converged && iterations < max_iters {
        iterations += 1;
        let g = problem.gradient(&u);
        let g2 = g.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let step = |t: f64| {
            let cand = qr_retract(&(&u - g.scale(t)));
            let fc = problem.objective(&cand);
            (cand, fc)
        };
        let mut t = 1.0;
        let mut best = None;
        for _ in 0..60 {
            let (cand, fc) = step(t);
            if fc <= f - 1e-4 * t * g2 {
                best = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        // keep halving while it still pays off; a barely sufficient step can
        // bounce across a narrow valley
        if let Some((_, mut fb)) = best {
            loop {
                t *= 0.5;
                let (cand, fc) = step(t);
                if fc < fb {
                    fb = fc;
                    best = Some((cand, fc));
                } else {
                    break;
                }
            }
        }
        let accepted = best.is_some();
        if let Some((cand, fc)) = best {
            u = cand;
            f = fc;
        }
        if unitarity_error(&u) > 1e-12 {
            u = qr_retract(&u);
            f = problem.objective(&u);
        }
        gnorm = crate::numerics::fro(&problem.gradient(&u));
        converged = gnorm <= tol;
        if !accepted {
            break;
        }
    }
    RotationOutcome {
        unitary: UnitaryMatrix(u),
        objective: f,
        initial_objective: initial,
        iterations,
        gradient_norm: gnorm,
        converged,
    }
}

/// Right-multiply the free columns by `U`; derived columns follow.
pub fn apply_rotation(w: &BeamspaceMatrix, u: &UnitaryMatrix) -> Result<BeamspaceMatrix> {
    if u.dim() != w.waveforms() / 2 {
        return Err(Error::Dimension(format!(
            "U is {0}x{0}, matrix has {1} free columns",
            u.dim(),
            w.waveforms() / 2
        )));
    }
    if unitarity_error(u.matrix()) > UnitaryMatrix::TOL {
        return Err(Error::InvalidArgument("U is not unitary".into()));
    }
    BeamspaceMatrix::new(w.free_columns() * u.matrix(), w.total_power())
}

/// Right-multiply an arbitrary transmit matrix by `U` (all columns).
pub fn rotate_columns(w: &CMatrix, u: &UnitaryMatrix) -> Result<CMatrix> {
    if w.ncols() != u.dim() {
        return Err(Error::Dimension(format!(
            "U is {0}x{0}, matrix has {1} columns",
            u.dim(),
            w.ncols()
        )));
    }
    Ok(w * u.matrix())
}

/// Smallest eigenvalue of a Hermitian matrix; `2 lambda_min(D)` is the
/// optimum of the `K = 4` problem.
pub fn min_eigenvalue(d: &CMatrix) -> f64 {
    *herm_eig_sym(d).values.last().expect("non-empty")
}
