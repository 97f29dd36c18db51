//! Primal-dual path-following solver for block-diagonal semidefinite programs
//! whose constraint matrices are short sums of rank-one Hermitian terms.
//!
//! Primal:
//!
//! ```text
//! min  sum_b <C_b, X_b> + c^T x
//! s.t. sum_b <A_ib, X_b> + a_i^T x = b_i,   X_b >= 0 (Hermitian), x >= 0
//! ```
//!
//! Every `A_ib` and `C_b` is `sum_t coef_t v_t v_t^H` with `v_t` a column of a
//! shared dictionary. This keeps the Schur complement assembly at
//! `O(m^2)` products of precomputed `V^H X V` and `V^H Z^-1 V` entries.
//!
//! Search direction is HKM with Mehrotra predictor-corrector.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::numerics::{c64, herm_eig_sym, hermitian_part, CMatrix};
use crate::{Error, Result};

/// `coef * v_atom v_atom^H` placed in Hermitian block `block`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub block: usize,
    pub atom: usize,
    pub coef: f64,
}

/// Linear functional of the block and LP variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearForm {
    pub psd: Vec<Term>,
    pub lp: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub form: LinearForm,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LowRankSdp {
    /// Size of every Hermitian block.
    pub dim: usize,
    pub blocks: usize,
    pub lp_dim: usize,
    /// Dictionary of vectors, one per column.
    pub atoms: CMatrix,
    pub objective: LinearForm,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings {
    pub tol: f64,
    pub max_iters: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100,
            step_fraction: 0.95,
        }
    }
}

/// Optional primal starting point.
#[derive(Debug, Clone)]
pub struct Start {
    pub blocks: Vec<CMatrix>,
    pub lp: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub blocks: Vec<CMatrix>,
    pub lp: Vec<f64>,
    pub y: DVector<f64>,
    pub dual_blocks: Vec<CMatrix>,
    pub dual_lp: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Relative duality gap `|p - d| / (1 + |p| + |d|)`.
    pub gap: f64,
    /// `||b - A(X)|| / (1 + ||b||)`.
    pub primal_residual: f64,
    /// `||C - Z - A^*(y)|| / (1 + ||C||)`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-block term lists for one constraint: `(atom, coef)`.
type BlockTerms = Vec<Vec<(usize, f64)>>;

struct Prepared {
    /// `terms[i][b]`
    terms: Vec<BlockTerms>,
    lp: Vec<Vec<(usize, f64)>>,
    rhs: DVector<f64>,
    /// Row scaling applied to constraint i.
    scale: Vec<f64>,
    c_blocks: Vec<CMatrix>,
    c_lp: Vec<f64>,
}

impl LowRankSdp {
    fn validate(&self) -> Result<()> {
        if self.atoms.nrows() != self.dim {
            return Err(Error::Dimension(format!(
                "atoms have {} rows, blocks are {}x{}",
                self.atoms.nrows(),
                self.dim,
                self.dim
            )));
        }
        let check = |f: &LinearForm| -> Result<()> {
            for t in &f.psd {
                if t.block >= self.blocks || t.atom >= self.atoms.ncols() {
                    return Err(Error::Dimension(format!("term {t:?} out of range")));
                }
            }
            for &(l, _) in &f.lp {
                if l >= self.lp_dim {
                    return Err(Error::Dimension(format!("lp index {l} out of range")));
                }
            }
            Ok(())
        };
        check(&self.objective)?;
        for c in &self.constraints {
            check(&c.form)?;
        }
        Ok(())
    }

    fn atom_outer(&self, atom: usize) -> CMatrix {
        let v = self.atoms.column(atom);
        &v * v.adjoint()
    }

    /// Evaluate a linear form at `(X, x)`.
    pub fn eval(&self, form: &LinearForm, blocks: &[CMatrix], lp: &[f64]) -> f64 {
        let psd: f64 = form
            .psd
            .iter()
            .map(|t| {
                let v = self.atoms.column(t.atom);
                t.coef * (v.adjoint() * &blocks[t.block] * v)[(0, 0)].re
            })
            .sum();
        psd + form.lp.iter().map(|&(l, a)| a * lp[l]).sum::<f64>()
    }

    fn prepare(&self) -> Prepared {
        let n_blocks = self.blocks;
        let mut terms = Vec::with_capacity(self.constraints.len());
        let mut lp = Vec::with_capacity(self.constraints.len());
        let mut rhs = DVector::zeros(self.constraints.len());
        let mut scale = Vec::with_capacity(self.constraints.len());
        for (i, c) in self.constraints.iter().enumerate() {
            // Frobenius norm of the constraint, with rank-one terms on the
            // same atom merged
            let mut per_block: BlockTerms = vec![Vec::new(); n_blocks];
            for t in &c.form.psd {
                let list = &mut per_block[t.block];
                match list.iter_mut().find(|(a, _)| *a == t.atom) {
                    Some(e) => e.1 += t.coef,
                    None => list.push((t.atom, t.coef)),
                }
            }
            let mut norm2 = 0.0;
            for list in &per_block {
                let mut acc = CMatrix::zeros(self.dim, self.dim);
                for &(a, coef) in list {
                    acc += self.atom_outer(a).scale(coef);
                }
                norm2 += acc.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
            norm2 += c.form.lp.iter().map(|(_, a)| a * a).sum::<f64>();
            let s = if norm2 > 0.0 { 1.0 / norm2.sqrt() } else { 1.0 };
            for list in per_block.iter_mut() {
                list.iter_mut().for_each(|e| e.1 *= s);
            }
            terms.push(per_block);
            lp.push(c.form.lp.iter().map(|&(l, a)| (l, a * s)).collect());
            rhs[i] = c.rhs * s;
            scale.push(s);
        }
        let mut c_blocks = vec![CMatrix::zeros(self.dim, self.dim); n_blocks];
        for t in &self.objective.psd {
            c_blocks[t.block] += self.atom_outer(t.atom).scale(t.coef);
        }
        let mut c_lp = vec![0.0; self.lp_dim];
        for &(l, a) in &self.objective.lp {
            c_lp[l] += a;
        }
        Prepared {
            terms,
            lp,
            rhs,
            scale,
            c_blocks,
            c_lp,
        }
    }
}

fn chol_inverse(x: &CMatrix) -> Option<CMatrix> {
    Cholesky::new(hermitian_part(x)).map(|c| c.inverse())
}

/// Largest `alpha` with `X + alpha dX` PSD (infinity if unbounded).
fn max_step_psd(x: &CMatrix, dx: &CMatrix) -> f64 {
    let Some(chol) = Cholesky::new(hermitian_part(x)) else {
        return 0.0;
    };
    let l = chol.l();
    let a = l.solve_lower_triangular(dx).expect("triangular solve");
    let b = l
        .solve_lower_triangular(&a.adjoint())
        .expect("triangular solve");
    let eig = herm_eig_sym(&b);
    let min = *eig.values.last().unwrap_or(&0.0);
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

fn max_step_lp(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    // Re tr(A^H B)
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

struct Ops<'a> {
    sdp: &'a LowRankSdp,
    prep: &'a Prepared,
}

impl Ops<'_> {
    /// `A(X, x)` with Hermitian projection: uses `Re(v^H X v)`.
    fn apply(&self, blocks: &[CMatrix], lp: &[f64]) -> DVector<f64> {
        let atoms = &self.sdp.atoms;
        // precompute v^H X_b v per (block, atom) lazily via full products
        let n_atoms = atoms.ncols();
        let quad: Vec<Vec<f64>> = blocks
            .iter()
            .map(|x| {
                let xv = x * atoms;
                (0..n_atoms)
                    .map(|a| atoms.column(a).dotc(&xv.column(a)).re)
                    .collect()
            })
            .collect();
        let m = self.prep.terms.len();
        DVector::from_fn(m, |i, _| {
            let mut s = 0.0;
            for (b, list) in self.prep.terms[i].iter().enumerate() {
                for &(a, c) in list {
                    s += c * quad[b][a];
                }
            }
            for &(l, a) in &self.prep.lp[i] {
                s += a * lp[l];
            }
            s
        })
    }

    /// `A^*(y)`: per-block Hermitian matrices plus the LP part.
    fn adjoint(&self, y: &DVector<f64>) -> (Vec<CMatrix>, Vec<f64>) {
        let atoms = &self.sdp.atoms;
        let n_atoms = atoms.ncols();
        let mut weights = vec![vec![0.0; n_atoms]; self.sdp.blocks];
        let mut lp = vec![0.0; self.sdp.lp_dim];
        for (i, yi) in y.iter().enumerate() {
            for (b, list) in self.prep.terms[i].iter().enumerate() {
                for &(a, c) in list {
                    weights[b][a] += yi * c;
                }
            }
            for &(l, a) in &self.prep.lp[i] {
                lp[l] += yi * a;
            }
        }
        let blocks = weights
            .iter()
            .map(|w| {
                let mut scaled = atoms.clone();
                for (a, wa) in w.iter().enumerate() {
                    scaled.column_mut(a).iter_mut().for_each(|z| *z *= *wa);
                }
                scaled * atoms.adjoint()
            })
            .collect();
        (blocks, lp)
    }

    /// Schur complement `M_ij = <A_i, X A_j Z^-1>` (+ LP part).
    fn schur(&self, x: &[CMatrix], zinv: &[CMatrix], xl: &[f64], zl: &[f64]) -> DMatrix<f64> {
        let atoms = &self.sdp.atoms;
        let m = self.prep.terms.len();
        let p: Vec<CMatrix> = x.iter().map(|xb| atoms.adjoint() * xb * atoms).collect();
        let q: Vec<CMatrix> = zinv.iter().map(|zb| atoms.adjoint() * zb * atoms).collect();
        let ratio: Vec<f64> = xl.iter().zip(zl).map(|(x, z)| x / z).collect();
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for b in 0..self.sdp.blocks {
                    let ti = &self.prep.terms[i][b];
                    let tj = &self.prep.terms[j][b];
                    for &(a, ca) in ti {
                        for &(bb, cb) in tj {
                            s += ca * cb * (p[b][(a, bb)] * q[b][(bb, a)]).re;
                        }
                    }
                }
                for &(l, a) in &self.prep.lp[i] {
                    for &(l2, a2) in &self.prep.lp[j] {
                        if l == l2 {
                            s += a * a2 * ratio[l];
                        }
                    }
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

struct Direction {
    dx: Vec<CMatrix>,
    dxl: Vec<f64>,
    dy: DVector<f64>,
    dz: Vec<CMatrix>,
    dzl: Vec<f64>,
}

/// Solve the program. Returns the best iterate with `converged = false` when
/// the iteration cap is hit first.
pub fn solve(sdp: &LowRankSdp, start: Option<&Start>, settings: &IpmSettings) -> Result<IpmResult> {
    sdp.validate()?;
    let prep = sdp.prepare();
    let ops = Ops { sdp, prep: &prep };
    let n = sdp.dim;
    let nb = sdp.blocks;
    let m = prep.terms.len();
    let n_tot = (nb * n + sdp.lp_dim) as f64;

    let norm_b = prep.rhs.norm();
    let norm_c = (prep
        .c_blocks
        .iter()
        .map(|c| inner(c, c))
        .sum::<f64>()
        + prep.c_lp.iter().map(|c| c * c).sum::<f64>())
    .sqrt();

    // starting point
    let eta = 10f64.max((n as f64).sqrt()).max(norm_c);
    let (mut x, mut xl) = match start {
        Some(s) => {
            if s.blocks.len() != nb || s.lp.len() != sdp.lp_dim {
                return Err(Error::Dimension("starting point shape".into()));
            }
            (s.blocks.clone(), s.lp.clone())
        }
        None => {
            let xi = 10f64
                .max((n as f64).sqrt())
                .max(n as f64 * prep.rhs.iter().fold(0.0f64, |a, b| a.max(1.0 + b.abs())));
            (
                vec![CMatrix::identity(n, n).scale(xi); nb],
                vec![xi; sdp.lp_dim],
            )
        }
    };
    let mut z = vec![CMatrix::identity(n, n).scale(eta); nb];
    let mut zl = vec![eta; sdp.lp_dim];
    let mut y = DVector::<f64>::zeros(m);

    let mut result = None;
    let mut iterations = 0;
    for iter in 0..=settings.max_iters {
        iterations = iter;
        // residuals
        let ax = ops.apply(&x, &xl);
        let rp = &prep.rhs - &ax;
        let (aty, atyl) = ops.adjoint(&y);
        let rd: Vec<CMatrix> = (0..nb).map(|b| &prep.c_blocks[b] - &z[b] - &aty[b]).collect();
        let rdl: Vec<f64> = (0..sdp.lp_dim).map(|l| prep.c_lp[l] - zl[l] - atyl[l]).collect();

        let pobj: f64 = (0..nb).map(|b| inner(&prep.c_blocks[b], &x[b])).sum::<f64>()
            + prep.c_lp.iter().zip(&xl).map(|(c, x)| c * x).sum::<f64>();
        let dobj = prep.rhs.dot(&y);
        let xz: f64 = (0..nb).map(|b| inner(&x[b], &z[b])).sum::<f64>()
            + xl.iter().zip(&zl).map(|(a, b)| a * b).sum::<f64>();
        let mu = xz / n_tot;

        let p_res = rp.norm() / (1.0 + norm_b);
        let d_res = ((0..nb).map(|b| inner(&rd[b], &rd[b])).sum::<f64>()
            + rdl.iter().map(|r| r * r).sum::<f64>())
        .sqrt()
            / (1.0 + norm_c);
        let gap = (pobj - dobj).abs().max(xz) / (1.0 + pobj.abs() + dobj.abs());

        let converged = p_res <= settings.tol && d_res <= settings.tol && gap <= settings.tol;
        result = Some((pobj, dobj, gap, p_res, d_res, converged));
        if converged || iter == settings.max_iters {
            break;
        }

        let zinv: Vec<CMatrix> = match z.iter().map(chol_inverse).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => break,
        };
        let mut schur = ops.schur(&x, &zinv, &xl, &zl);
        let chol = match Cholesky::new(schur.clone()) {
            Some(c) => c,
            None => {
                let reg = 1e-14 * schur.diagonal().amax().max(1.0);
                for i in 0..m {
                    schur[(i, i)] += reg;
                }
                match Cholesky::new(schur) {
                    Some(c) => c,
                    None => break,
                }
            }
        };

        let direction = |sigma: f64, corr: Option<&Direction>| -> Direction {
            // H = sigma mu Z^-1 - X - corr Z^-1, then subtract X R_d Z^-1
            let mut h: Vec<CMatrix> = Vec::with_capacity(nb);
            for b in 0..nb {
                let mut hb = zinv[b].scale(sigma * mu) - &x[b];
                if let Some(c) = corr {
                    hb -= &c.dx[b] * &c.dz[b] * &zinv[b];
                }
                h.push(hb);
            }
            let mut hl: Vec<f64> = (0..sdp.lp_dim)
                .map(|l| {
                    let mut v = sigma * mu / zl[l] - xl[l];
                    if let Some(c) = corr {
                        v -= c.dxl[l] * c.dzl[l] / zl[l];
                    }
                    v
                })
                .collect();
            let t: Vec<CMatrix> = (0..nb).map(|b| &h[b] - &x[b] * &rd[b] * &zinv[b]).collect();
            let tl: Vec<f64> = (0..sdp.lp_dim).map(|l| hl[l] - xl[l] * rdl[l] / zl[l]).collect();
            let rhs = &rp - ops.apply(&t, &tl);
            let dy = chol.solve(&rhs);
            let (a_dy, a_dyl) = ops.adjoint(&dy);
            let dz: Vec<CMatrix> = (0..nb).map(|b| &rd[b] - &a_dy[b]).collect();
            let dzl: Vec<f64> = (0..sdp.lp_dim).map(|l| rdl[l] - a_dyl[l]).collect();
            let dx: Vec<CMatrix> = (0..nb)
                .map(|b| hermitian_part(&(&h[b] - &x[b] * &dz[b] * &zinv[b])))
                .collect();
            for l in 0..sdp.lp_dim {
                hl[l] -= xl[l] * dzl[l] / zl[l];
            }
            Direction {
                dx,
                dxl: hl,
                dy,
                dz,
                dzl,
            }
        };

        let steps = |d: &Direction| -> (f64, f64) {
            let mut ap = max_step_lp(&xl, &d.dxl);
            let mut ad = max_step_lp(&zl, &d.dzl);
            for b in 0..nb {
                ap = ap.min(max_step_psd(&x[b], &d.dx[b]));
                ad = ad.min(max_step_psd(&z[b], &d.dz[b]));
            }
            (ap, ad)
        };

        let pred = direction(0.0, None);
        let (ap, ad) = steps(&pred);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let xz_aff: f64 = (0..nb)
            .map(|b| inner(&(&x[b] + pred.dx[b].scale(ap)), &(&z[b] + pred.dz[b].scale(ad))))
            .sum::<f64>()
            + (0..sdp.lp_dim)
                .map(|l| (xl[l] + ap * pred.dxl[l]) * (zl[l] + ad * pred.dzl[l]))
                .sum::<f64>();
        let sigma = (xz_aff / xz).clamp(0.0, 1.0).powi(3);

        let corr = direction(sigma, Some(&pred));
        let (ap, ad) = steps(&corr);
        let gamma = settings.step_fraction;
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);

        for b in 0..nb {
            x[b] = hermitian_part(&(&x[b] + corr.dx[b].scale(ap)));
            z[b] = hermitian_part(&(&z[b] + corr.dz[b].scale(ad)));
        }
        for l in 0..sdp.lp_dim {
            xl[l] += ap * corr.dxl[l];
            zl[l] += ad * corr.dzl[l];
        }
        y += corr.dy.scale(ad);
    }

    let (pobj, dobj, gap, p_res, d_res, converged) =
        result.ok_or_else(|| Error::Numerical("interior point loop did not run".into()))?;
    // undo row scaling on the multipliers
    let y_unscaled = DVector::from_fn(m, |i, _| y[i] * prep.scale[i]);
    Ok(IpmResult {
        blocks: x,
        lp: xl,
        y: y_unscaled,
        dual_blocks: z,
        dual_lp: zl,
        primal_objective: pobj,
        dual_objective: dobj,
        gap,
        primal_residual: p_res,
        dual_residual: d_res,
        iterations,
        converged,
    })
}

/// Unit vector `e_i` of length `n`.
pub fn unit_atom(n: usize, i: usize) -> nalgebra::DVector<c64> {
    let mut v = nalgebra::DVector::zeros(n);
    v[i] = c64::new(1.0, 0.0);
    v
}
