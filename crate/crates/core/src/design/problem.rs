use std::f64::consts::PI;

use crate::array::{AngularGrid, SectorSpec, TransmitArray};
use crate::design::beamspace::{normalize_rows, row_pairs, BeamspaceMatrix};
use crate::design::sdp::{self, Constraint, IpmSettings, LinearForm, LowRankSdp, Start, Term};
use crate::numerics::{c64, herm_eig, hermitian_part, unit_circle_vector, CMatrix, CVector, RngStream};
use crate::{Error, Result};

/// Relaxed min-max beampattern fit over `K/2` Hermitian blocks:
///
/// ```text
/// min delta
/// s.t. |t_q - sum_k d_q^H X_k d_q| <= delta      for every grid angle
///      sum_k tr(A_i X_k) = P_t / M                for every row pair i
///      X_k >= 0
/// ```
///
/// with `t_q = 2 pi G_d(theta_q)`, half of the desired pattern on the
/// `|d^H w|^2` scale because the flipped-conjugate half of `W` doubles it.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    elements: usize,
    waveforms: usize,
    p_t: f64,
    angles: Vec<f64>,
    /// Steering vectors `d(theta_q)`, one column per angle.
    steering: CMatrix,
    targets: Vec<f64>,
}

/// Solution of the relaxation.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub blocks: Vec<CMatrix>,
    /// Optimal `delta` of the relaxation.
    pub delta: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SdpProblem {
    pub fn build(
        spec: &SectorSpec,
        array: &TransmitArray,
        waveforms: usize,
        p_t: f64,
        grid: &AngularGrid,
    ) -> Result<Self> {
        let m = array.elements();
        if waveforms == 0 || waveforms % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "K must be a positive even number, got {waveforms}"
            )));
        }
        if waveforms > m {
            return Err(Error::InvalidArgument(format!("K = {waveforms} exceeds M = {m}")));
        }
        if !(p_t > 0.0) || !p_t.is_finite() {
            return Err(Error::InvalidArgument(format!("P_t must be positive, got {p_t}")));
        }
        let angles = grid.points().to_vec();
        let mut steering = CMatrix::zeros(m, angles.len());
        for (q, &t) in angles.iter().enumerate() {
            steering.set_column(q, &array.steering_conj(t)?);
        }
        let targets = angles.iter().map(|&t| 2.0 * PI * spec.desired(t, p_t)).collect();
        Ok(Self {
            elements: m,
            waveforms,
            p_t,
            angles,
            steering,
            targets,
        })
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn waveforms(&self) -> usize {
        self.waveforms
    }

    pub fn total_power(&self) -> f64 {
        self.p_t
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Fit targets `t_q` on the `|d^H w|^2` scale.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn num_blocks(&self) -> usize {
        self.waveforms / 2
    }

    /// Two per grid angle.
    pub fn num_inequalities(&self) -> usize {
        2 * self.angles.len()
    }

    pub fn num_equalities(&self) -> usize {
        self.elements.div_ceil(2)
    }

    /// Power-constraint matrix `A_i`: ones at `(i, i)` and `(M-1-i, M-1-i)`;
    /// for the middle element of odd `M` a single entry of 2, since that
    /// antenna appears in both halves of `W`.
    pub fn power_matrix(&self, i: usize) -> CMatrix {
        let m = self.elements;
        let (a, b) = row_pairs(m)[i];
        let mut out = CMatrix::zeros(m, m);
        out[(a, a)] += c64::new(1.0, 0.0);
        out[(b, b)] += c64::new(1.0, 0.0);
        out
    }

    /// `sum_k d_q^H X_k d_q` for all q.
    pub fn relaxed_pattern(&self, blocks: &[CMatrix]) -> Vec<f64> {
        (0..self.angles.len())
            .map(|q| {
                let d = self.steering.column(q);
                blocks.iter().map(|x| d.dotc(&(x * d)).re).sum()
            })
            .collect()
    }

    /// `max_q |t_q - sum_k d_q^H X_k d_q|`.
    pub fn relaxed_objective(&self, blocks: &[CMatrix]) -> f64 {
        self.relaxed_pattern(blocks)
            .iter()
            .zip(&self.targets)
            .map(|(p, t)| (t - p).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute violation of the power equalities.
    pub fn power_residual(&self, blocks: &[CMatrix]) -> f64 {
        let target = self.p_t / self.elements as f64;
        (0..self.num_equalities())
            .map(|i| {
                let a = self.power_matrix(i);
                let v: f64 = blocks.iter().map(|x| (&a * x).trace().re).sum();
                (v - target).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Per-angle fit errors `|t_q - sum_k |d_q^H w_k|^2|` of a rank-one design.
    pub fn fit_errors(&self, free: &CMatrix) -> Vec<f64> {
        let r = self.steering.ad_mul(free);
        r.row_iter()
            .zip(&self.targets)
            .map(|(row, t)| (t - row.norm_squared()).abs())
            .collect()
    }

    /// Min-max objective of the rank-one design with the given free columns.
    pub fn objective(&self, free: &CMatrix) -> f64 {
        self.fit_errors(free).into_iter().fold(0.0, f64::max)
    }

    fn to_low_rank(&self) -> LowRankSdp {
        let m = self.elements;
        let q = self.angles.len();
        let nb = self.num_blocks();
        let mut atoms = self.steering.clone().resize_horizontally(q + m, c64::new(0.0, 0.0));
        for i in 0..m {
            atoms[(i, q + i)] = c64::new(1.0, 0.0);
        }
        // lp vars: delta, s+_q, s-_q
        let lp_dim = 1 + 2 * q;
        let mut constraints = Vec::with_capacity(2 * q + self.num_equalities());
        let pattern = |qq: usize| -> Vec<Term> {
            (0..nb).map(|b| Term { block: b, atom: qq, coef: 1.0 }).collect()
        };
        for qq in 0..q {
            constraints.push(Constraint {
                form: LinearForm { psd: pattern(qq), lp: vec![(0, 1.0), (1 + qq, -1.0)] },
                rhs: self.targets[qq],
            });
            constraints.push(Constraint {
                form: LinearForm { psd: pattern(qq), lp: vec![(0, -1.0), (1 + q + qq, 1.0)] },
                rhs: self.targets[qq],
            });
        }
        for (a, b) in row_pairs(m) {
            let mut psd = Vec::with_capacity(2 * nb);
            for blk in 0..nb {
                psd.push(Term { block: blk, atom: q + a, coef: 1.0 });
                psd.push(Term { block: blk, atom: q + b, coef: 1.0 });
            }
            constraints.push(Constraint {
                form: LinearForm { psd, lp: vec![] },
                rhs: self.p_t / m as f64,
            });
        }
        LowRankSdp {
            dim: m,
            blocks: nb,
            lp_dim,
            atoms,
            objective: LinearForm { psd: vec![], lp: vec![(0, 1.0)] },
            constraints,
        }
    }

    /// Strictly feasible interior start: scaled identity blocks meet the power
    /// equalities exactly, `delta` and the slacks are chosen strictly positive.
    fn start(&self) -> Start {
        let m = self.elements;
        let nb = self.num_blocks();
        let level = self.p_t / (self.waveforms as f64 * m as f64);
        let blocks = vec![CMatrix::identity(m, m).scale(level); nb];
        let pattern = self.relaxed_pattern(&blocks);
        let spread = pattern
            .iter()
            .zip(&self.targets)
            .map(|(p, t)| (t - p).abs())
            .fold(0.0, f64::max);
        let delta = 1.5 * spread + 1.0;
        let q = self.angles.len();
        let mut lp = vec![0.0; 1 + 2 * q];
        lp[0] = delta;
        for qq in 0..q {
            let p = pattern[qq];
            let t = self.targets[qq];
            lp[1 + qq] = p + delta - t;
            lp[1 + q + qq] = t - p + delta;
        }
        Start { blocks, lp }
    }

    /// Solve the relaxation.
    pub fn solve(&self, settings: &IpmSettings) -> Result<SdpSolution> {
        let lr = self.to_low_rank();
        let r = sdp::solve(&lr, Some(&self.start()), settings)?;
        let blocks: Vec<CMatrix> = r.blocks.iter().map(hermitian_part).collect();
        Ok(SdpSolution {
            delta: r.lp[0],
            blocks,
            gap: r.gap,
            primal_residual: r.primal_residual,
            dual_residual: r.dual_residual,
            iterations: r.iterations,
            converged: r.converged,
        })
    }

    /// Randomized rounding of the relaxed solution: draw `candidates` factor
    /// projections per block, restore the per-antenna power by joint row-pair
    /// scaling and keep the best objective. Blocks that are already rank one
    /// (`lambda_2 / lambda_1 <= 1e-8`) use the principal eigenvector directly.
    ///
    /// Candidates are drawn in sequence from `rng`, so a larger budget from
    /// the same stream sees a superset of the candidates of a smaller one.
    pub fn round(
        &self,
        solution: &SdpSolution,
        candidates: usize,
        rng: &mut RngStream,
    ) -> Result<Rounded> {
        if solution.blocks.len() != self.num_blocks() {
            return Err(Error::Dimension(format!(
                "expected {} blocks, got {}",
                self.num_blocks(),
                solution.blocks.len()
            )));
        }
        if candidates == 0 {
            return Err(Error::InvalidArgument("need at least one candidate".into()));
        }
        let m = self.elements;
        let mut factors: Vec<Option<CMatrix>> = Vec::new();
        let mut base = CMatrix::zeros(m, self.num_blocks());
        for (k, x) in solution.blocks.iter().enumerate() {
            let eig = herm_eig(x)?;
            let l1 = eig.values[0];
            if !(l1 > 0.0) {
                return Err(Error::Numerical(format!("block {k} has no positive eigenvalue")));
            }
            let l2 = eig.values.get(1).copied().unwrap_or(0.0).max(0.0);
            if l2 / l1 <= 1e-8 {
                base.set_column(k, &eig.vectors.column(0).scale(l1.sqrt()));
                factors.push(None);
            } else {
                let mut f = eig.vectors.clone();
                for (j, &v) in eig.values.iter().enumerate() {
                    let s = v.max(0.0).sqrt();
                    f.column_mut(j).iter_mut().for_each(|z| *z *= s);
                }
                factors.push(Some(f));
            }
        }
        let random_blocks = factors.iter().any(Option::is_some);
        let draws = if random_blocks { candidates } else { 1 };

        let mut best: Option<(CMatrix, f64)> = None;
        for _ in 0..draws {
            let mut free = base.clone();
            for (k, f) in factors.iter().enumerate() {
                if let Some(f) = f {
                    let v: CVector = unit_circle_vector(m, rng);
                    free.set_column(k, &(f * v));
                }
            }
            normalize_rows(&mut free, self.p_t);
            let obj = self.objective(&free);
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((free, obj));
            }
        }
        let (free, objective) = best.expect("at least one draw");
        Ok(Rounded {
            matrix: BeamspaceMatrix::new(free, self.p_t)?,
            objective,
            rank_one_blocks: factors.iter().filter(|f| f.is_none()).count(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Rounded {
    pub matrix: BeamspaceMatrix,
    /// Min-max objective of the rounded design on the problem grid.
    pub objective: f64,
    /// Blocks taken directly from the principal eigenvector.
    pub rank_one_blocks: usize,
}
