use std::f64::consts::PI;

use proptest::prelude::*;
use tbeam_core::array::{beampattern, AngularGrid, DesiredLevel, SectorSpec, TransmitArray};
use tbeam_core::design::sdp::IpmSettings;
use tbeam_core::design::{
    design_joint, design_sdd, flip_conjugate, BeamspaceMatrix, DesignSettings, SdpProblem,
};
use tbeam_core::numerics::{c64, herm_eig, CMatrix, CVector, RngStream};

fn level() -> DesiredLevel {
    DesiredLevel::Linear(10f64.powf(1.5) / (4.0 * PI))
}

fn desk_problem(lo: f64, hi: f64) -> SdpProblem {
    let array = TransmitArray::half_wavelength(4).unwrap();
    let spec = SectorSpec::from_bounds(&[(lo, hi)], DesiredLevel::PowerConsistent).unwrap();
    SdpProblem::build(&spec, &array, 2, 4.0, &AngularGrid::uniform(19).unwrap()).unwrap()
}

/// Min-max objective of `w = (r cos a, s cos b e^{j p1}, s sin b e^{j p2}, r sin a e^{j p3})`,
/// which spans the rank-one feasible set up to a global phase.
fn lattice_point(params: &[f64; 5], p_t: f64) -> CMatrix {
    let r = (p_t / 4.0).sqrt();
    let [a, b, p1, p2, p3] = *params;
    CMatrix::from_column_slice(
        4,
        1,
        &[
            c64::new(r * a.cos(), 0.0),
            c64::from_polar(r * b.cos(), p1),
            c64::from_polar(r * b.sin(), p2),
            c64::from_polar(r * a.sin(), p3),
        ],
    )
}

/// Exhaustive lattice over magnitudes and phases followed by a compass
/// search from the best lattice points.
fn lattice_optimum(problem: &SdpProblem) -> f64 {
    let p_t = problem.total_power();
    let f = |x: &[f64; 5]| problem.objective(&lattice_point(x, p_t));
    let na = 12;
    let np = 24;
    let mut best: Vec<(f64, [f64; 5])> = Vec::new();
    for ia in 0..=na {
        let a = PI / 2.0 * ia as f64 / na as f64;
        for ib in 0..=na {
            let b = PI / 2.0 * ib as f64 / na as f64;
            for i1 in 0..np {
                for i2 in 0..np {
                    for i3 in 0..np {
                        let x = [
                            a,
                            b,
                            2.0 * PI * i1 as f64 / np as f64,
                            2.0 * PI * i2 as f64 / np as f64,
                            2.0 * PI * i3 as f64 / np as f64,
                        ];
                        let v = f(&x);
                        if best.len() < 16 || v < best[best.len() - 1].0 {
                            best.push((v, x));
                            best.sort_by(|p, q| p.0.total_cmp(&q.0));
                            best.truncate(16);
                        }
                    }
                }
            }
        }
    }
    let mut overall = f64::INFINITY;
    for (mut v, mut x) in best {
        let mut step = 0.1;
        while step > 1e-7 {
            let mut improved = false;
            for d in 0..5 {
                for sign in [1.0, -1.0] {
                    let mut y = x;
                    y[d] += sign * step;
                    let fy = f(&y);
                    if fy < v {
                        v = fy;
                        x = y;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        overall = overall.min(v);
    }
    overall
}

#[test]
fn relaxation_bounds_and_rounding_against_lattice_oracle() {
    for (lo, hi) in [(-20.0, 20.0), (10.0, 40.0), (-60.0, -30.0)] {
        let problem = desk_problem(lo, hi);
        let sol = problem.solve(&IpmSettings::default()).unwrap();
        assert!(sol.converged);
        let lattice = lattice_optimum(&problem);
        let mut rng = RngStream::new(7, 0);
        let rounded = problem.round(&sol, 500, &mut rng).unwrap();
        assert!(sol.delta <= lattice + 1e-9, "delta* {} > lattice {}", sol.delta, lattice);
        assert!(rounded.objective >= sol.delta - 1e-7);
        assert!(
            rounded.objective <= 1.10 * lattice,
            "rounded {} vs lattice {}",
            rounded.objective,
            lattice
        );
    }
}

#[test]
fn problem_counts() {
    let array = TransmitArray::half_wavelength(10).unwrap();
    let spec = SectorSpec::from_bounds(&[(-10.0, 10.0)], level()).unwrap();
    let grid = AngularGrid::default();
    let p = SdpProblem::build(&spec, &array, 2, 10.0, &grid).unwrap();
    assert_eq!((p.num_blocks(), p.num_inequalities(), p.num_equalities()), (1, 362, 5));
    let p4 = SdpProblem::build(&spec, &array, 4, 10.0, &grid).unwrap();
    assert_eq!((p4.num_blocks(), p4.num_equalities()), (2, 5));
    let a1 = p.power_matrix(0);
    assert_eq!(a1[(0, 0)], c64::new(1.0, 0.0));
    assert_eq!(a1[(9, 9)], c64::new(1.0, 0.0));
    assert_eq!(a1.iter().filter(|z| z.norm() > 0.0).count(), 2);
    assert!(SdpProblem::build(&spec, &array, 3, 10.0, &grid).is_err());
    assert!(SdpProblem::build(&spec, &array, 12, 10.0, &grid).is_err());
    assert!(SdpProblem::build(&spec, &array, 0, 10.0, &grid).is_err());
}

#[test]
fn flat_target_is_met_exactly() {
    let array = TransmitArray::half_wavelength(6).unwrap();
    let spec = SectorSpec::from_bounds(&[(-90.0, 90.0)], DesiredLevel::Linear(6.0 / (4.0 * PI)))
        .unwrap();
    let p = SdpProblem::build(&spec, &array, 6, 6.0, &AngularGrid::default()).unwrap();
    let sol = p.solve(&IpmSettings::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.delta.abs() < 1e-6, "delta {}", sol.delta);
}

#[test]
fn solution_meets_solver_contract() {
    let array = TransmitArray::half_wavelength(10).unwrap();
    let spec = SectorSpec::from_bounds(&[(-40.0, -20.0), (30.0, 50.0)], level()).unwrap();
    let p = SdpProblem::build(&spec, &array, 4, 10.0, &AngularGrid::default()).unwrap();
    let sol = p.solve(&IpmSettings::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.gap <= 1e-8 && sol.primal_residual <= 1e-8 && sol.dual_residual <= 1e-8);
    assert!(p.power_residual(&sol.blocks) <= 1e-6);
    for x in &sol.blocks {
        let eig = herm_eig(x).unwrap();
        let tr: f64 = eig.values.iter().sum();
        assert!(*eig.values.last().unwrap() >= -1e-8 * tr);
    }
    // delta is the actual fit error of the relaxed blocks
    assert!((p.relaxed_objective(&sol.blocks) - sol.delta).abs() <= 1e-6 * (1.0 + sol.delta));
}

fn random_feasible_blocks(p: &SdpProblem, rng: &mut RngStream) -> Vec<CMatrix> {
    let m = p.elements();
    let mut blocks: Vec<CMatrix> = (0..p.num_blocks())
        .map(|_| {
            let r = 1 + (rng.uniform() * m as f64) as usize;
            let g = CMatrix::from_fn(m, r.min(m), |_, _| rng.complex_gaussian(1.0));
            &g * g.adjoint()
        })
        .collect();
    // diagonal congruence restores the power equalities and keeps PSD
    let target = p.total_power() / m as f64;
    let mut s = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let j = m - 1 - i;
        let mut v: f64 = blocks.iter().map(|x| x[(i, i)].re + x[(j, j)].re).sum();
        if i == j {
            v = blocks.iter().map(|x| 2.0 * x[(i, i)].re).sum();
        }
        s[i] = (target / v).sqrt();
        s[j] = s[i];
    }
    for x in blocks.iter_mut() {
        for r in 0..m {
            for c in 0..m {
                x[(r, c)] *= s[r] * s[c];
            }
        }
    }
    blocks
}

#[test]
fn random_feasible_points_never_beat_the_relaxation() {
    let array = TransmitArray::half_wavelength(8).unwrap();
    let spec = SectorSpec::from_bounds(&[(-30.0, 0.0)], DesiredLevel::PowerConsistent).unwrap();
    let p = SdpProblem::build(&spec, &array, 4, 8.0, &AngularGrid::uniform(91).unwrap()).unwrap();
    let sol = p.solve(&IpmSettings::default()).unwrap();
    let mut rng = RngStream::new(3, 3);
    for _ in 0..200 {
        let x = random_feasible_blocks(&p, &mut rng);
        assert!(p.power_residual(&x) < 1e-9);
        assert!(p.relaxed_objective(&x) >= sol.delta - 1e-7);
    }
}

#[test]
fn rank_one_block_is_recovered() {
    let array = TransmitArray::half_wavelength(6).unwrap();
    let spec = SectorSpec::from_bounds(&[(-10.0, 10.0)], level()).unwrap();
    let p = SdpProblem::build(&spec, &array, 2, 6.0, &AngularGrid::default()).unwrap();
    let mut rng = RngStream::new(1, 1);
    let w = BeamspaceMatrix::normalized(
        CMatrix::from_fn(6, 1, |_, _| rng.complex_gaussian(1.0)),
        6.0,
    )
    .unwrap();
    let col = w.free_columns().column(0).into_owned();
    let sol = tbeam_core::design::SdpSolution {
        blocks: vec![&col * col.adjoint()],
        delta: 0.0,
        gap: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations: 0,
        converged: true,
    };
    let r = p.round(&sol, 10, &mut rng).unwrap();
    assert_eq!(r.rank_one_blocks, 1);
    let rec = r.matrix.free_columns().column(0);
    for i in 0..6 {
        assert!((rec[i].norm() - col[i].norm()).abs() < 1e-10);
    }
    // global phase only
    let phase = rec[0] / col[0];
    for i in 0..6 {
        assert!((rec[i] - phase * col[i]).norm() < 1e-10);
    }
}

#[test]
fn zero_block_is_rejected() {
    let p = desk_problem(-20.0, 20.0);
    let sol = tbeam_core::design::SdpSolution {
        blocks: vec![CMatrix::zeros(4, 4)],
        delta: 0.0,
        gap: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations: 0,
        converged: true,
    };
    assert!(p.round(&sol, 10, &mut RngStream::new(0, 0)).is_err());
}

#[test]
fn more_candidates_never_hurt() {
    let array = TransmitArray::half_wavelength(10).unwrap();
    let spec = SectorSpec::from_bounds(&[(-15.0, 15.0)], level()).unwrap();
    let p = SdpProblem::build(&spec, &array, 4, 10.0, &AngularGrid::default()).unwrap();
    let sol = p.solve(&IpmSettings::default()).unwrap();
    let mut last = f64::INFINITY;
    for n in [1, 5, 25, 125, 500] {
        let r = p.round(&sol, n, &mut RngStream::new(11, 2)).unwrap();
        assert!(r.objective <= last);
        assert!(r.matrix.power_error() <= 1e-10);
        last = r.objective;
    }
}

#[test]
fn design_grid_ripple_is_bounded() {
    let array = TransmitArray::half_wavelength(10).unwrap();
    let grid = AngularGrid::default();
    let fine = grid.refined(4);
    for bounds in [vec![(-10.0, 10.0)], vec![(-40.0, -20.0), (30.0, 50.0)], vec![(-10.0, 0.0)]] {
        let spec = SectorSpec::from_bounds(&bounds, level()).unwrap();
        let k = if bounds.len() == 2 { 4 } else { 2 };
        let d = design_joint(
            &spec,
            &array,
            k,
            10.0,
            &DesignSettings::default(),
            &mut RngStream::new(5, 0),
        )
        .unwrap();
        let coarse = SdpProblem::build(&spec, &array, k, 10.0, &grid).unwrap();
        let dense = SdpProblem::build(&spec, &array, k, 10.0, &fine).unwrap();
        let c = coarse.objective(d.matrix.free_columns());
        // the step target jumps at each edge; fine samples between an edge and
        // the next design-grid point outside it measure that jump, not ripple
        let step = 1.0;
        let in_transition = |t: f64| {
            !spec.contains(t)
                && spec
                    .sectors()
                    .iter()
                    .any(|s| (t - s.lo).abs() < step || (t - s.hi).abs() < step)
        };
        let f = dense
            .fit_errors(d.matrix.free_columns())
            .into_iter()
            .zip(dense.angles())
            .filter(|(_, t)| !in_transition(**t))
            .map(|(e, _)| e)
            .fold(0.0, f64::max);
        assert!((c - d.objective).abs() < 1e-9);
        assert!(f <= 1.10 * c, "{bounds:?}: fine {f} vs design grid {c}");
    }
}

#[test]
fn sdd_pairs_follow_their_subsectors() {
    let array = TransmitArray::half_wavelength(10).unwrap();
    let spec = SectorSpec::from_bounds(&[(-40.0, -20.0), (30.0, 50.0)], level()).unwrap();
    let settings = DesignSettings::default();
    let d = design_sdd(&spec, &array, 4, 10.0, None, &settings, &mut RngStream::new(2, 0)).unwrap();
    assert!(d.matrix.power_error() <= 1e-10);
    let w = d.matrix.matrix();
    let pat = |col: usize, theta: f64| {
        let single = w.columns(col, 1).into_owned();
        let g = AngularGrid::new(vec![-90.0, theta, 90.0]).unwrap();
        beampattern(&single, &array, &g).unwrap()[1]
    };
    assert!(pat(0, -30.0) > 5.0 * pat(0, 40.0));
    assert!(pat(1, 40.0) > 5.0 * pat(1, -30.0));

    // a single pair degenerates to the joint design
    let one = SectorSpec::from_bounds(&[(-10.0, 10.0)], level()).unwrap();
    let a = design_sdd(&one, &array, 2, 10.0, None, &settings, &mut RngStream::new(4, 0)).unwrap();
    let b = design_joint(&one, &array, 2, 10.0, &settings, &mut RngStream::new(4, 0)).unwrap();
    assert_eq!(a.matrix, b.matrix);
}

#[test]
fn sdd_rejects_overlapping_subsectors() {
    use tbeam_core::array::Sector;
    let array = TransmitArray::half_wavelength(10).unwrap();
    let spec = SectorSpec::from_bounds(&[(-40.0, 40.0)], level()).unwrap();
    let subs = [Sector::new(-40.0, 5.0).unwrap(), Sector::new(0.0, 40.0).unwrap()];
    let r = design_sdd(
        &spec,
        &array,
        4,
        10.0,
        Some(&subs),
        &DesignSettings::default(),
        &mut RngStream::new(0, 0),
    );
    assert!(r.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paired_columns_have_equal_response_magnitudes(
        m in 2usize..16,
        seed in any::<u64>(),
        theta in -90.0f64..90.0,
    ) {
        let mut rng = RngStream::new(seed, 0);
        let w = CVector::from_fn(m, |_, _| rng.complex_gaussian(1.0));
        let array = TransmitArray::half_wavelength(m).unwrap();
        let d = array.steering_conj(theta).unwrap();
        let a = d.dotc(&w).norm();
        let b = d.dotc(&flip_conjugate(&w)).norm();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn normalized_matrices_are_feasible(m in 2usize..14, h in 1usize..4, seed in any::<u64>()) {
        prop_assume!(2 * h <= m);
        let mut rng = RngStream::new(seed, 1);
        let free = CMatrix::from_fn(m, h, |_, _| rng.complex_gaussian(1.0));
        let b = BeamspaceMatrix::normalized(free, m as f64).unwrap();
        prop_assert!(b.power_error() <= 1e-12);
    }
}
