//! Test-only oracles. Nothing here calls the semi-analytic Jacobians or the
//! saddle-system solver.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix6, Matrix6xX, Vector3};
use pkm_stiffness::architectures::{ManipulatorModel, TABLE_POINTS};
use pkm_stiffness::chain::{fd_jacobians, ChainJacobians, ChainModel, ChainState, IkOptions};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Finite-difference step of the energy oracle's Jacobians.
pub const ORACLE_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// ‖a − b‖ / ‖b‖ (Frobenius).
pub fn rel_err<R: nalgebra::Dim, C: nalgebra::Dim, S1, S2>(
    a: &nalgebra::Matrix<f64, R, C, S1>,
    b: &nalgebra::Matrix<f64, R, C, S2>,
) -> f64
where
    S1: nalgebra::storage::Storage<f64, R, C>,
    S2: nalgebra::storage::Storage<f64, R, C>,
{
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        num += (x - y) * (x - y);
        den += y * y;
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Workspace box spanned by the two off-centre reference points.
pub fn workspace_bounds() -> (f64, f64) {
    (TABLE_POINTS[1].1, TABLE_POINTS[2].1)
}

/// Random positions in the reference box, solved from the home configuration.
/// Unreachable draws are skipped.
pub fn random_poses(
    model: &ManipulatorModel,
    count: usize,
    rng: &mut StdRng,
) -> Vec<(Vector3<f64>, Vec<ChainState>)> {
    let (lo, hi) = workspace_bounds();
    let home = model.home_states();
    let opts = IkOptions::default();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        assert!(attempts < 20 * count, "too many unreachable draws");
        let p = Vector3::from_fn(|_, _| rng.gen_range(lo..hi));
        if let Ok(states) = model.solve_ik(&p, &home, &opts) {
            out.push((p, states));
        }
    }
    out
}

/// Minimizes ½·δθᵀ·K₀·δθ subject to J_θ·δθ + J_q·δq = δt for each unit δt
/// and returns the multiplier map, which is the chain stiffness.
///
/// The KKT matrix is equilibrated with its diagonal and solved through an SVD
/// pseudo-inverse, so a rank-deficient J_q only leaves δq undetermined.
pub fn kkt_stiffness(j_theta: &Matrix6xX<f64>, j_q: &Matrix6xX<f64>, k0: &DMatrix<f64>) -> Matrix6<f64> {
    let nt = j_theta.ncols();
    let nq = j_q.ncols();
    let n = nt + nq + 6;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (nt, nt)).copy_from(k0);
    a.view_mut((0, nt + nq), (nt, 6)).copy_from(&j_theta.transpose());
    a.view_mut((nt, nt + nq), (nq, 6)).copy_from(&j_q.transpose());
    a.view_mut((nt + nq, 0), (6, nt)).copy_from(j_theta);
    a.view_mut((nt + nq, nt), (6, nq)).copy_from(j_q);

    // scale rows and columns by the inverse square root of their largest entry
    let d = DVector::from_fn(n, |i, _| {
        let m = a.row(i).amax();
        if m > 0.0 {
            1.0 / m.sqrt()
        } else {
            1.0
        }
    });
    let scaled = DMatrix::from_fn(n, n, |i, j| d[i] * a[(i, j)] * d[j]);
    let scaled_copy = scaled.clone();
    let svd = scaled.svd(true, true);
    let mut k = Matrix6::zeros();
    for c in 0..6 {
        let mut rhs = DVector::zeros(n);
        rhs[nt + nq + c] = d[nt + nq + c];
        let mut y = svd.solve(&rhs, 1e-13).expect("svd solve");
        // iterative refinement on the equilibrated system
        for _ in 0..3 {
            let resid = &rhs - &scaled_copy * &y;
            y += svd.solve(&resid, 1e-13).expect("svd solve");
        }
        for r in 0..6 {
            // stationarity gives K₀·δθ + J_θᵀ·λ = 0, so the wrench is −λ
            k[(r, c)] = -d[nt + nq + r] * y[nt + nq + r];
        }
    }
    k
}

/// Central differences at `step` and `step / 2` combined by Richardson
/// extrapolation (fourth order).
pub fn richardson_jacobians(model: &ChainModel, state: &ChainState, step: f64) -> ChainJacobians {
    let coarse = fd_jacobians(model, state, step).expect("fd jacobians");
    let fine = fd_jacobians(model, state, 0.5 * step).expect("fd jacobians");
    ChainJacobians {
        j_theta: (4.0 * fine.j_theta - coarse.j_theta) / 3.0,
        j_q: (4.0 * fine.j_q - coarse.j_q) / 3.0,
    }
}

/// Oracle stiffness of a chain built from finite-difference Jacobians.
pub fn kkt_chain_stiffness(model: &ChainModel, state: &ChainState, k0: &DMatrix<f64>, step: f64) -> Matrix6<f64> {
    let j = richardson_jacobians(model, state, step);
    kkt_stiffness(&j.j_theta, &j.j_q, k0)
}

/// Numerical rank via singular values at `tol`·σ_max.
pub fn numerical_rank<C: nalgebra::Dim, S: nalgebra::storage::Storage<f64, nalgebra::U6, C>>(
    m: &nalgebra::Matrix<f64, nalgebra::U6, C, S>,
    tol: f64,
) -> usize {
    let d = DMatrix::from_fn(6, m.ncols(), |i, j| m[(i, j)]);
    let sv = d.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|s| smax > 0.0 && **s > tol * smax).count()
}
