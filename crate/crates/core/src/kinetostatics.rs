//! Spring aggregation, per-chain kinetostatic solve and manipulator assembly.
//!
//! For one chain the kinetostatic model couples the differential kinematics
//! `δt = J_θ·δθ + J_q·δq`, the spring law `τ_0 = K_0·δθ` and the equilibrium
//! conditions `J_θᵀ·f = τ_0`, `J_qᵀ·f = 0`. Eliminating `δθ` leaves the
//! saddle system
//!
//! ```text
//! [ S_0   J_q ] [ f  ]   [ δt ]
//! [ J_qᵀ   0  ] [ δq ] = [ 0  ]        S_0 = J_θ·K_0⁻¹·J_θᵀ
//! ```
//!
//! whose inverse has the chain stiffness `K_i` as its leading 6×6 block.
//! The block is obtained from a symmetric block factorization of the saddle
//! matrix: a Cholesky factor `S_0 = L·Lᵀ` and an orthogonal factorization of
//! `W = L⁻¹·J_q = Q·R`, which gives `K_i = L⁻ᵀ·(I − Q·Qᵀ)·L⁻¹`.
//!
//! When `J_q` loses column rank (singular chain posture) the passive columns
//! are replaced by an orthonormal basis of their column space taken from the
//! SVD. The force response stays unique; the passive displacement is then
//! reported as the minimum-norm preimage and flagged as non-unique.

use nalgebra::{DMatrix, DVector, Matrix6, Matrix6xX, SymmetricEigen, Vector6};

use crate::chain::ChainJacobians;
use crate::error::{Error, Result};
use crate::transforms::{Twist, Wrench};

/// Default relative singular-value threshold for the passive Jacobian rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Relative asymmetry accepted (and averaged away) when summing chain stiffnesses.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Relative asymmetry accepted in user-supplied spring blocks.
pub const SPRING_SYMMETRY_TOL: f64 = 1e-12;

/// Actuator, foot and leg spring parameters of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpringSet {
    /// N/mm for prismatic actuation, N·mm/rad for rotational.
    pub k_act: f64,
    pub k_foot: Matrix6<f64>,
    pub k_leg: Matrix6<f64>,
}

impl SpringSet {
    pub fn new(k_act: f64, k_foot: Matrix6<f64>, k_leg: Matrix6<f64>) -> Result<Self> {
        let s = SpringSet {
            k_act,
            k_foot,
            k_leg,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_act.is_finite() && self.k_act > 0.0) {
            return Err(Error::model(format!(
                "actuator stiffness must be positive and finite, got {}",
                self.k_act
            )));
        }
        check_spd(&DMatrix::from_iterator(6, 6, self.k_foot.iter().copied()), "k_foot")?;
        check_spd(&DMatrix::from_iterator(6, 6, self.k_leg.iter().copied()), "k_leg")?;
        Ok(())
    }
}

/// Symmetry within [`SPRING_SYMMETRY_TOL`] and a successful Cholesky factorization.
pub(crate) fn check_spd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::model(format!("{name} has non-finite entries")));
    }
    let scale = m.norm();
    let asym = (m - m.transpose()).norm();
    if scale == 0.0 || asym > SPRING_SYMMETRY_TOL * scale {
        return Err(Error::model(format!(
            "{name} is not symmetric (relative asymmetry {:e})",
            if scale > 0.0 { asym / scale } else { f64::INFINITY }
        )));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::model(format!("{name} is not positive definite")));
    }
    Ok(())
}

/// Block-diagonal spring stiffness `K_0` of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedStiffness {
    blocks: Vec<DMatrix<f64>>,
    inverse_blocks: Vec<DMatrix<f64>>,
    dim: usize,
}

impl AggregatedStiffness {
    /// Builds `K_0` from SPD blocks listed in spring order.
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let mut inverse_blocks = Vec::with_capacity(blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            if !b.is_square() {
                return Err(Error::model(format!("spring block {i} is not square")));
            }
            check_spd(b, &format!("spring block {i}"))?;
            let inv = b
                .clone()
                .cholesky()
                .expect("checked positive definite")
                .inverse();
            inverse_blocks.push(0.5 * (&inv + inv.transpose()));
        }
        let dim = blocks.iter().map(|b| b.nrows()).sum();
        Ok(AggregatedStiffness {
            blocks,
            inverse_blocks,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    fn assemble(blocks: &[DMatrix<f64>], dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        let mut at = 0;
        for b in blocks {
            let n = b.nrows();
            m.view_mut((at, at), (n, n)).copy_from(b);
            at += n;
        }
        m
    }

    /// Dense `K_0`.
    pub fn k0(&self) -> DMatrix<f64> {
        Self::assemble(&self.blocks, self.dim)
    }

    /// Dense `K_0⁻¹`, assembled from the per-block inverses.
    pub fn k0_inverse(&self) -> DMatrix<f64> {
        Self::assemble(&self.inverse_blocks, self.dim)
    }

    /// `K_0·v` without forming the dense matrix.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_blocks(&self.blocks, v)
    }

    /// `K_0⁻¹·v` without forming the dense matrix.
    pub fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_blocks(&self.inverse_blocks, v)
    }

    fn apply_blocks(&self, blocks: &[DMatrix<f64>], v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        let mut at = 0;
        for b in blocks {
            let n = b.nrows();
            let seg = b * v.rows(at, n);
            out.rows_mut(at, n).copy_from(&seg);
            at += n;
        }
        out
    }
}

/// `K_0 = diag(k_act, K_foot, K_leg)`.
pub fn aggregate(springs: &SpringSet) -> Result<AggregatedStiffness> {
    springs.validate()?;
    AggregatedStiffness::from_blocks(vec![
        DMatrix::from_element(1, 1, springs.k_act),
        DMatrix::from_iterator(6, 6, springs.k_foot.iter().copied()),
        DMatrix::from_iterator(6, 6, springs.k_leg.iter().copied()),
    ])
}

/// Spring compliance seen at the end-effector, `S_0 = J_θ·K_0⁻¹·J_θᵀ`,
/// accumulated block by block.
pub fn chain_compliance_core(j: &ChainJacobians, k0: &AggregatedStiffness) -> Result<Matrix6<f64>> {
    if j.j_theta.ncols() != k0.dim() {
        return Err(Error::input(format!(
            "J_θ has {} columns but K_0 is {}x{}",
            j.j_theta.ncols(),
            k0.dim(),
            k0.dim()
        )));
    }
    let mut s0 = Matrix6::zeros();
    let mut at = 0;
    for inv in &k0.inverse_blocks {
        let n = inv.nrows();
        let jb = j.j_theta.columns(at, n);
        s0 += jb * inv * jb.transpose();
        at += n;
    }
    Ok(0.5 * (s0 + s0.transpose()))
}

/// The saddle matrix `[[S_0, J_q], [J_qᵀ, 0]]`.
pub fn saddle_matrix(s0: &Matrix6<f64>, j_q: &Matrix6xX<f64>) -> DMatrix<f64> {
    let nq = j_q.ncols();
    let mut m = DMatrix::zeros(6 + nq, 6 + nq);
    m.view_mut((0, 0), (6, 6)).copy_from(s0);
    m.view_mut((0, 6), (6, nq)).copy_from(j_q);
    m.view_mut((6, 0), (nq, 6)).copy_from(&j_q.transpose());
    m
}

/// Internal state of a chain for one end-effector displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainInternals {
    pub f: Wrench,
    /// Spring deflections.
    pub dtheta: DVector<f64>,
    /// Spring reactions.
    pub tau0: DVector<f64>,
    /// Passive joint displacements.
    pub dq: DVector<f64>,
    /// False when `J_q` is rank deficient and `dq` is only the minimum-norm choice.
    pub dq_unique: bool,
}

/// Solved stiffness of one chain.
#[derive(Debug, Clone)]
pub struct ChainSolveResult {
    /// `K_i`, maps the end-effector twist to the wrench this chain transmits.
    pub k_chain: Matrix6<f64>,
    /// Spring compliance at the end-effector.
    pub s0: Matrix6<f64>,
    /// Numerical rank of `J_q`.
    pub rank_jq: usize,
    /// True when the reduced (SVD) path was taken.
    pub singular: bool,
    j_theta: Matrix6xX<f64>,
    k0: AggregatedStiffness,
    dq_map: DMatrix<f64>,
}

impl ChainSolveResult {
    pub fn force(&self, dt: &Twist) -> Wrench {
        Wrench::from_vector(&(self.k_chain * dt.to_vector()))
    }

    /// Spring deflections, spring reactions and passive displacements for `dt`.
    pub fn internal(&self, dt: &Twist) -> ChainInternals {
        let f = self.k_chain * dt.to_vector();
        let jt_f = self.j_theta.transpose() * f;
        let dtheta = self.k0.apply_inverse(&jt_f);
        let tau0 = self.k0.apply(&dtheta);
        let dq = &self.dq_map * dt.to_vector();
        ChainInternals {
            f: Wrench::from_vector(&f),
            dtheta,
            tau0,
            dq,
            dq_unique: !self.singular,
        }
    }

    pub fn n_q(&self) -> usize {
        self.dq_map.nrows()
    }
}

/// Leading block of the saddle inverse for an orthonormal-or-full-rank passive
/// basis, plus the map from `δt` to the basis coefficients of the passive motion.
fn saddle_leading_block(
    s0: &Matrix6<f64>,
    basis: &DMatrix<f64>,
) -> Result<(Matrix6<f64>, DMatrix<f64>)> {
    // Jacobi equilibration: mm and rad rows of S_0 differ by orders of magnitude
    if s0.diagonal().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::model(
            "spring compliance S_0 is singular: no 6-d.o.f. spring acts on the end-effector",
        ));
    }
    let d = Matrix6::from_diagonal(&s0.diagonal().map(|v| 1.0 / v.sqrt()));
    let d_dyn = DMatrix::from_iterator(6, 6, d.iter().copied());
    let (k_s, coeff_s) = saddle_leading_block_unscaled(&(d * s0 * d), &(&d_dyn * basis))?;
    let k = d * k_s * d;
    Ok((0.5 * (k + k.transpose()), coeff_s * d_dyn))
}

fn saddle_leading_block_unscaled(
    s0: &Matrix6<f64>,
    basis: &DMatrix<f64>,
) -> Result<(Matrix6<f64>, DMatrix<f64>)> {
    let chol = s0.cholesky().ok_or_else(|| {
        Error::model("spring compliance S_0 is singular: no 6-d.o.f. spring acts on the end-effector")
    })?;
    let l = chol.l();
    let l_inv = l
        .solve_lower_triangular(&Matrix6::identity())
        .ok_or_else(|| Error::model("spring compliance S_0 has a zero pivot"))?;
    let r_cols = basis.ncols();
    if r_cols == 0 {
        let k = l_inv.transpose() * l_inv;
        return Ok((0.5 * (k + k.transpose()), DMatrix::zeros(0, 6)));
    }
    let l_inv_d = DMatrix::from_iterator(6, 6, l_inv.iter().copied());
    let w = &l_inv_d * basis;
    let qr = w.qr();
    let q = qr.q();
    let r = qr.r();
    let rmax = r.diagonal().abs().max();
    let rmin = r.diagonal().abs().min();
    if rmax == 0.0 || rmin <= 1e-14 * rmax {
        return Err(Error::DegenerateChain(format!(
            "saddle system singular: Schur factor pivot ratio {:e}",
            if rmax > 0.0 { rmin / rmax } else { 0.0 }
        )));
    }
    let projector = DMatrix::identity(6, 6) - &q * q.transpose();
    let k_dyn = l_inv_d.transpose() * projector * &l_inv_d;
    let k = Matrix6::from_iterator(k_dyn.iter().copied());
    // B = L⁻ᵀ·Q·R⁻ᵀ is the off-diagonal block of the inverse; δq = Bᵀ·δt
    let r_inv_t = r
        .transpose()
        .solve_lower_triangular(&DMatrix::identity(r_cols, r_cols))
        .ok_or_else(|| Error::DegenerateChain("Schur factor not invertible".into()))?;
    let b = l_inv_d.transpose() * &q * r_inv_t;
    Ok((0.5 * (k + k.transpose()), b.transpose()))
}

fn rank_by_svd(j_q: &Matrix6xX<f64>, tol: f64) -> (usize, nalgebra::SVD<f64, nalgebra::U6, nalgebra::Dyn>) {
    let svd = j_q.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| smax > 0.0 && **s > tol * smax)
        .count();
    (rank, svd)
}

/// Numerical column rank of `J_q` at relative tolerance `tol`.
pub fn passive_rank(j_q: &Matrix6xX<f64>, tol: f64) -> usize {
    if j_q.ncols() == 0 {
        return 0;
    }
    rank_by_svd(j_q, tol).0
}

fn check_dims(j: &ChainJacobians, k0: &AggregatedStiffness) -> Result<()> {
    if j.j_theta.ncols() != k0.dim() {
        return Err(Error::input(format!(
            "J_θ has {} columns but K_0 has dimension {}",
            j.j_theta.ncols(),
            k0.dim()
        )));
    }
    Ok(())
}

/// Chain stiffness from the saddle system. Falls back to
/// [`solve_chain_singular`] when `J_q` is column-rank deficient at
/// [`DEFAULT_RANK_TOL`].
pub fn solve_chain(j: &ChainJacobians, k0: &AggregatedStiffness) -> Result<ChainSolveResult> {
    solve_chain_with_tol(j, k0, DEFAULT_RANK_TOL)
}

/// [`solve_chain`] with an explicit rank tolerance for the singular-path switch.
pub fn solve_chain_with_tol(
    j: &ChainJacobians,
    k0: &AggregatedStiffness,
    rank_tol: f64,
) -> Result<ChainSolveResult> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::input(format!("rank tolerance {rank_tol} must lie in (0, 1)")));
    }
    check_dims(j, k0)?;
    let s0 = chain_compliance_core(j, k0)?;
    let nq = j.j_q.ncols();
    if nq > 0 && passive_rank(&j.j_q, rank_tol) < nq {
        return solve_chain_singular(j, k0, rank_tol);
    }
    let basis = DMatrix::from_iterator(6, nq, j.j_q.iter().copied());
    let (k_chain, dq_map) = saddle_leading_block(&s0, &basis)?;
    Ok(ChainSolveResult {
        k_chain,
        s0,
        rank_jq: nq,
        singular: false,
        j_theta: j.j_theta.clone(),
        k0: k0.clone(),
        dq_map,
    })
}

/// Reduced solve: `J_q` is replaced by the rank-`r` left singular basis `U_r`.
///
/// The returned force map is unique. The passive displacement is the
/// minimum-norm preimage `V_r·Σ_r⁻¹·c` of the reduced solution `c`, and is
/// flagged non-unique whenever `r < n_q`.
pub fn solve_chain_singular(
    j: &ChainJacobians,
    k0: &AggregatedStiffness,
    tol: f64,
) -> Result<ChainSolveResult> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::input(format!("rank tolerance {tol} must lie in (0, 1)")));
    }
    check_dims(j, k0)?;
    let s0 = chain_compliance_core(j, k0)?;
    let nq = j.j_q.ncols();
    if nq == 0 {
        let (k_chain, _) = saddle_leading_block(&s0, &DMatrix::zeros(6, 0))?;
        return Ok(ChainSolveResult {
            k_chain,
            s0,
            rank_jq: 0,
            singular: false,
            j_theta: j.j_theta.clone(),
            k0: k0.clone(),
            dq_map: DMatrix::zeros(0, 6),
        });
    }
    let (rank, svd) = rank_by_svd(&j.j_q, tol);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    // singular values are not guaranteed sorted
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let keep = &order[..rank];

    let mut basis = DMatrix::zeros(6, rank);
    let mut preimage = DMatrix::zeros(nq, rank);
    for (c, &idx) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(idx));
        let sigma = svd.singular_values[idx];
        for r in 0..nq {
            preimage[(r, c)] = v_t[(idx, r)] / sigma;
        }
    }
    let (k_chain, coeff_map) = saddle_leading_block(&s0, &basis)?;
    let dq_map = if rank == 0 {
        DMatrix::zeros(nq, 6)
    } else {
        preimage * coeff_map
    };
    Ok(ChainSolveResult {
        k_chain,
        s0,
        rank_jq: rank,
        singular: rank < nq,
        j_theta: j.j_theta.clone(),
        k0: k0.clone(),
        dq_map,
    })
}

/// Manipulator stiffness and the chain solves it was summed from.
#[derive(Debug, Clone)]
pub struct ManipulatorStiffness {
    pub k_m: Matrix6<f64>,
    pub per_chain: Vec<ChainSolveResult>,
}

impl ManipulatorStiffness {
    pub fn eigenvalues(&self) -> Vector6<f64> {
        SymmetricEigen::new(self.k_m).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.k_m.cholesky().is_some() && self.min_eigenvalue() > 0.0
    }
}

/// `K_m = Σ K_i`, with the sum symmetrized when its asymmetry is below
/// [`SYMMETRY_TOL`] (relative).
pub fn assemble_manipulator(chains: Vec<ChainSolveResult>) -> Result<ManipulatorStiffness> {
    if chains.is_empty() {
        return Err(Error::input("no chains to assemble"));
    }
    let k: Matrix6<f64> = chains.iter().map(|c| c.k_chain).sum();
    let k_m = symmetrized(&k, "K_m")?;
    Ok(ManipulatorStiffness {
        k_m,
        per_chain: chains,
    })
}

fn symmetrized(k: &Matrix6<f64>, name: &str) -> Result<Matrix6<f64>> {
    let scale = k.norm();
    let asym = (k - k.transpose()).norm();
    if scale > 0.0 && asym > SYMMETRY_TOL * scale {
        return Err(Error::NumericalConsistency(format!(
            "{name} relative asymmetry {:e} exceeds {SYMMETRY_TOL:e}",
            asym / scale
        )));
    }
    Ok(0.5 * (k + k.transpose()))
}

/// End-effector displacement under an external wrench, `δt = K_m⁻¹·f`.
pub fn deflection(k_m: &ManipulatorStiffness, f: &Wrench) -> Result<Twist> {
    let eig = SymmetricEigen::new(k_m.k_m);
    let (imin, lmin) = eig.eigenvalues.argmin();
    let lmax = eig.eigenvalues.amax();
    let singular = |msg: String| Error::SingularPosture {
        message: msg,
        null_direction: Some(eig.eigenvectors.column(imin).iter().copied().collect()),
    };
    if lmax == 0.0 || lmin <= 1e-14 * lmax {
        return Err(singular(format!(
            "K_m is not positive definite (λ_min = {lmin:e}, λ_max = {lmax:e})"
        )));
    }
    let chol = k_m
        .k_m
        .cholesky()
        .ok_or_else(|| singular("Cholesky factorization of K_m failed".into()))?;
    Ok(Twist::from_vector(&chol.solve(&f.to_vector())))
}

/// Passive-joint elimination through the stacked loop-closure system
///
/// ```text
/// [ I  −J_q¹            ] [ δt  ]   [ J_θ¹          ] [ δθ_1 ]
/// [ I        −J_q²      ] [ δq_1] = [      J_θ²     ] [ δθ_2 ]
/// [ I              −J_q³] [ δq_2]   [           J_θ³] [ δθ_3 ]
///                         [ δq_3]
/// ```
///
/// Solving it gives `δt = G·δθ`; with the springs as the only independent
/// coordinates, equilibrium yields `K_m = (G·K_0⁻¹·Gᵀ)⁻¹`. Only defined when
/// the stacked matrix is square and invertible, i.e. for non-overconstrained
/// architectures. The returned value carries no per-chain results.
pub fn alternative_method(
    chains: &[(ChainJacobians, AggregatedStiffness)],
) -> Result<ManipulatorStiffness> {
    if chains.len() < 2 {
        return Err(Error::input(
            "passive-joint elimination needs the full manipulator (at least two chains)",
        ));
    }
    for (j, k0) in chains {
        check_dims(j, k0)?;
    }
    let rows = 6 * chains.len();
    let cols = 6 + chains.iter().map(|(j, _)| j.j_q.ncols()).sum::<usize>();
    if rows != cols {
        return Err(Error::Overconstrained {
            rows,
            cols,
            reason: "stacked matrix is not square".into(),
        });
    }
    let n_theta: usize = chains.iter().map(|(j, _)| j.j_theta.ncols()).sum();
    let mut a = DMatrix::zeros(rows, cols);
    let mut rhs = DMatrix::zeros(rows, n_theta);
    let mut qcol = 6;
    let mut tcol = 0;
    for (i, (j, _)) in chains.iter().enumerate() {
        let r = 6 * i;
        a.view_mut((r, 0), (6, 6)).copy_from(&Matrix6::identity());
        let nq = j.j_q.ncols();
        a.view_mut((r, qcol), (6, nq)).copy_from(&(-&j.j_q));
        qcol += nq;
        let nt = j.j_theta.ncols();
        rhs.view_mut((r, tcol), (6, nt)).copy_from(&j.j_theta);
        tcol += nt;
    }

    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 || smin <= 1e-12 * smax {
        return Err(Error::Overconstrained {
            rows,
            cols,
            reason: format!(
                "stacked matrix is singular (σ_min/σ_max = {:e})",
                if smax > 0.0 { smin / smax } else { 0.0 }
            ),
        });
    }
    let x = a.full_piv_lu().solve(&rhs).ok_or_else(|| Error::Overconstrained {
        rows,
        cols,
        reason: "LU solve failed".into(),
    })?;
    let g = x.rows(0, 6);

    let mut compliance = Matrix6::zeros();
    let mut at = 0;
    for (_, k0) in chains {
        let n = k0.dim();
        let gi = g.columns(at, n);
        compliance += gi * k0.k0_inverse() * gi.transpose();
        at += n;
    }
    let compliance = 0.5 * (compliance + compliance.transpose());
    let k = compliance
        .cholesky()
        .ok_or_else(|| Error::SingularPosture {
            message: "eliminated compliance is not positive definite".into(),
            null_direction: None,
        })?
        .inverse();
    Ok(ManipulatorStiffness {
        k_m: symmetrized(&k, "K_m (elimination)")?,
        per_chain: Vec::new(),
    })
}
