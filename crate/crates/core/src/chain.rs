//! Flexible serial model of one kinematic chain.
//!
//! A chain is an ordered product of constant transforms, one actuated
//! elementary joint (optionally carrying the 1-d.o.f. actuator spring),
//! 6-d.o.f. virtual springs and passive rotations. In the rigid reference
//! state every spring coordinate is zero and the actuated and passive
//! coordinates come from the inverse kinematics.
//!
//! Differential motions are reported as twists of the end-effector point:
//! the translational part is the displacement of the end-effector origin
//! and the rotational part is the rotation vector, both in base axes.

use nalgebra::{DVector, Matrix4, Matrix6xX, Vector6};

use crate::error::{Error, Result};
use crate::transforms::{
    derivative_seed, elementary_unchecked, pose_difference, twist_from_derivative, ElementaryKind,
    Transform,
};

/// Number of coordinates of a virtual spring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpringDof {
    /// Actuator spring. Shares the elementary motion of the preceding actuated joint.
    One,
    /// Three translations followed by three rotations about the local axes.
    Six,
}

impl SpringDof {
    pub fn count(self) -> usize {
        match self {
            SpringDof::One => 1,
            SpringDof::Six => 6,
        }
    }
}

/// How a passive axis gets its angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// Introduces a new passive coordinate.
    Independent,
    /// Follows `ratio` times an earlier passive coordinate (parallelogram swing).
    Slaved { to: usize, ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAxis {
    pub kind: ElementaryKind,
    pub coupling: Coupling,
}

impl JointAxis {
    pub fn free(kind: ElementaryKind) -> Self {
        JointAxis {
            kind,
            coupling: Coupling::Independent,
        }
    }

    pub fn slaved(kind: ElementaryKind, to: usize, ratio: f64) -> Self {
        JointAxis {
            kind,
            coupling: Coupling::Slaved { to, ratio },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainElement {
    Rigid(Transform),
    Actuated(ElementaryKind),
    Spring(SpringDof),
    /// One to three successive passive rotations (a revolute or U-joint).
    Passive(Vec<JointAxis>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    Actuated,
    Theta(usize),
    Passive(usize),
}

#[derive(Debug, Clone)]
enum Factor {
    Const(Transform),
    Var {
        kind: ElementaryKind,
        sources: Vec<(Coord, f64)>,
    },
}

/// Validated chain description together with its flattened factor list.
#[derive(Debug, Clone)]
pub struct ChainModel {
    elements: Vec<ChainElement>,
    factors: Vec<Factor>,
    n_theta: usize,
    n_q: usize,
    spring_dofs: Vec<SpringDof>,
    actuated: Option<ElementaryKind>,
}

impl ChainModel {
    pub fn new(elements: Vec<ChainElement>) -> Result<Self> {
        let mut factors = Vec::new();
        let mut n_theta = 0;
        let mut n_q = 0;
        let mut spring_dofs = Vec::new();
        let mut actuated = None;

        for (idx, el) in elements.iter().enumerate() {
            match el {
                ChainElement::Rigid(t) => factors.push(Factor::Const(*t)),
                ChainElement::Actuated(kind) => {
                    if actuated.is_some() {
                        return Err(Error::model("a chain may hold only one actuated joint"));
                    }
                    actuated = Some(*kind);
                    factors.push(Factor::Var {
                        kind: *kind,
                        sources: vec![(Coord::Actuated, 1.0)],
                    });
                }
                ChainElement::Spring(SpringDof::One) => {
                    let follows_actuator =
                        idx > 0 && matches!(elements[idx - 1], ChainElement::Actuated(_));
                    if !follows_actuator {
                        return Err(Error::model(format!(
                            "element {idx}: a 1-d.o.f. spring must immediately follow the actuated joint"
                        )));
                    }
                    match factors.last_mut() {
                        Some(Factor::Var { sources, .. }) => {
                            sources.push((Coord::Theta(n_theta), 1.0));
                        }
                        _ => unreachable!("actuated joint always emits a variable factor"),
                    }
                    n_theta += 1;
                    spring_dofs.push(SpringDof::One);
                }
                ChainElement::Spring(SpringDof::Six) => {
                    for kind in ElementaryKind::ALL {
                        factors.push(Factor::Var {
                            kind,
                            sources: vec![(Coord::Theta(n_theta), 1.0)],
                        });
                        n_theta += 1;
                    }
                    spring_dofs.push(SpringDof::Six);
                }
                ChainElement::Passive(axes) => {
                    if axes.is_empty() || axes.len() > 3 {
                        return Err(Error::model(format!(
                            "element {idx}: passive joints carry 1 to 3 axes, got {}",
                            axes.len()
                        )));
                    }
                    for axis in axes {
                        if !axis.kind.is_rotation() {
                            return Err(Error::model(format!(
                                "element {idx}: passive axis {:?} is not a rotation",
                                axis.kind
                            )));
                        }
                        let source = match axis.coupling {
                            Coupling::Independent => {
                                n_q += 1;
                                (Coord::Passive(n_q - 1), 1.0)
                            }
                            Coupling::Slaved { to, ratio } => {
                                if to >= n_q || !ratio.is_finite() {
                                    return Err(Error::model(format!(
                                        "element {idx}: slaved axis refers to passive coordinate {to}, \
                                         only {n_q} defined so far"
                                    )));
                                }
                                (Coord::Passive(to), ratio)
                            }
                        };
                        factors.push(Factor::Var {
                            kind: axis.kind,
                            sources: vec![source],
                        });
                    }
                }
            }
        }

        if !spring_dofs.contains(&SpringDof::Six) {
            return Err(Error::model(
                "a chain needs at least one 6-d.o.f. spring for a unique force solution",
            ));
        }

        Ok(ChainModel {
            elements,
            factors,
            n_theta,
            n_q,
            spring_dofs,
            actuated,
        })
    }

    pub fn elements(&self) -> &[ChainElement] {
        &self.elements
    }

    /// Number of spring coordinates.
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    /// Number of independent passive coordinates.
    pub fn n_q(&self) -> usize {
        self.n_q
    }

    /// Spring blocks in chain order; their sizes sum to `n_theta`.
    pub fn spring_dofs(&self) -> &[SpringDof] {
        &self.spring_dofs
    }

    pub fn actuated(&self) -> Option<ElementaryKind> {
        self.actuated
    }

    fn coord_value(&self, state: &ChainState, c: Coord) -> f64 {
        match c {
            Coord::Actuated => state.q0,
            Coord::Theta(i) => state.theta[i],
            Coord::Passive(i) => state.q[i],
        }
    }

    fn factor_transforms(&self, state: &ChainState) -> Vec<Transform> {
        self.factors
            .iter()
            .map(|f| match f {
                Factor::Const(t) => *t,
                Factor::Var { kind, sources } => {
                    let v = sources
                        .iter()
                        .map(|(c, g)| g * self.coord_value(state, *c))
                        .sum();
                    elementary_unchecked(*kind, v)
                }
            })
            .collect()
    }

    fn check_state(&self, state: &ChainState) -> Result<()> {
        if state.q.len() != self.n_q || state.theta.len() != self.n_theta {
            return Err(Error::input(format!(
                "state has {} passive and {} spring coordinates, model expects {} and {}",
                state.q.len(),
                state.theta.len(),
                self.n_q,
                self.n_theta
            )));
        }
        let finite = state.q0.is_finite()
            && state.q.iter().all(|v| v.is_finite())
            && state.theta.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::input("state has non-finite coordinates"));
        }
        Ok(())
    }

    /// Columns for every coordinate at `state`: actuated, springs, passive.
    fn coordinate_twists(&self, state: &ChainState) -> Result<CoordinateTwists> {
        let factors = self.factor_transforms(state);
        let n = factors.len();
        // prefix[k] = F_0 · … · F_k, suffix[k] = F_{k+1} · … · F_{n-1}
        let mut prefix = Vec::with_capacity(n);
        let mut acc = Transform::identity();
        for f in &factors {
            acc = acc * *f;
            prefix.push(acc);
        }
        let mut suffix = vec![Transform::identity(); n];
        let mut acc = Transform::identity();
        for k in (0..n).rev() {
            suffix[k] = acc;
            acc = factors[k] * acc;
        }
        let end = acc;
        let rt = end.rotation().transpose();

        let mut out = CoordinateTwists {
            actuated: None,
            theta: Matrix6xX::zeros(self.n_theta),
            q: Matrix6xX::zeros(self.n_q),
        };
        for (k, f) in self.factors.iter().enumerate() {
            let Factor::Var { kind, sources } = f else {
                continue;
            };
            let tprime: Matrix4<f64> =
                prefix[k].matrix() * derivative_seed(*kind) * suffix[k].matrix();
            let mut d = tprime;
            let rot = tprime.fixed_view::<3, 3>(0, 0) * rt;
            d.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
            let col = twist_from_derivative(&d)?.to_vector();
            for (c, gain) in sources {
                match c {
                    Coord::Actuated => {
                        *out.actuated.get_or_insert_with(Vector6::zeros) += *gain * col;
                    }
                    Coord::Theta(i) => {
                        let mut dst = out.theta.column_mut(*i);
                        dst += *gain * col;
                    }
                    Coord::Passive(i) => {
                        let mut dst = out.q.column_mut(*i);
                        dst += *gain * col;
                    }
                }
            }
        }
        Ok(out)
    }
}

struct CoordinateTwists {
    actuated: Option<Vector6<f64>>,
    theta: Matrix6xX<f64>,
    q: Matrix6xX<f64>,
}

/// Coordinates of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// Actuated coordinate (mm or rad). Ignored when the chain has no actuator.
    pub q0: f64,
    /// Independent passive coordinates (rad).
    pub q: DVector<f64>,
    /// Spring coordinates, zero in the rigid reference state.
    pub theta: DVector<f64>,
}

impl ChainState {
    pub fn zeros(model: &ChainModel) -> Self {
        ChainState {
            q0: 0.0,
            q: DVector::zeros(model.n_q()),
            theta: DVector::zeros(model.n_theta()),
        }
    }

    /// Rigid state with all spring coordinates at zero.
    pub fn rigid(model: &ChainModel, q0: f64, q: &[f64]) -> Self {
        ChainState {
            q0,
            q: DVector::from_column_slice(q),
            theta: DVector::zeros(model.n_theta()),
        }
    }

    pub fn is_rigid(&self) -> bool {
        self.theta.iter().all(|v| *v == 0.0)
    }
}

/// Spring and passive Jacobians of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainJacobians {
    /// 6×n_theta; the actuator spring, when present, is column 0.
    pub j_theta: Matrix6xX<f64>,
    /// 6×n_q.
    pub j_q: Matrix6xX<f64>,
}

/// End-effector pose for the given coordinates.
pub fn forward(model: &ChainModel, state: &ChainState) -> Result<Transform> {
    model.check_state(state)?;
    Ok(model
        .factor_transforms(state)
        .into_iter()
        .fold(Transform::identity(), |acc, f| acc * f))
}

/// Semi-analytic Jacobians: each column is the twist extracted from the
/// chain product with the corresponding elementary factor replaced by its
/// derivative seed.
pub fn jacobians(model: &ChainModel, rigid_state: &ChainState) -> Result<ChainJacobians> {
    model.check_state(rigid_state)?;
    let tw = model.coordinate_twists(rigid_state)?;
    Ok(ChainJacobians {
        j_theta: tw.theta,
        j_q: tw.q,
    })
}

/// Central-difference Jacobians computed only through [`forward`].
pub fn fd_jacobians(model: &ChainModel, rigid_state: &ChainState, step: f64) -> Result<ChainJacobians> {
    if !(1e-8..=1e-4).contains(&step) {
        return Err(Error::input(format!(
            "finite-difference step {step:e} outside [1e-8, 1e-4]"
        )));
    }
    let base = forward(model, rigid_state)?;
    let column = |perturb: &dyn Fn(&mut ChainState, f64)| -> Result<Vector6<f64>> {
        let mut plus = rigid_state.clone();
        perturb(&mut plus, step);
        let mut minus = rigid_state.clone();
        perturb(&mut minus, -step);
        let dp = pose_difference(&forward(model, &plus)?, &base).to_vector();
        let dm = pose_difference(&forward(model, &minus)?, &base).to_vector();
        Ok((dp - dm) / (2.0 * step))
    };

    let mut j_theta = Matrix6xX::zeros(model.n_theta());
    for i in 0..model.n_theta() {
        j_theta.set_column(i, &column(&|s, h| s.theta[i] += h)?);
    }
    let mut j_q = Matrix6xX::zeros(model.n_q());
    for i in 0..model.n_q() {
        j_q.set_column(i, &column(&|s, h| s.q[i] += h)?);
    }
    Ok(ChainJacobians { j_theta, j_q })
}

/// Iteration controls for [`inverse_kinematics_with`].
#[derive(Debug, Clone, Copy)]
pub struct IkOptions {
    /// Accepted position residual (mm) and rotation-matrix residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative singular-value threshold for declaring the joint Jacobian rank deficient.
    pub rank_tol: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions {
            tolerance: 1e-9,
            max_iterations: 200,
            rank_tol: 1e-10,
        }
    }
}

/// Rigid inverse kinematics with default options.
pub fn inverse_kinematics(
    model: &ChainModel,
    target: &Transform,
    guess: &ChainState,
) -> Result<ChainState> {
    inverse_kinematics_with(model, target, guess, &IkOptions::default())
}

/// Damped Newton (Levenberg-Marquardt) iteration on the 6-d pose residual
/// over the actuated and passive coordinates. Spring coordinates stay at zero.
pub fn inverse_kinematics_with(
    model: &ChainModel,
    target: &Transform,
    guess: &ChainState,
    opts: &IkOptions,
) -> Result<ChainState> {
    model.check_state(guess)?;
    let has_act = model.actuated().is_some();
    let n_unknown = model.n_q() + usize::from(has_act);
    let mut state = guess.clone();
    state.theta.fill(0.0);

    let residual = |s: &ChainState| -> Result<Vector6<f64>> {
        Ok(pose_difference(target, &forward(model, s)?).to_vector())
    };
    let apply = |s: &ChainState, dx: &DVector<f64>| -> ChainState {
        let mut next = s.clone();
        let mut offset = 0;
        if has_act {
            next.q0 += dx[0];
            offset = 1;
        }
        for i in 0..model.n_q() {
            next.q[i] += dx[offset + i];
        }
        next
    };
    let joint_jacobian = |s: &ChainState| -> Result<nalgebra::DMatrix<f64>> {
        let tw = model.coordinate_twists(s)?;
        let mut j = nalgebra::DMatrix::zeros(6, n_unknown);
        let mut offset = 0;
        if let Some(a) = tw.actuated {
            j.set_column(0, &a);
            offset = 1;
        }
        for i in 0..model.n_q() {
            j.set_column(offset + i, &tw.q.column(i));
        }
        Ok(j)
    };

    let converged = |s: &ChainState| -> Result<bool> {
        let (dp, dr) = forward(model, s)?.residual(target);
        Ok(dp <= opts.tolerance && dr <= opts.tolerance)
    };

    let mut e = residual(&state)?;
    let mut cost = e.norm_squared();
    let mut lambda = 1e-6;
    for _ in 0..opts.max_iterations {
        if converged(&state)? && cost < (opts.tolerance * 1e-3).powi(2) {
            break;
        }
        let j = joint_jacobian(&state)?;
        let jtj = j.transpose() * &j;
        let jte = j.transpose() * e;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n_unknown {
                a[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            let Some(dx) = a.lu().solve(&jte) else {
                lambda *= 10.0;
                continue;
            };
            let trial = apply(&state, &dx);
            let e_trial = residual(&trial)?;
            let c_trial = e_trial.norm_squared();
            if c_trial < cost || c_trial == 0.0 {
                state = trial;
                e = e_trial;
                cost = c_trial;
                lambda = (lambda * 0.1).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    if converged(&state)? {
        return Ok(state);
    }
    let j = joint_jacobian(&state)?;
    let sv = j.clone().svd(false, true);
    let smax = sv.singular_values.max();
    let (imin, smin) = sv.singular_values.argmin();
    let (dp, dr) = forward(model, &state)?.residual(target);
    if smax == 0.0 || smin < opts.rank_tol * smax {
        let null = sv
            .v_t
            .map(|vt| vt.row(imin).iter().copied().collect::<Vec<_>>());
        return Err(Error::SingularPosture {
            message: format!(
                "joint Jacobian rank deficient at the IK iterate (σ_min/σ_max = {:e}, residual {dp:e} mm / {dr:e})",
                if smax > 0.0 { smin / smax } else { 0.0 }
            ),
            null_direction: null,
        });
    }
    Err(Error::Unreachable(format!(
        "no convergence: position residual {dp:e} mm, rotation residual {dr:e}"
    )))
}
