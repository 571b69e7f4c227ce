//! Homogeneous transforms, elementary motions and small-displacement twists.
//!
//! Lengths are millimetres and angles radians. Six-dimensional quantities
//! are always ordered translation first, rotation second: `(p_x, p_y, p_z,
//! φ_x, φ_y, φ_z)` for twists and `(f_x, f_y, f_z, m_x, m_y, m_z)` for
//! wrenches.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};

/// Tolerance on `RᵀR = I` accepted by [`Transform::try_from_matrix`].
pub const ORTHONORMALITY_TOL: f64 = 1e-9;

/// Relative tolerance on the skew-symmetry of a rotation-derivative block.
pub const SKEW_TOL: f64 = 1e-9;

/// One of the six elementary motions a chain factor can be built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementaryKind {
    TransX,
    TransY,
    TransZ,
    RotX,
    RotY,
    RotZ,
}

impl ElementaryKind {
    pub const ALL: [ElementaryKind; 6] = [
        ElementaryKind::TransX,
        ElementaryKind::TransY,
        ElementaryKind::TransZ,
        ElementaryKind::RotX,
        ElementaryKind::RotY,
        ElementaryKind::RotZ,
    ];

    pub fn is_rotation(self) -> bool {
        matches!(
            self,
            ElementaryKind::RotX | ElementaryKind::RotY | ElementaryKind::RotZ
        )
    }

    /// Slot of this motion inside a twist vector.
    pub fn twist_slot(self) -> usize {
        match self {
            ElementaryKind::TransX => 0,
            ElementaryKind::TransY => 1,
            ElementaryKind::TransZ => 2,
            ElementaryKind::RotX => 3,
            ElementaryKind::RotY => 4,
            ElementaryKind::RotZ => 5,
        }
    }

    fn axis(self) -> usize {
        self.twist_slot() % 3
    }
}

/// Rigid-body homogeneous transform (4×4, bottom row `0 0 0 1`).
#[derive(Clone, Copy, PartialEq)]
pub struct Transform(Matrix4<f64>);

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Transform{}", self.0)
    }
}

impl Default for Transform {
    fn default() -> Self {
        Transform::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Transform(Matrix4::identity())
    }

    /// Builds a transform from a rotation block and a translation.
    ///
    /// The rotation is validated against [`ORTHONORMALITY_TOL`].
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::try_from_matrix(m)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Transform(m)
    }

    pub fn try_from_matrix(m: Matrix4<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("transform has non-finite entries"));
        }
        let bottom = m.fixed_view::<1, 4>(3, 0);
        if bottom[(0, 0)] != 0.0 || bottom[(0, 1)] != 0.0 || bottom[(0, 2)] != 0.0 || bottom[(0, 3)] != 1.0
        {
            return Err(Error::input("transform bottom row must be exactly (0, 0, 0, 1)"));
        }
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let err = (r.transpose() * r - Matrix3::identity()).norm();
        if err > ORTHONORMALITY_TOL || r.determinant() <= 0.0 {
            return Err(Error::input(format!(
                "rotation block is not a proper rotation (|RᵀR - I| = {err:e})"
            )));
        }
        Ok(Transform(m))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &Transform) -> Transform {
        let mut m = self.0 * other.0;
        // keep the bottom row exact
        m[(3, 0)] = 0.0;
        m[(3, 1)] = 0.0;
        m[(3, 2)] = 0.0;
        m[(3, 3)] = 1.0;
        Transform(m)
    }

    pub fn inverse(&self) -> Transform {
        let rt = self.rotation().transpose();
        let p = -(rt * self.translation());
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p);
        Transform(m)
    }

    /// 6×6 map taking a twist expressed in this frame (origin velocity and
    /// angular velocity in local axes) to the same motion expressed in the
    /// base frame, where the translational part is the velocity of the point
    /// coinciding with the base origin.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation();
        let pr = skew(&self.translation()) * r;
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&pr);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad
    }

    /// Position distance and rotation-matrix distance to `other`.
    pub fn residual(&self, other: &Transform) -> (f64, f64) {
        (
            (self.translation() - other.translation()).norm(),
            (self.rotation() - other.rotation()).norm(),
        )
    }
}

impl Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Transform> for &'a Transform {
    type Output = Transform;

    fn mul(self, rhs: &Transform) -> Transform {
        self.compose(rhs)
    }
}

/// Standard homogeneous translation or right-handed rotation about one axis.
pub fn elementary(kind: ElementaryKind, value: f64) -> Result<Transform> {
    if !value.is_finite() {
        return Err(Error::input(format!(
            "elementary {kind:?} value must be finite, got {value}"
        )));
    }
    Ok(elementary_unchecked(kind, value))
}

pub(crate) fn elementary_unchecked(kind: ElementaryKind, value: f64) -> Transform {
    let mut m = Matrix4::identity();
    if kind.is_rotation() {
        let (s, c) = value.sin_cos();
        let (i, j) = match kind.axis() {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(i, j)] = -s;
        m[(j, i)] = s;
    } else {
        m[(kind.axis(), 3)] = value;
    }
    Transform(m)
}

/// Derivative of [`elementary`] with respect to its value, taken at zero.
///
/// Rotation seeds use the right-handed sign so that
/// `(elementary(k, h) - I) / h → derivative_seed(k)` and
/// [`twist_from_derivative`] maps every seed to its own unit twist.
pub fn derivative_seed(kind: ElementaryKind) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    if kind.is_rotation() {
        let (i, j) = match kind.axis() {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        m[(i, j)] = -1.0;
        m[(j, i)] = 1.0;
    } else {
        m[(kind.axis(), 3)] = 1.0;
    }
    m
}

/// Extracts the small-displacement twist from a transform derivative whose
/// rotation block has already been carried to the skew form `Ṙ·Rᵀ`.
///
/// Translations come from the last column, rotations from the entries
/// (3,2), (1,3), (2,1).
pub fn twist_from_derivative(tprime: &Matrix4<f64>) -> Result<Twist> {
    let bottom = tprime.fixed_view::<1, 4>(3, 0);
    let scale = tprime.norm().max(1.0);
    if bottom.norm() > SKEW_TOL * scale {
        return Err(Error::NumericalConsistency(format!(
            "transform derivative has nonzero bottom row (norm {:e})",
            bottom.norm()
        )));
    }
    let a = tprime.fixed_view::<3, 3>(0, 0);
    let asym = (a + a.transpose()).norm();
    if asym > SKEW_TOL * scale {
        return Err(Error::NumericalConsistency(format!(
            "rotation-derivative block is not skew-symmetric (|A + Aᵀ| = {asym:e})"
        )));
    }
    Ok(Twist {
        p: Vector3::new(tprime[(0, 3)], tprime[(1, 3)], tprime[(2, 3)]),
        phi: Vector3::new(tprime[(2, 1)], tprime[(0, 2)], tprime[(1, 0)]),
    })
}

/// Small displacement of frame `moved` relative to `reference`: point
/// displacement of the origin and the rotation vector of `R_moved·R_refᵀ`
/// to first order, both in base axes.
pub fn pose_difference(moved: &Transform, reference: &Transform) -> Twist {
    let dr = moved.rotation() * reference.rotation().transpose();
    Twist {
        p: moved.translation() - reference.translation(),
        phi: vee(&(0.5 * (dr - dr.transpose()))),
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Inverse of [`skew`] applied to the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Block-diagonal `diag(R, R)`.
pub fn rotate6(r: &Matrix3<f64>) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    m
}

/// Small end-effector displacement: translation (mm) and rotation (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub p: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist {
            p: v.fixed_rows::<3>(0).into_owned(),
            phi: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.p[0], self.p[1], self.p[2], self.phi[0], self.phi[1], self.phi[2],
        )
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.phi.iter()).all(|v| v.is_finite())
    }
}

/// Force (N) and moment (N·mm), the dual of [`Twist`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl Wrench {
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Wrench {
            force: v.fixed_rows::<3>(0).into_owned(),
            moment: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.force[0],
            self.force[1],
            self.force[2],
            self.moment[0],
            self.moment[1],
            self.moment[2],
        )
    }
}
