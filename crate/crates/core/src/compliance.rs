//! Spring parameters: beam compliance, serial beam chains, the parallelogram
//! leg and the actuator stiffness.
//!
//! Link compliances map a wrench applied at the free tip of the link to the
//! tip twist, both expressed in the tip frame with X along the link axis.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, Matrix6, Vector3};

use crate::chain::{jacobians, ChainElement, ChainModel, ChainState, SpringDof};
use crate::error::{Error, Result};
use crate::kinetostatics::{chain_compliance_core, check_spd, AggregatedStiffness};
use crate::transforms::{elementary, rotate6, ElementaryKind, Transform};

/// Stiffness used for an actuator declared rigid (`k_act = +∞`).
pub const RIGID_ACTUATOR_STIFFNESS: f64 = 1e12;

/// Straight prismatic beam. Units: mm, N/mm², mm², mm⁴.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    pub length: f64,
    /// Young's modulus E.
    pub youngs: f64,
    /// Shear (Coulomb) modulus G.
    pub shear: f64,
    pub area: f64,
    pub iy: f64,
    pub iz: f64,
    /// Polar (torsion) moment J.
    pub j: f64,
}

impl BeamSpec {
    /// Solid circular section of diameter `d`.
    pub fn circular(length: f64, d: f64, youngs: f64, shear: f64) -> Self {
        let r = 0.5 * d;
        let i = std::f64::consts::PI * r.powi(4) / 4.0;
        BeamSpec {
            length,
            youngs,
            shear,
            area: std::f64::consts::PI * r * r,
            iy: i,
            iz: i,
            j: 2.0 * i,
        }
    }

    /// Solid rectangular section, `b` along local Y and `h` along local Z.
    pub fn rectangular(length: f64, b: f64, h: f64, youngs: f64, shear: f64) -> Self {
        let (long, short) = if b >= h { (b, h) } else { (h, b) };
        // Saint-Venant torsion constant, series approximation
        let ratio = short / long;
        let j = long * short.powi(3) * (1.0 / 3.0 - 0.21 * ratio * (1.0 - ratio.powi(4) / 12.0));
        BeamSpec {
            length,
            youngs,
            shear,
            area: b * h,
            iy: b * h.powi(3) / 12.0,
            iz: h * b.powi(3) / 12.0,
            j,
        }
    }

    /// Every parameter must be strictly positive and finite. Errors name the
    /// offending field with its symbol (`L`, `E`, `G`, `A`, `Iy`, `Iz`, `J`).
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("L", self.length),
            ("E", self.youngs),
            ("G", self.shear),
            ("A", self.area),
            ("Iy", self.iy),
            ("Iz", self.iz),
            ("J", self.j),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::input(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn scaled_section(&self, factor: f64) -> Self {
        BeamSpec {
            area: self.area * factor,
            iy: self.iy * factor,
            iz: self.iz * factor,
            j: self.j * factor,
            ..*self
        }
    }
}

/// 6×6 compliance of a link together with the frame its tip sits in.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkCompliance {
    /// Blocks in mm/N, mm/(N·mm), rad/N and rad/(N·mm).
    pub c: Matrix6<f64>,
    /// Tip frame relative to the link root.
    pub frame: Transform,
}

impl LinkCompliance {
    /// Wraps a user-supplied compliance (e.g. identified by FEA) after
    /// checking that it is symmetric positive definite.
    pub fn from_matrix(c: Matrix6<f64>, frame: Transform) -> Result<Self> {
        check_spd(&DMatrix::from_iterator(6, 6, c.iter().copied()), "compliance matrix")?;
        Ok(LinkCompliance {
            c: 0.5 * (c + c.transpose()),
            frame,
        })
    }
}

/// Cantilever compliance of a Euler-Bernoulli beam at its free tip.
pub fn beam_compliance(b: &BeamSpec) -> Result<LinkCompliance> {
    b.validate()?;
    let BeamSpec {
        length: l,
        youngs: e,
        shear: g,
        area: a,
        iy,
        iz,
        j,
    } = *b;
    let mut c = Matrix6::zeros();
    c[(0, 0)] = l / (e * a);
    c[(1, 1)] = l.powi(3) / (3.0 * e * iz);
    c[(2, 2)] = l.powi(3) / (3.0 * e * iy);
    c[(3, 3)] = l / (g * j);
    c[(4, 4)] = l / (e * iy);
    c[(5, 5)] = l / (e * iz);
    c[(2, 4)] = -l * l / (2.0 * e * iy);
    c[(4, 2)] = c[(2, 4)];
    c[(1, 5)] = l * l / (2.0 * e * iz);
    c[(5, 1)] = c[(1, 5)];
    Ok(LinkCompliance {
        c,
        frame: elementary(ElementaryKind::TransX, l)?,
    })
}

/// Inverse of a symmetric positive definite compliance.
pub fn stiffness_from_compliance(c: &LinkCompliance) -> Result<Matrix6<f64>> {
    check_spd(&DMatrix::from_iterator(6, 6, c.c.iter().copied()), "compliance matrix")?;
    let k = c
        .c
        .cholesky()
        .ok_or_else(|| Error::model("compliance matrix is not positive definite"))?
        .inverse();
    Ok(0.5 * (k + k.transpose()))
}

/// Tip compliance of beams connected in series. Each transform places a
/// beam's root relative to the previous beam's tip (the first one relative
/// to the chain root). The chain is evaluated as a passive-joint-free
/// virtual-spring chain with one 6-d.o.f. spring at every beam tip.
pub fn serial_beam_chain(beams: &[(BeamSpec, Transform)]) -> Result<LinkCompliance> {
    if beams.is_empty() {
        return Err(Error::input("serial beam chain needs at least one beam"));
    }
    let mut elements = Vec::with_capacity(3 * beams.len());
    let mut blocks = Vec::with_capacity(beams.len());
    for (beam, placement) in beams {
        let link = beam_compliance(beam)?;
        let k = stiffness_from_compliance(&link)?;
        elements.push(ChainElement::Rigid(*placement));
        elements.push(ChainElement::Rigid(link.frame));
        elements.push(ChainElement::Spring(SpringDof::Six));
        blocks.push(DMatrix::from_iterator(6, 6, k.iter().copied()));
    }
    let model = ChainModel::new(elements)?;
    let state = ChainState::zeros(&model);
    let tip = crate::chain::forward(&model, &state)?;
    let j = jacobians(&model, &state)?;
    let k0 = AggregatedStiffness::from_blocks(blocks)?;
    let s0 = chain_compliance_core(&j, &k0)?;
    // S_0 is in base axes; bring it to the tip frame
    let back = rotate6(&tip.rotation().transpose());
    let c = back * s0 * back.transpose();
    Ok(LinkCompliance {
        c: 0.5 * (c + c.transpose()),
        frame: tip,
    })
}

/// Stiffness of a parallelogram leg made of two identical bars, seen at the
/// centre of its distal short side.
///
/// The leg frame has X along the bars and Y normal to the parallelogram
/// plane (the swing axis). At `angle = 0` the short sides lie along Z; a
/// swing by `angle` about Y keeps the short sides parallel to their
/// original direction, which in the leg frame is `(−sin angle, 0, cos angle)`.
/// Each bar is a cantilever clamped to the proximal short side; the two bar
/// stiffnesses are carried to the common tip frame with the adjoint and added.
/// The swing direction keeps a finite bar-bending stiffness here; in a chain
/// model it is released by the passive swing joint.
pub fn parallelogram_stiffness(bar: &BeamSpec, spacing: f64, angle: f64) -> Result<Matrix6<f64>> {
    bar.validate()?;
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::input(format!(
            "parallelogram spacing must be > 0, got {spacing}"
        )));
    }
    if !(angle.is_finite() && angle.abs() < FRAC_PI_2) {
        return Err(Error::input(format!(
            "parallelogram angle must satisfy |angle| < π/2, got {angle}"
        )));
    }
    let k_bar = stiffness_from_compliance(&beam_compliance(bar)?)?;
    let side = Vector3::new(-angle.sin(), 0.0, angle.cos());
    let mut k = Matrix6::zeros();
    for sign in [1.0, -1.0] {
        let offset = Transform::from_translation(sign * 0.5 * spacing * side);
        let to_bar = offset.inverse().adjoint();
        k += to_bar.transpose() * k_bar * to_bar;
    }
    Ok(0.5 * (k + k.transpose()))
}

/// Validates a measured actuator stiffness. `+∞` stands for a rigid actuator
/// and maps to [`RIGID_ACTUATOR_STIFFNESS`].
pub fn actuator_stiffness(k_act_input: f64) -> Result<f64> {
    if k_act_input == f64::INFINITY {
        return Ok(RIGID_ACTUATOR_STIFFNESS);
    }
    if !(k_act_input.is_finite() && k_act_input > 0.0) {
        return Err(Error::input(format!(
            "actuator stiffness must be positive, got {k_act_input}"
        )));
    }
    Ok(k_act_input)
}
