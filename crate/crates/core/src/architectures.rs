//! Builders for the 3-PUU and 3-PRPaR (Orthoglide-type) translational
//! manipulators, workspace sampling and scalar stiffness indices.
//!
//! Both architectures share one chain template, written in the local frame
//! of chain `i` whose X axis is the actuator direction:
//!
//! ```text
//! T_base · Tx(q0 + θ0) · T_foot · S6(foot) · U1 · T_leg · S6(leg) · U2 · T_tool
//! ```
//!
//! For the 3-PUU, `U1 = Rz(q1)·Ry(q2)` and `U2 = Ry(q3)·Rz(q4)`: the
//! intermediate axes (Y) and the exterior axes (Z) of the two U-joints are
//! parallel, which keeps the platform in pure translation. For the 3-PRPaR
//! the leg is a parallelogram: `U1 = Rz(q1)·Ry(q2)` and `U2 = Ry(−q2)·Rz(q3)`,
//! where `Rz` are the revolute joints at the short sides and the coupled
//! `Ry` pair is the parallelogram swing. The leg spring of the 3-PRPaR is
//! recomputed at every pose from the current swing angle.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3};

use crate::chain::{
    forward, inverse_kinematics_with, jacobians, ChainElement, ChainJacobians, ChainModel,
    ChainState, IkOptions, JointAxis, SpringDof,
};
use crate::compliance::{beam_compliance, parallelogram_stiffness, stiffness_from_compliance, BeamSpec};
use crate::error::{Error, Result};
use crate::kinetostatics::{
    aggregate, assemble_manipulator, solve_chain_with_tol, AggregatedStiffness,
    ManipulatorStiffness, SpringSet, DEFAULT_RANK_TOL,
};
use crate::transforms::{ElementaryKind, Transform};

/// Diagonal points of the Orthoglide-type workspace used for point reports.
pub const TABLE_POINTS: [(&str, f64); 3] = [("Q0", 0.0), ("Q1", -73.65), ("Q2", 126.35)];

pub const PRESET_3PUU: &str = "3puu-default";
pub const PRESET_3PRPAR: &str = "3prpar-default";

// Default geometry and materials. The reference machine's numeric data is
// not available, so these are dimensionally reasonable steel values sized
// like an Orthoglide-class prototype (leg length chosen so that the
// reference diagonal points Q1 and Q2 lie inside the workspace).
pub const DEFAULT_LEG_LENGTH: f64 = 310.0;
pub const DEFAULT_FOOT_LENGTH: f64 = 80.0;
pub const DEFAULT_PLATFORM_OFFSET: f64 = 40.0;
pub const STEEL_E: f64 = 2.1e5;
pub const STEEL_G: f64 = 8.1e4;
pub const DEFAULT_K_ACT: f64 = 5.0e3;
pub const DEFAULT_ROD_DIAMETER: f64 = 20.0;
pub const DEFAULT_FOOT_SECTION: f64 = 40.0;
pub const DEFAULT_BAR_DIAMETER: f64 = 14.0;
pub const DEFAULT_SPACING: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Rod legs ended by two U-joints.
    Puu,
    /// Parallelogram legs with revolute joints at the short sides.
    Prpar,
}

impl Architecture {
    pub fn label(self) -> &'static str {
        match self {
            Architecture::Puu => "3-PUU",
            Architecture::Prpar => "3-PRPaR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelogramParams {
    /// Distance between the two bars (mm).
    pub spacing: f64,
    /// Cross-section and material of one bar; its length is the leg length.
    pub bar: BeamSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryParams {
    pub foot_length: f64,
    pub leg_length: f64,
    /// Unit actuator directions in base coordinates.
    pub actuator_axes: [Vector3<f64>; 3],
    /// End-effector point to distal joint centre, base coordinates (mm).
    pub platform_offsets: [Vector3<f64>; 3],
    /// Required by the 3-PRPaR builder.
    pub parallelogram: Option<ParallelogramParams>,
}

impl GeometryParams {
    /// Orthogonal actuator layout along X, Y, Z with default dimensions.
    pub fn orthoglide_default() -> Self {
        let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
        GeometryParams {
            foot_length: DEFAULT_FOOT_LENGTH,
            leg_length: DEFAULT_LEG_LENGTH,
            actuator_axes: axes,
            platform_offsets: axes.map(|a| -DEFAULT_PLATFORM_OFFSET * a),
            parallelogram: Some(ParallelogramParams {
                spacing: DEFAULT_SPACING,
                bar: BeamSpec::circular(DEFAULT_LEG_LENGTH, DEFAULT_BAR_DIAMETER, STEEL_E, STEEL_G),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("foot_length", self.foot_length),
            ("leg_length", self.leg_length),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::input(format!("{name} must be > 0, got {v}")));
            }
        }
        for (i, a) in self.actuator_axes.iter().enumerate() {
            if !a.iter().all(|v| v.is_finite()) || (a.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::input(format!(
                    "actuator_axes[{i}] must be a unit vector (norm {})",
                    a.norm()
                )));
            }
        }
        for (i, o) in self.platform_offsets.iter().enumerate() {
            if !o.iter().all(|v| v.is_finite()) {
                return Err(Error::input(format!("platform_offsets[{i}] is not finite")));
            }
        }
        for i in 0..3 {
            let a = self.actuator_axes[i];
            let b = self.actuator_axes[(i + 1) % 3];
            if a.cross(&b).norm() < 1e-6 {
                return Err(Error::input(format!(
                    "actuator_axes[{i}] and actuator_axes[{}] are parallel",
                    (i + 1) % 3
                )));
            }
        }
        if let Some(p) = &self.parallelogram {
            if !(p.spacing.is_finite() && p.spacing > 0.0) {
                return Err(Error::input(format!(
                    "parallelogram spacing must be > 0, got {}",
                    p.spacing
                )));
            }
            p.bar.validate()?;
        }
        Ok(())
    }

    /// Orientation of chain `i`: X along its actuator, Y the next actuator
    /// direction made orthogonal, Z completing the frame.
    pub fn chain_rotation(&self, i: usize) -> Matrix3<f64> {
        let x = self.actuator_axes[i].normalize();
        let next = self.actuator_axes[(i + 1) % 3];
        let y = (next - next.dot(&x) * x).normalize();
        let z = x.cross(&y);
        Matrix3::from_columns(&[x, y, z])
    }
}

/// Default steel springs: solid square foot, solid round rod leg.
pub fn default_springs(g: &GeometryParams) -> Result<SpringSet> {
    let foot = BeamSpec::rectangular(
        g.foot_length,
        DEFAULT_FOOT_SECTION,
        DEFAULT_FOOT_SECTION,
        STEEL_E,
        STEEL_G,
    );
    let leg = BeamSpec::circular(g.leg_length, DEFAULT_ROD_DIAMETER, STEEL_E, STEEL_G);
    SpringSet::new(
        DEFAULT_K_ACT,
        stiffness_from_compliance(&beam_compliance(&foot)?)?,
        stiffness_from_compliance(&beam_compliance(&leg)?)?,
    )
}

/// Leg spring source.
#[derive(Debug, Clone, PartialEq)]
pub enum LegStiffness {
    Fixed(Matrix6<f64>),
    /// Recomputed from the swing angle (passive coordinate 1).
    Parallelogram(ParallelogramParams),
}

#[derive(Debug, Clone)]
pub struct ArchChain {
    pub model: ChainModel,
    pub rotation: Matrix3<f64>,
    pub k_act: f64,
    pub k_foot: Matrix6<f64>,
    pub leg: LegStiffness,
    pub home: ChainState,
}

impl ArchChain {
    /// Spring set at a rigid chain state.
    pub fn springs_at(&self, state: &ChainState) -> Result<SpringSet> {
        let k_leg = match &self.leg {
            LegStiffness::Fixed(k) => *k,
            LegStiffness::Parallelogram(p) => {
                parallelogram_stiffness(&p.bar, p.spacing, state.q[1])?
            }
        };
        SpringSet::new(self.k_act, self.k_foot, k_leg)
    }
}

#[derive(Debug, Clone)]
pub struct ManipulatorModel {
    pub name: String,
    pub architecture: Architecture,
    pub geometry: GeometryParams,
    pub chains: Vec<ArchChain>,
}

fn build(g: &GeometryParams, s: &SpringSet, arch: Architecture) -> Result<ManipulatorModel> {
    g.validate()?;
    s.validate()?;
    let leg = match arch {
        Architecture::Puu => LegStiffness::Fixed(s.k_leg),
        Architecture::Prpar => {
            let p = g.parallelogram.ok_or_else(|| {
                Error::input("3-PRPaR geometry needs parallelogram spacing and bar section")
            })?;
            LegStiffness::Parallelogram(p)
        }
    };
    use ElementaryKind::*;
    let (u1, u2) = match arch {
        Architecture::Puu => (
            vec![JointAxis::free(RotZ), JointAxis::free(RotY)],
            vec![JointAxis::free(RotY), JointAxis::free(RotZ)],
        ),
        Architecture::Prpar => (
            vec![JointAxis::free(RotZ), JointAxis::free(RotY)],
            vec![JointAxis::slaved(RotY, 1, -1.0), JointAxis::free(RotZ)],
        ),
    };
    let mut chains = Vec::with_capacity(3);
    for i in 0..3 {
        let r = g.chain_rotation(i);
        let base = Transform::from_parts(r, Vector3::zeros())?;
        let tool = Transform::from_parts(r.transpose(), -(r.transpose() * g.platform_offsets[i]))?;
        let model = ChainModel::new(vec![
            ChainElement::Rigid(base),
            ChainElement::Actuated(TransX),
            ChainElement::Spring(SpringDof::One),
            ChainElement::Rigid(crate::transforms::elementary(TransX, g.foot_length)?),
            ChainElement::Spring(SpringDof::Six),
            ChainElement::Passive(u1.clone()),
            ChainElement::Rigid(crate::transforms::elementary(TransX, g.leg_length)?),
            ChainElement::Spring(SpringDof::Six),
            ChainElement::Passive(u2.clone()),
            ChainElement::Rigid(tool),
        ])?;
        // straight leg along the actuator at the home pose
        let joint = g.platform_offsets[i];
        let q0 = joint.dot(&g.actuator_axes[i]) - g.leg_length - g.foot_length;
        let home = ChainState::rigid(&model, q0, &vec![0.0; model.n_q()]);
        chains.push(ArchChain {
            model,
            rotation: r,
            k_act: s.k_act,
            k_foot: s.k_foot,
            leg: leg.clone(),
            home,
        });
    }
    Ok(ManipulatorModel {
        name: match arch {
            Architecture::Puu => PRESET_3PUU.to_string(),
            Architecture::Prpar => PRESET_3PRPAR.to_string(),
        },
        architecture: arch,
        geometry: g.clone(),
        chains,
    })
}

/// Three rod legs with U-joints at both ends, linear actuators.
pub fn build_3puu(g: &GeometryParams, s: &SpringSet) -> Result<ManipulatorModel> {
    build(g, s, Architecture::Puu)
}

/// Parallelogram legs; the leg spring in `s` is ignored and recomputed per
/// pose from the parallelogram parameters in `g`.
pub fn build_3prpar(g: &GeometryParams, s: &SpringSet) -> Result<ManipulatorModel> {
    build(g, s, Architecture::Prpar)
}

/// Named presets: [`PRESET_3PUU`] and [`PRESET_3PRPAR`].
pub fn preset(name: &str) -> Result<ManipulatorModel> {
    let g = GeometryParams::orthoglide_default();
    let s = default_springs(&g)?;
    match name {
        PRESET_3PUU => build_3puu(&g, &s),
        PRESET_3PRPAR => build_3prpar(&g, &s),
        other => Err(Error::input(format!(
            "unknown preset '{other}' (expected {PRESET_3PUU} or {PRESET_3PRPAR})"
        ))),
    }
}

/// Everything computed for one platform position.
#[derive(Debug, Clone)]
pub struct PoseAnalysis {
    pub position: Vector3<f64>,
    pub states: Vec<ChainState>,
    pub jacobians: Vec<ChainJacobians>,
    pub springs: Vec<AggregatedStiffness>,
    pub stiffness: ManipulatorStiffness,
}

impl PoseAnalysis {
    pub fn indices(&self) -> Result<StiffnessIndices> {
        stiffness_indices(&self.stiffness.k_m)
    }
}

impl ManipulatorModel {
    pub fn home_states(&self) -> Vec<ChainState> {
        self.chains.iter().map(|c| c.home.clone()).collect()
    }

    /// Platform pose for a position (the platform does not rotate).
    pub fn target(position: &Vector3<f64>) -> Transform {
        Transform::from_translation(*position)
    }

    /// Rigid inverse kinematics of all chains, each seeded by `seeds[i]`.
    pub fn solve_ik(
        &self,
        position: &Vector3<f64>,
        seeds: &[ChainState],
        opts: &IkOptions,
    ) -> Result<Vec<ChainState>> {
        if seeds.len() != self.chains.len() {
            return Err(Error::input("one IK seed per chain required"));
        }
        let target = Self::target(position);
        self.chains
            .iter()
            .zip(seeds)
            .enumerate()
            .map(|(i, (c, seed))| {
                let s = inverse_kinematics_with(&c.model, &target, seed, opts).map_err(|e| {
                    match e {
                        Error::Unreachable(m) => Error::Unreachable(format!("chain {i}: {m}")),
                        other => other,
                    }
                })?;
                // stay on the straight-leg assembly mode
                let leg_dir = forward_leg_direction(&c.model, &s)?;
                if leg_dir < 0.0 {
                    return Err(Error::Unreachable(format!(
                        "chain {i}: IK converged to the folded-leg branch"
                    )));
                }
                Ok(s)
            })
            .collect()
    }

    /// IK, Jacobians, per-pose springs and the stiffness solve at `position`.
    pub fn analyze(
        &self,
        position: &Vector3<f64>,
        seeds: &[ChainState],
        opts: &IkOptions,
        rank_tol: f64,
    ) -> Result<PoseAnalysis> {
        let states = self.solve_ik(position, seeds, opts)?;
        self.analyze_states(position, states, rank_tol)
    }

    /// Stiffness analysis at already solved chain states.
    pub fn analyze_states(
        &self,
        position: &Vector3<f64>,
        states: Vec<ChainState>,
        rank_tol: f64,
    ) -> Result<PoseAnalysis> {
        let mut jacs = Vec::with_capacity(3);
        let mut springs = Vec::with_capacity(3);
        let mut solved = Vec::with_capacity(3);
        for (c, s) in self.chains.iter().zip(&states) {
            let j = jacobians(&c.model, s)?;
            let k0 = aggregate(&c.springs_at(s)?)?;
            solved.push(solve_chain_with_tol(&j, &k0, rank_tol)?);
            jacs.push(j);
            springs.push(k0);
        }
        Ok(PoseAnalysis {
            position: *position,
            states,
            jacobians: jacs,
            springs,
            stiffness: assemble_manipulator(solved)?,
        })
    }

    /// [`Self::analyze`] seeded from the home configuration with default tolerances.
    pub fn analyze_at(&self, position: &Vector3<f64>) -> Result<PoseAnalysis> {
        self.analyze(
            position,
            &self.home_states(),
            &IkOptions::default(),
            DEFAULT_RANK_TOL,
        )
    }
}

/// Cosine between the leg and the actuator direction, in chain-local terms.
fn forward_leg_direction(model: &ChainModel, s: &ChainState) -> Result<f64> {
    // the leg direction is the local X axis after U1: Rz(q1)·Ry(q2)·x̂
    let _ = forward(model, s)?;
    Ok(s.q[0].cos() * s.q[1].cos())
}

/// Axis-aligned box of platform positions (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkspaceBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl WorkspaceBox {
    pub fn point(p: Vector3<f64>) -> Self {
        WorkspaceBox { min: p, max: p }
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        WorkspaceBox {
            min: Vector3::repeat(lo),
            max: Vector3::repeat(hi),
        }
    }
}

/// Grid positions in raster order: X slowest, Z fastest. A single sample
/// along an axis sits at the middle of the range.
pub fn grid_points(region: &WorkspaceBox, grid: [usize; 3]) -> Result<Vec<([usize; 3], Vector3<f64>)>> {
    if grid.contains(&0) {
        return Err(Error::input(format!("grid counts must be >= 1, got {grid:?}")));
    }
    for k in 0..3 {
        if !(region.min[k].is_finite() && region.max[k].is_finite()) || region.min[k] > region.max[k] {
            return Err(Error::input(format!(
                "region axis {k}: min {} must not exceed max {}",
                region.min[k], region.max[k]
            )));
        }
    }
    let coord = |k: usize, i: usize| -> f64 {
        if grid[k] == 1 {
            0.5 * (region.min[k] + region.max[k])
        } else {
            region.min[k] + (region.max[k] - region.min[k]) * i as f64 / (grid[k] - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(grid.iter().product());
    for ix in 0..grid[0] {
        for iy in 0..grid[1] {
            for iz in 0..grid[2] {
                out.push((
                    [ix, iy, iz],
                    Vector3::new(coord(0, ix), coord(1, iy), coord(2, iz)),
                ));
            }
        }
    }
    Ok(out)
}

/// A reachable workspace sample with its solved chain states.
#[derive(Debug, Clone)]
pub struct WorkspaceSample {
    pub index: [usize; 3],
    pub position: Vector3<f64>,
    pub states: Vec<ChainState>,
}

/// Solves the IK along a path of positions, each solution seeding the next.
/// Returns one entry per input position.
pub fn trace_path(
    model: &ManipulatorModel,
    points: &[([usize; 3], Vector3<f64>)],
    start: &[ChainState],
    opts: &IkOptions,
) -> Vec<std::result::Result<WorkspaceSample, (Vector3<f64>, Error)>> {
    let mut seed = start.to_vec();
    let mut out = Vec::with_capacity(points.len());
    for (index, p) in points {
        let mut result = model.solve_ik(p, &seed, opts);
        if result.is_err() && seed.as_slice() != start {
            // continuation lost the branch; retry from the path start
            result = model.solve_ik(p, start, opts);
        }
        match result {
            Ok(states) => {
                seed = states.clone();
                out.push(Ok(WorkspaceSample {
                    index: *index,
                    position: *p,
                    states,
                }));
            }
            Err(e) => out.push(Err((*p, e))),
        }
    }
    out
}

/// Reachable grid samples. Each grid line along Z is one continuation path
/// started from the home configuration.
pub fn sample_workspace(
    model: &ManipulatorModel,
    region: &WorkspaceBox,
    grid: [usize; 3],
) -> Result<Vec<WorkspaceSample>> {
    let points = grid_points(region, grid)?;
    let home = model.home_states();
    let opts = IkOptions::default();
    let mut samples = Vec::new();
    let mut first_failure = None;
    for line in points.chunks(grid[2]) {
        for r in trace_path(model, line, &home, &opts) {
            match r {
                Ok(s) => samples.push(s),
                Err((p, e)) => {
                    first_failure.get_or_insert((p, e));
                }
            }
        }
    }
    if samples.is_empty() {
        let detail = first_failure
            .map(|(p, e)| format!("first failure at ({}, {}, {}): {e}", p.x, p.y, p.z))
            .unwrap_or_default();
        return Err(Error::Unreachable(format!(
            "no reachable sample in the region; {detail}"
        )));
    }
    Ok(samples)
}

/// Scalar summary of a manipulator stiffness matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessIndices {
    /// Smallest eigenvalue of the translational 3×3 block, N/mm.
    pub k_tran: f64,
    /// Smallest eigenvalue of the rotational 3×3 block, N·mm/rad.
    pub k_rot: f64,
}

/// `k_tran` and `k_rot`: smallest eigenvalues of the translational and
/// rotational diagonal blocks of `K_m`.
pub fn stiffness_indices(k_m: &Matrix6<f64>) -> Result<StiffnessIndices> {
    let scale = k_m.norm();
    let asym = (k_m - k_m.transpose()).norm();
    if !scale.is_finite() || (scale > 0.0 && asym > 1e-9 * scale) {
        return Err(Error::input(format!(
            "stiffness matrix is not symmetric (relative asymmetry {:e})",
            asym / scale
        )));
    }
    let block_min = |at: usize| -> f64 {
        let b: Matrix3<f64> = k_m.fixed_view::<3, 3>(at, at).into_owned();
        SymmetricEigen::new(0.5 * (b + b.transpose())).eigenvalues.min()
    };
    Ok(StiffnessIndices {
        k_tran: block_min(0),
        k_rot: block_min(3),
    })
}
