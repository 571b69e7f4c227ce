//! Run configuration: TOML schema, defaults and validation.
//!
//! ```toml
//! [manipulator]
//! preset = "3puu-default"        # or "3prpar-default"
//! k_act = 5000.0                 # N/mm; `inf` for a rigid actuator
//!
//! [manipulator.geometry]         # optional, defaults from the preset
//! foot_length = 80.0
//! leg_length = 310.0
//! actuator_axes = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
//! platform_offsets = [[-40, 0, 0], [0, -40, 0], [0, 0, -40]]
//!
//! [link.foot.beam]               # one of beam, serial_beams, parallelogram, matrix6x6
//! L = 80.0
//! E = 2.1e5
//! G = 8.1e4
//! A = 1600.0
//! Iy = 213333.3
//! Iz = 213333.3
//! J = 360000.0
//!
//! [region]
//! min = [-73.65, -73.65, -73.65]
//! max = [126.35, 126.35, 126.35]
//! grid = [5, 5, 5]
//! # points = [[0, 0, 0], ...]    # explicit path instead of the grid
//!
//! [output]
//! path = "map.csv"
//! format = "csv"                 # or "jsonl"
//!
//! [tolerances]
//! ik = 1e-9
//! rank = 1e-10
//!
//! [load]
//! wrench = [0, 0, -100, 0, 0, 0] # N and N·mm, base axes
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{Matrix6, Vector3};
use pkm_stiffness::architectures::{
    build_3prpar, build_3puu, Architecture, GeometryParams, ManipulatorModel, ParallelogramParams,
    WorkspaceBox, DEFAULT_BAR_DIAMETER, DEFAULT_FOOT_SECTION, DEFAULT_K_ACT, DEFAULT_ROD_DIAMETER,
    DEFAULT_SPACING, PRESET_3PRPAR, PRESET_3PUU, STEEL_E, STEEL_G, TABLE_POINTS,
};
use pkm_stiffness::chain::IkOptions;
use pkm_stiffness::compliance::{
    actuator_stiffness, beam_compliance, serial_beam_chain, stiffness_from_compliance, BeamSpec,
    LinkCompliance,
};
use pkm_stiffness::kinetostatics::SpringSet;
use pkm_stiffness::transforms::{elementary, ElementaryKind, Transform};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Directory searched for relative config paths that do not exist as given.
pub const CONFIG_DIR_ENV: &str = "PKM_STIFFNESS_CONFIG_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub manipulator: ManipulatorSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub region: RegionSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<LoadCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipulatorSection {
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_act: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySection>,
}

impl Default for ManipulatorSection {
    fn default() -> Self {
        ManipulatorSection {
            preset: default_preset(),
            k_act: None,
            geometry: None,
        }
    }
}

fn default_preset() -> String {
    PRESET_3PUU.to_string()
}

/// Omitted fields take the preset geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub foot_length: f64,
    pub leg_length: f64,
    pub actuator_axes: [[f64; 3]; 3],
    pub platform_offsets: [[f64; 3]; 3],
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection::from_params(&GeometryParams::orthoglide_default())
    }
}

impl GeometrySection {
    fn from_params(g: &GeometryParams) -> Self {
        GeometrySection {
            foot_length: g.foot_length,
            leg_length: g.leg_length,
            actuator_axes: g.actuator_axes.map(|a| [a.x, a.y, a.z]),
            platform_offsets: g.platform_offsets.map(|a| [a.x, a.y, a.z]),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foot: Option<LinkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leg: Option<LinkSpec>,
}

/// Exactly one of the fields must be present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub serial_beams: Option<Vec<SerialBeam>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelogram: Option<ParallelogramSection>,
    /// Row-major 6×6 tip compliance, e.g. identified by FEA.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix6x6: Option<Vec<f64>>,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub L: f64,
    pub E: f64,
    pub G: f64,
    pub A: f64,
    pub Iy: f64,
    pub Iz: f64,
    pub J: f64,
}

impl BeamSection {
    fn from_spec(b: &BeamSpec) -> Self {
        BeamSection {
            L: b.length,
            E: b.youngs,
            G: b.shear,
            A: b.area,
            Iy: b.iy,
            Iz: b.iz,
            J: b.j,
        }
    }

    fn to_spec(self) -> BeamSpec {
        BeamSpec {
            length: self.L,
            youngs: self.E,
            shear: self.G,
            area: self.A,
            iy: self.Iy,
            iz: self.Iz,
            j: self.J,
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        for (name, v) in [
            ("L", self.L),
            ("E", self.E),
            ("G", self.G),
            ("A", self.A),
            ("Iy", self.Iy),
            ("Iz", self.Iz),
            ("J", self.J),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::config(format!("{path}.{name} must be > 0 (got {v})")));
            }
        }
        Ok(())
    }
}

/// A beam placed relative to the previous beam's tip. The placement is
/// `Trans(offset)·RotX·RotY·RotZ(rotation)`.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerialBeam {
    pub L: f64,
    pub E: f64,
    pub G: f64,
    pub A: f64,
    pub Iy: f64,
    pub Iz: f64,
    pub J: f64,
    #[serde(default)]
    pub offset: [f64; 3],
    #[serde(default)]
    pub rotation: [f64; 3],
}

impl SerialBeam {
    fn section(&self) -> BeamSection {
        BeamSection {
            L: self.L,
            E: self.E,
            G: self.G,
            A: self.A,
            Iy: self.Iy,
            Iz: self.Iz,
            J: self.J,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelogramSection {
    pub spacing: f64,
    pub bar: BeamSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    #[serde(default = "default_min")]
    pub min: [f64; 3],
    #[serde(default = "default_max")]
    pub max: [f64; 3],
    #[serde(default = "default_grid")]
    pub grid: [usize; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 3]>>,
}

impl Default for RegionSection {
    fn default() -> Self {
        RegionSection {
            min: default_min(),
            max: default_max(),
            grid: default_grid(),
            points: None,
        }
    }
}

fn default_min() -> [f64; 3] {
    [TABLE_POINTS[1].1; 3]
}

fn default_max() -> [f64; 3] {
    [TABLE_POINTS[2].1; 3]
}

fn default_grid() -> [usize; 3] {
    [5, 5, 5]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// IK position (mm) and rotation-matrix residual.
    #[serde(default = "default_ik_tol")]
    pub ik: f64,
    /// Relative singular-value threshold for the passive Jacobian rank.
    #[serde(default = "default_rank_tol")]
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ik: default_ik_tol(),
            rank: default_rank_tol(),
        }
    }
}

fn default_ik_tol() -> f64 {
    1e-9
}

fn default_rank_tol() -> f64 {
    1e-10
}

impl Tolerances {
    pub fn ik_options(&self) -> IkOptions {
        IkOptions {
            tolerance: self.ik,
            ..IkOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadCase {
    /// Force (N) then moment (N·mm) at the end-effector point, base axes.
    pub wrench: [f64; 6],
}

/// Resolves `path`, falling back to [`CONFIG_DIR_ENV`] for relative paths
/// that do not exist from the working directory.
pub fn locate_config(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let resolved = locate_config(path);
    let text = std::fs::read_to_string(&resolved).map_err(|e| CliError::Io {
        path: resolved.clone(),
        source: e,
    })?;
    let cfg = parse_config(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", resolved.display())))?;
    Ok(cfg)
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn architecture_of(preset: &str) -> Result<Architecture> {
    match preset {
        PRESET_3PUU => Ok(Architecture::Puu),
        PRESET_3PRPAR => Ok(Architecture::Prpar),
        other => Err(CliError::config(format!(
            "manipulator.preset: unknown preset '{other}' (expected {PRESET_3PUU} or {PRESET_3PRPAR})"
        ))),
    }
}

fn default_foot(g: &GeometryParams) -> LinkSpec {
    LinkSpec {
        beam: Some(BeamSection::from_spec(&BeamSpec::rectangular(
            g.foot_length,
            DEFAULT_FOOT_SECTION,
            DEFAULT_FOOT_SECTION,
            STEEL_E,
            STEEL_G,
        ))),
        ..Default::default()
    }
}

fn default_leg(arch: Architecture, g: &GeometryParams) -> LinkSpec {
    match arch {
        Architecture::Puu => LinkSpec {
            beam: Some(BeamSection::from_spec(&BeamSpec::circular(
                g.leg_length,
                DEFAULT_ROD_DIAMETER,
                STEEL_E,
                STEEL_G,
            ))),
            ..Default::default()
        },
        Architecture::Prpar => LinkSpec {
            parallelogram: Some(ParallelogramSection {
                spacing: DEFAULT_SPACING,
                bar: BeamSection::from_spec(&BeamSpec::circular(
                    g.leg_length,
                    DEFAULT_BAR_DIAMETER,
                    STEEL_E,
                    STEEL_G,
                )),
            }),
            ..Default::default()
        },
    }
}

fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl RunConfig {
    pub fn architecture(&self) -> Result<Architecture> {
        architecture_of(&self.manipulator.preset)
    }

    /// Copy with every optional model block filled from the preset defaults.
    pub fn resolved(&self) -> Result<RunConfig> {
        let arch = self.architecture()?;
        let mut out = self.clone();
        let g = self.geometry()?;
        out.manipulator.geometry = Some(GeometrySection::from_params(&g));
        out.manipulator.k_act.get_or_insert(DEFAULT_K_ACT);
        out.link.foot.get_or_insert_with(|| default_foot(&g));
        out.link.leg.get_or_insert_with(|| default_leg(arch, &g));
        Ok(out)
    }

    pub fn geometry(&self) -> Result<GeometryParams> {
        let mut g = GeometryParams::orthoglide_default();
        if let Some(s) = &self.manipulator.geometry {
            g.foot_length = s.foot_length;
            g.leg_length = s.leg_length;
            g.actuator_axes = s.actuator_axes.map(vec3);
            g.platform_offsets = s.platform_offsets.map(vec3);
        }
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let arch = self.architecture()?;
        if let Some(g) = &self.manipulator.geometry {
            for (name, v) in [("foot_length", g.foot_length), ("leg_length", g.leg_length)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(CliError::config(format!(
                        "manipulator.geometry.{name} must be > 0 (got {v})"
                    )));
                }
            }
            for (i, a) in g.actuator_axes.iter().enumerate() {
                let n = vec3(*a).norm();
                if !n.is_finite() || (n - 1.0).abs() > 1e-12 {
                    return Err(CliError::config(format!(
                        "manipulator.geometry.actuator_axes[{i}] must be a unit vector (norm {n})"
                    )));
                }
            }
            self.geometry()?
                .validate()
                .map_err(|e| CliError::config(format!("manipulator.geometry: {e}")))?;
        }
        if let Some(k) = self.manipulator.k_act {
            actuator_stiffness(k)
                .map_err(|_| CliError::config(format!("manipulator.k_act must be > 0 (got {k})")))?;
        }
        if let Some(foot) = &self.link.foot {
            if foot.parallelogram.is_some() {
                return Err(CliError::config(
                    "link.foot.parallelogram: only the leg may be a parallelogram",
                ));
            }
            link_compliance(foot, "link.foot")?;
        }
        if let Some(leg) = &self.link.leg {
            match (arch, leg.parallelogram.is_some()) {
                (Architecture::Prpar, false) => {
                    return Err(CliError::config(
                        "link.leg: 3-PRPaR legs need a parallelogram block",
                    ))
                }
                (Architecture::Puu, true) => {
                    return Err(CliError::config(
                        "link.leg.parallelogram: 3-PUU legs are single rods",
                    ))
                }
                _ => {}
            }
            if let Some(p) = &leg.parallelogram {
                single_kind(leg, "link.leg")?;
                parallelogram_params(p, "link.leg.parallelogram")?;
            } else {
                link_compliance(leg, "link.leg")?;
            }
        }
        let r = &self.region;
        for k in 0..3 {
            if r.grid[k] < 1 {
                return Err(CliError::config(format!("region.grid[{k}] must be >= 1 (got 0)")));
            }
            if !(r.min[k].is_finite() && r.max[k].is_finite()) || r.min[k] > r.max[k] {
                return Err(CliError::config(format!(
                    "region.min[{k}] must not exceed region.max[{k}] ({} > {})",
                    r.min[k], r.max[k]
                )));
            }
        }
        if let Some(points) = &r.points {
            if points.is_empty() {
                return Err(CliError::config("region.points must not be empty"));
            }
            if points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(CliError::config("region.points must be finite"));
            }
        }
        for (name, v) in [("ik", self.tolerances.ik), ("rank", self.tolerances.rank)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::config(format!("tolerances.{name} must be > 0 (got {v})")));
            }
        }
        if self.tolerances.rank >= 1.0 {
            return Err(CliError::config(format!(
                "tolerances.rank must be < 1 (got {})",
                self.tolerances.rank
            )));
        }
        if let Some(load) = &self.load {
            if load.wrench.iter().any(|v| !v.is_finite()) {
                return Err(CliError::config("load.wrench must be finite"));
            }
        }
        Ok(())
    }

    pub fn region_box(&self) -> WorkspaceBox {
        WorkspaceBox {
            min: vec3(self.region.min),
            max: vec3(self.region.max),
        }
    }

    /// Builds the manipulator described by the resolved config.
    pub fn build_model(&self) -> Result<ManipulatorModel> {
        let cfg = self.resolved()?;
        cfg.validate()?;
        let arch = cfg.architecture()?;
        let mut g = cfg.geometry()?;
        let k_act = actuator_stiffness(cfg.manipulator.k_act.unwrap_or(DEFAULT_K_ACT))?;
        let foot = cfg.link.foot.as_ref().expect("resolved");
        let leg = cfg.link.leg.as_ref().expect("resolved");
        let k_foot = stiffness_from_compliance(&link_compliance(foot, "link.foot")?)?;
        let (k_leg, para) = match &leg.parallelogram {
            Some(p) => (None, Some(parallelogram_params(p, "link.leg.parallelogram")?)),
            None => (
                Some(stiffness_from_compliance(&link_compliance(leg, "link.leg")?)?),
                None,
            ),
        };
        g.parallelogram = para;
        // the 3-PRPaR leg spring is replaced per pose; any SPD placeholder will do
        let springs = SpringSet::new(k_act, k_foot, k_leg.unwrap_or(k_foot))?;
        let mut model = match arch {
            Architecture::Puu => build_3puu(&g, &springs)?,
            Architecture::Prpar => build_3prpar(&g, &springs)?,
        };
        model.name = cfg.manipulator.preset.clone();
        Ok(model)
    }

    /// TOML dump of the resolved config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::config(format!("cannot serialize config: {e}")))
    }
}

fn single_kind(spec: &LinkSpec, path: &str) -> Result<()> {
    let count = [
        spec.beam.is_some(),
        spec.serial_beams.is_some(),
        spec.parallelogram.is_some(),
        spec.matrix6x6.is_some(),
    ]
    .iter()
    .filter(|b| **b)
    .count();
    if count != 1 {
        return Err(CliError::config(format!(
            "{path}: exactly one of beam, serial_beams, parallelogram, matrix6x6 is required (got {count})"
        )));
    }
    Ok(())
}

fn parallelogram_params(p: &ParallelogramSection, path: &str) -> Result<ParallelogramParams> {
    if !(p.spacing.is_finite() && p.spacing > 0.0) {
        return Err(CliError::config(format!(
            "{path}.spacing must be > 0 (got {})",
            p.spacing
        )));
    }
    p.bar.validate(&format!("{path}.bar"))?;
    Ok(ParallelogramParams {
        spacing: p.spacing,
        bar: p.bar.to_spec(),
    })
}

/// Tip compliance of a non-parallelogram link block.
fn link_compliance(spec: &LinkSpec, path: &str) -> Result<LinkCompliance> {
    single_kind(spec, path)?;
    if let Some(b) = &spec.beam {
        b.validate(&format!("{path}.beam"))?;
        return Ok(beam_compliance(&b.to_spec())?);
    }
    if let Some(list) = &spec.serial_beams {
        if list.is_empty() {
            return Err(CliError::config(format!("{path}.serial_beams must not be empty")));
        }
        let mut beams = Vec::with_capacity(list.len());
        for (i, s) in list.iter().enumerate() {
            s.section().validate(&format!("{path}.serial_beams[{i}]"))?;
            if s.offset.iter().chain(&s.rotation).any(|v| !v.is_finite()) {
                return Err(CliError::config(format!(
                    "{path}.serial_beams[{i}]: offset and rotation must be finite"
                )));
            }
            let place = Transform::from_translation(vec3(s.offset))
                * elementary(ElementaryKind::RotX, s.rotation[0])?
                * elementary(ElementaryKind::RotY, s.rotation[1])?
                * elementary(ElementaryKind::RotZ, s.rotation[2])?;
            beams.push((s.section().to_spec(), place));
        }
        return Ok(serial_beam_chain(&beams)?);
    }
    if let Some(m) = &spec.matrix6x6 {
        if m.len() != 36 {
            return Err(CliError::config(format!(
                "{path}.matrix6x6 needs 36 numbers (got {})",
                m.len()
            )));
        }
        let c = Matrix6::from_row_slice(m);
        return LinkCompliance::from_matrix(c, Transform::identity())
            .map_err(|e| CliError::config(format!("{path}.matrix6x6: {e}")));
    }
    Err(CliError::config(format!(
        "{path}: a parallelogram block is only valid for the leg"
    )))
}
