use nalgebra::{DVector, Matrix6, Vector3, Vector6};
use pkm_stiffness::architectures::{
    grid_points, preset, trace_path, ManipulatorModel, PoseAnalysis, StiffnessIndices, PRESET_3PRPAR,
    PRESET_3PUU, TABLE_POINTS,
};
use pkm_stiffness::chain::IkOptions;
use pkm_stiffness::kinetostatics::deflection;
use pkm_stiffness::transforms::{Twist, Wrench};
use pkm_stiffness::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, Tolerances};
use crate::error::{CliError, Result};

/// One reachable workspace sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub k_tran: f64,
    pub k_rot: f64,
    /// Row-major `K_m`.
    pub k_m: Vec<f64>,
    pub rank_jq: Vec<usize>,
    pub singular: bool,
}

impl MapRecord {
    fn from_analysis(a: &PoseAnalysis) -> Result<Self> {
        let StiffnessIndices { k_tran, k_rot } = a.indices()?;
        let k = &a.stiffness.k_m;
        Ok(MapRecord {
            x: a.position.x,
            y: a.position.y,
            z: a.position.z,
            k_tran,
            k_rot,
            k_m: (0..6).flat_map(|i| (0..6).map(move |j| k[(i, j)])).collect(),
            rank_jq: a.stiffness.per_chain.iter().map(|c| c.rank_jq).collect(),
            singular: a.stiffness.per_chain.iter().any(|c| c.singular),
        })
    }

    pub fn k_matrix(&self) -> Matrix6<f64> {
        Matrix6::from_row_slice(&self.k_m)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<MapRecord>,
    pub requested: usize,
    /// Positions dropped because the inverse kinematics failed.
    pub skipped: Vec<(Vector3<f64>, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Stats {
        let n = values.clone().count() as f64;
        Stats {
            min: values.clone().fold(f64::INFINITY, f64::min),
            max: values.clone().fold(f64::NEG_INFINITY, f64::max),
            mean: values.sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub samples: usize,
    pub requested: usize,
    pub k_tran: Stats,
    pub k_rot: Stats,
}

impl SweepResult {
    pub fn summary(&self) -> Summary {
        Summary {
            samples: self.records.len(),
            requested: self.requested,
            k_tran: Stats::of(self.records.iter().map(|r| r.k_tran)),
            k_rot: Stats::of(self.records.iter().map(|r| r.k_rot)),
        }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "samples: {} reachable of {}", self.samples, self.requested)?;
        for (name, unit, s) in [
            ("k_tran", "N/mm", self.k_tran),
            ("k_rot", "N*mm/rad", self.k_rot),
        ] {
            writeln!(
                f,
                "{name} [{unit}]: min {:.6e}  max {:.6e}  mean {:.6e}",
                s.min, s.max, s.mean
            )?;
        }
        Ok(())
    }
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(0) => Err(CliError::config("--threads must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

type LineOutcome = Vec<std::result::Result<MapRecord, (Vector3<f64>, Error)>>;

fn run_line(
    model: &ManipulatorModel,
    line: &[([usize; 3], Vector3<f64>)],
    tol: &Tolerances,
) -> std::result::Result<LineOutcome, CliError> {
    let opts = tol.ik_options();
    let mut out = Vec::with_capacity(line.len());
    for sample in trace_path(model, line, &model.home_states(), &opts) {
        match sample {
            Ok(s) => {
                let a = model
                    .analyze_states(&s.position, s.states, tol.rank)
                    .map_err(|e| at_pose(&s.position, e))?;
                out.push(Ok(MapRecord::from_analysis(&a)?));
            }
            Err(fail) => out.push(Err(fail)),
        }
    }
    Ok(out)
}

fn at_pose(p: &Vector3<f64>, e: Error) -> CliError {
    let msg = format!("at ({}, {}, {}): {e}", p.x, p.y, p.z);
    CliError::Model(match e {
        Error::Input(_) => Error::Input(msg),
        Error::Model(_) => Error::Model(msg),
        Error::Unreachable(_) => Error::Unreachable(msg),
        Error::DegenerateChain(_) => Error::DegenerateChain(msg),
        Error::NumericalConsistency(_) => Error::NumericalConsistency(msg),
        Error::SingularPosture { null_direction, .. } => Error::SingularPosture {
            message: msg,
            null_direction,
        },
        other => other,
    })
}

/// Stiffness map over the configured grid (or point path). Grid lines along
/// Z are independent continuation paths and run in parallel; records come
/// back in raster order regardless of the thread count.
pub fn run_sweep(cfg: &RunConfig, threads: Option<usize>) -> Result<SweepResult> {
    let model = cfg.build_model()?;
    let (points, line_len) = match &cfg.region.points {
        Some(p) => {
            let pts: Vec<_> = p
                .iter()
                .enumerate()
                .map(|(i, v)| ([i, 0, 0], Vector3::new(v[0], v[1], v[2])))
                .collect();
            let n = pts.len();
            (pts, n)
        }
        None => (grid_points(&cfg.region_box(), cfg.region.grid)?, cfg.region.grid[2]),
    };
    let tol = cfg.tolerances;
    let lines: Vec<_> = points.chunks(line_len).collect();
    let outcomes = with_threads(threads, || {
        lines
            .par_iter()
            .map(|line| run_line(&model, line, &tol))
            .collect::<Vec<_>>()
    })?;

    let mut records = Vec::with_capacity(points.len());
    let mut skipped = Vec::new();
    for line in outcomes {
        for r in line? {
            match r {
                Ok(rec) => records.push(rec),
                Err((p, e)) => skipped.push((p, e.to_string())),
            }
        }
    }
    if records.is_empty() {
        let first = skipped
            .first()
            .map(|(p, e)| format!("first failure at ({}, {}, {}): {e}", p.x, p.y, p.z))
            .unwrap_or_default();
        return Err(Error::Unreachable(format!("no reachable sample in the region; {first}")).into());
    }
    Ok(SweepResult {
        records,
        requested: points.len(),
        skipped,
    })
}

/// Rigid IK at `p`, first from the home configuration and then along the
/// straight path from the home position.
pub fn solve_pose(model: &ManipulatorModel, p: &Vector3<f64>, opts: &IkOptions) -> Result<Vec<pkm_stiffness::chain::ChainState>> {
    let home = model.home_states();
    match model.solve_ik(p, &home, opts) {
        Ok(s) => Ok(s),
        Err(first) => {
            const STEPS: usize = 16;
            let path: Vec<_> = (1..=STEPS)
                .map(|i| ([i, 0, 0], p * (i as f64 / STEPS as f64)))
                .collect();
            match trace_path(model, &path, &home, opts).pop() {
                Some(Ok(s)) => Ok(s.states),
                _ => Err(at_pose(p, first)),
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub k_chain: Vec<Vec<f64>>,
    pub rank_jq: usize,
    pub singular: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainLoad {
    /// Wrench transmitted by the chain (N, N·mm).
    pub f: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub tau0: Vec<f64>,
    pub dq: Vec<f64>,
    /// False when the passive displacement is one of many (minimum-norm choice).
    pub dq_unique: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoadReport {
    pub wrench: Vec<f64>,
    /// Translation (mm) then rotation (rad).
    pub deflection: Vec<f64>,
    pub chains: Vec<ChainLoad>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub manipulator: String,
    pub position: [f64; 3],
    pub k_m: Vec<Vec<f64>>,
    pub k_tran: f64,
    pub k_rot: f64,
    pub units: Units,
    pub chains: Vec<ChainReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load: Option<LoadReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Units {
    pub length: &'static str,
    pub k_tran: &'static str,
    pub k_rot: &'static str,
}

const UNITS: Units = Units {
    length: "mm",
    k_tran: "N/mm",
    k_rot: "N*mm/rad",
};

fn rows(m: &Matrix6<f64>) -> Vec<Vec<f64>> {
    (0..6).map(|i| (0..6).map(|j| m[(i, j)]).collect()).collect()
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Full stiffness report at one position, with internals for an optional load.
pub fn run_point(cfg: &RunConfig, p: Vector3<f64>, wrench: Option<[f64; 6]>) -> Result<PointReport> {
    let model = cfg.build_model()?;
    let states = solve_pose(&model, &p, &cfg.tolerances.ik_options())?;
    let a = model
        .analyze_states(&p, states, cfg.tolerances.rank)
        .map_err(|e| at_pose(&p, e))?;
    let idx = a.indices()?;
    let load = match wrench.or(cfg.load.map(|l| l.wrench)) {
        None => None,
        Some(w) => {
            let w6 = Vector6::from_row_slice(&w);
            let dt = if w6.iter().all(|v| *v == 0.0) {
                Twist::zero()
            } else {
                deflection(&a.stiffness, &Wrench::from_vector(&w6)).map_err(|e| at_pose(&p, e))?
            };
            let chains = a
                .stiffness
                .per_chain
                .iter()
                .map(|c| {
                    let i = c.internal(&dt);
                    ChainLoad {
                        f: i.f.to_vector().iter().copied().collect(),
                        dtheta: to_vec(&i.dtheta),
                        tau0: to_vec(&i.tau0),
                        dq: to_vec(&i.dq),
                        dq_unique: i.dq_unique,
                    }
                })
                .collect();
            Some(LoadReport {
                wrench: w.to_vec(),
                deflection: dt.to_vector().iter().copied().collect(),
                chains,
            })
        }
    };
    Ok(PointReport {
        manipulator: model.name.clone(),
        position: [p.x, p.y, p.z],
        k_m: rows(&a.stiffness.k_m),
        k_tran: idx.k_tran,
        k_rot: idx.k_rot,
        units: UNITS,
        chains: a
            .stiffness
            .per_chain
            .iter()
            .map(|c| ChainReport {
                k_chain: rows(&c.k_chain),
                rank_jq: c.rank_jq,
                singular: c.singular,
            })
            .collect(),
        load,
    })
}

/// One row of the two-architecture, three-point comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRecord {
    pub architecture: String,
    pub point: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub k_tran: f64,
    pub k_rot: f64,
    /// `1 / k_tran`, mm/N.
    pub c_tran: f64,
    /// `1 / k_rot`, rad/(N·mm).
    pub c_rot: f64,
}

/// Both presets at the diagonal reference points, architecture-major with
/// the points in the order Q0, Q1, Q2.
pub fn run_table(tol: &Tolerances) -> Result<Vec<TableRecord>> {
    let mut out = Vec::with_capacity(6);
    for name in [PRESET_3PUU, PRESET_3PRPAR] {
        let model = preset(name)?;
        let path: Vec<_> = TABLE_POINTS
            .iter()
            .enumerate()
            .map(|(i, (_, t))| ([i, 0, 0], Vector3::repeat(*t)))
            .collect();
        for ((label, _), sample) in TABLE_POINTS
            .iter()
            .zip(trace_path(&model, &path, &model.home_states(), &tol.ik_options()))
        {
            let s = sample.map_err(|(p, e)| at_pose(&p, e))?;
            let a = model
                .analyze_states(&s.position, s.states, tol.rank)
                .map_err(|e| at_pose(&s.position, e))?;
            let idx = a.indices()?;
            out.push(TableRecord {
                architecture: model.architecture.label().to_string(),
                point: label.to_string(),
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                k_tran: idx.k_tran,
                k_rot: idx.k_rot,
                c_tran: 1.0 / idx.k_tran,
                c_rot: 1.0 / idx.k_rot,
            });
        }
    }
    Ok(out)
}
