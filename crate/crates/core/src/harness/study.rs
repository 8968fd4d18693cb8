//! Study runner.
//!
//! A study is the product geometry × target × noise case × method. Each
//! (geometry, target, noise case) unit builds its own reduced system and
//! runs every method on it; units are independent and evaluated through
//! [`crate::par::map`], then concatenated in plan order.
//!
//! Noise for target `t` (config list index, alignment `a`) of geometry `g`
//! uses seed `derive_seed(master, [g, t, a])` on stream `k` for realization
//! `k`. The draw is shared across PSNR levels and changes from target to
//! target.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ResolvedMethod, StudyConfig, Sweep};
use super::stats::{box_stats, BoxStats};
use crate::leadfield::{
    add_noise, build_geometry, reduce_system, synthesize_leadfield, GeometryModel, LeadField, NoiseSpec, ReducedSystem,
};
use crate::model::{Alignment, DofGrid, TargetSpec, Vec3, ACTIVATION_REFERENCE};
use crate::numeric::derive_seed;
use crate::search::lattice_search;
use crate::solvers::{solve_rp, Hyperparameters, Method, SolveOutcome};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Failed => "failed",
        }
    }
}

/// One (geometry, target, noise case, method) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub geometry: GeometryModel,
    pub target_id: usize,
    pub position_index: usize,
    pub position_mm: [f64; 3],
    pub orientation: Alignment,
    pub method: Method,
    pub variant: String,
    #[serde(with = "super::float_text::option")]
    pub psnr_db: Option<f64>,
    pub realization: Option<u64>,
    pub noise_seed: Option<u64>,
    pub status: RowStatus,
    pub message: Option<String>,
    #[serde(with = "super::float_text::option")]
    pub gamma: Option<f64>,
    #[serde(with = "super::float_text::option")]
    pub xi: Option<f64>,
    #[serde(with = "super::float_text::option")]
    pub theta: Option<f64>,
    pub feasible: Option<bool>,
    pub grid_coordinates: Option<(usize, usize)>,
    pub hyperparameters: Hyperparameters,
    pub iterations: usize,
    /// Lattice points that failed to solve.
    pub failed_points: usize,
    pub currents_ma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Gamma,
    Xi,
    Theta,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Gamma, Metric::Xi, Metric::Theta];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Gamma => "gamma",
            Metric::Xi => "xi",
            Metric::Theta => "theta",
        }
    }

    pub fn of(self, row: &StudyRow) -> Option<f64> {
        match self {
            Metric::Gamma => row.gamma,
            Metric::Xi => row.xi,
            Metric::Theta => row.theta,
        }
    }
}

/// Box statistics of one metric over the successful rows of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryBlock {
    pub geometry: GeometryModel,
    pub target_id: usize,
    pub orientation: Alignment,
    pub variant: String,
    #[serde(with = "super::float_text::option")]
    pub psnr_db: Option<f64>,
    pub metric: Metric,
    pub stats: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub summaries: Vec<SummaryBlock>,
}

/// Wall-clock data kept apart from the reproducible tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetadata {
    pub version: String,
    pub reference_activation_a_per_m2: f64,
    pub workers: Option<usize>,
    pub total_runtime_s: f64,
    /// Same order as `StudyResult::rows`.
    pub row_runtime_s: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseCase {
    Noiseless,
    Noisy { psnr_db: f64, realization: u64 },
}

#[derive(Debug, Clone)]
pub struct PlannedTarget {
    pub target_id: usize,
    pub position_index: usize,
    pub alignment: Alignment,
    pub spec: std::result::Result<TargetSpec, String>,
}

/// Everything a study needs, built once from a validated config.
pub struct StudyPlan {
    pub fields: Vec<(GeometryModel, Arc<LeadField>)>,
    pub targets: Vec<PlannedTarget>,
    pub cases: Vec<NoiseCase>,
    pub methods: Vec<ResolvedMethod>,
    pub config: StudyConfig,
}

fn geometry_code(g: GeometryModel) -> u64 {
    match g {
        GeometryModel::Contacts8 => 8,
        GeometryModel::Contacts40 => 40,
    }
}

fn alignment_code(a: Alignment) -> u64 {
    match a {
        Alignment::Parallel => 0,
        Alignment::Perpendicular => 1,
        Alignment::Custom => 2,
    }
}

/// Seed of the noise draws for one target.
pub fn noise_seed(master: u64, geometry: GeometryModel, target_id: usize, alignment: Alignment) -> u64 {
    derive_seed(master, &[geometry_code(geometry), target_id as u64, alignment_code(alignment)])
}

fn plan_targets(config: &StudyConfig, grid: &DofGrid) -> Result<Vec<PlannedTarget>> {
    let sel = &config.targets;
    let positions: Vec<(usize, Vec3)> = match sel.sweep {
        Some(Sweep::All) => grid.positions().iter().copied().enumerate().collect(),
        None => sel
            .positions
            .iter()
            .map(|p| {
                grid.nearest(&Vec3::from(*p))
                    .map(|(i, _)| (i, grid.positions()[i]))
                    .ok_or_else(|| Error::Config("grid is empty".into()))
            })
            .collect::<Result<_>>()?,
    };
    let custom = match sel.orientation {
        Some(o) => {
            let v = Vec3::from(o);
            let n = v.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Config("`targets.orientation` must be a finite nonzero vector".into()));
            }
            Some(v / n)
        }
        None => None,
    };
    let mut out = Vec::with_capacity(positions.len() * sel.alignment.len());
    for (target_id, &(position_index, pos)) in positions.iter().enumerate() {
        for &alignment in &sel.alignment {
            let spec = match alignment {
                Alignment::Custom => TargetSpec::new(pos, custom.expect("validated"), alignment, sel.magnitude),
                a => TargetSpec::aligned(pos, a, sel.magnitude),
            };
            out.push(PlannedTarget {
                target_id,
                position_index,
                alignment,
                spec: spec.map_err(|e| e.to_string()),
            });
        }
    }
    Ok(out)
}

impl StudyPlan {
    pub fn new(config: &StudyConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid.build().map_err(|e| Error::Config(format!("grid: {e}")))?;
        let fields = config
            .geometry
            .iter()
            .map(|&g| {
                synthesize_leadfield(&build_geometry(g), &grid, config.conductivity_s_per_m)
                    .map(|f| (g, Arc::new(f)))
                    .map_err(|e| Error::Config(format!("geometry {}: {e}", g.as_str())))
            })
            .collect::<Result<Vec<_>>>()?;
        let targets = plan_targets(config, &grid)?;
        let mut cases = Vec::new();
        match &config.noise {
            None => cases.push(NoiseCase::Noiseless),
            Some(n) => {
                if n.include_noiseless {
                    cases.push(NoiseCase::Noiseless);
                }
                for &psnr_db in &n.psnr_db {
                    for realization in 0..n.realizations {
                        cases.push(NoiseCase::Noisy { psnr_db, realization });
                    }
                }
            }
        }
        Ok(Self {
            fields,
            targets,
            cases,
            methods: config.resolved_methods()?,
            config: config.clone(),
        })
    }

    /// Rows the study will emit.
    pub fn row_count(&self) -> usize {
        self.fields.len() * self.targets.len() * self.cases.len() * self.methods.len()
    }

    /// The reduced system of one unit; also used to re-derive a row's system.
    pub fn system(&self, geometry: usize, target: &PlannedTarget, case: NoiseCase) -> Result<ReducedSystem> {
        let (g, base) = &self.fields[geometry];
        let spec = target.spec.clone().map_err(Error::InvalidTarget)?;
        let field = match case {
            NoiseCase::Noiseless => Arc::clone(base),
            NoiseCase::Noisy { psnr_db, realization } => Arc::new(add_noise(
                base,
                &NoiseSpec {
                    psnr_db,
                    seed: noise_seed(self.config.seed, *g, target.target_id, target.alignment),
                    realization_index: realization,
                },
            )?),
        };
        reduce_system(&field, &spec)
    }

    /// Re-derives the reduced system a row was computed on.
    pub fn system_for_row(&self, row: &StudyRow) -> Result<ReducedSystem> {
        let g = self
            .fields
            .iter()
            .position(|(m, _)| *m == row.geometry)
            .ok_or_else(|| Error::InvalidArgument(format!("geometry {} not in plan", row.geometry.as_str())))?;
        let target = self
            .targets
            .iter()
            .find(|t| t.target_id == row.target_id && t.alignment == row.orientation)
            .ok_or_else(|| Error::InvalidArgument(format!("target {} not in plan", row.target_id)))?;
        let case = match (row.psnr_db, row.realization) {
            (Some(psnr_db), Some(realization)) => NoiseCase::Noisy { psnr_db, realization },
            _ => NoiseCase::Noiseless,
        };
        self.system(g, target, case)
    }

    fn run_unit(&self, geometry: usize, target: &PlannedTarget, case: NoiseCase) -> Vec<(StudyRow, f64)> {
        let (g, base) = &self.fields[geometry];
        let pos = base.grid().positions()[target.position_index];
        let (psnr_db, realization, seed) = match case {
            NoiseCase::Noiseless => (None, None, None),
            NoiseCase::Noisy { psnr_db, realization } => (
                Some(psnr_db),
                Some(realization),
                Some(noise_seed(self.config.seed, *g, target.target_id, target.alignment)),
            ),
        };
        let blank = |m: &ResolvedMethod| StudyRow {
            geometry: *g,
            target_id: target.target_id,
            position_index: target.position_index,
            position_mm: [pos.x, pos.y, pos.z],
            orientation: target.alignment,
            method: m.method,
            variant: m.label.clone(),
            psnr_db,
            realization,
            noise_seed: seed,
            status: RowStatus::Failed,
            message: None,
            gamma: None,
            xi: None,
            theta: None,
            feasible: None,
            grid_coordinates: None,
            hyperparameters: Hyperparameters::new(),
            iterations: 0,
            failed_points: 0,
            currents_ma: Vec::new(),
        };
        let start = Instant::now();
        let system = match self.system(geometry, target, case) {
            Ok(s) => s,
            Err(e) => {
                let per = start.elapsed().as_secs_f64() / self.methods.len() as f64;
                return self
                    .methods
                    .iter()
                    .map(|m| {
                        let mut row = blank(m);
                        row.message = Some(e.to_string());
                        (row, per)
                    })
                    .collect();
            }
        };
        let setup = start.elapsed().as_secs_f64() / self.methods.len() as f64;
        self.methods
            .iter()
            .map(|m| {
                let t0 = Instant::now();
                let mut row = blank(m);
                match self.run_method(&system, m) {
                    Ok((outcome, coords, failed)) => fill_row(&mut row, &outcome, coords, failed, self.config.gamma0),
                    Err(e) => row.message = Some(e.to_string()),
                }
                (row, setup + t0.elapsed().as_secs_f64())
            })
            .collect()
    }

    fn run_method(
        &self,
        system: &ReducedSystem,
        m: &ResolvedMethod,
    ) -> Result<(SolveOutcome, Option<(usize, usize)>, usize)> {
        let limits = self.config.limits;
        match &m.space {
            None => Ok((solve_rp(system, limits)?, None, 0)),
            Some(space) => {
                let res = lattice_search(system, space, self.config.gamma0, limits)?;
                Ok((res.best.outcome, Some(res.best.grid_coordinates), res.failures.len()))
            }
        }
    }

    /// Runs every unit; returns the result and per-row runtimes.
    pub fn run(&self) -> (StudyResult, Vec<f64>) {
        let units: Vec<(usize, usize, usize)> = (0..self.fields.len())
            .flat_map(|g| (0..self.targets.len()).flat_map(move |t| (0..self.cases.len()).map(move |c| (g, t, c))))
            .collect();
        let per_unit = par::map(&units, |&(g, t, c)| self.run_unit(g, &self.targets[t], self.cases[c]));
        let (rows, times): (Vec<_>, Vec<_>) = per_unit.into_iter().flatten().unzip();
        let summaries = summarize(&rows);
        (StudyResult { rows, summaries }, times)
    }
}

fn fill_row(row: &mut StudyRow, outcome: &SolveOutcome, coords: Option<(usize, usize)>, failed: usize, gamma0: f64) {
    let m = outcome.metrics;
    row.status = RowStatus::Ok;
    row.gamma = Some(m.gamma);
    row.xi = Some(m.xi);
    row.theta = Some(m.theta);
    row.feasible = Some(m.gamma >= gamma0);
    row.grid_coordinates = coords;
    row.hyperparameters = outcome.hyperparameters.clone();
    row.iterations = outcome.diagnostics.iterations;
    row.failed_points = failed;
    row.currents_ma = outcome.pattern.currents().to_vec();
}

type GroupKey = (GeometryModel, usize, Alignment, String, Option<u64>);

fn group_key(r: &StudyRow) -> GroupKey {
    (r.geometry, r.target_id, r.orientation, r.variant.clone(), r.psnr_db.map(f64::to_bits))
}

/// Summaries per (geometry, target, orientation, variant, PSNR) group, in
/// order of first appearance.
pub fn summarize(rows: &[StudyRow]) -> Vec<SummaryBlock> {
    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&StudyRow>> = BTreeMap::new();
    let mut index: std::collections::HashMap<GroupKey, usize> = std::collections::HashMap::new();
    for r in rows {
        let k = group_key(r);
        let i = *index.entry(k.clone()).or_insert_with(|| {
            order.push(k);
            order.len() - 1
        });
        groups.entry(i).or_default().push(r);
    }
    let mut out = Vec::new();
    for (i, members) in groups {
        let first = members[0];
        for metric in Metric::ALL {
            let values: Vec<f64> = members
                .iter()
                .filter(|r| r.status == RowStatus::Ok)
                .filter_map(|r| metric.of(r))
                .collect();
            if let Some(stats) = box_stats(&values) {
                out.push(SummaryBlock {
                    geometry: first.geometry,
                    target_id: first.target_id,
                    orientation: first.orientation,
                    variant: first.variant.clone(),
                    psnr_db: first.psnr_db,
                    metric,
                    stats,
                });
            }
        }
        debug_assert_eq!(group_key(first), order[i]);
    }
    out
}

/// Runs a study with at most `workers` threads (`None`: all available).
pub fn run_study_with(config: &StudyConfig, workers: Option<usize>) -> Result<(StudyResult, StudyMetadata)> {
    let start = Instant::now();
    let plan = StudyPlan::new(config)?;
    let (result, row_runtime_s) = par::with_workers(workers, || plan.run());
    Ok((
        result,
        StudyMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            reference_activation_a_per_m2: ACTIVATION_REFERENCE,
            workers,
            total_runtime_s: start.elapsed().as_secs_f64(),
            row_runtime_s,
        },
    ))
}

pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    run_study_with(config, None).map(|(r, _)| r)
}
