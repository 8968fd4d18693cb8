//! Bundled demo scene: both synthetic leads on the standard grids with two
//! targets a little over a millimetre off the shaft.

use super::config::{MethodSpec, NoiseConfig, OutputConfig, StudyConfig, TargetSelection};
use crate::leadfield::{GeometryModel, GridSpec};
use crate::model::{Alignment, CurrentLimits, Resolution};
use crate::search::{Variant, DEFAULT_GAMMA0, DEFAULT_STEPS};
use crate::solvers::Method;

/// Target positions (mm) before snapping to the grid.
pub const DEMO_POSITIONS: [[f64; 3]; 2] = [[1.6, 0.4, 0.3], [-1.1, -1.5, -1.2]];

/// Target current density (A/m²).
pub const DEMO_MAGNITUDE: f64 = 3.0;

/// PSNR of the noisy half of the demo study (dB).
pub const DEMO_PSNR_DB: f64 = 40.0;

pub const DEMO_REALIZATIONS: u64 = 20;

pub fn demo_targets(alignments: Vec<Alignment>) -> TargetSelection {
    TargetSelection {
        positions: DEMO_POSITIONS.to_vec(),
        sweep: None,
        alignment: alignments,
        orientation: None,
        magnitude: DEMO_MAGNITUDE,
    }
}

/// The four compared methods: RP, TLS and both L1L1 variants.
pub fn demo_methods(steps: usize) -> Vec<MethodSpec> {
    let lattice = |v: Variant| MethodSpec {
        variant: Some(v),
        steps: Some(steps),
        ..Default::default()
    };
    vec![
        MethodSpec {
            method: Some(Method::Rp),
            ..Default::default()
        },
        lattice(Variant::TlsDefault),
        lattice(Variant::L1l1A),
        lattice(Variant::L1l1B),
    ]
}

/// The full demo study: 2 geometries × 2 orientations × 2 targets ×
/// 4 methods × 20 realizations at 40 dB PSNR on the high-resolution grid.
pub fn demo_study(seed: u64) -> StudyConfig {
    StudyConfig {
        geometry: vec![GeometryModel::Contacts8, GeometryModel::Contacts40],
        grid: GridSpec::standard(Resolution::High),
        targets: demo_targets(vec![Alignment::Parallel, Alignment::Perpendicular]),
        methods: demo_methods(DEFAULT_STEPS),
        noise: Some(NoiseConfig {
            psnr_db: vec![DEMO_PSNR_DB],
            realizations: DEMO_REALIZATIONS,
            include_noiseless: false,
        }),
        gamma0: DEFAULT_GAMMA0,
        limits: CurrentLimits::default(),
        conductivity_s_per_m: 0.2,
        seed,
        output: OutputConfig::default(),
    }
}
