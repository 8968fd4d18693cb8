//! Lead field construction, reduction and analysis.
//!
//! A [`LeadField`] maps contact currents (mA) to current density (A/m²) at
//! every degree of freedom of a [`DofGrid`]. [`reduce_system`] splits it into
//! the projected target row(s) and the nuisance block consumed by the solvers.

mod geometry;
mod io;
mod synth;
mod uncertainty;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::model::{ContactArray, DofGrid, TargetSpec, Vec3};
use crate::{Error, Result};

pub use geometry::{
    build_geometry, cubic_grid, shaft_clearance, sphere_grid, standard_grid, GeometryModel, GridSpec,
};
pub use io::{
    export_leadfield, export_matrix_csv, import_leadfield, import_matrix_csv, read_leadfield, read_matrix_csv,
    write_leadfield, write_matrix_csv,
};
pub use synth::{point_source_density, synthesize_leadfield, EXCLUSION_RADIUS_MM};
pub use uncertainty::{
    add_noise, attenuation_set, dynamic_range_bound, noise_sigma, zero_average_rows, AttenuationSet, NoiseSpec,
};

/// Tolerance (mm) for matching a target position to a grid position.
pub const POSITION_TOLERANCE_MM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Synthetic { conductivity_s_per_m: f64 },
    Imported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadField {
    matrix: DMatrix<f64>,
    grid: DofGrid,
    contacts: ContactArray,
    provenance: Provenance,
    noise: Option<NoiseSpec>,
}

impl LeadField {
    pub fn new(matrix: DMatrix<f64>, grid: DofGrid, contacts: ContactArray, provenance: Provenance) -> Result<Self> {
        if matrix.nrows() != grid.dof_count() {
            return Err(Error::DimensionMismatch {
                what: "lead field rows (3 × grid positions)",
                expected: grid.dof_count(),
                actual: matrix.nrows(),
            });
        }
        if matrix.ncols() != contacts.len() {
            return Err(Error::DimensionMismatch {
                what: "lead field columns (contact count)",
                expected: contacts.len(),
                actual: matrix.ncols(),
            });
        }
        if let Some(idx) = matrix.iter().position(|v| !v.is_finite()) {
            let (i, j) = (idx % matrix.nrows(), idx / matrix.nrows());
            return Err(Error::NonFinite(format!("lead field entry ({i}, {j})")));
        }
        Ok(Self {
            matrix,
            grid,
            contacts,
            provenance,
            noise: None,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> &DofGrid {
        &self.grid
    }

    pub fn contacts(&self) -> &ContactArray {
        &self.contacts
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// The perturbation applied to this field, if any.
    pub fn noise(&self) -> Option<&NoiseSpec> {
        self.noise.as_ref()
    }

    pub fn dof_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn contact_count(&self) -> usize {
        self.matrix.ncols()
    }

    /// Largest absolute entry (the "peak" used for PSNR).
    pub fn peak(&self) -> f64 {
        self.matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub(crate) fn with_matrix(&self, matrix: DMatrix<f64>, noise: Option<NoiseSpec>) -> Self {
        Self {
            matrix,
            grid: self.grid.clone(),
            contacts: self.contacts.clone(),
            provenance: self.provenance,
            noise,
        }
    }

    /// Grid position matching `position` within [`POSITION_TOLERANCE_MM`].
    pub fn locate(&self, position: &Vec3) -> Result<usize> {
        let (idx, dist) = self
            .grid
            .nearest(position)
            .ok_or_else(|| Error::InvalidTarget("grid is empty".into()))?;
        if dist <= POSITION_TOLERANCE_MM {
            Ok(idx)
        } else {
            let q = self.grid.positions()[idx];
            Err(Error::TargetLookup {
                position: [position.x, position.y, position.z],
                nearest_index: idx,
                nearest: [q.x, q.y, q.z],
                distance_mm: dist,
            })
        }
    }
}

/// Row bookkeeping of a reduction: `projected + dropped + nuisance = total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowPartition {
    pub total: usize,
    pub target_rows: Vec<usize>,
    pub projected: usize,
    pub dropped: usize,
    pub nuisance_rows: Vec<usize>,
}

/// The split system `L = (L₁; L₂)`, `x = (x₁; 0)`.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    l1: DMatrix<f64>,
    l2: DMatrix<f64>,
    x1: DVector<f64>,
    target: Option<TargetSpec>,
    position_index: Option<usize>,
    partition: RowPartition,
    parent: Option<Arc<LeadField>>,
}

impl ReducedSystem {
    /// Builds a system directly from its blocks, with no parent field.
    pub fn from_parts(l1: DMatrix<f64>, l2: DMatrix<f64>, x1: DVector<f64>) -> Result<Self> {
        if l1.ncols() != l2.ncols() {
            return Err(Error::DimensionMismatch {
                what: "nuisance block columns",
                expected: l1.ncols(),
                actual: l2.ncols(),
            });
        }
        if l1.nrows() != x1.len() {
            return Err(Error::DimensionMismatch {
                what: "target vector length",
                expected: l1.nrows(),
                actual: x1.len(),
            });
        }
        if l1.iter().chain(l2.iter()).chain(x1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reduced system entry".into()));
        }
        let (n1, m) = (l1.nrows(), l2.nrows());
        Ok(Self {
            partition: RowPartition {
                total: n1 + m,
                target_rows: (0..n1).collect(),
                projected: n1,
                dropped: 0,
                nuisance_rows: (n1..n1 + m).collect(),
            },
            l1,
            l2,
            x1,
            target: None,
            position_index: None,
            parent: None,
        })
    }

    pub fn l1(&self) -> &DMatrix<f64> {
        &self.l1
    }

    pub fn l2(&self) -> &DMatrix<f64> {
        &self.l2
    }

    pub fn x1(&self) -> &DVector<f64> {
        &self.x1
    }

    pub fn target(&self) -> Option<&TargetSpec> {
        self.target.as_ref()
    }

    /// Index of the target's grid position in the parent field.
    pub fn position_index(&self) -> Option<usize> {
        self.position_index
    }

    pub fn partition(&self) -> &RowPartition {
        &self.partition
    }

    pub fn parent(&self) -> Option<&Arc<LeadField>> {
        self.parent.as_ref()
    }

    pub fn contact_count(&self) -> usize {
        self.l1.ncols()
    }

    pub fn nuisance_count(&self) -> usize {
        self.l2.nrows()
    }

    pub fn target_count(&self) -> usize {
        self.l1.nrows()
    }

    /// The stacked matrix `(L₁; L₂)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n1, m, k) = (self.l1.nrows(), self.l2.nrows(), self.l1.ncols());
        let mut out = DMatrix::zeros(n1 + m, k);
        out.rows_mut(0, n1).copy_from(&self.l1);
        out.rows_mut(n1, m).copy_from(&self.l2);
        out
    }

    /// `‖L‖₁`: largest absolute column sum of the stacked matrix.
    pub fn l1_operator_norm(&self) -> f64 {
        (0..self.contact_count())
            .map(|j| {
                let a: f64 = self.l1.column(j).iter().map(|v| v.abs()).sum();
                let b: f64 = self.l2.column(j).iter().map(|v| v.abs()).sum();
                a + b
            })
            .fold(0.0, f64::max)
    }

    /// `‖x‖∞` over the full right-hand side (the nuisance part is zero).
    pub fn target_peak(&self) -> f64 {
        self.x1.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Projection `P = ddᵀ` onto the unit direction `d`.
pub fn projection_matrix(d: &Vec3) -> Matrix3<f64> {
    d * d.transpose()
}

/// Applies `P = ddᵀ` to a 3-row block.
pub fn project_block(d: &Vec3, block: &DMatrix<f64>) -> DMatrix<f64> {
    let p = projection_matrix(d);
    let p = DMatrix::from_fn(3, 3, |i, j| p[(i, j)]);
    &p * block
}

/// Splits `field` at the target: the three Cartesian rows at the target
/// position collapse to their component along the target orientation (`L₁`,
/// one row); every other row forms the nuisance block `L₂`.
pub fn reduce_system(field: &Arc<LeadField>, target: &TargetSpec) -> Result<ReducedSystem> {
    let p = field.locate(target.position())?;
    let k = field.contact_count();
    let n = field.dof_count();
    let d = target.orientation();
    let lhat = field.matrix();

    let mut l1 = DMatrix::zeros(1, k);
    for j in 0..k {
        l1[(0, j)] = d.x * lhat[(3 * p, j)] + d.y * lhat[(3 * p + 1, j)] + d.z * lhat[(3 * p + 2, j)];
    }
    let nuisance_rows: Vec<usize> = (0..n).filter(|&r| r / 3 != p).collect();
    let l2 = lhat.select_rows(&nuisance_rows);
    let x1 = DVector::from_element(1, target.magnitude());

    Ok(ReducedSystem {
        l1,
        l2,
        x1,
        target: Some(target.clone()),
        position_index: Some(p),
        partition: RowPartition {
            total: n,
            target_rows: vec![3 * p, 3 * p + 1, 3 * p + 2],
            projected: 1,
            dropped: 2,
            nuisance_rows,
        },
        parent: Some(Arc::clone(field)),
    })
}

/// Moves `target` onto the closest grid position. Perpendicular targets get
/// their radial orientation recomputed for the new position.
pub fn snap_target(grid: &DofGrid, target: &TargetSpec) -> Result<(usize, TargetSpec)> {
    let (idx, _) = grid
        .nearest(target.position())
        .ok_or_else(|| Error::InvalidTarget("grid is empty".into()))?;
    let pos = grid.positions()[idx];
    let snapped = match target.alignment() {
        crate::model::Alignment::Custom => {
            TargetSpec::new(pos, *target.orientation(), target.alignment(), target.magnitude())?
        }
        a => TargetSpec::aligned(pos, a, target.magnitude())?,
    };
    Ok((idx, snapped))
}
