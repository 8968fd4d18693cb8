//! Analytic point-source lead fields.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{LeadField, Provenance};
use crate::model::{ContactArray, DofGrid, Vec3};
use crate::{Error, Result};

/// Minimum distance (mm) between a grid position and a contact center.
pub const EXCLUSION_RADIUS_MM: f64 = 0.05;

/// `1 mA / mm² = 1000 A/m²`.
const MA_PER_MM2_IN_A_PER_M2: f64 = 1000.0;

/// Current density (A/m²) at `r` from a 1 mA point source at `source` in an
/// unbounded homogeneous conductor: `J = I (r − s) / (4π |r − s|³)`.
pub fn point_source_density(r: &Vec3, source: &Vec3) -> Vec3 {
    let d = r - source;
    let dist = d.norm();
    d * (MA_PER_MM2_IN_A_PER_M2 / (4.0 * PI * dist * dist * dist))
}

/// Lead field of `contacts` sampled on `grid`. Column `j` is the density of
/// a unit current at contact `j`; row `3p + c` is Cartesian component `c` at
/// grid position `p`.
///
/// The current density of a point source does not depend on the medium's
/// conductivity; `conductivity_s_per_m` is recorded as provenance only.
pub fn synthesize_leadfield(contacts: &ContactArray, grid: &DofGrid, conductivity_s_per_m: f64) -> Result<LeadField> {
    if !(conductivity_s_per_m > 0.0 && conductivity_s_per_m.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "conductivity must be positive, got {conductivity_s_per_m}"
        )));
    }
    let k = contacts.len();
    let mut matrix = DMatrix::zeros(grid.dof_count(), k);
    for (p, pos) in grid.positions().iter().enumerate() {
        for (j, c) in contacts.contacts().iter().enumerate() {
            let dist = (pos - c.center).norm();
            if dist <= EXCLUSION_RADIUS_MM {
                return Err(Error::Geometry {
                    contact: c.label.clone(),
                    position_index: p,
                    distance_mm: dist,
                    radius_mm: EXCLUSION_RADIUS_MM,
                });
            }
            let j_vec = point_source_density(pos, &c.center);
            matrix[(3 * p, j)] = j_vec.x;
            matrix[(3 * p + 1, j)] = j_vec.y;
            matrix[(3 * p + 2, j)] = j_vec.z;
        }
    }
    LeadField::new(
        matrix,
        grid.clone(),
        contacts.clone(),
        Provenance::Synthetic { conductivity_s_per_m },
    )
}
