//! Lead geometries and standard sampling grids.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::model::{Contact, ContactArray, DofGrid, Resolution, Vec3};
use crate::{Error, Result};

pub const LEAD_DIAMETER_MM: f64 = 1.27;
pub const CONTACT_IMPEDANCE_KOHM: f64 = 2.0;

/// Axial pitch of the 8-contact lead (1.5 mm contact + 0.5 mm gap).
pub const EIGHT_CONTACT_PITCH_MM: f64 = 2.0;
/// Axial offset between neighbouring rows of the 40-contact lead.
pub const FORTY_CONTACT_ROW_SHIFT_MM: f64 = 0.75;

/// Lowest point of the lead body; the shaft extends upward (+z) from here.
pub const LEAD_TIP_Z_MM: f64 = -4.5;
/// Grid points closer than this to the shaft axis (above the tip) are dropped.
pub const SHAFT_CLEARANCE_MM: f64 = LEAD_DIAMETER_MM / 2.0 + 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[value(rename_all = "lowercase")]
pub enum GeometryModel {
    Contacts8,
    Contacts40,
}

impl GeometryModel {
    pub fn as_str(self) -> &'static str {
        match self {
            GeometryModel::Contacts8 => "contacts8",
            GeometryModel::Contacts40 => "contacts40",
        }
    }
}

fn surface_contact(radius: f64, azimuth: f64, z: f64, label: String, row: usize, sector: usize) -> Contact {
    let normal = Vec3::new(azimuth.cos(), azimuth.sin(), 0.0);
    Contact {
        center: Vec3::new(radius * normal.x, radius * normal.y, z),
        normal,
        label,
        row,
        sector,
    }
}

/// Contact layout of the two directional leads, centred on the origin with
/// the lead axis along `z`.
///
/// * `Contacts8`: four levels 2.0 mm apart in a 1-3-3-1 split; ring contacts
///   are represented by a single surface point at azimuth 0.
/// * `Contacts40`: eight rows of five contacts (72° apart); neighbouring rows
///   are 0.75 mm apart axially and staggered by 36°, so contacts in the same
///   column are 1.5 mm apart.
pub fn build_geometry(model: GeometryModel) -> ContactArray {
    let radius = LEAD_DIAMETER_MM / 2.0;
    let mut contacts = Vec::new();
    match model {
        GeometryModel::Contacts8 => {
            let segments = [1usize, 3, 3, 1];
            for (row, &count) in segments.iter().enumerate() {
                let z = (row as f64 - 1.5) * EIGHT_CONTACT_PITCH_MM;
                for sector in 0..count {
                    let azimuth = 2.0 * PI * sector as f64 / count as f64;
                    let label = if count == 1 {
                        format!("E{row}")
                    } else {
                        format!("E{row}{}", (b'a' + sector as u8) as char)
                    };
                    contacts.push(surface_contact(radius, azimuth, z, label, row, sector));
                }
            }
        }
        GeometryModel::Contacts40 => {
            for row in 0..8 {
                let z = (row as f64 - 3.5) * FORTY_CONTACT_ROW_SHIFT_MM;
                let stagger = if row % 2 == 1 { PI / 5.0 } else { 0.0 };
                for sector in 0..5 {
                    let azimuth = stagger + 2.0 * PI * sector as f64 / 5.0;
                    contacts.push(surface_contact(radius, azimuth, z, format!("R{row}S{sector}"), row, sector));
                }
            }
        }
    }
    ContactArray::new(LEAD_DIAMETER_MM, contacts, CONTACT_IMPEDANCE_KOHM).expect("built-in geometry is valid")
}

/// True when `p` lies clear of the lead shaft.
pub fn shaft_clearance(p: &Vec3) -> bool {
    p.z < LEAD_TIP_Z_MM || p.x.hypot(p.y) >= SHAFT_CLEARANCE_MM
}

/// Regular grid in a box: `nxy` offset points per horizontal axis (never on
/// the lead axis) and `nz` points along `z`, spanning `[-half, half]`.
pub fn cubic_grid(half_extent_mm: f64, nxy: usize, nz: usize) -> Result<DofGrid> {
    if nxy == 0 || nz == 0 || !(half_extent_mm > 0.0) {
        return Err(Error::InvalidArgument("cubic grid needs positive extent and counts".into()));
    }
    let step_xy = 2.0 * half_extent_mm / nxy as f64;
    let axis_xy: Vec<f64> = (0..nxy).map(|i| -half_extent_mm + (i as f64 + 0.5) * step_xy).collect();
    let axis_z: Vec<f64> = if nz == 1 {
        vec![0.0]
    } else {
        (0..nz)
            .map(|i| -half_extent_mm + 2.0 * half_extent_mm * i as f64 / (nz - 1) as f64)
            .collect()
    };
    let mut positions = Vec::new();
    for &z in &axis_z {
        for &y in &axis_xy {
            for &x in &axis_xy {
                let p = Vec3::new(x, y, z);
                if shaft_clearance(&p) {
                    positions.push(p);
                }
            }
        }
    }
    DofGrid::new(positions, Resolution::Low)
}

/// Cell-centred lattice of spacing `spacing_mm` inside a sphere of
/// `radius_mm` around the origin, minus the lead shaft.
pub fn sphere_grid(radius_mm: f64, spacing_mm: f64) -> Result<DofGrid> {
    if !(radius_mm > 0.0 && spacing_mm > 0.0) {
        return Err(Error::InvalidArgument("sphere grid needs positive radius and spacing".into()));
    }
    let n = (radius_mm / spacing_mm).ceil() as i64 + 1;
    let mut positions = Vec::new();
    for iz in -n..n {
        for iy in -n..n {
            for ix in -n..n {
                let p = Vec3::new(
                    (ix as f64 + 0.5) * spacing_mm,
                    (iy as f64 + 0.5) * spacing_mm,
                    (iz as f64 + 0.5) * spacing_mm,
                );
                if p.norm() <= radius_mm && shaft_clearance(&p) {
                    positions.push(p);
                }
            }
        }
    }
    DofGrid::new(positions, Resolution::High)
}

/// Grid parameters; `None` fields take the resolution's defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub resolution: Resolution,
    #[serde(default)]
    pub extent_mm: Option<f64>,
    #[serde(default)]
    pub spacing_mm: Option<f64>,
}

impl GridSpec {
    pub fn standard(resolution: Resolution) -> Self {
        Self {
            resolution,
            extent_mm: None,
            spacing_mm: None,
        }
    }

    pub fn build(&self) -> Result<DofGrid> {
        match self.resolution {
            Resolution::Low => {
                let half = self.extent_mm.unwrap_or(20.0) / 2.0;
                match self.spacing_mm {
                    None => cubic_grid(half, 6, 7),
                    Some(h) => {
                        let nxy = ((2.0 * half / h).round() as usize).max(1);
                        cubic_grid(half, nxy, nxy + 1)
                    }
                }
            }
            Resolution::High => sphere_grid(self.extent_mm.unwrap_or(6.0), self.spacing_mm.unwrap_or(0.627)),
            Resolution::Custom => Err(Error::InvalidArgument(
                "custom grids are supplied as position lists, not generated".into(),
            )),
        }
    }
}

/// The two default grids: "low" is 252 positions on a 20 mm box, "high"
/// roughly 3600 positions inside a 6 mm sphere around the lead centre.
pub fn standard_grid(resolution: Resolution) -> Result<DofGrid> {
    GridSpec::standard(resolution).build()
}
