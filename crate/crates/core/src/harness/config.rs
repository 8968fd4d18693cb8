//! Study configuration (JSON).
//!
//! ```json
//! {
//!   "geometry": ["contacts8", "contacts40"],
//!   "grid": { "resolution": "high" },
//!   "targets": { "positions": [[2.0, 0.5, 0.3]], "alignment": ["parallel", "perpendicular"], "magnitude": 3.0 },
//!   "methods": [{ "method": "rp" }, { "variant": "tls_default" }, { "variant": "l1l1_a" }, { "variant": "l1l1_b" }],
//!   "noise": { "psnr_db": 40.0, "realizations": 20 },
//!   "gamma0": 0.8,
//!   "seed": 7
//! }
//! ```
//!
//! Fields taking a list also accept a single value. Unknown fields are
//! rejected; parse errors name the line, column and field path.

use std::path::{Path, PathBuf};

use serde::de::{DeserializeOwned, Deserializer};
use serde::{Deserialize, Serialize};

use crate::leadfield::{GeometryModel, GridSpec};
use crate::model::{Alignment, CurrentLimits, Resolution};
use crate::search::{Axis, SearchSpace, Variant, DEFAULT_GAMMA0, DEFAULT_STEPS};
use crate::solvers::Method;
use crate::{Error, Result};

/// Accepts `x` or `[x, …]`. Errors inside either form keep their location.
pub(crate) fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: DeserializeOwned,
{
    use serde::de::value::{MapAccessDeserializer, SeqAccessDeserializer};
    use serde::de::{IntoDeserializer, MapAccess, SeqAccess, Visitor};
    use std::marker::PhantomData;

    struct V<T>(PhantomData<T>);

    impl<'de, T: DeserializeOwned> Visitor<'de> for V<T> {
        type Value = Vec<T>;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a value or a list of values")
        }

        fn visit_seq<A: SeqAccess<'de>>(self, seq: A) -> std::result::Result<Vec<T>, A::Error> {
            Vec::<T>::deserialize(SeqAccessDeserializer::new(seq))
        }

        fn visit_map<A: MapAccess<'de>>(self, map: A) -> std::result::Result<Vec<T>, A::Error> {
            T::deserialize(MapAccessDeserializer::new(map)).map(|x| vec![x])
        }

        fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Vec<T>, E> {
            T::deserialize(v.into_deserializer()).map(|x| vec![x])
        }

        fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<Vec<T>, E> {
            T::deserialize(v.into_deserializer()).map(|x| vec![x])
        }

        fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Vec<T>, E> {
            T::deserialize(v.into_deserializer()).map(|x| vec![x])
        }

        fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Vec<T>, E> {
            T::deserialize(v.into_deserializer()).map(|x| vec![x])
        }
    }

    d.deserialize_any(V(PhantomData))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// Every position of the grid.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSelection {
    /// Positions in mm; each is moved to the nearest grid position.
    #[serde(default)]
    pub positions: Vec<[f64; 3]>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_alignment", deserialize_with = "one_or_many")]
    pub alignment: Vec<Alignment>,
    /// Unit orientation used by `"custom"` alignment.
    #[serde(default)]
    pub orientation: Option<[f64; 3]>,
    /// Target current density (A/m²).
    pub magnitude: f64,
}

fn default_alignment() -> Vec<Alignment> {
    vec![Alignment::Parallel]
}

/// One method entry. `method` may be omitted when `variant` implies it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub variant: Option<Variant>,
    /// Lattice points per axis, overriding the preset's default.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub param1: Option<Axis>,
    #[serde(default)]
    pub param2: Option<Axis>,
    /// Name used in the output; defaults to the variant or method name.
    #[serde(default)]
    pub label: Option<String>,
}

/// A method entry after defaults are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedMethod {
    pub label: String,
    pub method: Method,
    pub space: Option<SearchSpace>,
}

impl MethodSpec {
    pub fn resolve(&self) -> Result<ResolvedMethod> {
        let method = match (self.method, self.variant) {
            (Some(m), Some(v)) if v.method() != m => {
                return Err(Error::Config(format!(
                    "variant {} does not belong to method {}",
                    v.as_str(),
                    m.as_str()
                )))
            }
            (Some(m), _) => m,
            (None, Some(v)) => v.method(),
            (None, None) => return Err(Error::Config("method entry needs `method` or `variant`".into())),
        };
        if method == Method::Rp {
            if self.variant.is_some() || self.steps.is_some() || self.param1.is_some() || self.param2.is_some() {
                return Err(Error::Config("rp takes no variant, steps or search axes".into()));
            }
            return Ok(ResolvedMethod {
                label: self.label.clone().unwrap_or_else(|| "rp".into()),
                method,
                space: None,
            });
        }
        let variant = match (self.variant, method) {
            (Some(v), _) => Some(v),
            (None, Method::Tls) => Some(Variant::TlsDefault),
            _ => None,
        };
        let steps = self.steps.unwrap_or(DEFAULT_STEPS);
        let base = match variant {
            Some(v) => Some(SearchSpace::preset_with_steps(v, steps)?),
            None => None,
        };
        let (p1, p2) = match (&base, &self.param1, &self.param2) {
            (_, Some(a), Some(b)) => (a.clone(), b.clone()),
            (Some(s), a, b) => (a.clone().unwrap_or_else(|| s.param1.clone()), b.clone().unwrap_or_else(|| s.param2.clone())),
            (None, _, _) => {
                return Err(Error::Config(format!(
                    "{} needs a `variant` or both `param1` and `param2`",
                    method.as_str()
                )))
            }
        };
        let space = SearchSpace::new(method, p1, p2).map_err(|e| Error::Config(e.to_string()))?;
        let label = self
            .label
            .clone()
            .or_else(|| variant.map(|v| v.as_str().to_string()))
            .unwrap_or_else(|| method.as_str().to_string());
        Ok(ResolvedMethod {
            label,
            method,
            space: Some(space),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub psnr_db: Vec<f64>,
    pub realizations: u64,
    /// Also run every target once without noise.
    #[serde(default)]
    pub include_noiseless: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats", deserialize_with = "one_or_many")]
    pub format: Vec<Format>,
    #[serde(default = "default_stem")]
    pub stem: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            format: default_formats(),
            stem: default_stem(),
        }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn default_stem() -> String {
    "study".into()
}

fn default_grid() -> GridSpec {
    GridSpec::standard(Resolution::Low)
}

fn default_gamma0() -> f64 {
    DEFAULT_GAMMA0
}

fn default_conductivity() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub geometry: Vec<GeometryModel>,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    pub targets: TargetSelection,
    #[serde(deserialize_with = "one_or_many")]
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    #[serde(default)]
    pub limits: CurrentLimits,
    #[serde(default = "default_conductivity")]
    pub conductivity_s_per_m: f64,
    /// Master seed; every noise realization is derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

impl StudyConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            Error::Config(format!(
                "line {}, column {}, field `{}`: {}",
                inner.line(),
                inner.column(),
                e.path(),
                inner
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn resolved_methods(&self) -> Result<Vec<ResolvedMethod>> {
        self.methods
            .iter()
            .enumerate()
            .map(|(i, m)| m.resolve().map_err(|e| Error::Config(format!("methods[{i}]: {e}"))))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.geometry.is_empty() {
            return fail("`geometry` is empty".into());
        }
        if self.methods.is_empty() {
            return fail("`methods` is empty".into());
        }
        let methods = self.resolved_methods()?;
        let mut labels: Vec<&str> = methods.iter().map(|m| m.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return fail("method labels must be unique".into());
        }
        let t = &self.targets;
        match (t.positions.is_empty(), t.sweep) {
            (true, None) => return fail("`targets` needs `positions` or `sweep`".into()),
            (false, Some(_)) => return fail("`targets` takes either `positions` or `sweep`, not both".into()),
            _ => {}
        }
        if t.positions.iter().flatten().any(|v| !v.is_finite()) {
            return fail("target positions must be finite".into());
        }
        if t.alignment.is_empty() {
            return fail("`targets.alignment` is empty".into());
        }
        if t.alignment.contains(&Alignment::Custom) && t.orientation.is_none() {
            return fail("custom alignment needs `targets.orientation`".into());
        }
        if !(t.magnitude > 0.0 && t.magnitude.is_finite()) {
            return fail(format!("`targets.magnitude` must be finite and > 0, got {}", t.magnitude));
        }
        if let Some(n) = &self.noise {
            if n.realizations == 0 {
                return fail("`noise.realizations` must be ≥ 1".into());
            }
            if n.psnr_db.is_empty() || n.psnr_db.iter().any(|p| p.is_nan()) {
                return fail("`noise.psnr_db` needs at least one number".into());
            }
        }
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return fail(format!("`gamma0` must be finite and > 0, got {}", self.gamma0));
        }
        CurrentLimits::new(self.limits.per_contact_ma, self.limits.total_budget_ma)
            .map_err(|e| Error::Config(format!("limits: {e}")))?;
        if !(self.conductivity_s_per_m > 0.0 && self.conductivity_s_per_m.is_finite()) {
            return fail("`conductivity_s_per_m` must be finite and > 0".into());
        }
        if self.grid.resolution == Resolution::Custom {
            return fail("custom grids cannot be generated from a study config".into());
        }
        Ok(())
    }
}
