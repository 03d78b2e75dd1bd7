//! JSON run configuration: grid, a-priori constants, coefficient fields and
//! per-experiment parameters.

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::expr::Expr;
use crate::grid::GridDomain;
use crate::medium::{AprioriData, OpticalMedium};
use crate::stability::{Face, PerturbationSpec};
use crate::{Error, Result, C64};

/// Configuration bundled with the binary.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.json");

/// A real field given as a constant or as an expression in `x1, x2, x3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarField {
    Const(f64),
    Expr(String),
}

impl Default for ScalarField {
    fn default() -> Self {
        ScalarField::Const(0.0)
    }
}

impl ScalarField {
    fn compile(&self, pointer: &str) -> Result<Compiled> {
        match self {
            ScalarField::Const(c) => Ok(Compiled::Const(*c)),
            ScalarField::Expr(s) => {
                let e = Expr::parse(s).map_err(|err| Error::config(pointer, err.to_string()))?;
                if e.max_var() > 3 {
                    return Err(Error::config(pointer, "only x1, x2, x3 are available"));
                }
                Ok(Compiled::Expr(e))
            }
        }
    }
}

enum Compiled {
    Const(f64),
    Expr(Expr),
}

impl Compiled {
    fn eval(&self, x: [f64; 3]) -> f64 {
        match self {
            Compiled::Const(c) => *c,
            Compiled::Expr(e) => e.eval(&x),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexFieldSpec {
    #[serde(default)]
    pub re: ScalarField,
    #[serde(default)]
    pub im: ScalarField,
}

impl ComplexFieldSpec {
    pub fn sample(&self, grid: &GridDomain, pointer: &str) -> Result<crate::grid::ComplexField> {
        let re = self.re.compile(&format!("{pointer}/re"))?;
        let im = self.im.compile(&format!("{pointer}/im"))?;
        Ok(grid.sample_complex(|x| C64::new(re.eval(x), im.eval(x))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "one")]
    pub extent: f64,
    pub points: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub mu_a: ScalarField,
    pub mu_s: ScalarField,
    /// Row-major 3x3 entries; omitted means `B = 0`.
    #[serde(default)]
    pub b: Option<[[ScalarField; 3]; 3]>,
    /// Declared smoothness order near the boundary.
    #[serde(default)]
    pub holder_order: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub boundary: ComplexFieldSpec,
    #[serde(default)]
    pub source: ComplexFieldSpec,
    #[serde(default = "yes")]
    pub include_reaction: bool,
}

fn yes() -> bool {
    true
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            boundary: ComplexFieldSpec {
                re: ScalarField::Const(1.0),
                im: ScalarField::Const(0.0),
            },
            source: ComplexFieldSpec::default(),
            include_reaction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularConfig {
    #[serde(default)]
    pub m: u32,
    /// Singularity point; defaults to the node nearest the cube centre.
    #[serde(default)]
    pub z: Option<[f64; 3]>,
    /// Inner radius; defaults to two grid spacings.
    #[serde(default)]
    pub r_min: Option<f64>,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "yes")]
    pub include_reaction: bool,
}

fn default_r_max() -> f64 {
    0.45
}

impl Default for SingularConfig {
    fn default() -> Self {
        Self {
            m: 0,
            z: None,
            r_min: None,
            r_max: default_r_max(),
            include_reaction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default)]
    pub profile_order: u32,
    #[serde(default)]
    pub h: u32,
    #[serde(default = "half")]
    pub alpha: f64,
    #[serde(default = "default_eps_start")]
    pub eps_start: f64,
    #[serde(default = "six")]
    pub eps_count: usize,
    #[serde(default = "default_face")]
    pub face: Face,
    #[serde(default = "point_three")]
    pub patch_radius: f64,
    #[serde(default = "point_three")]
    pub depth: f64,
    #[serde(default = "hundred")]
    pub holder_bound: f64,
}

fn half() -> f64 {
    0.5
}
fn default_eps_start() -> f64 {
    0.2
}
fn six() -> usize {
    6
}
fn default_face() -> Face {
    Face { axis: 2, upper: false }
}
fn point_three() -> f64 {
    0.3
}
fn hundred() -> f64 {
    100.0
}

impl Default for StabilityConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("all fields have defaults")
    }
}

impl StabilityConfig {
    pub fn perturbation(&self) -> PerturbationSpec {
        PerturbationSpec {
            profile_order: self.profile_order,
            face: self.face,
            patch_radius: self.patch_radius,
            depth: self.depth,
            alpha: self.alpha,
            holder_bound: self.holder_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GegenbauerTableConfig {
    #[serde(default = "eight")]
    pub max_degree: u32,
    #[serde(default = "default_dims")]
    pub dimensions: Vec<u32>,
    #[serde(default = "eleven")]
    pub points: usize,
}

fn eight() -> u32 {
    8
}
fn default_dims() -> Vec<u32> {
    vec![3, 4, 5, 6]
}
fn eleven() -> usize {
    11
}

impl Default for GegenbauerTableConfig {
    fn default() -> Self {
        Self {
            max_degree: 8,
            dimensions: default_dims(),
            points: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: String,
    pub grid: GridSpec,
    pub apriori: AprioriData,
    pub medium: MediumSpec,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub singular: SingularConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub gegenbauer_table: GegenbauerTableConfig,
}

fn default_output() -> String {
    "out".into()
}

const REQUIRED: &[&str] = &[
    "/grid",
    "/grid/points",
    "/apriori",
    "/apriori/n",
    "/apriori/p",
    "/apriori/lambda",
    "/apriori/E",
    "/apriori/calE",
    "/apriori/k",
    "/apriori/r0",
    "/apriori/L",
    "/apriori/diam",
    "/apriori/alpha",
    "/medium",
    "/medium/mu_a",
    "/medium/mu_s",
];

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config("", e.to_string()))?;
        for ptr in REQUIRED {
            if value.pointer(ptr).is_none() {
                return Err(Error::config(*ptr, "required value is missing"));
            }
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::config("", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_CONFIG).expect("bundled configuration is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.apriori.validate()?;
        if self.apriori.n != 3 {
            return Err(Error::config("/apriori/n", "grid experiments are three-dimensional"));
        }
        GridDomain::new(self.grid.extent, self.grid.points).map_err(|e| Error::config("/grid", e.to_string()))?;
        self.medium.mu_a.compile("/medium/mu_a")?;
        self.medium.mu_s.compile("/medium/mu_s")?;
        if let Some(b) = &self.medium.b {
            for (i, row) in b.iter().enumerate() {
                for (j, f) in row.iter().enumerate() {
                    f.compile(&format!("/medium/b/{i}/{j}"))?;
                }
            }
        }
        if !(self.singular.r_max > 0.0) {
            return Err(Error::config("/singular/r_max", "must be positive"));
        }
        if self.stability.h > 2 {
            return Err(Error::config("/stability/h", "orders up to 2 are supported"));
        }
        if self.stability.eps_count == 0 || !(self.stability.eps_start > 0.0) {
            return Err(Error::config("/stability/eps_start", "sweep needs a positive start and count"));
        }
        self.stability.perturbation().validate()?;
        if self.gegenbauer_table.points < 2 {
            return Err(Error::config("/gegenbauer_table/points", "need at least two points"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn grid(&self) -> Result<GridDomain> {
        GridDomain::new(self.grid.extent, self.grid.points)
    }

    pub fn medium(&self) -> Result<OpticalMedium> {
        self.medium_on(self.grid()?)
    }

    pub fn medium_on(&self, grid: GridDomain) -> Result<OpticalMedium> {
        let mu_a = self.medium.mu_a.compile("/medium/mu_a")?;
        let mu_s = self.medium.mu_s.compile("/medium/mu_s")?;
        let b = match &self.medium.b {
            None => None,
            Some(rows) => {
                let mut c = Vec::with_capacity(9);
                for (i, row) in rows.iter().enumerate() {
                    for (j, f) in row.iter().enumerate() {
                        c.push(f.compile(&format!("/medium/b/{i}/{j}"))?);
                    }
                }
                Some((0..grid.len()).map(|p| {
                    let x = grid.coords(p);
                    Matrix3::from_fn(|i, j| c[3 * i + j].eval(x))
                }).collect())
            }
        };
        let mut m = OpticalMedium::new(
            grid,
            self.apriori,
            grid.sample_real(|x| mu_a.eval(x)),
            grid.sample_real(|x| mu_s.eval(x)),
            b,
        )?;
        m.holder_order = self.medium.holder_order;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_is_valid() {
        let c = RunConfig::bundled();
        let m = c.medium().unwrap();
        assert!(m.admissibility().admissible);
        assert_eq!(c.fingerprint(), RunConfig::bundled().fingerprint());
    }

    #[test]
    fn missing_lambda_points_at_it() {
        let mut v: Value = serde_json::from_str(DEFAULT_CONFIG).unwrap();
        v["apriori"].as_object_mut().unwrap().remove("lambda");
        match RunConfig::from_json(&v.to_string()) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/apriori/lambda"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_expression_and_unknown_keys_are_rejected() {
        let mut v: Value = serde_json::from_str(DEFAULT_CONFIG).unwrap();
        v["medium"]["mu_s"] = Value::String("1 + ".into());
        match RunConfig::from_json(&v.to_string()) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/medium/mu_s"),
            other => panic!("{other:?}"),
        }
        let mut v: Value = serde_json::from_str(DEFAULT_CONFIG).unwrap();
        v["grid"]["spacing"] = Value::from(0.1);
        assert!(matches!(RunConfig::from_json(&v.to_string()), Err(Error::Config { .. })));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = RunConfig::bundled();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
