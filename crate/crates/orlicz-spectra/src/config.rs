//! Run configuration: one JSON record drives every front-end task.

use serde::{Deserialize, Serialize};

use crate::mesh::{build_mesh, build_pair_quadrature, Basis, PairQuadrature};
use crate::operator::AssembledProblem;
use crate::solver::SolverConfig;
use crate::young::{GrowthFunction, YoungFunction};
use crate::{Error, Result};

/// Schema tag stamped into every output file.
pub const SCHEMA: &str = "orlicz-spectra/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    /// Fractional order in (0, 1).
    pub s: f64,
    pub young: YoungConfig,
    pub growth: GrowthConfig,
    pub mesh: MeshConfig,
    pub solver: SolverConfig,
    pub task: Task,
    /// Minimax levels to solve, 1-based.
    pub levels: Vec<usize>,
    pub sweep: SweepConfig,
    pub validate: ValidateConfig,
    /// Output path of the task result.
    pub output: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: DomainConfig::default(),
            s: 0.5,
            young: YoungConfig::default(),
            growth: GrowthConfig::default(),
            mesh: MeshConfig::default(),
            solver: SolverConfig::default(),
            task: Task::Solve,
            levels: vec![1],
            sweep: SweepConfig::default(),
            validate: ValidateConfig::default(),
            output: "result.json".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub a: f64,
    pub b: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig { a: -1.0, b: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum YoungConfig {
    /// `M(t) = |t|^p / p`.
    Power { p: f64 },
    /// `M(t) = e^|t| - |t| - 1`.
    Exp,
    /// Tabulated density `[[t, m(t)], ...]` with monotone interpolation.
    Custom { table: Vec<(f64, f64)> },
}

impl Default for YoungConfig {
    fn default() -> Self {
        YoungConfig::Power { p: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthConfig {
    /// `g = m_signed` of the paired energy density.
    Matched {
        #[serde(default)]
        a1: Option<f64>,
        #[serde(default)]
        a2: Option<f64>,
        #[serde(default)]
        a3: Option<f64>,
    },
    /// `g(t) = |t|^{q-2} t`.
    Power {
        q: f64,
        #[serde(default)]
        a1: Option<f64>,
        #[serde(default)]
        a2: Option<f64>,
        #[serde(default)]
        a3: Option<f64>,
    },
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig::Matched {
            a1: None,
            a2: None,
            a3: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Interior nodes (basis dimension).
    pub k: usize,
    /// Geometric grading ratio toward the diagonal.
    pub grading: f64,
    /// Truncation radius of the exterior strips.
    pub exterior_radius: f64,
    /// Gauss order per quadrature direction.
    pub quad_order: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            k: 31,
            grading: 2.0,
            exterior_radius: 40.0,
            quad_order: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Solve,
    Sweep,
    Validate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Basis dimensions for a dyadic continuation sweep.
    pub k_list: Vec<usize>,
    /// Fractional orders for an order sweep.
    pub s_list: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Trials per battery sub-test.
    pub trials: usize,
    /// Random `(u, h)` combinations for the translation sweeps.
    pub sweep_samples: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            trials: 1000,
            sweep_samples: 100,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds the energy density. `strict` enforces the sampled
    /// admissibility invariants; the validation task loads tables without
    /// them so that planted violations reach the battery.
    pub fn build_young(&self, strict: bool) -> Result<YoungFunction> {
        match &self.young {
            YoungConfig::Power { p } => YoungFunction::power(*p),
            YoungConfig::Exp => Ok(YoungFunction::exp_minus_linear()),
            YoungConfig::Custom { table } => {
                if strict {
                    YoungFunction::custom(table)
                } else {
                    YoungFunction::custom_unchecked(table)
                }
            }
        }
    }

    /// Builds the right-hand side. `strict` samples the growth bound
    /// against the paired density.
    pub fn build_growth(&self, young: &YoungFunction, strict: bool) -> Result<GrowthFunction> {
        let growth = match &self.growth {
            GrowthConfig::Matched { a1, a2, a3 } => GrowthFunction::matched(young.clone())
                .with_constants(a1.unwrap_or(0.0), a2.unwrap_or(1.0), a3.unwrap_or(1.0))?,
            GrowthConfig::Power { q, a1, a2, a3 } => GrowthFunction::power_law(*q)?
                .with_constants(a1.unwrap_or(1.0), a2.unwrap_or(1.0), a3.unwrap_or(1.0))?,
        };
        if strict {
            let report = growth.check_growth(young, 64);
            if !report.ok {
                return Err(Error::Config(format!(
                    "growth bound violated: {}",
                    report.violations.first().cloned().unwrap_or_default()
                )));
            }
        }
        Ok(growth)
    }

    pub fn build_basis(&self, k: usize, s: f64) -> Result<Basis> {
        build_mesh(self.domain.a, self.domain.b, k, s)
    }

    pub fn build_quadrature(&self, basis: &Basis) -> Result<PairQuadrature> {
        build_pair_quadrature(
            basis,
            self.mesh.grading,
            self.mesh.exterior_radius,
            self.mesh.quad_order,
        )
    }

    /// Assembles the full problem at the given dimension and order,
    /// defaulting to the configured ones.
    pub fn build_problem(&self, k: Option<usize>, s: Option<f64>, strict: bool) -> Result<AssembledProblem> {
        let young = self.build_young(strict)?;
        let growth = self.build_growth(&young, strict)?;
        let basis = self.build_basis(k.unwrap_or(self.mesh.k), s.unwrap_or(self.s))?;
        let quad = self.build_quadrature(&basis)?;
        AssembledProblem::new(basis, quad, young, growth)
    }
}

/// Applies a `key.path=value` override onto a JSON configuration tree.
/// Values parse as JSON when possible and fall back to strings.
pub fn apply_override(tree: &mut serde_json::Value, path: &str, raw: &str) -> Result<()> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("malformed override path '{path}'")));
    }
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = tree;
    for seg in &segments[..segments.len() - 1] {
        node = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("'{seg}' is not an object in '{path}'")))?
            .entry(seg.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    let last = segments[segments.len() - 1];
    node.as_object_mut()
        .ok_or_else(|| Error::Config(format!("cannot set '{last}' in '{path}'")))?
        .insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);

        let custom = RunConfig {
            s: 0.3,
            young: YoungConfig::Exp,
            growth: GrowthConfig::Power {
                q: 2.0,
                a1: Some(1.0),
                a2: Some(2.0),
                a3: Some(0.5),
            },
            levels: vec![1, 2, 3],
            task: Task::Sweep,
            ..RunConfig::default()
        };
        let back = RunConfig::from_json(&custom.to_json()).unwrap();
        assert_eq!(custom, back);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{ "domian": { "a": -1.0 } }"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn overrides_apply_dotted_paths() {
        let mut tree = serde_json::to_value(RunConfig::default()).unwrap();
        apply_override(&mut tree, "mesh.k", "15").unwrap();
        apply_override(&mut tree, "solver.rng_seed", "7").unwrap();
        apply_override(&mut tree, "s", "0.3").unwrap();
        apply_override(&mut tree, "young.kind", "exp").unwrap();
        apply_override(&mut tree, "levels", "[1,2]").unwrap();
        let cfg: RunConfig = serde_json::from_value(tree).unwrap();
        assert_eq!(cfg.mesh.k, 15);
        assert_eq!(cfg.solver.rng_seed, 7);
        assert_eq!(cfg.s, 0.3);
        assert_eq!(cfg.young, YoungConfig::Exp);
        assert_eq!(cfg.levels, vec![1, 2]);
    }

    #[test]
    fn strict_build_rejects_bad_tables() {
        let cfg = RunConfig {
            young: YoungConfig::Custom {
                table: vec![(0.0, 0.0), (1.0, 2.0), (2.0, 1.0), (3.0, 4.0)],
            },
            ..RunConfig::default()
        };
        assert!(cfg.build_young(true).is_err());
        assert!(cfg.build_young(false).is_ok());
    }
}
