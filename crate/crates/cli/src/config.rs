//! Experiment configuration: TOML with `model`, `solver`, `experiment` and
//! `diagnostics` sections. See `schema.toml` at the crate root.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use obstacle_core::diagnostics::{SpaceProfile, TimeCutoff};
use obstacle_core::grid::TorusGrid;
use obstacle_core::model::{InitialData, ModelSpec, NoiseModel, Nonlinearity, Obstacle, Reaction};
use obstacle_core::solver::{RefinementOrder, Scheme, SolverConfig};
use obstacle_core::validation::BarenblattParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub solver: SolverSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub dim: usize,
    pub nonlinearity: Nonlinearity,
    #[serde(default = "zero_reaction")]
    pub reaction: Reaction,
    #[serde(default = "absent_obstacle")]
    pub obstacle: Obstacle,
    #[serde(default)]
    pub noise: NoiseModel,
    pub initial: InitialData,
}

fn zero_reaction() -> Reaction {
    Reaction::Zero
}

fn absent_obstacle() -> Obstacle {
    Obstacle::Absent
}

impl ModelSection {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            dim: self.dim,
            nonlinearity: self.nonlinearity,
            reaction: self.reaction,
            obstacle: self.obstacle,
            noise: self.noise.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub points_per_dim: usize,
    #[serde(rename = "T")]
    pub final_time: f64,
    pub dt: f64,
    /// Penalty schedule; single-run kinds use the first entry.
    pub eps: Vec<f64>,
    /// Smoothing-level schedule; single-run kinds use the first entry.
    pub levels: Vec<u32>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default)]
    pub state_bound: Option<f64>,
}

fn default_cfl_safety() -> f64 {
    0.9
}

fn one() -> usize {
    1
}

impl SolverSection {
    pub fn config(&self, dim: usize, eps: f64, level: u32) -> Result<SolverConfig> {
        let grid = TorusGrid::new(dim, self.points_per_dim)?;
        let mut cfg = SolverConfig::new(grid, self.final_time, self.dt, eps, level);
        cfg.scheme = self.scheme;
        cfg.cfl_safety = self.cfl_safety;
        cfg.record_stride = self.record_stride;
        cfg.state_bound = self.state_bound;
        cfg.check()?;
        Ok(cfg)
    }

    /// Configuration of single-run kinds.
    pub fn first(&self, dim: usize) -> Result<SolverConfig> {
        self.config(dim, self.eps[0], self.levels[0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Single,
    RefineEps,
    Ensemble,
    StabilityPair,
    ComparisonPair,
    ConvergenceStudy,
    EntropySuite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default = "one")]
    pub ensemble_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Default output directory; the environment and `--out` override it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub save_trajectories: bool,
    /// Joint `(n, ε)` refinement order when both schedules have several entries.
    #[serde(default)]
    pub order: Option<RefinementOrder>,
    /// Second member of stability and comparison pairs.
    #[serde(default)]
    pub pair: Option<PairSection>,
    /// Grid resolutions of a convergence study.
    #[serde(default)]
    pub grids: Vec<usize>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
}

/// Overrides that define the second run of a pair; unset fields are shared.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    #[serde(default)]
    pub initial: Option<InitialData>,
    #[serde(default)]
    pub reaction: Option<Reaction>,
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleSection {
    /// Exact profile with the model's `m` and `d`.
    Barenblatt { mass: f64, t0: f64, center: [f64; 2] },
    SelfReference { points_per_dim: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calibrated {
    Calibrated,
}

/// A literal bound or `"calibrated"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tolerance {
    Literal(f64),
    Calibrated(Calibrated),
}

impl Tolerance {
    /// The literal value, or `calibrated` computed on demand.
    pub fn resolve(&self, calibrated: impl FnOnce() -> f64) -> f64 {
        match *self {
            Tolerance::Literal(v) => v,
            Tolerance::Calibrated(_) => calibrated(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Widths of the convex test entropies.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Centres of the convex test entropies.
    #[serde(default = "default_shifts")]
    pub shifts: Vec<f64>,
    /// Attainment windows; defaults to `T/4, T/16, T/64`.
    #[serde(default)]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub test_function: Option<SpaceProfile>,
    /// Time cutoff of the entropy and variational tests; defaults to a fade
    /// over `[T/2, T]`.
    #[serde(default)]
    pub cutoff: Option<TimeCutoff>,
    /// Run the variational-inequality check on the finest refinement run.
    #[serde(default)]
    pub variational: bool,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_deltas() -> Vec<f64> {
    vec![1.0, 0.1]
}

fn default_shifts() -> Vec<f64> {
    vec![0.0]
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            deltas: default_deltas(),
            shifts: default_shifts(),
            taus: Vec::new(),
            test_function: None,
            cutoff: None,
            variational: false,
            tolerances: Tolerances::default(),
        }
    }
}

impl DiagnosticsSection {
    pub fn cutoff(&self, final_time: f64) -> TimeCutoff {
        self.cutoff.unwrap_or(TimeCutoff::new(0.5 * final_time, final_time))
    }

    pub fn test_function(&self) -> SpaceProfile {
        self.test_function.clone().unwrap_or(SpaceProfile::VonMises { amplitude: 1.0, kappa: 1.0, center: [0.3, 0.3] })
    }

    pub fn taus(&self, final_time: f64) -> Vec<f64> {
        if self.taus.is_empty() {
            vec![final_time / 4.0, final_time / 16.0, final_time / 64.0]
        } else {
            self.taus.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Per-step mass defect relative to `max(‖ξ‖_∞, 1)`.
    #[serde(default = "mass_tol")]
    pub mass_defect: Tolerance,
    /// Pointwise order violation of coupled pairs.
    #[serde(default = "order_tol")]
    pub order_violation: Tolerance,
    /// Minimum log-log slope of the `L₂` violation against `ε`.
    #[serde(default = "slope_tol")]
    pub penalty_slope: Tolerance,
    /// Maximum spread of `ε^{-1/2}`-scaled violations.
    #[serde(default = "spread_tol")]
    pub penalty_spread: Tolerance,
    /// `L¹` contraction ratio; calibrated: `1 + 1e-6` for `f = 0`
    /// deterministic pairs, else `1.1 e^{KT}`.
    #[serde(default = "calibrated")]
    pub contraction: Tolerance,
    /// Convex entropy residual; calibrated: `3×` the equality residual.
    #[serde(default = "calibrated")]
    pub entropy: Tolerance,
    /// Ratio `A(τ_min)/A(τ_max)` of initial attainment.
    #[serde(default = "attainment_tol")]
    pub attainment_ratio: Tolerance,
    /// Minimum fitted convergence order.
    #[serde(default = "order_fit_tol")]
    pub convergence_order: Tolerance,
    /// Variational pairing lower bound (negated); calibrated: `5×` the
    /// self-test value.
    #[serde(default = "calibrated")]
    pub variational: Tolerance,
}

fn mass_tol() -> Tolerance {
    Tolerance::Literal(1e-12)
}
fn order_tol() -> Tolerance {
    Tolerance::Literal(1e-8)
}
fn slope_tol() -> Tolerance {
    Tolerance::Literal(0.4)
}
fn spread_tol() -> Tolerance {
    Tolerance::Literal(2.0)
}
fn calibrated() -> Tolerance {
    Tolerance::Calibrated(Calibrated::Calibrated)
}
fn attainment_tol() -> Tolerance {
    Tolerance::Literal(0.25)
}
fn order_fit_tol() -> Tolerance {
    Tolerance::Literal(0.5)
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass_defect: mass_tol(),
            order_violation: order_tol(),
            penalty_slope: slope_tol(),
            penalty_spread: spread_tol(),
            contraction: calibrated(),
            entropy: calibrated(),
            attainment_ratio: attainment_tol(),
            convergence_order: order_fit_tol(),
            variational: calibrated(),
        }
    }
}

fn strictly_monotone<T: PartialOrd>(values: &[T]) -> bool {
    values.windows(2).all(|w| w[0] < w[1]) || values.windows(2).all(|w| w[0] > w[1])
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model.spec();
        model.check().context("model")?;
        let s = &self.solver;
        if s.eps.is_empty() || s.eps.iter().any(|e| !(*e > 0.0)) {
            bail!("solver.eps: schedule must be nonempty and positive");
        }
        if !strictly_monotone(&s.eps) {
            bail!("solver.eps: schedule must be strictly monotone");
        }
        if s.levels.is_empty() || s.levels.contains(&0) {
            bail!("solver.levels: schedule must be nonempty and positive");
        }
        if !strictly_monotone(&s.levels) {
            bail!("solver.levels: schedule must be strictly monotone");
        }
        s.first(self.model.dim).context("solver")?;
        let e = &self.experiment;
        if e.ensemble_size == 0 {
            bail!("experiment.ensemble_size: must be at least 1");
        }
        match e.kind {
            ExperimentKind::StabilityPair | ExperimentKind::ComparisonPair => {
                let Some(pair) = &e.pair else {
                    bail!("experiment.pair: required for {:?}", e.kind);
                };
                if pair.initial.is_none() && pair.reaction.is_none() && pair.eps.is_none() {
                    bail!("experiment.pair: must override at least one of initial, reaction, eps");
                }
            }
            ExperimentKind::ConvergenceStudy => {
                if e.grids.is_empty() || e.grids.contains(&0) {
                    bail!("experiment.grids: must list positive resolutions");
                }
                if e.oracle.is_none() {
                    bail!("experiment.oracle: required for convergence-study");
                }
                if !model.is_deterministic() {
                    bail!("model.noise: convergence studies need a deterministic model");
                }
            }
            _ => {}
        }
        let d = &self.diagnostics;
        if d.deltas.iter().any(|x| !(*x > 0.0)) {
            bail!("diagnostics.deltas: widths must be positive");
        }
        if d.variational && (!model.is_deterministic() || !model.reaction.is_zero()) {
            bail!("diagnostics.variational: needs a deterministic model with f = 0");
        }
        if let Some(c) = d.cutoff {
            if !(c.fade_start >= 0.0 && c.fade_start <= c.fade_end && c.fade_end <= s.final_time) {
                bail!("diagnostics.cutoff: need 0 ≤ fade_start ≤ fade_end ≤ T");
            }
        }
        Ok(())
    }

    /// The Barenblatt parameters or reference grid of a convergence study.
    pub fn oracle(&self) -> Result<obstacle_core::validation::Oracle> {
        use obstacle_core::validation::Oracle;
        Ok(match self.experiment.oracle.as_ref().context("experiment.oracle: missing")? {
            OracleSection::Barenblatt { mass, t0, center } => {
                Oracle::Barenblatt(BarenblattParams::new(self.model.nonlinearity.m, self.model.dim, *mass, *t0, *center)?)
            }
            OracleSection::SelfReference { points_per_dim } => {
                Oracle::SelfReference { points_per_dim: *points_per_dim, initial: self.model.initial }
            }
        })
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.experiment.output_dir = None;
        let json = serde_json::to_string(&canonical).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Sets the numeric field at a dotted path such as `solver.dt`; list
    /// fields become one-entry lists.
    pub fn with_value(&self, axis: &str, value: f64) -> Result<Self> {
        let mut tree = toml::Value::try_from(self)?;
        let mut node = &mut tree;
        for key in axis.split('.') {
            node = node
                .get_mut(key)
                .with_context(|| format!("sweep axis {axis}: no field {key}"))?;
        }
        let number = |v: f64, like: &toml::Value| match like {
            toml::Value::Integer(_) if v.fract() == 0.0 => Ok(toml::Value::Integer(v as i64)),
            toml::Value::Float(_) => Ok(toml::Value::Float(v)),
            _ => bail!("sweep axis {axis}: not a numeric field"),
        };
        let replacement = match &*node {
            toml::Value::Array(items) if !items.is_empty() => toml::Value::Array(vec![number(value, &items[0])?]),
            other => number(value, other)?,
        };
        *node = replacement;
        let cfg: Self = tree.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Flat `name → value` view used by sweep aggregates.
pub type Scalars = BTreeMap<String, f64>;

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
[model]
dim = 1
nonlinearity = { m = 2.0, K = 1.0 }
obstacle = { kind = "constant", level = 0.2 }
initial = { kind = "cosine", mean = 0.8, amplitude = 0.1, wave = [1, 0] }

[solver]
points_per_dim = 16
T = 0.0
dt = 1e-4
eps = [1e-2]
levels = [8]

[experiment]
kind = "single"
"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.diagnostics.tolerances.entropy, Tolerance::Calibrated(Calibrated::Calibrated));
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn schema_errors_name_the_field() {
        let bad = MINIMAL.replace("eps = [1e-2]", "eps = [1e-2, 1e-1, 1e-3]");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("solver.eps"), "{err}");
        let unknown = MINIMAL.replace("levels = [8]", "levels = [8]\nlevel = 3");
        let err = format!("{:#}", ExperimentConfig::from_toml(&unknown).unwrap_err());
        assert!(err.contains("level"), "{err}");
        let family = MINIMAL.replace("\"constant\"", "\"staircase\"");
        assert!(ExperimentConfig::from_toml(&family).is_err());
        let pair = MINIMAL.replace("\"single\"", "\"stability-pair\"");
        assert!(ExperimentConfig::from_toml(&pair).unwrap_err().to_string().contains("experiment.pair"));
    }

    #[test]
    fn literal_and_calibrated_tolerances() {
        let text = format!("{MINIMAL}\n[diagnostics.tolerances]\nentropy = 0.5\ncontraction = \"calibrated\"\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.diagnostics.tolerances.entropy.resolve(|| 9.0), 0.5);
        assert_eq!(cfg.diagnostics.tolerances.contraction.resolve(|| 9.0), 9.0);
        assert!(ExperimentConfig::from_toml(&text.replace("0.5", "\"loose\"")).is_err());
    }

    #[test]
    fn sweep_axis_rewrites_fields() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let a = cfg.with_value("solver.dt", 5e-5).unwrap();
        assert_eq!(a.solver.dt, 5e-5);
        let b = cfg.with_value("solver.eps", 1e-3).unwrap();
        assert_eq!(b.solver.eps, vec![1e-3]);
        let c = cfg.with_value("solver.points_per_dim", 32.0).unwrap();
        assert_eq!(c.solver.points_per_dim, 32);
        assert_ne!(cfg.hash(), a.hash());
        assert!(cfg.with_value("solver.nothing", 1.0).is_err());
        assert!(cfg.with_value("experiment.kind", 1.0).is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut moved = cfg.clone();
        moved.experiment.output_dir = Some("elsewhere".into());
        assert_eq!(cfg.hash(), moved.hash());
    }
}
