//! Run configuration, read from a TOML file.
//!
//! ```toml
//! commands = ["check", "measure"]
//! output = "results.json"
//! format = "json"
//!
//! [model]
//! kind = "partial_swap"
//! t1 = 0.5
//! t2 = 1.0
//! initial = "partial_bell"
//!
//! [optimizer]
//! restarts = 4
//! seed = 7
//! ```
//!
//! Matrices are nested arrays of `[re, im]` pairs, one inner array per row.
//! Relative paths are resolved against the directory of the config file.

use crate::error::{CliError, Result};
use ptnm::linalg::{ComplexMatrix, C64};
use ptnm::models::{InitialState, ModelKind, ModelSpec, Preset};
use ptnm::optim::OptimizerConfig;
use ptnm::quantum::DensityMatrix;
use serde::{Deserialize, Deserializer};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Build,
    Check,
    Measure,
    Sweep,
    Demo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Build => "build",
            Command::Check => "check",
            Command::Measure => "measure",
            Command::Sweep => "sweep",
            Command::Demo => "demo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Condition checks available to `check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Factorization,
    NoIbtres,
    NoIbtresFactorized,
    NoSece,
    NoSeceFactorized,
    Lemma1,
}

impl Check {
    pub const ALL: [Check; 6] = [
        Check::Factorization,
        Check::NoIbtres,
        Check::NoIbtresFactorized,
        Check::NoSece,
        Check::NoSeceFactorized,
        Check::Lemma1,
    ];
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    pub commands: Vec<Command>,
    pub optimizer: OptimizerConfig,
    pub output_path: Option<PathBuf>,
    pub format: Format,
    /// Tensor file written by `build` and read by `check`.
    pub tensor_path: Option<PathBuf>,
    pub t1_grid: Option<Vec<f64>>,
    pub checks: Vec<Check>,
    /// Seed for the random probes of the `lemma1` check.
    pub probe_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            commands: Vec::new(),
            optimizer: OptimizerConfig::default(),
            output_path: None,
            format: Format::default(),
            tensor_path: None,
            t1_grid: None,
            checks: Check::ALL.to_vec(),
            probe_seed: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    #[serde(default)]
    optimizer: OptimizerConfig,
    #[serde(default)]
    commands: Vec<Command>,
    output: Option<PathBuf>,
    format: Option<Format>,
    tensor: Option<PathBuf>,
    t1_grid: Option<Vec<f64>>,
    checks: Option<Vec<Check>>,
    probe_seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: ModelKind,
    d_sys: Option<usize>,
    d_env: Option<usize>,
    coupling: Option<f64>,
    t1: Option<f64>,
    t2: Option<f64>,
    theta: Option<f64>,
    seed: Option<u64>,
    initial: Option<RawInitial>,
    #[serde(default, deserialize_with = "optional_matrix")]
    hamiltonian: Option<ComplexMatrix>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawInitial {
    Preset(Preset),
    Explicit(ExplicitState),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitState {
    #[serde(default, deserialize_with = "optional_matrix")]
    system: Option<ComplexMatrix>,
    #[serde(default, deserialize_with = "optional_matrix")]
    joint: Option<ComplexMatrix>,
}

fn matrix_from_pairs(rows: Vec<Vec<[f64; 2]>>) -> std::result::Result<ComplexMatrix, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err("matrix rows have different lengths".into());
    }
    let data: Vec<C64> = rows
        .iter()
        .flatten()
        .map(|&[re, im]| C64::new(re, im))
        .collect();
    ComplexMatrix::new(rows.len(), cols, data).map_err(|e| e.to_string())
}

fn optional_matrix<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<ComplexMatrix>, D::Error> {
    let raw: Option<Vec<Vec<[f64; 2]>>> = Option::deserialize(d)?;
    raw.map(|rows| matrix_from_pairs(rows).map_err(serde::de::Error::custom))
        .transpose()
}

fn state(mat: ComplexMatrix, what: &str) -> Result<DensityMatrix> {
    DensityMatrix::from_matrix(mat).map_err(|e| CliError::Config(format!("{what} state: {e}")))
}

impl RawModel {
    fn resolve(self) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(self.kind);
        spec.d_sys = self.d_sys.unwrap_or(spec.d_sys);
        spec.d_env = self.d_env;
        spec.coupling = self.coupling.unwrap_or(spec.coupling);
        spec.t1 = self.t1.unwrap_or(spec.t1);
        spec.t2 = self.t2.unwrap_or(spec.t2);
        spec.theta = self.theta;
        spec.seed = self.seed;
        spec.hamiltonian = self.hamiltonian;
        spec.initial = match self.initial {
            None => InitialState::Preset(Preset::Factorized),
            Some(RawInitial::Preset(p)) => InitialState::Preset(p),
            Some(RawInitial::Explicit(ExplicitState {
                system: Some(m),
                joint: None,
            })) => InitialState::System(state(m, "system")?),
            Some(RawInitial::Explicit(ExplicitState {
                system: None,
                joint: Some(m),
            })) => InitialState::Joint(state(m, "joint")?),
            Some(RawInitial::Explicit(_)) => {
                return Err(CliError::Config(
                    "initial needs exactly one of `system` or `joint`".into(),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl RunConfig {
    /// Parses TOML text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        raw.optimizer.validate()?;
        let resolve = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        Ok(Self {
            model: raw.model.map(RawModel::resolve).transpose()?,
            commands: raw.commands,
            optimizer: raw.optimizer,
            output_path: raw.output.map(resolve),
            format: raw.format.unwrap_or_default(),
            tensor_path: raw.tensor.map(resolve),
            t1_grid: raw.t1_grid,
            checks: raw.checks.unwrap_or_else(|| Check::ALL.to_vec()),
            probe_seed: raw.probe_seed.unwrap_or(0),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn model(&self) -> Result<&ModelSpec> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [model] section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = r#"
            commands = ["build", "check"]
            format = "csv"
            tensor = "t.json"
            [model]
            kind = "hamiltonian"
            t1 = 0.2
            hamiltonian = [
                [[1, 0], [0, 0], [0, 0], [0, 0]],
                [[0, 0], [0, 0], [1, 0], [0, 0]],
                [[0, 0], [1, 0], [0, 0], [0, 0]],
                [[0, 0], [0, 0], [0, 0], [1, 0]],
            ]
            [model.initial]
            system = [[[0.5, 0], [0, -0.5]], [[0, 0.5], [0.5, 0]]]
            [optimizer]
            restarts = 3
        "#;
        let cfg = RunConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.commands, vec![Command::Build, Command::Check]);
        assert_eq!(cfg.format, Format::Csv);
        assert_eq!(cfg.tensor_path, Some(PathBuf::from("/base/t.json")));
        assert_eq!(cfg.optimizer.restarts, 3);
        let model = cfg.model.unwrap();
        assert_eq!(model.kind, ModelKind::Hamiltonian);
        assert!(matches!(model.initial, InitialState::System(_)));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "[model]\nkind = \"full_swap\"\nbogus = 1\n";
        let err = RunConfig::parse(text, Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line 3"), "{err}");
        let ragged =
            "[model]\nkind = \"hamiltonian\"\nhamiltonian = [[[1, 0]], [[0, 0], [1, 0]]]\n";
        let err = RunConfig::parse(ragged, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn preset_and_invalid_times() {
        let ok = "[model]\nkind = \"partial_swap\"\ninitial = \"partial_bell\"\n";
        let cfg = RunConfig::parse(ok, Path::new(".")).unwrap();
        assert!(matches!(
            cfg.model.unwrap().initial,
            InitialState::Preset(Preset::PartialBell)
        ));
        let bad = "[model]\nkind = \"partial_swap\"\nt1 = 3.0\nt2 = 1.0\n";
        assert_eq!(
            RunConfig::parse(bad, Path::new("."))
                .unwrap_err()
                .exit_code(),
            2
        );
    }
}
