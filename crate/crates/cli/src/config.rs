//! Experiment configuration: one TOML file with a section per module.

use std::path::{Path, PathBuf};

use birkhoff_lab::banach::{DEFAULT_EPSILON0, DEFAULT_GRID};
use birkhoff_lab::dynamics::{MapSpec, System};
use birkhoff_lab::observable::{Observable, ObservableSpec};
use birkhoff_lab::stats::{default_kappa3_grid, InitMeasure, SamplingParams, DEFAULT_BUDGET, DEFAULT_K_MAX, DEFAULT_RHO_GRID};
use birkhoff_lab::transfer::{default_s_grid, DEFAULT_C_SWEEP};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    pub n: usize,
    pub m: usize,
    pub n_grid: Vec<usize>,
    pub init: Option<InitMeasure>,
    pub budget: u64,
    pub orbits: usize,
    pub orbit_len: usize,
    pub k_max: usize,
    pub kappa3_orbits: usize,
    pub kappa3_grid: Vec<usize>,
    pub rho_grid: Vec<f64>,
    pub bump_half_width: f64,
    pub bump_height: f64,
    pub target_mean: Option<f64>,
    pub target_sigma2: Option<f64>,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection {
            n: 1000,
            m: 1000,
            n_grid: vec![100, 1000, 10_000],
            init: None,
            budget: DEFAULT_BUDGET,
            orbits: 64,
            orbit_len: 1 << 15,
            k_max: DEFAULT_K_MAX,
            kappa3_orbits: 10_000,
            kappa3_grid: default_kappa3_grid(),
            rho_grid: DEFAULT_RHO_GRID.to_vec(),
            bump_half_width: 1.0,
            bump_height: 1.0,
            target_mean: None,
            target_sigma2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanachSection {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon0: f64,
    pub grid_n: usize,
}

impl Default for BanachSection {
    fn default() -> Self {
        BanachSection {
            alpha: 0.2,
            beta: 0.3,
            gamma: 2.0,
            epsilon0: DEFAULT_EPSILON0,
            grid_n: DEFAULT_GRID,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub cells: usize,
    pub s_grid: Vec<f64>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            cells: 1024,
            s_grid: default_s_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DflySection {
    pub s_values: Vec<f64>,
    pub test_functions: usize,
    pub grid_n: usize,
    pub n_max: usize,
    pub gamma_bar: Option<f64>,
    pub c_sweep: Vec<f64>,
    /// Repeat the fit on a grid twice as fine.
    pub grid_doubling: bool,
}

impl Default for DflySection {
    fn default() -> Self {
        DflySection {
            s_values: vec![0.0, 0.3, 1.0],
            test_functions: 20,
            grid_n: 512,
            n_max: 10,
            gamma_bar: None,
            c_sweep: DEFAULT_C_SWEEP.to_vec(),
            grid_doubling: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoboundarySection {
    pub max_period: u32,
}

impl Default for CoboundarySection {
    fn default() -> Self {
        CoboundarySection { max_period: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: Format,
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            format: Format::Both,
            plots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    pub system: MapSpec,
    #[serde(default)]
    pub observable: Option<ObservableSpec>,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub banach: BanachSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub dfly: DflySection,
    #[serde(default)]
    pub coboundary: CoboundarySection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, text))
    }

    /// Parses `text` after applying `key.path=value` overrides; values are
    /// TOML literals, anything unparsable is taken as a string.
    pub fn from_sources(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override '{o}' is not KEY=VALUE")))?;
            let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
                Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
                Err(_) => toml::Value::String(raw.into()),
            };
            let path: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = path.split_last().expect("split yields one item");
            let mut table = &mut doc;
            for p in parents {
                let entry = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                table = entry
                    .as_table_mut()
                    .ok_or_else(|| CliError::Config(format!("override '{key}': '{p}' is not a section")))?;
            }
            table.insert(last.to_string(), value);
        }
        let text = toml::to_string(&doc).map_err(|e| CliError::Config(e.to_string()))?;
        Self::parse(&text)
    }

    /// The resolved configuration, defaults included, as TOML.
    pub fn resolved(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Resolved text with the output directory cleared; runs that differ only
    /// in where they write share a hash.
    pub fn identity(&self) -> String {
        let mut c = self.clone();
        c.output.dir = Default::default();
        c.resolved()
    }

    pub fn system(&self) -> Result<System, CliError> {
        Ok(self.system.build()?)
    }

    pub fn observable(&self, system: &System) -> Result<Observable, CliError> {
        let spec = self
            .observable
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs an [observable] section".into()))?;
        Ok(spec.build(system)?)
    }

    pub fn sampling(&self, system: &System) -> SamplingParams {
        let mut p = SamplingParams::new(self.stats.init.unwrap_or_else(|| InitMeasure::stationary(system)), self.seed);
        p.budget = self.stats.budget;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::parse("[system]\nkind = \"doubling\"\n").unwrap();
        assert_eq!(cfg.stats, StatsSection::default());
        assert_eq!(cfg.output.format, Format::Both);
        let again = ExperimentConfig::parse(&cfg.resolved()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = "[system]\nkind = \"doubling\"\n[stats]\nnn = 3\n";
        assert!(matches!(ExperimentConfig::parse(bad), Err(CliError::Config(_))));
        assert!(ExperimentConfig::parse("[stats]\nn = 3\n").is_err());
    }

    #[test]
    fn overrides_nest_and_type() {
        let o = vec![
            "system.kind=doubling".to_string(),
            "stats.m=5000".into(),
            "observable={kind = \"osc\", c = 0.2}".into(),
        ];
        let cfg = ExperimentConfig::from_sources("", &o).unwrap();
        assert_eq!(cfg.stats.m, 5000);
        assert_eq!(cfg.observable.unwrap().c, Some(0.2));
        assert!(ExperimentConfig::from_sources("", &["stats.m".into()]).is_err());
    }

    #[test]
    fn init_measure_tags() {
        let cfg = ExperimentConfig::parse(
            "[system]\nkind = \"doubling\"\n[stats.init]\nkind = \"invariant-ulam\"\ncells = 256\n",
        )
        .unwrap();
        assert_eq!(cfg.stats.init, Some(InitMeasure::InvariantUlam { cells: 256 }));
    }
}
