//! Project configuration, read from TOML.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accessibility::{LogsumConfig, ProviderConfig, TravelTimeConfig};
use crate::domain::io::read_text;
use crate::domain::synthetic::GeneratorConfig;
use crate::domain::ScenarioSpec;
use crate::metrics::Disconnected;
use crate::simulate::SimulationConfig;
use crate::{Error, Result};

/// How `generate` assigns synthetic households to cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// In proportion to housing stock.
    Proportional,
    /// By one draw from the residential choice model.
    #[default]
    Choice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_cells: usize,
    pub n_households: usize,
    pub placement: Placement,
    pub generator: GeneratorConfig,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_cells: 100,
            n_households: 5000,
            placement: Placement::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

/// Input tables used instead of the generated ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub cells: PathBuf,
    pub households: PathBuf,
    pub edges: PathBuf,
    /// Built-in age table when absent.
    pub moving_rates: Option<PathBuf>,
}

/// Coefficient files used by `--preset`; the bundled tables when absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetPaths {
    pub hedonic: Option<PathBuf>,
    pub choice: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Share of households in the estimation subset.
    pub split_fraction: f64,
    pub validation_runs: usize,
    pub data: Option<DataPaths>,
    pub synthetic: SyntheticConfig,
    pub travel: TravelTimeConfig,
    pub provider: ProviderConfig,
    pub logsum: LogsumConfig,
    pub simulation: SimulationConfig,
    pub disconnected: Disconnected,
    pub presets: PresetPaths,
    /// Scenario definitions; these shadow built-in presets of the same name.
    pub scenarios: Vec<ScenarioSpec>,
    /// Scenarios `simulate` runs when none is named on the command line.
    pub run: Vec<String>,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            split_fraction: 0.8,
            validation_runs: 10,
            data: None,
            synthetic: SyntheticConfig::default(),
            travel: TravelTimeConfig::default(),
            provider: ProviderConfig::default(),
            logsum: LogsumConfig::default(),
            simulation: SimulationConfig::default(),
            disconnected: Disconnected::default(),
            presets: PresetPaths::default(),
            scenarios: Vec::new(),
            run: vec!["base".into(), "s1".into(), "s2".into()],
        }
    }
}

fn rebase(dir: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = dir.join(&*p);
    }
}

impl ProjectConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ProjectConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let mut config = Self::parse(&read_text(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        rebase(dir, &mut config.out_dir);
        if let Some(d) = config.data.as_mut() {
            rebase(dir, &mut d.cells);
            rebase(dir, &mut d.households);
            rebase(dir, &mut d.edges);
            if let Some(m) = d.moving_rates.as_mut() {
                rebase(dir, m);
            }
        }
        for p in [&mut config.presets.hedonic, &mut config.presets.choice]
            .into_iter()
            .flatten()
        {
            rebase(dir, p);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction {} not in (0, 1): both subsets must be non-empty",
                self.split_fraction
            )));
        }
        if self.validation_runs == 0 {
            return Err(Error::Config("validation_runs must be at least 1".into()));
        }
        let mut names = HashSet::new();
        for s in &self.scenarios {
            s.validate()?;
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!(
                    "scenario name '{}' is defined twice",
                    s.name
                )));
            }
        }
        Ok(())
    }

    /// Scenario by name: a configured one, else a built-in preset.
    pub fn scenario(&self, name: &str) -> Result<ScenarioSpec> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .cloned()
            .or_else(|| ScenarioSpec::preset(name))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scenario '{name}' (built-in: {})",
                    ScenarioSpec::PRESET_NAMES.join(", ")
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = ProjectConfig::parse("").unwrap();
        assert_eq!(c, ProjectConfig::default());
        let c = ProjectConfig::parse(
            "seed = 7\nsplit_fraction = 0.5\n[synthetic]\nn_cells = 25\nplacement = \"proportional\"\n\n[[scenarios]]\nname = \"s9\"\nvot_commute_multiplier = 0.4\n",
        )
        .unwrap();
        assert_eq!(
            (c.seed, c.synthetic.n_cells, c.synthetic.placement),
            (7, 25, Placement::Proportional)
        );
        assert_eq!(c.scenario("s9").unwrap().vot_commute_multiplier, 0.4);
        assert_eq!(c.scenario("s2").unwrap().vot_commute_multiplier, 0.5);
        assert!(matches!(c.scenario("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "split_fraction = 1.0",
            "split_fraction = 0.0",
            "validation_runs = 0",
            "unknown_key = 1",
            "[[scenarios]]\nname = \"a\"\n[[scenarios]]\nname = \"a\"\n",
        ] {
            assert!(
                matches!(ProjectConfig::parse(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("project.toml");
        std::fs::write(
            &path,
            "out_dir = \"results\"\n[presets]\nchoice = \"c.txt\"\n",
        )
        .unwrap();
        let c = ProjectConfig::read(&path).unwrap();
        assert_eq!(c.out_dir, dir.path().join("results"));
        assert_eq!(c.presets.choice.unwrap(), dir.path().join("c.txt"));
    }
}
