//! Optional TOML run configuration. Keys mirror the long flag names (with
//! underscores); a flag given on the command line always wins.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub layout: Option<String>,
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub hypotheses: Option<String>,
    pub objective: Option<String>,
    pub steps: Option<usize>,
    pub beam: Option<usize>,
    pub starts: Option<usize>,
    pub seed: Option<u64>,
    pub deus: Option<bool>,
    pub progress: Option<bool>,
    pub rho: Option<String>,
    pub script: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Picks the flag value, falling back to the config file.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let c = ConfigFile::parse("layout = \"kitchen\"\nsteps = 12\ndeus = true\n").unwrap();
        assert_eq!(c.layout.as_deref(), Some("kitchen"));
        assert_eq!(c.steps, Some(12));
        assert_eq!(c.deus, Some(true));
        assert_eq!(c.beam, None);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(ConfigFile::parse("stepz = 3\n").is_err());
    }

    #[test]
    fn flags_win() {
        assert_eq!(pick(Some(3), &Some(7)), Some(3));
        assert_eq!(pick(None, &Some(7)), Some(7));
        assert_eq!(pick::<u32>(None, &None), None);
    }
}
