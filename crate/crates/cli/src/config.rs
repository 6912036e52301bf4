use std::path::{Path, PathBuf};

use serde::Deserialize;
use synergy_tensor::data::SynthSpec;
use synergy_tensor::experiment::ExperimentConfig;

pub const CONFIG_ENV: &str = "SYNERGY_TENSOR_CONFIG";

/// File-sourced settings. Every key is optional; unknown keys are errors.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub synth: SynthSpec,
    pub experiment: ExperimentConfig,
    /// Dataset directory.
    pub data: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
}

impl CliConfig {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: cannot read config: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Reads the file named by `SYNERGY_TENSOR_CONFIG`, or defaults when unset.
    pub fn from_env() -> Result<Self, String> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::from_file(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_document_keeps_defaults() {
        let c: CliConfig = serde_json::from_str(
            r#"{"experiment": {"k": 5, "wavelet": {"n_bins": 64}}, "synth": {"subjects": 3}, "out": "o"}"#,
        )
        .unwrap();
        assert_eq!(c.experiment.k, 5);
        assert_eq!(c.experiment.wavelet.n_bins, 64);
        assert_eq!(c.experiment.wavelet.f_max, 50.0);
        assert_eq!(c.synth.subjects, 3);
        assert_eq!(c.out, Some(PathBuf::from("o")));
    }

    #[test]
    fn unknown_keys_rejected() {
        for doc in [
            r#"{"bins": 3}"#,
            r#"{"experiment": {"bins": 3}}"#,
            r#"{"experiment": {"fit": {"iters": 3}}}"#,
            r#"{"synth": {"chanels": 3}}"#,
        ] {
            assert!(serde_json::from_str::<CliConfig>(doc).is_err(), "{doc}");
        }
    }
}
