use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use ssrl_core::gan::GanConfig;
use ssrl_core::screen::SyntheticScreenConfig;
use ssrl_core::svm::SvmConfig;

use crate::error::{CliError, Result};

/// Seeds and options of the downstream evaluations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split_seed: u64,
    /// Seed of the baseline featurizer's random projection.
    pub baseline_seed: u64,
    pub baseline_dim: usize,
    /// Per-feature standardization before the SVM, fitted on all wells.
    pub standardize: bool,
    /// Channel removed from foreign images before zero-shot embedding.
    pub dropped_channel: Option<usize>,
    /// Expected number of cell lines in the foreign screen.
    pub zero_shot_classes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split_seed: 0,
            baseline_seed: 0,
            baseline_dim: 64,
            standardize: false,
            dropped_channel: None,
            zero_shot_classes: 4,
        }
    }
}

/// Input locations; relative paths resolve against the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding `manifest.csv` and the image blobs.
    pub screen: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub frame: Option<PathBuf>,
    /// Screen used by `eval-zeroshot`.
    pub foreign_screen: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gan: GanConfig,
    pub screen: SyntheticScreenConfig,
    pub svm: SvmConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

/// Every seed a run depends on, as `(section, key)`.
pub const SEED_KEYS: [(&str, &str); 5] = [
    ("gan", "seed"),
    ("screen", "seed"),
    ("svm", "seed"),
    ("eval", "split_seed"),
    ("eval", "baseline_seed"),
];

impl RunConfig {
    /// Parses a config document. Unknown keys and missing seeds are errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Value = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        for (section, key) in SEED_KEYS {
            if raw.get(section).and_then(|s| s.get(key)).is_none() {
                return Err(CliError::Validation(format!("config: seed {section}.{key} must be given explicitly")));
            }
        }
        let cfg: RunConfig = serde_json::from_value(raw).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.gan.validate()?;
        self.screen.validate()?;
        self.svm.validate()?;
        if self.eval.baseline_dim == 0 {
            return Err(CliError::Validation("eval.baseline_dim must be positive".into()));
        }
        if self.eval.zero_shot_classes < 2 {
            return Err(CliError::Validation("eval.zero_shot_classes must be at least 2".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, after overrides.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn seeds(&self) -> Value {
        serde_json::json!({
            "gan": self.gan.seed,
            "screen": self.screen.seed,
            "svm": self.svm.seed,
            "split": self.eval.split_seed,
            "baseline": self.eval.baseline_seed,
        })
    }
}

impl PathsConfig {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.screen,
            &mut self.checkpoint,
            &mut self.embeddings,
            &mut self.frame,
            &mut self.foreign_screen,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEEDS: &str = r#""gan": {"seed": 1}, "screen": {"seed": 2}, "svm": {"seed": 3},
        "eval": {"split_seed": 4, "baseline_seed": 5}"#;

    #[test]
    fn parses_with_all_seeds() {
        let c = RunConfig::from_json(&format!("{{{SEEDS}}}")).unwrap();
        assert_eq!((c.gan.seed, c.screen.seed, c.svm.seed), (1, 2, 3));
        assert_eq!((c.eval.split_seed, c.eval.baseline_seed), (4, 5));
        assert_eq!(c.gan.image_size, 16);
    }

    #[test]
    fn missing_seed_rejected() {
        let text = r#"{"gan": {"seed": 1}, "screen": {"seed": 2}, "svm": {"seed": 3}, "eval": {"split_seed": 4}}"#;
        let err = RunConfig::from_json(text).unwrap_err();
        assert!(err.to_string().contains("eval.baseline_seed"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        for extra in [r#", "bogus": 1"#, r#", "paths": {"scren": "x"}"#] {
            let err = RunConfig::from_json(&format!("{{{SEEDS}{extra}}}")).unwrap_err();
            assert!(matches!(err, CliError::Validation(_)));
        }
        let text = SEEDS.replace(r#""seed": 1"#, r#""seed": 1, "sed": 2"#);
        assert!(RunConfig::from_json(&format!("{{{text}}}")).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let text = SEEDS.replace(r#""seed": 1"#, r#""seed": 1, "image_size": 12"#);
        assert!(matches!(RunConfig::from_json(&format!("{{{text}}}")), Err(CliError::Validation(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_json(&format!("{{{SEEDS}}}")).unwrap();
        let mut b = a.clone();
        assert_eq!(a.sha256(), b.sha256());
        b.gan.steps += 1;
        assert_ne!(a.sha256(), b.sha256());
    }

    #[test]
    fn relative_paths_follow_config() {
        let mut p = PathsConfig { screen: Some("s".into()), checkpoint: Some("/abs/c.gdl".into()), ..Default::default() };
        p.resolve(Path::new("/cfg"));
        assert_eq!(p.screen.unwrap(), PathBuf::from("/cfg/s"));
        assert_eq!(p.checkpoint.unwrap(), PathBuf::from("/abs/c.gdl"));
    }
}
