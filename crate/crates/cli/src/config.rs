//! Flat key=value run configuration.
//!
//! Every key has a documented default; unknown keys are rejected. Precedence
//! (lowest to highest): built-in defaults, config file, `D4M_OUT_DIR` (for
//! `out_dir` only), command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Registry of every configuration key: `(key, default, help)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "1", "global seed; every stage derives its own substream"),
    ("out_dir", "d4m_out", "output directory (D4M_OUT_DIR and --out override)"),
    ("data.categories", "4", "number of shape categories K (2..=6)"),
    ("data.train_per_category", "500", "training images per category"),
    ("data.test_per_category", "100", "test images per category"),
    ("data.height", "32", "image height"),
    ("data.width", "32", "image width"),
    ("data.noise_std", "8", "Gaussian pixel-noise standard deviation"),
    ("ae.latent_dim", "32", "latent width d_z"),
    ("ae.hidden1", "256", "autoencoder first hidden width"),
    ("ae.hidden2", "128", "autoencoder second hidden width"),
    ("ae.epochs", "40", "autoencoder training epochs"),
    ("ae.batch_size", "64", "autoencoder batch size"),
    ("ae.lr", "0.001", "autoencoder peak learning rate"),
    ("ae.lr_min", "0.00001", "autoencoder final learning rate (cosine)"),
    ("ae.weight_decay", "0", "autoencoder weight decay"),
    ("diff.timesteps", "1000", "diffusion timestep count T"),
    ("diff.beta_start", "0.0001", "linear beta schedule start"),
    ("diff.beta_end", "0.02", "linear beta schedule end"),
    ("diff.steps", "4000", "denoiser training steps"),
    ("diff.batch_size", "64", "denoiser batch size"),
    ("diff.hidden1", "256", "denoiser first hidden width"),
    ("diff.hidden2", "256", "denoiser second hidden width"),
    ("diff.lr", "0.001", "denoiser peak learning rate"),
    ("diff.lr_min", "0.00001", "denoiser final learning rate (cosine)"),
    ("diff.weight_decay", "0", "denoiser weight decay"),
    ("diff.p_drop", "0.1", "label-dropout probability for guidance training"),
    ("proto.centers_per_category", "10", "cluster centers per category C"),
    ("proto.passes", "5", "clustering passes over each category"),
    ("proto.batch_size", "64", "clustering minibatch size"),
    ("distill.ipc", "10", "distilled images per category"),
    ("distill.strength", "0.7", "noising fraction applied to prototypes [0,1]"),
    ("distill.guidance", "8", "guidance scale (>= 1)"),
    ("distill.ddim_steps", "50", "sampler step-grid length"),
    ("ttm.temperature", "20", "distillation softmax temperature"),
    ("ttm.epochs", "500", "student training epochs"),
    ("ttm.batch_size", "100", "student batch size"),
    ("ttm.lr", "0.001", "student peak learning rate"),
    ("ttm.lr_min", "0.00001", "student final learning rate (cosine)"),
    ("ttm.weight_decay", "0.01", "student weight decay"),
    ("ttm.hidden1", "256", "classifier first hidden width"),
    ("ttm.hidden2", "64", "classifier second hidden width"),
    ("ttm.augment", "true", "apply random-resized-crop augmentation"),
    ("ttm.crop_min_scale", "0.08", "augmentation minimum area fraction"),
    ("ttm.teacher_epochs", "60", "teacher training epochs"),
    ("eval.is_splits", "1", "inception-score split count"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl Default for RunConfig {
    fn default() -> Self {
        let values = KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect();
        RunConfig { values }
    }
}

impl RunConfig {
    /// Apply a `key = value` file on top of the defaults. Lines starting
    /// with `#` and blank lines are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {}", path.display(), e)))?;
        for (number, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("{}:{}: expected key = value", path.display(), number + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| ConfigError(format!("{}:{}: {}", path.display(), number + 1, e.0)))?;
        }
        Ok(())
    }

    /// Set one key, rejecting unknown names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(ConfigError(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> &str {
        self.values.get(key).map(|s| s.as_str()).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.get_str(key)
            .parse()
            .map_err(|e| ConfigError(format!("{key} = {:?}: {e}", self.get_str(key))))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.get_str(key)
            .parse()
            .map_err(|e| ConfigError(format!("{key} = {:?}: {e}", self.get_str(key))))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.get_str(key)
            .parse()
            .map_err(|e| ConfigError(format!("{key} = {:?}: {e}", self.get_str(key))))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool, ConfigError> {
        match self.get_str(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(ConfigError(format!("{key} = {other:?}: expected true/false"))),
        }
    }

    /// The fully resolved configuration, one sorted `key = value` per line.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Help text listing every key, its default, and what it does.
    pub fn describe_keys() -> String {
        let mut out = String::from("configuration keys (key = default):\n");
        for (k, d, help) in KEYS {
            let _ = writeln!(out, "  {k} = {d}\n      {help}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_key() {
        let cfg = RunConfig::default();
        for (k, d, _) in KEYS {
            assert_eq!(cfg.get_str(k), *d);
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("distill.unknown", "1").is_err());
        assert!(cfg.set("distill.ipc", "20").is_ok());
        assert_eq!(cfg.get_usize("distill.ipc").unwrap(), 20);
    }

    #[test]
    fn file_parse_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "# comment\nseed = 9\n\ndistill.strength = 0.5\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.get_u64("seed").unwrap(), 9);
        assert_eq!(cfg.get_f64("distill.strength").unwrap(), 0.5);
    }

    #[test]
    fn file_with_unknown_key_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "seed = 1\nbogus.key = 2\n").unwrap();
        let mut cfg = RunConfig::default();
        let err = cfg.apply_file(&path).unwrap_err();
        assert!(err.0.contains(":2:"), "error should name line 2: {}", err.0);
        assert!(err.0.contains("bogus.key"));
    }

    #[test]
    fn echo_is_sorted_and_complete() {
        let cfg = RunConfig::default();
        let echo = cfg.echo();
        assert_eq!(echo.lines().count(), KEYS.len());
        let mut lines: Vec<&str> = echo.lines().collect();
        let original = lines.clone();
        lines.sort();
        assert_eq!(lines, original);
    }
}
