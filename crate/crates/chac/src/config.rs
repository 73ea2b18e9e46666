//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored.
//! Unknown keys are rejected (with the list of valid keys) and parse errors
//! carry the line number. Every key defaults to the reference experiment
//! values, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use crate::error::{ChacError, Result};
use crate::model::ModelParams;
use crate::scheme::NewtonOpts;

/// Full run configuration. `h = 2^{-mesh_k}`, `tau = tau_factor * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh_k: u32,
    pub tau_factor: f64,
    pub t_final: f64,
    pub params: ModelParams,
    pub newton: NewtonOpts,
    /// Write a VTK snapshot every this many steps (0 disables snapshots).
    pub snapshot_every: usize,
    pub output_dir: PathBuf,
    /// Seed for sampling-based property tests; the solver itself is
    /// deterministic and never consumes it.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh_k: 4,
            tau_factor: 1e-3,
            t_final: 0.1,
            params: ModelParams::default(),
            newton: NewtonOpts::default(),
            snapshot_every: 0,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

const VALID_KEYS: &[&str] = &[
    "mesh_k",
    "tau_factor",
    "t_final",
    "gamma_rho",
    "gamma_eta",
    "potential_c",
    "potential_d",
    "potential_alpha",
    "mobility_l22",
    "mobility_l12_scale",
    "mobility_c",
    "newton_tol",
    "newton_max_iter",
    "snapshot_every",
    "output_dir",
    "seed",
];

impl RunConfig {
    /// Cells per side of the mesh.
    pub fn mesh_n(&self) -> usize {
        1usize << self.mesh_k
    }

    pub fn h(&self) -> f64 {
        1.0 / self.mesh_n() as f64
    }

    pub fn tau(&self) -> f64 {
        self.tau_factor * self.h()
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.tau()).round().max(1.0) as usize
    }

    /// Applies one `key = value` override (as from a `--set` flag).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.apply(key, value, None)
    }

    fn apply(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<()> {
        let at = line.map(|l| format!("line {l}: ")).unwrap_or_default();
        let bad = |what: &str| {
            ChacError::Config(format!("{at}{what} for key `{key}`: `{value}`"))
        };
        let f = |v: &str| v.parse::<f64>().map_err(|_| bad("invalid number"));
        let u = |v: &str| v.parse::<u64>().map_err(|_| bad("invalid integer"));
        match key {
            "mesh_k" => self.mesh_k = u(value)? as u32,
            "tau_factor" => self.tau_factor = f(value)?,
            "t_final" => self.t_final = f(value)?,
            "gamma_rho" => self.params.gamma_rho = f(value)?,
            "gamma_eta" => self.params.gamma_eta = f(value)?,
            "potential_c" => self.params.potential.c = f(value)?,
            "potential_d" => self.params.potential.d = f(value)?,
            "potential_alpha" => self.params.potential.alpha = f(value)?,
            "mobility_l22" => self.params.mobility.l22 = f(value)?,
            "mobility_l12_scale" => self.params.mobility.l12_scale = f(value)?,
            "mobility_c" => self.params.mobility.c = f(value)?,
            "newton_tol" => self.newton.tol_residual = f(value)?,
            "newton_max_iter" => self.newton.max_iter = u(value)? as usize,
            "snapshot_every" => self.snapshot_every = u(value)? as usize,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "seed" => self.seed = u(value)?,
            _ => {
                return Err(ChacError::Config(format!(
                    "{at}unknown key `{key}`; valid keys: {}",
                    VALID_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Checks the invariants every command relies on.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_factor", self.tau_factor),
            ("t_final", self.t_final),
            ("gamma_rho", self.params.gamma_rho),
            ("gamma_eta", self.params.gamma_eta),
            ("mobility_l22", self.params.mobility.l22),
            ("mobility_c", self.params.mobility.c),
            ("newton_tol", self.newton.tol_residual),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(ChacError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.mesh_k < 1 {
            return Err(ChacError::Config("mesh_k must be >= 1".into()));
        }
        if self.newton.max_iter == 0 {
            return Err(ChacError::Config("newton_max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Parses configuration text; missing keys keep their defaults.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            ChacError::Config(format!("line {line}: expected `key = value`, got `{content}`"))
        })?;
        config.apply(key.trim(), value.trim(), Some(line))?;
    }
    config.validate()?;
    Ok(config)
}

/// Parses a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ChacError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = parse_config_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.mesh_n(), 16);
        assert!((c.tau() - 0.001 / 16.0).abs() < 1e-18);
        assert_eq!(c.n_steps(), 1600);
    }

    #[test]
    fn single_key_overrides_only_that_key() {
        let c = parse_config_str("mesh_k = 3\n").unwrap();
        assert_eq!(c.mesh_k, 3);
        let d = RunConfig::default();
        assert_eq!(c.t_final, d.t_final);
        assert_eq!(c.params, d.params);
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let c = parse_config_str("# comment\n\n t_final = 0.05 # trailing\n").unwrap();
        assert!((c.t_final - 0.05).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let e = parse_config_str("mesh_q = 3\n").unwrap_err().to_string();
        assert!(e.contains("unknown key `mesh_q`"));
        assert!(e.contains("mesh_k"));
        assert!(e.contains("line 1"));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let e = parse_config_str("mesh_k = 2\nt_final = abc\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn mesh_k_zero_rejected() {
        assert!(parse_config_str("mesh_k = 0\n").is_err());
    }

    #[test]
    fn negative_values_rejected() {
        assert!(parse_config_str("t_final = -1.0\n").is_err());
        assert!(parse_config_str("gamma_rho = 0\n").is_err());
    }

    #[test]
    fn missing_equals_rejected() {
        let e = parse_config_str("just words\n").unwrap_err().to_string();
        assert!(e.contains("expected `key = value`"));
    }
}
