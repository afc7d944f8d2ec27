//! Plain `key = value` run configuration shared by the CLI and the benchmark
//! drivers; command-line flags override file values.

use crate::mesh::SNAP_TOL;
use crate::{IvemError, Result};

/// Runtime parameters of a solve.
#[derive(Debug, Clone)]
pub struct Config {
    /// H1 stabilization parameter.
    pub gamma: f64,
    /// H(curl) value-stabilization parameter.
    pub gamma0: f64,
    /// H(curl) rotation-stabilization parameter.
    pub gamma1: f64,
    /// PCG relative tolerance (preconditioned residual).
    pub rel_tol: f64,
    /// PCG iteration cap; 0 selects the automatic `10 * sqrt(n_dofs)`.
    pub max_iters: usize,
    /// `auto`, `none`, `diag`, `sgs`, `hx`, or `direct`.
    pub precond: String,
    /// Interface-block expansion width `l` of the HX preconditioner.
    pub hx_level: usize,
    /// Auxiliary-solver backend of the HX preconditioner (`direct` or `sgs`).
    pub backend: String,
    /// Relative vertex snapping tolerance of the cutter.
    pub snap_tol: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            gamma: crate::assembly::GAMMA_H1,
            gamma0: crate::assembly::GAMMA_CURL_VALUE,
            gamma1: crate::assembly::GAMMA_CURL_ROT,
            rel_tol: 1e-8,
            max_iters: 0,
            precond: "auto".into(),
            hx_level: 1,
            backend: "direct".into(),
            snap_tol: SNAP_TOL,
        }
    }
}

impl Config {
    /// Iteration cap for a system of `n_dofs` unknowns.
    pub fn effective_max_iters(&self, n_dofs: usize) -> usize {
        if self.max_iters == 0 {
            (10.0 * (n_dofs as f64).sqrt()).ceil() as usize
        } else {
            self.max_iters
        }
    }

    /// Apply one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| {
            IvemError::InvalidInput(format!("invalid value `{value}` for config key `{what}`"))
        };
        match key {
            "gamma" => self.gamma = value.parse().map_err(|_| bad(key))?,
            "gamma0" => self.gamma0 = value.parse().map_err(|_| bad(key))?,
            "gamma1" => self.gamma1 = value.parse().map_err(|_| bad(key))?,
            "rel_tol" => self.rel_tol = value.parse().map_err(|_| bad(key))?,
            "max_iters" => self.max_iters = value.parse().map_err(|_| bad(key))?,
            "precond" => self.precond = value.to_string(),
            "hx_level" => self.hx_level = value.parse().map_err(|_| bad(key))?,
            "backend" => self.backend = value.to_string(),
            "snap_tol" => self.snap_tol = value.parse().map_err(|_| bad(key))?,
            other => {
                return Err(IvemError::InvalidInput(format!("unknown config key `{other}`")))
            }
        }
        Ok(())
    }

    /// Parse a config file of `key = value` lines (`#` starts a comment).
    pub fn from_file(path: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let text = std::fs::read_to_string(path)?;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                IvemError::InvalidInput(format!("{path}:{}: expected `key = value`", ln + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_rejects_unknown_keys() {
        let dir = std::env::temp_dir().join("ivem-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(&path, "gamma = 2.5\n# comment\nbackend = sgs\nrel_tol=1e-7\n").unwrap();
        let cfg = Config::from_file(path.to_str().unwrap()).unwrap();
        assert_eq!(cfg.gamma, 2.5);
        assert_eq!(cfg.backend, "sgs");
        assert_eq!(cfg.rel_tol, 1e-7);
        assert_eq!(cfg.hx_level, Config::default().hx_level);

        let mut cfg = Config::default();
        assert!(cfg.set("nonsense", "1").is_err());
        assert!(cfg.set("gamma", "not-a-number").is_err());
    }
}
