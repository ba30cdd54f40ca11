use std::fs;
use std::path::{Path, PathBuf};

use homog_uc::cell::correctors::MAX_ORDER;
use homog_uc::cell::field::{Builtin, CoefficientField};
use homog_uc::cell::io::read_coefficients;
use homog_uc::verify::quadrature::MIN_SAMPLES_PER_UNIT;
use homog_uc::verify::study::ScalingConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Upper limit on accepted config files.
const MAX_CONFIG_BYTES: u64 = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum CoefficientSpec {
    Builtin(Builtin),
    /// Header of a coefficient field file, relative to the config file.
    File(PathBuf),
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: default_tol() }
    }
}

fn default_theta() -> f64 {
    0.5
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub m_list: Vec<u32>,
    pub r_list: Vec<f64>,
    #[serde(default = "one")]
    pub seeds_per_degree: usize,
    #[serde(default)]
    pub quadrature_n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub m_list: Vec<u32>,
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default = "one")]
    pub steps_per_octave: usize,
}

fn default_odd_tol() -> f64 {
    5e-2
}

fn default_abar_tol() -> f64 {
    2e-3
}

fn default_residual_ratio() -> f64 {
    1.7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Overrides the identity schedule `max(1e−6, K_ref·h)`.
    #[serde(default)]
    pub identity_tol: Option<f64>,
    /// Bound on `|ā_odd|/|ā_2|`.
    #[serde(default = "default_odd_tol")]
    pub odd_tol: f64,
    /// Relative bound on `ā_2` against the laminate closed form.
    #[serde(default = "default_abar_tol")]
    pub abar_tol: f64,
    /// Required decrease of the ψ residual from `N` to `2N`.
    #[serde(default = "default_residual_ratio")]
    pub residual_ratio: f64,
    /// Degree of `q` in the residual check; defaults to `min(3, m_max)`.
    #[serde(default)]
    pub residual_degree: Option<u32>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            identity_tol: None,
            odd_tol: default_odd_tol(),
            abar_tol: default_abar_tol(),
            residual_ratio: default_residual_ratio(),
            residual_degree: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub m_max: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub rng_seed: u64,
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub study: Option<StudyConfig>,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn bad<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

impl RunConfig {
    /// Reads, parses and validates; relative paths are resolved against the
    /// directory holding the config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let meta = fs::metadata(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if meta.len() > MAX_CONFIG_BYTES {
            return bad(format!("{}: config file too large", path.display()));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        self.output_dir = join(&self.output_dir);
        if let CoefficientSpec::File(p) = &self.coefficients {
            self.coefficients = CoefficientSpec::File(join(p));
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(1..=3).contains(&self.d) {
            return bad(format!("d = {} must be 1, 2 or 3", self.d));
        }
        if self.n < 2 || !self.n.is_power_of_two() {
            return bad(format!("N = {} must be a power of two (at least 2)", self.n));
        }
        if self.m_max == 0 || self.m_max > MAX_ORDER {
            return bad(format!("m_max = {} must be in 1..={MAX_ORDER}", self.m_max));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return bad(format!("solver.tol = {} must be in (0, 1)", self.solver.tol));
        }
        // The output directory is created on demand; its nearest existing
        // ancestor must be a directory.
        let existing = self.output_dir.ancestors().find(|p| p.exists());
        if let Some(p) = existing {
            if !p.is_dir() {
                return bad(format!("output_dir: {} is not a directory", p.display()));
            }
        }
        match &self.coefficients {
            CoefficientSpec::File(p) => {
                if !p.is_file() {
                    return bad(format!("coefficient file {} not found", p.display()));
                }
            }
            CoefficientSpec::Builtin(b) => {
                // Cheap structural check of the parameters at the smallest grid.
                CoefficientField::builtin(b, self.d, 2)
                    .map_err(|e| CliError::Config(format!("coefficients: {e}")))?;
            }
        }
        if let Some(s) = &self.study {
            let sc = self.scaling_config(s);
            sc.validate()
                .map_err(|e| CliError::Config(format!("study: {e}")))?;
            if s.m_list.iter().any(|&m| m == 0 || m as usize > self.m_max) {
                return bad(format!("study.m_list entries must be in 1..={}", self.m_max));
            }
            if let Some(q) = s.quadrature_n {
                if q != self.n {
                    return bad(format!(
                        "study.quadrature_n = {q} must equal N = {}",
                        self.n
                    ));
                }
            }
            if self.n < MIN_SAMPLES_PER_UNIT {
                return bad(format!(
                    "the study needs N ≥ {MIN_SAMPLES_PER_UNIT} samples per unit cell"
                ));
            }
        }
        if let Some(p) = &self.probe {
            if p.m_list.is_empty() || p.m_list.iter().any(|&m| m == 0 || m as usize > self.m_max) {
                return bad(format!("probe.m_list entries must be in 1..={}", self.m_max));
            }
            if p.seeds == 0 || p.steps_per_octave == 0 {
                return bad("probe.seeds and probe.steps_per_octave must be positive");
            }
            if self.n < MIN_SAMPLES_PER_UNIT {
                return bad(format!(
                    "the probe needs N ≥ {MIN_SAMPLES_PER_UNIT} samples per unit cell"
                ));
            }
        }
        let v = &self.verify;
        if v.identity_tol.is_some_and(|t| !(t > 0.0)) || !(v.odd_tol > 0.0) || !(v.abar_tol > 0.0) {
            return bad("verify tolerances must be positive");
        }
        if !(v.residual_ratio > 1.0) {
            return bad("verify.residual_ratio must exceed 1");
        }
        if v.residual_degree.is_some_and(|k| k < 2 || k as usize > self.m_max) {
            return bad(format!(
                "verify.residual_degree must be in 2..={}",
                self.m_max
            ));
        }
        Ok(())
    }

    /// Degree used by the ψ residual check, if `m_max` allows one.
    pub fn residual_degree(&self) -> Option<u32> {
        match self.verify.residual_degree {
            Some(k) => Some(k),
            None if self.m_max >= 2 => Some(3.min(self.m_max as u32)),
            None => None,
        }
    }

    pub fn scaling_config(&self, s: &StudyConfig) -> ScalingConfig {
        ScalingConfig {
            theta: s.theta,
            m_list: s.m_list.clone(),
            r_list: s.r_list.clone(),
            seeds_per_degree: s.seeds_per_degree,
            quadrature_n: s.quadrature_n,
            rng_seed: self.rng_seed,
        }
    }

    /// Coefficient field at resolution `n`. File-backed fields cannot be refined
    /// beyond their stored grid except by piecewise-constant upsampling.
    pub fn field_at(&self, n: usize) -> Result<CoefficientField, CliError> {
        match &self.coefficients {
            CoefficientSpec::Builtin(b) => {
                CoefficientField::builtin(b, self.d, n).map_err(CliError::Solver)
            }
            CoefficientSpec::File(p) => {
                let f = read_coefficients(p).map_err(|e| CliError::Config(e.to_string()))?;
                if f.dim() != self.d {
                    return bad(format!(
                        "{}: field has d = {}, config says {}",
                        p.display(),
                        f.dim(),
                        self.d
                    ));
                }
                if f.n() == n {
                    Ok(f)
                } else if f.n() == self.n && n % f.n() == 0 {
                    f.refine(n).map_err(CliError::Solver)
                } else {
                    bad(format!(
                        "{}: field has N = {}, config says {}",
                        p.display(),
                        f.n(),
                        self.n
                    ))
                }
            }
        }
    }

    pub fn table_dir(&self) -> PathBuf {
        self.output_dir.join("correctors")
    }
}
