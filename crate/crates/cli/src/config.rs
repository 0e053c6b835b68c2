//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use graddiv::forcing::BuiltinForcing;
use graddiv::mesh::SimplicialMesh;
use graddiv::schemes::Scheme;

/// Where the mesh comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MeshSpec {
    Generator { generator: String, n: usize },
    File { msh: PathBuf },
}

impl MeshSpec {
    /// Builds the mesh; relative file paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<SimplicialMesh> {
        match self {
            MeshSpec::Generator { generator, n } => Ok(SimplicialMesh::from_generator_spec(&format!("{generator}:{n}"))?),
            MeshSpec::File { msh } => {
                let path = if msh.is_absolute() { msh.clone() } else { base.join(msh) };
                let bytes = std::fs::read(&path).with_context(|| format!("reading mesh {}", path.display()))?;
                graddiv::mesh::import_msh(&bytes).with_context(|| format!("parsing mesh {}", path.display()))
            }
        }
    }
}

/// How α is chosen for each γ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum AlphaRule {
    /// Every listed α is run with every γ.
    Values { values: Vec<f64> },
    /// α = ratio·γ.
    Ratio { ratio: f64 },
    Value { value: f64 },
}

impl AlphaRule {
    pub fn alphas(&self, gamma: f64) -> Vec<f64> {
        match self {
            AlphaRule::Values { values } => values.clone(),
            AlphaRule::Ratio { ratio } => vec![ratio * gamma],
            AlphaRule::Value { value } => vec![*value],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default = "default_true")]
    pub parallel: bool,
    #[serde(default = "default_eigen_tol")]
    pub eigen_tol: f64,
    #[serde(default = "default_eigen_residual_tol")]
    pub eigen_residual_tol: f64,
    #[serde(default = "default_eigen_max_iter")]
    pub eigen_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            parallel: true,
            eigen_tol: default_eigen_tol(),
            eigen_residual_tol: default_eigen_residual_tol(),
            eigen_max_iter: default_eigen_max_iter(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsOptions {
    #[serde(default = "default_true")]
    pub ledger: bool,
    #[serde(default = "default_true")]
    pub timeseries: bool,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            ledger: true,
            timeseries: true,
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_eigen_tol() -> f64 {
    graddiv::sparse::EigenOptions::default().tol
}
fn default_eigen_residual_tol() -> f64 {
    graddiv::sparse::EigenOptions::default().residual_tol
}
fn default_eigen_max_iter() -> usize {
    graddiv::sparse::EigenOptions::default().max_iter
}
fn default_forcing() -> String {
    "box_rotational".into()
}
fn default_scheme() -> String {
    "modular_sgd".into()
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A time-stepping experiment (`run`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub mesh: MeshSpec,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub nu: f64,
    pub k: f64,
    pub t_end: f64,
    pub gamma: Vec<f64>,
    pub alpha: AlphaRule,
    #[serde(default = "default_forcing")]
    pub forcing: String,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsOptions,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_with_path(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_name(&self.experiment)?;
        self.scheme_kind()?;
        self.forcing_kind()?;
        if self.gamma.is_empty() {
            bail!("gamma: list is empty");
        }
        for (i, g) in self.gamma.iter().enumerate() {
            if !(*g >= 0.0 && g.is_finite()) {
                bail!("gamma[{i}]: must be a finite nonnegative number, got {g}");
            }
        }
        match &self.alpha {
            AlphaRule::Values { values } if values.is_empty() => bail!("alpha.values: list is empty"),
            AlphaRule::Values { values } => {
                for (i, a) in values.iter().enumerate() {
                    if !(*a >= 0.0 && a.is_finite()) {
                        bail!("alpha.values[{i}]: must be a finite nonnegative number, got {a}");
                    }
                }
            }
            AlphaRule::Ratio { ratio } if !(*ratio >= 0.0 && ratio.is_finite()) => {
                bail!("alpha.ratio: must be a finite nonnegative number, got {ratio}")
            }
            AlphaRule::Value { value } if !(*value >= 0.0 && value.is_finite()) => {
                bail!("alpha.value: must be a finite nonnegative number, got {value}")
            }
            _ => {}
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            bail!("nu: must be positive, got {}", self.nu);
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            bail!("k: must be positive, got {}", self.k);
        }
        if !(self.t_end >= self.k && self.t_end.is_finite()) {
            bail!("t_end: must be at least k, got {}", self.t_end);
        }
        if let MeshSpec::Generator { generator, n } = &self.mesh {
            if !matches!(generator.as_str(), "square" | "cube") {
                bail!("mesh.generator: expected 'square' or 'cube', got '{generator}'");
            }
            if *n == 0 {
                bail!("mesh.n: must be positive");
            }
        }
        Ok(())
    }

    pub fn scheme_kind(&self) -> Result<Scheme> {
        self.scheme.parse::<Scheme>().map_err(|e| anyhow::anyhow!("scheme: {e}"))
    }

    pub fn forcing_kind(&self) -> Result<BuiltinForcing> {
        self.forcing.parse::<BuiltinForcing>().map_err(|e| anyhow::anyhow!("forcing: {e}"))
    }

    /// (γ, α) pairs in run order.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.gamma
            .iter()
            .flat_map(|&g| self.alpha.alphas(g).into_iter().map(move |a| (g, a)))
            .collect()
    }
}

fn default_cond_k() -> f64 {
    1.0
}

/// A conditioning sweep (`cond-sweep`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningConfig {
    pub experiment: String,
    /// `square` or `cube`.
    pub generator: String,
    pub n: Vec<usize>,
    #[serde(default = "default_cond_k")]
    pub k: f64,
    pub gamma_plus_alpha: Vec<f64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl ConditioningConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_with_path(text)?;
        check_name(&cfg.experiment)?;
        if !matches!(cfg.generator.as_str(), "square" | "cube") {
            bail!("generator: expected 'square' or 'cube', got '{}'", cfg.generator);
        }
        if cfg.n.is_empty() || cfg.n.contains(&0) {
            bail!("n: list must be nonempty with positive entries");
        }
        if cfg.gamma_plus_alpha.is_empty() {
            bail!("gamma_plus_alpha: list is empty");
        }
        for (i, s) in cfg.gamma_plus_alpha.iter().enumerate() {
            if !(*s >= 0.0 && s.is_finite()) {
                bail!("gamma_plus_alpha[{i}]: must be a finite nonnegative number, got {s}");
            }
        }
        if !(cfg.k > 0.0 && cfg.k.is_finite()) {
            bail!("k: must be positive, got {}", cfg.k);
        }
        Ok(cfg)
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        bail!("experiment: name must be nonempty and use only [A-Za-z0-9_-], got '{name}'");
    }
    Ok(())
}

fn parse_with_path<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("{}: {}", if path == "." { "config".to_string() } else { path }, e.inner())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const STABILITY: &str = r#"{
        "experiment": "stability",
        "mesh": {"generator": "cube", "n": 3},
        "nu": 1e-4, "k": 0.05, "t_end": 10.0,
        "gamma": [1.0],
        "alpha": {"values": [0.0, 0.3, 0.5, 1.0, 2.0]}
    }"#;

    #[test]
    fn parses_defaults_and_pairs() {
        let c = ExperimentConfig::from_json(STABILITY).unwrap();
        assert_eq!(c.scheme_kind().unwrap(), Scheme::ModularSgd);
        assert_eq!(c.forcing_kind().unwrap(), BuiltinForcing::BoxRotational);
        assert_eq!(c.pairs().len(), 5);
        assert!(c.solver.parallel && c.diagnostics.ledger);
    }

    #[test]
    fn ratio_rule() {
        let text = STABILITY
            .replace(r#""gamma": [1.0]"#, r#""gamma": [0.1, 1, 10]"#)
            .replace(r#"{"values": [0.0, 0.3, 0.5, 1.0, 2.0]}"#, r#"{"ratio": 0.5}"#);
        let c = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(c.pairs(), vec![(0.1, 0.05), (1.0, 0.5), (10.0, 5.0)]);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = STABILITY.replace(r#""nu": 1e-4"#, r#""nu": "small""#);
        let e = ExperimentConfig::from_json(&bad).unwrap_err().to_string();
        assert!(e.starts_with("nu"), "{e}");
        let bad = STABILITY.replace(r#""gamma": [1.0]"#, r#""gamma": []"#);
        assert!(ExperimentConfig::from_json(&bad).unwrap_err().to_string().starts_with("gamma"));
        let bad = STABILITY.replace(r#""nu": 1e-4,"#, r#""nu": 1e-4, "scheme": "upwind","#);
        assert!(ExperimentConfig::from_json(&bad).unwrap_err().to_string().starts_with("scheme"));
        let bad = STABILITY.replace(r#""cube""#, r#""sphere""#);
        assert!(ExperimentConfig::from_json(&bad).unwrap_err().to_string().starts_with("mesh.generator"));
    }

    #[test]
    fn conditioning_config() {
        let c = ConditioningConfig::from_json(
            r#"{"experiment":"cond","generator":"square","n":[4,8],"gamma_plus_alpha":[0,1]}"#,
        )
        .unwrap();
        assert_eq!(c.k, 1.0);
        assert!(ConditioningConfig::from_json(r#"{"experiment":"cond","generator":"square","n":[],"gamma_plus_alpha":[0]}"#).is_err());
    }
}
