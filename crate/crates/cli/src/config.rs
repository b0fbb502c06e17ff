//! Experiment configuration: one TOML file, leaf overrides via dotted keys.

use serde::{Deserialize, Serialize};
use slowfast::levy::LevyModel;
use slowfast::model::{builtin_gauss_ou, CoefficientSet, GaussOuParams};
use slowfast::segment::InitialDatum;
use slowfast::{averaging::KhasminskiiParams, deviations::MdpSweepConfig, engine::IntegratorConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub kappa: f64,
    pub kappa2: f64,
    pub gamma_coupling: f64,
    pub f1_base: f64,
    pub g_level: f64,
    pub f1_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let p = GaussOuParams::default();
        Self {
            name: "gauss_ou".into(),
            kappa: p.kappa,
            kappa2: p.kappa2,
            gamma_coupling: p.gamma_coupling,
            f1_base: p.f1_base,
            g_level: p.g_level,
            f1_slope: p.f1_slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevyConfig {
    /// `gauss_light` or `strongly_tempered`.
    pub kind: String,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub radial_count: usize,
    pub dim: usize,
    pub truncation: Option<f64>,
}

impl Default for LevyConfig {
    fn default() -> Self {
        Self { kind: "gauss_light".into(), alpha: 2.0, alpha_prime: 1.5, radial_count: 4, dim: 1, truncation: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub epsilon: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub tau: f64,
    pub seed: u64,
    pub paths: usize,
    pub localization_radius: Option<f64>,
    pub allow_coarse_dt: bool,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            dt: 0.0005,
            t_end: 1.0,
            tau: 1.0,
            seed: 20_240_601,
            paths: 100,
            localization_radius: None,
            allow_coarse_dt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// `χ(θ) = chi + chi_slope · θ`.
    pub chi: f64,
    pub chi_slope: f64,
    pub y0: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { chi: 1.0, chi_slope: 0.0, y0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KhasminskiiConfig {
    pub theta: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub eps_grid: Vec<f64>,
    pub dt_ratio: f64,
}

impl Default for KhasminskiiConfig {
    fn default() -> Self {
        let k = KhasminskiiParams::default();
        Self { theta: k.theta, gamma: k.gamma, p: k.p, q: k.q, eps_grid: vec![0.01, 0.001], dt_ratio: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub eps_grid: Vec<f64>,
    pub delta: f64,
    pub delta_avg: f64,
    pub n_paths: usize,
    pub dt_ratio: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { eps_grid: vec![0.1, 0.02, 0.004], delta: 0.3, delta_avg: 0.2, n_paths: 2000, dt_ratio: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicConfig {
    /// Constant frozen segment `ζ ≡ zeta`.
    pub zeta: f64,
    pub t_run: f64,
    pub burn_in: Option<f64>,
    pub dt: f64,
    pub replicas: usize,
    pub t_grid: Vec<f64>,
    pub mixing_replicas: usize,
    pub mixing_y0: f64,
}

impl Default for ErgodicConfig {
    fn default() -> Self {
        Self {
            zeta: 1.0,
            t_run: 200.0,
            burn_in: None,
            dt: 1e-3,
            replicas: 20,
            t_grid: vec![1.0, 2.0, 4.0, 8.0],
            mixing_replicas: 2000,
            mixing_y0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub probes: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { probes: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Constant controls for `skeleton`.
    pub f: f64,
    pub lambda: f64,
    /// `linear` (`η = A t`) or `sine` (`η = A sin(π t / 2)`), for `rate`.
    pub target: String,
    pub amplitude: f64,
    pub mark_nodes: usize,
    pub bruteforce: bool,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            t_end: 1.0,
            f: 1.0,
            lambda: 0.0,
            target: "linear".into(),
            amplitude: 1.0,
            mark_nodes: 32,
            bruteforce: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub levy: LevyConfig,
    pub integrator: IntegratorSection,
    pub initial: InitialConfig,
    pub khasminskii: KhasminskiiConfig,
    pub sweep: SweepConfig,
    pub ergodic: ErgodicConfig,
    pub validate: ValidateConfig,
    pub skeleton: SkeletonConfig,
    pub outputs: OutputConfig,
}

/// Parses `text`, applies `key.path=value` overrides and deserializes.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))?;
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(format!("invalid config: {e}")))
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) =
        item.split_once('=').ok_or_else(|| CliError::Usage(format!("override `{item}` is not key=value")))?;
    let value = parse_literal(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key `{key}`")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("`{part}` in `{key}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Cross-field checks; nothing is run before this passes.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.model.name != "gauss_ou" {
            return Err(CliError::Config(format!("unknown model `{}`", self.model.name)));
        }
        self.levy_model()?;
        self.coefficient_set()?;
        self.integrator_config().validate()?;
        self.khasminskii_params().validate()?;
        let k = &self.khasminskii;
        if k.eps_grid.is_empty() || k.eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(CliError::Config("khasminskii.eps_grid must be nonempty and strictly decreasing".into()));
        }
        if !(k.dt_ratio >= 10.0) {
            return Err(CliError::Config("khasminskii.dt_ratio must be at least 10".into()));
        }
        self.sweep_config().validate()?;
        let e = &self.ergodic;
        if !(e.t_run > 0.0 && e.dt > 0.0) || e.replicas == 0 || e.mixing_replicas < 2 || e.t_grid.is_empty() {
            return Err(CliError::Config(
                "ergodic section needs t_run > 0, dt > 0, replicas >= 1, mixing_replicas >= 2, a nonempty t_grid"
                    .into(),
            ));
        }
        if self.validate.probes < 100 {
            return Err(CliError::Config("validate.probes must be at least 100".into()));
        }
        let s = &self.skeleton;
        if !(s.dt > 0.0 && s.t_end > 0.0) || !matches!(s.target.as_str(), "linear" | "sine") {
            return Err(CliError::Config("skeleton section needs dt > 0, T > 0 and target in {linear, sine}".into()));
        }
        if self.integrator.paths == 0 {
            return Err(CliError::Config("integrator.paths must be positive".into()));
        }
        Ok(())
    }

    pub fn levy_model(&self) -> Result<LevyModel, CliError> {
        let l = &self.levy;
        let base = match l.kind.as_str() {
            "gauss_light" => LevyModel::gauss_light(l.alpha, l.dim)?,
            "strongly_tempered" => LevyModel::strongly_tempered(l.alpha_prime, l.radial_count, l.dim)?,
            other => return Err(CliError::Config(format!("unknown levy kind `{other}`"))),
        };
        Ok(match l.truncation {
            Some(t) => base.with_truncation(t)?,
            None => base,
        })
    }

    pub fn params(&self) -> GaussOuParams {
        let m = &self.model;
        GaussOuParams {
            kappa: m.kappa,
            kappa2: m.kappa2,
            gamma_coupling: m.gamma_coupling,
            f1_base: m.f1_base,
            g_level: m.g_level,
            f1_slope: m.f1_slope,
        }
    }

    pub fn coefficient_set(&self) -> Result<CoefficientSet, CliError> {
        Ok(builtin_gauss_ou(self.params(), self.levy_model()?, self.integrator.tau)?)
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let i = &self.integrator;
        IntegratorConfig {
            epsilon: i.epsilon,
            dt: i.dt,
            t_end: i.t_end,
            tau: i.tau,
            seed: i.seed,
            localization_radius: i.localization_radius,
            allow_coarse_dt: i.allow_coarse_dt,
        }
    }

    pub fn initial_datum(&self) -> InitialDatum {
        InitialDatum::affine(vec![self.initial.chi], vec![self.initial.chi_slope])
    }

    pub fn khasminskii_params(&self) -> KhasminskiiParams {
        let k = &self.khasminskii;
        KhasminskiiParams { theta: k.theta, gamma: k.gamma, p: k.p, q: k.q }
    }

    pub fn sweep_config(&self) -> MdpSweepConfig {
        let s = &self.sweep;
        MdpSweepConfig {
            eps_grid: s.eps_grid.clone(),
            delta: s.delta,
            delta_avg: s.delta_avg,
            n_paths: s.n_paths,
            dt_ratio: s.dt_ratio,
            t_end: self.integrator.t_end,
            seed: self.integrator.seed,
        }
    }
}
