//! TOML run configuration with a strict schema.
//!
//! ```toml
//! [model]
//! H0 = 3.0
//! u0 = "cosine-bump"
//! alpha = 1.0
//! beta = 1.0
//! D = { kind = "truncated-normal", mean = 1.0, std = 0.1, lo = 0.8, hi = 1.2 }
//! eta = { kind = "truncated-beta", a = 2.0, b = 4.0, lo = 1.6, hi = 2.4 }
//!
//! [grid]
//! M = 50
//! T = 1.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dichotomy::ClassifierSettings;
use crate::ensemble::{EnsembleConfig, StepControl};
use crate::error::{Error, Result};
use crate::ft::{check_eps, DEFAULT_EPS};
use crate::model::{derive_constants, Distribution, GrowthFunction, InitialCondition, InitialProfile, ModelSpec};
use crate::solution::Method;

pub const DEFAULT_K: usize = 100;
pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<RawModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<RawGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<RawMc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ft: Option<RawFt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RawRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifierSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<RawHistogram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<RawCompare>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<RawConvergence>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    #[serde(rename = "H0", skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0: Option<RawProfile>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<RawDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<RawDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<RawGrowth>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<RawGrowth>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RawDistribution {
    Point { value: f64 },
    TruncatedNormal { mean: f64, std: f64, lo: f64, hi: f64 },
    TruncatedBeta { a: f64, b: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawGrowth {
    Constant(f64),
    Table(RawGrowthTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RawGrowthTable {
    Constant { value: f64 },
    RationalAffine { p: f64, q: f64, s: f64, t: f64 },
    Tabulated { knots: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawProfile {
    Named(String),
    Table(RawProfileTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RawProfileTable {
    Tabulated { knots: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMc {
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFt {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Realization index for single solves of a random model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realization: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHistogram {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCompare {
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConvergence {
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<usize>>,
    /// Common step count for the M ladder.
    #[serde(rename = "M_steps", skip_serializing_if = "Option::is_none")]
    pub m_steps: Option<usize>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
}

/// Validated configuration with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub spec: ModelSpec,
    pub r_max: f64,
    pub m: usize,
    pub horizon: f64,
    pub steps: StepControl,
    pub k_realizations: usize,
    pub seed: u64,
    pub workers: usize,
    pub eps: f64,
    pub method: Method,
    pub realization: usize,
    pub classify: ClassifierSettings,
    pub bins: usize,
    pub compare_k: Vec<usize>,
    pub ladder_k: Vec<usize>,
    pub ladder_m: Vec<usize>,
    pub ladder_m_steps: usize,
    pub ladder_n: Vec<usize>,
}

impl Config {
    pub fn ensemble(&self, method: Method) -> EnsembleConfig {
        EnsembleConfig {
            k_realizations: self.k_realizations,
            method,
            seed: self.seed,
            m: self.m,
            steps: self.steps,
            horizon: self.horizon,
            eps: self.eps,
            spec: self.spec.clone(),
            record_trajectory: true,
            workers: self.workers,
            r_max: Some(self.r_max),
        }
    }
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string().trim_end()))
    }

    /// Reads TOML, or the `config` entry of a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            stage: format!("reading config {}", path.display()),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct ManifestConfig {
                config: RawConfig,
            }
            let m: ManifestConfig =
                serde_json::from_str(&text).map_err(|e| Error::config("manifest.config", e.to_string()))?;
            return Ok(m.config);
        }
        Self::from_toml(&text)
    }

    pub fn resolve(&self) -> Result<Config> {
        let missing = self.missing_keys();
        if !missing.is_empty() {
            return Err(Error::config(
                missing[0],
                format!("missing required keys: {}", missing.join(", ")),
            ));
        }
        let model = self.model.as_ref().expect("checked");
        let grid = self.grid.as_ref().expect("checked");
        let h0 = model.h0.expect("checked");
        let initial = InitialCondition::new(profile(model.u0.as_ref().expect("checked"))?, h0)?;
        let spec = ModelSpec::new(
            distribution(model.diffusion.as_ref().expect("checked"), "model.D")?,
            distribution(model.eta.as_ref().expect("checked"), "model.eta")?,
            growth(model.alpha.as_ref().expect("checked"), "model.alpha")?,
            growth(model.beta.as_ref().expect("checked"), "model.beta")?,
            initial,
        )?;
        let r_max = model.r_max.unwrap_or_else(|| spec.default_r_max());
        derive_constants(&spec, r_max)?;

        let m = grid.m.expect("checked");
        if m < 4 {
            return Err(Error::config("grid.M", "M must be >= 4"));
        }
        let horizon = grid.t.expect("checked");
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::config("grid.T", "T must be finite and >= 0"));
        }
        let steps = match (grid.n, grid.k) {
            (Some(_), Some(_)) => return Err(Error::config("grid.k", "give either grid.N or grid.k, not both")),
            (Some(n), None) => StepControl::Steps(n),
            (None, Some(k)) => {
                if !(k > 0.0) {
                    return Err(Error::config("grid.k", "k must be > 0"));
                }
                StepControl::Steps((horizon / k).ceil() as usize)
            }
            (None, None) => StepControl::Auto,
        };

        let mc = self.mc.clone().unwrap_or_default();
        let k_realizations = mc.k.unwrap_or(DEFAULT_K);
        if k_realizations == 0 {
            return Err(Error::config("mc.K", "K must be >= 1"));
        }
        let eps = self.ft.as_ref().and_then(|f| f.eps).unwrap_or(DEFAULT_EPS);
        check_eps(eps)?;
        let run = self.run.clone().unwrap_or_default();
        let method = match &run.method {
            Some(s) => s.parse().map_err(|e: String| Error::config("run.method", e))?,
            None => Method::FrontFixing,
        };
        let classify = self.classify.unwrap_or_default();
        classify.validate()?;
        let bins = self.histogram.as_ref().and_then(|h| h.bins).unwrap_or(DEFAULT_BINS);
        if bins == 0 {
            return Err(Error::config("histogram.bins", "bins must be >= 1"));
        }
        let compare_k = self
            .compare
            .as_ref()
            .and_then(|c| c.k.clone())
            .unwrap_or_else(|| vec![25, 50, 100]);
        let conv = self.convergence.clone().unwrap_or_default();
        let ladder_k = conv.k.unwrap_or_else(|| vec![25, 50, 100, 200, 400, 800, 1600, 3200]);
        let ladder_m = conv.m.unwrap_or_else(|| vec![25, 50, 100, 200, 400]);
        let ladder_n = conv.n.unwrap_or_else(|| vec![2500, 5000, 10000, 20000, 40000, 80000]);
        let ladder_m_steps = conv.m_steps.unwrap_or(50_000);
        check_ladder(&compare_k, "compare.K")?;
        check_ladder(&ladder_k, "convergence.K")?;
        check_ladder(&ladder_m, "convergence.M")?;
        check_ladder(&ladder_n, "convergence.N")?;

        Ok(Config {
            spec,
            r_max,
            m,
            horizon,
            steps,
            k_realizations,
            seed: mc.seed.unwrap_or(0),
            workers: mc.workers.unwrap_or(0),
            eps,
            method,
            realization: run.realization.unwrap_or(0),
            classify,
            bins,
            compare_k,
            ladder_k,
            ladder_m,
            ladder_m_steps,
            ladder_n,
        })
    }

    /// Required keys absent from the file, in schema order.
    pub fn missing_keys(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let model = self.model.clone().unwrap_or_default();
        let grid = self.grid.clone().unwrap_or_default();
        let checks: [(&'static str, bool); 8] = [
            ("model.H0", model.h0.is_some()),
            ("model.u0", model.u0.is_some()),
            ("model.D", model.diffusion.is_some()),
            ("model.eta", model.eta.is_some()),
            ("model.alpha", model.alpha.is_some()),
            ("model.beta", model.beta.is_some()),
            ("grid.M", grid.m.is_some()),
            ("grid.T", grid.t.is_some()),
        ];
        for (key, present) in checks {
            if !present {
                out.push(key);
            }
        }
        out
    }

    fn mc_mut(&mut self) -> &mut RawMc {
        self.mc.get_or_insert_with(Default::default)
    }

    fn grid_mut(&mut self) -> &mut RawGrid {
        self.grid.get_or_insert_with(Default::default)
    }

    /// Applies command-line overrides in place so a manifest records them.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.mc_mut().seed = Some(seed);
        }
        if let Some(w) = o.workers {
            self.mc_mut().workers = Some(w);
        }
        if let Some(k) = o.k {
            self.mc_mut().k = Some(k);
        }
        if let Some(m) = o.m {
            self.grid_mut().m = Some(m);
        }
        if let Some(n) = o.n {
            let g = self.grid_mut();
            g.n = Some(n);
            g.k = None;
        }
        if let Some(t) = o.t {
            self.grid_mut().t = Some(t);
        }
        if let Some(eps) = o.eps {
            self.ft.get_or_insert_with(Default::default).eps = Some(eps);
        }
        if let Some(method) = o.method {
            self.run.get_or_insert_with(Default::default).method = Some(method.label().to_string());
        }
    }
}

/// Values that may replace config entries from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub t: Option<f64>,
    pub eps: Option<f64>,
    pub method: Option<Method>,
}

fn check_ladder(v: &[usize], key: &str) -> Result<()> {
    if v.is_empty() || v.contains(&0) {
        return Err(Error::config(
            key,
            "ladder entries must be >= 1 and the ladder non-empty",
        ));
    }
    Ok(())
}

fn prefix(key: &str, e: Error) -> Error {
    match e {
        Error::Config { key: inner, message } if !inner.starts_with("model.") => Error::Config {
            key: format!("{key}.{inner}"),
            message,
        },
        other => other,
    }
}

fn distribution(raw: &RawDistribution, key: &str) -> Result<Distribution> {
    match *raw {
        RawDistribution::Point { value } => Distribution::point(value),
        RawDistribution::TruncatedNormal { mean, std, lo, hi } => Distribution::truncated_normal(mean, std, lo, hi),
        RawDistribution::TruncatedBeta { a, b, lo, hi } => Distribution::truncated_beta(a, b, lo, hi),
    }
    .map_err(|e| prefix(key, e))
}

fn growth(raw: &RawGrowth, key: &str) -> Result<GrowthFunction> {
    match raw {
        RawGrowth::Constant(v) | RawGrowth::Table(RawGrowthTable::Constant { value: v }) => {
            Ok(GrowthFunction::Constant(*v))
        }
        RawGrowth::Table(RawGrowthTable::RationalAffine { p, q, s, t }) => Ok(GrowthFunction::RationalAffine {
            p: *p,
            q: *q,
            s: *s,
            t: *t,
        }),
        RawGrowth::Table(RawGrowthTable::Tabulated { knots }) => {
            GrowthFunction::tabulated(knots.clone()).map_err(|e| prefix(key, e))
        }
    }
}

fn profile(raw: &RawProfile) -> Result<InitialProfile> {
    match raw {
        RawProfile::Named(name) => match name.as_str() {
            "cosine-bump" => Ok(InitialProfile::CosineBump),
            "parabolic-bump" => Ok(InitialProfile::ParabolicBump),
            other => Err(Error::config(
                "model.u0",
                format!("unknown profile `{other}` (expected cosine-bump, parabolic-bump or a tabulated table)"),
            )),
        },
        RawProfile::Table(RawProfileTable::Tabulated { knots }) => Ok(InitialProfile::Tabulated(knots.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONSTANT_CASE: &str = r#"
[model]
H0 = 3.0
u0 = "cosine-bump"
alpha = 1.0
beta = 1.0
D = { kind = "truncated-normal", mean = 1.0, std = 0.1, lo = 0.8, hi = 1.2 }
eta = { kind = "truncated-beta", a = 2.0, b = 4.0, lo = 1.6, hi = 2.4 }

[grid]
M = 50
T = 10.0
"#;

    #[test]
    fn constant_case_parses_with_defaults() {
        let cfg = RawConfig::from_toml(CONSTANT_CASE).unwrap().resolve().unwrap();
        assert_eq!(cfg.spec.d2(), 1.2);
        assert_eq!(cfg.spec.eta0(), 1.6);
        assert_eq!(cfg.spec.alpha, GrowthFunction::Constant(1.0));
        assert_eq!(*cfg.spec.initial.profile(), InitialProfile::CosineBump);
        assert_eq!(cfg.eps, 0.5);
        assert_eq!(cfg.steps, StepControl::Auto);
        assert_eq!(cfg.k_realizations, 100);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.bins, 20);
    }

    #[test]
    fn variable_case_tables_parse() {
        let text = CONSTANT_CASE
            .replace(
                "alpha = 1.0",
                r#"alpha = { kind = "rational-affine", p = 2.0, q = 3.0, s = 2.0, t = 2.0 }"#,
            )
            .replace("u0 = \"cosine-bump\"", "u0 = \"parabolic-bump\"");
        let cfg = RawConfig::from_toml(&text).unwrap().resolve().unwrap();
        assert_eq!(cfg.spec.alpha.eval(0.0).unwrap(), 1.5);
    }

    #[test]
    fn empty_file_lists_required_keys() {
        let err = RawConfig::from_toml("").unwrap().resolve().unwrap_err().to_string();
        for key in [
            "model.H0",
            "model.u0",
            "model.D",
            "model.eta",
            "model.alpha",
            "model.beta",
            "grid.M",
            "grid.T",
        ] {
            assert!(err.contains(key), "{err}");
        }
    }

    #[test]
    fn bad_eps_is_rejected() {
        let text = format!("{CONSTANT_CASE}\n[ft]\neps = 1.5\n");
        let err = RawConfig::from_toml(&text).unwrap().resolve().unwrap_err().to_string();
        assert!(err.contains("eps must lie in (0,1)"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{CONSTANT_CASE}\n[mc]\nKK = 3\n");
        assert!(RawConfig::from_toml(&text).is_err());
        let text = CONSTANT_CASE.replace("std = 0.1", "std = 0.1, shape = 2.0");
        assert!(RawConfig::from_toml(&text).is_err());
    }

    #[test]
    fn nonpositive_diffusion_support_is_rejected() {
        let text = CONSTANT_CASE.replace("lo = 0.8", "lo = -0.1");
        let err = RawConfig::from_toml(&text).unwrap().resolve().unwrap_err().to_string();
        assert!(err.contains("model.D"), "{err}");
    }

    #[test]
    fn overrides_are_recorded() {
        let mut raw = RawConfig::from_toml(CONSTANT_CASE).unwrap();
        raw.apply(&Overrides {
            seed: Some(9),
            n: Some(1000),
            eps: Some(0.7),
            method: Some(Method::FrontTracking),
            ..Default::default()
        });
        let round: RawConfig = serde_json::from_str(&serde_json::to_string(&raw).unwrap()).unwrap();
        assert_eq!(round, raw);
        let cfg = round.resolve().unwrap();
        assert_eq!(
            (cfg.seed, cfg.steps, cfg.eps, cfg.method),
            (9, StepControl::Steps(1000), 0.7, Method::FrontTracking)
        );
    }

    #[test]
    fn step_size_becomes_step_count() {
        let text = CONSTANT_CASE.replace("T = 10.0", "T = 10.0\nk = 7e-4");
        let cfg = RawConfig::from_toml(&text).unwrap().resolve().unwrap();
        assert_eq!(cfg.steps, StepControl::Steps(14286));
    }
}
