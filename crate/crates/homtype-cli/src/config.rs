//! Run configuration: a flat TOML file with one section per module, every
//! field overridable from the command line.

use homtype::seq::{Family, Homogeneity, SpaceKind, SpaceParams};
use homtype::space::DoublingProfile;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: InputConfig,
    pub dyadic: DyadicConfig,
    pub wavelets: WaveletConfig,
    pub params: ParamConfig,
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    /// Path to a `id,x1,...,xd,weight` CSV.
    pub points_csv: Option<String>,
    /// Path to a distance-matrix file.
    pub dist_matrix: Option<String>,
    /// Built-in space: "line:N" or "cloud:N".
    pub builtin: Option<String>,
    /// "euclidean" or "snowflake:theta".
    pub metric: String,
    pub a0_hint: Option<f64>,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            points_csv: None,
            dist_matrix: None,
            builtin: Some("line:64".into()),
            metric: "euclidean".into(),
            a0_hint: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DyadicConfig {
    pub delta: f64,
    pub c0: f64,
    pub big_c0: f64,
    pub j0: i32,
    pub k_min: Option<i32>,
    pub k_max: Option<i32>,
}

impl Default for DyadicConfig {
    fn default() -> Self {
        DyadicConfig { delta: 0.125, c0: 1.0, big_c0: 1.0, j0: 1, k_min: None, k_max: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveletConfig {
    /// "haar" or "smoothed".
    pub backend: String,
    pub nu: f64,
    pub a: f64,
    /// Decay rate used when certifying exponential-decay conditions.
    pub nu_prime: f64,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        WaveletConfig { backend: "haar".into(), nu: 2.0, a: 1.0, nu_prime: 0.5 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamConfig {
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eps_ad: f64,
    pub eta: f64,
    /// "besov" or "triebel_lizorkin".
    pub family: String,
    /// "homogeneous" or "inhomogeneous".
    pub homogeneity: String,
    pub n_cutoff: Option<u32>,
    /// Override of the fitted doubling exponent.
    pub omega: Option<f64>,
}

impl Default for ParamConfig {
    fn default() -> Self {
        ParamConfig {
            s: 0.0,
            p: 2.0,
            q: 2.0,
            beta: 0.45,
            gamma: 0.45,
            eps_ad: 0.5,
            eta: 0.5,
            family: "besov".into(),
            homogeneity: "homogeneous".into(),
            n_cutoff: None,
            omega: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub trials: usize,
    pub density: f64,
    pub ensemble: usize,
    pub lambda_ap: f64,
    pub thetas: Vec<f64>,
    pub outdir: String,
    /// 0 = available parallelism.
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: None,
            trials: 200,
            density: 0.05,
            ensemble: 100,
            lambda_ap: 4.0,
            thetas: vec![1.0, 2.0, 4.0, 8.0],
            outdir: "out".into(),
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config: {e}"))
    }

    /// Seed resolution: flag > config > HOMTYPE_SEED > 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.run.seed)
            .or_else(|| std::env::var("HOMTYPE_SEED").ok().and_then(|v| v.parse().ok()))
            .unwrap_or(0)
    }

    pub fn space_kind(&self) -> Result<SpaceKind, String> {
        let family = match self.params.family.as_str() {
            "besov" => Family::Besov,
            "triebel_lizorkin" => Family::TriebelLizorkin,
            other => return Err(format!("unknown family '{other}'")),
        };
        let homogeneity = match self.params.homogeneity.as_str() {
            "homogeneous" => Homogeneity::Homogeneous,
            "inhomogeneous" => Homogeneity::Inhomogeneous,
            other => return Err(format!("unknown homogeneity '{other}'")),
        };
        Ok(SpaceKind { family, homogeneity })
    }

    /// Assemble space parameters, taking the doubling exponents from the
    /// fitted profile unless overridden.
    pub fn space_params(&self, profile: &DoublingProfile) -> Result<SpaceParams, String> {
        let kind = self.space_kind()?;
        Ok(SpaceParams {
            s: self.params.s,
            p: self.params.p,
            q: self.params.q,
            beta: self.params.beta,
            gamma: self.params.gamma,
            eps_ad: self.params.eps_ad,
            eta: self.params.eta,
            omega: self.params.omega.unwrap_or(profile.omega),
            omega0: profile.omega0.min(self.params.omega.unwrap_or(profile.omega)),
            kind,
            n_cutoff: self.params.n_cutoff,
        })
    }
}
