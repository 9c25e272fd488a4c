//! Shared assembly: config → space → doubling profile → tree → basis →
//! kernels → refinement.

use crate::config::RunConfig;
use homtype::dyadic::{build_nets, build_tree, refine, DyadicTree, Refinement};
use homtype::space::{estimate_doubling, DoublingProfile, MetricSpec, QuasiMetricSpace, LAMBDA_GRID};
use homtype::wavelets::{build_haar, build_kernels, build_smoothed, LevelKernels, WaveletBasis};
use homtype::{builtin, io};

/// CLI failure classes; validation exits 2, certification failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Assertion(_) => 3,
        }
    }
    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) => m,
            CliError::Assertion(m) => m,
        }
    }
}

impl From<homtype::Error> for CliError {
    fn from(e: homtype::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub fn validation<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Validation(msg.into()))
}

pub struct Pipeline {
    pub space: QuasiMetricSpace,
    pub profile: DoublingProfile,
    pub tree: DyadicTree,
    pub basis: WaveletBasis,
    pub kernels: LevelKernels,
    pub refinement: Refinement,
}

fn parse_metric(spec: &str) -> Result<MetricSpec, CliError> {
    if spec == "euclidean" {
        return Ok(MetricSpec::Euclidean);
    }
    if let Some(theta) = spec.strip_prefix("snowflake:") {
        let theta: f64 = theta.parse().map_err(|_| CliError::Validation(format!("bad snowflake exponent '{theta}'")))?;
        return Ok(MetricSpec::Snowflake(theta));
    }
    validation(format!("unknown metric '{spec}'"))
}

pub fn load_space(cfg: &RunConfig) -> Result<QuasiMetricSpace, CliError> {
    let input = &cfg.input;
    if let Some(path) = &input.points_csv {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {path}: {e}")))?;
        let metric = parse_metric(&input.metric)?;
        return Ok(io::ingest_points_csv(&text, &metric, input.a0_hint)?);
    }
    if let Some(path) = &input.dist_matrix {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {path}: {e}")))?;
        return Ok(io::ingest_distance_matrix(&text, input.a0_hint)?);
    }
    let spec = input.builtin.as_deref().unwrap_or("line:64");
    let (kind, count) = spec.split_once(':').unwrap_or((spec, "64"));
    let n: usize = count.parse().map_err(|_| CliError::Validation(format!("bad builtin size '{count}'")))?;
    match kind {
        "line" => Ok(builtin::line_space(n)?),
        "cloud" => Ok(builtin::planar_cloud(n, builtin::CLOUD_SEED)?),
        other => validation(format!("unknown builtin space '{other}'")),
    }
}

pub fn build_pipeline(cfg: &RunConfig) -> Result<Pipeline, CliError> {
    let space = load_space(cfg)?;
    let profile = estimate_doubling(&space, &LAMBDA_GRID)?;
    let net = build_nets(&space, cfg.dyadic.delta, cfg.dyadic.c0, cfg.dyadic.big_c0)?;
    let net = net.truncated(cfg.dyadic.k_min, cfg.dyadic.k_max);
    let tree = build_tree(&space, net)?;
    let basis = match cfg.wavelets.backend.as_str() {
        "haar" => build_haar(&space, &tree),
        "smoothed" => build_smoothed(&space, &tree, cfg.wavelets.nu, cfg.wavelets.a)?,
        other => return validation(format!("unknown wavelet backend '{other}'")),
    };
    let kernels = build_kernels(&space, &tree, &basis);
    let refinement = refine(&tree, cfg.dyadic.j0)?;
    Ok(Pipeline { space, profile, tree, basis, kernels, refinement })
}

/// Create `<outdir>/<sub>` and write a file into it.
pub fn write_artifact(outdir: &str, sub: &str, name: &str, content: &str) -> Result<std::path::PathBuf, CliError> {
    let dir = std::path::Path::new(outdir).join(sub);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Validation(format!("cannot create {dir:?}: {e}")))?;
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| CliError::Validation(format!("cannot write {path:?}: {e}")))?;
    Ok(path)
}
