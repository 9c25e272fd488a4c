//! Batch front end: ingestion, pipeline orchestration, and report emission.
//!
//! Every subcommand reads an optional TOML config (`--config`), applies flag
//! overrides, runs one pipeline stage, and writes JSON/CSV artifacts under
//! `<outdir>/<subcommand>/`. Exit codes: 0 success, 2 validation failure,
//! 3 assertion failure inside a certification suite.

mod config;
mod pipeline;
mod selftest;

use clap::{Parser, Subcommand};
use config::RunConfig;
use homtype::ado::{self, OperatorDomain};
use homtype::ensemble::standard_ensemble;
use homtype::io;
use homtype::lp;
use homtype::molecules::{self, Molecule};
use homtype::seq::{self, CoefficientSequence, Homogeneity};
use homtype::space::random_function;
use homtype::util::subseed;
use homtype::wavelets::verify_exp_ati;
use pipeline::{build_pipeline, validation, write_artifact, CliError};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "homtype", version, about = "Dyadic cubes, tree wavelets, and Besov/Triebel-Lizorkin machinery on finite quasi-metric measure spaces")]
struct Cli {
    /// TOML configuration file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// Seed for every randomized routine (fallback: HOMTYPE_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    outdir: Option<String>,
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Scale base of the dyadic system.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Refinement depth.
    #[arg(long, global = true)]
    j0: Option<i32>,
    /// Clamp the realized coarsest level.
    #[arg(long, global = true)]
    kmin: Option<i32>,
    /// Clamp the realized finest level.
    #[arg(long, global = true)]
    kmax: Option<i32>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ingest a space, fit its doubling profile, build the cube tree.
    Build {
        /// Points CSV (header id,x1,...,xd,weight).
        #[arg(long)]
        points: Option<String>,
        /// Distance-matrix file.
        #[arg(long)]
        matrix: Option<String>,
        /// Built-in space, e.g. line:64 or cloud:100.
        #[arg(long)]
        builtin: Option<String>,
    },
    /// Build the wavelet basis, export it, certify decay conditions.
    Wavelets {
        #[arg(long)]
        backend: Option<String>,
        /// Also export the detail kernel matrices as CSV.
        #[arg(long)]
        export_kernels: bool,
    },
    /// Compute a function norm for a seeded random function.
    Norm {
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
    },
    /// Sample almost diagonal operators and certify boundedness.
    AdoCertify {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        density: Option<f64>,
    },
    /// Canonical molecules: verification, Gram operator, synthesis.
    Molecule {
        /// Use every wavelet cube instead of the default sub-family.
        #[arg(long)]
        full_family: bool,
    },
    /// Square-function equivalence report.
    LpReport {
        #[arg(long)]
        lambda_ap: Option<f64>,
        #[arg(long)]
        ensemble: Option<usize>,
        /// Also export per-point functional values of the first member.
        #[arg(long)]
        per_point: bool,
    },
    /// Aperture-growth fit of the area function.
    AngleFit {
        #[arg(long)]
        ensemble: Option<usize>,
    },
    /// Run the full invariant battery on a built-in line space.
    Selftest {
        /// Point count of the built-in line.
        #[arg(long, default_value_t = 64)]
        n: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    });
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read config {path:?}: {e}")))?;
            RunConfig::parse(&text).map_err(CliError::Validation)?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = cli.delta {
        cfg.dyadic.delta = v;
    }
    if let Some(v) = cli.j0 {
        cfg.dyadic.j0 = v;
    }
    if let Some(v) = cli.kmin {
        cfg.dyadic.k_min = Some(v);
    }
    if let Some(v) = cli.kmax {
        cfg.dyadic.k_max = Some(v);
    }
    if let Some(v) = &cli.outdir {
        cfg.run.outdir = v.clone();
    }
    if let Some(v) = cli.threads {
        cfg.run.threads = v;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    if cfg.run.threads > 0 {
        // ignore the error when a pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.run.threads).build_global();
    }
    let seed = cfg.resolve_seed(cli.seed);
    let outdir = cfg.run.outdir.clone();

    match cli.cmd {
        Cmd::Build { points, matrix, builtin } => {
            let mut cfg = cfg;
            if points.is_some() || matrix.is_some() || builtin.is_some() {
                cfg.input.points_csv = points;
                cfg.input.dist_matrix = matrix;
                cfg.input.builtin = builtin;
            }
            cmd_build(&cfg, seed, &outdir)
        }
        Cmd::Wavelets { backend, export_kernels } => {
            let mut cfg = cfg;
            if let Some(b) = backend {
                cfg.wavelets.backend = b;
            }
            cmd_wavelets(&cfg, seed, &outdir, export_kernels)
        }
        Cmd::Norm { s, p, q } => {
            let mut cfg = cfg;
            if let Some(v) = s {
                cfg.params.s = v;
            }
            if let Some(v) = p {
                cfg.params.p = v;
            }
            if let Some(v) = q {
                cfg.params.q = v;
            }
            cmd_norm(&cfg, seed, &outdir)
        }
        Cmd::AdoCertify { trials, density } => {
            let mut cfg = cfg;
            if let Some(v) = trials {
                cfg.run.trials = v;
            }
            if let Some(v) = density {
                cfg.run.density = v;
            }
            cmd_ado_certify(&cfg, seed, &outdir)
        }
        Cmd::Molecule { full_family } => cmd_molecule(&cfg, seed, &outdir, full_family),
        Cmd::LpReport { lambda_ap, ensemble, per_point } => {
            let mut cfg = cfg;
            if let Some(v) = lambda_ap {
                cfg.run.lambda_ap = v;
            }
            if let Some(v) = ensemble {
                cfg.run.ensemble = v;
            }
            cmd_lp_report(&cfg, seed, &outdir, per_point)
        }
        Cmd::AngleFit { ensemble } => {
            let mut cfg = cfg;
            if let Some(v) = ensemble {
                cfg.run.ensemble = v;
            }
            cmd_angle_fit(&cfg, seed, &outdir)
        }
        Cmd::Selftest { n } => {
            let report = selftest::run(&cfg, n, seed)?;
            write_artifact(&outdir, "selftest", "report.json", &io::to_json_17(&report)?)?;
            if report.all_pass {
                Ok(())
            } else {
                Err(CliError::Assertion("selftest checks failed; see selftest/report.json".into()))
            }
        }
    }
}

#[derive(Serialize)]
struct SpaceSummary {
    n: usize,
    a0: f64,
    diam: f64,
    total_mass: f64,
    doubling: homtype::space::DoublingProfile,
}

fn cmd_build(cfg: &RunConfig, _seed: u64, outdir: &str) -> Result<(), CliError> {
    let p = build_pipeline(cfg)?;
    let summary = SpaceSummary {
        n: p.space.n(),
        a0: p.space.a0(),
        diam: p.space.diam(),
        total_mass: p.space.total_mass(),
        doubling: p.profile.clone(),
    };
    write_artifact(outdir, "build", "space.json", &io::to_json_17(&summary)?)?;
    write_artifact(outdir, "build", "tree.json", &io::to_json_17(&p.tree.export())?)?;
    #[derive(Serialize)]
    struct RefinementSummary {
        j0: i32,
        max_subcubes: usize,
    }
    write_artifact(
        outdir,
        "build",
        "refinement.json",
        &io::to_json_17(&RefinementSummary { j0: p.refinement.j0, max_subcubes: p.refinement.max_subcubes })?,
    )?;
    println!(
        "built space: n = {}, a0 = {}, diam = {}, omega = {:.4}, levels {}..{}",
        p.space.n(),
        p.space.a0(),
        p.space.diam(),
        p.profile.omega,
        p.tree.k_min(),
        p.tree.k_max()
    );
    Ok(())
}

fn cmd_wavelets(cfg: &RunConfig, _seed: u64, outdir: &str, export_kernels: bool) -> Result<(), CliError> {
    let p = build_pipeline(cfg)?;
    write_artifact(outdir, "wavelets", "manifest.json", &io::to_json_17(&io::basis_manifest(&p.tree, &p.basis))?)?;
    for (li, lvl) in p.basis.phi.iter().enumerate() {
        let k = p.tree.k_min() + li as i32;
        let mut csv = String::from("alpha,point_id,value\n");
        for f in lvl {
            for (x, v) in f.values.iter().enumerate() {
                csv.push_str(&format!("{},{},{v:.16e}\n", f.alpha, p.space.ids()[x]));
            }
        }
        write_artifact(outdir, "wavelets", &format!("phi_level_{k}.csv"), &csv)?;
    }
    for k in p.tree.k_min()..p.tree.k_max() {
        let mut csv = String::from("alpha,point_id,value\n");
        for w in &p.basis.psi {
            let wc = p.tree.wavelet_cubes()[w.cube];
            if wc.g_level != k {
                continue;
            }
            for (x, v) in w.values.iter().enumerate() {
                csv.push_str(&format!("{},{},{v:.16e}\n", wc.alpha, p.space.ids()[x]));
            }
        }
        write_artifact(outdir, "wavelets", &format!("psi_level_{k}.csv"), &csv)?;
    }
    let report = verify_exp_ati(&p.space, &p.tree, &p.kernels, cfg.wavelets.nu_prime, cfg.wavelets.a, cfg.params.eta);
    write_artifact(outdir, "wavelets", "decay_report.json", &io::to_json_17(&report)?)?;
    if export_kernels {
        let n = p.space.n();
        for k in p.tree.k_min()..p.tree.k_max() {
            let d = p.kernels.detail(k);
            let mut csv = String::new();
            for x in 0..n {
                let row: Vec<String> = (0..n).map(|y| format!("{:.16e}", d[x * n + y])).collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
            write_artifact(outdir, "wavelets", &format!("detail_kernel_{k}.csv"), &csv)?;
        }
    }
    println!("wavelets: {} scaling levels, {} wavelets, cancellation pass = {}", p.basis.phi.len(), p.basis.psi.len(), report.cancel_pass);
    Ok(())
}

fn cmd_norm(cfg: &RunConfig, seed: u64, outdir: &str) -> Result<(), CliError> {
    let p = build_pipeline(cfg)?;
    let params = cfg.space_params(&p.profile).map_err(CliError::Validation)?;
    params.validate().map_err(|v| CliError::Validation(v.join("; ")))?;
    let f = random_function(p.space.n(), seed);
    let value = seq::wavelet_function_norm(&p.space, &p.tree, &p.basis, &f, &params)?;
    #[derive(Serialize)]
    struct NormReport {
        s: f64,
        p: String,
        q: String,
        family: String,
        homogeneity: String,
        seed: u64,
        value: f64,
    }
    let report = NormReport {
        s: params.s,
        p: format!("{}", params.p),
        q: format!("{}", params.q),
        family: cfg.params.family.clone(),
        homogeneity: cfg.params.homogeneity.clone(),
        seed,
        value,
    };
    write_artifact(outdir, "norm", "norm.json", &io::to_json_17(&report)?)?;
    write_artifact(outdir, "norm", "function.csv", &io::values_csv(&p.space, &f))?;
    println!("{value:.16e}");
    Ok(())
}

fn cmd_ado_certify(cfg: &RunConfig, seed: u64, outdir: &str) -> Result<(), CliError> {
    let p = build_pipeline(cfg)?;
    let params = cfg.space_params(&p.profile).map_err(CliError::Validation)?;
    params.validate().map_err(|v| CliError::Validation(v.join("; ")))?;
    let domain = match params.kind.homogeneity {
        Homogeneity::Homogeneous => OperatorDomain::Homogeneous,
        Homogeneity::Inhomogeneous => OperatorDomain::Inhomogeneous,
    };
    let report =
        ado::certify_boundedness(&p.space, &p.tree, &p.profile, &params, domain, cfg.run.trials, cfg.run.density, seed)?;
    let doubled = ado::certify_boundedness(
        &p.space,
        &p.tree,
        &p.profile,
        &params,
        domain,
        2 * cfg.run.trials,
        cfg.run.density,
        seed,
    )?;
    #[derive(Serialize)]
    struct CertifyArtifact {
        base: ado::AdoCertifyReport,
        doubled_sup_ratio: f64,
        stable: bool,
    }
    let stable = (doubled.sup_ratio - report.sup_ratio).abs() / doubled.sup_ratio.max(1e-300) < 0.25;
    let artifact = CertifyArtifact { doubled_sup_ratio: doubled.sup_ratio, stable, base: report };
    write_artifact(outdir, "ado-certify", "report.json", &io::to_json_17(&artifact)?)?;
    println!(
        "ado certification: sup ratio {:.6} (doubled {:.6}), identity 1/K = {:.6e}",
        artifact.base.sup_ratio, artifact.doubled_sup_ratio, artifact.base.identity_ratio
    );
    if !stable {
        return Err(CliError::Assertion(format!(
            "empirical constant unstable under trial doubling: {:.6} vs {:.6}",
            artifact.base.sup_ratio, artifact.doubled_sup_ratio
        )));
    }
    Ok(())
}

fn cmd_molecule(cfg: &RunConfig, seed: u64, outdir: &str, full_family: bool) -> Result<(), CliError> {
    let p = build_pipeline(cfg)?;
    let params = cfg.space_params(&p.profile).map_err(CliError::Validation)?;
    let beta = cfg.params.beta;
    let gamma = cfg.params.gamma;
    let homogeneity = params.kind.homogeneity;
    let family = if full_family { molecules::full_family(&p.tree) } else { molecules::default_subfamily(&p.tree) };
    let mols: Result<Vec<Molecule>, homtype::Error> = family
        .iter()
        .map(|&i| molecules::canonical_molecule(&p.space, &p.tree, OperatorDomain::Homogeneous, i, beta, gamma, homogeneity))
        .collect();
    let mols = mols?;
    let checks: Result<Vec<molecules::MoleculeCheck>, homtype::Error> = mols
        .iter()
        .map(|m| {
            molecules::verify_molecule(&p.space, &p.tree, m.domain, m.index, &m.values, beta, gamma, homogeneity)
        })
        .collect();
    let checks = checks?;
    let gram = molecules::molecule_wavelet_gram(&p.space, &p.tree, &p.basis, &mols)?;
    let k = ado::ado_constant(&p.space, &p.tree, &gram, &params)?;
    let mut ratios = Vec::new();
    for t in 0..cfg.run.trials.min(100) {
        let mut lam = CoefficientSequence::zeros(&p.tree);
        let f = random_function(p.tree.n_wavelet_cubes(), subseed(seed, "mol", t as u64));
        for &i in &family {
            lam.wavelet[i] = f[i];
        }
        let rep = molecules::molecular_synthesis(&p.space, &p.tree, &p.basis, &lam, &mols, &params)?;
        ratios.push(rep.ratio);
    }
    #[derive(Serialize)]
    struct MoleculeArtifact {
        family_size: usize,
        all_pass: bool,
        checks: Vec<molecules::MoleculeCheck>,
        gram_constant: f64,
        synthesis_max_ratio: f64,
    }
    let artifact = MoleculeArtifact {
        family_size: family.len(),
        all_pass: checks.iter().all(|c| c.pass),
        gram_constant: k,
        synthesis_max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        checks,
    };
    write_artifact(outdir, "molecule", "report.json", &io::to_json_17(&artifact)?)?;
    write_artifact(outdir, "molecule", "gram.csv", &io::operator_csv(&p.tree, &gram))?;
    let mut csv = String::from("cube_level,cube_alpha,point_id,value\n");
    for m in &mols {
        let wc = p.tree.wavelet_cubes()[m.index];
        for (x, v) in m.values.iter().enumerate() {
            csv.push_str(&format!("{},{},{},{v:.16e}\n", wc.g_level, wc.alpha, p.space.ids()[x]));
        }
    }
    write_artifact(outdir, "molecule", "molecules.csv", &csv)?;
    println!(
        "molecules: {} canonical, all pass = {}, gram K = {:.6}, synthesis max ratio = {:.6}",
        artifact.family_size, artifact.all_pass, artifact.gram_constant, artifact.synthesis_max_ratio
    );
    if !artifact.all_pass {
        return Err(CliError::Assertion("a canonical molecule failed verification".into()));
    }
    Ok(())
}

fn cmd_lp_report(cfg: &RunConfig, seed: u64, outdir: &str, per_point: bool) -> Result<(), CliError> {
    let p = build_pipeline(cfg)?;
    let params = cfg.space_params(&p.profile).map_err(CliError::Validation)?;
    params.validate().map_err(|v| CliError::Validation(v.join("; ")))?;
    if params.kind.family != homtype::seq::Family::TriebelLizorkin {
        return validation("lp-report needs a triebel_lizorkin params block");
    }
    let ensemble = standard_ensemble(&p.space, &p.tree, &p.basis, &p.kernels, cfg.run.ensemble, seed);
    let report = lp::equivalence_report(&p.space, &p.tree, &p.basis, &p.kernels, Some(&p.refinement), &params, cfg.run.lambda_ap, &ensemble)?;
    write_artifact(outdir, "lp-report", "report.json", &io::to_json_17(&report)?)?;
    if per_point && !ensemble.is_empty() {
        let f = &ensemble[0];
        let (s, q) = (params.s, params.q);
        write_artifact(
            outdir,
            "lp-report",
            "g_function.csv",
            &io::values_csv(&p.space, &lp::g_function(&p.space, &p.tree, &p.kernels, f, s, q)),
        )?;
        write_artifact(
            outdir,
            "lp-report",
            "lusin_area.csv",
            &io::values_csv(&p.space, &lp::lusin_area(&p.space, &p.tree, &p.kernels, f, s, q)),
        )?;
        write_artifact(
            outdir,
            "lp-report",
            "g_lambda_star.csv",
            &io::values_csv(
                &p.space,
                &lp::g_lambda_star(&p.space, &p.tree, &p.kernels, f, s, q, cfg.run.lambda_ap),
            ),
        )?;
    }
    println!(
        "equivalence band: C_emp = {:.6} over {} functions{}",
        report.c_emp,
        report.rows.len(),
        if report.out_of_window { " (lambda below the admissible window)" } else { "" }
    );
    Ok(())
}

fn cmd_angle_fit(cfg: &RunConfig, seed: u64, outdir: &str) -> Result<(), CliError> {
    let p = build_pipeline(cfg)?;
    let params = cfg.space_params(&p.profile).map_err(CliError::Validation)?;
    let ensemble = standard_ensemble(&p.space, &p.tree, &p.basis, &p.kernels, cfg.run.ensemble, seed);
    let report = lp::change_of_angle_fit(&p.space, &p.tree, &p.kernels, &params, &cfg.run.thetas, &ensemble)?;
    write_artifact(outdir, "angle-fit", "report.json", &io::to_json_17(&report)?)?;
    println!(
        "angle fit: max slope {:.6}, bound {:.6}{}",
        report.max_slope,
        report.omega_over_p + 0.2,
        if report.hypothesis_met { "" } else { " (outside the p < q hypothesis)" }
    );
    if report.hypothesis_met && report.max_slope > report.omega_over_p + 0.2 {
        return Err(CliError::Assertion(format!(
            "aperture growth {:.6} exceeds the change-of-angle bound {:.6}",
            report.max_slope,
            report.omega_over_p + 0.2
        )));
    }
    Ok(())
}
