use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use curvlab::io::{
    certificate_to_json, tensor_from_json, tensor_to_json, to_json, write_trajectory_csv,
};
use curvlab::sample::Strategy;
use curvlab::{
    estimate_constants, flow, margin, run_campaign, Campaign, CampaignConfig, ConeKind, ConeSpec,
    CurvatureTensor, FlowOptions, Outcome, SearchParams,
};

#[derive(Parser)]
#[command(
    name = "curvlab",
    version,
    about = "Curvature tensor algebra, cone certificates and ODE campaigns"
)]
struct Cli {
    /// Worker threads for campaigns and restarts (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write Q(R) for a tensor file.
    Q {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify cone membership; exits 1 for non-members.
    Margin {
        input: PathBuf,
        #[arg(long, default_value = "pic")]
        cone: ConeKind,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate dR/dt = Q(R) and write the trajectory.
    Flow {
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        #[arg(long)]
        normalized: bool,
        /// Relative error target per step.
        #[arg(long, default_value_t = 1e-8)]
        rtol: f64,
        /// Number of evenly spaced output samples.
        #[arg(long, default_value_t = 51)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification campaign; exits 0 PASS, 1 FAIL, 3 INCONCLUSIVE.
    Verify(VerifyArgs),
    /// Estimate the cone constants from sampled tensors.
    Constants {
        #[arg(long, default_value = "pic")]
        cone: ConeKind,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        trials: usize,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write sphere and cylinder model tensors into a directory.
    Models {
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    restarts: usize,
}

#[derive(Args)]
struct VerifyArgs {
    campaign: Campaign,
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Defaults to the cone the campaign is stated for (PIC for flow-preservation).
    #[arg(long)]
    cone: Option<ConeKind>,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalized: bool,
    #[arg(long, default_value = "mixed")]
    sampler: Strategy,
    /// Relative tolerance overriding the campaign default.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Include one record per trial.
    #[arg(long)]
    records: bool,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn read_tensor(path: &Path) -> Result<CurvatureTensor> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    tensor_from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: Option<&Path>, body: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(body)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn emit_line(out: Option<&Path>, s: String) -> Result<()> {
    emit(out, (s + "\n").as_bytes())
}

fn search_params(s: &SearchArgs) -> Result<SearchParams> {
    if s.restarts == 0 {
        bail!("--restarts must be >= 1");
    }
    Ok(SearchParams::default()
        .with_restarts(s.restarts)
        .with_seed(s.seed))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Q { input, out } => {
            let r = read_tensor(&input)?;
            emit_line(out.as_deref(), tensor_to_json(&r.q_map()))?;
            Ok(0)
        }
        Command::Margin {
            input,
            cone,
            delta,
            search,
            out,
        } => {
            let r = read_tensor(&input)?;
            let spec = ConeSpec::new(cone, delta)?;
            let cert = margin(&r, spec, &search_params(&search)?);
            emit_line(out.as_deref(), certificate_to_json(&cert))?;
            Ok(if cert.is_member() { 0 } else { 1 })
        }
        Command::Flow {
            input,
            t_end,
            normalized,
            rtol,
            samples,
            format,
            out,
        } => {
            let r = read_tensor(&input)?;
            let opts = FlowOptions {
                rtol,
                samples,
                ..FlowOptions::default().normalized(normalized)
            };
            let traj = flow(&r, t_end, &opts)?;
            match format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_trajectory_csv(&traj, &mut buf)?;
                    emit(out.as_deref(), &buf)?;
                }
                Format::Json => emit_line(out.as_deref(), to_json(&traj))?,
            }
            Ok(0)
        }
        Command::Verify(v) => {
            let cone = v
                .cone
                .or(v.campaign.required_cone())
                .unwrap_or(ConeKind::Pic);
            let config = CampaignConfig {
                n: v.n,
                cone,
                delta: v.delta,
                theta: v.theta,
                trials: v.trials,
                seed: v.search.seed,
                sampler: v.sampler,
                tolerance: v.tolerance,
                restarts: v.search.restarts,
                t_end: v.t_end,
                normalized: v.normalized,
                records: v.records,
            };
            let report = run_campaign(v.campaign, &config)?;
            emit_line(v.out.as_deref(), report.to_json())?;
            eprintln!(
                "{} {}: attempted {}, admitted {}, violated {}",
                v.campaign, report.outcome, report.attempted, report.admitted, report.violated
            );
            Ok(match report.outcome {
                Outcome::Pass => 0,
                Outcome::Fail => 1,
                Outcome::Inconclusive => 3,
            })
        }
        Command::Constants {
            cone,
            n,
            trials,
            search,
            out,
        } => {
            if !(4..=curvlab::tensor::MAX_DIM).contains(&n) {
                bail!("--n must lie in 4..={}", curvlab::tensor::MAX_DIM);
            }
            if trials == 0 {
                bail!("--trials must be >= 1");
            }
            let report = estimate_constants(cone, n, trials, search.seed, &search_params(&search)?);
            emit_line(out.as_deref(), to_json(&report))?;
            Ok(0)
        }
        Command::Models { n, out } => {
            if !(4..=curvlab::tensor::MAX_DIM).contains(&n) {
                bail!("--n must lie in 4..={}", curvlab::tensor::MAX_DIM);
            }
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, r) in [
                ("sphere", CurvatureTensor::identity(n)),
                ("cylinder", CurvatureTensor::cylinder(n, 1.0)),
            ] {
                let path = out.join(format!("{name}{n}.json"));
                fs::write(&path, tensor_to_json(&r) + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match cli.workers {
        Some(0) => {
            eprintln!("error: --workers must be >= 1");
            return ExitCode::from(2);
        }
        Some(w) => rayon::ThreadPoolBuilder::new().num_threads(w).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
