//! `neurobs` command-line front end.
//!
//! Exit codes: 0 success / verified, 1 input or schema error, 2 infeasible
//! suspected, 3 solver hit its iteration cap, 4 unobservable or uncontrollable
//! system, 5 simulation blow-up.

mod files;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use neurobs::nn::Activation;
use neurobs::qc::{
    assemble_corollary2, assemble_theorem1, assemble_theorem2, assemble_theorem3, assemble_theorem4, LmiInstance,
};
use neurobs::sdp::{solve_with, verify_certificate, SolverOptions, Status};
use neurobs::sim::{epsilon_sweep, load_scenario, metrics, simulate};
use neurobs::synthesis::{
    observability_rank, synthesize_chain, synthesize_chain_shared, synthesize_mimo, synthesize_observer,
    synthesize_output_feedback, Architecture, SynthesisOptions, RANK_TOL,
};
use serde::Serialize;

use files::{read_json, write_json, InputError, ManifestClock, NetBundle, SystemFile};

#[derive(Parser)]
#[command(name = "neurobs", version, about = "Certify, synthesize and simulate neural-network observers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum Theorem {
    /// LTI observer
    #[value(name = "1")]
    T1,
    /// Observer plus controller
    #[value(name = "2")]
    T2,
    /// Integrator-chain observer, one net per state
    #[value(name = "3")]
    T3,
    /// Integrator-chain observer, one shared net
    #[value(name = "3c")]
    T3c,
    /// MIMO extended-state observer
    #[value(name = "4")]
    T4,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the LMI for given nets, solve it and verify the certificate.
    Verify {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        nn: PathBuf,
        #[arg(long, value_enum)]
        theorem: Theorem,
        /// Strictness margin relative to the instance scale.
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize certified nets for a system.
    Synthesize {
        #[arg(long)]
        system: PathBuf,
        /// `L,w1,...,wL,activation`, e.g. `2,3,2,tanh` or `3,3,3,3,leaky_relu:0.01`.
        #[arg(long)]
        arch: String,
        /// Architecture of the second net (controller pair or MIMO); defaults to `--arch`.
        #[arg(long)]
        arch2: Option<String>,
        #[arg(long, value_enum, default_value = "1")]
        theorem: Theorem,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bass shift for the injection gains.
        #[arg(long)]
        shift: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a scenario and write the trace, metrics and manifest.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics window `t0,t1`; defaults to the whole run.
        #[arg(long, value_delimiter = ',')]
        window: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a chain or MIMO scenario over several ε gains.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
        eps: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize certificates, metrics and sweeps found in a run directory.
    Report { run: PathBuf },
}

pub fn parse_arch(spec: &str) -> Result<Architecture> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() < 3 {
        bail!(InputError(format!("architecture `{spec}` needs `L,w1,...,wL,activation`")));
    }
    let layers: usize = parts[0].parse().map_err(|_| InputError(format!("bad layer count `{}`", parts[0])))?;
    let widths = parts[1..parts.len() - 1]
        .iter()
        .map(|w| w.parse::<usize>().map_err(|_| InputError(format!("bad width `{w}`"))))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if widths.len() != layers {
        bail!(InputError(format!("{layers} hidden layers declared but {} widths given", widths.len())));
    }
    let act = parse_activation(parts[parts.len() - 1])?;
    Ok(Architecture::new(widths, act).map_err(|e| InputError(e.to_string()))?)
}

fn parse_activation(s: &str) -> Result<Activation> {
    let mut it = s.split(':');
    let name = it.next().unwrap_or_default();
    let nums = it
        .map(|v| v.parse::<f64>().map_err(|_| InputError(format!("bad activation parameter `{v}`"))))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let act = match (name, nums.as_slice()) {
        ("relu", []) => Activation::Relu,
        ("tanh", []) => Activation::Tanh,
        ("leaky_relu", [a]) => Activation::LeakyRelu { slope: *a },
        ("leaky_relu", []) => Activation::LeakyRelu { slope: 0.01 },
        ("fal", [g, d]) => Activation::Fal { gamma: *g, delta: *d },
        _ => bail!(InputError(format!("unknown activation `{s}`"))),
    };
    act.validate().map_err(|e| InputError(e.to_string()))?;
    Ok(act)
}

fn assemble(theorem: Theorem, sys: &SystemFile, bundle: &NetBundle) -> Result<LmiInstance> {
    let nets = bundle.nets();
    let want = |k: usize| -> Result<()> {
        if nets.len() != k {
            bail!(InputError(format!("theorem {theorem:?} needs {k} net(s), file has {}", nets.len())));
        }
        Ok(())
    };
    let inst = match theorem {
        Theorem::T1 => {
            want(1)?;
            assemble_theorem1(&sys.matrix("A")?, &sys.matrix("C")?, nets[0])
        }
        Theorem::T2 => {
            want(2)?;
            assemble_theorem2(&sys.matrix("A")?, &sys.matrix("B")?, &sys.matrix("C")?, nets[0], nets[1])
        }
        Theorem::T3 => {
            let n = sys.order()?;
            want(n + 1)?;
            assemble_theorem3(n, &nets)
        }
        Theorem::T3c => {
            want(1)?;
            let gains = bundle.gains().ok_or_else(|| InputError("shared-net file needs `gains`".into()))?;
            assemble_corollary2(sys.order()?, nets[0], &gains)
        }
        Theorem::T4 => {
            want(2)?;
            assemble_theorem4(&sys.matrix("A")?, &sys.matrix("B_w")?, &sys.matrix("C")?, sys.eps()?, nets[0], nets[1])
        }
    };
    Ok(inst.map_err(|e| InputError(e.to_string()))?)
}

#[derive(Serialize)]
struct CertificateFile<'a> {
    theorem: Theorem,
    status: Status,
    verified: bool,
    margin_rel: Option<f64>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    certificate: &'a neurobs::sdp::Certificate,
    verification: &'a neurobs::sdp::VerificationReport,
}

fn cmd_verify(
    system: &Path,
    nn: &Path,
    theorem: Theorem,
    margin: Option<f64>,
    max_iter: usize,
    out: &Path,
) -> Result<ExitCode> {
    let clock = ManifestClock::start();
    let sys: SystemFile = read_json(system)?;
    let bundle: NetBundle = read_json(nn)?;
    let mut inst = assemble(theorem, &sys, &bundle)?;
    if let Some(m) = margin {
        if !(m >= 0.0) {
            bail!(InputError("--margin must be non-negative".into()));
        }
        inst = inst.with_margin_rel(m);
    }
    let cert = solve_with(&inst, &SolverOptions { max_iter, ..SolverOptions::default() });
    let report = verify_certificate(&inst, &cert);
    let (p, lambda) = inst.unpack(&cert.y)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(
        &out.join("certificate.json"),
        &CertificateFile {
            theorem,
            status: cert.status,
            verified: cert.status == Status::Feasible && report.pass,
            margin_rel: margin,
            p: neurobs::linalg::to_rows(&p),
            lambda: lambda.iter().copied().collect(),
            certificate: &cert,
            verification: &report,
        },
    )?;
    write_json(&out.join("manifest-verify.json"), &clock.finish("verify", &[system, nn], None, out))?;
    println!("status: {:?}, verified: {}", cert.status, report.pass);
    Ok(ExitCode::from(match cert.status {
        Status::Feasible if report.pass => 0,
        Status::Feasible | Status::MaxIter => 3,
        Status::InfeasibleSuspected => 2,
    }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_synthesize(
    system: &Path,
    arch: &str,
    arch2: Option<&str>,
    theorem: Theorem,
    seed: u64,
    shift: Option<f64>,
    out: &Path,
) -> Result<ExitCode> {
    let clock = ManifestClock::start();
    let sys: SystemFile = read_json(system)?;
    let arch1 = parse_arch(arch)?;
    let arch2 = match arch2 {
        Some(s) => parse_arch(s)?,
        None => arch1.clone(),
    };
    let opts = SynthesisOptions { shift, ..Default::default() };
    let result = match theorem {
        Theorem::T1 => {
            let (a, c) = (sys.matrix("A")?, sys.matrix("C")?);
            synthesize_observer(&a, &c, &arch1, seed, &opts)
                .map(|s| NetBundle::One(s.nets.into_iter().next().expect("one net")))
        }
        Theorem::T2 => synthesize_output_feedback(
            &sys.matrix("A")?,
            &sys.matrix("B")?,
            &sys.matrix("C")?,
            &arch1,
            &arch2,
            seed,
            &opts,
        )
        .map(|s| NetBundle::Many { nets: s.nets, gains: None }),
        Theorem::T3 => synthesize_chain(sys.order()?, &arch1, seed, &opts).map(|s| NetBundle::Many { nets: s.nets, gains: None }),
        Theorem::T3c => synthesize_chain_shared(sys.order()?, &arch1, seed, &opts)
            .map(|(s, b)| NetBundle::Many { nets: s.nets, gains: Some(b.iter().copied().collect()) }),
        Theorem::T4 => synthesize_mimo(
            &sys.matrix("A")?,
            &sys.matrix("B_w")?,
            &sys.matrix("C")?,
            sys.eps()?,
            &arch1,
            &arch2,
            seed,
            &opts,
        )
        .map(|s| NetBundle::Many { nets: s.nets, gains: None }),
    };
    let bundle = match result {
        Ok(b) => b,
        Err(e @ (neurobs::Error::Unobservable { .. } | neurobs::Error::Uncontrollable { .. })) => {
            eprintln!("error: {e}");
            if let (Ok(a), Ok(c)) = (sys.matrix("A"), sys.matrix("C")) {
                eprintln!("observability rank: {} of {}", observability_rank(&c, &a, RANK_TOL), a.nrows());
            }
            return Ok(ExitCode::from(4));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_json(out, &bundle)?;
    let mut manifest_path = out.as_os_str().to_owned();
    manifest_path.push(".manifest.json");
    write_json(Path::new(&manifest_path), &clock.finish("synthesize", &[system], Some(seed), out))?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn load_scenario_file(path: &Path) -> Result<neurobs::sim::Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    // Surface line and column for syntax errors before schema expansion.
    let _: serde_json::Value = files::parse_json(&text, path)?;
    Ok(load_scenario(&text).map_err(|e| InputError(format!("{}: {e}", path.display())))?)
}

fn cmd_simulate(scenario: &Path, seed: Option<u64>, window: Option<Vec<f64>>, out: &Path) -> Result<ExitCode> {
    let clock = ManifestClock::start();
    let mut sc = load_scenario_file(scenario)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let tr = simulate(&sc)?;
    std::fs::create_dir_all(out)?;
    let file = std::fs::File::create(out.join("trace.csv"))?;
    tr.write_csv(std::io::BufWriter::new(file))?;
    let win = match window.as_deref() {
        None => None,
        Some(&[t0, t1]) if t0 < t1 => Some([t0, t1]),
        Some(_) => bail!(InputError("--window needs `t0,t1` with t0 < t1".into())),
    };
    let ms = (0..tr.observers.len())
        .map(|k| metrics(&tr, k, win))
        .collect::<neurobs::Result<Vec<_>>>()
        .map_err(|e| InputError(e.to_string()))?;
    #[derive(Serialize)]
    struct MetricsFile<'a> {
        scenario: &'a str,
        seed: u64,
        failure: &'a Option<String>,
        observers: Vec<neurobs::sim::Metrics>,
    }
    write_json(&out.join("metrics.json"), &MetricsFile { scenario: &sc.name, seed: sc.seed, failure: &tr.failure, observers: ms })?;
    write_json(&out.join("manifest-simulate.json"), &clock.finish("simulate", &[scenario], Some(sc.seed), out))?;
    if let Some(f) = &tr.failure {
        eprintln!("run stopped early: {f}");
        return Ok(ExitCode::from(5));
    }
    println!("wrote {} samples to {}", tr.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn sweep_threads() -> usize {
    std::env::var("NEUROBS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn cmd_sweep(scenario: &Path, eps: &[f64], out: &Path) -> Result<ExitCode> {
    let clock = ManifestClock::start();
    let sc = load_scenario_file(scenario)?;
    let table = epsilon_sweep(&sc, eps, sweep_threads()).map_err(|e| InputError(e.to_string()))?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("sweep.csv"), table.to_csv())?;
    write_json(&out.join("sweep.json"), &table)?;
    write_json(&out.join("manifest-sweep.json"), &clock.finish("sweep", &[scenario], Some(sc.seed), out))?;
    if table.rows.iter().any(|r| r.failure.is_some()) {
        eprintln!("at least one ε level blew up");
        return Ok(ExitCode::from(5));
    }
    print!("{}", table.to_csv());
    Ok(ExitCode::SUCCESS)
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<InputError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<neurobs::Error>() {
        Some(neurobs::Error::Unobservable { .. } | neurobs::Error::Uncontrollable { .. }) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    // Usage errors share exit code 1 with other input errors; 2 is reserved.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Verify { system, nn, theorem, margin, max_iter, out } => {
            cmd_verify(&system, &nn, theorem, margin, max_iter, &out)
        }
        Command::Synthesize { system, arch, arch2, theorem, seed, shift, out } => {
            cmd_synthesize(&system, &arch, arch2.as_deref(), theorem, seed, shift, &out)
        }
        Command::Simulate { scenario, seed, window, out } => cmd_simulate(&scenario, seed, window, &out),
        Command::Sweep { scenario, eps, out } => cmd_sweep(&scenario, &eps, &out),
        Command::Report { run } => report::cmd_report(&run),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
