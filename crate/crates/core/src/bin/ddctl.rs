use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddctl::pipeline::{
    bound_set, certificate_dir, check_data, data_dir, discrete_plant, format_report,
    load_collected, load_gains, run_collect, run_pipeline, run_synthesis, run_tracking, run_verify,
    save_certificates, write_trace, BoundMode, PipelineConfig, Status, StepError, StepResult,
    STEP_OUTPUT,
};

#[derive(Parser)]
#[command(
    name = "ddctl",
    version,
    about = "Data-driven decentralized controller design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML file with flat keys; flags below override it
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Synthesis worker threads (0 = all cores)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[arg(long, global = true, value_parser = parse_bounds, value_name = "analytic|estimated")]
    bounds: Option<BoundMode>,
}

fn parse_bounds(s: &str) -> Result<BoundMode, String> {
    s.parse().map_err(|e: ddctl::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Build, excite, synthesize and track in one run
    Pipeline,
    /// Excite the plant and write the data matrices
    Collect,
    /// Synthesize gains from previously collected data
    Synthesize,
    /// Simulate tracking with previously synthesized gains
    Simulate,
    /// Re-check saved certificates and the closed loop
    Verify,
}

fn load_config(common: &Common) -> Result<PipelineConfig, StepError> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path).map_err(|error| StepError {
            step: "reading config",
            error,
        })?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out.clone_from(out);
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    if let Some(bounds) = common.bounds {
        cfg.bounds = bounds;
    }
    Ok(cfg)
}

fn output<T>(r: ddctl::Result<T>) -> StepResult<T> {
    r.map_err(|error| StepError {
        step: STEP_OUTPUT,
        error,
    })
}

fn collect(cfg: &PipelineConfig) -> StepResult<Status> {
    let plant = discrete_plant(cfg)?;
    let col = run_collect(cfg, &plant)?;
    output(ddctl::io::save_data(&data_dir(&cfg.out), &col.data))?;
    let checks = output(check_data(&col.data))?;
    print!(
        "{}",
        format_report(cfg, Some((col.seed, col.attempts)), &checks, &[], None)
    );
    Ok(Status::Success)
}

fn synthesize(cfg: &PipelineConfig) -> StepResult<Status> {
    let plant = discrete_plant(cfg)?;
    let data = load_collected(&data_dir(&cfg.out), &plant)?;
    let bounds = output(bound_set(cfg, &plant, &data))?;
    let certs = run_synthesis(cfg, &bounds, &data)?;
    output(save_certificates(&certificate_dir(&cfg.out), &certs))?;
    let checks = output(check_data(&data))?;
    print!("{}", format_report(cfg, None, &checks, &certs, None));
    Ok(if certs.iter().all(|c| c.is_feasible()) {
        Status::Success
    } else {
        Status::Infeasible
    })
}

fn simulate(cfg: &PipelineConfig) -> StepResult<Status> {
    let plant = discrete_plant(cfg)?;
    let data = load_collected(&data_dir(&cfg.out), &plant)?;
    let bounds = output(bound_set(cfg, &plant, &data))?;
    let (gains, s_blocks) = output(load_gains(&certificate_dir(&cfg.out), plant.len()))?;
    let t = run_tracking(cfg, &plant, &bounds, gains, s_blocks)?;
    output(std::fs::create_dir_all(&cfg.out).map_err(Into::into))?;
    output(write_trace(&cfg.out.join("trace.csv"), &t.trace, &plant))?;
    println!("closed-loop spectral radius = {}", t.closed_loop_radius);
    match t.settling_time {
        Some(s) => println!("all |v_i - v_r| <= 0.5 from t = {s} s"),
        None => println!("velocities did not settle within 0.5"),
    }
    Ok(Status::Success)
}

fn verify(cfg: &PipelineConfig) -> StepResult<Status> {
    let (status, checks) = run_verify(cfg)?;
    for c in &checks {
        println!(
            "{} {}: {}",
            match (c.passed, c.advisory) {
                (true, _) => "PASS",
                (false, true) => "WARN",
                (false, false) => "FAIL",
            },
            c.name,
            c.detail
        );
    }
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.common).and_then(|cfg| match cli.command {
        Command::Pipeline => run_pipeline(&cfg).map(|o| {
            print!("{}", o.report);
            o.status
        }),
        Command::Collect => collect(&cfg),
        Command::Synthesize => synthesize(&cfg),
        Command::Simulate => simulate(&cfg),
        Command::Verify => verify(&cfg),
    });
    let status = match result {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    };
    ExitCode::from(status.code() as u8)
}
