use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vantage::pipeline::{
    export_geometry, load_scene, run_selection, update_after_install, Operation, PipelineConfig,
    RunReport,
};

#[derive(Parser)]
#[command(
    name = "vantage",
    version,
    about = "Plans camera viewpoints for robots supervising construction work"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan supervisor viewpoints for one operation and write the report.
    Plan(PlanArgs),
    /// Load a scene, run every consistency check, and print a summary.
    Validate {
        /// Scene description file.
        #[arg(long)]
        scene: PathBuf,
    },
    /// Mark a target as installed and write the advanced scene.
    Install {
        /// Scene description file.
        #[arg(long)]
        scene: PathBuf,
        /// Build order number of the installed target.
        #[arg(long)]
        target: usize,
        /// Where to write the updated scene.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PlanArgs {
    /// Scene description file.
    #[arg(long)]
    scene: PathBuf,
    /// Which operation of the construction robot to supervise.
    #[arg(long)]
    operation: Operation,
    /// Build order number of the target the operation serves.
    #[arg(long)]
    target: usize,
    /// Planning configuration file; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the report.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Also write inspection geometry (PLY clouds) into this directory.
    #[arg(long)]
    export_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> vantage::Result<ExitCode> {
    match cli.command {
        Command::Validate { scene } => {
            let scene = load_scene(&scene)?;
            println!("{}", scene.describe());
            Ok(ExitCode::SUCCESS)
        }
        Command::Install { scene, target, out } => {
            let mut scene = load_scene(&scene)?;
            let consumed = update_after_install(&mut scene, target)?;
            scene.save(&out)?;
            println!(
                "installed target {target} using material `{consumed}`, scene written to {}",
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan(args) => plan(args),
    }
}

fn plan(args: PlanArgs) -> vantage::Result<ExitCode> {
    let scene = load_scene(&args.scene)?;
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }

    let report = run_selection(&scene, &config, args.operation, args.target)?;
    std::fs::write(&args.out, report.canonical_json())?;
    if let Some(dir) = &args.export_dir {
        export_geometry(&scene, &report, dir)?;
    }

    print_summary(&report);
    println!("report written to {}", args.out.display());
    if let Some(ms) = report.timing_ms {
        eprintln!("planning took {ms} ms");
    }
    if report.outcome.below_threshold {
        eprintln!("warning: no deployment reached the coverage threshold, reporting the best effort");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn print_summary(report: &RunReport) {
    println!(
        "scene `{}`, {} for target {} (`{}`), seed {}",
        report.scene, report.operation, report.target, report.target_name, report.seed
    );
    let f = &report.funnel;
    println!(
        "candidates: {} sampled, {} oriented, {} covering, {} target-covering, {} collision-free",
        f.sampled, f.oriented, f.covering, f.target_covering, f.collision_free
    );
    let o = &report.outcome;
    println!(
        "chosen {} {:?}: coverage {:.3}, mean distance {:.2} m",
        o.kind, o.candidate_ids, o.coverage, o.mean_distance
    );
    if let Some(v) = o.avg_visibility {
        println!("average target visibility {v:.3}");
    }
    for view in &o.views {
        println!(
            "robot {} takes candidate {}: base ({:.2}, {:.2}), yaw {:.2}, camera height {:.2} m, path {:.2} m",
            view.robot,
            view.candidate_id,
            view.base[0],
            view.base[1],
            view.base[2],
            view.camera_position[2],
            view.path_cost
        );
    }
    println!("total travel {:.2} m", report.assignment.total_cost);
}
