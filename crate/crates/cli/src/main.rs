use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affloc_core::framework::{verify_affine_localizability, NodeId, NominalFramework, VerificationReport};
use affloc_core::geometry::{Point, Tolerances};
use affloc_core::lcc::{DeliveryOrder, LccEvent, LccNetwork};
use affloc_core::reconfig::{
    euc_construct, fia_add, foa_remove, random_euc, unit_in_table, AttachmentSpec, RandomEucOptions, ReconfigError,
};
use affloc_core::simulator::{self, render_svg, write_outputs, EventAction, Scenario, SimError};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "affloc", version, about = "Affine formation frameworks: build, verify, reconfigure, simulate")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Relative rank threshold.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol_rank: f64,
    /// Residual threshold.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol_res: f64,
    /// Output location (file or directory depending on the command).
    #[arg(long, global = true, env = "AFFLOC_OUT_DIR")]
    out: Option<PathBuf>,
    /// Seed for random construction and shuffled packet delivery.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check that a framework is affinely localizable.
    Verify { framework: PathBuf },
    /// Build a framework from equilibrium units, either from a build file or at random.
    Construct {
        build: Option<PathBuf>,
        /// Total number of nodes of a random framework.
        #[arg(long, conflicts_with = "build")]
        random: Option<usize>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Apply one add or remove event, both centrally and through packet exchange.
    Reconfigure { framework: PathBuf, event: PathBuf },
    /// Tune or check controller gains for a scenario or a bare framework.
    Gains {
        input: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 2)]
        order: usize,
    },
    /// Run a scenario and write its artifacts.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        smsi: Option<f64>,
    },
    /// Redraw SVG plots from the CSV files of a previous run.
    ExportPlots { dir: PathBuf },
}

/// Failure with its exit code: 1 for domain failures, 2 for bad input.
struct Fail(u8, String);

fn input(msg: impl ToString) -> Fail {
    Fail(2, msg.to_string())
}

fn domain(msg: impl ToString) -> Fail {
    Fail(1, msg.to_string())
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_framework(path: &Path) -> Result<NominalFramework, Fail> {
    NominalFramework::from_json(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn write_file(path: &Path, body: &str) -> Result<(), Fail> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, body).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), Fail> {
    match out {
        Some(p) => write_file(p, body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn reconfig_fail(e: ReconfigError) -> Fail {
    match e {
        ReconfigError::Framework(_) => input(e),
        _ => domain(e),
    }
}

fn sim_fail(e: SimError) -> Fail {
    match e {
        SimError::Scenario(_) | SimError::Framework(_) | SimError::Io(_) => input(e),
        _ => domain(e),
    }
}

fn report_outcome(report: &VerificationReport) -> Result<(), Fail> {
    if report.pass {
        Ok(())
    } else {
        Err(domain(format!("verification failed: {}", report.notes.join("; "))))
    }
}

fn verify(tol: &Tolerances, common: &Common, path: &Path) -> Result<(), Fail> {
    let fw = load_framework(path)?;
    let report = verify_affine_localizability(&fw, tol);
    emit(common.out.as_deref(), &pretty(&report))?;
    report_outcome(&report)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LeaderDoc {
    id: NodeId,
    position: Point,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildDoc {
    dim: usize,
    leaders: Vec<LeaderDoc>,
    attachments: Vec<AttachmentSpec>,
}

fn construct(
    tol: &Tolerances,
    common: &Common,
    build: Option<&Path>,
    random: Option<usize>,
    dim: usize,
) -> Result<(), Fail> {
    let fw = match (build, random) {
        (Some(path), _) => {
            let doc: BuildDoc =
                serde_json::from_str(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))?;
            let leaders = doc.leaders.into_iter().map(|l| (l.id, l.position)).collect();
            euc_construct(doc.dim, leaders, &doc.attachments, tol).map_err(reconfig_fail)?
        }
        (None, Some(total)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed.unwrap_or(0));
            random_euc(&mut rng, dim, total, &RandomEucOptions::default(), tol).map_err(reconfig_fail)?.0
        }
        (None, None) => return Err(input("give a build file or --random N")),
    };
    emit(common.out.as_deref(), &(fw.to_json() + "\n"))?;
    report_outcome(&verify_affine_localizability(&fw, tol))
}

#[derive(Serialize)]
struct ReconfigSummary {
    inheritance_path: Option<Vec<NodeId>>,
    messages: usize,
    participants: Vec<NodeId>,
    tables_match: bool,
    verification: VerificationReport,
}

fn reconfigure(tol: &Tolerances, common: &Common, fw_path: &Path, ev_path: &Path) -> Result<(), Fail> {
    let fw = load_framework(fw_path)?;
    let action: EventAction =
        serde_json::from_str(&read(ev_path)?).map_err(|e| input(format!("{}: {e}", ev_path.display())))?;
    let (next, path, event) = match &action {
        EventAction::Remove { node, tie_break } => {
            let (next, path) = foa_remove(&fw, *node, *tie_break).map_err(reconfig_fail)?;
            (next, Some(path.chain), LccEvent::Remove { node: *node, tie_break: *tie_break })
        }
        EventAction::Add { node, position, in_neighbors, .. } => {
            let spec = AttachmentSpec { node: *node, position: position.clone(), in_neighbors: in_neighbors.clone() };
            let in_table = unit_in_table(&fw, &spec, tol).map_err(reconfig_fail)?;
            (fia_add(&fw, &spec, tol).map_err(reconfig_fail)?, None, LccEvent::Add { node: *node, in_table })
        }
    };
    let order = common.seed.map_or(DeliveryOrder::Synchronous, |seed| DeliveryOrder::Shuffled { seed });
    let mut net = LccNetwork::from_framework(&fw);
    let log = net.run_lcc(&event, order).map_err(domain)?;
    let tables_match = net.check_consistency().and_then(|_| net.matches(&next)).is_ok();
    let summary = ReconfigSummary {
        inheritance_path: path,
        messages: log.len(),
        participants: log.participants().into_iter().collect(),
        tables_match,
        verification: verify_affine_localizability(&next, tol),
    };
    match common.out.as_deref() {
        Some(dir) => {
            write_file(&dir.join("framework.json"), &(next.to_json() + "\n"))?;
            write_file(&dir.join("messages.jsonl"), &log.to_jsonl())?;
            write_file(&dir.join("report.json"), &pretty(&summary))?;
        }
        None => print!("{}", pretty(&summary)),
    }
    if !tables_match {
        return Err(domain("tables rebuilt from packets disagree with the central result"));
    }
    report_outcome(&summary.verification)
}

fn load_scenario(text: &str, order: usize) -> Result<Scenario, Fail> {
    match Scenario::from_json(text) {
        Ok(sc) => Ok(sc),
        Err(scenario_err) => {
            let fw = NominalFramework::from_json(text).map_err(|_| input(scenario_err))?;
            Ok(Scenario {
                framework: (&fw).into(),
                order,
                gains: None,
                maneuver: simulator::ManeuverSchedule::stationary(),
                smsi: None,
                dt: 0.01,
                horizon: 0.0,
                events: Vec::new(),
                initial_offsets: Default::default(),
                shuffle_seed: None,
                sample_every: 10,
            })
        }
    }
}

fn gains(tol: &Tolerances, common: &Common, path: &Path, dt: Option<f64>, order: usize) -> Result<(), Fail> {
    let mut sc = load_scenario(&read(path)?, order)?;
    if let Some(dt) = dt {
        sc.dt = dt;
    }
    let report = simulator::scenario_gains(&sc, tol).map_err(sim_fail)?;
    emit(common.out.as_deref(), &pretty(&report))?;
    if report.pass {
        Ok(())
    } else {
        Err(domain("gain conditions fail on at least one epoch"))
    }
}

fn simulate(tol: &Tolerances, common: &Common, path: &Path, dt: Option<f64>, smsi: Option<f64>) -> Result<(), Fail> {
    let mut sc = Scenario::from_json(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))?;
    if let Some(dt) = dt {
        sc.dt = dt;
    }
    if smsi.is_some() {
        sc.smsi = smsi;
    }
    if let Some(seed) = common.seed {
        sc.shuffle_seed = Some(seed);
    }
    let res = simulator::run(&sc, tol).map_err(sim_fail)?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("affloc-out"));
    write_outputs(&res, &dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
    let fits = simulator::interval_fits(&res);
    for f in &fits {
        println!(
            "interval [{}, {}): slope {:.4} r2 {:.4} terminal {:.3e}",
            f.start, f.end, f.slope, f.r_squared, f.terminal_max
        );
    }
    println!("flow bound held at {:.3}% of checked instants", 100.0 * res.flow.fraction());
    println!("outputs in {}", dir.display());
    if res.warnings.is_empty() {
        return Ok(());
    }
    for e in res.gain_report.epochs.iter() {
        eprintln!("{}", serde_json::to_string(e).expect("serializable"));
    }
    Err(domain(res.warnings.join("; ")))
}

#[derive(Deserialize)]
struct EpochStart {
    start: f64,
}

fn export_plots(dir: &Path) -> Result<(), Fail> {
    let epochs_path = dir.join("epochs.json");
    let boundaries: Vec<f64> = if epochs_path.exists() {
        let epochs: Vec<EpochStart> = serde_json::from_str(&read(&epochs_path)?)
            .map_err(|e| input(format!("{}: {e}", epochs_path.display())))?;
        epochs.iter().skip(1).map(|e| e.start).collect()
    } else {
        Vec::new()
    };
    for p in render_svg(dir, &boundaries).map_err(|e| input(format!("{}: {e}", dir.display())))? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let c = &cli.common;
    let tol = Tolerances { rank: c.tol_rank, res: c.tol_res, ..Tolerances::default() };
    let outcome = match &cli.cmd {
        Cmd::Verify { framework } => verify(&tol, c, framework),
        Cmd::Construct { build, random, dim } => construct(&tol, c, build.as_deref(), *random, *dim),
        Cmd::Reconfigure { framework, event } => reconfigure(&tol, c, framework, event),
        Cmd::Gains { input, dt, order } => gains(&tol, c, input, *dt, *order),
        Cmd::Simulate { scenario, dt, smsi } => simulate(&tol, c, scenario, *dt, *smsi),
        Cmd::ExportPlots { dir } => export_plots(dir),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("affloc: {msg}");
            ExitCode::from(code)
        }
    }
}
