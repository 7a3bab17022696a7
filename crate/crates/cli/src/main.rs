use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mapifi::alternator::solve_map;
use mapifi::evalmap::{evaluate, export_map, MapFormat};
use mapifi::formats;
use mapifi::ingest::ingest_pcap;
use mapifi::synth::{forward_rssi, generate_scenario, WalkSpec};
use mapifi::{aggregate, to_ranges, BoundingBox, Error, PathLossParams, Point3, SolveConfig};

#[derive(Parser)]
#[command(name = "mapifi", version, about = "Map Wi-Fi devices from RSSI captured along a walk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic home and the packets a walk through it would capture.
    Simulate(SimulateArgs),
    /// Extract per-packet RSSI from a radiotap pcap using anchor markers.
    Ingest(IngestArgs),
    /// Localize anchors and devices from measurements.
    Solve(SolveArgs),
    /// Compare a solved map against the scenario it was simulated from.
    Eval(EvalArgs),
    /// Render a map as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Room box as x0,y0,z0,x1,y1,z1.
    #[arg(long, default_value = "0,0,0,10,8,3")]
    bbox: String,
    #[arg(long, default_value_t = 6)]
    devices: usize,
    #[arg(long, default_value_t = 40)]
    anchors: usize,
    #[arg(long, default_value_t = 5)]
    waypoints: usize,
    #[arg(long = "noise-db", default_value_t = 0.0)]
    noise_db: f64,
    /// Packets per (anchor, device) pair.
    #[arg(long, default_value_t = 10)]
    packets: usize,
    /// Probability that a pair is never heard.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long = "gain-min", default_value_t = 0.5)]
    gain_min: f64,
    #[arg(long = "gain-max", default_value_t = 2.0)]
    gain_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenario (ground truth) output.
    #[arg(long)]
    out: PathBuf,
    /// Packet JSONL output.
    #[arg(long)]
    measurements: PathBuf,
    /// Optional anchor marker JSONL output.
    #[arg(long)]
    markers: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    pcap: PathBuf,
    #[arg(long)]
    markers: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long = "tx-dbm", default_value_t = -50.0, allow_negative_numbers = true)]
    tx_dbm: f64,
    #[arg(long, default_value_t = 2.5)]
    gamma: f64,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional box as x0,y0,z0,x1,y1,z1; disables normalization.
    #[arg(long)]
    bbox: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Disallow mirror-image alignment.
    #[arg(long)]
    no_reflection: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, code) = match &e {
            Error::InsufficientData { .. } => ("insufficient data", 2),
            Error::Schema(_) => ("schema violation", 1),
            Error::Parse(_) => ("parse error", 1),
            Error::DegenerateConfiguration(_) => ("degenerate configuration", 1),
            _ => ("invalid input", 1),
        };
        Failure {
            kind,
            message: e.to_string(),
            code,
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        kind: "io error",
        message: format!("{}: {e}", path.display()),
        code: 1,
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn parse_bbox(text: &str) -> Result<BoundingBox, Failure> {
    let bad = |message: String| Failure {
        kind: "invalid argument",
        message,
        code: 1,
    };
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| bad(format!("--bbox {text:?}: {e}")))?;
    if v.len() != 6 {
        return Err(bad(format!("--bbox needs 6 comma-separated numbers, got {}", v.len())));
    }
    Ok(BoundingBox::new(
        Point3::new(v[0], v[1], v[2]),
        Point3::new(v[3], v[4], v[5]),
    )?)
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let bbox = parse_bbox(&args.bbox)?;
    let walk = WalkSpec {
        n_anchors: args.anchors,
        n_waypoints: args.waypoints,
        seed: args.seed,
        ..WalkSpec::default()
    };
    let scenario = generate_scenario(bbox, args.devices, &walk, (args.gain_min, args.gain_max), args.seed)?;
    let capture = forward_rssi(&scenario, args.noise_db, args.packets, args.dropout, args.seed)?;
    write_file(&args.out, formats::scenario_to_json(&scenario))?;
    write_file(&args.measurements, formats::packets_to_jsonl(&capture.packets))?;
    if let Some(path) = &args.markers {
        write_file(path, formats::markers_to_jsonl(&scenario.markers(args.packets)))?;
    }
    eprintln!(
        "simulate: seed={} devices={} anchors={} packets={} floored_pairs={}",
        args.seed,
        scenario.devices.len(),
        scenario.anchors.len(),
        capture.packets.len(),
        capture.floored_pairs
    );
    Ok(())
}

fn ingest(args: IngestArgs) -> Result<(), Failure> {
    let bytes = fs::read(&args.pcap).map_err(|e| io_failure(&args.pcap, e))?;
    let markers = formats::parse_markers_jsonl(&read_text(&args.markers)?)?;
    let output = ingest_pcap(&bytes, &markers).map_err(Error::from)?;
    write_file(&args.out, formats::packets_to_jsonl(&output.packets))?;
    let d = &output.diagnostics;
    eprintln!(
        "ingest: records={} accepted={} malformed={} no_signal={} no_transmitter={} outside_markers={}",
        d.records, d.accepted, d.malformed, d.no_signal, d.no_transmitter, d.outside_markers
    );
    Ok(())
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    let params = PathLossParams::new(args.tx_dbm, args.gamma)?;
    let packets = formats::parse_packets_jsonl(&read_text(&args.measurements)?)?;
    let ranges = to_ranges(&aggregate(&packets)?, &params)?;
    let mut config = SolveConfig {
        max_iters: args.iters,
        restarts: args.restarts,
        rng_seed: args.seed,
        ..SolveConfig::default()
    };
    if let Some(text) = &args.bbox {
        config = config.with_bbox(parse_bbox(text)?);
    }
    let solution = solve_map(&ranges, &config)?;
    write_file(&args.out, export_map(&solution, MapFormat::Json))?;
    eprintln!(
        "solve: seed={} restart={} iterations={} residual={:e}",
        solution.seed, solution.restart_index, solution.iterations_used, solution.residual
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let solution = formats::map_from_json(&read_text(&args.map)?)?;
    let scenario = formats::scenario_from_json(&read_text(&args.scenario)?)?;
    let report = evaluate(&solution, &scenario, !args.no_reflection)?;
    write_file(&args.out, formats::report_to_json(&report))?;
    eprintln!(
        "eval: device_rmse={:.4} fraction={:.4} diameter={:.4}",
        report.aligned_device_rmse, report.device_rmse_fraction, report.scene_diameter
    );
    Ok(())
}

fn plot(args: PlotArgs) -> Result<(), Failure> {
    let solution = formats::map_from_json(&read_text(&args.map)?)?;
    write_file(&args.out, export_map(&solution, MapFormat::Svg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Ingest(a) => ingest(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = serde_json::json!({ "error": f.kind, "message": f.message });
            eprintln!("{line}");
            ExitCode::from(f.code)
        }
    }
}
