use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use wayfind::canonical;
use wayfind::geom::{bearing, FrameId, GeoPose};
use wayfind::guidance::{classify_turn, extract_keypoints, instruction_text, Units};
use wayfind::mapstore::{
    audit, deserialize, export_geojson, import_poi, serialize, Anchor, AnchorId, Direction, MapGraph, PoiConfig,
};
use wayfind::routing::plan_route;
use wayfind::sim::{generate_site, replay_trace, run_simulation, GroundTruth, SimConfig, WalkTrace};

/// Environment variable naming a directory holding `wayfind.json`, used
/// when `--config` is not given.
const CONFIG_DIR_ENV: &str = "WAYFIND_CONFIG_DIR";
const CONFIG_FILE: &str = "wayfind.json";

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
    #[error("invalid map {path}:\n{issues}")]
    InvalidMap { path: String, issues: String },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Failed(_) => 3,
            CliError::InvalidMap { .. } => 4,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "wayfind",
    version,
    about = "Build anchor maps, plan routes and run navigation simulations"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Map file to read (and update, for editing commands).
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    /// Simulation/sensing config; defaults to $WAYFIND_CONFIG_DIR/wayfind.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted (editing commands rewrite --map).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Distance units for spoken instructions.
    #[arg(long, global = true)]
    units: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Create or generate a map.
    #[command(subcommand)]
    Map(MapCommand),
    /// Edit anchors.
    #[command(subcommand)]
    Anchor(AnchorCommand),
    /// Points of interest.
    #[command(subcommand)]
    Poi(PoiCommand),
    /// Replay a walk trace to record a connection.
    Connect {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Plan and describe a route between two anchors.
    Route {
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Run the navigation simulation and print its report.
    Simulate,
    /// Export inspection artifacts.
    #[command(subcommand)]
    Export(ExportCommand),
    /// Audit a map file against the format invariants.
    Validate,
}

#[derive(Subcommand)]
enum MapCommand {
    /// An empty map.
    New,
    /// A synthetic site mapped with simulated sensing.
    Generate,
}

#[derive(Subcommand)]
enum AnchorCommand {
    /// Add an anchor without scanning (its own local frame).
    Add {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "")]
        notes: String,
        #[arg(long, default_value_t = 0.5)]
        quality: f64,
        /// Local frame name; defaults to the new anchor id.
        #[arg(long)]
        frame: Option<String>,
        /// Geographic pose `lat,lon,alt,yaw` making the anchor outdoor.
        #[arg(long)]
        geo: Option<String>,
    },
}

#[derive(Subcommand)]
enum PoiCommand {
    /// Add outdoor anchors from a `name,lat,lon[,alt,yaw]` CSV table.
    Import {
        #[arg(long)]
        table: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExportCommand {
    /// GeoJSON FeatureCollection of anchors and connections.
    Geojson {
        /// `lat,lon` used to place maps without outdoor anchors.
        #[arg(long)]
        origin: Option<String>,
    },
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn emit(common: &Common, text: &str) -> CliResult<()> {
    match &common.out {
        Some(p) => write(p, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn emit_json<T: Serialize>(common: &Common, value: &T) -> CliResult<()> {
    let text = canonical::to_string(value).map_err(|e| CliError::Failed(e.to_string()))?;
    emit(common, &text)
}

fn map_path(common: &Common) -> CliResult<&Path> {
    common
        .map
        .as_deref()
        .ok_or_else(|| CliError::Usage("--map is required".into()))
}

fn load_map(common: &Common) -> CliResult<MapGraph> {
    let path = map_path(common)?;
    let bytes = read(path)?;
    deserialize(&bytes).map_err(|e| {
        let mut issues: Vec<String> = audit(&bytes).iter().map(|i| format!("  {i}")).collect();
        if issues.is_empty() {
            issues.push(format!("  {e}"));
        }
        CliError::InvalidMap {
            path: path.display().to_string(),
            issues: issues.join("\n"),
        }
    })
}

fn save_map(common: &Common, map: &MapGraph) -> CliResult<()> {
    let bytes = serialize(map).map_err(|e| CliError::Failed(e.to_string()))?;
    let target = match (&common.out, &common.map) {
        (Some(p), _) | (None, Some(p)) => p,
        (None, None) => return Err(CliError::Usage("--map or --out is required".into())),
    };
    write(target, &bytes)
}

fn load_config(common: &Common) -> CliResult<SimConfig> {
    let path = match &common.config {
        Some(p) => Some(p.clone()),
        None => std::env::var_os(CONFIG_DIR_ENV)
            .map(|dir| PathBuf::from(dir).join(CONFIG_FILE))
            .filter(|p| p.exists()),
    };
    let mut cfg = match path {
        Some(p) => {
            let bytes = fs::read(&p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            canonical::from_slice::<SimConfig>(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(u) = &common.units {
        cfg.guidance.units = parse_units(u)?;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn parse_units(s: &str) -> CliResult<Units> {
    s.parse()
        .map_err(|e: wayfind::guidance::GuidanceError| CliError::Usage(e.to_string()))
}

fn parse_numbers(s: &str, n: usize, what: &str) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("{what}: expected {n} comma-separated numbers")))?;
    if v.len() != n {
        return Err(CliError::Usage(format!("{what}: expected {n} comma-separated numbers")));
    }
    Ok(v)
}

#[derive(Serialize)]
struct RouteLegOut {
    connection: String,
    direction: Direction,
}

#[derive(Serialize)]
struct RouteReport {
    from: AnchorId,
    to: AnchorId,
    anchors: Vec<AnchorId>,
    legs: Vec<RouteLegOut>,
    length: f64,
    units: Units,
    instructions: Vec<String>,
}

fn route(common: &Common, from: &str, to: &str) -> CliResult<()> {
    let map = load_map(common)?;
    let cfg = load_config(common)?;
    let (from, to) = (AnchorId::new(from), AnchorId::new(to));
    let route = plan_route(&map, &from, &to).map_err(|e| CliError::Failed(e.to_string()))?;
    let units = cfg.guidance.units;
    let mut instructions = Vec::new();
    if route.legs.is_empty() {
        instructions.push(instruction_text(wayfind::guidance::TurnKind::Arrive, 0.0, units));
    } else {
        let keypoints =
            extract_keypoints(&route.polyline, cfg.guidance.epsilon).map_err(|e| CliError::Failed(e.to_string()))?;
        let start = route.start_pose();
        let first = &keypoints[0];
        let turn = bearing(start.xy(), first.position)
            .map(|b| classify_turn(b - start.heading_deg()))
            .unwrap_or(wayfind::guidance::TurnKind::Straight);
        instructions.push(instruction_text(turn, (first.position - start.xy()).norm(), units));
        instructions.extend(
            keypoints
                .iter()
                .map(|k| instruction_text(k.turn, k.distance_to_next, units)),
        );
    }
    let report = RouteReport {
        from,
        to,
        anchors: route.anchor_sequence.clone(),
        legs: route
            .legs
            .iter()
            .map(|l| RouteLegOut {
                connection: l.connection.to_string(),
                direction: l.direction,
            })
            .collect(),
        length: route.total_length,
        units,
        instructions,
    };
    emit_json(common, &report)
}

fn simulate(common: &Common) -> CliResult<()> {
    let cfg = load_config(common)?;
    let (map, truth) = match &common.map {
        Some(_) => {
            let map = load_map(common)?;
            let truth = GroundTruth::from_map(&map, cfg.workflow.path_anchor_spacing);
            (map, truth)
        }
        None => {
            let site = generate_site(cfg.seed, &cfg.generator, &cfg.sensing, &cfg.workflow)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            (site.map, site.truth)
        }
    };
    let report = run_simulation(&map, &truth, &cfg).map_err(|e| CliError::Failed(e.to_string()))?;
    emit_json(common, &report)
}

fn run(cli: Cli) -> CliResult<()> {
    let common = &cli.common;
    match cli.command {
        Command::Map(MapCommand::New) => save_map(common, &MapGraph::new()),
        Command::Map(MapCommand::Generate) => {
            let cfg = load_config(common)?;
            let site = generate_site(cfg.seed, &cfg.generator, &cfg.sensing, &cfg.workflow)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            save_map(common, &site.map)
        }
        Command::Anchor(AnchorCommand::Add {
            name,
            notes,
            quality,
            frame,
            geo,
        }) => {
            let mut map = load_map(common)?;
            let id = map.next_anchor_id();
            let frame = FrameId::new(frame.unwrap_or_else(|| id.to_string()));
            let anchor = match geo {
                Some(g) => {
                    let v = parse_numbers(&g, 4, "--geo")?;
                    let geo = GeoPose::new(v[0], v[1], v[2], v[3]).map_err(|e| CliError::Usage(e.to_string()))?;
                    Anchor::outdoor(id.clone(), frame, geo, quality, name)
                }
                None => Anchor::indoor(id.clone(), frame, quality, name),
            }
            .with_notes(notes);
            map.add_anchor(anchor).map_err(|e| CliError::Usage(e.to_string()))?;
            save_map(common, &map)?;
            println!("{id}");
            Ok(())
        }
        Command::Poi(PoiCommand::Import { table }) => {
            let mut map = load_map(common)?;
            let text = String::from_utf8(read(&table)?)
                .map_err(|_| CliError::Usage(format!("{} is not UTF-8", table.display())))?;
            let anchors = import_poi(&text, &PoiConfig::default(), &map).map_err(|e| CliError::Usage(e.to_string()))?;
            let mut ids = Vec::new();
            for a in anchors {
                ids.push(map.add_anchor(a).map_err(|e| CliError::Failed(e.to_string()))?);
            }
            save_map(common, &map)?;
            for id in ids {
                println!("{id}");
            }
            Ok(())
        }
        Command::Connect { trace } => {
            let mut map = load_map(common)?;
            let cfg = load_config(common)?;
            let trace: WalkTrace = canonical::from_slice(&read(&trace)?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", trace.display())))?;
            let id = replay_trace(&mut map, &trace, &cfg.sensing, &cfg.workflow)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            save_map(common, &map)?;
            println!("{id}");
            Ok(())
        }
        Command::Route { from, to } => route(common, &from, &to),
        Command::Simulate => simulate(common),
        Command::Export(ExportCommand::Geojson { origin }) => {
            let map = load_map(common)?;
            let origin = match origin {
                Some(o) => {
                    let v = parse_numbers(&o, 2, "--origin")?;
                    Some(GeoPose::new(v[0], v[1], 0.0, 0.0).map_err(|e| CliError::Usage(e.to_string()))?)
                }
                None => None,
            };
            let fc = export_geojson(&map, origin.as_ref()).map_err(|e| CliError::Failed(e.to_string()))?;
            let mut text = serde_json::to_string_pretty(&fc).map_err(|e| CliError::Failed(e.to_string()))?;
            text.push('\n');
            emit(common, &text)
        }
        Command::Validate => {
            let path = map_path(common)?;
            let bytes = read(path)?;
            let issues = audit(&bytes);
            if issues.is_empty() {
                println!("ok: {}", path.display());
                Ok(())
            } else {
                Err(CliError::InvalidMap {
                    path: path.display().to_string(),
                    issues: issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"),
                })
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wayfind: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
