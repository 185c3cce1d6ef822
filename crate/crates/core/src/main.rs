use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use topocam::adjacency::build_primary_arcs;
use topocam::curvature::write_curvature_csv;
use topocam::export::{final_graph_json, macro_dot, primary_dot, FeatureTable, SCHEMA_VERSION};
use topocam::fixtures;
use topocam::macro_id::{Advance, DecisionInput, IdentifyError};
use topocam::mesh::{prepare_stl, write_stl_binary, MeshError};
use topocam::segmentation::{MachiningSetup, SetupError};
use topocam::server::parse_axis;
use topocam::session::{Session, SessionConfig, SessionError, SessionStore};

#[derive(Parser)]
#[command(name = "topocam", version, about = "Machining features and topological relations from STL parts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SetupArgs {
    /// Tool axis as x,y,z.
    #[arg(long, default_value = "0,0,1")]
    tool_axis: String,
    /// Largest normal-to-axis angle of a bottom face, in degrees.
    #[arg(long, default_value_t = 30.0)]
    theta_bottom: f64,
    /// Smallest normal-to-axis angle of a flank face, in degrees.
    #[arg(long, default_value_t = 60.0)]
    theta_flank: f64,
    /// Vertex weld distance; defaults to 1e-5 of the bounding-box diagonal.
    #[arg(long)]
    weld_tol: Option<f64>,
    /// Same-class regions below this many faces join a neighbor.
    #[arg(long, default_value_t = topocam::segmentation::DEFAULT_MIN_FEATURE_FACES)]
    min_feature_faces: usize,
}

impl SetupArgs {
    fn config(&self) -> Result<SessionConfig, CliError> {
        let axis = parse_axis(&self.tool_axis).map_err(CliError::Usage)?;
        let setup = MachiningSetup::new(axis, self.theta_bottom, self.theta_flank)?;
        Ok(SessionConfig { setup, weld_tol: self.weld_tol, min_feature_faces: self.min_feature_faces, ..SessionConfig::default() })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Classify faces and write the feature table.
    Segment {
        input: PathBuf,
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Per-vertex K, H and shape type.
        #[arg(long)]
        curvature_csv: Option<PathBuf>,
    },
    /// Build the primary adjacency graph.
    Graph {
        input: PathBuf,
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Identify macro-features and their relations.
    Identify {
        input: PathBuf,
        #[command(flatten)]
        setup: SetupArgs,
        /// JSON list of decisions, consumed in order.
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Serve the session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Write the final graph of a stored session.
    Export {
        session: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Write a built-in test part as binary STL.
    Fixture {
        /// pocket, stepped, die or random:<seed>.
        name: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the decision answering the die's query.
        #[arg(long)]
        decisions: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{count} pending quer(y/ies); session saved to {path}")]
    Pending { count: usize, path: PathBuf },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Session(SessionError::Io { .. }) => 1,
            CliError::Pending { .. } => 3,
            _ => 2,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_out(path: Option<&Path>, text: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io { path: p.to_path_buf(), source }),
        None => io::stdout().write_all(text).map_err(|source| CliError::Io { path: PathBuf::from("<stdout>"), source }),
    }
}

fn pretty(v: &impl serde::Serialize) -> Vec<u8> {
    let mut text = serde_json::to_vec_pretty(v).expect("serializable");
    text.push(b'\n');
    text
}

fn session_from(input: &Path, setup: &SetupArgs) -> Result<Session, CliError> {
    let config = setup.config()?;
    let bytes = read(input)?;
    let id = input.file_stem().and_then(|s| s.to_str()).unwrap_or("part").chars().filter(|c| c.is_ascii_alphanumeric() || *c == '-' || *c == '_').collect::<String>();
    let id = if id.is_empty() { "part".to_string() } else { id };
    Ok(Session::from_stl(format!("{id}-{}", uuid::Uuid::new_v4().simple()), &bytes, config)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Segment { input, setup, output, curvature_csv } => {
            let config = setup.config()?;
            let (mesh, summary) = prepare_stl(&read(&input)?, config.weld_tol)?;
            log::info!("{} vertices, {} faces after welding", summary.vertices, summary.faces);
            let id = topocam::macro_id::Identifier::new(mesh, config.setup, config.options());
            let seg = id.segment();
            if let Some(path) = curvature_csv {
                let mut buf = Vec::new();
                write_curvature_csv(&id.curvatures, id.thresholds, &mut buf).map_err(|source| CliError::Io { path: path.clone(), source })?;
                write_out(Some(&path), &buf)?;
            }
            write_out(output.as_deref(), &pretty(&FeatureTable::new(&seg.features)))
        }
        Command::Graph { input, setup, output, dot } => {
            let config = setup.config()?;
            let (mesh, _) = prepare_stl(&read(&input)?, config.weld_tol)?;
            let id = topocam::macro_id::Identifier::new(mesh, config.setup, config.options());
            let mut features = id.segment().features;
            let arcs = build_primary_arcs(&mut features, &id.mesh, &id.setup, &id.curvatures, id.thresholds, id.options.graph);
            if let Some(path) = dot {
                write_out(Some(&path), primary_dot(&features, &arcs).as_bytes())?;
            }
            let body = serde_json::json!({ "schema_version": SCHEMA_VERSION, "features": features, "arcs": arcs });
            write_out(output.as_deref(), &pretty(&body))
        }
        Command::Identify { input, setup, decisions, output, dot } => {
            let mut session = session_from(&input, &setup)?;
            let mut queue: Vec<DecisionInput> = match &decisions {
                Some(p) => serde_json::from_slice(&read(p)?).map_err(|source| CliError::Json { path: p.clone(), source })?,
                None => Vec::new(),
            };
            queue.reverse();
            loop {
                match session.advance()? {
                    Advance::Finalized => break,
                    Advance::AwaitingDecision(q) => match queue.pop() {
                        Some(d) => session.decide(d)?,
                        None => {
                            let path = SessionStore::from_env().save(&session)?;
                            for query in &q {
                                eprintln!("{}: {} links {:?}", query.id, query.transition, query.linked.iter().map(|f| f.to_string()).collect::<Vec<_>>());
                            }
                            return Err(CliError::Pending { count: q.len(), path });
                        }
                    },
                }
            }
            while let Some(d) = queue.pop() {
                session.decide(d)?;
            }
            if let Some(path) = dot {
                write_out(Some(&path), macro_dot(&session.graph).as_bytes())?;
            }
            write_out(output.as_deref(), final_graph_json(&session.graph).as_bytes())
        }
        Command::Serve { port } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io { path: PathBuf::from("<runtime>"), source })?;
            runtime
                .block_on(topocam::server::serve(port, SessionStore::from_env(), SessionConfig::default()))
                .map_err(|source| CliError::Io { path: PathBuf::from(format!("127.0.0.1:{port}")), source })
        }
        Command::Export { session, output, dot } => {
            let s = SessionStore::from_env().load(&session)?;
            if s.graph.stage != topocam::macro_id::Stage::Finalized {
                return Err(CliError::Pending { count: s.graph.queries.len(), path: SessionStore::from_env().path(&session)? });
            }
            if let Some(path) = dot {
                write_out(Some(&path), macro_dot(&s.graph).as_bytes())?;
            }
            write_out(output.as_deref(), final_graph_json(&s.graph).as_bytes())
        }
        Command::Fixture { name, output, decisions } => {
            let soup = match name.as_str() {
                "pocket" => fixtures::pocket_plate().soup(),
                "stepped" => fixtures::stepped_pocket_scene().soup(),
                "die" => fixtures::die_soup(),
                other => match other.strip_prefix("random:").and_then(|s| s.parse::<u64>().ok()) {
                    Some(seed) => fixtures::random_scene(seed).soup(),
                    None => return Err(CliError::Usage(format!("unknown fixture '{other}'"))),
                },
            };
            let mesh = soup.mesh();
            let mut buf = Vec::new();
            write_stl_binary(&mesh, &mut buf).map_err(|source| CliError::Io { path: output.clone(), source })?;
            write_out(Some(&output), &buf)?;
            if let Some(path) = decisions {
                if name != "die" {
                    return Err(CliError::Usage("decisions are only defined for the die fixture".into()));
                }
                // Same path as `identify`, so face indices agree.
                let (he, _) = prepare_stl(&buf, None)?;
                let id = topocam::macro_id::Identifier::new(he, MachiningSetup::default(), Default::default());
                let mut g = id.primary_graph();
                id.advance(&mut g)?;
                let d = fixtures::die_decision(&g, &id.mesh).ok_or_else(|| CliError::Usage("die produced no query".into()))?;
                write_out(Some(&path), &pretty(&vec![DecisionInput::Decomposition(d)]))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
