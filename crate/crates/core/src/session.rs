//! Identification sessions persisted as JSON, shared by the CLI and the
//! HTTP API.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjacency::GraphOptions;
use crate::export::SCHEMA_VERSION;
use crate::macro_id::{Advance, DecisionInput, DecompositionQuery, Identifier, IdentifyError, IdentifyOptions, MacroId, TopoGraph};
use crate::mesh::{prepare_stl, HalfEdgeMesh, MeshError, MeshSummary, TriMesh};
use crate::segmentation::{MachiningSetup, DEFAULT_MIN_FEATURE_FACES};

pub const DATA_DIR_VAR: &str = "TOPOCAM_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Loaded,
    Segmented,
    PrimaryGraph,
    AwaitingDecision,
    Finalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub setup: MachiningSetup,
    #[serde(default)]
    pub weld_tol: Option<f64>,
    pub min_feature_faces: usize,
    pub samples: usize,
    #[serde(default)]
    pub merge_threshold: Option<f64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let graph = GraphOptions::default();
        SessionConfig {
            setup: MachiningSetup::default(),
            weld_tol: None,
            min_feature_faces: DEFAULT_MIN_FEATURE_FACES,
            samples: graph.samples,
            merge_threshold: graph.merge_threshold,
        }
    }
}

impl SessionConfig {
    pub fn options(&self) -> IdentifyOptions {
        IdentifyOptions {
            graph: GraphOptions { samples: self.samples, merge_threshold: self.merge_threshold },
            min_feature_faces: self.min_feature_faces,
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("no session '{0}'")]
    NotFound(String),
    #[error("invalid session id '{0}'")]
    BadId(String),
    #[error("session file has schema version {found}, expected {SCHEMA_VERSION}")]
    SchemaVersion { found: u32 },
}

#[derive(Serialize, Deserialize)]
struct SessionFile {
    schema_version: u32,
    id: String,
    phase: Phase,
    config: SessionConfig,
    summary: MeshSummary,
    mesh: TriMesh,
    graph: TopoGraph,
    decisions: Vec<DecisionInput>,
}

/// Compact view of a session for status queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub schema_version: u32,
    pub id: String,
    pub phase: Phase,
    pub mesh: MeshSummary,
    pub features: BTreeMap<String, usize>,
    pub macros: Vec<MacroId>,
    pub pending_queries: Vec<DecompositionQuery>,
    pub hidden_arcs: Vec<u32>,
    pub rounds: u32,
    pub decisions: usize,
}

pub struct Session {
    pub id: String,
    pub phase: Phase,
    pub config: SessionConfig,
    pub summary: MeshSummary,
    pub identifier: Identifier,
    pub graph: TopoGraph,
    /// Every decision accepted so far, in order.
    pub decisions: Vec<DecisionInput>,
}

impl Session {
    pub fn from_stl(id: impl Into<String>, bytes: &[u8], config: SessionConfig) -> Result<Session, SessionError> {
        let (mesh, summary) = prepare_stl(bytes, config.weld_tol)?;
        Ok(Session::from_mesh(id, mesh, summary, config))
    }

    /// Segments the mesh and builds the primary graph.
    pub fn from_mesh(id: impl Into<String>, mesh: HalfEdgeMesh, summary: MeshSummary, config: SessionConfig) -> Session {
        let identifier = Identifier::new(mesh, config.setup, config.options());
        let graph = identifier.primary_graph();
        Session { id: id.into(), phase: Phase::PrimaryGraph, config, summary, identifier, graph, decisions: Vec::new() }
    }

    /// Runs identification until the next query or the end.
    pub fn advance(&mut self) -> Result<Advance, SessionError> {
        let step = self.identifier.advance(&mut self.graph)?;
        self.phase = match step {
            Advance::Finalized => Phase::Finalized,
            Advance::AwaitingDecision(_) => Phase::AwaitingDecision,
        };
        Ok(step)
    }

    /// Applies a decision; identification resumes on the next `advance`.
    pub fn decide(&mut self, input: DecisionInput) -> Result<(), SessionError> {
        self.identifier.apply(&mut self.graph, &input)?;
        if matches!(input, DecisionInput::Decomposition(_)) {
            self.phase = Phase::PrimaryGraph;
        }
        self.decisions.push(input);
        Ok(())
    }

    pub fn state(&self) -> SessionState {
        let mut features = BTreeMap::new();
        for f in &self.graph.features {
            *features.entry(f.kind.name().to_string()).or_insert(0) += 1;
        }
        SessionState {
            schema_version: SCHEMA_VERSION,
            id: self.id.clone(),
            phase: self.phase,
            mesh: self.summary,
            features,
            macros: self.graph.macros.iter().map(|m| m.id).collect(),
            pending_queries: self.graph.queries.clone(),
            hidden_arcs: self.graph.hidden.iter().copied().collect(),
            rounds: self.graph.rounds,
            decisions: self.decisions.len(),
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Directory of `<id>.json` session files.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SessionStore { root: root.into() }
    }

    /// `$TOPOCAM_DATA_DIR`, or `topocam-sessions` in the working directory.
    pub fn from_env() -> Self {
        SessionStore::new(std::env::var_os(DATA_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("topocam-sessions")))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, id: &str) -> Result<PathBuf, SessionError> {
        if !valid_id(id) {
            return Err(SessionError::BadId(id.to_string()));
        }
        Ok(self.root.join(format!("{id}.json")))
    }

    /// Writes the session through a temporary file so a crash never leaves a
    /// truncated snapshot.
    pub fn save(&self, s: &Session) -> Result<PathBuf, SessionError> {
        let path = self.path(&s.id)?;
        let io_err = |source| SessionError::Io { path: path.clone(), source };
        fs::create_dir_all(&self.root).map_err(|source| SessionError::Io { path: self.root.clone(), source })?;
        let file = SessionFile {
            schema_version: SCHEMA_VERSION,
            id: s.id.clone(),
            phase: s.phase,
            config: s.config,
            summary: s.summary,
            mesh: s.identifier.mesh.mesh.clone(),
            graph: s.graph.clone(),
            decisions: s.decisions.clone(),
        };
        let text = serde_json::to_vec(&file).map_err(|source| SessionError::Json { path: path.clone(), source })?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)?;
        Ok(path)
    }

    pub fn load(&self, id: &str) -> Result<Session, SessionError> {
        let path = self.path(id)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(SessionError::NotFound(id.to_string())),
            Err(source) => return Err(SessionError::Io { path, source }),
        };
        let file: SessionFile = serde_json::from_slice(&bytes).map_err(|source| SessionError::Json { path: path.clone(), source })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(SessionError::SchemaVersion { found: file.schema_version });
        }
        let mesh = HalfEdgeMesh::from_mesh(file.mesh)?;
        let identifier = Identifier::new(mesh, file.config.setup, file.config.options());
        Ok(Session {
            id: file.id,
            phase: file.phase,
            config: file.config,
            summary: file.summary,
            identifier,
            graph: file.graph,
            decisions: file.decisions,
        })
    }

    pub fn exists(&self, id: &str) -> bool {
        self.path(id).map(|p| p.exists()).unwrap_or(false)
    }
}
