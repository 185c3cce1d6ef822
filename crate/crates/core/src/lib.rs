//! Machining feature recognition on triangle meshes.

pub mod adjacency;
pub mod curvature;
pub mod export;
pub mod fixtures;
pub mod macro_id;
pub mod mesh;
pub mod segmentation;
pub mod server;
pub mod session;
