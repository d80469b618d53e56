//! Document-level relation extraction framed as link prediction over a
//! provenance-tagged knowledge graph.
//!
//! The pipeline: documents and external triples are ingested into a
//! [`kg::KnowledgeGraph`], enriched with [`context`] triples, and used to
//! train an R-GCN + DistMult link predictor ([`linkpred`]). Document-level
//! reasoning paths are scored separately ([`reasoning`]); [`aggregate`] fuses
//! both into relation predictions and [`explain`] recovers supporting graph
//! paths by beam search.

pub mod aggregate;
pub mod checkpoint;
pub mod context;
pub mod error;
pub mod explain;
pub mod ingest;
pub mod kg;
pub mod linkpred;
pub mod optim;
pub mod reasoning;

pub use error::{Error, Result};
