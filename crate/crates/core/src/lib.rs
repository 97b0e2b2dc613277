//! Coverage-guided regression test generation for Python subjects.
//!
//! The engine slices the subject program backwards from each uncovered
//! line, asks a language model for a test that reaches it, and when that
//! fails retrieves the existing test whose execution came closest and
//! annotates the slice with that test's runtime values before asking again.

pub mod inliner;
pub mod llm;
pub mod orchestrator;
pub mod prompting;
pub mod report;
pub mod retrieval;
pub mod slicer;
pub mod subject;
pub mod trace;
