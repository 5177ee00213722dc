//! IO and orchestration companion to `entrain-core`: file formats (corpus
//! JSONL, annotation and result CSVs, the binary model container), run
//! manifests with digest-verified reruns, and config-file/flag merging.
//! The `entrain` binary wires these into commands.

pub mod config;
pub mod formats;
pub mod manifest;
pub mod model_file;
