//! Conversational plant-phenotyping agent core.

pub mod agents;
pub mod config;
pub mod eval;
pub mod fixtures;
pub mod geometry;
pub mod imaging;
pub mod llm;
pub mod manager;
pub mod numfmt;
pub mod pipeline;
pub mod prompts;
pub mod registry;
pub mod stats;
pub mod table;
pub mod toolkit;
pub mod vision;
pub mod workspace;
