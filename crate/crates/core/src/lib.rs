pub mod config;
pub mod data;
pub mod eval;
pub mod llm;
pub mod models;
pub mod pipeline;
pub mod ranking;
