//! Knowledge-gap mining toolkit.
pub mod agreement;
pub mod corpus;
pub mod evaluation;
pub mod gateway;
pub mod http;
pub mod orchestrator;
pub mod segmentation;
pub mod tabi;
pub mod text;
pub mod util;
