pub mod codegen;
pub mod executor;
pub mod explanation;
pub mod fixtures;
pub mod fuzzy;
pub mod gateway;
pub mod harness;
pub mod helpers;
pub mod metrics;
pub mod reasoning;
pub mod table;
pub mod understanding;
