//! Operational shell: configuration, manifests, the per-instance pipeline,
//! audit bundles, replay and inspection.

pub mod bundle;
pub mod config;
pub mod demo;
pub mod inspect;
pub mod manifest;
pub mod pipeline;
pub mod replay;

pub use bundle::{AuditBundle, BundleError, StageRecord};
pub use config::{BackendConfig, BackendKind, ConfigError, RunConfig, Runtime, StageBackends, StageRoutes};
pub use manifest::{load_manifest, ManifestError, QAInstance};
pub use pipeline::{run_eval, run_instance, run_one, EvalOutcome, ExecutorSlot, HarnessError};
pub use replay::{replay, CheckStatus, ReplayVerdict};
