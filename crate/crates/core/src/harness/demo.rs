//! Writes a self-contained offline demo: image, manifest, config, strict
//! scripted mapping and scripted executor outcomes for the fixture suite.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::config::{BackendConfig, RunConfig, Runtime, StageBackends, StageRoutes};
use super::manifest::QAInstance;
use super::pipeline::{run_instance, ExecutorSlot};
use crate::executor::ScriptedExecutor;
use crate::fixtures;
use crate::gateway::{ChatBackend, ModelRoute, ScriptedBackend};

pub const IMAGE_FILE: &str = "table.png";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const MAPPING_FILE: &str = "mapping.json";
pub const OUTCOMES_FILE: &str = "outcomes.json";

#[derive(Debug, Clone)]
pub struct DemoLayout {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub manifest: PathBuf,
    pub image: PathBuf,
    pub mapping: PathBuf,
    pub outcomes: PathBuf,
}

/// Config pointing every stage at the scripted mapping.
pub fn demo_config(base_dir: &Path) -> RunConfig {
    let mut config = RunConfig::new(StageBackends {
        understanding: BackendConfig::scripted("scripted-vision", MAPPING_FILE),
        reasoning: BackendConfig::scripted("scripted-reasoner", MAPPING_FILE),
        codegen: BackendConfig::scripted("scripted-coder", MAPPING_FILE),
        explanation: BackendConfig::scripted("scripted-explainer", MAPPING_FILE),
    });
    config.scripted_executor = Some(PathBuf::from(OUTCOMES_FILE));
    config.transport_retry_delays_ms = Vec::new();
    config.base_dir = base_dir.to_path_buf();
    config
}

/// Runtime answering every stage through [`fixtures::respond`].
pub fn responder_runtime(config: RunConfig) -> Runtime {
    let backend: Arc<dyn ChatBackend> = Arc::new(fixtures::responder());
    let route = |b: &BackendConfig| {
        let mut r = ModelRoute::new(backend.clone(), b.model_id.clone());
        r.temperature = b.temperature;
        r.max_output_tokens = b.max_output_tokens;
        r
    };
    let routes = StageRoutes {
        understanding: route(&config.backends.understanding).with_vision(true),
        reasoning: route(&config.backends.reasoning),
        codegen: route(&config.backends.codegen),
        explanation: route(&config.backends.explanation),
    };
    Runtime {
        config,
        routes,
        executor: Arc::new(ScriptedExecutor::new(fixtures::executor_outcomes())),
    }
}

pub fn suite_instances(image: &Path) -> Vec<QAInstance> {
    fixtures::suite()
        .into_iter()
        .map(|c| QAInstance {
            id: c.id.to_string(),
            subset: c.subset,
            image_path: image.to_path_buf(),
            question: c.question.to_string(),
            answers: c.answers.iter().map(|a| a.to_string()).collect(),
        })
        .collect()
}

/// Fingerprint mapping covering every model call `config` makes for
/// `instances`, recorded by running them against the fixture responder.
pub fn record_mapping(config: &RunConfig, instances: &[QAInstance]) -> BTreeMap<String, String> {
    let runtime = responder_runtime(config.clone());
    let mut slot = ExecutorSlot::new(runtime.executor.clone());
    let mut mapping = BTreeMap::new();
    for instance in instances {
        let bundle = run_instance(&runtime, instance, &mut slot);
        mapping.extend(ScriptedBackend::from_records(&bundle.gateway_log).responses().clone());
    }
    mapping
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// Populates `dir` with the demo files. Manifest and config use paths
/// relative to `dir`, so the directory can be moved.
pub fn write_demo(dir: &Path) -> io::Result<DemoLayout> {
    std::fs::create_dir_all(dir)?;
    let layout = DemoLayout {
        dir: dir.to_path_buf(),
        config: dir.join(CONFIG_FILE),
        manifest: dir.join(MANIFEST_FILE),
        image: dir.join(IMAGE_FILE),
        mapping: dir.join(MAPPING_FILE),
        outcomes: dir.join(OUTCOMES_FILE),
    };
    std::fs::write(&layout.image, fixtures::TABLE_PNG)?;

    let config = demo_config(dir);
    let instances = suite_instances(&layout.image);
    write_json(&layout.mapping, &record_mapping(&config, &instances))?;
    write_json(&layout.outcomes, &fixtures::executor_outcomes())?;
    write_json(&layout.config, &config)?;

    let mut manifest = String::new();
    for mut inst in instances {
        inst.image_path = PathBuf::from(IMAGE_FILE);
        manifest.push_str(&serde_json::to_string(&inst).map_err(io::Error::other)?);
        manifest.push('\n');
    }
    std::fs::write(&layout.manifest, manifest)?;
    Ok(layout)
}
