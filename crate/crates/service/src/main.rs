use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;
use ragbench_client::config::{Endpoint, SystemNames};
use ragbench_client::http::{HttpEmbedder, HttpTextBackend};
use ragbench_client::{BaselineConfig, PromptSpec};
use ragbench_core::dataset::{DatasetStore, ROOT_ENV};
use ragbench_service::{router, AppState, RegisteredBaseline, Settings};
use serde::Deserialize;

/// Serves the evaluation API over a dataset store.
#[derive(Parser)]
#[command(name = "ragbench-service", version)]
struct Args {
    #[arg(long, env = ROOT_ENV)]
    root: PathBuf,
    #[arg(long, env = "RAGBENCH_BIND", default_value = "127.0.0.1:8000")]
    bind: String,
    /// Admin bearer token. Admin routes are closed when unset.
    #[arg(long, env = "RAGBENCH_ADMIN_TOKEN", default_value = "", hide_env_values = true)]
    admin_token: String,
    /// TOML file with the judge endpoint and registered baselines.
    #[arg(long, env = "RAGBENCH_SERVICE_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    /// Defaults to `<root>/service`.
    state_dir: Option<PathBuf>,
    workers: Option<usize>,
    timeout_secs: Option<u64>,
    judge: Option<Endpoint>,
    auto_retry_secs: Option<u64>,
    auto_max_attempts: Option<u32>,
    baselines: BTreeMap<String, BaselineEntry>,
}

#[derive(Debug, Deserialize)]
struct BaselineEntry {
    #[serde(flatten)]
    names: SystemNames,
    retriever: Endpoint,
    generator: Endpoint,
    #[serde(default)]
    prompt: PromptSpec,
    #[serde(default)]
    baseline: BaselineConfig,
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let file: FileConfig = match &args.config {
        Some(p) => toml::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => FileConfig::default(),
    };
    let timeout = Duration::from_secs(file.timeout_secs.unwrap_or(120));
    let store = DatasetStore::open(&args.root)?;
    let mut settings = Settings::new(
        file.state_dir.clone().unwrap_or_else(|| args.root.join("service")),
        args.admin_token.clone(),
    );
    if let Some(w) = file.workers {
        settings.workers = w;
    }
    if let Some(s) = file.auto_retry_secs {
        settings.auto_retry_delay = Duration::from_secs(s);
    }
    if let Some(n) = file.auto_max_attempts {
        settings.auto_max_attempts = n;
    }
    settings.judge = file
        .judge
        .as_ref()
        .map(|j| Arc::new(HttpTextBackend::new(&j.url, &j.model, j.max_tokens, timeout)) as _);
    for (name, b) in file.baselines {
        settings.baselines.insert(
            name,
            RegisteredBaseline {
                names: b.names,
                retriever: Arc::new(HttpEmbedder::new(&b.retriever.url, &b.retriever.model, timeout)),
                generator: Arc::new(HttpTextBackend::new(
                    &b.generator.url,
                    &b.generator.model,
                    b.generator.max_tokens,
                    timeout,
                )),
                prompt: b.prompt,
                config: b.baseline,
            },
        );
    }
    if args.admin_token.is_empty() {
        log::warn!("no admin token set, admin routes are closed");
    }
    let state = AppState::new(store, settings)?;
    let listener = tokio::net::TcpListener::bind(&args.bind)
        .await
        .with_context(|| format!("binding {}", args.bind))?;
    log::info!("listening on {}", args.bind);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
