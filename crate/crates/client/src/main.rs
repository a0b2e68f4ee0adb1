use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ragbench_client::config::{ClientConfig, Endpoint};
use ragbench_client::http::{HttpEmbedder, HttpScorer, HttpTextBackend, ServiceClient};
use ragbench_client::local::local_evaluate_submission;
use ragbench_client::{local_evaluate, run_baseline};
use ragbench_core::backend::{BackendError, RetryPolicy, TextBackend};
use ragbench_core::dataset::{
    build_revision, default_cleaner, diff_corpus, ingest_documents, DatasetRevision, DatasetStore, PublicSplits,
    Version, ROOT_ENV,
};
use ragbench_core::filtering::{
    write_audit_report, AcceptabilityScorer, CriteriaCatalog, FilterBackends, HeuristicRecognizer,
};
use ragbench_core::generation::PromptCatalog;
use ragbench_core::pipeline::{run_pipeline, PipelineBackends, PipelineConfig};
use ragbench_core::submission::{validate_answers, Answers, Submission};

#[derive(Parser)]
#[command(name = "ragbench", version, about = "Dynamic RAG benchmark client")]
struct Cli {
    /// Dataset storage root.
    #[arg(long, global = true, env = ROOT_ENV)]
    root: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Copy the public splits of a revision (latest by default) to a directory.
    Fetch {
        #[arg(long)]
        version: Option<Version>,
        /// Fetch the sandbox revision with all four splits instead.
        #[arg(long)]
        sandbox: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the baseline pipeline over fetched public splits.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Wrap a results file into a submission and check it.
    Package {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Send a packaged submission to the evaluation service.
    Submit {
        #[arg(long)]
        submission: PathBuf,
        #[arg(long)]
        service: Option<String>,
    },
    /// Score a results file or submission against a sandbox directory.
    SandboxEval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        sandbox: PathBuf,
    },
    /// Ingest text files from the inbox (or another directory) into the corpus.
    Ingest {
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// List corpus documents not yet published in any revision.
    Diff,
    /// Build and publish the next revision from the corpus increment.
    Release {
        /// Write the revision as a sandbox (all splits public) instead.
        #[arg(long)]
        sandbox: bool,
        /// Version to build on when the store has no release yet.
        #[arg(long, default_value = "0.0.0")]
        base: Version,
    },
}

fn store(cli: &Cli) -> Result<DatasetStore> {
    Ok(match &cli.root {
        Some(root) => DatasetStore::open(root)?,
        None => DatasetStore::from_env()?,
    })
}

fn config(cli: &Cli) -> Result<ClientConfig> {
    match &cli.config {
        Some(p) => Ok(ClientConfig::load(p)?),
        None => Ok(ClientConfig::default()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn required<'a>(e: &'a Option<Endpoint>, name: &str) -> Result<&'a Endpoint> {
    e.as_ref().with_context(|| format!("config has no [{name}] section"))
}

struct PassAll;

impl AcceptabilityScorer for PassAll {
    fn score(&self, _: &str) -> Result<f64, BackendError> {
        Ok(1.0)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Fetch { version, sandbox, out } => {
            let store = store(&cli)?;
            if *sandbox {
                let v = match version {
                    Some(v) => *v,
                    None => store.sandbox_versions()?.pop().context("no sandbox revisions")?,
                };
                store.read_sandbox(v)?.write_dir(out)?;
                println!("sandbox {v} -> {}", out.display());
            } else {
                let v = match version {
                    Some(v) => *v,
                    None => store.latest_version()?.context("no released revisions")?,
                };
                store.read_public(v)?.write_dir(out)?;
                println!("revision {v} -> {}", out.display());
            }
        }
        Command::Baseline { data, out } => {
            let cfg = config(&cli)?;
            let public = PublicSplits::read_dir(data)?;
            let r = required(&cfg.retriever, "retriever")?;
            let g = required(&cfg.generator, "generator")?;
            let retriever = HttpEmbedder::new(&r.url, &r.model, cfg.timeout());
            let generator = HttpTextBackend::new(&g.url, &g.model, g.max_tokens, cfg.timeout());
            let run = run_baseline(&public, &retriever, &generator, &cfg.prompt, &cfg.baseline)?;
            write_json(out, &run.answers)?;
            println!(
                "{} answers for revision {} ({} failed) -> {}",
                run.answers.len(),
                public.version,
                run.failures.len(),
                out.display()
            );
        }
        Command::Package { results, data, out } => {
            let cfg = config(&cli)?;
            let public = PublicSplits::read_dir(data)?;
            let raw: serde_json::Value = read_json(results)?;
            let answers = validate_answers(&raw, &public).map_err(|r| anyhow::anyhow!("results rejected: {r}"))?;
            if cfg.system.system_name.is_empty() {
                bail!("config [system] needs system_name, retriever_name and generator_name");
            }
            let sub = Submission {
                system_name: cfg.system.system_name.clone(),
                retriever_name: cfg.system.retriever_name.clone(),
                generator_name: cfg.system.generator_name.clone(),
                revision: public.version,
                answers,
            };
            write_json(out, &sub)?;
            println!("submission for revision {} -> {}", public.version, out.display());
        }
        Command::Submit { submission, service } => {
            let cfg = config(&cli)?;
            let url = service.clone().unwrap_or(cfg.service.url.clone());
            let body: serde_json::Value = read_json(submission)?;
            let client = ServiceClient::new(&url, std::time::Duration::from_secs(cfg.service.timeout_secs));
            let reply = client.post("/api/submissions", &body, None)?;
            println!("{}", serde_json::to_string_pretty(&reply.body)?);
            if !(200..300).contains(&reply.status) {
                bail!("service answered HTTP {}", reply.status);
            }
        }
        Command::SandboxEval { results, sandbox } => {
            let rev = DatasetRevision::read_dir(sandbox)?;
            let raw: serde_json::Value = read_json(results)?;
            let report = if raw.get("answers").is_some() {
                let sub: Submission = serde_json::from_value(raw)?;
                local_evaluate_submission(&sub, &rev)?
            } else {
                let answers: Answers = serde_json::from_value(raw)?;
                local_evaluate(&answers, &rev)?
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Ingest { from } => {
            let store = store(&cli)?;
            let raw = match from {
                Some(dir) => DatasetStore::open(dir)?.read_inbox().or_else(|_| read_txt_dir(dir))?,
                None => store.read_inbox()?,
            };
            let report = ingest_documents(&raw, &default_cleaner, store.next_internal_id()?);
            for (i, reason) in &report.rejected {
                println!("rejected #{i}: {reason}");
            }
            let written = store.append_documents(&report.records)?;
            println!(
                "{} read, {} new, {} duplicate in batch, {} already known",
                raw.len(),
                written.len(),
                report.duplicates,
                report.records.len() - written.len()
            );
        }
        Command::Diff => {
            let store = store(&cli)?;
            let increment = diff_corpus(&store.released_hashes()?, &store.documents()?);
            for d in &increment {
                println!("{}\t{}\t{}", d.internal_id, &d.content_hash[..12], d.source);
            }
            println!("{} documents not yet released", increment.len());
        }
        Command::Release { sandbox, base } => release(&cli, *sandbox, *base)?,
    }
    Ok(())
}

fn read_txt_dir(dir: &Path) -> Result<Vec<ragbench_core::dataset::RawDocument>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            Ok(ragbench_core::dataset::RawDocument {
                source: p.display().to_string(),
                text: fs::read_to_string(&p)?,
                fetched_at: 0,
            })
        })
        .collect()
}

fn text_backend(e: &Endpoint, cfg: &ClientConfig) -> HttpTextBackend {
    HttpTextBackend::new(&e.url, &e.model, e.max_tokens, cfg.timeout())
}

fn release(cli: &Cli, sandbox: bool, base: Version) -> Result<()> {
    let cfg = config(cli)?;
    let gen = cfg.generation.clone().context("config has no [generation] section")?;
    let store = store(cli)?;
    let increment = diff_corpus(&store.released_hashes()?, &store.documents()?);
    if increment.is_empty() {
        bail!("no new documents since the last release");
    }
    let extractor = text_backend(&gen.extractor, &cfg);
    let generator = text_backend(&gen.generator, &cfg);
    let judge = text_backend(&gen.judge, &cfg);
    let probes: Vec<HttpTextBackend> = gen.probes.iter().map(|p| text_backend(p, &cfg)).collect();
    let scorer: Box<dyn AcceptabilityScorer> = match &gen.acceptability_url {
        Some(url) => Box::new(HttpScorer::new(url, cfg.timeout())),
        None => Box::new(PassAll),
    };
    let criteria = CriteriaCatalog::builtin();
    let backends = PipelineBackends {
        extractor: &extractor,
        normalizer: None,
        knowledge_base: None,
        generator: &generator,
        filters: FilterBackends {
            acceptability: scorer.as_ref(),
            ner: &HeuristicRecognizer,
            probes: probes.iter().map(|p| p as &dyn TextBackend).collect(),
            judge: &judge,
            criteria: &criteria,
        },
    };
    let pipeline = PipelineConfig {
        retry: RetryPolicy::default(),
        catalog: PromptCatalog::builtin(&gen.locale)
            .with_context(|| format!("no prompt catalog for {}", gen.locale))?,
        filter: gen.filter_config(),
        quota: gen.quota,
        seed: gen.seed,
        ..PipelineConfig::default()
    };
    let run = run_pipeline(&increment, &backends, &pipeline)?;
    let latest = if sandbox {
        store.sandbox_versions()?.pop()
    } else {
        store.latest_version()?
    };
    let rev = build_revision(&run.testset, &increment, latest.unwrap_or(base), gen.seed)?;
    let audit_dir = store.root().join("audit");
    fs::create_dir_all(&audit_dir)?;
    fs::write(
        audit_dir.join(format!("{}.jsonl", rev.version)),
        write_audit_report(&run.outcome),
    )?;
    let counts: BTreeMap<String, usize> = run
        .testset
        .pairs
        .iter()
        .map(|(t, p)| (t.to_string(), p.len()))
        .collect();
    if sandbox {
        let dir = store.write_sandbox(&rev)?;
        println!("sandbox {} -> {}", rev.version, dir.display());
    } else {
        let entry = store.write_revision(&rev)?;
        println!("revision {} released (root hash {})", rev.version, entry.root_hash);
    }
    println!("questions per type: {counts:?}; graph has {} facts", run.graph.len());
    Ok(())
}
