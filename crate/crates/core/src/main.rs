use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use serde::de::DeserializeOwned;

use covert_lab::cues::CueDictionary;
use covert_lab::engine::{serve, EngineConfig};
use covert_lab::model::EventLog;
use covert_lab::modeling::{ClusterLevel, ModelKind};
use covert_lab::report::{pipeline_run, Inputs, ReportConfig, RunManifest, SdtBy, Stage, Subset};
use covert_lab::rsa::Space;
use covert_lab::sdt::DenominatorMode;
use covert_lab::sim::{simulate_experiment, WorldConfig};
use covert_lab::textstats::TopicEncoding;
use covert_lab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "covert-lab",
    version,
    about = "Triad-chat experiments with undisclosed AI teammates, and their analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the live chat server.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Mirror every event to this NDJSON file.
        #[arg(long, default_value = "events.ndjson")]
        log: PathBuf,
    },
    /// Run a headless synthetic experiment.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "COVERT_LAB_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Cue dictionary; the built-in demo dictionary when absent.
        #[arg(long)]
        dictionary: Option<PathBuf>,
    },
    /// Validate an event log or table export and write normalised tables.
    Ingest {
        #[arg(long, conflicts_with = "tables", required_unless_present = "tables")]
        log: Option<PathBuf>,
        #[arg(long)]
        tables: Option<PathBuf>,
        #[arg(long)]
        include_incomplete: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one analysis stage.
    Analyze {
        #[command(subcommand)]
        stage: AnalyzeCmd,
    },
    /// Run every configured stage and write the full report.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Event log, run directory, table directory, or (sdt/text) a judgments CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Artifact directory; a `.csv`/`.json` path also receives the stage's
    /// primary table, with artifacts beside it in a directory of the same stem.
    #[arg(long)]
    out: PathBuf,
    /// Report config (TOML, or JSON by extension); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "COVERT_LAB_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    include_incomplete: bool,
    #[arg(long)]
    no_plots: bool,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Signal detection: confusion, d′, β, Wilson and bootstrap intervals.
    Sdt {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', value_parser = snake::<SdtBy>)]
        by: Vec<SdtBy>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<DenominatorMode>,
        #[arg(long)]
        boot: Option<usize>,
    },
    /// Logistic and conditional-logistic models with cluster-robust errors.
    Regress {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', value_parser = snake::<ModelKind>)]
        model: Vec<ModelKind>,
        #[arg(long, value_parser = parse_cluster)]
        cluster: Option<ClusterLevel>,
    },
    /// Group-wise CV, calibration, triad permutation, Top-1 and timing ablation.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = snake::<ModelKind>)]
        model: Option<ModelKind>,
        /// Group-wise folds, as `groups:K`.
        #[arg(long, value_parser = parse_cv)]
        cv: Option<usize>,
        #[arg(long)]
        permute: Option<usize>,
        #[arg(long)]
        top1: bool,
        #[arg(long)]
        ablate_timing: bool,
    },
    /// Representational similarity between RDM spaces, plus MDS.
    Rsa {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', value_parser = snake::<Space>)]
        spaces: Vec<Space>,
        #[arg(long, value_parser = snake::<Subset>)]
        subset: Option<Subset>,
        #[arg(long)]
        dmid: Option<f64>,
        #[arg(long)]
        boot: Option<usize>,
        #[arg(long)]
        perm: Option<usize>,
    },
    /// Impression-text statistics: c-TF-IDF, associations, topic models.
    Text {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        topics: Option<PathBuf>,
        #[arg(long)]
        ctfidf: bool,
        #[arg(long)]
        assoc: bool,
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long)]
        boot: Option<usize>,
        #[arg(long, value_parser = snake::<TopicEncoding>)]
        encoding: Option<TopicEncoding>,
    },
}

fn snake<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<DenominatorMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_cluster(s: &str) -> std::result::Result<ClusterLevel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_cv(s: &str) -> std::result::Result<usize, String> {
    let k = s.strip_prefix("groups:").unwrap_or(s);
    k.parse().map_err(|_| format!("expected `groups:K`, got `{s}`"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Serve { bind, config, log } => {
            let cfg = match config {
                Some(p) => EngineConfig::load(&p)?,
                None => EngineConfig::default(),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&bind).await?;
                let handle = serve(cfg, listener, Some(&log)).await?;
                info!("listening on http://{}/app, logging to {}", handle.addr, log.display());
                handle.wait().await;
                Ok::<_, Error>(())
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { config, seed, out, dictionary } => {
            let mut world = match config {
                Some(p) => WorldConfig::load(&p)?,
                None => WorldConfig::default(),
            };
            if let Some(s) = seed {
                world.seed = s;
            }
            let dict = match dictionary {
                Some(p) => CueDictionary::load(&p)?,
                None => CueDictionary::demo(),
            };
            let sim = simulate_experiment(&world, &dict)?;
            fs::create_dir_all(&out)?;
            sim.log.save(&out.join("events.ndjson"))?;
            Inputs::from_log(&sim.log, true)?.write_tables(&out)?;
            fs::write(out.join("world.json"), serde_json::to_string_pretty(&world)? + "\n")?;
            info!("{} groups, {} events → {}", sim.groups.len(), sim.log.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Ingest { log, tables, include_incomplete, out } => {
            let inputs = match (log, tables) {
                (Some(l), _) => Inputs::from_log(&EventLog::load(&l)?, include_incomplete)?,
                (None, Some(t)) => Inputs::from_tables(&t, include_incomplete)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            inputs.write_tables(&out)?;
            fs::write(out.join("ingest_report.json"), serde_json::to_string_pretty(&inputs.report)? + "\n")?;
            info!(
                "{} groups, {} messages, {} judgments → {}",
                inputs.groups.len(),
                inputs.utterances.len(),
                inputs.judgments.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { common } => {
            let cfg = base_config(&common)?;
            execute(&common, cfg, "report", None)
        }
        Command::Analyze { stage } => analyze(stage),
    }
}

fn base_config(c: &Common) -> Result<ReportConfig> {
    let mut cfg = match &c.config {
        Some(p) => ReportConfig::load(p)?,
        None => ReportConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.dictionary.is_some() {
        cfg.dictionary = c.dictionary.clone();
    }
    cfg.include_incomplete |= c.include_incomplete;
    cfg.plots &= !c.no_plots;
    Ok(cfg)
}

fn analyze(cmd: AnalyzeCmd) -> Result<ExitCode> {
    match cmd {
        AnalyzeCmd::Sdt { common, by, mode, boot } => {
            let mut cfg = base_config(&common)?;
            cfg.stages = vec![Stage::Sdt];
            if !by.is_empty() {
                cfg.sdt.by = by;
            }
            cfg.sdt.mode = mode.unwrap_or(cfg.sdt.mode);
            cfg.sdt.n_boot = boot.unwrap_or(cfg.sdt.n_boot);
            execute(&common, cfg, "analyze sdt", Some("sdt.csv"))
        }
        AnalyzeCmd::Regress { common, model, cluster } => {
            let mut cfg = base_config(&common)?;
            cfg.stages = vec![Stage::Regress];
            if !model.is_empty() {
                cfg.regress.models = model;
            }
            cfg.regress.cluster = cluster.unwrap_or(cfg.regress.cluster);
            execute(&common, cfg, "analyze regress", Some("coefficients.csv"))
        }
        AnalyzeCmd::Evaluate { common, model, cv, permute, top1, ablate_timing } => {
            let mut cfg = base_config(&common)?;
            cfg.stages = vec![Stage::Evaluate];
            cfg.evaluate.model = model.unwrap_or(cfg.evaluate.model);
            cfg.evaluate.folds = cv.unwrap_or(cfg.evaluate.folds);
            cfg.evaluate.n_perm = permute.unwrap_or(cfg.evaluate.n_perm);
            // Explicit feature flags select exactly those extras.
            if top1 || ablate_timing {
                cfg.evaluate.top1 = top1;
                cfg.evaluate.ablate_timing = ablate_timing;
            }
            execute(&common, cfg, "analyze evaluate", Some("evaluate.csv"))
        }
        AnalyzeCmd::Rsa { common, spaces, subset, dmid, boot, perm } => {
            let mut cfg = base_config(&common)?;
            cfg.stages = vec![Stage::Rsa];
            if !spaces.is_empty() {
                cfg.rsa.spaces = spaces;
            }
            cfg.rsa.subset = subset.unwrap_or(cfg.rsa.subset);
            cfg.rsa.d_mid = dmid.unwrap_or(cfg.rsa.d_mid);
            cfg.rsa.n_boot = boot.unwrap_or(cfg.rsa.n_boot);
            cfg.rsa.n_perm = perm.unwrap_or(cfg.rsa.n_perm);
            execute(&common, cfg, "analyze rsa", Some("rsa.csv"))
        }
        AnalyzeCmd::Text { common, topics, ctfidf, assoc, top_n, boot, encoding } => {
            let mut cfg = base_config(&common)?;
            cfg.stages = vec![Stage::Text];
            if topics.is_some() {
                cfg.text.topics = topics;
            }
            if ctfidf || assoc {
                cfg.text.ctfidf = ctfidf;
                cfg.text.assoc = assoc;
            }
            cfg.text.top_n = top_n.unwrap_or(cfg.text.top_n);
            cfg.text.n_boot = boot.unwrap_or(cfg.text.n_boot);
            cfg.text.encoding = encoding.unwrap_or(cfg.text.encoding);
            let primary = if cfg.text.ctfidf { "ctfidf.csv" } else { "text_descriptives.csv" };
            execute(&common, cfg, "analyze text", Some(primary))
        }
    }
}

/// `x.csv` / `x.json` → artifacts in `x/`; anything else is the directory.
fn artifact_dir(out: &Path) -> (PathBuf, Option<&str>) {
    match out.extension().and_then(|e| e.to_str()) {
        Some(ext @ ("csv" | "json")) => (out.with_extension(""), Some(ext)),
        _ => (out.to_path_buf(), None),
    }
}

fn execute(common: &Common, cfg: ReportConfig, command: &str, primary: Option<&str>) -> Result<ExitCode> {
    cfg.validate()?;
    let inputs = Inputs::load(&common.input, cfg.include_incomplete)?;
    let (dir, ext) = artifact_dir(&common.out);
    let manifest = pipeline_run(&cfg, &inputs, &dir, command)?;
    match (ext, primary) {
        (Some("csv"), Some(p)) => {
            fs::copy(dir.join(p), &common.out)?;
        }
        (Some("json"), _) => write_json(&manifest, &dir, &common.out)?,
        _ => {}
    }
    info!("{} outputs → {}", manifest.outputs.len(), dir.display());
    if manifest.model_failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &manifest.model_failures {
            error!("{f}");
        }
        Ok(ExitCode::from(4))
    }
}

/// Every CSV table of the run as JSON records, next to the manifest.
fn write_json(manifest: &RunManifest, dir: &Path, out: &Path) -> Result<()> {
    let mut tables = serde_json::Map::new();
    for o in manifest.outputs.iter().filter(|o| o.path.ends_with(".csv")) {
        let mut r = csv::Reader::from_path(dir.join(&o.path))?;
        let header = r.headers()?.clone();
        let rows: Vec<serde_json::Value> = r
            .records()
            .map(|rec| {
                rec.map(|rec| {
                    header
                        .iter()
                        .zip(rec.iter())
                        .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.into())))
                        .collect()
                })
            })
            .collect::<std::result::Result<_, _>>()?;
        tables.insert(o.path.trim_end_matches(".csv").to_string(), rows.into());
    }
    let doc = serde_json::json!({ "manifest": manifest, "tables": tables });
    fs::write(out, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}
