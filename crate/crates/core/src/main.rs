use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mtprompt::augment::{build_back_translated, build_forward_translated, build_random_pairs, write_augmented};
use mtprompt::backend::{Backend, CacheStats, CachedBackend, HttpBackend};
use mtprompt::corpus::{load_monolingual, load_pool, split_ablation, write_pool_jsonl, LanguagePair, PoolFormat, Tier};
use mtprompt::features::{compute_pool, read_feature_tsv, write_feature_tsv, CaseContext, Feature};
use mtprompt::runner::{self, emit_plot_data, write_outputs, ExperimentConfig, ExperimentKind, RunMeta, RunReport};
use mtprompt::selection::{
    select_combined, select_random, select_topk_by_feature, write_demonstration, CombinedParams, SelectionParams,
};
use mtprompt::template::PromptTemplate;
use mtprompt::{Error, Result};

#[derive(Parser)]
#[command(name = "mtprompt", version, about = "Few-shot MT prompting experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Generation endpoint base URL.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Scorer sidecar base URL.
    #[arg(long, global = true)]
    scorer: Option<String>,
    /// Response cache directory.
    #[arg(long, global = true, env = "MTPROMPT_CACHE_DIR")]
    cache: Option<PathBuf>,
    /// Replaces the configured seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Render and persist prompts without generating.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Hold out an ablation test set from a pool.
    Split {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        pair: String,
        #[arg(long, default_value_t = 100)]
        n_test: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute the seven example features for a pool.
    Features {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        pair: String,
        /// Test inputs for the case-similarity features.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select a demonstration from a pool.
    Select {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        pair: String,
        #[arg(long, value_enum, default_value_t = Strategy::Random)]
        strategy: Strategy,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Ranking feature for `topk`.
        #[arg(long)]
        feature: Option<String>,
        /// Feature table written by `features`.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build pseudo-parallel or random-pair demonstrations from monolingual text.
    Augment {
        #[arg(long, value_enum)]
        mode: AugmentMode,
        #[arg(long)]
        pair: String,
        #[arg(long)]
        src_mono: Option<PathBuf>,
        #[arg(long)]
        tgt_mono: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translation sweep over strategies, K and seeds.
    Translate,
    /// Feature/quality correlation study.
    Correlate,
    /// Cross-setting transfer study.
    Transfer,
    /// Direct versus pivot translation.
    Pivot,
    /// Print a finished run as TSV and write plot data.
    Report {
        /// Run output directory holding report.json.
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Random,
    Topk,
    Combined,
}

#[derive(Clone, Copy, ValueEnum)]
enum AugmentMode {
    Random,
    Back,
    Forward,
}

struct Stack {
    cached: Option<CachedBackend<HttpBackend>>,
    plain: Option<HttpBackend>,
}

impl Stack {
    fn new(llm: Option<String>, scorer: Option<String>, cache: Option<PathBuf>) -> Result<Self> {
        let http = HttpBackend::new(llm, scorer)?;
        Ok(match cache {
            Some(dir) => Stack {
                cached: Some(CachedBackend::new(http, dir)?),
                plain: None,
            },
            None => Stack {
                cached: None,
                plain: Some(http),
            },
        })
    }

    fn backend(&self) -> &dyn Backend {
        match (&self.cached, &self.plain) {
            (Some(c), _) => c,
            (None, Some(p)) => p,
            (None, None) => unreachable!("stack always holds a backend"),
        }
    }

    fn stats(&self) -> Option<CacheStats> {
        self.cached.as_ref().map(CachedBackend::stats)
    }
}

fn pool_format(path: &Path) -> Result<PoolFormat> {
    PoolFormat::from_path(path).ok_or_else(|| Error::arg(format!("cannot infer format of `{}`", path.display())))
}

fn run_experiment(g: &Global, kind: ExperimentKind) -> Result<()> {
    let path = g.config.as_ref().ok_or_else(|| Error::arg("--config is required"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if cfg.kind != kind {
        return Err(Error::Config(format!("config describes a {:?} experiment", cfg.kind)));
    }
    if let Some(s) = g.seed {
        cfg.seeds = vec![s];
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    cfg.dry_run |= g.dry_run;
    if g.backend.is_some() {
        cfg.backend.llm_url = g.backend.clone();
    }
    if g.scorer.is_some() {
        cfg.backend.scorer_url = g.scorer.clone();
    }
    if g.cache.is_some() {
        cfg.backend.cache_dir = g.cache.clone();
    }
    cfg.validate()?;
    let stack = Stack::new(cfg.backend.llm_url.clone(), cfg.backend.scorer_url.clone(), cfg.backend.cache_dir.clone())?;
    let output = runner::run(&cfg, stack.backend())?;
    write_outputs(&cfg.output_dir, &output, stack.stats())?;
    print!("{}", output.report.to_tsv());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let seed = g.seed.unwrap_or(0);
    let jobs = g.jobs.unwrap_or(1);
    let stack = || Stack::new(g.backend.clone(), g.scorer.clone(), g.cache.clone());
    match cli.command {
        Command::Split { pool, pair, n_test, out_dir } => {
            let pair = LanguagePair::parse(&pair)?;
            let pool = load_pool(&pool, pool_format(&pool)?, &pair, Tier::HighQuality)?;
            let (test, rest) = split_ablation(&pool, n_test, seed)?;
            write_pool_jsonl(&out_dir.join("test.jsonl"), &test)?;
            write_pool_jsonl(&out_dir.join("pool.jsonl"), rest.examples())?;
            println!("test {} / pool {}", test.len(), rest.len());
        }
        Command::Features { pool, pair, test, out } => {
            let pair = LanguagePair::parse(&pair)?;
            let pool = load_pool(&pool, pool_format(&pool)?, &pair, Tier::HighQuality)?;
            let stack = stack()?;
            let case = match test {
                Some(t) => {
                    let test = load_pool(&t, pool_format(&t)?, &pair, Tier::HighQuality)?;
                    let inputs: Vec<&str> = test.examples().iter().map(|e| e.source_text.as_str()).collect();
                    Some(CaseContext::new(&inputs, pair.src(), stack.backend())?)
                }
                None => None,
            };
            let t = PromptTemplate::default_a();
            let vectors = compute_pool(pool.examples(), case.as_ref(), &t, stack.backend(), jobs)?;
            let rows: Vec<_> = pool.examples().iter().map(|e| e.id.clone()).zip(vectors).collect();
            write_feature_tsv(&out, &rows)?;
        }
        Command::Select {
            pool,
            pair,
            strategy,
            k,
            feature,
            features,
            out,
        } => {
            let pair = LanguagePair::parse(&pair)?;
            let pool = load_pool(&pool, pool_format(&pool)?, &pair, Tier::HighQuality)?;
            let table = |f: Feature| -> Result<HashMap<String, f64>> {
                let path = features.as_ref().ok_or_else(|| Error::arg("--features table is required"))?;
                Ok(read_feature_tsv(path)?
                    .into_iter()
                    .filter_map(|(id, v)| f.get(&v).map(|x| (id, x)))
                    .collect())
            };
            let params = SelectionParams::new(k, seed);
            let demo = match strategy {
                Strategy::Random => select_random(&pool, &params)?,
                Strategy::Topk => {
                    let f: Feature = feature.as_deref().ok_or_else(|| Error::arg("--feature is required"))?.parse()?;
                    select_topk_by_feature(&pool, &table(f)?, &params)?
                }
                Strategy::Combined => select_combined(
                    &pool,
                    &table(Feature::SemScore)?,
                    &table(Feature::LmScore)?,
                    &table(Feature::Tlength)?,
                    k,
                    &CombinedParams::default(),
                )?,
            };
            write_demonstration(&out, &demo)?;
        }
        Command::Augment {
            mode,
            pair,
            src_mono,
            tgt_mono,
            k,
            out,
        } => {
            let pair = LanguagePair::parse(&pair)?;
            let load = |p: &Option<PathBuf>, lang, flag: &str| match p {
                Some(p) => load_monolingual(p, lang),
                None => Err(Error::arg(format!("{flag} is required"))),
            };
            let t = PromptTemplate::default_a();
            let demo = match mode {
                AugmentMode::Random => build_random_pairs(
                    &load(&src_mono, pair.src(), "--src-mono")?,
                    &load(&tgt_mono, pair.tgt(), "--tgt-mono")?,
                    &pair,
                    k,
                    seed,
                )?,
                AugmentMode::Back => {
                    let stack = stack()?;
                    build_back_translated(&load(&tgt_mono, pair.tgt(), "--tgt-mono")?, &pair, &t, stack.backend(), k, seed, jobs)?
                }
                AugmentMode::Forward => {
                    let stack = stack()?;
                    build_forward_translated(&load(&src_mono, pair.src(), "--src-mono")?, &pair, &t, stack.backend(), k, seed, jobs)?
                }
            };
            write_augmented(&out, &demo)?;
        }
        Command::Translate => run_experiment(g, ExperimentKind::Translation)?,
        Command::Correlate => run_experiment(g, ExperimentKind::Correlation)?,
        Command::Transfer => run_experiment(g, ExperimentKind::Transfer)?,
        Command::Pivot => run_experiment(g, ExperimentKind::Pivot)?,
        Command::Report { dir } => {
            let report = RunReport::load(&dir.join(runner::REPORT_FILE))?;
            let meta_path = dir.join(runner::META_FILE);
            let latency = match std::fs::read(&meta_path) {
                Ok(bytes) => serde_json::from_slice::<RunMeta>(&bytes)?.latency,
                Err(_) => Vec::new(),
            };
            emit_plot_data(&report, &latency, &dir.join("plots"))?;
            print!("{}", report.to_tsv());
        }
    }
    Ok(())
}
