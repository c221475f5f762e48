use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{LangCode, LanguagePair, Tier};
use crate::error::{Error, Result};
use crate::features::Feature;
use crate::selection::{CombinedParams, Ordering, SelectionParams};
use crate::template::PromptTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Translation,
    Correlation,
    Transfer,
    Pivot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    #[default]
    Sentence,
    Document,
}

fn default_min_tokens() -> usize {
    10
}

fn default_max_tokens() -> usize {
    100
}

/// How each demonstration is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    Random {
        #[serde(default = "default_min_tokens")]
        min_tokens: usize,
        #[serde(default = "default_max_tokens")]
        max_tokens: usize,
    },
    /// Top-ranked by one feature; repeated seeds take successive blocks.
    Topk {
        feature: Feature,
        #[serde(default)]
        ordering: Ordering,
        #[serde(default = "default_min_tokens")]
        min_tokens: usize,
        #[serde(default = "default_max_tokens")]
        max_tokens: usize,
    },
    Combined {
        #[serde(flatten)]
        params: CombinedParams,
    },
    RandomPairs,
    BackTranslated {
        #[serde(default)]
        generator: PromptTemplate,
    },
    ForwardTranslated {
        #[serde(default)]
        generator: PromptTemplate,
    },
    SourceOnly,
    TargetOnly,
}

impl StrategySpec {
    pub fn label(&self) -> String {
        match self {
            StrategySpec::Random { .. } => "random".into(),
            StrategySpec::Topk { feature, .. } => format!("topk_{feature}"),
            StrategySpec::Combined { .. } => "combined".into(),
            StrategySpec::RandomPairs => "random_pairs".into(),
            StrategySpec::BackTranslated { .. } => "back_translated".into(),
            StrategySpec::ForwardTranslated { .. } => "forward_translated".into(),
            StrategySpec::SourceOnly => "source_only".into(),
            StrategySpec::TargetOnly => "target_only".into(),
        }
    }

    pub fn selection_params(&self, k: usize, seed: u64) -> SelectionParams {
        match self {
            StrategySpec::Random { min_tokens, max_tokens } => {
                SelectionParams::new(k, seed).with_bounds(*min_tokens, *max_tokens)
            }
            StrategySpec::Topk {
                ordering,
                min_tokens,
                max_tokens,
                ..
            } => SelectionParams::new(k, seed)
                .with_bounds(*min_tokens, *max_tokens)
                .with_ordering(*ordering),
            _ => SelectionParams::new(k, seed),
        }
    }

    fn needs_source_mono(&self) -> bool {
        matches!(
            self,
            StrategySpec::RandomPairs | StrategySpec::ForwardTranslated { .. } | StrategySpec::SourceOnly
        )
    }

    fn needs_target_mono(&self) -> bool {
        matches!(
            self,
            StrategySpec::RandomPairs | StrategySpec::BackTranslated { .. } | StrategySpec::TargetOnly
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionConfig {
    pub pair: LanguagePair,
    pub pool: PathBuf,
    #[serde(default = "default_tier")]
    pub tier: Tier,
    /// Held-out test file. Without it, `n_test` examples are split from the pool.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub src_mono: Option<PathBuf>,
    #[serde(default)]
    pub tgt_mono: Option<PathBuf>,
    #[serde(default)]
    pub documents: Option<PathBuf>,
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
    /// Evaluate on `documents` (d-BLEU) instead of test sentences.
    #[serde(default)]
    pub level: Level,
}

fn default_tier() -> Tier {
    Tier::HighQuality
}

fn default_n_test() -> usize {
    100
}

fn default_chunk() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    #[serde(default = "default_correlation")]
    pub correlation: usize,
    #[serde(default = "default_transfer")]
    pub transfer: usize,
}

fn default_correlation() -> usize {
    600
}

fn default_transfer() -> usize {
    300
}

impl Default for SampleCounts {
    fn default() -> Self {
        SampleCounts {
            correlation: default_correlation(),
            transfer: default_transfer(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferSetting {
    /// Index into `directions`; that direction's test data is used.
    pub direction: usize,
    #[serde(default)]
    pub level: Level,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Index of the direction whose pool supplies the demonstrations.
    pub source: usize,
    pub settings: [TransferSetting; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotConfig {
    pub language: LangCode,
    /// Shots per hop; 0 is zero-shot on both hops.
    #[serde(default)]
    pub k: usize,
    /// Pools for the source→pivot and pivot→target hops, needed when `k > 0`.
    #[serde(default)]
    pub first_hop_pool: Option<PathBuf>,
    #[serde(default)]
    pub second_hop_pool: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default)]
    pub llm_url: Option<String>,
    #[serde(default)]
    pub scorer_url: Option<String>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub output_dir: PathBuf,
    /// One demonstration is drawn per seed.
    pub seeds: Vec<u64>,
    /// Seed of the ablation split when a direction has no test file.
    pub split_seed: u64,
    #[serde(default = "default_ks")]
    pub k: Vec<usize>,
    #[serde(default)]
    pub template: PromptTemplate,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategySpec>,
    pub directions: Vec<DirectionConfig>,
    #[serde(default)]
    pub samples: SampleCounts,
    #[serde(default)]
    pub transfer: Option<TransferConfig>,
    #[serde(default)]
    pub pivot: Option<PivotConfig>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Render and persist prompts without generating.
    #[serde(default)]
    pub dry_run: bool,
}

fn default_ks() -> Vec<usize> {
    vec![1]
}

fn default_strategies() -> Vec<StrategySpec> {
    vec![StrategySpec::Random {
        min_tokens: default_min_tokens(),
        max_tokens: default_max_tokens(),
    }]
}

fn default_jobs() -> usize {
    1
}

impl ExperimentConfig {
    /// Parses TOML. Relative paths resolve against `base_dir`.
    pub fn from_toml_str(s: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    /// Reads the file but does not validate; call [`ExperimentConfig::validate`]
    /// after applying overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for d in &mut self.directions {
            fix(&mut d.pool);
            for p in [&mut d.test, &mut d.src_mono, &mut d.tgt_mono, &mut d.documents].into_iter().flatten() {
                fix(p);
            }
        }
        if let Some(pv) = &mut self.pivot {
            for p in [&mut pv.first_hop_pool, &mut pv.second_hop_pool].into_iter().flatten() {
                fix(p);
            }
        }
        if let Some(c) = &mut self.backend.cache_dir {
            fix(c);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("`seeds` must list at least one seed".into());
        }
        if self.directions.is_empty() {
            return bad("no directions configured".into());
        }
        if self.jobs == 0 {
            return bad("`jobs` must be at least 1".into());
        }
        let exists = |p: &Path, what: &str| -> Result<()> {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} `{}` does not exist", p.display())))
            }
        };
        for d in &self.directions {
            exists(&d.pool, "pool")?;
            for (p, what) in [(&d.test, "test set"), (&d.src_mono, "source monolingual file"), (&d.tgt_mono, "target monolingual file"), (&d.documents, "document file")] {
                if let Some(p) = p {
                    exists(p, what)?;
                }
            }
            if d.level == Level::Document && d.documents.is_none() {
                return bad(format!("{}: document level needs `documents`", d.pair));
            }
            if d.chunk_size == 0 {
                return bad(format!("{}: chunk_size must be at least 1", d.pair));
            }
        }
        match self.kind {
            ExperimentKind::Translation => {
                if self.k.is_empty() {
                    return bad("`k` must list at least one shot count".into());
                }
                if self.strategies.is_empty() {
                    return bad("no strategies configured".into());
                }
                for s in &self.strategies {
                    self.validate_strategy(s)?;
                }
            }
            ExperimentKind::Correlation => {
                if self.samples.correlation < 3 {
                    return bad("correlation needs at least 3 samples".into());
                }
            }
            ExperimentKind::Transfer => {
                let t = self
                    .transfer
                    .as_ref()
                    .ok_or_else(|| Error::Config("transfer experiment needs a [transfer] table".into()))?;
                let n = self.directions.len();
                if t.source >= n || t.settings.iter().any(|s| s.direction >= n) {
                    return bad(format!("transfer direction index out of range (have {n})"));
                }
                for s in &t.settings {
                    if s.level == Level::Document && self.directions[s.direction].documents.is_none() {
                        return bad("document-level transfer setting needs `documents`".into());
                    }
                }
                if self.samples.transfer < 3 {
                    return bad("transfer needs at least 3 samples".into());
                }
            }
            ExperimentKind::Pivot => {
                let p = self
                    .pivot
                    .as_ref()
                    .ok_or_else(|| Error::Config("pivot experiment needs a [pivot] table".into()))?;
                for d in &self.directions {
                    if d.pair.src() == &p.language || d.pair.tgt() == &p.language {
                        return bad(format!("pivot language `{}` is an endpoint of {}", p.language, d.pair));
                    }
                }
                if p.k > 0 {
                    for (path, what) in [(&p.first_hop_pool, "first_hop_pool"), (&p.second_hop_pool, "second_hop_pool")] {
                        match path {
                            Some(path) => exists(path, what)?,
                            None => return bad(format!("few-shot pivoting needs `{what}`")),
                        }
                    }
                    if self.directions.len() != 1 {
                        return bad("few-shot pivoting takes exactly one direction".into());
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_strategy(&self, s: &StrategySpec) -> Result<()> {
        if let StrategySpec::Combined { params } = s {
            params.validate()?;
        }
        if let StrategySpec::Random { min_tokens, max_tokens } | StrategySpec::Topk { min_tokens, max_tokens, .. } = s {
            if min_tokens >= max_tokens {
                return Err(Error::Config(format!("{}: min_tokens must be below max_tokens", s.label())));
            }
        }
        for d in &self.directions {
            if s.needs_source_mono() && d.src_mono.is_none() {
                return Err(Error::Config(format!("{} needs `src_mono` for {}", s.label(), d.pair)));
            }
            if s.needs_target_mono() && d.tgt_mono.is_none() {
                return Err(Error::Config(format!("{} needs `tgt_mono` for {}", s.label(), d.pair)));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
