//! Experiment orchestration: translation sweeps, correlation and transfer
//! studies, pivoting. Every run persists its demonstrations, prompts and
//! outputs under the output directory next to a deterministic report.

pub mod config;
mod pivot;
pub mod report;
mod studies;
mod translation;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    BackendConfig, DirectionConfig, ExperimentConfig, ExperimentKind, Level, PivotConfig, SampleCounts, StrategySpec,
    TransferConfig, TransferSetting,
};
pub use pivot::{pivot_translate, run_pivoting, PivotOutcome};
pub use report::{
    emit_plot_data, write_outputs, AverageRow, CorrelationRow, LatencyRow, RunMeta, RunOutput, RunReport, ScoreRow,
    META_FILE, REPORT_FILE, REPORT_TSV,
};
pub use studies::{run_correlation_study, run_transfer_study};
pub use translation::run_translation;

use crate::augment::AugmentedDemonstration;
use crate::backend::{Backend, GenerationResult};
use crate::corpus::{
    chunk_document, load_documents, load_monolingual, load_pool, split_ablation, write_file, ExamplePool, LangCode,
    LanguagePair, MonolingualExample, ParallelExample, PoolFormat,
};
use crate::decode::translate;
use crate::error::{Error, Result};
use crate::metrics::{comet_batch, corpus_bleu, doc_bleu, BleuConfig};
use crate::par::map_bounded;
use crate::sampling::RNG_ALGORITHM;
use crate::selection::demonstration_jsonl;
use crate::template::{Demonstration, OneSided, PromptTemplate, Renderer};

/// Dispatches on `cfg.kind` after validation.
pub fn run(cfg: &ExperimentConfig, backend: &dyn Backend) -> Result<RunOutput> {
    match cfg.kind {
        ExperimentKind::Translation => run_translation(cfg, backend),
        ExperimentKind::Correlation => run_correlation_study(cfg, backend),
        ExperimentKind::Transfer => run_transfer_study(cfg, backend),
        ExperimentKind::Pivot => run_pivoting(cfg, backend),
    }
}

fn source_joiner(lang: &LangCode) -> &'static str {
    if lang.is_character_segmented() {
        ""
    } else {
        " "
    }
}

pub(crate) fn load_any_pool(path: &std::path::Path, pair: &LanguagePair, tier: crate::corpus::Tier) -> Result<ExamplePool> {
    let format = PoolFormat::from_path(path)
        .ok_or_else(|| Error::Config(format!("cannot infer pool format of `{}`", path.display())))?;
    load_pool(path, format, pair, tier)
}

#[derive(Debug, Clone)]
pub(crate) struct TestItem {
    pub source: String,
    pub reference: String,
}

#[derive(Debug, Clone)]
pub(crate) struct TestSet {
    pub pair: LanguagePair,
    pub level: Level,
    pub items: Vec<TestItem>,
    /// Chunks per document at document level.
    pub docs: Vec<usize>,
}

impl TestSet {
    fn from_sentences(pair: &LanguagePair, examples: &[ParallelExample]) -> TestSet {
        TestSet {
            pair: pair.clone(),
            level: Level::Sentence,
            items: examples
                .iter()
                .map(|e| TestItem {
                    source: e.source_text.clone(),
                    reference: e.target_text.clone(),
                })
                .collect(),
            docs: Vec::new(),
        }
    }

    fn from_documents(pair: &LanguagePair, path: &std::path::Path, chunk_size: usize) -> Result<TestSet> {
        let corpus = load_documents(path, pair)?;
        let bleu = BleuConfig::for_target(pair.tgt());
        let (mut items, mut docs) = (Vec::new(), Vec::new());
        for (_, sentences) in &corpus.documents {
            let chunks = chunk_document(sentences, chunk_size)?;
            docs.push(chunks.len());
            for chunk in chunks {
                let src: Vec<&str> = chunk.iter().map(|e| e.source_text.as_str()).collect();
                let tgt: Vec<&str> = chunk.iter().map(|e| e.target_text.as_str()).collect();
                items.push(TestItem {
                    source: src.join(source_joiner(pair.src())),
                    reference: tgt.join(bleu.sentence_joiner()),
                });
            }
        }
        if items.is_empty() {
            return Err(Error::EmptyPool(path.to_path_buf()));
        }
        Ok(TestSet {
            pair: pair.clone(),
            level: Level::Document,
            items,
            docs,
        })
    }

    pub fn sources(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.source.as_str()).collect()
    }

    fn bleu(&self, hyps: &[String]) -> Result<f64> {
        let cfg = BleuConfig::for_target(self.pair.tgt());
        let refs: Vec<&str> = self.items.iter().map(|i| i.reference.as_str()).collect();
        match self.level {
            Level::Sentence => corpus_bleu(hyps, &refs, &cfg),
            Level::Document => {
                let mut docs = Vec::with_capacity(self.docs.len());
                let mut at = 0;
                for &n in &self.docs {
                    let h: Vec<&str> = hyps[at..at + n].iter().map(String::as_str).collect();
                    docs.push((h, refs[at..at + n].to_vec()));
                    at += n;
                }
                doc_bleu(&docs, &cfg)
            }
        }
    }
}

pub(crate) struct DirectionData {
    pub pair: LanguagePair,
    pub test: TestSet,
    pub pool: ExamplePool,
    pub src_mono: Option<Vec<MonolingualExample>>,
    pub tgt_mono: Option<Vec<MonolingualExample>>,
}

pub(crate) fn prepare_direction(d: &DirectionConfig, split_seed: u64, level: Level) -> Result<DirectionData> {
    let pool = load_any_pool(&d.pool, &d.pair, d.tier)?;
    let (test_examples, pool) = match &d.test {
        Some(t) => (load_any_pool(t, &d.pair, d.tier)?.examples().to_vec(), pool),
        None => split_ablation(&pool, d.n_test, split_seed)?,
    };
    let test = match level {
        Level::Sentence => TestSet::from_sentences(&d.pair, &test_examples),
        Level::Document => {
            let path = d
                .documents
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{}: document level needs `documents`", d.pair)))?;
            TestSet::from_documents(&d.pair, path, d.chunk_size)?
        }
    };
    let mono = |p: &Option<PathBuf>, lang: &LangCode| p.as_ref().map(|p| load_monolingual(p, lang)).transpose();
    Ok(DirectionData {
        src_mono: mono(&d.src_mono, d.pair.src())?,
        tgt_mono: mono(&d.tgt_mono, d.pair.tgt())?,
        pair: d.pair.clone(),
        test,
        pool,
    })
}

/// A demonstration in any of the supported shapes.
pub(crate) enum DemoSpec {
    Parallel(Demonstration),
    Augmented(AugmentedDemonstration),
    OneSided(Vec<MonolingualExample>, OneSided),
}

#[derive(Serialize)]
struct MonoLine<'a> {
    id: &'a str,
    text: &'a str,
}

impl DemoSpec {
    pub fn zero_shot(pair: &LanguagePair) -> DemoSpec {
        DemoSpec::Parallel(Demonstration::empty(pair.clone()))
    }

    pub fn jsonl(&self) -> Vec<u8> {
        match self {
            DemoSpec::Parallel(d) => demonstration_jsonl(d),
            DemoSpec::Augmented(a) => {
                let mut buf = Vec::new();
                for e in &a.examples {
                    serde_json::to_writer(&mut buf, e).expect("augmented example serializes");
                    buf.push(b'\n');
                }
                buf
            }
            DemoSpec::OneSided(mono, _) => {
                let mut buf = Vec::new();
                for m in mono {
                    serde_json::to_writer(&mut buf, &MonoLine { id: &m.id, text: &m.text }).expect("line serializes");
                    buf.push(b'\n');
                }
                buf
            }
        }
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.jsonl()))
    }

    pub fn render(&self, r: &Renderer<'_>, t: &PromptTemplate, test_pair: &LanguagePair, input: &str) -> Result<String> {
        match self {
            DemoSpec::Parallel(d) => r.render_few_shot(t, test_pair, d, input),
            DemoSpec::Augmented(a) => r.render_few_shot(t, test_pair, &a.to_demonstration()?, input),
            DemoSpec::OneSided(mono, side) => r.render_one_sided(t, test_pair, mono, *side, input),
        }
    }
}

/// Identifies one evaluated configuration.
#[derive(Debug, Clone)]
pub(crate) struct RowKey {
    pub direction: String,
    pub strategy: String,
    pub k: usize,
    pub seed: Option<u64>,
    pub sample: Option<usize>,
}

impl RowKey {
    fn file_stem(&self) -> String {
        let mut s = format!("{}_k{}", self.strategy, self.k);
        if let Some(seed) = self.seed {
            s.push_str(&format!("_s{seed}"));
        }
        if let Some(i) = self.sample {
            s.push_str(&format!("_n{i:04}"));
        }
        s.replace(['/', ':', ' '], "_")
    }
}

#[derive(Serialize)]
struct OutputRecord<'a> {
    index: usize,
    source: &'a str,
    prompt: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    intermediate: Option<&'a str>,
    output: &'a str,
    reference: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// One generation: the final result plus the first hop when pivoting.
pub(crate) struct Generated {
    pub prompt: String,
    pub intermediate: Option<String>,
    pub result: Result<GenerationResult>,
}

/// Shared state of one run.
pub(crate) struct Env<'a> {
    pub cfg: &'a ExperimentConfig,
    pub backend: &'a dyn Backend,
    pub renderer: Renderer<'static>,
    notes: Mutex<Vec<String>>,
    latency: Mutex<Vec<LatencyRow>>,
    signatures: Mutex<BTreeMap<String, String>>,
}

impl<'a> Env<'a> {
    pub fn new(cfg: &'a ExperimentConfig, backend: &'a dyn Backend) -> Self {
        Env {
            cfg,
            backend,
            renderer: Renderer::default(),
            notes: Mutex::new(Vec::new()),
            latency: Mutex::new(Vec::new()),
            signatures: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn note(&self, msg: impl Into<String>) {
        let msg = msg.into();
        let mut notes = self.notes.lock().unwrap();
        if !notes.contains(&msg) {
            log::warn!("{msg}");
            notes.push(msg);
        }
    }

    pub fn register_pair(&self, pair: &LanguagePair) {
        self.signatures
            .lock()
            .unwrap()
            .insert(pair.to_string(), BleuConfig::for_target(pair.tgt()).signature());
    }

    fn write_demo(&self, demo: &DemoSpec) -> Result<String> {
        let hash = demo.hash();
        let path = self.cfg.output_dir.join("demos").join(format!("{hash}.jsonl"));
        if !path.exists() {
            write_file(&path, &demo.jsonl())?;
        }
        Ok(hash)
    }

    /// Renders prompts for every test item, generates, scores, persists.
    pub fn evaluate(&self, key: &RowKey, test: &TestSet, demo: &DemoSpec) -> Result<ScoreRow> {
        let t = &self.cfg.template;
        let hash = self.write_demo(demo)?;
        let prompts: Result<Vec<String>> = test
            .items
            .iter()
            .map(|i| demo.render(&self.renderer, t, &test.pair, &i.source))
            .collect();
        let prompts = match prompts {
            Ok(p) => p,
            Err(e) => return Ok(self.error_row(key, test, hash, e)),
        };
        let generated = if self.cfg.dry_run {
            prompts
                .into_iter()
                .map(|prompt| Generated {
                    prompt,
                    intermediate: None,
                    result: Err(Error::arg("dry run")),
                })
                .collect()
        } else {
            map_bounded(&prompts, self.cfg.jobs, |p| Generated {
                prompt: p.clone(),
                intermediate: None,
                result: translate(self.backend, &self.renderer, t, &test.pair, p.clone()),
            })
        };
        self.score(key, test, hash, generated)
    }

    pub fn error_row(&self, key: &RowKey, test: &TestSet, demo_hash: String, e: Error) -> ScoreRow {
        self.note(format!("{} {} k={}: {e}", key.direction, key.strategy, key.k));
        ScoreRow {
            direction: key.direction.clone(),
            strategy: key.strategy.clone(),
            k: key.k,
            seed: key.seed,
            sample: key.sample,
            level: test.level,
            n: test.items.len(),
            bleu: None,
            comet: None,
            delta_bleu: None,
            delta_comet: None,
            failed: 0,
            demo_hash,
            error: Some(e.to_string()),
        }
    }

    /// Persists outputs and computes BLEU and COMET over the generated texts.
    pub fn score(&self, key: &RowKey, test: &TestSet, demo_hash: String, generated: Vec<Generated>) -> Result<ScoreRow> {
        let mut hyps = Vec::with_capacity(generated.len());
        let mut first_error = None;
        let (mut tokens, mut seconds, mut failed) = (0, 0.0, 0);
        let mut lines = Vec::new();
        for (i, (g, item)) in generated.iter().zip(&test.items).enumerate() {
            let (output, error) = match &g.result {
                Ok(r) => {
                    tokens += r.tokens_generated;
                    seconds += r.wall_time_s;
                    (r.text.as_str(), None)
                }
                Err(e) => {
                    if first_error.is_none() {
                        first_error = Some(e.to_string());
                    }
                    ("", Some(e.to_string()))
                }
            };
            if output.is_empty() {
                failed += 1;
            }
            hyps.push(output.to_string());
            serde_json::to_writer(
                &mut lines,
                &OutputRecord {
                    index: i,
                    source: &item.source,
                    prompt: &g.prompt,
                    intermediate: g.intermediate.as_deref(),
                    output,
                    reference: &item.reference,
                    error,
                },
            )?;
            lines.push(b'\n');
        }
        let path = self
            .cfg
            .output_dir
            .join("outputs")
            .join(&key.direction)
            .join(format!("{}.jsonl", key.file_stem()));
        write_file(&path, &lines)?;

        if self.cfg.dry_run {
            return Ok(self.error_row(key, test, demo_hash, Error::arg("dry run: prompts rendered only")));
        }
        self.latency.lock().unwrap().push(LatencyRow {
            direction: key.direction.clone(),
            strategy: key.strategy.clone(),
            k: key.k,
            seed: key.seed,
            sample: key.sample,
            generations: generated.len(),
            tokens,
            seconds,
        });
        if let Some(e) = first_error {
            return Ok(self.error_row(key, test, demo_hash, Error::arg(format!("generation failed: {e}"))));
        }
        let bleu = test.bleu(&hyps)?;
        let srcs = test.sources();
        let refs: Vec<&str> = test.items.iter().map(|i| i.reference.as_str()).collect();
        let hyp_refs: Vec<&str> = hyps.iter().map(String::as_str).collect();
        let comet = match comet_batch(&srcs, &hyp_refs, &refs, self.backend, self.cfg.jobs) {
            Ok(Some(c)) => Some(c.mean * 100.0),
            Ok(None) => {
                self.note("COMET scorer unavailable; COMET columns are missing");
                None
            }
            Err(e) => {
                self.note(format!("COMET failed for {} {}: {e}", key.direction, key.strategy));
                None
            }
        };
        Ok(ScoreRow {
            direction: key.direction.clone(),
            strategy: key.strategy.clone(),
            k: key.k,
            seed: key.seed,
            sample: key.sample,
            level: test.level,
            n: test.items.len(),
            bleu: Some(bleu),
            comet,
            delta_bleu: None,
            delta_comet: None,
            failed,
            demo_hash,
            error: None,
        })
    }

    pub fn finish(self, rows: Vec<ScoreRow>, averages: Vec<AverageRow>, correlations: Vec<CorrelationRow>) -> RunOutput {
        RunOutput {
            report: RunReport {
                kind: self.cfg.kind,
                config_hash: self.cfg.hash(),
                rng: RNG_ALGORITHM.to_string(),
                template: self.cfg.template,
                bleu_signatures: self.signatures.into_inner().unwrap(),
                rows,
                averages,
                correlations,
                notes: self.notes.into_inner().unwrap(),
            },
            latency: self.latency.into_inner().unwrap(),
        }
    }
}

/// Fills deltas against the `zero_shot` row of the same direction.
pub(crate) fn fill_deltas(rows: &mut [ScoreRow]) {
    let zero: BTreeMap<String, (Option<f64>, Option<f64>)> = rows
        .iter()
        .filter(|r| r.strategy == translation::ZERO_SHOT)
        .map(|r| (r.direction.clone(), (r.bleu, r.comet)))
        .collect();
    for r in rows.iter_mut() {
        if let Some((zb, zc)) = zero.get(&r.direction) {
            r.delta_bleu = r.bleu.zip(*zb).map(|(a, b)| a - b);
            r.delta_comet = r.comet.zip(*zc).map(|(a, b)| a - b);
        }
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per (strategy, K): mean over seeds within a direction, then an
/// unweighted mean across directions. Failed rows are skipped.
pub(crate) fn average_rows(rows: &[ScoreRow]) -> Vec<AverageRow> {
    let mut order: Vec<(String, usize)> = Vec::new();
    type Cell = [Vec<f64>; 4];
    let mut cells: BTreeMap<(String, usize), BTreeMap<String, Cell>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.error.is_none()) {
        let key = (r.strategy.clone(), r.k);
        if !order.contains(&key) {
            order.push(key.clone());
        }
        let cell = cells.entry(key).or_default().entry(r.direction.clone()).or_default();
        for (slot, v) in cell.iter_mut().zip([r.bleu, r.comet, r.delta_bleu, r.delta_comet]) {
            slot.extend(v);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let per_dir = &cells[&key];
            let metric = |m: usize| mean(&per_dir.values().filter_map(|c| mean(&c[m])).collect::<Vec<_>>());
            AverageRow {
                strategy: key.0.clone(),
                k: key.1,
                directions: per_dir.len(),
                bleu: metric(0),
                comet: metric(1),
                delta_bleu: metric(2),
                delta_comet: metric(3),
            }
        })
        .collect()
}
