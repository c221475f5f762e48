#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use mtprompt::backend::{CometMode, MockBackend, QeMode};
use mtprompt::corpus::{ExamplePool, LanguagePair, ParallelExample, Tier};
use mtprompt::runner::ExperimentConfig;
use mtprompt::selection::CombinedParams;
use mtprompt::template::{Demonstration, PromptTemplate, Renderer};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;
use tempfile::TempDir;

pub fn pair(s: &str) -> LanguagePair {
    LanguagePair::parse(s).unwrap()
}

// ---------------------------------------------------------------------------
// golden prompts

#[derive(Debug, Deserialize)]
pub struct GoldenCase {
    pub template: String,
    pub language: String,
    pub line_break: bool,
    pub pair: String,
    pub demo_pair: String,
    pub demo: Vec<[String; 2]>,
    pub input: String,
    pub expected: String,
}

pub fn golden_cases() -> Vec<GoldenCase> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden/prompts.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn render_golden(c: &GoldenCase) -> mtprompt::Result<String> {
    let t = PromptTemplate::new(c.template.parse()?, c.language.parse()?, c.line_break);
    let demo_pair = LanguagePair::parse(&c.demo_pair)?;
    let examples = c
        .demo
        .iter()
        .enumerate()
        .map(|(i, [s, g])| ParallelExample::new(format!("d{i}"), s.as_str(), g.as_str(), demo_pair.clone()))
        .collect::<mtprompt::Result<Vec<_>>>()?;
    let demo = Demonstration::new(demo_pair, examples)?;
    Renderer::default().render_few_shot(&t, &LanguagePair::parse(&c.pair)?, &demo, &c.input)
}

/// Case count and a description of every mismatch.
pub fn golden_mismatches() -> (usize, Vec<String>) {
    let cases = golden_cases();
    let bad = cases
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match render_golden(c) {
            Ok(s) if s == c.expected => None,
            Ok(s) => Some(format!("case {i}: got {s:?}, want {:?}", c.expected)),
            Err(e) => Some(format!("case {i}: {e}")),
        })
        .collect();
    (cases.len(), bad)
}

// ---------------------------------------------------------------------------
// combined selection oracle

pub struct CombinedCase {
    pub pool: ExamplePool,
    pub sem: HashMap<String, f64>,
    pub lm: HashMap<String, f64>,
    pub tlen: HashMap<String, f64>,
    pub k: usize,
    pub params: CombinedParams,
}

fn scaled(configured: usize, pool: usize) -> usize {
    if configured == 0 {
        return 0;
    }
    let prop = (configured * pool).div_ceil(110_000);
    configured.min(if prop == 0 { 1 } else { prop })
}

/// Stage sizes, each clamped to what the previous stage leaves.
pub fn oracle_counts(p: &CombinedParams, pool: usize) -> (usize, usize, usize) {
    let keep = scaled(p.sem_keep, pool).min(pool);
    let drop = if keep == 0 { 0 } else { scaled(p.sem_drop, pool).min(keep - 1) };
    let lm = scaled(p.lm_keep, pool).min(keep - drop);
    (keep, drop, lm)
}

/// Indices of the `n` best candidates, best first. An index's rank is the
/// number of candidates that beat it: higher value, or equal value and
/// smaller id.
pub fn oracle_top(cands: &[usize], ids: &[String], vals: &[f64], n: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, usize)> = cands
        .iter()
        .map(|&i| {
            let beaten_by = cands
                .iter()
                .filter(|&&j| j != i && (vals[j] > vals[i] || (vals[j] == vals[i] && ids[j] < ids[i])))
                .count();
            (beaten_by, i)
        })
        .filter(|(r, _)| *r < n)
        .collect();
    ranked.sort_unstable();
    ranked.into_iter().map(|(_, i)| i).collect()
}

/// Selected ids in output order, or `None` when `k` exceeds the last stage.
pub fn oracle_combined(c: &CombinedCase) -> Option<Vec<String>> {
    let ex = c.pool.examples();
    let ids: Vec<String> = ex.iter().map(|e| e.id.clone()).collect();
    let col = |m: &HashMap<String, f64>| ids.iter().map(|id| m[id]).collect::<Vec<f64>>();
    let (sem, lm, tlen) = (col(&c.sem), col(&c.lm), col(&c.tlen));
    let (keep, drop, lm_keep) = oracle_counts(&c.params, ex.len());

    let all: Vec<usize> = (0..ex.len()).collect();
    let stage1 = oracle_top(&all, &ids, &sem, keep);
    let stage2: Vec<usize> = stage1[drop..].to_vec();
    let stage3 = oracle_top(&stage2, &ids, &lm, lm_keep);
    if c.k > stage3.len() {
        return None;
    }
    Some(oracle_top(&stage3, &ids, &tlen, c.k).into_iter().map(|i| ids[i].clone()).collect())
}

pub fn random_combined_case(rng: &mut impl Rng) -> CombinedCase {
    let p = pair("de-en");
    let n = rng.gen_range(1..=200);
    let tied = rng.gen_bool(0.5);
    let value = |rng: &mut dyn rand::RngCore| -> f64 {
        if tied {
            rng.gen_range(0..6) as f64
        } else {
            rng.gen_range(-1.0..1.0)
        }
    };
    let mut ids: Vec<String> = (0..n).map(|i| format!("ex{:03}", (i * 37) % 1000)).collect();
    ids.shuffle(rng);
    let examples: Vec<ParallelExample> = ids
        .iter()
        .map(|id| ParallelExample::new(id.clone(), format!("quelle {id}"), format!("target {id}"), p.clone()).unwrap())
        .collect();
    let (mut sem, mut lm, mut tlen) = (HashMap::new(), HashMap::new(), HashMap::new());
    for id in &ids {
        sem.insert(id.clone(), value(rng));
        lm.insert(id.clone(), value(rng));
        tlen.insert(id.clone(), rng.gen_range(1..40) as f64);
    }
    let params = match rng.gen_range(0..3) {
        0 => CombinedParams::default(),
        1 => {
            let sem_keep = rng.gen_range(2..=300);
            let sem_drop = rng.gen_range(1..sem_keep);
            let lm_keep = rng.gen_range(1..=sem_keep - sem_drop);
            CombinedParams {
                sem_keep,
                sem_drop,
                lm_keep,
            }
        }
        _ => {
            let sem_keep = rng.gen_range(50_000..=200_000);
            let sem_drop = rng.gen_range(1..=5_000);
            let lm_keep = rng.gen_range(1..=sem_keep - sem_drop);
            CombinedParams {
                sem_keep,
                sem_drop,
                lm_keep,
            }
        }
    };
    let (_, _, lm_keep) = oracle_counts(&params, n);
    let k = if rng.gen_bool(0.1) { lm_keep + 1 } else { rng.gen_range(1..=lm_keep.max(1)) };
    CombinedCase {
        pool: ExamplePool::new(p, Tier::HighQuality, examples).unwrap(),
        sem,
        lm,
        tlen,
        k,
        params,
    }
}

// ---------------------------------------------------------------------------
// Spearman oracle

/// Average ranks: 1 + (#smaller) + (#equal others) / 2.
pub fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (oracle_ranks(x), oracle_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

/// Two random vectors of equal length in `3..=50`, neither constant.
pub fn random_vectors(rng: &mut impl Rng, ties: bool) -> (Vec<f64>, Vec<f64>) {
    loop {
        let n = rng.gen_range(3..=50);
        let mut draw = || -> Vec<f64> {
            (0..n)
                .map(|_| if ties { rng.gen_range(0..5) as f64 } else { rng.gen_range(-100.0..100.0) })
                .collect()
        };
        let (x, y) = (draw(), draw());
        let varies = |v: &[f64]| v.iter().any(|a| *a != v[0]);
        if varies(&x) && varies(&y) {
            return (x, y);
        }
    }
}

// ---------------------------------------------------------------------------
// on-disk worlds

pub struct Sandbox {
    pub dir: TempDir,
}

impl Sandbox {
    pub fn new() -> Self {
        Sandbox {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    pub fn config(&self, toml: &str) -> ExperimentConfig {
        let cfg = ExperimentConfig::from_toml_str(toml, self.dir.path()).unwrap();
        cfg.validate().unwrap();
        cfg
    }
}

pub fn de_sentence(i: usize) -> String {
    format!("dies ist der deutsche satz nummer {i} mit {} weiteren wörtern", "vielen ".repeat(i % 5 + 1).trim_end())
}

pub fn en_sentence(i: usize) -> String {
    format!("this is the english sentence number {i} with {} more words", "many ".repeat(i % 5 + 1).trim_end())
}

pub fn tsv(rows: &[(String, String)]) -> String {
    rows.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect()
}

/// Translation world: every pool and monolingual sentence has a known
/// translation, so an echoing mock reproduces references exactly.
pub struct EchoWorld {
    pub sandbox: Sandbox,
    pub de_en: Vec<(String, String)>,
    pub mono_de: Vec<String>,
    pub mono_en: Vec<String>,
}

pub const ECHO_CONFIG: &str = r#"
kind = "translation"
output_dir = "out"
seeds = [11, 12]
split_seed = 5
k = [0, 1, 3]
jobs = 3

[[strategies]]
kind = "random"

[[strategies]]
kind = "topk"
feature = "lm_score"

[[strategies]]
kind = "combined"
sem_keep = 110000
sem_drop = 1000
lm_keep = 55000

[[strategies]]
kind = "random_pairs"

[[strategies]]
kind = "back_translated"

[[strategies]]
kind = "source_only"

[[directions]]
pair = "de-en"
pool = "pool_de_en.tsv"
n_test = 12
src_mono = "mono.de"
tgt_mono = "mono.en"

[[directions]]
pair = "en-de"
pool = "pool_en_de.tsv"
n_test = 12
src_mono = "mono.en"
tgt_mono = "mono.de"
"#;

impl EchoWorld {
    pub fn new() -> Self {
        let sandbox = Sandbox::new();
        let de_en: Vec<(String, String)> = (0..60).map(|i| (de_sentence(i), en_sentence(i))).collect();
        let en_de: Vec<(String, String)> = de_en.iter().map(|(d, e)| (e.clone(), d.clone())).collect();
        let mono_de: Vec<String> = (100..130).map(de_sentence).collect();
        let mono_en: Vec<String> = (100..130).map(en_sentence).collect();
        sandbox.write("pool_de_en.tsv", &tsv(&de_en));
        sandbox.write("pool_en_de.tsv", &tsv(&en_de));
        sandbox.write("mono.de", &(mono_de.join("\n") + "\n"));
        sandbox.write("mono.en", &(mono_en.join("\n") + "\n"));
        EchoWorld {
            sandbox,
            de_en,
            mono_de,
            mono_en,
        }
    }

    pub fn config(&self) -> ExperimentConfig {
        self.sandbox.config(ECHO_CONFIG)
    }

    /// Strict mock that returns the reference translation of every known
    /// sentence in both directions, with an echo COMET scorer.
    pub fn backend(&self) -> MockBackend {
        let t = PromptTemplate::default_a();
        let mut de_en: Vec<(&str, &str)> = self.de_en.iter().map(|(d, e)| (d.as_str(), e.as_str())).collect();
        de_en.extend(self.mono_de.iter().zip(&self.mono_en).map(|(d, e)| (d.as_str(), e.as_str())));
        let en_de: Vec<(&str, &str)> = de_en.iter().map(|(d, e)| (*e, *d)).collect();
        MockBackend::new()
            .with_translations(&t, &pair("de-en"), de_en)
            .with_translations(&t, &pair("en-de"), en_de)
            .with_comet(CometMode::Echo { max: 1.0, min: 0.0 })
            .with_qe(QeMode::Constant(0.5))
    }
}

/// A world whose translation quality rises strictly with the token length
/// of the demonstration's target side. Hypotheses are reference prefixes of
/// `quality(L)` tokens, so BLEU and the mock COMET both rise with `L`.
pub struct LengthWorld {
    pub sandbox: Sandbox,
    pub pool_size: usize,
    pub probes: Vec<(String, String)>,
}

pub const PROBES: usize = 4;
pub const REF_TOKENS: usize = 400;

impl LengthWorld {
    pub fn new(pool_size: usize) -> Self {
        let sandbox = Sandbox::new();
        let pool: Vec<(String, String)> = (0..pool_size)
            .map(|i| (format!("quelle {i}"), (0..=i).map(|j| format!("t{j}")).collect::<Vec<_>>().join(" ")))
            .collect();
        sandbox.write("pool.tsv", &tsv(&pool));
        let probes: Vec<(String, String)> = (0..PROBES)
            .map(|j| (format!("probe {j}"), (0..REF_TOKENS).map(|m| format!("r{j}x{m}")).collect::<Vec<_>>().join(" ")))
            .collect();
        sandbox.write("test.tsv", &tsv(&probes));
        let fr: Vec<(String, String)> = probes.iter().map(|(s, r)| (s.replace("probe", "sonde"), r.clone())).collect();
        sandbox.write("test_fr.tsv", &tsv(&fr));
        sandbox.write("pool_fr.tsv", &tsv(&fr));
        LengthWorld {
            sandbox,
            pool_size,
            probes,
        }
    }

    /// Target length of the single demonstration in a rendered prompt, or
    /// 0 for a zero-shot prompt.
    fn demo_length(prompt: &str) -> usize {
        let Some(start) = prompt.find("English: ") else { return 0 };
        let rest = &prompt[start + "English: ".len()..];
        match rest.rfind(" German: ").or_else(|| rest.rfind(" French: ")) {
            Some(end) => rest[..end].split_whitespace().count(),
            None => 0,
        }
    }

    /// Strict mock; prompts whose test block is French see `remap(L)`
    /// instead of `L`.
    pub fn backend(&self, remap: impl Fn(usize) -> usize + Send + Sync + 'static) -> MockBackend {
        let probes = self.probes.clone();
        MockBackend::new()
            .with_responder(move |req| {
                let p = &req.prompt;
                let (j, french) = probes.iter().enumerate().find_map(|(j, (src, _))| {
                    if p.ends_with(&format!("German: {src} English: ")) {
                        Some((j, false))
                    } else if p.ends_with(&format!("French: {} English: ", src.replace("probe", "sonde"))) {
                        Some((j, true))
                    } else {
                        None
                    }
                })?;
                let l = Self::demo_length(p);
                let q = if french && l > 0 { remap(l) } else { l };
                Some(probes[j].1.split(' ').take(q + 3).collect::<Vec<_>>().join(" "))
            })
            .with_comet(CometMode::Func(Arc::new(|_, hyp, reference| {
                hyp.split_whitespace().count() as f64 / reference.split_whitespace().count() as f64
            })))
            .with_qe(QeMode::Func(Arc::new(|s, h| (s.len() % 7) as f64 + h.len() as f64 / 1000.0)))
    }

    pub fn correlation_config(&self, samples: usize) -> ExperimentConfig {
        self.sandbox.config(&format!(
            r#"
kind = "correlation"
output_dir = "out"
seeds = [3]
split_seed = 1

[samples]
correlation = {samples}

[[directions]]
pair = "de-en"
pool = "pool.tsv"
test = "test.tsv"
"#
        ))
    }

    /// Transfer study with demonstrations from `de-en`; setting 2 is
    /// either `de-en` again or `fr-en`.
    pub fn transfer_config(&self, samples: usize, second: usize) -> ExperimentConfig {
        self.sandbox.config(&format!(
            r#"
kind = "transfer"
output_dir = "out"
seeds = [9]
split_seed = 1

[samples]
transfer = {samples}

[transfer]
source = 0
settings = [{{ direction = 0 }}, {{ direction = {second} }}]

[[directions]]
pair = "de-en"
pool = "pool.tsv"
test = "test.tsv"

[[directions]]
pair = "fr-en"
pool = "pool_fr.tsv"
test = "test_fr.tsv"
"#
        ))
    }
}

/// De→Zh through English. Direct translation yields a marker, the first
/// hop `EN(x)` and the second hop the reference.
pub struct PivotWorld {
    pub sandbox: Sandbox,
    pub tests: Vec<(String, String)>,
}

impl PivotWorld {
    pub fn new() -> Self {
        let sandbox = Sandbox::new();
        let tests: Vec<(String, String)> = (0..6).map(|i| (de_sentence(i), format!("这是第{i}个中文参考句子"))).collect();
        sandbox.write("test.tsv", &tsv(&tests));
        let pool: Vec<(String, String)> = (10..20).map(|i| (de_sentence(i), format!("这是第{i}个中文句子"))).collect();
        sandbox.write("pool.tsv", &tsv(&pool));
        let hop1: Vec<(String, String)> = (10..20).map(|i| (de_sentence(i), en_sentence(i))).collect();
        sandbox.write("hop1.tsv", &tsv(&hop1));
        let hop2: Vec<(String, String)> = (10..20).map(|i| (en_sentence(i), format!("这是第{i}个中文句子"))).collect();
        sandbox.write("hop2.tsv", &tsv(&hop2));
        PivotWorld { sandbox, tests }
    }

    pub fn intermediate(src: &str) -> String {
        format!("EN({src})")
    }

    pub fn direct(src: &str) -> String {
        format!("direct {src}")
    }

    pub fn backend(&self) -> MockBackend {
        let t = PromptTemplate::default_a();
        let mut m = MockBackend::new().with_comet(CometMode::Echo { max: 1.0, min: 0.0 });
        for (src, reference) in &self.tests {
            let mid = Self::intermediate(src);
            m = m
                .with_translation(&t, &pair("de-zh"), src, Self::direct(src))
                .with_translation(&t, &pair("de-en"), src, mid.clone())
                .with_translation(&t, &pair("en-zh"), &mid, reference.clone());
        }
        m
    }

    pub fn config(&self, k: usize) -> ExperimentConfig {
        self.sandbox.config(&format!(
            r#"
kind = "pivot"
output_dir = "out"
seeds = [4]
split_seed = 1

[pivot]
language = "en"
k = {k}
first_hop_pool = "hop1.tsv"
second_hop_pool = "hop2.tsv"

[[directions]]
pair = "de-zh"
pool = "pool.tsv"
test = "test.tsv"
"#
        ))
    }
}

/// Every `output` field of a persisted output file, in order.
pub fn outputs(path: &std::path::Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

// ---------------------------------------------------------------------------
// back-translation

/// English sentences with awkward bytes: accents, CJK, doubled spaces,
/// leading and trailing whitespace.
pub fn awkward_english(n: usize) -> Vec<mtprompt::corpus::MonolingualExample> {
    let en = mtprompt::LangCode::new("en").unwrap();
    (0..n)
        .map(|i| {
            let text = match i % 4 {
                0 => format!("the naïve café number {i} opens at noon"),
                1 => format!("  sentence {i} has  doubled   spaces "),
                2 => format!("Tokyo is 東京 in entry {i}, ok?"),
                _ => format!("plain line {i}"),
            };
            mtprompt::corpus::MonolingualExample::new(format!("mono:{i}"), text, en.clone()).unwrap()
        })
        .collect()
}

/// Answers English→German zero-shot prompts with `DE<x>`, and with an
/// empty string for every eleventh sentence.
pub fn back_translator() -> MockBackend {
    MockBackend::new().with_responder(|req| {
        let x = req.prompt.strip_prefix("English: ")?.strip_suffix(" German: ")?;
        let i: usize = x.split(|c: char| !c.is_ascii_digit()).find(|s| !s.is_empty())?.parse().ok()?;
        Some(if i.is_multiple_of(11) { String::new() } else { format!("DE<{}>", x.trim()) })
    })
}

/// Builds `k` back-translated pairs, checks targets and provenance, and
/// round-trips the result through JSONL. Returns a failure description.
pub fn check_back_translation(k: usize, pool: usize) -> Result<(), String> {
    use mtprompt::augment::{build_back_translated, read_augmented, write_augmented, Provenance};
    let mono = awkward_english(pool);
    let p = pair("de-en");
    let t = PromptTemplate::default_a();
    let demo = build_back_translated(&mono, &p, &t, &back_translator(), k, 17, 4).map_err(|e| e.to_string())?;
    if demo.len() != k {
        return Err(format!("{} pairs built, {k} wanted", demo.len()));
    }
    let by_id: HashMap<&str, &str> = mono.iter().map(|m| (m.id.as_str(), m.text.as_str())).collect();
    let mut seen = std::collections::HashSet::new();
    for a in &demo.examples {
        let original = a.example.id.strip_prefix("bt:").ok_or("id without bt: prefix")?;
        let want = by_id.get(original).ok_or_else(|| format!("unknown source id {original}"))?;
        if a.example.target_text.as_bytes() != want.as_bytes() {
            return Err(format!("target of {original} changed: {:?} vs {:?}", a.example.target_text, want));
        }
        if a.example.source_text != format!("DE<{}>", want.trim()) {
            return Err(format!("source of {original} is {:?}", a.example.source_text));
        }
        if a.provenance != Provenance::BackTranslated || a.generator_template != Some(t) {
            return Err(format!("provenance of {original} is {:?}", a.provenance));
        }
        if !seen.insert(original) {
            return Err(format!("{original} used twice"));
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("bt.jsonl");
    write_augmented(&path, &demo).map_err(|e| e.to_string())?;
    let back = read_augmented(&path, &p).map_err(|e| e.to_string())?;
    if back != demo {
        return Err("JSONL round trip changed the demonstration".into());
    }
    Ok(())
}
