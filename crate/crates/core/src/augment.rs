//! Demonstrations built from monolingual text.
//!
//! Pseudo-parallel pairs come from zero-shot translation of real sentences.
//! The real side is always kept verbatim. Empty generations are dropped and
//! replaced by the next sampled sentence so the demonstration keeps `k`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::corpus::{write_file, LanguagePair, MonolingualExample, ParallelExample};
use crate::decode::translate_zero_shot;
use crate::error::{Error, Result};
use crate::par::map_bounded;
use crate::sampling::{derive_seed, permutation_keyed, sample_keyed};
use crate::template::{Demonstration, PromptTemplate, Renderer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RandomPair,
    ForwardTranslated,
    BackTranslated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedExample {
    #[serde(flatten)]
    pub example: ParallelExample,
    pub provenance: Provenance,
    /// Template used to generate the synthetic side; `None` for random pairs.
    pub generator_template: Option<PromptTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedDemonstration {
    pub pair: LanguagePair,
    pub examples: Vec<AugmentedExample>,
}

impl AugmentedDemonstration {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn to_demonstration(&self) -> Result<Demonstration> {
        Demonstration::new(self.pair.clone(), self.examples.iter().map(|a| a.example.clone()).collect())
    }
}

fn check_lang(mono: &[MonolingualExample], lang: &crate::corpus::LangCode) -> Result<()> {
    match mono.iter().find(|m| &m.lang != lang) {
        Some(m) => Err(Error::arg(format!("`{}` is `{}` text, expected `{lang}`", m.id, m.lang))),
        None => Ok(()),
    }
}

fn ids(mono: &[MonolingualExample]) -> Vec<&str> {
    mono.iter().map(|m| m.id.as_str()).collect()
}

/// `k` sentences sampled without replacement, in draw order.
pub fn sample_monolingual(mono: &[MonolingualExample], k: usize, seed: u64) -> Result<Vec<MonolingualExample>> {
    if k > mono.len() {
        return Err(Error::InsufficientPool {
            surviving: mono.len(),
            needed: k,
        });
    }
    Ok(sample_keyed(&ids(mono), k, seed).into_iter().map(|i| mono[i].clone()).collect())
}

/// Pairs unrelated source and target sentences, each side sampled independently.
pub fn build_random_pairs(
    src_mono: &[MonolingualExample],
    tgt_mono: &[MonolingualExample],
    pair: &LanguagePair,
    k: usize,
    seed: u64,
) -> Result<AugmentedDemonstration> {
    check_lang(src_mono, pair.src())?;
    check_lang(tgt_mono, pair.tgt())?;
    let srcs = sample_monolingual(src_mono, k, derive_seed(seed, "random_pair/src"))?;
    let tgts = sample_monolingual(tgt_mono, k, derive_seed(seed, "random_pair/tgt"))?;
    let examples = srcs
        .into_iter()
        .zip(tgts)
        .map(|(s, t)| {
            Ok(AugmentedExample {
                example: ParallelExample::new(format!("rand:{}+{}", s.id, t.id), s.text, t.text, pair.clone())?,
                provenance: Provenance::RandomPair,
                generator_template: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AugmentedDemonstration {
        pair: pair.clone(),
        examples,
    })
}

/// Real target sentences with generated sources (target → source zero-shot).
pub fn build_back_translated(
    tgt_mono: &[MonolingualExample],
    pair: &LanguagePair,
    t: &PromptTemplate,
    backend: &dyn Backend,
    k: usize,
    seed: u64,
    jobs: usize,
) -> Result<AugmentedDemonstration> {
    check_lang(tgt_mono, pair.tgt())?;
    build_pseudo(tgt_mono, pair, t, backend, k, seed, jobs, Provenance::BackTranslated)
}

/// Real source sentences with generated targets (source → target zero-shot).
pub fn build_forward_translated(
    src_mono: &[MonolingualExample],
    pair: &LanguagePair,
    t: &PromptTemplate,
    backend: &dyn Backend,
    k: usize,
    seed: u64,
    jobs: usize,
) -> Result<AugmentedDemonstration> {
    check_lang(src_mono, pair.src())?;
    build_pseudo(src_mono, pair, t, backend, k, seed, jobs, Provenance::ForwardTranslated)
}

#[allow(clippy::too_many_arguments)]
fn build_pseudo(
    mono: &[MonolingualExample],
    pair: &LanguagePair,
    t: &PromptTemplate,
    backend: &dyn Backend,
    k: usize,
    seed: u64,
    jobs: usize,
    provenance: Provenance,
) -> Result<AugmentedDemonstration> {
    if k > mono.len() {
        return Err(Error::InsufficientPool {
            surviving: mono.len(),
            needed: k,
        });
    }
    let (direction, prefix) = match provenance {
        Provenance::BackTranslated => (pair.reversed(), "bt"),
        _ => (pair.clone(), "ft"),
    };
    let renderer = Renderer::default();
    let order = permutation_keyed(&ids(mono), seed);
    let mut next = 0;
    let mut dropped = 0;
    let mut examples = Vec::with_capacity(k);
    while examples.len() < k && next < order.len() {
        let take = (k - examples.len()).min(order.len() - next);
        let batch = &order[next..next + take];
        next += take;
        let outputs = map_bounded(batch, jobs, |&i| {
            translate_zero_shot(backend, &renderer, t, &direction, &mono[i].text).map(|g| g.text)
        });
        for (&i, out) in batch.iter().zip(outputs) {
            let generated = out?;
            if generated.is_empty() {
                log::warn!("empty generation for `{}`, drawing a replacement", mono[i].id);
                dropped += 1;
                continue;
            }
            let real = mono[i].text.clone();
            let (src, tgt) = match provenance {
                Provenance::BackTranslated => (generated, real),
                _ => (real, generated),
            };
            examples.push(AugmentedExample {
                example: ParallelExample::new(format!("{prefix}:{}", mono[i].id), src, tgt, pair.clone())?,
                provenance,
                generator_template: Some(*t),
            });
        }
    }
    if examples.len() < k {
        return Err(Error::AugmentationExhausted {
            collected: examples.len(),
            needed: k,
            dropped,
        });
    }
    Ok(AugmentedDemonstration {
        pair: pair.clone(),
        examples,
    })
}

pub fn write_augmented(path: &Path, demo: &AugmentedDemonstration) -> Result<()> {
    let mut buf = Vec::new();
    for e in &demo.examples {
        serde_json::to_writer(&mut buf, e)?;
        buf.push(b'\n');
    }
    write_file(path, &buf)
}

pub fn read_augmented(path: &Path, pair: &LanguagePair) -> Result<AugmentedDemonstration> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let e: AugmentedExample = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if &e.example.pair != pair {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("example is {}, expected {pair}", e.example.pair),
            });
        }
        examples.push(e);
    }
    Ok(AugmentedDemonstration {
        pair: pair.clone(),
        examples,
    })
}
