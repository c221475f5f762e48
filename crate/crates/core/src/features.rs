//! The seven per-example features used to study and select demonstrations.
//!
//! * `slength` / `tlength`: token counts of the two sides.
//! * `lm_score`: length-normalized log-likelihood of the completed example
//!   block under the language model.
//! * `mt_score`: reference-free QE score of the example's translation.
//! * `sem_score`: cosine between source and target sentence embeddings.
//! * `case_sem_src` / `case_sem_tgt`: mean cosine between each test input
//!   and the example's source (target) side.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, EmbeddingVector};
use crate::corpus::{write_file, LangCode, ParallelExample};
use crate::error::{Error, Result};
use crate::par::map_bounded;
use crate::template::{PromptTemplate, Renderer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub slength: usize,
    pub tlength: usize,
    pub lm_score: f64,
    pub mt_score: Option<f64>,
    pub sem_score: f64,
    pub case_sem_src: Option<f64>,
    pub case_sem_tgt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "String")]
pub enum Feature {
    Slength,
    Tlength,
    LmScore,
    MtScore,
    SemScore,
    CaseSemSrc,
    CaseSemTgt,
}

impl Feature {
    pub const ALL: [Feature; 7] = [
        Feature::Slength,
        Feature::Tlength,
        Feature::LmScore,
        Feature::MtScore,
        Feature::SemScore,
        Feature::CaseSemSrc,
        Feature::CaseSemTgt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Slength => "slength",
            Feature::Tlength => "tlength",
            Feature::LmScore => "lm_score",
            Feature::MtScore => "mt_score",
            Feature::SemScore => "sem_score",
            Feature::CaseSemSrc => "case_sem_src",
            Feature::CaseSemTgt => "case_sem_tgt",
        }
    }

    pub fn get(self, v: &FeatureVector) -> Option<f64> {
        match self {
            Feature::Slength => Some(v.slength as f64),
            Feature::Tlength => Some(v.tlength as f64),
            Feature::LmScore => Some(v.lm_score),
            Feature::MtScore => v.mt_score,
            Feature::SemScore => Some(v.sem_score),
            Feature::CaseSemSrc => v.case_sem_src,
            Feature::CaseSemTgt => v.case_sem_tgt,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        // accepts `lm_score`, `LMScore`, `CaseSemScore-Tgt`, ...
        let squash = |x: &str| x.to_ascii_lowercase().replace(['_', '-'], "").replace("score", "");
        let norm = squash(s.trim());
        Feature::ALL
            .into_iter()
            .find(|f| squash(f.name()) == norm)
            .ok_or_else(|| Error::arg(format!("unknown feature `{s}`")))
    }
}

impl TryFrom<String> for Feature {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Whitespace tokens, or non-whitespace characters for languages written
/// without word spacing.
pub fn token_count(text: &str, lang: &LangCode) -> usize {
    if lang.is_character_segmented() {
        text.chars().filter(|c| !c.is_whitespace()).count()
    } else {
        text.split_whitespace().count()
    }
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::LengthMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn lm_score(example: &ParallelExample, t: &PromptTemplate, backend: &dyn Backend) -> Result<f64> {
    let text = Renderer::default().completed_example(t, example)?;
    Ok(backend.score_loglikelihood(&text)?.per_token()?)
}

pub fn sem_score(example: &ParallelExample, backend: &dyn Backend) -> Result<f64> {
    let src = backend.embed(&example.source_text, example.pair.src())?;
    let tgt = backend.embed(&example.target_text, example.pair.tgt())?;
    cosine(&src, &tgt)
}

/// QE score of the example; `None` when the scorer is degraded.
pub fn mt_score(example: &ParallelExample, backend: &dyn Backend) -> Result<Option<f64>> {
    match backend.qe_score(&example.source_text, &example.target_text) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_degraded() => {
            log::warn!("MT score for `{}` missing: {e}", example.id);
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Src,
    Tgt,
}

/// Test inputs embedded once, reused across every example.
#[derive(Debug, Clone)]
pub struct CaseContext {
    embeddings: Vec<EmbeddingVector>,
}

impl CaseContext {
    pub fn new(test_inputs: &[&str], lang: &LangCode, backend: &dyn Backend) -> Result<Self> {
        if test_inputs.is_empty() {
            return Err(Error::arg("case similarity needs at least one test input"));
        }
        let embeddings = test_inputs
            .iter()
            .map(|t| backend.embed(t, lang))
            .collect::<std::result::Result<_, _>>()?;
        Ok(CaseContext { embeddings })
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn case_sem(&self, example: &ParallelExample, side: Side, backend: &dyn Backend) -> Result<f64> {
        let side_vec = match side {
            Side::Src => backend.embed(&example.source_text, example.pair.src())?,
            Side::Tgt => backend.embed(&example.target_text, example.pair.tgt())?,
        };
        let mut sum = 0.0;
        for e in &self.embeddings {
            sum += cosine(e, &side_vec)?;
        }
        Ok(sum / self.embeddings.len() as f64)
    }
}

/// Mean cosine between every test input and one side of the example.
pub fn case_sem(
    example: &ParallelExample,
    test_inputs: &[&str],
    test_lang: &LangCode,
    side: Side,
    backend: &dyn Backend,
) -> Result<f64> {
    CaseContext::new(test_inputs, test_lang, backend)?.case_sem(example, side, backend)
}

/// All seven features. Case similarities are missing when `case` is `None`,
/// MT score when the QE scorer is degraded.
pub fn compute_all(
    example: &ParallelExample,
    case: Option<&CaseContext>,
    t: &PromptTemplate,
    backend: &dyn Backend,
) -> Result<FeatureVector> {
    let (case_sem_src, case_sem_tgt) = match case {
        Some(ctx) => (
            Some(ctx.case_sem(example, Side::Src, backend)?),
            Some(ctx.case_sem(example, Side::Tgt, backend)?),
        ),
        None => (None, None),
    };
    Ok(FeatureVector {
        slength: token_count(&example.source_text, example.pair.src()),
        tlength: token_count(&example.target_text, example.pair.tgt()),
        lm_score: lm_score(example, t, backend)?,
        mt_score: mt_score(example, backend)?,
        sem_score: sem_score(example, backend)?,
        case_sem_src,
        case_sem_tgt,
    })
}

/// Computes one feature for every example, in input order.
pub fn compute_feature(
    examples: &[ParallelExample],
    feature: Feature,
    case: Option<&CaseContext>,
    t: &PromptTemplate,
    backend: &dyn Backend,
    jobs: usize,
) -> Result<Vec<Option<f64>>> {
    map_bounded(examples, jobs, |ex| -> Result<Option<f64>> {
        Ok(match feature {
            Feature::Slength => Some(token_count(&ex.source_text, ex.pair.src()) as f64),
            Feature::Tlength => Some(token_count(&ex.target_text, ex.pair.tgt()) as f64),
            Feature::LmScore => Some(lm_score(ex, t, backend)?),
            Feature::MtScore => mt_score(ex, backend)?,
            Feature::SemScore => Some(sem_score(ex, backend)?),
            Feature::CaseSemSrc | Feature::CaseSemTgt => match case {
                Some(ctx) => {
                    let side = if feature == Feature::CaseSemSrc { Side::Src } else { Side::Tgt };
                    Some(ctx.case_sem(ex, side, backend)?)
                }
                None => None,
            },
        })
    })
    .into_iter()
    .collect()
}

pub fn compute_pool(
    examples: &[ParallelExample],
    case: Option<&CaseContext>,
    t: &PromptTemplate,
    backend: &dyn Backend,
    jobs: usize,
) -> Result<Vec<FeatureVector>> {
    map_bounded(examples, jobs, |ex| compute_all(ex, case, t, backend))
        .into_iter()
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// `id` plus seven feature columns; `NA` marks a missing value.
pub fn write_feature_tsv(path: &Path, rows: &[(String, FeatureVector)]) -> Result<()> {
    let mut out = String::from("id");
    for f in Feature::ALL {
        out.push('\t');
        out.push_str(f.name());
    }
    out.push('\n');
    for (id, v) in rows {
        out.push_str(id);
        for f in Feature::ALL {
            out.push('\t');
            out.push_str(&fmt_opt(f.get(v)));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn read_feature_tsv(path: &Path) -> Result<Vec<(String, FeatureVector)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 8 {
            return Err(parse_err(i + 1, format!("expected 8 columns, found {}", cols.len())));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s == "NA" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| parse_err(i + 1, format!("bad number `{s}`")))
            }
        };
        let req = |s: &str| -> Result<f64> { num(s)?.ok_or_else(|| parse_err(i + 1, "required value is NA".into())) };
        rows.push((
            cols[0].to_string(),
            FeatureVector {
                slength: req(cols[1])? as usize,
                tlength: req(cols[2])? as usize,
                lm_score: req(cols[3])?,
                mt_score: num(cols[4])?,
                sem_score: req(cols[5])?,
                case_sem_src: num(cols[6])?,
                case_sem_tgt: num(cols[7])?,
            },
        ));
    }
    Ok(rows)
}
