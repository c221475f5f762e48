//! Parallel and monolingual data: loading, ablation splits, document chunks.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling;

/// A language identifier such as `en`, `de` or `zh`.
///
/// Codes are open-ended; display names live in the
/// [`LanguageNameTable`](crate::template::LanguageNameTable).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LangCode(String);

impl LangCode {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into().trim().to_ascii_lowercase();
        if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::arg(format!("invalid language code `{code}`")));
        }
        Ok(LangCode(code))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Languages written without spaces between words, whose length is
    /// counted in characters.
    pub fn is_character_segmented(&self) -> bool {
        matches!(self.0.split(['-', '_']).next(), Some("zh" | "ja"))
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for LangCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LangCode::new(s)
    }
}

/// A translation direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawPair")]
pub struct LanguagePair {
    src: LangCode,
    tgt: LangCode,
}

/// Either `{"src": .., "tgt": ..}` or the compact `"de-en"` form.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawPair {
    Fields { src: LangCode, tgt: LangCode },
    Compact(String),
}

impl TryFrom<RawPair> for LanguagePair {
    type Error = Error;
    fn try_from(raw: RawPair) -> Result<Self> {
        match raw {
            RawPair::Fields { src, tgt } => LanguagePair::new(src, tgt),
            RawPair::Compact(s) => LanguagePair::parse(&s),
        }
    }
}

impl LanguagePair {
    pub fn new(src: LangCode, tgt: LangCode) -> Result<Self> {
        if src == tgt {
            return Err(Error::arg(format!("source and target language are both `{src}`")));
        }
        Ok(LanguagePair { src, tgt })
    }

    /// Parses `"de-en"` style direction strings.
    pub fn parse(s: &str) -> Result<Self> {
        let (src, tgt) = s
            .split_once(['-', '>'])
            .ok_or_else(|| Error::arg(format!("expected `src-tgt`, got `{s}`")))?;
        LanguagePair::new(src.trim_end_matches('-').parse()?, tgt.trim_start_matches('>').parse()?)
    }

    pub fn src(&self) -> &LangCode {
        &self.src
    }

    pub fn tgt(&self) -> &LangCode {
        &self.tgt
    }

    pub fn reversed(&self) -> LanguagePair {
        LanguagePair {
            src: self.tgt.clone(),
            tgt: self.src.clone(),
        }
    }
}

impl fmt::Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

/// One source/target sentence pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelExample {
    pub id: String,
    pub source_text: String,
    pub target_text: String,
    pub pair: LanguagePair,
}

impl ParallelExample {
    pub fn new(
        id: impl Into<String>,
        source_text: impl Into<String>,
        target_text: impl Into<String>,
        pair: LanguagePair,
    ) -> Result<Self> {
        let (id, source_text, target_text) = (id.into(), source_text.into(), target_text.into());
        if source_text.trim().is_empty() || target_text.trim().is_empty() {
            return Err(Error::arg(format!("example `{id}` has an empty side")));
        }
        Ok(ParallelExample {
            id,
            source_text,
            target_text,
            pair,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonolingualExample {
    pub id: String,
    pub text: String,
    pub lang: LangCode,
}

impl MonolingualExample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: LangCode) -> Result<Self> {
        let (id, text) = (id.into(), text.into());
        if text.trim().is_empty() {
            return Err(Error::arg(format!("monolingual example `{id}` is empty")));
        }
        Ok(MonolingualExample { id, text, lang })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    HighQuality,
    LowQuality,
}

/// A selection pool: examples of one direction with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePool {
    pair: LanguagePair,
    tier: Tier,
    examples: Vec<ParallelExample>,
}

impl ExamplePool {
    pub fn new(pair: LanguagePair, tier: Tier, examples: Vec<ParallelExample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if ex.pair != pair {
                return Err(Error::arg(format!(
                    "example `{}` is {} but the pool is {}",
                    ex.id, ex.pair, pair
                )));
            }
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
        }
        Ok(ExamplePool { pair, tier, examples })
    }

    pub fn pair(&self) -> &LanguagePair {
        &self.pair
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn examples(&self) -> &[ParallelExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ParallelExample> {
        self.examples.iter().find(|e| e.id == id)
    }

    /// Keeps the examples accepted by `keep`, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&ParallelExample) -> bool) -> ExamplePool {
        ExamplePool {
            pair: self.pair.clone(),
            tier: self.tier,
            examples: self.examples.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }
}

/// Documents of aligned sentences, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DocumentCorpus {
    pub documents: Vec<(String, Vec<ParallelExample>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolFormat {
    Jsonl,
    Tsv,
}

impl PoolFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" => Some(PoolFormat::Jsonl),
            "tsv" | "txt" => Some(PoolFormat::Tsv),
            _ => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    src: String,
    tgt: String,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads a parallel pool. Records keep file order; missing ids become
/// `"<filename>:<line>"`.
pub fn load_pool(path: &Path, format: PoolFormat, pair: &LanguagePair, tier: Tier) -> Result<ExamplePool> {
    let text = read_text(path)?;
    let label = file_label(path);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let (id, src, tgt) = match format {
            PoolFormat::Tsv => {
                let fields: Vec<&str> = line.split('\t').collect();
                match fields.as_slice() {
                    [src, tgt] => (None, *src, *tgt),
                    [score, src, tgt] if score.trim().parse::<f64>().is_ok() => (None, *src, *tgt),
                    _ => {
                        return Err(parse_err(
                            lineno,
                            format!("expected `src<TAB>tgt` or `score<TAB>src<TAB>tgt`, found {} field(s)", fields.len()),
                        ))
                    }
                }
            }
            PoolFormat::Jsonl => {
                let rec: PoolRecord = serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
                examples.push((lineno, rec.id, rec.src, rec.tgt));
                continue;
            }
        };
        examples.push((lineno, id, src.to_string(), tgt.to_string()));
    }
    if examples.is_empty() {
        return Err(Error::EmptyPool(path.to_path_buf()));
    }

    let mut out = Vec::with_capacity(examples.len());
    for (lineno, id, src, tgt) in examples {
        let id = id.unwrap_or_else(|| format!("{label}:{lineno}"));
        if !seen.insert(id.clone()) {
            return Err(parse_err(lineno, format!("duplicate id `{id}`")));
        }
        let ex = ParallelExample::new(id, src, tgt, pair.clone()).map_err(|e| parse_err(lineno, e.to_string()))?;
        out.push(ex);
    }
    ExamplePool::new(pair.clone(), tier, out)
}

/// Writes examples as pool JSONL (`{"id","src","tgt"}` per line).
pub fn write_pool_jsonl(path: &Path, examples: &[ParallelExample]) -> Result<()> {
    let mut buf = Vec::new();
    for ex in examples {
        let rec = PoolRecord {
            id: Some(ex.id.clone()),
            src: ex.source_text.clone(),
            tgt: ex.target_text.clone(),
        };
        serde_json::to_writer(&mut buf, &rec)?;
        buf.push(b'\n');
    }
    write_file(path, &buf)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// One sentence per line; blank lines are skipped but keep their line number
/// out of the id sequence.
pub fn load_monolingual(path: &Path, lang: &LangCode) -> Result<Vec<MonolingualExample>> {
    let text = read_text(path)?;
    let label = file_label(path);
    let out: Vec<_> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| MonolingualExample {
            id: format!("{label}:{}", i + 1),
            text: l.to_string(),
            lang: lang.clone(),
        })
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyPool(path.to_path_buf()));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct DocumentRecord {
    doc_id: String,
    sentences: Vec<PoolRecord>,
}

/// Loads `{"doc_id", "sentences": [{"src","tgt"}, ...]}` records.
pub fn load_documents(path: &Path, pair: &LanguagePair) -> Result<DocumentCorpus> {
    let text = read_text(path)?;
    let mut documents = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let rec: DocumentRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let sentences = rec
            .sentences
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let id = s.id.unwrap_or_else(|| format!("{}:{}", rec.doc_id, i + 1));
                ParallelExample::new(id, s.src, s.tgt, pair.clone())
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| parse_err(e.to_string()))?;
        documents.push((rec.doc_id, sentences));
    }
    Ok(DocumentCorpus { documents })
}

/// Holds out `n_test` examples as an ablation test set; the rest form the
/// selection pool. Both halves keep the pool's order.
pub fn split_ablation(pool: &ExamplePool, n_test: usize, seed: u64) -> Result<(Vec<ParallelExample>, ExamplePool)> {
    if n_test >= pool.len() {
        return Err(Error::arg(format!(
            "ablation test size {n_test} must be smaller than the pool ({})",
            pool.len()
        )));
    }
    let ids: Vec<&str> = pool.examples.iter().map(|e| e.id.as_str()).collect();
    let mut picked = vec![false; pool.len()];
    for i in sampling::sample_keyed(&ids, n_test, seed) {
        picked[i] = true;
    }
    let (mut test, mut rest) = (Vec::with_capacity(n_test), Vec::with_capacity(pool.len() - n_test));
    for (ex, is_test) in pool.examples.iter().zip(picked) {
        if is_test {
            test.push(ex.clone());
        } else {
            rest.push(ex.clone());
        }
    }
    Ok((test, ExamplePool::new(pool.pair.clone(), pool.tier, rest)?))
}

/// Splits a document into consecutive non-overlapping chunks of
/// `chunk_size` sentences. A short final chunk is kept as is.
pub fn chunk_document<T: Clone>(doc: &[T], chunk_size: usize) -> Result<Vec<Vec<T>>> {
    if chunk_size == 0 {
        return Err(Error::arg("chunk size must be at least 1"));
    }
    Ok(doc.chunks(chunk_size).map(<[T]>::to_vec).collect())
}
