//! Demonstration selection: random, feature top-k, and the staged
//! combined strategy for large low-quality pools.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{write_file, ExamplePool, LanguagePair, ParallelExample};
use crate::error::{Error, Result};
use crate::features::token_count;
use crate::sampling::sample_keyed;
use crate::template::Demonstration;

/// Pool size the combined strategy's absolute stage counts were tuned for.
pub const REFERENCE_POOL_SIZE: usize = 110_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// Lowest score first, so the best example sits next to the test input.
    #[default]
    AscendingScore,
    PoolOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub k: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub seed: u64,
    pub ordering: Ordering,
}

impl SelectionParams {
    pub fn new(k: usize, seed: u64) -> Self {
        SelectionParams {
            k,
            min_tokens: 10,
            max_tokens: 100,
            seed,
            ordering: Ordering::AscendingScore,
        }
    }

    pub fn with_bounds(mut self, min_tokens: usize, max_tokens: usize) -> Self {
        self.min_tokens = min_tokens;
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_ordering(mut self, ordering: Ordering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::arg("k must be at least 1"));
        }
        if self.min_tokens >= self.max_tokens {
            return Err(Error::arg(format!(
                "min_tokens ({}) must be below max_tokens ({})",
                self.min_tokens, self.max_tokens
            )));
        }
        Ok(())
    }

    /// Both sides must fall within `[min_tokens, max_tokens]`.
    pub fn admits(&self, ex: &ParallelExample) -> bool {
        let ok = |n: usize| (self.min_tokens..=self.max_tokens).contains(&n);
        ok(token_count(&ex.source_text, ex.pair.src())) && ok(token_count(&ex.target_text, ex.pair.tgt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombinedParams {
    pub sem_keep: usize,
    pub sem_drop: usize,
    pub lm_keep: usize,
}

impl Default for CombinedParams {
    fn default() -> Self {
        CombinedParams {
            sem_keep: 11_000,
            sem_drop: 1_000,
            lm_keep: 1_000,
        }
    }
}

/// Stage sizes after scaling to an actual pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub sem_keep: usize,
    pub sem_drop: usize,
    pub lm_keep: usize,
}

impl CombinedParams {
    pub fn validate(&self) -> Result<()> {
        if self.sem_drop >= self.sem_keep {
            return Err(Error::arg(format!(
                "sem_drop ({}) must be below sem_keep ({})",
                self.sem_drop, self.sem_keep
            )));
        }
        if self.lm_keep > self.sem_keep - self.sem_drop {
            return Err(Error::arg(format!(
                "lm_keep ({}) exceeds sem_keep - sem_drop ({})",
                self.lm_keep,
                self.sem_keep - self.sem_drop
            )));
        }
        Ok(())
    }

    /// Scales each count to `pool` relative to [`REFERENCE_POOL_SIZE`]
    /// (ceiling, floor 1, never above the configured value), then clamps
    /// each stage to what the previous one left.
    pub fn stage_counts(&self, pool: usize) -> StageCounts {
        let scale = |c: usize| {
            if c == 0 {
                0
            } else {
                c.min((c * pool).div_ceil(REFERENCE_POOL_SIZE).max(1))
            }
        };
        let sem_keep = scale(self.sem_keep).min(pool);
        let sem_drop = scale(self.sem_drop).min(sem_keep.saturating_sub(1));
        let lm_keep = scale(self.lm_keep).min(sem_keep - sem_drop);
        StageCounts {
            sem_keep,
            sem_drop,
            lm_keep,
        }
    }
}

fn survivors<'a>(pool: &'a ExamplePool, params: &SelectionParams) -> Result<Vec<&'a ParallelExample>> {
    params.validate()?;
    let kept: Vec<_> = pool.examples().iter().filter(|e| params.admits(e)).collect();
    if kept.len() < params.k {
        return Err(Error::InsufficientPool {
            surviving: kept.len(),
            needed: params.k,
        });
    }
    Ok(kept)
}

fn lookup(values: &HashMap<String, f64>, id: &str) -> Result<f64> {
    match values.get(id) {
        Some(v) if v.is_finite() => Ok(*v),
        Some(v) => Err(Error::arg(format!("feature value for `{id}` is {v}"))),
        None => Err(Error::MissingFeature(id.to_string())),
    }
}

/// Sorts by value descending, ties by ascending id.
fn rank_desc(items: &mut [(&ParallelExample, f64)]) {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
}

/// `k` examples drawn without replacement from the length-filtered pool.
/// Examples appear in draw order.
pub fn select_random(pool: &ExamplePool, params: &SelectionParams) -> Result<Demonstration> {
    let kept = survivors(pool, params)?;
    let ids: Vec<&str> = kept.iter().map(|e| e.id.as_str()).collect();
    let picked = sample_keyed(&ids, params.k, params.seed);
    Demonstration::new(pool.pair().clone(), picked.into_iter().map(|i| kept[i].clone()).collect())
}

/// Length-filtered examples ranked by feature value, best first.
pub fn rank_by_feature<'a>(
    pool: &'a ExamplePool,
    values: &HashMap<String, f64>,
    params: &SelectionParams,
) -> Result<Vec<(&'a ParallelExample, f64)>> {
    let kept = survivors(pool, params)?;
    let mut scored = kept
        .into_iter()
        .map(|e| Ok((e, lookup(values, &e.id)?)))
        .collect::<Result<Vec<_>>>()?;
    rank_desc(&mut scored);
    Ok(scored)
}

/// The `k` highest-valued surviving examples, assembled per `params.ordering`.
pub fn select_topk_by_feature(
    pool: &ExamplePool,
    values: &HashMap<String, f64>,
    params: &SelectionParams,
) -> Result<Demonstration> {
    select_topk_block(pool, values, params, 0)
}

/// Like [`select_topk_by_feature`] but takes the `block`-th run of `k`
/// from the ranking. Gives disjoint demonstrations for repeated samples.
pub fn select_topk_block(
    pool: &ExamplePool,
    values: &HashMap<String, f64>,
    params: &SelectionParams,
    block: usize,
) -> Result<Demonstration> {
    let ranked = rank_by_feature(pool, values, params)?;
    let start = block * params.k;
    if start + params.k > ranked.len() {
        return Err(Error::InsufficientPool {
            surviving: ranked.len(),
            needed: start + params.k,
        });
    }
    let mut chosen = ranked[start..start + params.k].to_vec();
    let position: HashMap<&str, usize> = pool.examples().iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    chosen.sort_by_key(|(e, _)| position[e.id.as_str()]);
    let scores: Vec<f64> = chosen.iter().map(|c| c.1).collect();
    let examples = chosen.into_iter().map(|c| c.0.clone()).collect();
    order_demonstration(pool.pair(), examples, &scores, params.ordering)
}

/// SemScore top slice minus its head, LMScore re-rank, then TLength.
///
/// The final `k` are ordered by TLength descending, ties by id.
pub fn select_combined(
    pool: &ExamplePool,
    sem: &HashMap<String, f64>,
    lm: &HashMap<String, f64>,
    tlen: &HashMap<String, f64>,
    k: usize,
    params: &CombinedParams,
) -> Result<Demonstration> {
    params.validate()?;
    if pool.is_empty() {
        return Err(Error::arg("combined selection needs a nonempty pool"));
    }
    let counts = params.stage_counts(pool.len());

    let mut stage = pool
        .examples()
        .iter()
        .map(|e| Ok((e, lookup(sem, &e.id)?)))
        .collect::<Result<Vec<_>>>()?;
    rank_desc(&mut stage);
    stage.truncate(counts.sem_keep);
    let rest = &stage[counts.sem_drop..];

    let mut stage = rest
        .iter()
        .map(|(e, _)| Ok((*e, lookup(lm, &e.id)?)))
        .collect::<Result<Vec<_>>>()?;
    rank_desc(&mut stage);
    stage.truncate(counts.lm_keep);

    if k > stage.len() {
        return Err(Error::InsufficientPool {
            surviving: stage.len(),
            needed: k,
        });
    }
    let mut stage = stage
        .iter()
        .map(|(e, _)| Ok((*e, lookup(tlen, &e.id)?)))
        .collect::<Result<Vec<_>>>()?;
    rank_desc(&mut stage);
    stage.truncate(k);
    Demonstration::new(pool.pair().clone(), stage.into_iter().map(|(e, _)| e.clone()).collect())
}

pub fn order_demonstration(
    pair: &LanguagePair,
    examples: Vec<ParallelExample>,
    scores: &[f64],
    ordering: Ordering,
) -> Result<Demonstration> {
    if examples.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: examples.len(),
            right: scores.len(),
        });
    }
    let examples = match ordering {
        Ordering::PoolOrder => examples,
        Ordering::AscendingScore => {
            let mut paired: Vec<_> = examples.into_iter().zip(scores.iter().copied()).collect();
            paired.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.id.cmp(&b.0.id)));
            paired.into_iter().map(|p| p.0).collect()
        }
    };
    Demonstration::new(pair.clone(), examples)
}

#[derive(Serialize, Deserialize)]
struct DemoLine {
    id: String,
    src: String,
    tgt: String,
}

/// JSONL bytes: one `{id, src, tgt}` object per example, in order.
pub fn demonstration_jsonl(demo: &Demonstration) -> Vec<u8> {
    let mut out = Vec::new();
    for e in demo.examples() {
        let line = DemoLine {
            id: e.id.clone(),
            src: e.source_text.clone(),
            tgt: e.target_text.clone(),
        };
        serde_json::to_writer(&mut out, &line).expect("demonstration line serializes");
        out.push(b'\n');
    }
    out
}

/// SHA-256 of the demonstration's JSONL serialization.
pub fn demonstration_hash(demo: &Demonstration) -> String {
    hex::encode(Sha256::digest(demonstration_jsonl(demo)))
}

pub fn write_demonstration(path: &Path, demo: &Demonstration) -> Result<()> {
    write_file(path, &demonstration_jsonl(demo))
}

pub fn read_demonstration(path: &Path, pair: &LanguagePair) -> Result<Demonstration> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let d: DemoLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        examples.push(ParallelExample::new(d.id, d.src, d.tgt, pair.clone()).map_err(|e| parse_err(e.to_string()))?);
    }
    Demonstration::new(pair.clone(), examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tier;
    use proptest::prelude::*;

    fn pair() -> LanguagePair {
        LanguagePair::parse("de-en").unwrap()
    }

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    fn pool_of(specs: &[(&str, usize)]) -> ExamplePool {
        let ex = specs
            .iter()
            .map(|(id, n)| ParallelExample::new(*id, words(*n), words(*n), pair()).unwrap())
            .collect();
        ExamplePool::new(pair(), Tier::HighQuality, ex).unwrap()
    }

    fn values(v: &[(&str, f64)]) -> HashMap<String, f64> {
        v.iter().map(|(k, x)| (k.to_string(), *x)).collect()
    }

    fn ids(d: &Demonstration) -> Vec<&str> {
        d.examples().iter().map(|e| e.id.as_str()).collect()
    }

    #[test]
    fn random_is_seeded() {
        let pool = pool_of(&[("a", 12), ("b", 12), ("c", 12), ("d", 12), ("e", 12)]);
        let p = SelectionParams::new(3, 9);
        assert_eq!(select_random(&pool, &p).unwrap(), select_random(&pool, &p).unwrap());
        assert_eq!(select_random(&pool, &p).unwrap().len(), 3);
    }

    #[test]
    fn random_exact_survivors() {
        let pool = pool_of(&[("a", 12), ("b", 5), ("c", 12)]);
        let mut got = ids(&select_random(&pool, &SelectionParams::new(2, 1)).unwrap())
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        got.sort();
        assert_eq!(got, ["a", "c"]);
    }

    #[test]
    fn filter_leaves_too_few() {
        let pool = pool_of(&[("a", 5), ("b", 5)]);
        let err = select_random(&pool, &SelectionParams::new(1, 0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientPool { surviving: 0, needed: 1 }));
    }

    #[test]
    fn filter_is_inclusive_and_two_sided() {
        let p = SelectionParams::new(1, 0);
        assert!(p.admits(&ParallelExample::new("x", words(10), words(100), pair()).unwrap()));
        assert!(!p.admits(&ParallelExample::new("x", words(10), words(101), pair()).unwrap()));
        assert!(!p.admits(&ParallelExample::new("x", words(9), words(50), pair()).unwrap()));
    }

    #[test]
    fn topk_basic_and_ties() {
        let pool = pool_of(&[("a", 12), ("b", 12), ("c", 12)]);
        let p = SelectionParams::new(2, 0).with_ordering(Ordering::PoolOrder);
        let d = select_topk_by_feature(&pool, &values(&[("a", 3.0), ("b", 2.0), ("c", 1.0)]), &p).unwrap();
        assert_eq!(ids(&d), ["a", "b"]);
        let pool = pool_of(&[("b", 12), ("a", 12)]);
        let d = select_topk_by_feature(&pool, &values(&[("a", 2.0), ("b", 2.0)]), &SelectionParams::new(1, 0)).unwrap();
        assert_eq!(ids(&d), ["a"]);
    }

    #[test]
    fn topk_ascending_puts_best_last() {
        let specs: Vec<(String, usize)> = (0..8).map(|i| (format!("e{i}"), 12)).collect();
        let refs: Vec<(&str, usize)> = specs.iter().map(|(s, n)| (s.as_str(), *n)).collect();
        let pool = pool_of(&refs);
        let v: HashMap<String, f64> = (0..8).map(|i| (format!("e{i}"), i as f64)).collect();
        let d = select_topk_by_feature(&pool, &v, &SelectionParams::new(5, 0)).unwrap();
        assert_eq!(ids(&d), ["e3", "e4", "e5", "e6", "e7"]);
    }

    #[test]
    fn topk_missing_value() {
        let pool = pool_of(&[("a", 12), ("b", 12)]);
        let err = select_topk_by_feature(&pool, &values(&[("a", 1.0)]), &SelectionParams::new(1, 0)).unwrap_err();
        assert!(matches!(err, Error::MissingFeature(id) if id == "b"));
    }

    #[test]
    fn topk_blocks_are_disjoint() {
        let pool = pool_of(&[("a", 12), ("b", 12), ("c", 12), ("d", 12)]);
        let v = values(&[("a", 4.0), ("b", 3.0), ("c", 2.0), ("d", 1.0)]);
        let p = SelectionParams::new(2, 0).with_ordering(Ordering::PoolOrder);
        assert_eq!(ids(&select_topk_block(&pool, &v, &p, 1).unwrap()), ["c", "d"]);
        assert!(select_topk_block(&pool, &v, &p, 2).is_err());
    }

    #[test]
    fn ordering_rules() {
        let ex: Vec<_> = ["x", "y", "z"]
            .iter()
            .map(|id| ParallelExample::new(*id, "s", "t", pair()).unwrap())
            .collect();
        let d = order_demonstration(&pair(), ex.clone(), &[3.0, 1.0, 2.0], Ordering::AscendingScore).unwrap();
        assert_eq!(ids(&d), ["y", "z", "x"]);
        let d = order_demonstration(&pair(), ex.clone(), &[3.0, 1.0, 2.0], Ordering::PoolOrder).unwrap();
        assert_eq!(ids(&d), ["x", "y", "z"]);
        let rev: Vec<_> = ex.iter().rev().cloned().collect();
        let d = order_demonstration(&pair(), rev, &[1.0; 3], Ordering::AscendingScore).unwrap();
        assert_eq!(ids(&d), ["x", "y", "z"]);
        assert!(order_demonstration(&pair(), ex, &[1.0], Ordering::PoolOrder).is_err());
    }

    #[test]
    fn combined_invariants_and_clamping() {
        assert!(CombinedParams { sem_keep: 5, sem_drop: 5, lm_keep: 0 }.validate().is_err());
        assert!(CombinedParams { sem_keep: 5, sem_drop: 1, lm_keep: 5 }.validate().is_err());
        let c = CombinedParams::default().stage_counts(110_000);
        assert_eq!((c.sem_keep, c.sem_drop, c.lm_keep), (11_000, 1_000, 1_000));
        let c = CombinedParams::default().stage_counts(5_500);
        assert_eq!((c.sem_keep, c.sem_drop, c.lm_keep), (550, 50, 50));
        let c = CombinedParams::default().stage_counts(3);
        assert_eq!((c.sem_keep, c.sem_drop, c.lm_keep), (1, 0, 1));
    }

    #[test]
    fn combined_degenerate_pool_takes_longest() {
        let pool = pool_of(&[("a", 12), ("b", 12), ("c", 12), ("d", 12), ("e", 12)]);
        let sem = values(&[("a", 5.0), ("b", 4.0), ("c", 3.0), ("d", 2.0), ("e", 1.0)]);
        let lm = values(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0), ("e", 5.0)]);
        let tl = values(&[("a", 10.0), ("b", 30.0), ("c", 20.0), ("d", 15.0), ("e", 12.0)]);
        let p = CombinedParams { sem_keep: REFERENCE_POOL_SIZE, sem_drop: 0, lm_keep: REFERENCE_POOL_SIZE };
        assert_eq!(ids(&select_combined(&pool, &sem, &lm, &tl, 1, &p).unwrap()), ["b"]);
        assert!(select_combined(&pool, &sem, &lm, &tl, 6, &p).is_err());
    }

    #[test]
    fn jsonl_round_trip_and_hash() {
        let pool = pool_of(&[("a", 12), ("b", 12)]);
        let d = Demonstration::new(pair(), pool.examples().to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demo.jsonl");
        write_demonstration(&path, &d).unwrap();
        assert_eq!(read_demonstration(&path, &pair()).unwrap(), d);
        let swapped = Demonstration::new(pair(), pool.examples().iter().rev().cloned().collect()).unwrap();
        assert_ne!(demonstration_hash(&d), demonstration_hash(&swapped));
        assert_eq!(demonstration_hash(&d).len(), 64);
    }

    fn arb_case() -> impl Strategy<Value = (Vec<(usize, u8)>, usize)> {
        (prop::collection::vec((5usize..120, 0u8..20), 1..40), 1usize..6)
    }

    fn build(spec: &[(usize, u8)]) -> (ExamplePool, HashMap<String, f64>) {
        let ex: Vec<_> = spec
            .iter()
            .enumerate()
            .map(|(i, (n, _))| ParallelExample::new(format!("id{i:03}"), words(*n), words(*n), pair()).unwrap())
            .collect();
        let v = spec.iter().enumerate().map(|(i, (_, s))| (format!("id{i:03}"), *s as f64)).collect();
        (ExamplePool::new(pair(), Tier::LowQuality, ex).unwrap(), v)
    }

    proptest! {
        #[test]
        fn topk_subset_dominance_scale((spec, k) in arb_case(), c in 0.01f64..100.0) {
            let (pool, v) = build(&spec);
            let p = SelectionParams::new(k, 0);
            let Ok(d) = select_topk_by_feature(&pool, &v, &p) else {
                prop_assert!(spec.iter().filter(|(n, _)| (10..=100).contains(n)).count() < k);
                return Ok(());
            };
            let chosen: Vec<&str> = ids(&d);
            let mut uniq = chosen.clone();
            uniq.sort();
            uniq.dedup();
            prop_assert_eq!(uniq.len(), chosen.len());
            for e in d.examples() {
                prop_assert!(pool.get(&e.id).is_some());
                prop_assert!(p.admits(e));
            }
            let min_in = chosen.iter().map(|id| v[*id]).fold(f64::INFINITY, f64::min);
            for e in pool.examples().iter().filter(|e| p.admits(e) && !chosen.contains(&e.id.as_str())) {
                prop_assert!(v[&e.id] <= min_in);
            }
            let scaled: HashMap<String, f64> = v.iter().map(|(k, x)| (k.clone(), x * c)).collect();
            prop_assert_eq!(select_topk_by_feature(&pool, &scaled, &p).unwrap(), d);
        }

        #[test]
        fn random_subset_no_dup((spec, k) in arb_case(), seed in any::<u64>()) {
            let (pool, _) = build(&spec);
            let p = SelectionParams::new(k, seed);
            if let Ok(d) = select_random(&pool, &p) {
                let mut got: Vec<&str> = ids(&d);
                got.sort();
                got.dedup();
                prop_assert_eq!(got.len(), k);
                prop_assert!(d.examples().iter().all(|e| p.admits(e) && pool.get(&e.id).is_some()));
            }
        }
    }
}
