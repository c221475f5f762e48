//! Random, top-k and combined demonstration selection over a synthetic pool.

use std::collections::HashMap;

use mtprompt::selection::{select_combined, select_random, select_topk_by_feature, CombinedParams, SelectionParams};
use mtprompt::{ExamplePool, LanguagePair, ParallelExample};

fn main() -> mtprompt::Result<()> {
    let pair = LanguagePair::parse("de-en")?;
    let examples = (0..400)
        .map(|i| {
            let words = 10 + i % 9;
            let src = vec!["wort"; words].join(" ");
            let tgt = vec!["word"; words + i % 4].join(" ");
            ParallelExample::new(format!("ex{i:02}"), src, tgt, pair.clone())
        })
        .collect::<mtprompt::Result<Vec<_>>>()?;
    let pool = ExamplePool::new(pair, mtprompt::corpus::Tier::HighQuality, examples)?;

    // stand-ins for precomputed feature values
    let value = |f: fn(usize) -> f64| -> HashMap<String, f64> {
        pool.examples().iter().enumerate().map(|(i, e)| (e.id.clone(), f(i))).collect()
    };
    let sem = value(|i| ((i * 37) % 400) as f64 / 400.0);
    let lm = value(|i| -(((i * 13) % 400) as f64) / 100.0);
    let tlen: HashMap<String, f64> = pool
        .examples()
        .iter()
        .map(|e| (e.id.clone(), e.target_text.split_whitespace().count() as f64))
        .collect();

    let ids = |d: &mtprompt::Demonstration| d.examples().iter().map(|e| e.id.as_str()).collect::<Vec<_>>().join(" ");

    for seed in [1, 2] {
        let d = select_random(&pool, &SelectionParams::new(4, seed))?;
        println!("random seed {seed}: {}", ids(&d));
    }
    let d = select_topk_by_feature(&pool, &lm, &SelectionParams::new(4, 0))?;
    println!("top-4 by LM score: {}", ids(&d));

    let params = CombinedParams::default();
    println!("combined stage counts for 400 examples: {:?}", params.stage_counts(pool.len()));
    let d = select_combined(&pool, &sem, &lm, &tlen, 4, &params)?;
    println!("combined: {}", ids(&d));
    Ok(())
}
