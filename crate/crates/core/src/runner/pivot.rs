use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::{average_rows, fill_deltas, load_any_pool, prepare_direction, DemoSpec, Env, Generated, RowKey, RunOutput};
use crate::backend::{Backend, GenerationResult};
use crate::corpus::{LanguagePair, Tier};
use crate::decode::translate;
use crate::error::{Error, Result};
use crate::par::map_bounded;
use crate::selection::{select_random, SelectionParams};
use crate::template::{Demonstration, PromptTemplate, Renderer};

#[derive(Debug, Clone, PartialEq)]
pub struct PivotOutcome {
    pub first_prompt: String,
    pub intermediate: String,
    /// `None` when the first hop produced nothing.
    pub output: Option<GenerationResult>,
}

/// Source → pivot → target. The second hop is skipped when the first is empty.
#[allow(clippy::too_many_arguments)]
pub fn pivot_translate(
    backend: &dyn Backend,
    renderer: &Renderer<'_>,
    t: &PromptTemplate,
    first: &LanguagePair,
    first_demo: &Demonstration,
    second: &LanguagePair,
    second_demo: &Demonstration,
    input: &str,
) -> Result<PivotOutcome> {
    if first.tgt() != second.src() {
        return Err(Error::arg(format!("hops {first} and {second} do not meet")));
    }
    let first_prompt = renderer.render_few_shot(t, first, first_demo, input)?;
    let hop1 = translate(backend, renderer, t, first, first_prompt.clone())?;
    if hop1.text.is_empty() {
        return Ok(PivotOutcome {
            first_prompt,
            intermediate: String::new(),
            output: None,
        });
    }
    let second_prompt = renderer.render_few_shot(t, second, second_demo, &hop1.text)?;
    let mut hop2 = translate(backend, renderer, t, second, second_prompt)?;
    hop2.tokens_generated += hop1.tokens_generated;
    hop2.wall_time_s += hop1.wall_time_s;
    Ok(PivotOutcome {
        first_prompt,
        intermediate: hop1.text,
        output: Some(hop2),
    })
}

fn combined_hash(a: &DemoSpec, b: &DemoSpec) -> String {
    hex::encode(Sha256::new().chain_update(a.hash()).chain_update(b.hash()).finalize())
}

/// Direct translation against two-hop pivoting, per direction.
pub fn run_pivoting(cfg: &ExperimentConfig, backend: &dyn Backend) -> Result<RunOutput> {
    cfg.validate()?;
    let pc = cfg.pivot.as_ref().expect("validated");
    let env = Env::new(cfg, backend);
    let t = &cfg.template;
    let strategy = format!("pivot_{}", pc.language);
    let mut rows = Vec::new();
    for d in &cfg.directions {
        let data = prepare_direction(d, cfg.split_seed, d.level)?;
        env.register_pair(&data.pair);
        let direction = data.pair.to_string();
        let first = LanguagePair::new(data.pair.src().clone(), pc.language.clone())?;
        let second = LanguagePair::new(pc.language.clone(), data.pair.tgt().clone())?;
        let hop_pools = if pc.k > 0 {
            let p1 = pc.first_hop_pool.as_ref().expect("validated");
            let p2 = pc.second_hop_pool.as_ref().expect("validated");
            Some((load_any_pool(p1, &first, Tier::HighQuality)?, load_any_pool(p2, &second, Tier::HighQuality)?))
        } else {
            None
        };
        let seeds: Vec<Option<u64>> = if pc.k == 0 { vec![None] } else { cfg.seeds.iter().copied().map(Some).collect() };

        for seed in seeds {
            let pick = |pool, pair: &LanguagePair| -> Result<Demonstration> {
                match seed {
                    Some(s) => select_random(pool, &SelectionParams::new(pc.k, s)),
                    None => Ok(Demonstration::empty(pair.clone())),
                }
            };
            let direct_demo = DemoSpec::Parallel(pick(&data.pool, &data.pair)?);
            let key = RowKey {
                direction: direction.clone(),
                strategy: "direct".into(),
                k: pc.k,
                seed,
                sample: None,
            };
            rows.push(env.evaluate(&key, &data.test, &direct_demo)?);

            let (demo1, demo2) = match &hop_pools {
                Some((p1, p2)) => (pick(p1, &first)?, pick(p2, &second)?),
                None => (Demonstration::empty(first.clone()), Demonstration::empty(second.clone())),
            };
            let (spec1, spec2) = (DemoSpec::Parallel(demo1.clone()), DemoSpec::Parallel(demo2.clone()));
            let hash = combined_hash(&spec1, &spec2);
            let key = RowKey {
                direction: direction.clone(),
                strategy: strategy.clone(),
                k: pc.k,
                seed,
                sample: None,
            };
            let generated: Vec<Generated> = if cfg.dry_run {
                data.test
                    .items
                    .iter()
                    .map(|i| Generated {
                        prompt: env.renderer.render_few_shot(t, &first, &demo1, &i.source).unwrap_or_default(),
                        intermediate: None,
                        result: Err(Error::arg("dry run")),
                    })
                    .collect()
            } else {
                map_bounded(&data.test.items, cfg.jobs, |item| {
                    match pivot_translate(backend, &env.renderer, t, &first, &demo1, &second, &demo2, &item.source) {
                        Ok(o) => Generated {
                            prompt: o.first_prompt,
                            intermediate: Some(o.intermediate),
                            result: Ok(o.output.unwrap_or(GenerationResult {
                                text: String::new(),
                                tokens_generated: 0,
                                wall_time_s: 0.0,
                            })),
                        },
                        Err(e) => Generated {
                            prompt: String::new(),
                            intermediate: None,
                            result: Err(e),
                        },
                    }
                })
            };
            let row = env.score(&key, &data.test, hash, generated)?;
            if row.failed > 0 && row.error.is_none() {
                env.note(format!("{direction} {strategy}: {} segment(s) failed on the first hop", row.failed));
            }
            rows.push(row);
        }
    }
    fill_deltas(&mut rows);
    let averages = average_rows(&rows);
    Ok(env.finish(rows, averages, Vec::new()))
}
