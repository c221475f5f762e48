use std::collections::HashMap;

use super::config::{ExperimentConfig, StrategySpec};
use super::{average_rows, fill_deltas, prepare_direction, DemoSpec, DirectionData, Env, RowKey, RunOutput, ScoreRow};
use crate::augment::{build_back_translated, build_forward_translated, build_random_pairs, sample_monolingual};
use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::features::{compute_feature, CaseContext, Feature};
use crate::selection::{select_combined, select_random, select_topk_block};
use crate::template::OneSided;

pub(crate) const ZERO_SHOT: &str = "zero_shot";

type FeatureMap = HashMap<String, f64>;

/// Feature values a strategy ranks by, computed once per direction.
enum Prepared {
    None,
    Topk(FeatureMap),
    Combined { sem: FeatureMap, lm: FeatureMap, tlen: FeatureMap },
}

fn feature_map(env: &Env<'_>, data: &DirectionData, feature: Feature) -> Result<FeatureMap> {
    let case = match feature {
        Feature::CaseSemSrc | Feature::CaseSemTgt => {
            Some(CaseContext::new(&data.test.sources(), data.pair.src(), env.backend)?)
        }
        _ => None,
    };
    let values = compute_feature(
        data.pool.examples(),
        feature,
        case.as_ref(),
        &env.cfg.template,
        env.backend,
        env.cfg.jobs,
    )?;
    Ok(data
        .pool
        .examples()
        .iter()
        .zip(values)
        .filter_map(|(e, v)| v.map(|v| (e.id.clone(), v)))
        .collect())
}

fn prepare(env: &Env<'_>, data: &DirectionData, strategy: &StrategySpec) -> Result<Prepared> {
    Ok(match strategy {
        StrategySpec::Topk { feature, .. } => Prepared::Topk(feature_map(env, data, *feature)?),
        StrategySpec::Combined { .. } => Prepared::Combined {
            sem: feature_map(env, data, Feature::SemScore)?,
            lm: feature_map(env, data, Feature::LmScore)?,
            tlen: feature_map(env, data, Feature::Tlength)?,
        },
        _ => Prepared::None,
    })
}

fn mono<'d>(m: &'d Option<Vec<crate::corpus::MonolingualExample>>, what: &str) -> Result<&'d [crate::corpus::MonolingualExample]> {
    m.as_deref().ok_or_else(|| Error::Config(format!("missing {what} monolingual data")))
}

fn build_demo(
    env: &Env<'_>,
    data: &DirectionData,
    strategy: &StrategySpec,
    prepared: &Prepared,
    k: usize,
    seed: u64,
    block: usize,
) -> Result<DemoSpec> {
    let params = strategy.selection_params(k, seed);
    let jobs = env.cfg.jobs;
    Ok(match (strategy, prepared) {
        (StrategySpec::Random { .. }, _) => DemoSpec::Parallel(select_random(&data.pool, &params)?),
        (StrategySpec::Topk { .. }, Prepared::Topk(values)) => {
            DemoSpec::Parallel(select_topk_block(&data.pool, values, &params, block)?)
        }
        (StrategySpec::Combined { params: cp }, Prepared::Combined { sem, lm, tlen }) => {
            DemoSpec::Parallel(select_combined(&data.pool, sem, lm, tlen, k, cp)?)
        }
        (StrategySpec::RandomPairs, _) => DemoSpec::Augmented(build_random_pairs(
            mono(&data.src_mono, "source")?,
            mono(&data.tgt_mono, "target")?,
            &data.pair,
            k,
            seed,
        )?),
        (StrategySpec::BackTranslated { generator }, _) => DemoSpec::Augmented(build_back_translated(
            mono(&data.tgt_mono, "target")?,
            &data.pair,
            generator,
            env.backend,
            k,
            seed,
            jobs,
        )?),
        (StrategySpec::ForwardTranslated { generator }, _) => DemoSpec::Augmented(build_forward_translated(
            mono(&data.src_mono, "source")?,
            &data.pair,
            generator,
            env.backend,
            k,
            seed,
            jobs,
        )?),
        (StrategySpec::SourceOnly, _) => {
            DemoSpec::OneSided(sample_monolingual(mono(&data.src_mono, "source")?, k, seed)?, OneSided::SourceOnly)
        }
        (StrategySpec::TargetOnly, _) => {
            DemoSpec::OneSided(sample_monolingual(mono(&data.tgt_mono, "target")?, k, seed)?, OneSided::TargetOnly)
        }
        _ => unreachable!("feature values are prepared for every ranking strategy"),
    })
}

/// Zero-shot baseline plus every strategy × K × seed, per direction.
pub fn run_translation(cfg: &ExperimentConfig, backend: &dyn Backend) -> Result<RunOutput> {
    cfg.validate()?;
    let env = Env::new(cfg, backend);
    let mut rows: Vec<ScoreRow> = Vec::new();
    for d in &cfg.directions {
        let data = prepare_direction(d, cfg.split_seed, d.level)?;
        env.register_pair(&data.pair);
        let direction = data.pair.to_string();
        let zero_key = RowKey {
            direction: direction.clone(),
            strategy: ZERO_SHOT.into(),
            k: 0,
            seed: None,
            sample: None,
        };
        rows.push(env.evaluate(&zero_key, &data.test, &DemoSpec::zero_shot(&data.pair))?);

        for strategy in &cfg.strategies {
            let label = strategy.label();
            let prepared = prepare(&env, &data, strategy);
            for &k in cfg.k.iter().filter(|&&k| k > 0) {
                for (block, &seed) in cfg.seeds.iter().enumerate() {
                    let key = RowKey {
                        direction: direction.clone(),
                        strategy: label.clone(),
                        k,
                        seed: Some(seed),
                        sample: None,
                    };
                    let demo = prepared
                        .as_ref()
                        .map_err(|e| Error::arg(format!("feature computation failed: {e}")))
                        .and_then(|p| build_demo(&env, &data, strategy, p, k, seed, block));
                    let row = match demo {
                        Ok(demo) => env.evaluate(&key, &data.test, &demo)?,
                        Err(e) => env.error_row(&key, &data.test, String::new(), e),
                    };
                    rows.push(row);
                }
            }
        }
    }
    fill_deltas(&mut rows);
    let averages = average_rows(&rows);
    Ok(env.finish(rows, averages, Vec::new()))
}
