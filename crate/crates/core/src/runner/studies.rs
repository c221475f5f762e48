use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::config::{ExperimentConfig, Level};
use super::translation::ZERO_SHOT;
use super::{
    average_rows, fill_deltas, prepare_direction, AverageRow, CorrelationRow, DemoSpec, DirectionData, Env, RowKey,
    RunOutput, ScoreRow,
};
use crate::backend::Backend;
use crate::corpus::{write_file, ParallelExample};
use crate::error::{Error, Result};
use crate::features::{compute_feature, CaseContext, Feature};
use crate::metrics::spearman;
use crate::sampling::sample_keyed;
use crate::template::Demonstration;

const SAMPLE: &str = "sample";

fn metric_values(rows: &[ScoreRow], metric: &str) -> Vec<Option<f64>> {
    rows.iter()
        .map(|r| match metric {
            "bleu" => r.bleu,
            _ => r.comet,
        })
        .collect()
}

/// Spearman over positions where both sides are present.
fn correlate(x: &[Option<f64>], y: &[Option<f64>]) -> Result<(f64, f64, usize)> {
    let (a, b): (Vec<f64>, Vec<f64>) = x.iter().zip(y).filter_map(|(a, b)| a.zip(*b)).unzip();
    let c = spearman(&a, &b)?;
    Ok((c.rho, c.p_value, c.n))
}

fn sample_demos(data: &DirectionData, n: usize, seed: u64) -> Result<Vec<ParallelExample>> {
    let ex = data.pool.examples();
    if n > ex.len() {
        return Err(Error::InsufficientPool {
            surviving: ex.len(),
            needed: n,
        });
    }
    let ids: Vec<&str> = ex.iter().map(|e| e.id.as_str()).collect();
    let picked: Vec<ParallelExample> = sample_keyed(&ids, n, seed).into_iter().map(|i| ex[i].clone()).collect();
    log::info!("{}: sampled {n} one-shot demonstrations", data.pair);
    Ok(picked)
}

fn evaluate_samples(
    env: &Env<'_>,
    direction: &str,
    data: &DirectionData,
    test: &super::TestSet,
    demos: &[ParallelExample],
    seed: u64,
) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::with_capacity(demos.len());
    for (i, ex) in demos.iter().enumerate() {
        let key = RowKey {
            direction: direction.to_string(),
            strategy: SAMPLE.into(),
            k: 1,
            seed: Some(seed),
            sample: Some(i),
        };
        let demo = DemoSpec::Parallel(Demonstration::new(data.pair.clone(), vec![ex.clone()])?);
        rows.push(env.evaluate(&key, test, &demo)?);
    }
    Ok(rows)
}

fn zero_row(env: &Env<'_>, direction: &str, test: &super::TestSet) -> Result<ScoreRow> {
    let key = RowKey {
        direction: direction.to_string(),
        strategy: ZERO_SHOT.into(),
        k: 0,
        seed: None,
        sample: None,
    };
    env.evaluate(&key, test, &DemoSpec::zero_shot(&test.pair))
}

/// Feature values for the sampled demonstrations. Features the scorer
/// cannot provide are left out with a note.
fn sample_features(env: &Env<'_>, data: &DirectionData, demos: &[ParallelExample]) -> BTreeMap<Feature, Vec<Option<f64>>> {
    let case = match CaseContext::new(&data.test.sources(), data.pair.src(), env.backend) {
        Ok(c) => Some(c),
        Err(e) => {
            env.note(format!("{}: case similarity features excluded ({e})", data.pair));
            None
        }
    };
    let mut out = BTreeMap::new();
    for f in Feature::ALL {
        match compute_feature(demos, f, case.as_ref(), &env.cfg.template, env.backend, env.cfg.jobs) {
            Ok(v) if v.iter().all(Option::is_some) => {
                out.insert(f, v);
            }
            Ok(_) => env.note(format!("{}: {f} unavailable, excluded", data.pair)),
            Err(e) => env.note(format!("{}: {f} excluded ({e})", data.pair)),
        }
    }
    out
}

fn write_feature_table(env: &Env<'_>, pair: &str, demos: &[ParallelExample], feats: &BTreeMap<Feature, Vec<Option<f64>>>) -> Result<()> {
    let mut s = String::from("id");
    for f in feats.keys() {
        let _ = write!(s, "\t{f}");
    }
    s.push('\n');
    for (i, d) in demos.iter().enumerate() {
        s.push_str(&d.id);
        for v in feats.values() {
            let _ = write!(s, "\t{}", v[i].map_or_else(|| "NA".into(), |x| x.to_string()));
        }
        s.push('\n');
    }
    write_file(&env.cfg.output_dir.join("features").join(format!("{pair}.tsv")), s.as_bytes())
}

/// Samples one-shot demonstrations per direction, scores each on the
/// ablation test set and correlates every feature with BLEU and COMET.
pub fn run_correlation_study(cfg: &ExperimentConfig, backend: &dyn Backend) -> Result<RunOutput> {
    cfg.validate()?;
    let env = Env::new(cfg, backend);
    let seed = cfg.seeds[0];
    let mut rows = Vec::new();
    let mut correlations = Vec::new();
    for d in &cfg.directions {
        let data = prepare_direction(d, cfg.split_seed, Level::Sentence)?;
        env.register_pair(&data.pair);
        let direction = data.pair.to_string();
        let demos = sample_demos(&data, cfg.samples.correlation, seed)?;
        let feats = sample_features(&env, &data, &demos);
        write_feature_table(&env, &direction, &demos, &feats)?;

        rows.push(zero_row(&env, &direction, &data.test)?);
        let sample_rows = evaluate_samples(&env, &direction, &data, &data.test, &demos, seed)?;
        for metric in ["bleu", "comet"] {
            let y = metric_values(&sample_rows, metric);
            if y.iter().all(Option::is_none) {
                continue;
            }
            for (f, x) in &feats {
                match correlate(x, &y) {
                    Ok((rho, p, n)) => correlations.push(CorrelationRow {
                        direction: direction.clone(),
                        feature: f.to_string(),
                        metric: metric.into(),
                        rho,
                        p_value: Some(p),
                        n,
                    }),
                    Err(e) => env.note(format!("{direction}: {f} vs {metric}: {e}")),
                }
            }
        }
        rows.extend(sample_rows);
    }
    correlations.extend(pooled(&correlations));
    fill_deltas(&mut rows);
    let averages = average_rows(&rows);
    Ok(env.finish(rows, averages, correlations))
}

/// Mean ρ across directions per (feature, metric).
fn pooled(rows: &[CorrelationRow]) -> Vec<CorrelationRow> {
    let mut groups: Vec<((String, String), Vec<&CorrelationRow>)> = Vec::new();
    for r in rows {
        let key = (r.feature.clone(), r.metric.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((feature, metric), v)| CorrelationRow {
            direction: "average".into(),
            feature,
            metric,
            rho: v.iter().map(|r| r.rho).sum::<f64>() / v.len() as f64,
            p_value: None,
            n: v.iter().map(|r| r.n).sum(),
        })
        .collect()
}

/// Evaluates one sample of demonstrations in two settings and correlates
/// the per-demonstration scores across settings.
pub fn run_transfer_study(cfg: &ExperimentConfig, backend: &dyn Backend) -> Result<RunOutput> {
    cfg.validate()?;
    let tc = cfg.transfer.as_ref().expect("validated");
    let env = Env::new(cfg, backend);
    let seed = cfg.seeds[0];
    let source = prepare_direction(&cfg.directions[tc.source], cfg.split_seed, Level::Sentence)?;
    let demos = sample_demos(&source, cfg.samples.transfer, seed)?;

    let mut rows = Vec::new();
    let mut per_setting: Vec<Vec<ScoreRow>> = Vec::new();
    let mut averages = Vec::new();
    for (si, setting) in tc.settings.iter().enumerate() {
        let d = &cfg.directions[setting.direction];
        let data = prepare_direction(d, cfg.split_seed, setting.level)?;
        env.register_pair(&data.pair);
        let label = match setting.level {
            Level::Sentence => format!("S{}_{}", si + 1, data.pair),
            Level::Document => format!("S{}_{}_doc", si + 1, data.pair),
        };
        let zero = zero_row(&env, &label, &data.test)?;
        let mut sample_rows = Vec::with_capacity(demos.len());
        for (i, ex) in demos.iter().enumerate() {
            let key = RowKey {
                direction: label.clone(),
                strategy: SAMPLE.into(),
                k: 1,
                seed: Some(seed),
                sample: Some(i),
            };
            let demo = DemoSpec::Parallel(Demonstration::new(source.pair.clone(), vec![ex.clone()])?);
            sample_rows.push(env.evaluate(&key, &data.test, &demo)?);
        }
        let mut setting_rows = vec![zero];
        setting_rows.extend(sample_rows.iter().cloned());
        fill_deltas(&mut setting_rows);
        averages.extend(average_rows(&setting_rows).into_iter().map(|a| AverageRow {
            strategy: format!("{label}/{}", a.strategy),
            ..a
        }));
        per_setting.push(setting_rows[1..].to_vec());
        rows.extend(setting_rows);
    }

    let mut correlations = Vec::new();
    for metric in ["bleu", "comet"] {
        let a = metric_values(&per_setting[0], metric);
        let b = metric_values(&per_setting[1], metric);
        if a.iter().all(Option::is_none) || b.iter().all(Option::is_none) {
            continue;
        }
        match correlate(&a, &b) {
            Ok((rho, p, n)) => correlations.push(CorrelationRow {
                direction: format!("{}~{}", per_setting[0][0].direction, per_setting[1][0].direction),
                feature: "cross_setting".into(),
                metric: metric.into(),
                rho,
                p_value: Some(p),
                n,
            }),
            Err(e) => env.note(format!("cross-setting {metric}: {e}")),
        }
    }
    Ok(env.finish(rows, averages, correlations))
}
