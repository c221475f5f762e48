//! Config-driven translation sweep over strategies, K and seeds against a
//! cached mock backend, followed by report and plot output.

use std::fs;

use mtprompt::backend::{CachedBackend, CometMode, QeMode};
use mtprompt::runner::{self, emit_plot_data, write_outputs, ExperimentConfig};
use mtprompt::{LanguagePair, MockBackend, PromptTemplate};

const CONFIG: &str = r#"
kind = "translation"
output_dir = "out"
seeds = [1, 2]
split_seed = 3
k = [0, 1, 4]
jobs = 4

[[strategies]]
kind = "random"

[[strategies]]
kind = "topk"
feature = "lm_score"

[[directions]]
pair = "de-en"
pool = "pool.tsv"
n_test = 10
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let rows: Vec<(String, String)> = (0..50)
        .map(|i| {
            (
                format!("satz {i} über das wetter in der großen alten stadt am fluss"),
                format!("sentence {i} about the weather in the big old city by the river"),
            )
        })
        .collect();
    let tsv: String = rows.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect();
    fs::write(dir.path().join("pool.tsv"), tsv)?;

    // odd sentences come back slightly wrong
    let pair = LanguagePair::parse("de-en")?;
    let t = PromptTemplate::default_a();
    let mut mock = MockBackend::new()
        .with_comet(CometMode::Echo { max: 0.9, min: 0.6 })
        .with_qe(QeMode::Constant(0.7));
    for (i, (src, tgt)) in rows.iter().enumerate() {
        let out = if i % 2 == 0 { tgt.clone() } else { tgt.replace("weather", "climate") };
        mock = mock.with_translation(&t, &pair, src, out);
    }

    let cfg = ExperimentConfig::from_toml_str(CONFIG, dir.path())?;
    cfg.validate()?;
    let cache = CachedBackend::new(mock, dir.path().join("cache"))?;
    let out = runner::run(&cfg, &cache)?;
    print!("{}", out.report.to_tsv());

    write_outputs(&cfg.output_dir, &out, Some(cache.stats()))?;
    let plots = emit_plot_data(&out.report, &out.latency, &cfg.output_dir.join("plots"))?;
    println!("backend calls {}, plot files {}", cache.inner().calls().total(), plots.len());

    let before = cache.inner().calls().total();
    let again = runner::run(&cfg, &cache)?;
    println!(
        "second run: {} new backend calls, report identical: {}",
        cache.inner().calls().total() - before,
        again.report.to_json() == out.report.to_json()
    );
    Ok(())
}
