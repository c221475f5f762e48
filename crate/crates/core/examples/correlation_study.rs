//! Feature/quality correlation on a world where longer demonstrations
//! yield better translations.

use std::fs;
use std::sync::Arc;

use mtprompt::backend::{CometMode, QeMode};
use mtprompt::runner::{self, ExperimentConfig};
use mtprompt::MockBackend;

const CONFIG: &str = r#"
kind = "correlation"
output_dir = "out"
seeds = [3]
split_seed = 1

[samples]
correlation = 60

[[directions]]
pair = "de-en"
pool = "pool.tsv"
test = "test.tsv"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let pool: String = (0..80)
        .map(|i| format!("quelle {i}\t{}\n", (0..=i).map(|j| format!("w{j}")).collect::<Vec<_>>().join(" ")))
        .collect();
    fs::write(dir.path().join("pool.tsv"), pool)?;
    let reference: String = (0..200).map(|m| format!("r{m}")).collect::<Vec<_>>().join(" ");
    fs::write(dir.path().join("test.tsv"), format!("probe\t{reference}\n"))?;

    // output length grows with the demonstration's target length
    let mock = MockBackend::new()
        .with_responder(move |req| {
            let p = &req.prompt;
            if !p.ends_with("German: probe English: ") {
                return None;
            }
            let demo_len = p
                .split_once("English: ")
                .and_then(|(_, rest)| rest.rsplit_once(" German: "))
                .map_or(0, |(d, _)| d.split_whitespace().count());
            Some(reference.split(' ').take(demo_len + 3).collect::<Vec<_>>().join(" "))
        })
        .with_comet(CometMode::Func(Arc::new(|_, h, r| {
            h.split_whitespace().count() as f64 / r.split_whitespace().count() as f64
        })))
        .with_qe(QeMode::Constant(0.5));

    let cfg = ExperimentConfig::from_toml_str(CONFIG, dir.path())?;
    cfg.validate()?;
    let out = runner::run(&cfg, &mock)?;
    for c in &out.report.correlations {
        println!(
            "{:<8} {:<13} {:<6} rho {:>7.3}  p {}",
            c.direction,
            c.feature,
            c.metric,
            c.rho,
            c.p_value.map_or("NA".into(), |p| format!("{p:.1e}"))
        );
    }
    Ok(())
}
