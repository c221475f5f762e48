//! Direct versus pivot translation through English.

use std::fs;

use mtprompt::backend::CometMode;
use mtprompt::runner::{self, ExperimentConfig};
use mtprompt::{LanguagePair, MockBackend, PromptTemplate};

const CONFIG: &str = r#"
kind = "pivot"
output_dir = "out"
seeds = [4]
split_seed = 1

[pivot]
language = "en"
k = 1
first_hop_pool = "hop1.tsv"
second_hop_pool = "hop2.tsv"

[[directions]]
pair = "de-zh"
pool = "pool.tsv"
test = "test.tsv"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let write = |name: &str, rows: &[(String, String)]| {
        fs::write(dir.path().join(name), rows.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect::<String>())
    };
    let de = |i: usize| format!("das ist der satz nummer {i} aus einem langen deutschen text");
    let en = |i: usize| format!("this is sentence number {i} from a long english text");
    let zh = |i: usize| format!("这是第{i}个比较长的中文句子");
    let tests: Vec<_> = (0..5).map(|i| (de(i), zh(i))).collect();
    write("test.tsv", &tests)?;
    write("pool.tsv", &(10..20).map(|i| (de(i), zh(i))).collect::<Vec<_>>())?;
    write("hop1.tsv", &(10..20).map(|i| (de(i), en(i))).collect::<Vec<_>>())?;
    write("hop2.tsv", &(10..20).map(|i| (en(i), zh(i))).collect::<Vec<_>>())?;

    // direct translation drops a character, the pivot path is exact
    let t = PromptTemplate::default_a();
    let (de_zh, de_en, en_zh) = (LanguagePair::parse("de-zh")?, LanguagePair::parse("de-en")?, LanguagePair::parse("en-zh")?);
    let mut mock = MockBackend::new().with_comet(CometMode::Echo { max: 0.9, min: 0.5 });
    for (i, (src, reference)) in tests.iter().enumerate() {
        mock = mock
            .with_translation(&t, &de_zh, src, reference.replace('这', ""))
            .with_translation(&t, &de_en, src, en(i))
            .with_translation(&t, &en_zh, &en(i), reference.clone());
    }

    let cfg = ExperimentConfig::from_toml_str(CONFIG, dir.path())?;
    cfg.validate()?;
    let out = runner::run(&cfg, &mock)?;
    print!("{}", out.report.to_tsv());
    Ok(())
}
