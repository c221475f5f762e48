//! Computes the seven per-example features against a mock backend and
//! writes them as a TSV table.

use mtprompt::backend::{MockBackend, QeMode};
use mtprompt::features::{compute_pool, write_feature_tsv, CaseContext, Feature};
use mtprompt::{LanguagePair, ParallelExample, PromptTemplate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pair = LanguagePair::parse("de-en")?;
    let examples = [
        ("a", "Guten Morgen.", "Good morning."),
        ("b", "Wo ist der Bahnhof?", "Where is the station?"),
        ("c", "Das Wetter ist heute sehr schön.", "The weather is very nice today."),
    ]
    .into_iter()
    .map(|(id, s, t)| ParallelExample::new(id, s, t, pair.clone()))
    .collect::<mtprompt::Result<Vec<_>>>()?;

    let backend = MockBackend::new().with_qe(QeMode::Func(std::sync::Arc::new(|s: &str, h: &str| {
        s.len().min(h.len()) as f64 / s.len().max(h.len()) as f64
    })));
    let tests = ["Der Zug ist spät.", "Guten Abend."];
    let case = CaseContext::new(&tests, pair.src(), &backend)?;
    let t = PromptTemplate::default_a();
    let vectors = compute_pool(&examples, Some(&case), &t, &backend, 2)?;

    print!("id");
    for f in Feature::ALL {
        print!("\t{f}");
    }
    println!();
    for (ex, v) in examples.iter().zip(&vectors) {
        print!("{}", ex.id);
        for f in Feature::ALL {
            print!("\t{}", f.get(v).map_or("NA".into(), |x| format!("{x:.3}")));
        }
        println!();
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("features.tsv");
    let rows: Vec<_> = examples.iter().map(|e| e.id.clone()).zip(vectors).collect();
    write_feature_tsv(&path, &rows)?;
    println!("wrote {} ({} calls)", path.display(), backend.calls().total());
    Ok(())
}
