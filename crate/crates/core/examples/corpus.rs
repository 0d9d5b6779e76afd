//! Build a synthetic attribute corpus, inspect the Bayes oracle and write
//! the four split files.
//!
//! ```text
//! cargo run --example corpus
//! ```

use dunst::corpus::{read_corpus, write_corpus, SplitSizes, SyntheticSource};
use dunst::rng::seeded;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    for sep in [0.0, 0.3, 0.6, 1.0] {
        let src = SyntheticSource::build(1000, 32, 2, sep)?;
        let mut rng = seeded(5);
        let n = 400;
        let mut hits = 0;
        for i in 0..n {
            let y = i % 2;
            let ex = src.sample_example(y, &mut rng)?;
            hits += usize::from(src.bayes_label(&ex.tokens)? == y);
        }
        println!("separation {sep:.1}: Bayes accuracy {:.3}", hits as f64 / n as f64);
    }

    let src = SyntheticSource::build(1000, 32, 2, 0.6)?;
    let ex = src.sample_example(1, &mut seeded(1))?;
    let words: Vec<&str> = ex.tokens.iter().map(|&t| src.vocab.token(t)).collect();
    println!("sample ({}): {}", src.attributes.name(1), words.join(" "));
    println!("posterior {:?}", src.bayes_posterior(&ex.tokens)?);

    let sizes = SplitSizes {
        labeled: 20,
        unlabeled: 600,
        dev: 20,
        test: 50,
    };
    let splits = src.make_splits(sizes, &mut seeded(2))?;
    let dir = std::env::temp_dir().join(format!("dunst-corpus-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let prefix = dir.join("corpus");
    write_corpus(&splits, &prefix, &src.vocab, &src.attributes)?;
    let back = read_corpus(&prefix, &src.vocab, &src.attributes)?;
    assert_eq!(back, splits);
    println!("wrote and re-read {}.*", prefix.display());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
