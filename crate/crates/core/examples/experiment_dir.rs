//! The on-disk workflow behind the `dunst` binary: config text, corpus
//! files, base checkpoint, self-training runs and the comparison report.
//!
//! ```text
//! cargo run --release --example experiment_dir
//! ```

use dunst::config::{parse_config_text, ExperimentConfig};
use dunst::experiment::{collect_runs, format_report, gen_corpus, selftrain_to_disk, train_base_to_disk};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("dunst-exp-{}", std::process::id()));
    let text = format!(
        "# a tiny run\n\
         out_dir = {}\n\
         labeled = 20\nunlabeled = 200\ndev = 20\ntest = 40\n\
         base_epochs = 3\nst_epochs = 1\n\
         eval_generations = 10\nppl_examples = 10\n",
        root.display()
    );
    let cfg = parse_config_text(&text, "inline".as_ref(), ExperimentConfig::default())?;
    cfg.validate()?;

    gen_corpus(&cfg)?;
    let base = train_base_to_disk(&cfg)?;
    println!("base trained for {} epochs", base.epochs_trained);

    let mut dirs = Vec::new();
    for variant in ["DUNST", "NO_PL_PT", "NO_PT"] {
        let mut c = cfg.clone();
        c.set("variant", variant)?;
        let (dir, _) = selftrain_to_disk(&c)?;
        dirs.push(dir);
    }
    print!("{}", format_report(&collect_runs(&dirs)?));

    let listing: Vec<String> = std::fs::read_dir(&dirs[0])?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    println!("{}: {}", dirs[0].display(), {
        let mut l = listing;
        l.sort();
        l.join(" ")
    });
    std::fs::remove_dir_all(&root)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
