//! A small end-to-end self-training comparison: the full method against the
//! base dual VAE, on a corpus small enough to run in seconds.
//!
//! ```text
//! cargo run --release --example self_training
//! ```

use dunst::corpus::{SplitSizes, SyntheticSource};
use dunst::dualvae::{ModelConfig, ModelParams};
use dunst::losses::LossWeights;
use dunst::optim::AdamWConfig;
use dunst::rng::seeded;
use dunst::selftrain::{run_self_training, train_base, EvalConfig, EvalContext, STConfig, STVariant, TrainConfig};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let src = SyntheticSource::build(1000, 32, 2, 0.6)?;
    let sizes = SplitSizes {
        labeled: 100,
        unlabeled: 1000,
        dev: 100,
        test: 100,
    };
    let splits = src.make_splits(sizes, &mut seeded(2000))?;
    let cfg = ModelConfig {
        d_model: 16,
        d_latent: 8,
        layers: 1,
        heads: 2,
        d_ff: 32,
        max_len: 32,
        ..ModelConfig::new(32, 2)
    };
    let train = TrainConfig {
        optimizer: AdamWConfig {
            learning_rate: 3e-3,
            ..AdamWConfig::default()
        },
        base_epochs: 20,
        weights: LossWeights::sentiment(),
        ..TrainConfig::default()
    };
    let base = train_base(&splits, ModelParams::init(cfg, 0)?, train.clone())?;
    println!("base: best dev epoch {} of {}", base.best_epoch, base.epochs_trained);

    let eval = EvalConfig {
        generations_per_label: 50,
        ppl_examples: 40,
        ..EvalConfig::default()
    };
    let ctx = EvalContext::new(&src, &splits, eval)?;
    let st = STConfig {
        max_epochs: 3,
        ..STConfig::default()
    };
    for variant in [STVariant::Dunst, STVariant::NoPlPt] {
        let state = run_self_training(&base, &ctx, &train, variant, &st, None)?;
        for r in &state.history {
            println!(
                "{variant:<8} epoch {}  control acc {:.3}  classifier F1 {:.3}  dist {:.3}  model ppl {:.2}",
                r.epoch, r.control_acc, r.cls_f1, r.dist, r.model_ppl
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
