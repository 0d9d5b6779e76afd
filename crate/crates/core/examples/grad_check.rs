//! Finite-difference check of the full objective on hard and soft targets.
//!
//! ```text
//! cargo run --release --example grad_check
//! ```

use dunst::corpus::SyntheticSource;
use dunst::decoding::{generate_soft, DecodeConfig};
use dunst::dualvae::{ModelConfig, ModelParams};
use dunst::losses::{draw_eps, grad_check, objective_and_grad, Coords, LossWeights, TextTarget};
use dunst::rng::seeded;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let src = SyntheticSource::build(2, 8, 2, 0.8)?;
    let mut rng = seeded(4);
    let ex = src.sample_example(1, &mut rng)?;
    let tokens = &ex.tokens[..6];
    let cfg = ModelConfig::tiny(8, 2);
    let model = ModelParams::init(cfg, 3)?;
    let eps = draw_eps(cfg.d_latent, &mut rng);
    let w = LossWeights::default();

    let rebuild = |store: &dunst::autodiff::ParamStore| {
        let mut m = model.clone();
        *m.store_mut() = store.clone();
        m
    };
    let hard = grad_check(
        |s| objective_and_grad(&rebuild(s), TextTarget::Hard(tokens), 1, &eps, &w),
        model.store(),
        1e-5,
        Coords::Sample { count: 300, seed: 1 },
    )?;
    println!("hard target: max rel error {:.2e} over {} coords", hard.max_rel_error, hard.checked);

    let decode = DecodeConfig {
        min_len: 3,
        max_len: 6,
        ..DecodeConfig::htg()
    };
    let z = model.prior_gen(0)?.reparameterize(&mut rng);
    let soft = generate_soft(&model, &z, 0, &decode, &mut rng)?;
    let target = TextTarget::Soft {
        steps: &soft.steps,
        context: &soft.context,
    };
    let soft_rep = grad_check(
        |s| objective_and_grad(&rebuild(s), target, 0, &eps, &w),
        model.store(),
        1e-5,
        Coords::Sample { count: 300, seed: 2 },
    )?;
    println!(
        "soft target: max rel error {:.2e} over {} coords",
        soft_rep.max_rel_error, soft_rep.checked
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
