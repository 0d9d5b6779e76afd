//! Run every head of an untrained dual VAE on one example and print the
//! pieces of the training objective.
//!
//! ```text
//! cargo run --example dual_vae
//! ```

use dunst::corpus::SyntheticSource;
use dunst::dualvae::{ModelConfig, ModelParams};
use dunst::losses::{build_objective, draw_eps, gaussian_kl, LossWeights, TextTarget};
use dunst::rng::seeded;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let src = SyntheticSource::build(3, 16, 2, 0.8)?;
    let mut rng = seeded(0);
    let ex = src.sample_example(0, &mut rng)?;
    let cfg = ModelConfig {
        max_len: 32,
        ..ModelConfig::tiny(16, 2)
    };
    let model = ModelParams::init(cfg, 7)?;
    println!("{} parameters", model.store().num_scalars());

    let enc = model.encode(&ex.tokens)?;
    println!("h_x = {:.3?}", &enc.h_x[..4]);
    let q = model.posterior(&ex.tokens, 0)?;
    let p_gen = model.prior_gen(0)?;
    let p_cls = model.prior_cls(&ex.tokens)?;
    println!("KL(q || P(z|y)) = {:.4}", gaussian_kl(&q, &p_gen)?);
    println!("KL(q || P(z|x)) = {:.4}", gaussian_kl(&q, &p_cls)?);
    println!("classifier logits at mu_cls = {:.3?}", model.classify(&p_cls.mu)?);

    let z = q.reparameterize(&mut rng);
    let next = model.decode_step(&z, &[dunst::corpus::BOS])?;
    let best = dunst::rng::argmax(&next);
    println!("most likely first token {} (logit {:.3})", src.vocab.token(best), next[best]);

    let eps = draw_eps(cfg.d_latent, &mut rng);
    let mut g = model.graph();
    let vars = build_objective(&mut g, &model, TextTarget::Hard(&ex.tokens), 0, &eps, &LossWeights::default())?;
    let c = vars.components(&g);
    println!(
        "L_c {:.3}  L_g {:.3}  BOW {:.3}  total {:.3}",
        c.cls,
        c.gen,
        c.bow,
        g.value(vars.total).item()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
