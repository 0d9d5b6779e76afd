//! Decoding controls: temperature, nucleus filtering, n-gram bans, and hard
//! versus soft high-temperature generation.
//!
//! ```text
//! cargo run --example htg_decoding
//! ```

use dunst::decoding::{
    corrupt, generate_hard, generate_soft, next_distribution, temperature_softmax, top_p_filter,
    DecodeConfig,
};
use dunst::dualvae::{ModelConfig, ModelParams};
use dunst::metrics::dist_geo;
use dunst::rng::seeded;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let logits = [2.0, 1.0, 0.5, 0.0, -1.0];
    for tau in [0.2, 1.0, 5.0] {
        println!("tau {tau}: {:.3?}", temperature_softmax(&logits, tau)?);
    }
    let probs = temperature_softmax(&logits, 1.0)?;
    println!("top-p 0.8 keeps {:.3?}", top_p_filter(&probs, 0.8));

    // specials masked, 2-gram "5 6" banned after history "5 6 5"
    let cfg = DecodeConfig {
        no_repeat_ngram: 2,
        min_len: 0,
        ..DecodeConfig::default()
    };
    let wide = [0.0; 8];
    println!("next after [5 6 5]: {:.3?}", next_distribution(&wide, &[5, 6, 5], &cfg));

    let model = ModelParams::init(
        ModelConfig {
            max_len: 32,
            ..ModelConfig::tiny(24, 2)
        },
        11,
    )?;
    let mut rng = seeded(3);
    let prior = model.prior_gen(1)?;
    for tau in [0.2, 1.0, 5.0] {
        let dc = DecodeConfig {
            temperature: tau,
            ..DecodeConfig::default()
        };
        let gens: Vec<Vec<usize>> = (0..20)
            .map(|_| generate_hard(&model, &prior.reparameterize(&mut rng), &dc, &mut rng, &[]))
            .collect::<Result<_, _>>()?;
        println!("tau {tau}: dist {:.3}, first {:?}", dist_geo(&gens).unwrap_or(0.0), gens[0]);
    }

    let soft = generate_soft(&model, &prior.reparameterize(&mut rng), 1, &DecodeConfig::htg(), &mut rng)?;
    let peak: f64 = soft.steps.row(0).iter().copied().fold(0.0, f64::max);
    println!(
        "soft sequence: {} steps, sampled {:?}, argmax shadow {:?}, first-step peak {peak:.3}",
        soft.steps.rows(),
        soft.context,
        soft.shadow_content()
    );
    let noisy = corrupt(&soft.context, 0.1, 0.1, 1.1, 24, &mut rng)?;
    println!("corrupted: {noisy:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
