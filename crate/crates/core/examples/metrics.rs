//! Evaluation metrics on hand-made inputs and an importance-weighted bound
//! checked against the exact likelihood of a tabular model.
//!
//! ```text
//! cargo run --example metrics
//! ```

use dunst::metrics::{classification_metrics, dist_geo, dist_n, iw_bound, self_bleu};
use dunst::oracle::TabularModel;
use dunst::rng::seeded;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let gens = vec![vec![4, 4, 5, 5], vec![4, 6, 7, 8], vec![9, 10, 11, 12]];
    for n in 1..=4 {
        println!("dist-{n} {:.4}", dist_n(&gens, n).unwrap_or(0.0));
    }
    println!("dist (geometric) {:.4}", dist_geo(&gens).unwrap_or(0.0));
    println!("self-BLEU identical {:.1}", self_bleu(&[vec![4, 5, 6, 7], vec![4, 5, 6, 7]])?);
    println!("self-BLEU disjoint {:.1}", self_bleu(&[vec![4, 5, 6, 7], vec![8, 9, 10, 11]])?);

    let gold = [0, 0, 1, 1];
    let pred = [0, 1, 1, 1];
    let scores = [vec![0.9, 0.1], vec![0.4, 0.6], vec![0.3, 0.7], vec![0.2, 0.8]];
    let m = classification_metrics(&pred, &scores, &gold, 2)?;
    println!("acc {:.4}  macro-F1 {:.4}  AUC {:.4}", m.acc, m.macro_f1, m.auc);

    let model = TabularModel::random(3, 2, 4, &mut seeded(1))?;
    let exact = model.log_marginal_gen(0, 1);
    let mut rng = seeded(2);
    for k in [1, 5, 25] {
        let n = 2000;
        let mean = (0..n)
            .map(|_| iw_bound(&model, &[0], 1, k, &mut rng))
            .sum::<Result<f64, _>>()?
            / n as f64;
        println!("L_{k:<2} = {mean:.4}  (log p(x|y) = {exact:.4})");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
