//! Exhaustive checks on small discrete models: ELBO gaps, the pseudo-text
//! identity and the self-training objective decomposition.
//!
//! ```text
//! cargo run --release --example oracle
//! ```

use dunst::oracle::{
    elbo_gap_gen, format_table, run_suite, st_objective_decomposition, theorem1_identity, DiscreteJoint,
    JointTag, OracleSuiteConfig, TabularModel,
};
use dunst::rng::seeded;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seeded(0);
    let m = TabularModel::random(2, 2, 3, &mut rng)?;
    for e in elbo_gap_gen(&m) {
        println!(
            "x={} y={}: log p {:.4}  ELBO {:.4}  gap {:.4}  KL(q||post) {:.4}",
            e.x, e.y, e.log_marginal, e.elbo, e.gap, e.posterior_kl
        );
    }

    let joint = |tag, rng: &mut _| DiscreteJoint::random(2, 2, 2, tag, rng);
    let p = joint(JointTag::P, &mut rng)?;
    let qp = joint(JointTag::QThetaPrime, &mut rng)?;
    let u = joint(JointTag::U, &mut rng)?;
    let q = joint(JointTag::QTheta, &mut rng)?;
    let id = theorem1_identity(&p, &qp, &u, &q)?;
    println!("identity: lhs {:.6}  rhs {:.6}  residual {:.1e}", id.lhs, id.rhs, id.residual);
    let d = st_objective_decomposition(&p, &qp, &u, &q)?;
    println!(
        "decomposition: objective {:.6} = KL sum {:.6} + constant {:.6}",
        d.mixture_objective, d.kl_sum, d.constant
    );

    let rows = run_suite(&OracleSuiteConfig {
        models: 200,
        quadruples: 2000,
        candidates: 200,
        ..OracleSuiteConfig::default()
    })?;
    print!("{}", format_table(&rows));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
