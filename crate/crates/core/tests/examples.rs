//! Every cargo example runs to completion.

#[path = "../examples/corpus.rs"]
mod corpus_ex;
#[path = "../examples/dual_vae.rs"]
mod dual_vae_ex;
#[path = "../examples/experiment_dir.rs"]
mod experiment_ex;
#[path = "../examples/grad_check.rs"]
mod grad_check_ex;
#[path = "../examples/htg_decoding.rs"]
mod htg_ex;
#[path = "../examples/metrics.rs"]
mod metrics_ex;
#[path = "../examples/oracle.rs"]
mod oracle_ex;
#[path = "../examples/self_training.rs"]
mod self_training_ex;

#[test]
fn corpus_example_runs() {
    corpus_ex::run().unwrap();
}

#[test]
fn dual_vae_example_runs() {
    dual_vae_ex::run().unwrap();
}

#[test]
fn experiment_dir_example_runs() {
    experiment_ex::run().unwrap();
}

#[test]
fn grad_check_example_runs() {
    grad_check_ex::run().unwrap();
}

#[test]
fn htg_decoding_example_runs() {
    htg_ex::run().unwrap();
}

#[test]
fn metrics_example_runs() {
    metrics_ex::run().unwrap();
}

#[test]
fn oracle_example_runs() {
    oracle_ex::run().unwrap();
}

#[test]
fn self_training_example_runs() {
    self_training_ex::run().unwrap();
}
