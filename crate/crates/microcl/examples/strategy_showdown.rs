//! Every strategy on one class-incremental scenario, side by side.
//!
//! Eight classes arrive two at a time over four batches of a synthetic
//! dataset; each strategy trains through the same orderings and is scored
//! on held-out sessions after every batch. Plain SGD forgets earlier
//! classes, the consolidation family retains them, and the cumulative
//! upper bound retrains on everything it has seen.
//!
//! Run with: `cargo run --example strategy_showdown`

use microcl::harness::{aggregate, render_text, run_experiment, ExperimentConfig};

fn config_for(strategy: &str) -> ExperimentConfig {
    // Per-strategy hyperparameters: the quadratic penalty must be scaled
    // to the learning rate, and the modulated strategy wants a gentle rate
    // on the shared layers (a tenth of the head rate) plus the wider
    // renorm corrections it was designed around.
    let extra = match strategy {
        "ewc" => "eta_bi = 0.05\nlambda = 2000\n",
        "ar1_star" => "eta_bi = 0.005\neta_head_bi = 0.05\nr_max = 3\nd_max = 5\n",
        _ => "eta_bi = 0.05\n",
    };
    ExperimentConfig::from_text(&format!(
        "protocol = nc\n\
         classes_per_batch = 2\n\
         strategy = {strategy}\n\
         runs = 3\n\
         seed = 7\n\
         classes = 8\n\
         categories = 4\n\
         sessions = 3\n\
         test_sessions = 2\n\
         frames = 15\n\
         input = 8\n\
         separation = 2.5\n\
         drift = 0.4\n\
         noise = 0.6\n\
         arch = dense12,brn,relu,head\n\
         epochs_b1 = 3\n\
         epochs_bi = 3\n\
         eta_b1 = 0.05\n\
         mini_batch = 8\n\
         warmup_iters = 2\n{extra}"
    ))
    .unwrap()
}

fn main() {
    let strategies = [
        "naive",
        "cwr_plus",
        "cwr_star",
        "ar1_star",
        "ewc",
        "lwf_stub",
        "dslda",
        "cumulative",
    ];

    let mut tables = Vec::new();
    for name in strategies {
        let cfg = config_for(name);
        let outcome = run_experiment(&cfg).unwrap();
        println!(
            "{name:<10} final accuracy over {} runs: {:?}",
            cfg.runs,
            outcome
                .table
                .row(outcome.table.rows() - 1)
                .iter()
                .map(|v| format!("{v:.1}"))
                .collect::<Vec<_>>()
        );
        tables.push((
            name.to_string(),
            outcome.table.clone(),
            Some(*outcome.overhead()),
        ));
    }

    let report = aggregate(&tables).unwrap();
    println!("\n{}", render_text(&report));
}
