//! Trains at λ = 0 and λ = 0.5 on the default synthetic benchmark for a few
//! seeds and prints test metrics side by side.
//!
//! `cargo run --release -p ooc-core --example lambda_compare -- [seeds]`

use ooc_core::{evaluate, generate_dataset, init_params, train, DecodeConfig, SynthConfig, TrainConfig};

fn main() -> ooc_core::Result<()> {
    let n_seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    for seed in 0..n_seeds {
        let data = generate_dataset(&SynthConfig { seed, ..SynthConfig::default() })?;
        let init = init_params(seed, 64, 64, 8)?;
        for lambda in [0.0, 0.5] {
            let cfg = TrainConfig { lambda, seed, ..TrainConfig::default() };
            let (params, report) = train(&init, &data.train, &cfg)?;
            let m = evaluate(&params, &data.test, &DecodeConfig { seed, ..DecodeConfig::default() })?;
            let phrase = m.phrase.as_ref().expect("synthetic data has gold phrases");
            println!(
                "seed {seed} lambda {lambda:.2}: acc {:.4} phrase_f1 {:.4} (p {:.3} r {:.3}) logic {:.4} conv {:.4} | final loss {:.4} train acc {:.4} | {:.1}s",
                m.caption_accuracy,
                phrase.f1,
                phrase.precision,
                phrase.recall,
                m.logic_consistency_rate,
                m.convergence_rate,
                report.l_final.last().unwrap(),
                report.train_accuracy.last().unwrap(),
                report.wall_time_secs,
            );
            let losses: Vec<String> = report.l_final.iter().map(|l| format!("{l:.4}")).collect();
            println!("    epoch losses: {}", losses.join(" "));
        }
    }
    Ok(())
}
