use anyhow::Result;
use clap::Args;
use cnnlstm::training::gradient_check;
use cnnlstm::{ModelConfig, Rng};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Largest accepted relative error per parameter block.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn run(args: GradcheckArgs) -> Result<bool> {
    let config = ModelConfig {
        seed: args.seed,
        ..ModelConfig::tiny()
    };
    let report = gradient_check(&config, args.tolerance, &mut Rng::new(args.seed))?;
    for b in &report.blocks {
        println!(
            "block={} elements={} max_rel_err={:e} max_abs_err={:e} status={}",
            b.name,
            b.elements,
            b.max_rel_err,
            b.max_abs_err,
            if b.passed { "pass" } else { "FAIL" }
        );
    }
    let passed = report.passed();
    println!(
        "tolerance={:e} worst={:e} draws={} result={}",
        report.tolerance,
        report.worst(),
        report.draws,
        if passed { "pass" } else { "FAIL" }
    );
    if !passed {
        eprintln!("{} block(s) exceed the tolerance", report.failures().count());
    }
    Ok(passed)
}
