use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::Args;
use hecgcn::autodiff::Fault;
use hecgcn::gradcheck::{run_gradcheck, TOLERANCE};
use hecgcn::model::{Ablation, Ablations};

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Check an ablated variant. Repeatable.
    #[arg(long = "ablate", value_name = "NAME")]
    pub ablations: Vec<String>,
    /// Deliberately break a backward rule; the check should then fail.
    #[arg(long = "break", value_name = "RULE")]
    pub fault: Option<String>,
}

pub fn run(args: GradcheckArgs) -> Result<ExitCode> {
    let ablations = args
        .ablations
        .iter()
        .map(|a| a.parse::<Ablation>())
        .collect::<hecgcn::Result<Ablations>>()?;
    let fault = match args.fault.as_deref() {
        None => Fault::None,
        Some("stop_gradient") => Fault::LeakyStopGradient,
        Some(other) => bail!("unknown rule `{other}` (supported: stop_gradient)"),
    };
    let out = run_gradcheck(ablations, fault)?;
    for (name, err) in &out.per_param {
        println!("{name:<14} max rel err {err:.3e}");
    }
    let r = &out.report;
    println!(
        "worst: {} element {} (analytic {:.6e}, numeric {:.6e}), rel err {:.3e}, tolerance {:.0e}",
        out.worst_param, r.worst.1, r.worst_analytic, r.worst_numeric, r.max_rel_err, TOLERANCE
    );
    if out.passed {
        println!("PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAIL");
        Ok(ExitCode::FAILURE)
    }
}
