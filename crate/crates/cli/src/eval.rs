use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use hecgcn::evaluator::{evaluate, Split};
use hecgcn::model::{target_embeddings, GraphSet};
use hecgcn::trainer::load_checkpoint;
use hecgcn::Error;

use crate::run::{self, RunManifest};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Run directory written by `train`.
    pub run_dir: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Cutoffs, e.g. `5,10,20`. Defaults to the run's `eval_ns`.
    #[arg(long, value_delimiter = ',')]
    pub ns: Vec<usize>,
    /// Score against a different dataset manifest than the one trained on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also write each user's rank of the held-out item.
    #[arg(long)]
    pub per_user_csv: bool,
}

pub fn run(args: EvalArgs) -> Result<ExitCode> {
    let manifest = RunManifest::read(&args.run_dir)?;
    let cfg = manifest.config.clone();
    let data = args.data.clone().unwrap_or_else(|| manifest.data.clone());
    let ds = run::load_dataset(&data, &cfg)?;
    let hash = cfg.config_hash(&ds.fingerprint());
    let ckpt_path = args.run_dir.join(run::CHECKPOINT);
    let ckpt = match load_checkpoint(&ckpt_path, Some(hash)) {
        Err(Error::HashMismatch { expected, found }) => bail!(
            "checkpoint {} was trained with config hash {} but config and dataset {} hash to {}; \
             the data or configuration changed since training",
            ckpt_path.display(),
            run::hash_hex(found),
            data.display(),
            run::hash_hex(expected)
        ),
        other => other.with_context(|| format!("loading {}", ckpt_path.display()))?,
    };
    let ns = if args.ns.is_empty() {
        cfg.eval_ns.clone()
    } else {
        args.ns.clone()
    };
    let graphs = GraphSet::<f32>::build(&ds)?;
    let (users, items) = target_embeddings(&ckpt.params, &graphs, &cfg.model_options())?;
    let report = evaluate(&users, &items, &ds, args.split, &ns)?;
    let (name, csv) = match args.split {
        Split::Test => (run::REPORT, "per_user_test.csv"),
        Split::Val => (run::REPORT_VAL, "per_user_val.csv"),
    };
    run::write_json(&args.run_dir.join(name), &report.to_json())?;
    if args.per_user_csv {
        report.write_per_user_csv(&ds, &args.run_dir.join(csv))?;
    }
    for &n in &ns {
        println!("HR@{n} {:.4} NDCG@{n} {:.4}", report.hr_at(n), report.ndcg_at(n));
    }
    Ok(ExitCode::SUCCESS)
}
