use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use hecgcn::evaluator::{evaluate, Split};
use hecgcn::model::{target_embeddings, GraphSet};
use hecgcn::trainer::{
    fit_with_evaluator, initial_checkpoint, save_checkpoint, validate, FORMAT_VERSION,
};

use crate::run::{self, RunManifest};
use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub data: PathBuf,
    /// Output run directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: TrainArgs) -> Result<ExitCode> {
    let cfg = crate::config::resolve(&args.config)?;
    let data = fs::canonicalize(&args.data)
        .with_context(|| format!("dataset manifest {}", args.data.display()))?;
    let ds = run::load_dataset(&data, &cfg)?;
    log::info!(
        "{} users, {} items, behaviors {:?}, {} evaluation users",
        ds.num_users,
        ds.num_items,
        ds.behaviors,
        ds.eval_users.len()
    );
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let out = fs::canonicalize(&args.out)?;

    let hash = cfg.config_hash(&ds.fingerprint());
    let manifest = RunManifest {
        run_id: run::hash_hex(hash)[..12].to_string(),
        config: cfg.clone(),
        data,
        out: out.clone(),
        ablations: cfg.ablations.clone(),
        config_hash: run::hash_hex(hash),
        checkpoint_format: FORMAT_VERSION,
    };
    manifest.write(&out)?;

    let graphs = GraphSet::<f32>::build(&ds)?;
    let opts = cfg.model_options();
    let start = initial_checkpoint(&ds, &cfg, hash)?;
    let result = fit_with_evaluator(start, &graphs, &ds, &cfg, |p, _| {
        validate(p, &graphs, &ds, &opts)
    })?;
    save_checkpoint(&result.best, out.join(run::CHECKPOINT))?;
    run::write_history(&out.join(run::HISTORY), &result.history)?;

    let (users, items) = target_embeddings(&result.best.params, &graphs, &opts)?;
    let report = evaluate(&users, &items, &ds, Split::Test, &cfg.eval_ns)?;
    run::write_json(&out.join(run::REPORT), &report.to_json())?;
    println!(
        "run {} best epoch {} of {}: test HR@10 {:.4} NDCG@10 {:.4}",
        manifest.run_id,
        result.best.epoch,
        result.last.epoch,
        report.hr_at(10),
        report.ndcg_at(10)
    );
    Ok(ExitCode::SUCCESS)
}
