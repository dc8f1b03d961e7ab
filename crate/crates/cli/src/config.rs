use std::fs;

use anyhow::{bail, Context, Result};
use hecgcn::model::Ablation;
use hecgcn::trainer::TrainConfig;
use toml::{Table, Value};

use crate::ConfigArgs;

/// Parses `value` as a TOML value, falling back to a bare string so that
/// `--set negative_pool=full` works without quotes.
fn parse_value(value: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").expect("key v"),
        Err(_) => Value::String(value.to_string()),
    }
}

fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let Some((key, value)) = assignment.split_once('=') else {
        bail!("override `{assignment}` is not of the form KEY=VALUE");
    };
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields one element");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => bail!("override `{key}`: `{p}` is not a table"),
        };
    }
    cur.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

/// Builds the effective config: file, then `--set`, then `--seed` and
/// `--ablate`.
pub fn resolve(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut table = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str::<Table>(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => Table::new(),
    };
    for o in &args.overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg: TrainConfig = Value::Table(table)
        .try_into()
        .context("invalid configuration")?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    for name in &args.ablations {
        cfg.ablations.insert(name.parse::<Ablation>()?);
    }
    cfg.validate()?;
    Ok(cfg)
}
