use std::collections::BTreeSet;

use anyhow::{bail, Context};
use lookahead_core::generator::{generate_dataset, Dataset, DatasetGrid, GenerationSpec, DEFAULT_PER_CELL};
use serde_json::json;

use crate::args::{ChainArgs, GenerateArgs};
use crate::files::write_jsonl;
use crate::session::Session;
use crate::{usage_err, CliResult, UsageExt};

/// Parses one axis value list: `4`, `2..8` (inclusive), `2..8:2` (step) or
/// `2..512x2` (geometric).
fn parse_values(s: &str) -> anyhow::Result<Vec<u32>> {
    let num = |t: &str| t.trim().parse::<u32>().with_context(|| format!("bad number {t:?}"));
    let Some((lo, rest)) = s.split_once("..") else {
        return Ok(vec![num(s)?]);
    };
    let lo = num(lo)?;
    let (hi, step, geometric) = if let Some((hi, f)) = rest.split_once('x') {
        (num(hi)?, num(f)?, true)
    } else if let Some((hi, st)) = rest.split_once(':') {
        (num(hi)?, num(st)?, false)
    } else {
        (num(rest)?, 1, false)
    };
    if hi < lo {
        bail!("empty range {s:?}");
    }
    if step == 0 || (geometric && (step < 2 || lo == 0)) {
        bail!("bad step in {s:?}");
    }
    let mut out = Vec::new();
    let mut v = lo as u64;
    while v <= hi as u64 {
        out.push(v as u32);
        v = if geometric { v * step as u64 } else { v + step as u64 };
    }
    Ok(out)
}

/// Expands a grid spec such as `L=2..8,B=2` or `L=2,4,8,B=1..4` into
/// (lookahead, branches) cells. A bare value continues the previous axis.
pub fn parse_grid(spec: &str) -> anyhow::Result<Vec<(u32, u32)>> {
    let mut ls = BTreeSet::new();
    let mut bs = BTreeSet::new();
    let mut axis: Option<char> = None;
    for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let value = match token.split_once('=') {
            Some((k, v)) => {
                axis = Some(match k.trim().to_ascii_lowercase().as_str() {
                    "l" | "lookahead" => 'L',
                    "b" | "branches" => 'B',
                    other => bail!("unknown grid axis {other:?} in {spec:?}"),
                });
                v
            }
            None => token,
        };
        let target = match axis {
            Some('L') => &mut ls,
            Some(_) => &mut bs,
            None => bail!("grid spec {spec:?} must start with L= or B="),
        };
        target.extend(parse_values(value)?);
    }
    if ls.is_empty() || bs.is_empty() {
        bail!("grid spec {spec:?} needs both L and B values");
    }
    Ok(ls.iter().flat_map(|&l| bs.iter().map(move |&b| (l, b))).collect())
}

fn write_dataset(session: &mut Session, dataset: &Dataset) -> CliResult<()> {
    for (key, examples) in &dataset.cells {
        let path = session.output(key.file_name())?;
        write_jsonl(&path, examples.iter().map(|e| e.to_record()))?;
    }
    Ok(())
}

fn check_per_cell(per_cell: usize) -> CliResult<usize> {
    if per_cell == 0 {
        return Err(usage_err("--per-cell must be at least 1"));
    }
    Ok(per_cell)
}

pub(crate) fn generate(session: &mut Session, args: &GenerateArgs) -> CliResult<serde_json::Value> {
    let cfg = session.config.generate.clone();
    let specs = if args.grid.is_empty() { cfg.grid.clone() } else { args.grid.clone() };
    let mut cells = BTreeSet::new();
    for s in &specs {
        cells.extend(parse_grid(s).usage()?);
    }
    let chain_depths = if args.chain_depths.is_empty() { cfg.chain_depths.clone() } else { args.chain_depths.clone() };
    let grid = DatasetGrid {
        cells: cells.into_iter().collect(),
        chain_depths,
        max_edges: args.max_edges.or(cfg.max_edges),
        alpha: args.alpha.or(cfg.alpha),
        chain_extra_nodes: args.chain_extra_nodes.or(cfg.chain_extra_nodes).unwrap_or(0),
    };
    if grid.is_empty() {
        return Err(usage_err("nothing to generate: pass --grid or --chain-depths"));
    }
    let per_cell = check_per_cell(args.per_cell.or(cfg.per_cell).unwrap_or(DEFAULT_PER_CELL))?;
    for &(l, b) in &grid.cells {
        let mut spec = GenerationSpec::new(l, b);
        spec.max_edges = grid.max_edges.unwrap_or(spec.max_edges);
        spec.alpha = grid.alpha.unwrap_or(spec.alpha);
        spec.validate().usage_ctx(format!("cell L={l}, B={b}"))?;
    }
    if grid.chain_depths.contains(&0) {
        return Err(usage_err("chain depth must be at least 1"));
    }
    let dataset = generate_dataset(&grid, per_cell, session.seed, session.exec)?;
    write_dataset(session, &dataset)?;
    println!("generated {} examples in {} cells", dataset.len(), dataset.cells.len());
    Ok(json!({ "grid": grid, "per_cell": per_cell }))
}

pub(crate) fn chain(session: &mut Session, args: &ChainArgs) -> CliResult<serde_json::Value> {
    let cfg = session.config.chain.clone();
    let depths = if args.depths.is_empty() { cfg.depths.clone() } else { args.depths.clone() };
    if depths.is_empty() {
        return Err(usage_err("no chain depths given"));
    }
    if depths.contains(&0) {
        return Err(usage_err("chain depth must be at least 1"));
    }
    let grid = DatasetGrid {
        chain_depths: depths,
        chain_extra_nodes: args.extra_nodes.or(cfg.extra_nodes).unwrap_or(0),
        ..Default::default()
    };
    let per_cell = check_per_cell(args.per_cell.or(cfg.per_cell).unwrap_or(DEFAULT_PER_CELL))?;
    let dataset = generate_dataset(&grid, per_cell, session.seed, session.exec)?;
    write_dataset(session, &dataset)?;
    println!("generated {} chain examples", dataset.len());
    Ok(json!({ "grid": grid, "per_cell": per_cell }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("L=2..4,B=2").unwrap(), vec![(2, 2), (3, 2), (4, 2)]);
        assert_eq!(parse_grid("L=2..16x2,B=1,4").unwrap().len(), 8);
        assert_eq!(parse_grid("b=3, l=1..5:2").unwrap(), vec![(1, 3), (3, 3), (5, 3)]);
        for bad in ["L=2..8", "2,B=2", "L=8..2,B=1", "L=1..4x1,B=2", "Q=1,B=2", "L=a,B=1"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}
