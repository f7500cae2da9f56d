use lookahead_core::graph::{EdgeListSource, IdMode};
use lookahead_core::profile::{self as prof, merge_profiles, profile_graph, ComplexityProfile, Distribution, ProfileOptions, ProofCorpusRecord};
use serde_json::json;

use crate::args::{Format, ProfileArgs, ProfileProofsArgs};
use crate::files::{read_jsonl, unique_stems, write_json};
use crate::session::Session;
use crate::{usage_err, CliResult};

fn write_profile(session: &mut Session, p: &ComplexityProfile) -> CliResult<()> {
    let name = &p.dataset;
    let path = session.output(format!("{name}.profile.json"))?;
    write_json(&path, p)?;
    if session.format == Format::Csv {
        let parts: [(&str, &Option<Distribution>); 4] = [
            ("lookahead", &p.lookahead),
            ("distance", &p.distance),
            ("branches", &p.branches),
            ("proof_length", &p.proof_length),
        ];
        for (what, dist) in parts {
            if let Some(d) = dist {
                let path = session.output(format!("{name}.{what}.csv"))?;
                d.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
            }
        }
    }
    let markers: Vec<String> = p.percentiles().iter().map(|m| format!("p{}={}", m.quantile, m.value)).collect();
    println!("{name}: {}", markers.join(" "));
    Ok(())
}

fn write_merged(session: &mut Session, name: &str, profiles: &[ComplexityProfile]) -> CliResult<()> {
    if profiles.iter().any(|p| p.dataset == name) {
        return Err(usage_err(format!("merged profile name {name:?} collides with an input")));
    }
    let merged = merge_profiles(name, profiles)?;
    write_profile(session, &merged)
}

pub(crate) fn profile(session: &mut Session, args: &ProfileArgs) -> CliResult<serde_json::Value> {
    let cfg = session.config.profile.clone();
    unique_stems(&args.inputs)?;
    for input in &args.inputs {
        session.input(input)?;
    }
    let opts = ProfileOptions {
        sample: args.sample.or(cfg.sample).unwrap_or(ProfileOptions::default().sample),
        seed: session.seed,
        layer_cap: args.layer_cap.or(cfg.layer_cap),
        exec: session.exec,
    };
    if opts.sample == 0 {
        return Err(usage_err("--sample must be at least 1"));
    }
    let delimiter = args.delimiter.or(cfg.delimiter).unwrap_or('\t');
    let ids = if args.string_ids || cfg.string_ids.unwrap_or(false) { IdMode::Interned } else { IdMode::Integer };
    let directed = !(args.undirected || cfg.undirected.unwrap_or(false));
    let merge = args.merge_uniform || cfg.merge_uniform.unwrap_or(false);

    let mut profiles = Vec::with_capacity(args.inputs.len());
    for input in &args.inputs {
        let source = EdgeListSource::path(input)
            .with_delimiter(delimiter)
            .with_ids(ids)
            .with_directed(directed);
        let p = profile_graph(&source, opts)?;
        write_profile(session, &p)?;
        profiles.push(p);
    }
    if merge {
        write_merged(session, &args.merged_name, &profiles)?;
    }
    Ok(json!({
        "inputs": args.inputs,
        "sample": opts.sample,
        "layer_cap": opts.layer_cap,
        "delimiter": delimiter.to_string(),
        "string_ids": ids == IdMode::Interned,
        "directed": directed,
        "merge_uniform": merge,
    }))
}

pub(crate) fn profile_proofs(session: &mut Session, args: &ProfileProofsArgs) -> CliResult<serde_json::Value> {
    let stems = unique_stems(&args.inputs)?;
    for input in &args.inputs {
        session.input(input)?;
    }
    let merge = args.merge_uniform || session.config.profile.merge_uniform.unwrap_or(false);
    let mut profiles = Vec::with_capacity(args.inputs.len());
    for (input, stem) in args.inputs.iter().zip(&stems) {
        let corpus: Vec<ProofCorpusRecord> = read_jsonl(input)?;
        let p = prof::profile_proofs(stem, &corpus).map_err(|e| usage_err(format!("{}: {e}", input.display())))?;
        write_profile(session, &p)?;
        profiles.push(p);
    }
    if merge {
        write_merged(session, &args.merged_name, &profiles)?;
    }
    Ok(json!({ "inputs": args.inputs, "merge_uniform": merge }))
}
