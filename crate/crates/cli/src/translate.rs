use std::collections::BTreeSet;

use lookahead_core::generator::{mix_seed, ExampleRecord, GeneratedExample};
use lookahead_core::naturalizer::{graph_to_logic, parse_facts, ProofPlanningExample};
use lookahead_core::parallel::map_ordered;
use lookahead_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::args::TranslateArgs;
use crate::files::{read_jsonl, unique_stems, write_jsonl};
use crate::session::Session;
use crate::{CliResult, UsageExt};

/// Translates one example with an RNG derived from the run seed and the
/// example's own seed, then checks that the facts give back every edge.
pub(crate) fn translate_example(example: &GeneratedExample, seed: u64) -> lookahead_core::Result<ProofPlanningExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, example.seed));
    let nl = graph_to_logic(example, &mut rng)?;
    let recovered: BTreeSet<(String, String)> = parse_facts(&nl.facts)?.into_iter().collect();
    let expected: BTreeSet<(String, String)> = example
        .graph
        .edges()
        .map(|(u, v)| (nl.node_attributes[&u].clone(), nl.node_attributes[&v].clone()))
        .collect();
    if recovered != expected {
        return Err(Error::Domain(format!("facts of {} do not reproduce its edges", example.id)));
    }
    Ok(nl)
}

pub(crate) fn translate(session: &mut Session, args: &TranslateArgs) -> CliResult<serde_json::Value> {
    let stems = unique_stems(&args.inputs)?;
    for input in &args.inputs {
        session.input(input)?;
    }
    let mut total = 0;
    for (input, stem) in args.inputs.iter().zip(&stems) {
        let records: Vec<ExampleRecord> = read_jsonl(input)?;
        let examples = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| GeneratedExample::from_record(r).usage_ctx(format!("{}:{}", input.display(), i + 1)))
            .collect::<CliResult<Vec<_>>>()?;
        let seed = session.seed;
        let translated = map_ordered(session.exec, &examples, |e| translate_example(e, seed))
            .into_iter()
            .collect::<lookahead_core::Result<Vec<_>>>()?;
        let path = session.output(format!("{stem}.proof.jsonl"))?;
        write_jsonl(&path, &translated)?;
        total += translated.len();
    }
    println!("translated {total} examples");
    Ok(json!({ "inputs": args.inputs }))
}
