use lookahead_core::eval::{perturb_proof_line, stratified_sample_proofs, CellLabel, LengthBucket, MockKind, ModelEndpoint};
use lookahead_core::generator::mix_seed;
use lookahead_core::profile::ProofCorpusRecord;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::PerturbArgs;
use crate::files::{read_jsonl, write_json, write_jsonl};
use crate::session::Session;
use crate::{usage_err, CliResult, UsageExt};

const DEFAULT_BUCKETS: [&str; 4] = ["1-5", "6-10", "11-20", "21+"];
const DEFAULT_PER_STRATUM: usize = 10;
const DEFAULT_MAX_ATTEMPTS: usize = 5;

/// One proof-verification prompt: a proof with at most one altered line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationItem {
    pub id: String,
    pub proof_id: String,
    pub lines: Vec<String>,
    /// 1-based altered line; `None` for an unmodified control.
    pub changed_line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_line: Option<String>,
    pub bucket: String,
}

impl VerificationItem {
    /// Verification items are grouped by proof length, carried as depth.
    pub fn cell(&self) -> CellLabel {
        CellLabel {
            lookahead: 0,
            branches: 0,
            depth: Some(self.lines.len() as u32),
        }
    }
}

fn bucket_label(b: &LengthBucket) -> String {
    match b.max {
        None => format!("{}+", b.min),
        Some(m) if m == b.min => m.to_string(),
        Some(m) => format!("{}-{m}", b.min),
    }
}

#[derive(Serialize)]
struct StratumReport {
    bucket: String,
    proof_ids: Vec<String>,
    shortfall: bool,
}

pub(crate) fn perturb(session: &mut Session, args: &PerturbArgs) -> CliResult<serde_json::Value> {
    let cfg = session.config.perturb.clone();
    session.input(&args.input)?;
    let corpus: Vec<ProofCorpusRecord> = read_jsonl(&args.input)?;
    let bucket_specs: Vec<String> = if !args.buckets.is_empty() {
        args.buckets.clone()
    } else if !cfg.buckets.is_empty() {
        cfg.buckets.clone()
    } else {
        DEFAULT_BUCKETS.iter().map(|s| s.to_string()).collect()
    };
    let buckets = bucket_specs
        .iter()
        .map(|s| s.parse::<LengthBucket>().usage())
        .collect::<CliResult<Vec<_>>>()?;
    let per_stratum = args.per_stratum.or(cfg.per_stratum).unwrap_or(DEFAULT_PER_STRATUM);
    let max_attempts = args.max_attempts.or(cfg.max_attempts).unwrap_or(DEFAULT_MAX_ATTEMPTS);
    if max_attempts == 0 {
        return Err(usage_err("--max-attempts must be at least 1"));
    }
    let controls = args.controls || cfg.controls.unwrap_or(false);

    let endpoint = match (&args.endpoint, &args.mock) {
        (Some(name), _) => session
            .config
            .endpoint(name)
            .cloned()
            .ok_or_else(|| usage_err(format!("endpoint {name:?} is not configured")))?,
        (None, Some(spec)) => ModelEndpoint::mock(format!("mock-{spec}"), spec.parse::<MockKind>().usage()?),
        (None, None) => match &cfg.endpoint {
            Some(name) => session
                .config
                .endpoint(name)
                .cloned()
                .ok_or_else(|| usage_err(format!("endpoint {name:?} is not configured")))?,
            None => ModelEndpoint::mock("mock-perturb", MockKind::Perturber),
        },
    };
    let transport = endpoint.transport().usage()?;

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(session.seed, 0x5045_5254));
    let strata = stratified_sample_proofs(&corpus, &buckets, per_stratum, &mut rng).usage()?;
    let mut items = Vec::new();
    let mut report = Vec::with_capacity(strata.len());
    for stratum in &strata {
        let label = bucket_label(&stratum.bucket);
        if stratum.shortfall {
            session.note(format!("bucket {label} has only {} proofs", stratum.indices.len()));
        }
        for &i in &stratum.indices {
            let proof = &corpus[i];
            if controls {
                items.push(VerificationItem {
                    id: format!("{}_orig", proof.proof_id),
                    proof_id: proof.proof_id.clone(),
                    lines: proof.lines.clone(),
                    changed_line: None,
                    original_line: None,
                    bucket: label.clone(),
                });
            }
            let mut prng = ChaCha8Rng::seed_from_u64(mix_seed(session.seed, i as u64));
            match perturb_proof_line(&proof.lines, &mut prng, &endpoint, transport.as_ref(), max_attempts) {
                Ok(p) => items.push(VerificationItem {
                    id: format!("{}_perturbed", proof.proof_id),
                    proof_id: proof.proof_id.clone(),
                    lines: p.lines,
                    changed_line: Some(p.changed_line),
                    original_line: Some(p.original_line),
                    bucket: label.clone(),
                }),
                Err(e) => session.note(format!("{}: {e}", proof.proof_id)),
            }
        }
        report.push(StratumReport {
            bucket: label,
            proof_ids: stratum.indices.iter().map(|&i| corpus[i].proof_id.clone()).collect(),
            shortfall: stratum.shortfall,
        });
    }
    let path = session.output("perturbed.jsonl")?;
    write_jsonl(&path, &items)?;
    let path = session.output("strata.json")?;
    write_json(&path, &report)?;
    println!("wrote {} verification items", items.len());
    Ok(json!({
        "input": args.input,
        "buckets": bucket_specs,
        "per_stratum": per_stratum,
        "max_attempts": max_attempts,
        "controls": controls,
        "endpoint": endpoint,
    }))
}
