use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lookahead_core::eval::{
    aggregate_metrics, grade_record, run_batch, write_metrics_csv, CellLabel, CellMetrics, ChatTransport, EvalItem,
    EvalRecord, Grouping, MockKind, ModelEndpoint, PathExtractor, Truth,
};
use lookahead_core::generator::{ExampleRecord, GeneratedExample};
use lookahead_core::naturalizer::{render_proof_prompt, render_symbolic_prompt, render_verification_prompt, PromptKind, ProofPlanningExample};
use serde_json::json;

use crate::args::{EvaluateArgs, Format, GradeArgs, ReportArgs};
use crate::config::RunConfig;
use crate::files::{first_json_line, read_jsonl, sanitize, unique_stems, write_json, write_jsonl};
use crate::perturb::VerificationItem;
use crate::session::Session;
use crate::{usage_err, CliResult, UsageExt};

/// Ground truth for one item.
enum Gold {
    Symbolic(GeneratedExample),
    Proof(ProofPlanningExample),
    Verification(Option<usize>),
}

impl Gold {
    fn truth(&self) -> Truth<'_> {
        match self {
            Gold::Symbolic(e) => Truth::Symbolic(e),
            Gold::Proof(p) => Truth::Proof(p),
            Gold::Verification(changed_line) => Truth::Verification {
                changed_line: *changed_line,
            },
        }
    }
}

#[derive(Default)]
struct Loaded {
    items: Vec<EvalItem>,
    truths: HashMap<String, Gold>,
}

impl Loaded {
    fn push(&mut self, item: EvalItem, gold: Gold) -> CliResult<()> {
        if self.truths.insert(item.example_id.clone(), gold).is_some() {
            return Err(usage_err(format!("example id {} appears twice", item.example_id)));
        }
        self.items.push(item);
        Ok(())
    }
}

/// Reads symbolic, proof-planning or verification datasets, telling them
/// apart by the fields of their first record.
fn load_datasets(session: &mut Session, paths: &[PathBuf]) -> CliResult<Loaded> {
    let mut loaded = Loaded::default();
    for path in paths {
        session.input(path)?;
        let Some(first) = first_json_line(path)? else {
            session.note(format!("{} is empty", path.display()));
            continue;
        };
        let has = |k: &str| first.get(k).is_some();
        if has("edges") {
            let records: Vec<ExampleRecord> = read_jsonl(path)?;
            for (i, r) in records.into_iter().enumerate() {
                let ex = GeneratedExample::from_record(r).usage_ctx(format!("{}:{}", path.display(), i + 1))?;
                let item = EvalItem {
                    example_id: ex.id.clone(),
                    cell: CellLabel::of_example(&ex),
                    prompt: render_symbolic_prompt(&ex),
                };
                loaded.push(item, Gold::Symbolic(ex))?;
            }
        } else if has("facts") {
            for ex in read_jsonl::<ProofPlanningExample>(path)? {
                let item = EvalItem {
                    example_id: ex.id.clone(),
                    cell: CellLabel::of_proof(&ex),
                    prompt: render_proof_prompt(&ex),
                };
                loaded.push(item, Gold::Proof(ex))?;
            }
        } else if has("lines") {
            for v in read_jsonl::<VerificationItem>(path)? {
                let item = EvalItem {
                    example_id: v.id.clone(),
                    cell: v.cell(),
                    prompt: render_verification_prompt(&v.lines),
                };
                loaded.push(item, Gold::Verification(v.changed_line))?;
            }
        } else {
            return Err(usage_err(format!("{}: unrecognised dataset records", path.display())));
        }
    }
    if loaded.items.is_empty() {
        return Err(usage_err("the datasets contain no examples"));
    }
    Ok(loaded)
}

/// Path extraction choice: `rule`, or `model:<endpoint>` where the endpoint
/// is configured or written as `mock:<kind>`.
struct ExtractorChoice {
    label: String,
    model: Option<(ModelEndpoint, Box<dyn ChatTransport>)>,
}

impl ExtractorChoice {
    fn parse(spec: &str, cfg: &RunConfig) -> CliResult<Self> {
        if spec == "rule" {
            return Ok(Self {
                label: spec.into(),
                model: None,
            });
        }
        let Some(name) = spec.strip_prefix("model:") else {
            return Err(usage_err(format!("unknown extractor {spec:?}; use rule or model:<endpoint>")));
        };
        let endpoint = match name.strip_prefix("mock:") {
            Some(kind) => ModelEndpoint::mock(name, kind.parse::<MockKind>().usage()?),
            None => cfg
                .endpoint(name)
                .cloned()
                .ok_or_else(|| usage_err(format!("extractor endpoint {name:?} is not configured")))?,
        };
        let transport = endpoint.transport().usage()?;
        Ok(Self {
            label: spec.into(),
            model: Some((endpoint, transport)),
        })
    }

    fn extractor(&self) -> PathExtractor<'_> {
        match &self.model {
            None => PathExtractor::Rule,
            Some((endpoint, transport)) => PathExtractor::Model {
                endpoint,
                transport: transport.as_ref(),
            },
        }
    }
}

fn grouping(flag: Option<crate::args::GroupArg>, cfg: &RunConfig) -> Grouping {
    flag.map(Grouping::from).or(cfg.evaluate.group).unwrap_or_default()
}

fn write_metrics(session: &mut Session, records: &[EvalRecord], grouping: Grouping) -> CliResult<Vec<CellMetrics>> {
    let metrics = aggregate_metrics(records, grouping);
    match session.format {
        Format::Csv => {
            let path = session.output("metrics.csv")?;
            let mut w = BufWriter::new(fs::File::create(path)?);
            write_metrics_csv(&metrics, &mut w)?;
            w.flush()?;
        }
        Format::Json => {
            let path = session.output("metrics.json")?;
            write_json(&path, &metrics)?;
        }
    }
    Ok(metrics)
}

fn print_summary(metrics: &[CellMetrics]) {
    let mut by_model: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for m in metrics {
        let kind = serde_json::to_value(m.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let e = by_model.entry((m.model.clone(), kind)).or_default();
        e.0 += m.n;
        e.1 += m.graded;
    }
    for ((model, kind), (n, graded)) in by_model {
        println!("{model} {kind}: {n} records, {graded} graded");
    }
}

fn resolve_endpoints(session: &Session, args: &EvaluateArgs) -> CliResult<Vec<ModelEndpoint>> {
    let cfg = &session.config;
    let lookup = |name: &str| {
        cfg.endpoint(name)
            .cloned()
            .ok_or_else(|| usage_err(format!("endpoint {name:?} is not configured")))
    };
    let mut eps = args.endpoint.iter().map(|n| lookup(n)).collect::<CliResult<Vec<_>>>()?;
    for spec in &args.mock {
        let kind: MockKind = spec.parse().usage()?;
        eps.push(ModelEndpoint::mock(format!("mock-{spec}"), kind));
    }
    if eps.is_empty() {
        eps = if cfg.evaluate.endpoints.is_empty() {
            cfg.endpoints.clone()
        } else {
            cfg.evaluate.endpoints.iter().map(|n| lookup(n)).collect::<CliResult<Vec<_>>>()?
        };
    }
    if eps.is_empty() {
        return Err(usage_err("no endpoint selected; pass --endpoint or --mock, or configure [[endpoint]]"));
    }
    let mut files = HashSet::new();
    for ep in &mut eps {
        if let Some(c) = args.concurrency {
            ep.max_concurrency = c;
        }
        ep.validate().usage()?;
        if !files.insert(sanitize(&ep.name)) {
            return Err(usage_err(format!("endpoint {:?} selected twice", ep.name)));
        }
    }
    Ok(eps)
}

/// Existing records of an interrupted run. A torn final line is dropped and
/// the file rewritten without it.
fn read_partial_records(path: &Path) -> CliResult<Vec<EvalRecord>> {
    let text = fs::read_to_string(path).usage_ctx(format!("cannot read {}", path.display()))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<EvalRecord>(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => {
                log::warn!("{}: dropping incomplete last record", path.display());
                write_jsonl(path, &out)?;
            }
            Err(e) => return Err(usage_err(format!("{}:{}: malformed record: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

/// Puts records in dataset order, keeping the last record per example and
/// dropping any that are not in the dataset.
fn align(records: Vec<EvalRecord>, order: &HashMap<&str, usize>) -> (Vec<EvalRecord>, usize) {
    let mut latest: BTreeMap<usize, EvalRecord> = BTreeMap::new();
    let mut stray = 0;
    for r in records {
        match order.get(r.example_id.as_str()) {
            Some(&i) => {
                latest.insert(i, r);
            }
            None => stray += 1,
        }
    }
    (latest.into_values().collect(), stray)
}

pub(crate) fn evaluate(session: &mut Session, args: &EvaluateArgs) -> CliResult<serde_json::Value> {
    let cfg = session.config.evaluate.clone();
    let endpoints = resolve_endpoints(session, args)?;
    let extractor_spec = args.extractor.clone().or(cfg.extractor.clone()).unwrap_or_else(|| "rule".into());
    let extractor = ExtractorChoice::parse(&extractor_spec, &session.config)?;
    let group = grouping(args.group, &session.config);
    let token_budget = args.token_budget.or(cfg.token_budget);
    let per_cell_cap = args.per_cell_cap.or(cfg.per_cell_cap);
    let run_id = args
        .run_id
        .clone()
        .or(cfg.run_id.clone())
        .unwrap_or_else(|| format!("run-{:016x}", session.seed));

    let loaded = load_datasets(session, &args.dataset)?;
    let items: Vec<EvalItem> = match per_cell_cap {
        Some(cap) => {
            let mut seen: HashMap<(PromptKind, CellLabel), usize> = HashMap::new();
            loaded
                .items
                .iter()
                .filter(|it| {
                    let n = seen.entry((it.prompt.kind, it.cell)).or_default();
                    *n += 1;
                    *n <= cap
                })
                .cloned()
                .collect()
        }
        None => loaded.items.clone(),
    };
    let order: HashMap<&str, usize> = items.iter().enumerate().map(|(i, it)| (it.example_id.as_str(), i)).collect();

    let mut all_graded = Vec::new();
    for ep in &endpoints {
        let transport = ep.transport().usage_ctx(format!("endpoint {}", ep.name))?;
        let file = sanitize(&ep.name);
        let raw_path = session.output(format!("records/{file}.jsonl"))?;
        let existing = if args.resume && raw_path.exists() {
            read_partial_records(&raw_path)?
        } else {
            fs::File::create(&raw_path)?;
            Vec::new()
        };
        let done: HashSet<&str> = existing.iter().map(|r| r.example_id.as_str()).collect();
        let pending: Vec<EvalItem> = items
            .iter()
            .filter(|it| !done.contains(it.example_id.as_str()))
            .take(args.limit.unwrap_or(usize::MAX))
            .cloned()
            .collect();
        log::info!("{}: {} done, {} to query", ep.name, done.len(), pending.len());

        let mut w = BufWriter::new(OpenOptions::new().append(true).open(&raw_path)?);
        let summary = run_batch(ep, transport.as_ref(), &run_id, &pending, token_budget, |r| {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
            w.flush()?;
            Ok(())
        })?;
        drop(w);
        if summary.budget_exhausted {
            session.note(format!("{}: token budget exhausted after {} records", ep.name, summary.completed));
        }

        let (mut records, stray) = align(read_jsonl(&raw_path)?, &order);
        if stray > 0 {
            session.note(format!("{}: {stray} stored records are not in the datasets", ep.name));
        }
        if records.len() < items.len() {
            session.note(format!("{}: {} of {} items answered", ep.name, records.len(), items.len()));
        }
        for r in &mut records {
            grade_record(r, loaded.truths[r.example_id.as_str()].truth(), &extractor.extractor());
        }
        let graded_path = session.output(format!("graded/{file}.jsonl"))?;
        write_jsonl(&graded_path, &records)?;
        all_graded.extend(records);
    }
    let metrics = write_metrics(session, &all_graded, group)?;
    print_summary(&metrics);
    Ok(json!({
        "datasets": args.dataset,
        "endpoints": endpoints,
        "run_id": run_id,
        "resume": args.resume,
        "limit": args.limit,
        "token_budget": token_budget,
        "per_cell_cap": per_cell_cap,
        "extractor": extractor.label,
        "grouping": group,
    }))
}

pub(crate) fn grade(session: &mut Session, args: &GradeArgs) -> CliResult<serde_json::Value> {
    let stems = unique_stems(&args.records)?;
    let loaded = load_datasets(session, &args.dataset)?;
    let spec = args
        .extractor
        .clone()
        .or(session.config.evaluate.extractor.clone())
        .unwrap_or_else(|| "rule".into());
    let extractor = ExtractorChoice::parse(&spec, &session.config)?;
    let group = grouping(args.group, &session.config);
    let mut all = Vec::new();
    for (path, stem) in args.records.iter().zip(&stems) {
        session.input(path)?;
        let mut records: Vec<EvalRecord> = read_jsonl(path)?;
        for r in &mut records {
            let gold = loaded.truths.get(r.example_id.as_str()).ok_or_else(|| {
                usage_err(format!("{}: no ground truth for example {}", path.display(), r.example_id))
            })?;
            grade_record(r, gold.truth(), &extractor.extractor());
        }
        let out = session.output(format!("graded/{stem}.jsonl"))?;
        write_jsonl(&out, &records)?;
        all.extend(records);
    }
    let metrics = write_metrics(session, &all, group)?;
    print_summary(&metrics);
    Ok(json!({
        "records": args.records,
        "datasets": args.dataset,
        "extractor": extractor.label,
        "grouping": group,
    }))
}

pub(crate) fn report(session: &mut Session, args: &ReportArgs) -> CliResult<serde_json::Value> {
    let group = grouping(args.group, &session.config);
    let mut all: Vec<EvalRecord> = Vec::new();
    for path in &args.records {
        session.input(path)?;
        all.extend(read_jsonl::<EvalRecord>(path)?);
    }
    let ungraded = all
        .iter()
        .filter(|r| r.verdicts.is_none() && !r.stop_reason.is_excluded())
        .count();
    if ungraded > 0 {
        session.note(format!("{ungraded} records are ungraded; run `grade` first"));
    }
    let metrics = write_metrics(session, &all, group)?;
    print_summary(&metrics);
    Ok(json!({ "records": args.records, "grouping": group }))
}
