//! Natural-language rendering of connectivity examples.
//!
//! Every node gets a made-up two-syllable attribute word, every edge becomes
//! one implication sentence drawn from eight fixed templates, and the query
//! asks for the attribute that follows the start on the way to the goal.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{mix_seed, GeneratedExample};
use crate::graph::NodeId;

pub const SYSTEM_PROMPT: &str =
    "When answering a yes or no question, always start the answer with |YES| or |NO| depending on your answer.";

pub const PROOF_HEADER: &str = "Suppose we have the following list of facts:";

/// Fact templates; `{name}`, `{a}` (premise) and `{b}` (conclusion) are
/// substituted.
pub const TEMPLATES: [&str; 8] = [
    "If {name} is {a}, then {name} is {b}.",
    "{name} is {a} implies {name} is {b}.",
    "{name} is {b} is true if {name} is {a}.",
    "{b} is true if {a} is true.",
    "If {a} then {b} is true.",
    "If {a} is true then {b}.",
    "Given {name} is {a} then {name} is {b}.",
    "If a person is {a} then they are {b}.",
];

pub const DEFAULT_CONSONANTS: &str = "bcdfghjklmnprstvwyz";
pub const DEFAULT_VOWELS: &str = "aeiou";

/// Function words of the templates; never used as attributes.
const RESERVED: [&str; 12] = [
    "if", "is", "then", "true", "implies", "given", "person", "they", "are", "a", "that", "prove",
];

const WORD_RETRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Letter {
    C,
    V,
}

const SYLLABLES: [&[Letter]; 7] = {
    use Letter::{C, V};
    [&[C, V], &[V, C], &[C, V, C], &[C, V, V], &[C, C, V], &[V, C, V], &[V, C, C]]
};

/// Builds attribute words from two syllables of the allowed shapes.
#[derive(Debug, Clone)]
pub struct WordGenerator {
    consonants: Vec<char>,
    vowels: Vec<char>,
}

impl Default for WordGenerator {
    fn default() -> Self {
        Self::new(DEFAULT_CONSONANTS, DEFAULT_VOWELS).expect("default alphabets are nonempty")
    }
}

impl WordGenerator {
    pub fn new(consonants: &str, vowels: &str) -> Result<Self> {
        let consonants: Vec<char> = consonants.chars().collect();
        let vowels: Vec<char> = vowels.chars().collect();
        if consonants.is_empty() || vowels.is_empty() {
            return Err(Error::domain("consonant and vowel alphabets must be nonempty"));
        }
        Ok(Self { consonants, vowels })
    }

    fn syllable<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut String) {
        let shape = SYLLABLES.choose(rng).unwrap();
        for letter in shape.iter() {
            let pool = match letter {
                Letter::C => &self.consonants,
                Letter::V => &self.vowels,
            };
            out.push(*pool.choose(rng).unwrap());
        }
    }

    /// A word not in `taken` and not a template keyword.
    pub fn fresh<R: Rng + ?Sized>(&self, rng: &mut R, taken: &HashSet<String>) -> Result<String> {
        for _ in 0..WORD_RETRIES {
            let mut w = String::with_capacity(6);
            self.syllable(rng, &mut w);
            self.syllable(rng, &mut w);
            if !taken.contains(&w) && !RESERVED.contains(&w.as_str()) {
                return Ok(w);
            }
        }
        Err(Error::WordsExhausted(WORD_RETRIES))
    }

    /// True when `word` splits into two syllables of the allowed shapes over
    /// this generator's alphabets.
    pub fn conforms(&self, word: &str) -> bool {
        let letters: Option<Vec<Letter>> = word
            .chars()
            .map(|c| {
                if self.vowels.contains(&c) {
                    Some(Letter::V)
                } else if self.consonants.contains(&c) {
                    Some(Letter::C)
                } else {
                    None
                }
            })
            .collect();
        let Some(letters) = letters else { return false };
        SYLLABLES.iter().any(|first| {
            letters.starts_with(first) && SYLLABLES.iter().any(|second| &letters[first.len()..] == *second)
        })
    }
}

pub fn gen_attribute_word<R: Rng + ?Sized>(rng: &mut R, taken: &HashSet<String>) -> Result<String> {
    WordGenerator::default().fresh(rng, taken)
}

const GIVEN_NAMES: [&str; 50] = [
    "Alyssa", "Mariah", "Jonah", "Priya", "Marcus", "Elena", "Tobias", "Keisha", "Rafael", "Ingrid",
    "Omar", "Sofia", "Declan", "Naomi", "Hiroshi", "Amara", "Lucas", "Fiona", "Dmitri", "Leila",
    "Samuel", "Chloe", "Mateo", "Yara", "Gabriel", "Hannah", "Kwame", "Isla", "Victor", "Mei",
    "Andre", "Beatrice", "Felix", "Rosa", "Emeka", "Clara", "Nikolai", "Zainab", "Oscar", "Maya",
    "Tariq", "Lena", "Julian", "Esther", "Rohan", "Greta", "Malik", "Ines", "Connor", "Aiko",
];

const FAMILY_NAMES: [&str; 30] = [
    "Gonzalez", "Nguyen", "Okafor", "Schmidt", "Patel", "Rossi", "Kowalski", "Tanaka", "Haddad",
    "Johansson", "Murphy", "Silva", "Novak", "Fischer", "Mensah", "Dubois", "Kim", "Lopez", "Ivanova",
    "Brennan", "Castillo", "Yilmaz", "Andersen", "Moreau", "Kapoor", "Romero", "Lindqvist", "Adeyemi",
    "Costa", "Walsh",
];

/// Fixed pool of 200 subject names: the 50 given names alone, then 150
/// given + family pairs.
pub fn name_pool() -> &'static [String] {
    static POOL: OnceLock<Vec<String>> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut pool: Vec<String> = GIVEN_NAMES.iter().map(|s| s.to_string()).collect();
        for i in 0..150 {
            let given = GIVEN_NAMES[i % GIVEN_NAMES.len()];
            let family = FAMILY_NAMES[(i * 7 + i / GIVEN_NAMES.len() + 23) % FAMILY_NAMES.len()];
            pool.push(format!("{given} {family}"));
        }
        pool
    })
}

/// One fact sentence per edge of the source example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofPlanningExample {
    pub id: String,
    pub source_id: String,
    pub name: String,
    /// Facts in edge order; prompts shuffle them.
    pub facts: Vec<String>,
    pub start_attr: String,
    pub goal_attr: String,
    pub gold_next_attr: String,
    /// Zero-based index into [`TEMPLATES`] for each fact.
    pub template_ids: Vec<u8>,
    pub node_attributes: BTreeMap<NodeId, String>,
    pub lookahead: u32,
    pub branches: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    pub seed: u64,
}

impl ProofPlanningExample {
    pub fn query(&self) -> String {
        render_query(&self.name, &self.start_attr, &self.goal_attr)
    }

    /// Attributes of the start's children, i.e. the candidate answers.
    pub fn candidate_attrs(&self) -> Result<Vec<String>> {
        let mut out: Vec<String> = parse_facts(&self.facts)?
            .into_iter()
            .filter(|(a, _)| *a == self.start_attr)
            .map(|(_, b)| b)
            .collect();
        out.sort();
        out.dedup();
        Ok(out)
    }
}

pub fn render_fact(template: usize, name: &str, a: &str, b: &str) -> String {
    TEMPLATES[template].replace("{name}", name).replace("{a}", a).replace("{b}", b)
}

pub fn render_query(name: &str, x: &str, y: &str) -> String {
    format!(
        "Given that {name} is {x}, and we want to prove {name} is {y}. The next step in the proof is: {name} is ____."
    )
}

/// Translates a symbolic example. The name, attributes and templates are
/// drawn from `rng`; the result carries `seed` for prompt rendering.
pub fn graph_to_logic<R: Rng + ?Sized>(example: &GeneratedExample, rng: &mut R) -> Result<ProofPlanningExample> {
    graph_to_logic_with(example, rng, &WordGenerator::default())
}

pub fn graph_to_logic_with<R: Rng + ?Sized>(
    example: &GeneratedExample,
    rng: &mut R,
    words: &WordGenerator,
) -> Result<ProofPlanningExample> {
    let nodes: BTreeSet<NodeId> = example.graph.edges().flat_map(|(u, v)| [u, v]).collect();
    let name = name_pool().choose(rng).unwrap().clone();
    let mut taken = HashSet::with_capacity(nodes.len());
    let mut attrs = BTreeMap::new();
    for &v in &nodes {
        let w = words.fresh(rng, &taken)?;
        taken.insert(w.clone());
        attrs.insert(v, w);
    }
    let attr = |v: NodeId| {
        attrs
            .get(&v)
            .cloned()
            .ok_or_else(|| Error::domain(format!("node {v} does not appear on any edge")))
    };
    let mut facts = Vec::with_capacity(example.graph.edge_count());
    let mut template_ids = Vec::with_capacity(example.graph.edge_count());
    for (u, v) in example.graph.edges() {
        let t = rng.random_range(0..TEMPLATES.len());
        facts.push(render_fact(t, &name, &attrs[&u], &attrs[&v]));
        template_ids.push(t as u8);
    }
    Ok(ProofPlanningExample {
        id: format!("{}_nl", example.id),
        source_id: example.id.clone(),
        start_attr: attr(example.start)?,
        goal_attr: attr(example.goal)?,
        gold_next_attr: attr(example.gold_next)?,
        name,
        facts,
        template_ids,
        node_attributes: attrs,
        lookahead: example.lookahead,
        branches: example.branches,
        depth: example.depth,
        seed: example.seed,
    })
}

fn template_regexes() -> &'static [Regex; 8] {
    static RES: OnceLock<[Regex; 8]> = OnceLock::new();
    RES.get_or_init(|| {
        TEMPLATES.map(|t| {
            let pattern = regex::escape(t)
                .replacen(r"\{name\}", r"(?P<n1>[A-Z][A-Za-z'\-]*(?: [A-Z][A-Za-z'\-]*)*)", 1)
                .replacen(r"\{name\}", r"(?P<n2>[A-Z][A-Za-z'\-]*(?: [A-Z][A-Za-z'\-]*)*)", 1)
                .replace(r"\{a\}", r"(?P<a>[a-z]+)")
                .replace(r"\{b\}", r"(?P<b>[a-z]+)");
            Regex::new(&format!("^{pattern}$")).expect("template regex")
        })
    })
}

/// Matches one sentence against the templates: `(template, premise,
/// conclusion)`.
pub fn parse_fact(sentence: &str) -> Result<(usize, String, String)> {
    let s = sentence.trim();
    for (i, re) in template_regexes().iter().enumerate() {
        if let Some(c) = re.captures(s) {
            if let (Some(n1), Some(n2)) = (c.name("n1"), c.name("n2")) {
                if n1.as_str() != n2.as_str() {
                    continue;
                }
            }
            return Ok((i, c["a"].to_string(), c["b"].to_string()));
        }
    }
    Err(Error::UnknownTemplate(s.to_string()))
}

/// Recovers `(premise, conclusion)` attribute pairs from fact sentences.
pub fn parse_facts<S: AsRef<str>>(sentences: &[S]) -> Result<Vec<(String, String)>> {
    sentences
        .iter()
        .map(|s| parse_fact(s.as_ref()).map(|(_, a, b)| (a, b)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptKind {
    SymbolicPath,
    ProofNextStep,
    ProofVerification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub system: String,
    pub user: String,
    pub kind: PromptKind,
}

/// Directed connectivity prompt in the edge-list style, asking for the full
/// path. Edge order is shuffled by the example's seed.
pub fn render_symbolic_prompt(example: &GeneratedExample) -> PromptText {
    render_symbolic_prompt_seeded(example, example.seed)
}

pub fn render_symbolic_prompt_seeded(example: &GeneratedExample, seed: u64) -> PromptText {
    let mut edges: Vec<(NodeId, NodeId)> = example.graph.edges().collect();
    edges.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5359_4d42)));
    let listed: Vec<String> = edges.iter().map(|(u, v)| format!("({u}, {v})")).collect();
    let user = format!(
        "In a directed graph, (i, j) means that there is an edge from node i to node j. The graph has the following edges:\n\
         {}\n\
         Q: Find a path from node {} to node {}. Give the full path as a sequence of nodes separated by \" -> \", \
         and end your response with a line of the form \"Final Answer: <path>\".\nA:",
        listed.join(" "),
        example.start,
        example.goal
    );
    PromptText {
        system: SYSTEM_PROMPT.to_string(),
        user,
        kind: PromptKind::SymbolicPath,
    }
}

/// Recovers the edge list and `(start, goal)` from a rendered symbolic
/// prompt.
pub fn parse_symbolic_prompt(user: &str) -> Result<(Vec<(NodeId, NodeId)>, NodeId, NodeId)> {
    static EDGE: OnceLock<Regex> = OnceLock::new();
    static QUERY: OnceLock<Regex> = OnceLock::new();
    let edge = EDGE.get_or_init(|| Regex::new(r"\((\d+), (\d+)\)").unwrap());
    let query = QUERY.get_or_init(|| Regex::new(r"Find a path from node (\d+) to node (\d+)\.").unwrap());
    let body = user
        .lines()
        .nth(1)
        .ok_or_else(|| Error::Parse { line: 2, message: "missing edge line".into() })?;
    let num = |s: &str| s.parse::<NodeId>().map_err(|e| Error::Parse { line: 2, message: e.to_string() });
    let edges = edge
        .captures_iter(body)
        .map(|c| Ok((num(&c[1])?, num(&c[2])?)))
        .collect::<Result<Vec<_>>>()?;
    let q = query
        .captures(user)
        .ok_or_else(|| Error::Parse { line: 3, message: "missing query".into() })?;
    Ok((edges, num(&q[1])?, num(&q[2])?))
}

/// Facts in seeded shuffled order under the transcript header, then the
/// query.
pub fn render_proof_prompt(example: &ProofPlanningExample) -> PromptText {
    let mut facts: Vec<&str> = example.facts.iter().map(String::as_str).collect();
    facts.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(example.seed, 0x5052_4f46)));
    let user = format!(
        "{PROOF_HEADER}\n{}\n{}\nEnd your response with a line of the form \"Final Answer: <attribute>\".",
        facts.join("\n"),
        example.query()
    );
    PromptText {
        system: SYSTEM_PROMPT.to_string(),
        user,
        kind: PromptKind::ProofNextStep,
    }
}

/// Facts and `(name, start_attr, goal_attr)` from a rendered proof prompt.
pub fn parse_proof_prompt(user: &str) -> Result<(Vec<String>, String, String, String)> {
    static QUERY: OnceLock<Regex> = OnceLock::new();
    let query = QUERY.get_or_init(|| {
        Regex::new(r"^Given that (.+) is ([a-z]+), and we want to prove (.+) is ([a-z]+)\. The next step").unwrap()
    });
    let mut facts = Vec::new();
    for (i, line) in user.lines().enumerate() {
        if i == 0 {
            if line != PROOF_HEADER {
                return Err(Error::Parse { line: 1, message: "missing facts header".into() });
            }
            continue;
        }
        if let Some(c) = query.captures(line) {
            return Ok((facts, c[1].to_string(), c[2].to_string(), c[4].to_string()));
        }
        facts.push(line.to_string());
    }
    Err(Error::Parse {
        line: user.lines().count(),
        message: "missing query".into(),
    })
}

/// Asks whether a numbered proof is correct and, if not, which line is wrong.
pub fn render_verification_prompt(lines: &[String]) -> PromptText {
    let numbered: Vec<String> = lines.iter().enumerate().map(|(i, l)| format!("{}. {l}", i + 1)).collect();
    let user = format!(
        "Is the following proof correct?\n{}\n\
         If it is incorrect, identify the first incorrect line as \"line N\".",
        numbered.join("\n")
    );
    PromptText {
        system: SYSTEM_PROMPT.to_string(),
        user,
        kind: PromptKind::ProofVerification,
    }
}
