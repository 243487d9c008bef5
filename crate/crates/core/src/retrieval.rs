//! Context generation for query entities.
//!
//! For each entity the index hands back a block list; every address in it is
//! expanded into its ancestor and descendant chains, and the result is
//! rendered into prompt text with a small `{entity}`/`{up}`/`{down}`
//! template.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::forest::{hierarchy_chain, Forest, NodeAddress};
use crate::index::CuckooIndex;

pub const DEFAULT_DEPTH: usize = 3;

pub const DEFAULT_TEMPLATE: &str = "The upward hierarchical relationship of entity {entity} are: {up}. \
The downward hierarchical relationship of entity {entity} are: {down}.";

pub const DEFAULT_SYSTEM_PROMPT: &str =
    "Answer the question using the hierarchical context about the entities below.";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("address {address} for `{label}` does not exist in the forest")]
    StaleAddress { label: String, address: NodeAddress },
    #[error("template is missing the {0} placeholder")]
    BadTemplate(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Occurrence {
    pub address: NodeAddress,
    pub up: Vec<String>,
    pub down: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityContext {
    pub label: String,
    pub occurrences: Vec<Occurrence>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContextBundle {
    pub query_text: String,
    pub contexts: Vec<EntityContext>,
    pub missing: Vec<String>,
}

fn occurrence(forest: &Forest, label: &str, address: NodeAddress, n: usize) -> Result<Occurrence, RetrievalError> {
    let chain = hierarchy_chain(forest, address, n).map_err(|_| RetrievalError::StaleAddress {
        label: label.to_string(),
        address,
    })?;
    Ok(Occurrence {
        address,
        up: chain.up,
        down: chain.down,
    })
}

/// Builds the context bundle through the cuckoo index. Each found entity is
/// touched exactly once; repeated entities in `entities` are ignored.
pub fn generate_context(
    index: &mut CuckooIndex,
    forest: &Forest,
    query_text: &str,
    entities: &[impl AsRef<str>],
    n: usize,
) -> Result<ContextBundle, RetrievalError> {
    let mut bundle = ContextBundle {
        query_text: query_text.to_string(),
        ..ContextBundle::default()
    };
    let mut seen = HashSet::new();
    for entity in entities {
        let label = entity.as_ref();
        if !seen.insert(label) {
            continue;
        }
        let Some(head) = index.lookup_and_touch(label).head() else {
            bundle.missing.push(label.to_string());
            continue;
        };
        let mut occurrences = Vec::with_capacity(index.head(head).count());
        for block in index.blocks(head) {
            for &address in block.addresses() {
                occurrences.push(occurrence(forest, label, address, n)?);
            }
        }
        bundle.contexts.push(EntityContext {
            label: label.to_string(),
            occurrences,
        });
    }
    Ok(bundle)
}

/// Same bundle shape, with occurrences supplied by any locator (for example
/// one of the baseline retrievers). `locate` returns `None` or an empty list
/// for absent entities.
pub fn generate_context_with<F>(
    forest: &Forest,
    query_text: &str,
    entities: &[impl AsRef<str>],
    n: usize,
    mut locate: F,
) -> Result<ContextBundle, RetrievalError>
where
    F: FnMut(&str) -> Option<Vec<NodeAddress>>,
{
    let mut bundle = ContextBundle {
        query_text: query_text.to_string(),
        ..ContextBundle::default()
    };
    let mut seen = HashSet::new();
    for entity in entities {
        let label = entity.as_ref();
        if !seen.insert(label) {
            continue;
        }
        match locate(label) {
            Some(addresses) if !addresses.is_empty() => {
                let occurrences = addresses
                    .into_iter()
                    .map(|a| occurrence(forest, label, a, n))
                    .collect::<Result<_, _>>()?;
                bundle.contexts.push(EntityContext {
                    label: label.to_string(),
                    occurrences,
                });
            }
            _ => bundle.missing.push(label.to_string()),
        }
    }
    Ok(bundle)
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Piece {
    Text(String),
    Entity,
    Up,
    Down,
}

/// A parsed prompt line template.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    /// Parses `text`, which must contain `{entity}`, `{up}` and `{down}`.
    /// Trailing line breaks are dropped; other braces are literal.
    pub fn parse(text: &str) -> Result<Self, RetrievalError> {
        let text = text.trim_end_matches(['\n', '\r']);
        let mut pieces = Vec::new();
        let mut literal = String::new();
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            literal.push_str(&rest[..open]);
            let tail = &rest[open..];
            let placeholder = [("{entity}", Piece::Entity), ("{up}", Piece::Up), ("{down}", Piece::Down)]
                .into_iter()
                .find(|(tag, _)| tail.starts_with(tag));
            match placeholder {
                Some((tag, piece)) => {
                    if !literal.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut literal)));
                    }
                    pieces.push(piece);
                    rest = &tail[tag.len()..];
                }
                None => {
                    literal.push('{');
                    rest = &tail[1..];
                }
            }
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            pieces.push(Piece::Text(literal));
        }
        for (piece, name) in [(Piece::Entity, "{entity}"), (Piece::Up, "{up}"), (Piece::Down, "{down}")] {
            if !pieces.contains(&piece) {
                return Err(RetrievalError::BadTemplate(name));
            }
        }
        Ok(Self { pieces })
    }

    pub fn render(&self, entity: &str, up: &[String], down: &[String]) -> String {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Entity => out.push_str(entity),
                Piece::Up => out.push_str(&join_with_and(up)),
                Piece::Down => out.push_str(&join_with_and(down)),
            }
        }
        out
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("default template is well formed")
    }
}

/// `[B, C, D]` -> `"B, C and D"`; an empty list renders as `none`.
pub fn join_with_and(items: &[String]) -> String {
    match items {
        [] => "none".to_string(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Renders the system prompt, one line per occurrence, then the query.
pub fn render_prompt(bundle: &ContextBundle, system_prompt: &str, template: &str) -> Result<String, RetrievalError> {
    Ok(render_with(bundle, system_prompt, &PromptTemplate::parse(template)?))
}

pub fn render_with(bundle: &ContextBundle, system_prompt: &str, template: &PromptTemplate) -> String {
    let mut out = String::new();
    out.push_str(system_prompt.trim_end_matches(['\n', '\r']));
    out.push('\n');
    for ctx in &bundle.contexts {
        for occ in &ctx.occurrences {
            let _ = writeln!(out, "{}", template.render(&ctx.label, &occ.up, &occ.down));
        }
    }
    out.push_str(&bundle.query_text);
    out.push('\n');
    out
}
