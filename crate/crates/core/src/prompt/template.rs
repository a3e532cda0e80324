use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::names::{substitute_names, NameAssignment};
use crate::corpus::{Event, Relation};
use crate::error::{Error, Result};

const PLACEHOLDERS: [&str; 5] = ["index", "event", "tail", "nameX", "nameY"];

/// One few-shot row. Event-generation templates only use `event`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FewShotExample {
    pub event: Event,
    #[serde(default)]
    pub tail: Option<String>,
    #[serde(default)]
    pub name_x: Option<String>,
    #[serde(default)]
    pub name_y: Option<String>,
}

impl FewShotExample {
    pub fn names(&self) -> Result<NameAssignment> {
        match (&self.name_x, &self.name_y) {
            (Some(x), Some(y)) => NameAssignment::new(x, y),
            _ => Err(Error::Template(format!(
                "few-shot example {:?} has no names",
                self.event.as_str()
            ))),
        }
    }
}

/// A completion-style few-shot prompt. The prompt is
/// `task_prompt + header_separator` (when a task prompt is set), the numbered
/// example blocks joined by `block_separator`, then the open slot.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    #[serde(default)]
    pub relation: Option<Relation>,
    #[serde(default)]
    pub task_prompt: String,
    #[serde(default)]
    pub header_separator: String,
    pub input: String,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub io_separator: String,
    /// Word joining the output prefix to the tail (e.g. "to" in "has to").
    /// Left out of the open slot and stripped from completions.
    #[serde(default)]
    pub connective: Option<String>,
    pub block_separator: String,
    pub n_examples: usize,
    #[serde(default)]
    pub examples: Vec<FewShotExample>,
}

impl PromptTemplate {
    pub fn from_toml(text: &str) -> Result<Self> {
        let template: PromptTemplate =
            toml::from_str(text).map_err(|e| Error::Template(e.to_string()))?;
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_examples == 0 {
            return Err(Error::Template("n_examples must be at least 1".into()));
        }
        for pattern in std::iter::once(&self.input).chain(self.output.as_ref()) {
            check_placeholders(pattern)?;
        }
        match (&self.relation, &self.output) {
            (None, _) if !self.input.contains("{event}") => {
                return Err(Error::Template("event template input needs {event}".into()))
            }
            (Some(_), None) => {
                return Err(Error::Template(
                    "relation template needs an output pattern".into(),
                ))
            }
            (Some(_), Some(out)) if !out.contains("{tail}") => {
                return Err(Error::Template("output pattern needs {tail}".into()))
            }
            _ => {}
        }
        if self.relation.is_some() {
            for ex in &self.examples {
                ex.names()?;
                if ex.tail.is_none() {
                    return Err(Error::Template(format!(
                        "few-shot example {:?} has no tail",
                        ex.event.as_str()
                    )));
                }
            }
        }
        Ok(())
    }

    /// The first `n_examples` configured examples.
    pub fn default_examples(&self) -> &[FewShotExample] {
        &self.examples[..self.examples.len().min(self.n_examples)]
    }

    fn assemble(&self, blocks: Vec<String>, open: String) -> String {
        let mut prompt = String::new();
        if !self.task_prompt.is_empty() {
            prompt.push_str(&self.task_prompt);
            prompt.push_str(&self.header_separator);
        }
        for block in blocks {
            prompt.push_str(&block);
            prompt.push_str(&self.block_separator);
        }
        prompt.push_str(&open);
        prompt
    }

    pub fn render_event_prompt(&self, seeds: &[Event]) -> Result<String> {
        if self.relation.is_some() {
            return Err(Error::Template("not an event-generation template".into()));
        }
        if seeds.len() != self.n_examples {
            return Err(Error::InvalidInput(format!(
                "expected {} seed events, got {}",
                self.n_examples,
                seeds.len()
            )));
        }
        let blocks = seeds
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let index = (i + 1).to_string();
                fill(
                    &self.input,
                    &[("index", index.as_str()), ("event", e.as_str())],
                )
            })
            .collect();
        let open_pattern = cut_before(&self.input, "{event}");
        let open = fill(open_pattern, &[("index", &(seeds.len() + 1).to_string())]);
        Ok(self.assemble(blocks, open))
    }

    /// Output pattern up to the tail slot, without the connective.
    fn open_output(&self) -> &str {
        let output = self.output.as_deref().unwrap_or_default();
        let prefix = cut_before(output, "{tail}");
        match &self.connective {
            Some(c) => prefix
                .strip_suffix(c.as_str())
                .filter(|p| p.is_empty() || p.ends_with(char::is_whitespace))
                .map(str::trim_end)
                .unwrap_or(prefix),
            None => prefix,
        }
    }

    pub fn render_inference_prompt(
        &self,
        target: &Event,
        few_shot: &[FewShotExample],
        names: &NameAssignment,
    ) -> Result<String> {
        let output = self
            .output
            .as_deref()
            .ok_or_else(|| Error::Template("not an inference template".into()))?;
        if few_shot.len() != self.n_examples {
            return Err(Error::InvalidInput(format!(
                "expected {} few-shot examples, got {}",
                self.n_examples,
                few_shot.len()
            )));
        }
        let mut blocks = Vec::with_capacity(few_shot.len());
        for (i, ex) in few_shot.iter().enumerate() {
            let ex_names = ex.names()?;
            let event = substitute_names(ex.event.as_str(), &ex_names);
            let tail = substitute_names(ex.tail.as_deref().unwrap_or_default(), &ex_names);
            let values = slot_values(i + 1, &event, &ex_names);
            let mut block = fill(&self.input, &values);
            block.push_str(&self.io_separator);
            let mut with_tail = values.clone();
            with_tail.push(("tail", tail.as_str().into()));
            block.push_str(&fill(output, &with_tail));
            blocks.push(block);
        }
        let target_text = substitute_names(target.as_str(), names);
        let values = slot_values(few_shot.len() + 1, &target_text, names);
        let mut open = fill(&self.input, &values);
        open.push_str(&self.io_separator);
        open.push_str(&fill(self.open_output(), &values));
        Ok(self.assemble(blocks, open))
    }

    /// Extracts a tail from the continuation of the open output slot.
    pub fn parse_completion(&self, raw: &str) -> Result<String> {
        super::parse::parse_inference_text(raw, self.connective.as_deref())
    }
}

fn slot_values<'a>(
    index: usize,
    event: &'a str,
    names: &'a NameAssignment,
) -> Vec<(&'static str, std::borrow::Cow<'a, str>)> {
    vec![
        ("index", index.to_string().into()),
        ("event", event.into()),
        ("nameX", names.name_x.as_str().into()),
        ("nameY", names.name_y.as_str().into()),
    ]
}

fn cut_before<'a>(pattern: &'a str, slot: &str) -> &'a str {
    pattern
        .find(slot)
        .map_or(pattern, |i| &pattern[..i])
        .trim_end()
}

fn check_placeholders(pattern: &str) -> Result<()> {
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Template(format!("unclosed placeholder in {pattern:?}")))?;
        let name = &after[..close];
        if !PLACEHOLDERS.contains(&name) {
            return Err(Error::Template(format!("unknown placeholder {{{name}}}")));
        }
        rest = &after[close + 1..];
    }
    Ok(())
}

/// Single-pass placeholder substitution; inserted values are not rescanned.
fn fill<V: AsRef<str>>(pattern: &str, values: &[(&str, V)]) -> String {
    let mut out = String::with_capacity(pattern.len() + 32);
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let name = &after[..close];
            values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (v.as_ref(), close))
        });
        match replaced {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

const BUILTIN_EVENT: &str = include_str!("../../templates/event.toml");
const BUILTIN_RELATIONS: [(Relation, &str); 7] = [
    (Relation::XAttr, include_str!("../../templates/xattr.toml")),
    (
        Relation::XReact,
        include_str!("../../templates/xreact.toml"),
    ),
    (
        Relation::XEffect,
        include_str!("../../templates/xeffect.toml"),
    ),
    (
        Relation::XIntent,
        include_str!("../../templates/xintent.toml"),
    ),
    (Relation::XWant, include_str!("../../templates/xwant.toml")),
    (Relation::XNeed, include_str!("../../templates/xneed.toml")),
    (
        Relation::HinderedBy,
        include_str!("../../templates/hinderedby.toml"),
    ),
];

/// The event template plus one template per relation.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub event: PromptTemplate,
    pub relations: BTreeMap<Relation, PromptTemplate>,
}

impl TemplateSet {
    /// Templates shipped in the crate's `templates/` directory.
    pub fn builtin() -> Self {
        let event = PromptTemplate::from_toml(BUILTIN_EVENT).expect("builtin event template");
        let relations = BUILTIN_RELATIONS
            .iter()
            .map(|(r, text)| {
                (
                    *r,
                    PromptTemplate::from_toml(text).expect("builtin template"),
                )
            })
            .collect();
        TemplateSet { event, relations }
    }

    /// Loads `event.toml` and any `<relation>.toml` present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<Option<PromptTemplate>> {
            let path = dir.join(format!("{name}.toml"));
            if !path.exists() {
                return Ok(None);
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            PromptTemplate::from_toml(&text)
                .map(Some)
                .map_err(|e| Error::Template(format!("{}: {e}", path.display())))
        };
        let event = read("event")?
            .ok_or_else(|| Error::Template(format!("{}: missing event.toml", dir.display())))?;
        let mut relations = BTreeMap::new();
        for r in Relation::ALL {
            if let Some(t) = read(r.name())? {
                if t.relation != Some(r) {
                    return Err(Error::Template(format!(
                        "{}.toml declares relation {:?}",
                        r.name(),
                        t.relation.map(Relation::name)
                    )));
                }
                relations.insert(r, t);
            }
        }
        Ok(TemplateSet { event, relations })
    }

    pub fn relation(&self, relation: Relation) -> Result<&PromptTemplate> {
        self.relations
            .get(&relation)
            .ok_or_else(|| Error::Template(format!("no template for relation {relation}")))
    }
}
