//! Rendered prompts paired with their golden files.

use kbdistill::corpus::{Event, Relation};
use kbdistill::prompt::{NameAssignment, SeedPool, TemplateSet};

pub const GOLDEN_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/templates/golden");

/// (name, rendered, expected) for the event prompt and every relation.
pub fn cases() -> Vec<(String, String, String)> {
    let templates = TemplateSet::builtin();
    let pool = SeedPool::builtin();
    let read = |name: &str| std::fs::read_to_string(format!("{GOLDEN_DIR}/{name}.txt")).unwrap();
    let mut out = vec![(
        "event".to_string(),
        templates
            .event
            .render_event_prompt(&pool.events()[..10])
            .unwrap(),
        read("event"),
    )];
    let target = Event::new("PersonX makes PersonY wait").unwrap();
    let names = NameAssignment::new("Alex", "Chris").unwrap();
    for relation in Relation::ALL {
        let t = templates.relation(relation).unwrap();
        let name = relation.name().to_lowercase();
        let rendered = t
            .render_inference_prompt(&target, t.default_examples(), &names)
            .unwrap();
        out.push((name.clone(), rendered, read(&name)));
    }
    out
}
