//! Asking a model to describe sound classes by name.

use std::collections::BTreeMap;

use regex::Regex;

use super::{Gateway, GatewayError};

/// Descriptions parsed from one reply plus the labels that got none.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassDescriptions {
    pub descriptions: BTreeMap<String, String>,
    /// Labels whose line was missing or unparseable.
    pub format_errors: Vec<String>,
}

pub fn description_prompt(labels: &[String]) -> String {
    let mut p = String::from(
        "Describe each of the following sound classes in detail based on its class name. \
         Answer with exactly one entry per class, in the form \"- Label - description\".\n\n",
    );
    for l in labels {
        p.push_str("- ");
        p.push_str(l);
        p.push('\n');
    }
    p
}

/// Parses `- Label - description` entries. Lines that do not start a new
/// entry continue the previous description.
pub fn parse_descriptions(labels: &[String], reply: &str) -> ClassDescriptions {
    let entry = Regex::new(r"^\s*[-*]\s*(.+?)\s+[-–:]\s+(.+?)\s*$").expect("static regex");
    let mut found: Vec<(String, String)> = Vec::new();
    for line in reply.lines() {
        if let Some(c) = entry.captures(line) {
            let label = c[1].trim_matches(|ch: char| ch == '*' || ch.is_whitespace());
            found.push((label.to_string(), c[2].to_string()));
        } else if let Some(last) = found.last_mut() {
            let extra = line.trim();
            if !extra.is_empty() {
                last.1.push(' ');
                last.1.push_str(extra);
            }
        }
    }
    let mut out = ClassDescriptions::default();
    for label in labels {
        let hit = found
            .iter()
            .find(|(l, _)| l == label)
            .or_else(|| found.iter().find(|(l, _)| l.eq_ignore_ascii_case(label)));
        match hit {
            Some((_, d)) if !d.trim().is_empty() => {
                out.descriptions.insert(label.clone(), d.trim().to_string());
            }
            _ => {
                log::warn!("no description parsed for class {label:?}");
                out.format_errors.push(label.clone());
            }
        }
    }
    out
}

pub fn describe_classes(gateway: &Gateway, labels: &[String]) -> Result<ClassDescriptions, GatewayError> {
    if labels.is_empty() {
        return Err(GatewayError::Precondition("no labels to describe".into()));
    }
    let exchange = gateway.complete_prompt(&description_prompt(labels))?;
    if !exchange.is_ok() {
        return Err(GatewayError::Transport(exchange.response_text));
    }
    Ok(parse_descriptions(labels, &exchange.response_text))
}
