//! Response templates for off and partial oracle modes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DataError;

/// One agent message, keyed so tests can check which slots were filled
/// without depending on the prose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub key: String,
    pub slots: BTreeMap<String, String>,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Templates(BTreeMap<String, BTreeMap<String, String>>);

impl Templates {
    pub fn load(path: &Path) -> Result<Templates, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Templates::from_json(&text).map_err(|e| DataError::Malformed {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    pub fn from_json(text: &str) -> Result<Templates, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Looks `situation` up in the domain section, then `default`, then
    /// `general`.
    fn lookup(&self, domain: &str, situation: &str) -> Option<&str> {
        [domain, "default", "general"]
            .iter()
            .find_map(|section| self.0.get(*section)?.get(situation))
            .map(String::as_str)
    }

    pub fn render(&self, domain: &str, situation: &str, slots: BTreeMap<String, String>) -> AgentMessage {
        let template = self.lookup(domain, situation).unwrap_or(situation);
        let text = fill(template, &slots);
        AgentMessage {
            key: format!("{domain}.{situation}"),
            slots,
            text,
        }
    }

    /// Slot prompt; prefers `prompt_<slot>` and falls back to the generic
    /// `prompt_slot`.
    pub fn prompt(&self, domain: &str, slot: &str) -> AgentMessage {
        let specific = format!("prompt_{slot}");
        let situation = if self.lookup(domain, &specific).is_some() {
            specific
        } else {
            "prompt_slot".to_string()
        };
        let mut msg = self.render(domain, &situation, slots(&[("domain", domain), ("slot", slot)]));
        msg.key = format!("{domain}.prompt.{slot}");
        msg
    }

    pub fn general(&self, situation: &str) -> AgentMessage {
        self.render("general", situation, BTreeMap::new())
    }
}

pub fn slots(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn fill(template: &str, slots: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                let key = &after[..end];
                match slots.get(key) {
                    Some(v) => out.push_str(v),
                    None => out.push('?'),
                }
                rest = &after[end + 1..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
