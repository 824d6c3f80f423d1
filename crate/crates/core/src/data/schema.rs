//! Per-domain slot inventory, loaded from the checked-in `schema.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::DataError;

/// Dialogue-act intents. Labels found in the corpus are mapped onto these
/// through the schema's `intents` table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Inform,
    Request,
    Recommend,
    Select,
    OfferBook,
    OfferBooked,
    Book,
    NoBook,
    NoOffer,
    Bye,
    Thank,
    Greet,
    ReqMore,
    Welcome,
}

/// What role a slot plays inside its domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Informable,
    Booking,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSchema {
    #[serde(skip)]
    pub name: String,
    pub constraint_type: String,
    pub book_info_type: String,
    pub find_task: String,
    pub id_slot: Option<String>,
    pub db_file: Option<String>,
    pub bookable: bool,
    pub informable: Vec<String>,
    pub booking: Vec<String>,
    /// Each entry lists alternatives; any one of them satisfies the requirement.
    pub required_booking: Vec<Vec<String>>,
    pub requestable: Vec<String>,
    #[serde(default)]
    pub slot_aliases: BTreeMap<String, String>,
}

impl DomainSchema {
    pub fn slot_kind(&self, slot: &str) -> Option<SlotKind> {
        if self.informable.iter().any(|s| s == slot) {
            Some(SlotKind::Informable)
        } else if self.booking.iter().any(|s| s == slot) {
            Some(SlotKind::Booking)
        } else {
            None
        }
    }

    /// Maps act-file spellings (`day`, `price`, ...) onto schema slot names.
    pub fn canonical_slot(&self, raw: &str) -> String {
        let lower = raw.trim().to_lowercase();
        if self.slot_kind(&lower).is_some() || self.requestable.contains(&lower) {
            return lower;
        }
        match self.slot_aliases.get(&lower) {
            Some(alias) => alias.clone(),
            None => lower.replace(' ', ""),
        }
    }

    pub fn is_requestable(&self, slot: &str) -> bool {
        self.requestable.iter().any(|s| s == slot)
    }

    /// Every slot tracked in dialogue state for this domain, informable first.
    pub fn tracked_slots(&self) -> impl Iterator<Item = &String> {
        self.informable.iter().chain(self.booking.iter())
    }

    /// First unmet requirement, reported by its first alternative.
    pub fn first_missing_requirement<F>(&self, has: F) -> Option<&str>
    where
        F: Fn(&str) -> bool,
    {
        self.required_booking
            .iter()
            .find(|alts| !alts.iter().any(|s| has(s)))
            .and_then(|alts| alts.first())
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub domains: BTreeMap<String, DomainSchema>,
    /// Act domains that are not task domains (`general`, `booking`).
    pub act_domains: Vec<String>,
    /// Lowercased corpus act label -> intent.
    pub intents: BTreeMap<String, Intent>,
    pub value_synonyms: BTreeMap<String, String>,
    /// Slot spellings for the non-task act domains.
    #[serde(default)]
    pub act_slot_aliases: BTreeMap<String, BTreeMap<String, String>>,
}

impl Schema {
    pub fn load(path: &Path) -> Result<Schema, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Schema::from_json(&text).map_err(|e| DataError::Malformed {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    pub fn from_json(text: &str) -> Result<Schema, serde_json::Error> {
        let mut schema: Schema = serde_json::from_str(text)?;
        for (name, domain) in schema.domains.iter_mut() {
            domain.name = name.clone();
        }
        Ok(schema)
    }

    pub fn domain(&self, name: &str) -> Option<&DomainSchema> {
        self.domains.get(name)
    }

    pub fn normalizer(&self) -> Normalizer {
        Normalizer::new(&self.value_synonyms)
    }

    pub fn intent(&self, label: &str) -> Option<Intent> {
        self.intents.get(&label.to_lowercase()).copied()
    }

    /// Canonical slot name for an act of `domain` (task or act-only domain).
    pub fn canonical_act_slot(&self, domain: &str, raw: &str) -> String {
        if let Some(d) = self.domains.get(domain) {
            return d.canonical_slot(raw);
        }
        let lower = raw.trim().to_lowercase();
        self.act_slot_aliases
            .get(domain)
            .and_then(|m| m.get(&lower))
            .cloned()
            .unwrap_or(lower)
    }

    pub fn is_act_domain(&self, name: &str) -> bool {
        self.domains.contains_key(name) || self.act_domains.iter().any(|d| d == name)
    }

    pub fn domain_by_constraint_type(&self, type_name: &str) -> Option<&DomainSchema> {
        self.domains.values().find(|d| d.constraint_type == type_name)
    }

    pub fn domain_by_book_info_type(&self, type_name: &str) -> Option<&DomainSchema> {
        self.domains.values().find(|d| d.book_info_type == type_name)
    }

    pub fn domain_by_find_task(&self, task: &str) -> Option<&DomainSchema> {
        self.domains.values().find(|d| d.find_task == task)
    }

    pub fn domain_names(&self) -> BTreeSet<&str> {
        self.domains.keys().map(String::as_str).collect()
    }
}
