use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{pad_time, read_json, DataError, Normalizer, Schema};

pub const TAXI_FILE: &str = "taxi_db.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub domain: String,
    /// Keys are lowercased with spaces removed (`entrance fee` -> `entrancefee`).
    pub attributes: BTreeMap<String, String>,
}

impl EntityRecord {
    pub fn get(&self, slot: &str) -> Option<&str> {
        self.attributes.get(slot).map(String::as_str)
    }
}

/// Taxi has no entities, only the tables cars are generated from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxiTable {
    pub colors: Vec<String>,
    pub types: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Database {
    records: BTreeMap<String, Vec<EntityRecord>>,
    pub taxi: TaxiTable,
    schema: Schema,
    normalizer: Normalizer,
}

impl Database {
    pub fn load(db_dir: &Path, schema: &Schema) -> Result<Database, DataError> {
        let mut records = BTreeMap::new();
        for (name, domain) in &schema.domains {
            let Some(file) = &domain.db_file else {
                records.insert(name.clone(), Vec::new());
                continue;
            };
            let path = db_dir.join(file);
            let value = read_json(&path)?;
            let entries = value.as_array().ok_or_else(|| DataError::Malformed {
                path: path.display().to_string(),
                detail: "expected a list of records".into(),
            })?;
            let mut list = Vec::with_capacity(entries.len());
            for (i, entry) in entries.iter().enumerate() {
                let obj = entry.as_object().ok_or_else(|| DataError::Malformed {
                    path: path.display().to_string(),
                    detail: format!("record {i} is not an object"),
                })?;
                let mut attributes = BTreeMap::new();
                for (k, v) in obj {
                    let text = match v {
                        Value::String(s) => s.clone(),
                        Value::Number(n) => n.to_string(),
                        Value::Bool(b) => b.to_string(),
                        _ => continue,
                    };
                    attributes.insert(k.to_lowercase().replace(' ', ""), text);
                }
                list.push(EntityRecord {
                    domain: name.clone(),
                    attributes,
                });
            }
            records.insert(name.clone(), list);
        }

        let taxi_path = db_dir.join(TAXI_FILE);
        let taxi = if taxi_path.exists() {
            let v = read_json(&taxi_path)?;
            let strings = |key: &str| -> Vec<String> {
                v.get(key)
                    .and_then(Value::as_array)
                    .map(|a| a.iter().filter_map(Value::as_str).map(String::from).collect())
                    .unwrap_or_default()
            };
            TaxiTable {
                colors: strings("taxi_colors"),
                types: strings("taxi_types"),
            }
        } else {
            TaxiTable::default()
        };

        Ok(Database::from_records(records, taxi, schema))
    }

    pub fn from_records(records: BTreeMap<String, Vec<EntityRecord>>, taxi: TaxiTable, schema: &Schema) -> Database {
        Database {
            records,
            taxi,
            schema: schema.clone(),
            normalizer: schema.normalizer(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn count(&self, domain: &str) -> usize {
        self.records.get(domain).map_or(0, Vec::len)
    }

    pub fn records(&self, domain: &str) -> &[EntityRecord] {
        self.records.get(domain).map_or(&[], Vec::as_slice)
    }

    /// Entities of `domain` satisfying every constraint, ordered by the
    /// domain's identifying slot.
    ///
    /// `dontcare` values are ignored. For trains `leaveat` is a lower bound
    /// and `arriveby` an upper bound.
    pub fn query(&self, domain: &str, constraints: &BTreeMap<String, String>) -> Result<Vec<&EntityRecord>, DataError> {
        let schema = self
            .schema
            .domain(domain)
            .ok_or_else(|| DataError::UnknownDomain(domain.to_string()))?;
        if let Some(slot) = constraints.keys().find(|s| !schema.informable.contains(s)) {
            return Err(DataError::UnknownSlot {
                domain: domain.to_string(),
                slot: slot.clone(),
            });
        }
        let wanted: Vec<(&str, String)> = constraints
            .iter()
            .map(|(s, v)| (s.as_str(), self.normalizer.normalize(v)))
            .filter(|(_, v)| v != "dontcare")
            .collect();

        let mut hits: Vec<&EntityRecord> = self
            .records(domain)
            .iter()
            .filter(|r| {
                wanted
                    .iter()
                    .all(|(slot, want)| self.slot_matches(domain, r, slot, want))
            })
            .collect();
        if let Some(id) = &schema.id_slot {
            hits.sort_by_cached_key(|r| self.normalizer.normalize(r.get(id).unwrap_or("")));
        }
        Ok(hits)
    }

    fn slot_matches(&self, domain: &str, record: &EntityRecord, slot: &str, want: &str) -> bool {
        let Some(have) = record.get(slot) else {
            return false;
        };
        let have = self.normalizer.normalize(have);
        if domain == "train" && (slot == "leaveat" || slot == "arriveby") {
            return match (pad_time(&have), pad_time(want)) {
                (Some(h), Some(w)) if slot == "leaveat" => h >= w,
                (Some(h), Some(w)) => h <= w,
                _ => have == want,
            };
        }
        have == want
    }

    /// Record of `domain` whose identifying slot equals `id` after normalization.
    pub fn find_by_id(&self, domain: &str, id: &str) -> Option<&EntityRecord> {
        let id_slot = self.schema.domain(domain)?.id_slot.as_deref()?;
        let want = self.normalizer.normalize(id);
        self.records(domain)
            .iter()
            .find(|r| r.get(id_slot).map(|v| self.normalizer.normalize(v)) == Some(want.clone()))
    }
}
