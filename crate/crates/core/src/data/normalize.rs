//! Value normalization shared by database queries and state comparison.

use std::collections::BTreeMap;

/// Normalizes slot values before comparison.
///
/// Lowercases, trims, collapses internal whitespace, zero-pads `H:MM` times
/// and finally maps whole-value synonyms (`center` -> `centre`, ...).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Normalizer {
    synonyms: BTreeMap<String, String>,
}

impl Normalizer {
    pub fn new<I, K, V>(synonyms: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let synonyms = synonyms
            .into_iter()
            .map(|(k, v)| (basic(k.as_ref()), basic(v.as_ref())))
            .collect();
        Normalizer { synonyms }
    }

    pub fn normalize(&self, value: &str) -> String {
        let v = basic(value);
        let v = pad_time(&v).unwrap_or(v);
        match self.synonyms.get(&v) {
            Some(canon) => canon.clone(),
            None => v,
        }
    }

    pub fn eq(&self, a: &str, b: &str) -> bool {
        self.normalize(a) == self.normalize(b)
    }
}

fn basic(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// `9:30` -> `09:30`. Returns `None` when the value is not a clock time.
pub fn pad_time(value: &str) -> Option<String> {
    let (h, m) = value.split_once(':')?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return None;
    }
    if !h.bytes().all(|b| b.is_ascii_digit()) || !m.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(format!("{:0>2}:{}", h, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Normalizer {
        Normalizer::new([
            ("center", "centre"),
            ("guest house", "guesthouse"),
            ("don't care", "dontcare"),
            ("do nt care", "dontcare"),
        ])
    }

    #[test]
    fn lowercases_and_collapses_whitespace() {
        assert_eq!(table().normalize("  City   Stop\tRestaurant "), "city stop restaurant");
    }

    #[test]
    fn pads_times() {
        let n = table();
        assert_eq!(n.normalize("9:30"), "09:30");
        assert_eq!(n.normalize("17:30"), "17:30");
        assert_eq!(n.normalize("930"), "930");
        assert_eq!(n.normalize("a:30"), "a:30");
    }

    #[test]
    fn maps_synonyms() {
        let n = table();
        assert_eq!(n.normalize("Center"), "centre");
        assert_eq!(n.normalize("guest  house"), "guesthouse");
        assert_eq!(n.normalize("do nt care"), "dontcare");
        assert!(n.eq("centre", "CENTER"));
    }
}
