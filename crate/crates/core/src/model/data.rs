use crate::error::{OrfError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemSpec {
    pub id: String,
    pub n_words: u32,
}

/// One observed (count, log-time) pair. Counts and times are either both
/// present or both absent, so a missing pair is simply not stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Response {
    /// Index into [`Dataset::items`].
    pub item: usize,
    pub count: u32,
    pub log_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: String,
    /// Observed responses sorted by item index; the item set is `S_j`.
    pub responses: Vec<Response>,
}

impl Individual {
    pub fn new(id: impl Into<String>, mut responses: Vec<Response>) -> Self {
        responses.sort_by_key(|r| r.item);
        Self { id: id.into(), responses }
    }

    pub fn observes(&self, item: usize) -> bool {
        self.response(item).is_some()
    }

    pub fn response(&self, item: usize) -> Option<&Response> {
        self.responses
            .binary_search_by_key(&item, |r| r.item)
            .ok()
            .map(|k| &self.responses[k])
    }

    /// Copy of this record with one item's pair removed.
    pub fn without_item(&self, item: usize) -> Self {
        Self {
            id: self.id.clone(),
            responses: self.responses.iter().filter(|r| r.item != item).copied().collect(),
        }
    }
}

/// Immutable collection of items and individual response records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    items: Vec<ItemSpec>,
    individuals: Vec<Individual>,
}

impl Dataset {
    pub fn new(items: Vec<ItemSpec>, individuals: Vec<Individual>) -> Result<Self> {
        for (k, item) in items.iter().enumerate() {
            if item.n_words == 0 {
                return Err(OrfError::InvalidData(format!("item {} has zero words", item.id)));
            }
            if items[..k].iter().any(|other| other.id == item.id) {
                return Err(OrfError::InvalidData(format!("duplicate item id {}", item.id)));
            }
        }
        for person in &individuals {
            for (k, r) in person.responses.iter().enumerate() {
                let spec = items.get(r.item).ok_or_else(|| {
                    OrfError::InvalidData(format!(
                        "individual {} references unknown item index {}",
                        person.id, r.item
                    ))
                })?;
                if r.count > spec.n_words {
                    return Err(OrfError::InvalidData(format!(
                        "individual {} item {}: count {} exceeds {} words",
                        person.id, spec.id, r.count, spec.n_words
                    )));
                }
                if !r.log_time.is_finite() {
                    return Err(OrfError::InvalidData(format!(
                        "individual {} item {}: log-time must be finite",
                        person.id, spec.id
                    )));
                }
                if k > 0 && person.responses[k - 1].item >= r.item {
                    return Err(OrfError::InvalidData(format!(
                        "individual {} has duplicate or unsorted responses for item {}",
                        person.id, spec.id
                    )));
                }
            }
        }
        Ok(Self { items, individuals })
    }

    pub fn items(&self) -> &[ItemSpec] {
        &self.items
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_individuals(&self) -> usize {
        self.individuals.len()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|i| i.id == id)
    }

    /// Number of individuals observing each item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.items.len()];
        for person in &self.individuals {
            for r in &person.responses {
                counts[r.item] += 1;
            }
        }
        counts
    }

    /// Fraction of individuals missing each item.
    pub fn missing_rates(&self) -> Vec<f64> {
        let n = self.individuals.len().max(1) as f64;
        self.item_counts().into_iter().map(|c| 1.0 - c as f64 / n).collect()
    }

    /// Same dataset with the given item removed from every record.
    pub fn without_item(&self, item: usize) -> Self {
        Self {
            items: self.items.clone(),
            individuals: self.individuals.iter().map(|p| p.without_item(item)).collect(),
        }
    }

    /// Shift every log-time by `shift` (a change of time unit).
    pub fn shift_log_times(&self, shift: f64) -> Self {
        let individuals = self
            .individuals
            .iter()
            .map(|p| Individual {
                id: p.id.clone(),
                responses: p
                    .responses
                    .iter()
                    .map(|r| Response { log_time: r.log_time + shift, ..*r })
                    .collect(),
            })
            .collect();
        Self { items: self.items.clone(), individuals }
    }
}
