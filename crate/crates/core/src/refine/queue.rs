use serde::{Deserialize, Serialize};

use super::RefineError;
use crate::ontology::ConceptId;
use crate::oracle::Decision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueueReason {
    LowConfidenceOracle,
    RankConflict,
    SimLlmDisagreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemStatus {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Approve,
    Reject,
}

/// What the reviewer needs to see besides the pair itself.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ItemContext {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    /// For rank conflicts: the deferred edge's relation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationItem {
    pub id: u64,
    /// For rank conflicts this is the deferred edge as (child, parent).
    pub pair: (ConceptId, ConceptId),
    pub reason: QueueReason,
    pub confidence: f64,
    pub context: ItemContext,
    pub status: ItemStatus,
}

/// All items ever raised; pending ones are served lowest confidence first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationQueue {
    items: Vec<ValidationItem>,
    next_id: u64,
}

impl ValidationQueue {
    /// Adds a pending item unless an identical pending one exists. Returns the
    /// item id.
    pub fn push(&mut self, pair: (ConceptId, ConceptId), reason: QueueReason, confidence: f64, context: ItemContext) -> u64 {
        if let Some(existing) = self
            .items
            .iter()
            .find(|i| i.status == ItemStatus::Pending && i.reason == reason && i.pair == pair)
        {
            return existing.id;
        }
        self.next_id += 1;
        let id = self.next_id;
        self.items.push(ValidationItem {
            id,
            pair,
            reason,
            confidence,
            context,
            status: ItemStatus::Pending,
        });
        id
    }

    /// Rebuilds a queue from stored items; new ids continue after the largest.
    pub fn from_items(items: Vec<ValidationItem>) -> Self {
        let next_id = items.iter().map(|i| i.id).max().unwrap_or(0);
        ValidationQueue { items, next_id }
    }

    pub fn get(&self, id: u64) -> Option<&ValidationItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub(crate) fn get_mut(&mut self, id: u64) -> Option<&mut ValidationItem> {
        self.items.iter_mut().find(|i| i.id == id)
    }

    pub(crate) fn pending_item(&self, id: u64) -> Result<&ValidationItem, RefineError> {
        let item = self.get(id).ok_or(RefineError::UnknownItem(id))?;
        if item.status != ItemStatus::Pending {
            return Err(RefineError::NotPending(id));
        }
        Ok(item)
    }

    /// Pending items, ascending confidence, ties by id.
    pub fn pending(&self) -> Vec<&ValidationItem> {
        let mut out: Vec<&ValidationItem> = self.items.iter().filter(|i| i.status == ItemStatus::Pending).collect();
        out.sort_by(|a, b| a.confidence.total_cmp(&b.confidence).then(a.id.cmp(&b.id)));
        out
    }

    pub fn pending_len(&self) -> usize {
        self.items.iter().filter(|i| i.status == ItemStatus::Pending).count()
    }

    pub fn items(&self) -> &[ValidationItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
