use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rec::RecData;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: i64,
}

/// Timestamped user-item events in input order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionLog {
    pub records: Vec<Interaction>,
}

impl InteractionLog {
    pub fn new(records: Vec<Interaction>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.user_counts().len()
    }

    pub fn n_items(&self) -> usize {
        self.item_counts().len()
    }

    pub fn user_counts(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.user_id.as_str()).or_insert(0) += 1;
        }
        m
    }

    pub fn item_counts(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.item_id.as_str()).or_insert(0) += 1;
        }
        m
    }

    /// Per-user item sequences keyed by user id, sorted by timestamp with
    /// ties kept in input order.
    pub fn sequences(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut by_user: BTreeMap<&str, Vec<(i64, usize)>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            by_user.entry(r.user_id.as_str()).or_default().push((r.timestamp, i));
        }
        by_user
            .into_iter()
            .map(|(u, mut ev)| {
                ev.sort();
                (
                    u,
                    ev.into_iter().map(|(_, i)| self.records[i].item_id.as_str()).collect(),
                )
            })
            .collect()
    }
}

/// Repeatedly drops users and items with fewer than `k` interactions until
/// nothing changes. The survivors keep their input order.
pub fn k_core_filter(log: &InteractionLog, k: usize) -> InteractionLog {
    let mut keep: Vec<bool> = alloc::vec![true; log.records.len()];
    loop {
        let mut users: BTreeMap<&str, usize> = BTreeMap::new();
        let mut items: BTreeMap<&str, usize> = BTreeMap::new();
        for (r, _) in log.records.iter().zip(&keep).filter(|(_, k)| **k) {
            *users.entry(r.user_id.as_str()).or_insert(0) += 1;
            *items.entry(r.item_id.as_str()).or_insert(0) += 1;
        }
        let mut changed = false;
        for (r, kp) in log.records.iter().zip(keep.iter_mut()) {
            if *kp && (users[r.user_id.as_str()] < k || items[r.item_id.as_str()] < k) {
                *kp = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    InteractionLog::new(
        log.records
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(r, _)| r.clone())
            .collect(),
    )
}

pub fn five_core_filter(log: &InteractionLog) -> InteractionLog {
    k_core_filter(log, 5)
}

/// One user's leave-one-out partition, in 1-based item indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit {
    pub user_id: String,
    pub train: Vec<usize>,
    pub valid: usize,
    pub test: usize,
}

/// Leave-one-out partitions with the item interning table: `items[i]` is
/// item index `i + 1`, in sorted id order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub items: Vec<String>,
    pub users: Vec<UserSplit>,
    pub warnings: Vec<String>,
}

/// Holds out the last interaction of each user as test and the one before
/// as validation. Users with fewer than three interactions are skipped with a
/// warning. Every item seen in the log is interned, including items of
/// skipped users.
pub fn leave_one_out_split(log: &InteractionLog) -> Split {
    let items: Vec<String> = log.item_counts().keys().map(|s| String::from(*s)).collect();
    let index: BTreeMap<&str, usize> = items.iter().enumerate().map(|(i, s)| (s.as_str(), i + 1)).collect();
    let mut users = Vec::new();
    let mut warnings = Vec::new();
    for (u, seq) in log.sequences() {
        if seq.len() < 3 {
            warnings.push(format!(
                "user {u} has {} interactions, excluded from the split",
                seq.len()
            ));
            continue;
        }
        let ids: Vec<usize> = seq.iter().map(|s| index[s]).collect();
        let n = ids.len();
        users.push(UserSplit {
            user_id: String::from(u),
            train: ids[..n - 2].to_vec(),
            valid: ids[n - 2],
            test: ids[n - 1],
        });
    }
    Split { items, users, warnings }
}

impl Split {
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Training sequences and validation cases: the train prefix predicts
    /// the validation item.
    pub fn rec_data(&self) -> RecData {
        RecData {
            n_items: self.items.len(),
            train: self.users.iter().map(|u| u.train.clone()).collect(),
            valid: self.users.iter().map(|u| (u.train.clone(), u.valid)).collect(),
        }
    }

    /// Test cases: train prefix plus validation item predicts the test item.
    pub fn test_cases(&self) -> Vec<(Vec<usize>, usize)> {
        self.users
            .iter()
            .map(|u| {
                let mut h = u.train.clone();
                h.push(u.valid);
                (h, u.test)
            })
            .collect()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.binary_search_by(|s| s.as_str().cmp(id)).ok().map(|i| i + 1)
    }
}
