//! Cluster assignments (pseudo-labels) and their CSV form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Cluster id type. [`UNASSIGNED`] marks samples without a label.
pub type ClusterId = u32;

/// Sentinel for samples that carry no cluster id.
pub const UNASSIGNED: ClusterId = ClusterId::MAX;

/// Per-sample cluster ids plus cached cluster sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment {
    labels: Vec<ClusterId>,
    sizes: BTreeMap<ClusterId, usize>,
}

impl LabelAssignment {
    pub fn new(labels: Vec<ClusterId>) -> Self {
        let mut sizes = BTreeMap::new();
        for &l in &labels {
            if l != UNASSIGNED {
                *sizes.entry(l).or_insert(0) += 1;
            }
        }
        Self { labels, sizes }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ClusterId] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> ClusterId {
        self.labels[i]
    }

    pub fn is_assigned(&self, i: usize) -> bool {
        self.labels[i] != UNASSIGNED
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn cluster_sizes(&self) -> &BTreeMap<ClusterId, usize> {
        &self.sizes
    }

    pub fn unassigned_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == UNASSIGNED).count()
    }

    /// True when ids are exactly `0..num_clusters`.
    pub fn is_compact(&self) -> bool {
        self.sizes
            .keys()
            .enumerate()
            .all(|(pos, &id)| pos as ClusterId == id)
    }

    /// Renumbers clusters densely in order of first appearance, which is the
    /// same as ordering by smallest member index.
    pub fn compact(&self) -> Self {
        let mut remap = BTreeMap::new();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if l == UNASSIGNED {
                    UNASSIGNED
                } else {
                    let next = remap.len() as ClusterId;
                    *remap.entry(l).or_insert(next)
                }
            })
            .collect();
        Self::new(labels)
    }

    /// Members of every cluster, keyed by id, in ascending index order.
    pub fn members(&self) -> BTreeMap<ClusterId, Vec<usize>> {
        let mut out: BTreeMap<ClusterId, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if l != UNASSIGNED {
                out.entry(l).or_default().push(i);
            }
        }
        out
    }

    /// Fails on the first unassigned sample.
    pub fn require_assigned(&self) -> Result<()> {
        match self.labels.iter().position(|&l| l == UNASSIGNED) {
            Some(i) => Err(Error::Unassigned(i)),
            None => Ok(()),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,label\n");
        for (i, &l) in self.labels.iter().enumerate() {
            if l == UNASSIGNED {
                writeln!(out, "{i},-1").expect("write to string");
            } else {
                writeln!(out, "{i},{l}").expect("write to string");
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "index,label" => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "expected header `index,label`".into(),
                })
            }
        }
        let mut labels = Vec::new();
        for (lineno, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                line: lineno + 1,
                msg,
            };
            let (idx, label) = line
                .split_once(',')
                .ok_or_else(|| parse_err(format!("expected two fields in {line:?}")))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("index: {e}")))?;
            if idx != labels.len() {
                return Err(parse_err(format!(
                    "index {idx} out of order, expected {}",
                    labels.len()
                )));
            }
            let label: i64 = label
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("label: {e}")))?;
            let label = match label {
                -1 => UNASSIGNED,
                l if (0..i64::from(UNASSIGNED)).contains(&l) => l as ClusterId,
                l => return Err(parse_err(format!("label {l} out of range"))),
            };
            labels.push(label);
        }
        Ok(Self::new(labels))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_account_for_every_sample() {
        let l = LabelAssignment::new(vec![3, 3, UNASSIGNED, 7, 3]);
        assert_eq!(l.num_clusters(), 2);
        let total: usize = l.cluster_sizes().values().sum();
        assert_eq!(total + l.unassigned_count(), l.len());
        assert!(!l.is_compact());
    }

    #[test]
    fn compact_orders_by_first_member() {
        let l = LabelAssignment::new(vec![9, 4, 9, UNASSIGNED, 4, 1]).compact();
        assert_eq!(l.labels(), &[0, 1, 0, UNASSIGNED, 1, 2]);
        assert!(l.is_compact());
    }

    #[test]
    fn csv_round_trip_with_unassigned() {
        let l = LabelAssignment::new(vec![0, UNASSIGNED, 2]);
        let csv = l.to_csv();
        assert_eq!(csv, "index,label\n0,0\n1,-1\n2,2\n");
        assert_eq!(LabelAssignment::from_csv(&csv).unwrap(), l);
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(LabelAssignment::from_csv("idx,lab\n0,1\n").is_err());
        assert!(LabelAssignment::from_csv("index,label\n1,0\n").is_err());
        assert!(LabelAssignment::from_csv("index,label\n0,-2\n").is_err());
        assert!(LabelAssignment::from_csv("index,label\n0,x\n").is_err());
    }
}
