//! The elite archive: one record per CVT niche.

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorDescriptor;
use crate::cvt::CvtPartition;
use crate::error::{Error, Result};
use crate::fitness::Reference;
use crate::types::{Portfolio, RiskReturnPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteRecord {
    pub weights: Portfolio,
    pub bd: BehaviorDescriptor,
    pub fitness: f64,
    pub rr: RiskReturnPoint,
    pub near_optimal: bool,
}

/// One accepted replacement, kept when auditing is on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditEntry {
    pub niche: usize,
    pub eval: u64,
    pub previous: Option<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    partition: CvtPartition,
    reference: Reference,
    slots: Vec<Option<EliteRecord>>,
    /// Occupied niches in order of first occupation.
    occupied: Vec<usize>,
    near_optimal: usize,
    eval_count: u64,
    audit: Option<Vec<AuditEntry>>,
}

impl Archive {
    pub fn new(partition: CvtPartition, reference: Reference) -> Self {
        let m = partition.len();
        Archive {
            partition,
            reference,
            slots: vec![None; m],
            occupied: Vec::new(),
            near_optimal: 0,
            eval_count: 0,
            audit: None,
        }
    }

    /// Records every accepted replacement from now on.
    pub fn enable_audit(&mut self) {
        self.audit.get_or_insert_with(Vec::new);
    }

    pub fn audit_log(&self) -> Option<&[AuditEntry]> {
        self.audit.as_deref()
    }

    pub fn partition(&self) -> &CvtPartition {
        &self.partition
    }

    pub fn reference(&self) -> &Reference {
        &self.reference
    }

    /// Number of niches `M`.
    pub fn niches(&self) -> usize {
        self.slots.len()
    }

    pub fn filled(&self) -> usize {
        self.occupied.len()
    }

    pub fn near_optimal_count(&self) -> usize {
        self.near_optimal
    }

    pub fn eval_count(&self) -> u64 {
        self.eval_count
    }

    pub(crate) fn count_evaluation(&mut self) {
        self.eval_count += 1;
    }

    pub fn get(&self, niche: usize) -> Option<&EliteRecord> {
        self.slots.get(niche).and_then(Option::as_ref)
    }

    /// Occupied niche indices in first-occupation order.
    pub fn occupied(&self) -> &[usize] {
        &self.occupied
    }

    /// `(niche, record)` pairs in ascending niche order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &EliteRecord)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(k, s)| s.as_ref().map(|r| (k, r)))
    }

    pub fn near_optimal_records(&self) -> impl Iterator<Item = &EliteRecord> {
        self.iter().map(|(_, r)| r).filter(|r| r.near_optimal)
    }

    /// Places `record` in `niche` if the slot is empty or the record is
    /// strictly fitter than the incumbent. Returns whether it was placed.
    pub fn try_insert(&mut self, niche: usize, record: EliteRecord) -> bool {
        let slot = &mut self.slots[niche];
        let previous = match slot {
            Some(incumbent) if record.fitness <= incumbent.fitness => return false,
            Some(incumbent) => Some((incumbent.fitness, incumbent.near_optimal)),
            None => None,
        };
        match previous {
            Some((_, true)) => self.near_optimal -= 1,
            Some(_) => {}
            None => self.occupied.push(niche),
        }
        if record.near_optimal {
            self.near_optimal += 1;
        }
        if let Some(log) = &mut self.audit {
            log.push(AuditEntry {
                niche,
                eval: self.eval_count,
                previous: previous.map(|p| p.0),
                fitness: record.fitness,
            });
        }
        *slot = Some(record);
        true
    }

    /// Rebuilds an archive from stored records, checking that each record's
    /// descriptor maps back to its own niche.
    pub fn from_records(
        partition: CvtPartition,
        reference: Reference,
        eval_count: u64,
        records: Vec<(usize, EliteRecord)>,
    ) -> Result<Self> {
        let mut archive = Archive::new(partition, reference);
        for (niche, record) in records {
            if niche >= archive.niches() {
                return Err(Error::Parse(format!(
                    "niche {niche} out of range for {} niches",
                    archive.niches()
                )));
            }
            if archive.slots[niche].is_some() {
                return Err(Error::Parse(format!("niche {niche} listed twice")));
            }
            let home = archive.partition.niche_index(record.bd.values())?;
            if home != niche {
                return Err(Error::Parse(format!(
                    "record stored in niche {niche} belongs to niche {home}"
                )));
            }
            archive.try_insert(niche, record);
        }
        archive.eval_count = eval_count;
        Ok(archive)
    }

    /// Re-derives every near-optimal flag against a new reference.
    pub fn with_reference(&self, reference: Reference) -> Archive {
        let mut out = self.clone();
        out.near_optimal = 0;
        for slot in out.slots.iter_mut().flatten() {
            slot.near_optimal = reference.contains(slot.rr);
            out.near_optimal += slot.near_optimal as usize;
        }
        out.reference = reference;
        out
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::types::RiskReturnPoint;

    pub fn reference() -> Reference {
        Reference {
            weights: Portfolio::uniform(2),
            rr: RiskReturnPoint { mu: 0.1, sigma: 0.1 },
            c: 0.1,
        }
    }

    /// Partition with centroids on the line `y = 0` at the given x positions.
    pub fn line_partition(xs: &[f64]) -> CvtPartition {
        let c = xs.iter().flat_map(|x| [*x, 0.0]).collect();
        CvtPartition::from_centroids("b1".into(), 0, 2, c).unwrap()
    }

    pub fn record(bd: [f64; 2], fitness: f64, near_optimal: bool) -> EliteRecord {
        EliteRecord {
            weights: Portfolio::uniform(2),
            bd: BehaviorDescriptor(bd.to_vec()),
            fitness,
            rr: RiskReturnPoint { mu: 0.1, sigma: 0.1 },
            near_optimal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn replacement_requires_strict_improvement() {
        let mut a = Archive::new(line_partition(&[0.0, 1.0]), reference());
        a.enable_audit();
        assert!(a.try_insert(0, record([0.0, 0.0], -1.0, false)));
        assert!(!a.try_insert(0, record([0.0, 0.0], -1.0, true)));
        assert!(!a.try_insert(0, record([0.0, 0.0], -2.0, true)));
        assert!(a.try_insert(0, record([0.0, 0.0], 0.5, true)));
        assert_eq!(a.filled(), 1);
        assert_eq!(a.near_optimal_count(), 1);
        assert!(a.try_insert(0, record([0.0, 0.0], 0.7, false)));
        assert_eq!(a.near_optimal_count(), 0);
        let log = a.audit_log().unwrap();
        assert_eq!(log.len(), 3);
        assert!(log.windows(2).all(|w| w[1].previous == Some(w[0].fitness)));
    }

    #[test]
    fn from_records_checks_home_niche() {
        let p = line_partition(&[0.0, 1.0]);
        let ok = Archive::from_records(p.clone(), reference(), 5, vec![(1, record([0.9, 0.0], 0.0, true))]);
        assert_eq!(ok.unwrap().eval_count(), 5);
        let bad = Archive::from_records(p, reference(), 5, vec![(0, record([0.9, 0.0], 0.0, true))]);
        assert!(bad.is_err());
    }

    #[test]
    fn rereferencing_updates_flags() {
        let mut a = Archive::new(line_partition(&[0.0, 1.0]), reference());
        a.try_insert(0, record([0.0, 0.0], 1.0, false));
        let mut r = reference();
        r.rr.mu = 0.09;
        let b = a.with_reference(r);
        assert_eq!(b.near_optimal_count(), 1);
        assert!(b.get(0).unwrap().near_optimal);
    }
}
