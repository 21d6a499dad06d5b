//! Picking one near-optimal portfolio from an archive given a preferred behavior.

use crate::archive::{Archive, EliteRecord};
use crate::error::{Error, Result};
use crate::types::squared_distance;

/// The elite returned to the investor and the niche it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection<'a> {
    pub niche: usize,
    pub record: &'a EliteRecord,
    /// Niche of the preferred descriptor itself.
    pub requested_niche: usize,
}

/// Returns the near-optimal elite of the preferred descriptor's niche, or,
/// failing that, of the near-optimal niche whose centroid is nearest to it.
/// Ties go to the lowest niche index.
pub fn select_portfolio<'a>(a: &'a Archive, preferred_bd: &[f64]) -> Result<Selection<'a>> {
    let partition = a.partition();
    let requested = partition.niche_index(preferred_bd)?;
    if let Some(r) = a.get(requested).filter(|r| r.near_optimal) {
        return Ok(Selection {
            niche: requested,
            record: r,
            requested_niche: requested,
        });
    }
    let home = partition.centroid(requested);
    let mut best: Option<(f64, usize, &EliteRecord)> = None;
    for (k, r) in a.iter().filter(|(_, r)| r.near_optimal) {
        let d = squared_distance(home, partition.centroid(k));
        if best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, k, r));
        }
    }
    let (_, niche, record) = best.ok_or(Error::NoNearOptimal)?;
    Ok(Selection {
        niche,
        record,
        requested_niche: requested,
    })
}
