//! Counterfactual arrangements as pure snapshot transforms.
//!
//! Transforms only reorder or remove page elements; they never create one.
//! Pages too small for a transform come back unchanged with `applied = false`
//! so the event still records its assigned group.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::serp::{ArrangementId, Column, ElementKind, SerpSnapshot};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArrangementError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplyResult {
    pub snapshot: SerpSnapshot,
    pub applied: bool,
    pub reason: Option<String>,
}

impl ApplyResult {
    fn applied(snapshot: SerpSnapshot) -> Self {
        ApplyResult {
            snapshot,
            applied: true,
            reason: None,
        }
    }

    fn unchanged(snapshot: &SerpSnapshot, reason: &str) -> Self {
        ApplyResult {
            snapshot: snapshot.clone(),
            applied: false,
            reason: Some(reason.to_owned()),
        }
    }
}

/// Exchanges the slots of the generic results at ranks `i` and `j`.
pub fn swap_generic(
    snapshot: &SerpSnapshot,
    i: usize,
    j: usize,
) -> Result<ApplyResult, ArrangementError> {
    if i == 0 || j == 0 {
        return Err(ArrangementError::InvalidArgument(
            "generic ranks are 1-based".into(),
        ));
    }
    if i == j {
        return Err(ArrangementError::InvalidArgument(format!(
            "cannot swap rank {i} with itself"
        )));
    }
    let (first, second) = match (snapshot.at_generic_rank(i), snapshot.at_generic_rank(j)) {
        (Some(a), Some(b)) => (a.element_id.clone(), b.element_id.clone()),
        _ => return Ok(ApplyResult::unchanged(snapshot, "insufficient results")),
    };
    let mut out = snapshot.clone();
    let pos_a = out
        .elements
        .iter()
        .position(|e| e.element_id == first)
        .expect("ranked element is in the snapshot");
    let pos_b = out
        .elements
        .iter()
        .position(|e| e.element_id == second)
        .expect("ranked element is in the snapshot");
    let slot_a = out.elements[pos_a].slot;
    out.elements[pos_a].slot = out.elements[pos_b].slot;
    out.elements[pos_b].slot = slot_a;
    out.sort_elements();
    Ok(ApplyResult::applied(out))
}

/// Removes Ads and/or Shopping boxes.
///
/// With `top_only`, only Main-column Ads above the first generic result are
/// removed; Shopping boxes are removed from either column regardless. The
/// surviving elements are re-indexed so each column stays contiguous.
pub fn hide_kinds(
    snapshot: &SerpSnapshot,
    kinds: &BTreeSet<ElementKind>,
    top_only: bool,
) -> Result<ApplyResult, ArrangementError> {
    if let Some(bad) = kinds
        .iter()
        .find(|k| !matches!(k, ElementKind::Ad | ElementKind::ShoppingBox))
    {
        return Err(ArrangementError::InvalidArgument(format!(
            "{bad:?} elements cannot be hidden"
        )));
    }
    let first_generic = snapshot
        .generic_results()
        .first()
        .map(|e| e.slot.index)
        .unwrap_or(u32::MAX);
    let hidden = |kind: ElementKind, column: Column, index: u32| -> bool {
        if !kinds.contains(&kind) {
            return false;
        }
        match kind {
            ElementKind::Ad if top_only => column == Column::Main && index < first_generic,
            _ => true,
        }
    };

    let mut out = snapshot.clone();
    out.elements
        .retain(|e| !hidden(e.kind, e.slot.column, e.slot.index));
    if out.elements.len() == snapshot.elements.len() {
        return Ok(ApplyResult::unchanged(snapshot, "nothing to hide"));
    }
    out.sort_elements();
    let mut next = [0u32; 2];
    for e in &mut out.elements {
        let c = match e.slot.column {
            Column::Main => 0,
            Column::Sidebar => 1,
        };
        e.slot.index = next[c];
        next[c] += 1;
    }
    Ok(ApplyResult::applied(out))
}

/// Applies one of the counterfactual arrangements.
pub fn apply(
    arrangement: ArrangementId,
    snapshot: &SerpSnapshot,
) -> Result<ApplyResult, ArrangementError> {
    let ads_and_box: BTreeSet<ElementKind> = [ElementKind::Ad, ElementKind::ShoppingBox].into();
    match arrangement {
        ArrangementId::A0 => Ok(ApplyResult::applied(snapshot.clone())),
        ArrangementId::A1 => swap_generic(snapshot, 1, 2),
        ArrangementId::A2 => swap_generic(snapshot, 1, 3),
        ArrangementId::A3 => swap_generic(snapshot, 2, 3),
        ArrangementId::A4 => hide_kinds(snapshot, &ads_and_box, true),
        ArrangementId::A5 => {
            let hidden = hide_kinds(snapshot, &ads_and_box, true)?;
            let swapped = swap_generic(&hidden.snapshot, 1, 2)?;
            let applied = hidden.applied || swapped.applied;
            Ok(ApplyResult {
                snapshot: swapped.snapshot,
                applied,
                reason: if applied { None } else { swapped.reason },
            })
        }
        ArrangementId::A6 => hide_kinds(snapshot, &[ElementKind::ShoppingBox].into(), false),
    }
}
