//! Data model of a search-results page and of the click events recorded on it.
//!
//! Everything here is an immutable value type. The JSON shape produced by
//! serde is the canonical wire format shared with the ingest service and the
//! browser instrumentation: camelCase field names, integer UTC millisecond
//! timestamps, one object per event.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Engine {
    Google,
    Bing,
}

impl Engine {
    pub const ALL: [Engine; 2] = [Engine::Google, Engine::Bing];

    /// Arrangements that may be served on this engine.
    pub fn supported_arrangements(self) -> &'static [ArrangementId] {
        match self {
            Engine::Google => &ArrangementId::ALL,
            Engine::Bing => &[ArrangementId::A0, ArrangementId::A1],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Google => "google",
            Engine::Bing => "bing",
        }
    }

    pub fn parse(s: &str) -> Option<Engine> {
        match s.trim().to_ascii_lowercase().as_str() {
            "google" => Some(Engine::Google),
            "bing" => Some(Engine::Bing),
            _ => None,
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kind of a page item. Anything the classifier does not recognise is `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementKind {
    GenericResult,
    Ad,
    ShoppingBox,
    SpecializedResult,
    #[serde(other)]
    Other,
}

impl ElementKind {
    pub const ALL: [ElementKind; 5] = [
        ElementKind::GenericResult,
        ElementKind::Ad,
        ElementKind::ShoppingBox,
        ElementKind::SpecializedResult,
        ElementKind::Other,
    ];
}

/// Counterfactual arrangement served to a query; `A0` is the unmodified page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArrangementId {
    #[serde(rename = "a0")]
    A0,
    #[serde(rename = "a1")]
    A1,
    #[serde(rename = "a2")]
    A2,
    #[serde(rename = "a3")]
    A3,
    #[serde(rename = "a4")]
    A4,
    #[serde(rename = "a5")]
    A5,
    #[serde(rename = "a6")]
    A6,
}

impl ArrangementId {
    pub const ALL: [ArrangementId; 7] = [
        ArrangementId::A0,
        ArrangementId::A1,
        ArrangementId::A2,
        ArrangementId::A3,
        ArrangementId::A4,
        ArrangementId::A5,
        ArrangementId::A6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArrangementId::A0 => "a0",
            ArrangementId::A1 => "a1",
            ArrangementId::A2 => "a2",
            ArrangementId::A3 => "a3",
            ArrangementId::A4 => "a4",
            ArrangementId::A5 => "a5",
            ArrangementId::A6 => "a6",
        }
    }

    pub fn parse(s: &str) -> Option<ArrangementId> {
        ArrangementId::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
    }

    /// Short human label of the transform.
    pub fn label(self) -> &'static str {
        match self {
            ArrangementId::A0 => "control",
            ArrangementId::A1 => "swap 1-2",
            ArrangementId::A2 => "swap 1-3",
            ArrangementId::A3 => "swap 2-3",
            ArrangementId::A4 => "hide Ads/Box",
            ArrangementId::A5 => "hide + swap",
            ArrangementId::A6 => "hide Box",
        }
    }
}

impl fmt::Display for ArrangementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Column {
    Main,
    Sidebar,
}

/// Position of an element: column plus top-to-bottom index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Slot {
    pub column: Column,
    pub index: u32,
}

impl Slot {
    pub fn main(index: u32) -> Self {
        Slot {
            column: Column::Main,
            index,
        }
    }

    pub fn sidebar(index: u32) -> Self {
        Slot {
            column: Column::Sidebar,
            index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub String);

impl ElementId {
    pub fn new(id: impl Into<String>) -> Self {
        ElementId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ElementId {
    fn from(s: &str) -> Self {
        ElementId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SerpElement {
    pub element_id: ElementId,
    pub kind: ElementKind,
    pub slot: Slot,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SerpError {
    #[error("element {0} not found in snapshot")]
    NotFound(ElementId),
}

/// A single violated snapshot invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "camelCase")]
pub enum SnapshotViolation {
    DuplicateId { element_id: ElementId },
    DuplicateSlot { slot: Slot },
    SlotGap { column: Column, missing_index: u32 },
}

impl fmt::Display for SnapshotViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnapshotViolation::DuplicateId { element_id } => {
                write!(f, "duplicate id: {element_id}")
            }
            SnapshotViolation::DuplicateSlot { slot } => {
                write!(f, "duplicate slot: {:?}[{}]", slot.column, slot.index)
            }
            SnapshotViolation::SlotGap {
                column,
                missing_index,
            } => write!(f, "slot gap: {column:?} column has no index {missing_index}"),
        }
    }
}

/// Ordered model of one results page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SerpSnapshot {
    pub engine: Engine,
    pub page_index: u32,
    pub elements: Vec<SerpElement>,
    pub candidate_count: Option<u64>,
}

impl SerpSnapshot {
    pub fn builder(engine: Engine) -> SnapshotBuilder {
        SnapshotBuilder {
            snapshot: SerpSnapshot {
                engine,
                page_index: 0,
                elements: Vec::new(),
                candidate_count: None,
            },
        }
    }

    pub fn element(&self, id: &ElementId) -> Option<&SerpElement> {
        self.elements.iter().find(|e| &e.element_id == id)
    }

    /// Elements of one column in display order.
    pub fn column(&self, column: Column) -> Vec<&SerpElement> {
        let mut out: Vec<&SerpElement> = self
            .elements
            .iter()
            .filter(|e| e.slot.column == column)
            .collect();
        out.sort_by_key(|e| e.slot.index);
        out
    }

    /// Main-column generic results in display order; entry `k` has rank `k + 1`.
    pub fn generic_results(&self) -> Vec<&SerpElement> {
        self.column(Column::Main)
            .into_iter()
            .filter(|e| e.kind == ElementKind::GenericResult)
            .collect()
    }

    pub fn num_results(&self) -> usize {
        self.generic_results().len()
    }

    /// 1-based generic rank of an element, `None` for anything that is not a
    /// Main-column generic result.
    pub fn generic_rank(&self, id: &ElementId) -> Result<Option<usize>, SerpError> {
        let element = self
            .element(id)
            .ok_or_else(|| SerpError::NotFound(id.clone()))?;
        if element.kind != ElementKind::GenericResult || element.slot.column != Column::Main {
            return Ok(None);
        }
        Ok(self
            .generic_results()
            .iter()
            .position(|e| &e.element_id == id)
            .map(|p| p + 1))
    }

    /// Element shown at generic rank `rank` (1-based).
    pub fn at_generic_rank(&self, rank: usize) -> Option<&SerpElement> {
        if rank == 0 {
            return None;
        }
        self.generic_results().get(rank - 1).copied()
    }

    pub fn ads_present(&self) -> bool {
        self.elements.iter().any(|e| e.kind == ElementKind::Ad)
    }

    pub fn box_column(&self) -> Option<Column> {
        self.column(Column::Main)
            .into_iter()
            .chain(self.column(Column::Sidebar))
            .find(|e| e.kind == ElementKind::ShoppingBox)
            .map(|e| e.slot.column)
    }

    pub fn box_present(&self) -> bool {
        self.box_column().is_some()
    }

    /// Positions of specialized results within the Main-column content list,
    /// i.e. the Main column with Ads and Shopping boxes left out.
    ///
    /// Recording positions in this frame keeps generic ranks recoverable from
    /// the event alone: every content position not listed here is a generic
    /// result, in rank order.
    pub fn ssr_positions(&self) -> Vec<u32> {
        self.column(Column::Main)
            .into_iter()
            .filter(|e| matches!(e.kind, ElementKind::GenericResult | ElementKind::SpecializedResult))
            .enumerate()
            .filter(|(_, e)| e.kind == ElementKind::SpecializedResult)
            .map(|(pos, _)| pos as u32)
            .collect()
    }

    /// Checks the snapshot invariants; returns every violation found.
    pub fn validate(&self) -> Result<(), Vec<SnapshotViolation>> {
        let mut violations = Vec::new();
        let mut ids = HashSet::new();
        for e in &self.elements {
            if !ids.insert(&e.element_id) {
                violations.push(SnapshotViolation::DuplicateId {
                    element_id: e.element_id.clone(),
                });
            }
        }
        let mut by_column: BTreeMap<Column, Vec<u32>> = BTreeMap::new();
        for e in &self.elements {
            by_column.entry(e.slot.column).or_default().push(e.slot.index);
        }
        for (column, mut indices) in by_column {
            indices.sort_unstable();
            let mut expected = 0u32;
            let mut previous = None;
            for index in indices {
                if previous == Some(index) {
                    violations.push(SnapshotViolation::DuplicateSlot {
                        slot: Slot { column, index },
                    });
                    continue;
                }
                while expected < index {
                    violations.push(SnapshotViolation::SlotGap {
                        column,
                        missing_index: expected,
                    });
                    expected += 1;
                }
                previous = Some(index);
                expected = index + 1;
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Sorts elements into display order: Main column first, then Sidebar.
    pub(crate) fn sort_elements(&mut self) {
        self.elements.sort_by_key(|e| e.slot);
    }
}

pub struct SnapshotBuilder {
    snapshot: SerpSnapshot,
}

impl SnapshotBuilder {
    pub fn page_index(mut self, page_index: u32) -> Self {
        self.snapshot.page_index = page_index;
        self
    }

    pub fn candidate_count(mut self, count: Option<u64>) -> Self {
        self.snapshot.candidate_count = count;
        self
    }

    /// Appends an element at the bottom of the Main column.
    pub fn main(self, id: impl Into<String>, kind: ElementKind) -> Self {
        self.push(id, kind, Column::Main)
    }

    /// Appends an element at the bottom of the Sidebar column.
    pub fn sidebar(self, id: impl Into<String>, kind: ElementKind) -> Self {
        self.push(id, kind, Column::Sidebar)
    }

    fn push(mut self, id: impl Into<String>, kind: ElementKind, column: Column) -> Self {
        let index = self
            .snapshot
            .elements
            .iter()
            .filter(|e| e.slot.column == column)
            .count() as u32;
        self.snapshot.elements.push(SerpElement {
            element_id: ElementId::new(id),
            kind,
            slot: Slot { column, index },
        });
        self
    }

    pub fn build(mut self) -> SerpSnapshot {
        self.snapshot.sort_elements();
        self.snapshot
    }
}

/// Parses the results-count banner, e.g. `About 323'000'000 results`.
///
/// Digit groups may be separated by `,` `.` `'` `’` or (narrow) spaces. Any
/// text without a number yields `None`.
pub fn parse_candidate_count(text: &str) -> Option<u64> {
    const SEPARATORS: [char; 6] = [',', '.', '\'', '\u{2019}', '\u{a0}', '\u{202f}'];
    let chars: Vec<char> = text.chars().collect();
    let start = chars.iter().position(|c| c.is_ascii_digit())?;
    let mut digits = String::new();
    let mut i = start;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_digit() {
            digits.push(c);
        } else if (SEPARATORS.contains(&c) || c == ' ')
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
        {
            // group separator
        } else {
            break;
        }
        i += 1;
    }
    digits.parse().ok()
}

/// One recorded click. Carries no query text, URL or personal data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ClickEvent {
    pub event_id: String,
    pub user_id: String,
    /// UTC milliseconds.
    pub timestamp: i64,
    pub engine: Engine,
    pub group: ArrangementId,
    /// Rank of the clicked result on the unmodified page.
    #[serde(default)]
    pub original_rank: Option<u32>,
    /// Rank of the clicked result as displayed after the treatment.
    #[serde(default)]
    pub displayed_rank: Option<u32>,
    pub element_kind: ElementKind,
    pub page_index: u32,
    pub num_results: u32,
    pub ads_present: bool,
    pub box_present: bool,
    #[serde(default)]
    pub box_column: Option<Column>,
    #[serde(default)]
    pub ssr_positions: Vec<u32>,
    #[serde(default)]
    pub candidate_count: Option<u64>,
}

/// Field names of the canonical event object.
pub const CLICK_EVENT_FIELDS: [&str; 15] = [
    "eventId",
    "userId",
    "timestamp",
    "engine",
    "group",
    "originalRank",
    "displayedRank",
    "elementKind",
    "pageIndex",
    "numResults",
    "adsPresent",
    "boxPresent",
    "boxColumn",
    "ssrPositions",
    "candidateCount",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EventViolation {
    pub field: &'static str,
    pub message: String,
}

impl EventViolation {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        EventViolation {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for EventViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ClickEvent {
    pub fn is_generic(&self) -> bool {
        self.element_kind == ElementKind::GenericResult
    }

    /// A generic click whose a0 rank could not be established.
    pub fn is_unclassifiable(&self) -> bool {
        self.is_generic() && self.original_rank.is_none()
    }

    pub fn validate(&self) -> Result<(), Vec<EventViolation>> {
        let mut v = Vec::new();
        if self.event_id.trim().is_empty() {
            v.push(EventViolation::new("eventId", "must not be empty"));
        }
        if self.user_id.trim().is_empty() {
            v.push(EventViolation::new("userId", "must not be empty"));
        }
        if self.timestamp < 0 {
            v.push(EventViolation::new("timestamp", "must be nonnegative"));
        }
        if !self.engine.supported_arrangements().contains(&self.group) {
            v.push(EventViolation::new(
                "group",
                format!("{} is not served on {}", self.group, self.engine),
            ));
        }
        if self.is_generic() {
            for (field, rank) in [
                ("originalRank", self.original_rank),
                ("displayedRank", self.displayed_rank),
            ] {
                match rank {
                    None => v.push(EventViolation::new(field, "required for generic results")),
                    Some(0) => v.push(EventViolation::new(field, "ranks are 1-based")),
                    Some(r) if r > self.num_results => v.push(EventViolation::new(
                        field,
                        format!("rank {r} exceeds numResults {}", self.num_results),
                    )),
                    Some(_) => {}
                }
            }
        } else {
            if self.original_rank.is_some() {
                v.push(EventViolation::new(
                    "originalRank",
                    "only generic results carry a rank",
                ));
            }
            if self.displayed_rank.is_some() {
                v.push(EventViolation::new(
                    "displayedRank",
                    "only generic results carry a rank",
                ));
            }
        }
        if self.box_present != self.box_column.is_some() {
            v.push(EventViolation::new(
                "boxColumn",
                "must be present exactly when boxPresent is true",
            ));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("ClickEvent serializes infallibly")
    }
}
