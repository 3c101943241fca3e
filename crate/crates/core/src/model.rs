//! Block records, tables, and target pairs shared by every stage.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Land-use categories in their fixed canonical order. The order doubles as
/// the tie-break order wherever an argmax over shares is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandUse {
    Residential,
    Recreation,
    Business,
    Industrial,
    Transport,
    Special,
    Agricultural,
}

impl LandUse {
    pub const ALL: [LandUse; 7] = [
        LandUse::Residential,
        LandUse::Recreation,
        LandUse::Business,
        LandUse::Industrial,
        LandUse::Transport,
        LandUse::Special,
        LandUse::Agricultural,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LandUse::Residential => "residential",
            LandUse::Recreation => "recreation",
            LandUse::Business => "business",
            LandUse::Industrial => "industrial",
            LandUse::Transport => "transport",
            LandUse::Special => "special",
            LandUse::Agricultural => "agricultural",
        }
    }
}

impl fmt::Display for LandUse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const N_SHARES: usize = 7;

/// Upper bound tolerated for shares; slightly inconsistent source rows are kept.
pub const SHARE_TOLERANCE: f64 = 1.1;

/// Site areas at or below this are flagged as implausible (warning only).
pub const TINY_AREA_WARNING: f64 = 1e-6;

/// The two built-form targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Fsi,
    Gsi,
}

impl Feature {
    pub const BOTH: [Feature; 2] = [Feature::Fsi, Feature::Gsi];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Fsi => "fsi",
            Feature::Gsi => "gsi",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An (FSI, GSI) pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetPair {
    pub fsi: f64,
    pub gsi: f64,
}

impl TargetPair {
    pub fn new(fsi: f64, gsi: f64) -> Self {
        Self { fsi, gsi }
    }

    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Fsi => self.fsi,
            Feature::Gsi => self.gsi,
        }
    }

    pub fn set(&mut self, feature: Feature, value: f64) {
        match feature {
            Feature::Fsi => self.fsi = value,
            Feature::Gsi => self.gsi = value,
        }
    }
}

/// FSI and GSI from raw areas.
pub fn compute_fsi_gsi(total_floor_area: f64, footprint_area: f64, site_area: f64) -> Result<TargetPair> {
    if !(site_area > 0.0) || !site_area.is_finite() {
        return Err(Error::DegenerateArea(site_area));
    }
    Ok(TargetPair::new(total_floor_area / site_area, footprint_area / site_area))
}

/// Imputed values keyed by block id. Every block missing at least one target
/// gets an entry; observed components are carried through unchanged.
pub type Imputation = BTreeMap<String, TargetPair>;

/// One urban block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub id: String,
    pub centroid: (f64, f64),
    /// Shares in [`LandUse::ALL`] order.
    pub shares: [f64; N_SHARES],
    pub site_area: f64,
    pub fsi: Option<f64>,
    pub gsi: Option<f64>,
}

impl BlockRecord {
    pub fn target(&self, feature: Feature) -> Option<f64> {
        match feature {
            Feature::Fsi => self.fsi,
            Feature::Gsi => self.gsi,
        }
    }

    pub fn set_target(&mut self, feature: Feature, value: Option<f64>) {
        match feature {
            Feature::Fsi => self.fsi = value,
            Feature::Gsi => self.gsi = value,
        }
    }

    /// Both targets, if both are observed.
    pub fn targets(&self) -> Option<TargetPair> {
        match (self.fsi, self.gsi) {
            (Some(f), Some(g)) => Some(TargetPair::new(f, g)),
            _ => None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.fsi.is_some() && self.gsi.is_some()
    }

    pub fn share(&self, use_: LandUse) -> f64 {
        self.shares[use_ as usize]
    }
}

/// Ordered collection of blocks with an id lookup.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockTable {
    records: Vec<BlockRecord>,
    index: HashMap<String, usize>,
}

impl BlockTable {
    /// Builds a table in the given order. Duplicate ids are kept (the index
    /// points at the first occurrence) so that [`validate_table`] can report them.
    pub fn new(records: Vec<BlockRecord>) -> Self {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            index.entry(r.id.clone()).or_insert(i);
        }
        Self { records, index }
    }

    pub fn records(&self) -> &[BlockRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&BlockRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BlockRecord> {
        self.records.iter()
    }

    /// Indices of blocks with both targets observed.
    pub fn complete_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.records[i].is_complete()).collect()
    }

    /// Indices of blocks missing at least one target.
    pub fn incomplete_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.records[i].is_complete()).collect()
    }

    /// Copy of the table with the given targets removed.
    pub fn with_hidden(&self, hidden: &[(usize, Feature)]) -> BlockTable {
        let mut records = self.records.clone();
        for &(i, f) in hidden {
            records[i].set_target(f, None);
        }
        BlockTable { records, index: self.index.clone() }
    }

    /// Content hash over every field, in order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let opt = |h: &mut Sha256, v: Option<f64>| match v {
            Some(x) => {
                h.update([1u8]);
                h.update(x.to_bits().to_le_bytes());
            }
            None => h.update([0u8]),
        };
        for r in &self.records {
            h.update((r.id.len() as u64).to_le_bytes());
            h.update(r.id.as_bytes());
            h.update(r.centroid.0.to_bits().to_le_bytes());
            h.update(r.centroid.1.to_bits().to_le_bytes());
            for s in r.shares {
                h.update(s.to_bits().to_le_bytes());
            }
            h.update(r.site_area.to_bits().to_le_bytes());
            opt(&mut h, r.fsi);
            opt(&mut h, r.gsi);
        }
        hex::encode(&h.finalize()[..16])
    }
}

impl<'a> IntoIterator for &'a BlockTable {
    type Item = &'a BlockRecord;
    type IntoIter = std::slice::Iter<'a, BlockRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// A single invariant violation found by [`validate_table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub block_id: String,
    pub field: String,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "block `{}` field `{}`: {}", self.block_id, self.field, self.message)
    }
}

/// Checks every record and returns all violations; an empty list means valid.
pub fn validate_table(table: &BlockTable) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for r in table.records() {
        let mut push = |field: &str, severity: Severity, message: String| {
            out.push(Violation { block_id: r.id.clone(), field: field.to_string(), severity, message })
        };
        let count = seen.entry(r.id.as_str()).or_insert(0);
        *count += 1;
        if *count == 2 {
            push("id", Severity::Error, "duplicate id".into());
        }
        if !r.centroid.0.is_finite() || !r.centroid.1.is_finite() {
            push("centroid", Severity::Error, format!("non-finite centroid {:?}", r.centroid));
        }
        for (use_, &s) in LandUse::ALL.iter().zip(r.shares.iter()) {
            let field = format!("share_{}", use_.name());
            if !s.is_finite() {
                push(&field, Severity::Error, format!("non-finite share {s}"));
            } else if s < 0.0 {
                push(&field, Severity::Error, format!("negative share {s}"));
            } else if s > SHARE_TOLERANCE {
                push(&field, Severity::Error, format!("share {s} exceeds {SHARE_TOLERANCE}"));
            }
        }
        if !r.site_area.is_finite() {
            push("site_area", Severity::Error, format!("non-finite site area {}", r.site_area));
        } else if r.site_area <= 0.0 {
            push("site_area", Severity::Error, format!("non-positive site area {}", r.site_area));
        } else if r.site_area <= TINY_AREA_WARNING {
            push("site_area", Severity::Warning, format!("implausibly small site area {}", r.site_area));
        }
        for f in Feature::BOTH {
            if let Some(v) = r.target(f) {
                if !v.is_finite() {
                    push(f.name(), Severity::Error, format!("non-finite value {v}"));
                } else if v < 0.0 {
                    push(f.name(), Severity::Error, format!("negative value {v}"));
                }
            }
        }
        if r.fsi.is_some() != r.gsi.is_some() {
            push("fsi/gsi", Severity::Warning, "only one of fsi/gsi observed".into());
        }
    }
    out
}
