//! Sample sets for the ablations: X-token fine-tuning targets, black images
//! with ground-truth coordinates as prefill, leave-one-out prefills, and
//! activation-patching source/target pairs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::builder::{Sample, ID_COUNTS};
use crate::parse::extract_coords;
use crate::prompt::{self, TargetMode};
use crate::scene::{held_out_roster, GridCoord, ObjectSpec};
use crate::seed;

/// Shared all-black image used by the black-image ablation.
pub const BLACK_IMAGE_PATH: &str = "ablation/black.png";

/// Source images per (count, object) cell of the patching design.
pub const PATCH_SOURCES: usize = 3;

/// One fine-tuning example.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FtRecord {
    pub id: String,
    pub image_path: String,
    pub prompt: String,
    pub target: String,
}

/// Fine-tuning examples for `samples`; the prompt is the bare query.
pub fn ft_records(samples: &[Sample], mode: TargetMode) -> Vec<FtRecord> {
    samples
        .iter()
        .map(|s| FtRecord {
            id: s.id(),
            image_path: s.image_path(),
            prompt: s.query(),
            target: prompt::ft_target(&s.coords, usize::from(s.label), mode),
        })
        .collect()
}

/// Point-then-count export with every coordinate replaced by `X`.
pub fn export_xft(samples: &[Sample]) -> Vec<FtRecord> {
    ft_records(samples, TargetMode::Xft)
}

/// A sample whose assistant turn is pre-filled with coordinates, so the
/// model only has to complete the count after `Answer:`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefillSample {
    pub id: String,
    pub source: Sample,
    pub image_path: String,
    pub prefill: String,
    /// Coordinates written into the prefill.
    pub prefill_cells: Vec<GridCoord>,
    pub removed: Option<GridCoord>,
}

/// Black image plus the full ground-truth coordinate list.
pub fn build_black_image_set(id_set: &[Sample]) -> Vec<PrefillSample> {
    id_set
        .iter()
        .map(|s| PrefillSample {
            id: format!("{}#black", s.id()),
            source: s.clone(),
            image_path: BLACK_IMAGE_PATH.into(),
            prefill: prompt::coordinates_prefix(&s.coords),
            prefill_cells: s.coords.clone(),
            removed: None,
        })
        .collect()
}

/// One variant per ground-truth coordinate, with that coordinate left out of
/// the prefill and the original image kept.
pub fn build_leave_one_out_set(id_set: &[Sample]) -> Vec<PrefillSample> {
    let mut out = Vec::new();
    for s in id_set {
        for (k, removed) in s.coords.iter().enumerate() {
            let kept: Vec<GridCoord> = s.coords.iter().copied().filter(|c| c != removed).collect();
            out.push(PrefillSample {
                id: format!("{}#loo{k}", s.id()),
                source: s.clone(),
                image_path: s.image_path(),
                prefill: prompt::coordinates_prefix(&kept),
                prefill_cells: kept,
                removed: Some(*removed),
            });
        }
    }
    out
}

/// Stub model that answers with the number of tuples in its prefill.
pub fn tuple_counting_stub(prefill: &str) -> String {
    format!(" {}", extract_coords(prefill).len())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchPair {
    pub source_id: String,
    pub target_id: String,
    pub object: ObjectSpec,
    pub source_count: u16,
    pub target_count: u16,
}

/// Stratified source/target pairs: for each (count, object), three seeded
/// source chains; each source is paired with the same chain at every other
/// count (falling back to a seeded chain when that image is missing).
pub fn build_patch_pairs(id_set: &[Sample], seed: u64) -> Vec<PatchPair> {
    let mut index: BTreeMap<(ObjectSpec, u16), BTreeMap<u16, &Sample>> = BTreeMap::new();
    for s in id_set {
        index.entry((s.object, s.label)).or_default().insert(s.chain_id, s);
    }
    let mut pairs = Vec::new();
    for count in ID_COUNTS {
        for object in held_out_roster() {
            let Some(sources) = index.get(&(object, count)) else { continue };
            let mut rng = seed::stream(seed, &["patch", &object.slug(), &format!("n{count}")]);
            let mut chains: Vec<u16> = sources.keys().copied().collect();
            chains.shuffle(&mut rng);
            chains.truncate(PATCH_SOURCES);
            chains.sort_unstable();
            for chain in chains {
                let source = sources[&chain];
                for other in ID_COUNTS.filter(|c| *c != count) {
                    let Some(candidates) = index.get(&(object, other)) else { continue };
                    let target = match candidates.get(&chain) {
                        Some(t) => *t,
                        None => {
                            let keys: Vec<&u16> = candidates.keys().collect();
                            candidates[keys[rng.random_range(0..keys.len())]]
                        }
                    };
                    pairs.push(PatchPair {
                        source_id: source.id(),
                        target_id: target.id(),
                        object,
                        source_count: count,
                        target_count: other,
                    });
                }
            }
        }
    }
    pairs
}
