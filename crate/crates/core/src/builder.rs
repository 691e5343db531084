//! Synthetic split construction.
//!
//! Every split is built from incremental chains: a chain is an ordered list
//! of distinct cells, and the count-`i` image of a chain holds targets on its
//! first `i` cells. Across the chains of one object, each grid cell is the
//! first cell of exactly one chain, which makes count-1 images positionally
//! balanced. Distractor variants are layered on top of finished samples
//! without moving any target.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::prompt;
use crate::scene::{held_out_roster, training_roster, Color, GridCoord, GridDims, ObjectSpec, Scene, Shape};
use crate::seed::{self, Rng};

/// Counts used by training, validation and in-distribution test images.
pub const ID_COUNTS: core::ops::RangeInclusive<u16> = 1..=9;
/// Counts used by out-of-distribution test images.
pub const OOD_COUNTS: core::ops::RangeInclusive<u16> = 10..=18;
/// Distractor spatial configurations per (image, distractor type) in Noisy_TS.
pub const NOISY_TEST_CONFIGS: u8 = 3;
/// Distractor segments in Noisy_TS.
pub const NOISY_TEST_SEGMENTS: core::ops::RangeInclusive<u8> = 1..=9;

/// Target object of every Noisy_TS image.
pub const NOISY_TEST_TARGET: ObjectSpec = ObjectSpec::new(Color::Blue, Shape::Star);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    BaseTrain,
    BaseVal,
    Id,
    Ood,
    NoisyTrain,
    NoisyVal,
    NoisyTest,
}

impl Split {
    pub const ALL: [Split; 7] =
        [Split::BaseTrain, Split::BaseVal, Split::Id, Split::Ood, Split::NoisyTrain, Split::NoisyVal, Split::NoisyTest];

    pub fn tag(self) -> &'static str {
        match self {
            Split::BaseTrain => "base_train",
            Split::BaseVal => "base_val",
            Split::Id => "id",
            Split::Ood => "ood",
            Split::NoisyTrain => "noisy_train",
            Split::NoisyVal => "noisy_val",
            Split::NoisyTest => "noisy_test",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|s| s.tag() == tag)
    }

    /// Directory that holds this split's images.
    pub fn image_dir(self) -> &'static str {
        match self {
            Split::BaseTrain | Split::BaseVal => "base",
            Split::Id => "id",
            Split::Ood => "ood",
            Split::NoisyTrain | Split::NoisyVal => "noisy_tr",
            Split::NoisyTest => "noisy_ts",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    pub object: ObjectSpec,
    pub chain_id: u16,
    pub cells: Vec<GridCoord>,
}

/// Non-target objects added to a sample; `specs[i]` sits on `cells[i]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distractors {
    pub specs: Vec<ObjectSpec>,
    pub cells: Vec<GridCoord>,
}

impl Distractors {
    pub fn count(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// One synthetic evaluation unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub split: Split,
    pub dims: GridDims,
    pub object: ObjectSpec,
    pub chain_id: u16,
    /// Ground-truth target cells, row-major sorted.
    pub coords: Vec<GridCoord>,
    pub label: u16,
    pub distractors: Distractors,
    /// Distractor configuration index (Noisy_TS only, otherwise 0).
    pub variant: u8,
    pub seed: u64,
}

impl Sample {
    fn distractor_slug(&self) -> String {
        self.distractors.specs.first().map(|o| o.slug()).unwrap_or_default()
    }

    /// Stable identifier, unique within a run.
    pub fn id(&self) -> String {
        let base = format!("{}/{}/c{:02}/n{:02}", self.split.tag(), self.object.slug(), self.chain_id, self.label);
        match self.split {
            Split::NoisyTest => {
                format!("{base}/d{}/{}/k{}", self.distractors.count(), self.distractor_slug(), self.variant)
            }
            _ => base,
        }
    }

    /// Image path relative to the dataset root: `<split>/<object>/<chain>/<count>.png`.
    pub fn image_path(&self) -> String {
        let dir = format!("{}/{}/{:02}", self.split.image_dir(), self.object.slug(), self.chain_id);
        match self.split {
            Split::NoisyTest => format!(
                "{}/d{}/{}/{:02}/{}_{}_k{}.png",
                self.split.image_dir(),
                self.distractors.count(),
                self.object.slug(),
                self.chain_id,
                self.label,
                self.distractor_slug(),
                self.variant
            ),
            _ => format!("{dir}/{}.png", self.label),
        }
    }

    pub fn query(&self) -> String {
        prompt::query_for(self.object)
    }

    /// Scene holding the targets and distractors of this sample.
    pub fn scene(&self) -> Scene {
        let mut scene = Scene::new(self.dims, self.object);
        for c in &self.coords {
            scene.place(*c, self.object).expect("sample coordinates are distinct and in bounds");
        }
        for (c, o) in self.distractors.cells.iter().zip(&self.distractors.specs) {
            scene.place(*c, *o).expect("distractor cells are empty and in bounds");
        }
        scene
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuildError {
    InvalidLength { length: usize, cells: usize },
    InsufficientEmptyCells { needed: usize, available: usize },
    Cardinality { split: &'static str, expected: usize, actual: usize },
}

impl fmt::Display for BuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildError::InvalidLength { length, cells } => {
                write!(f, "chain length {length} exceeds the {cells} grid cells")
            }
            BuildError::InsufficientEmptyCells { needed, available } => {
                write!(f, "need {needed} empty cells but only {available} are free")
            }
            BuildError::Cardinality { split, expected, actual } => {
                write!(f, "split {split}: expected {expected} samples, built {actual}")
            }
        }
    }
}

impl core::error::Error for BuildError {}

/// Expected size of a split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub name: &'static str,
    pub counts: core::ops::RangeInclusive<u16>,
    pub roster_size: usize,
    pub chains_per_object: usize,
    pub expected: usize,
}

impl SplitSpec {
    pub const BASE: SplitSpec =
        SplitSpec { name: "base", counts: ID_COUNTS, roster_size: 10, chains_per_object: 81, expected: 7_290 };
    pub const BASE_TRAIN: SplitSpec =
        SplitSpec { name: "base_train", counts: ID_COUNTS, roster_size: 10, chains_per_object: 54, expected: 4_860 };
    pub const BASE_VAL: SplitSpec =
        SplitSpec { name: "base_val", counts: ID_COUNTS, roster_size: 10, chains_per_object: 27, expected: 2_430 };
    pub const ID: SplitSpec =
        SplitSpec { name: "id", counts: ID_COUNTS, roster_size: 24, chains_per_object: 81, expected: 17_496 };
    pub const OOD: SplitSpec =
        SplitSpec { name: "ood", counts: OOD_COUNTS, roster_size: 24, chains_per_object: 81, expected: 17_496 };
    pub const NOISY_TRAIN: SplitSpec =
        SplitSpec { name: "noisy_tr", counts: ID_COUNTS, roster_size: 10, chains_per_object: 81, expected: 7_290 };
    /// One Noisy_TS segment: 729 blue-star images × 23 distractor types × 3 configurations.
    pub const NOISY_TEST_SEGMENT: SplitSpec =
        SplitSpec { name: "noisy_ts_segment", counts: ID_COUNTS, roster_size: 1, chains_per_object: 81, expected: 50_301 };
    pub const NOISY_TEST_TOTAL: usize = 452_709;

    pub fn check(&self, actual: usize) -> Result<(), BuildError> {
        if actual == self.expected {
            Ok(())
        } else {
            Err(BuildError::Cardinality { split: self.name, expected: self.expected, actual })
        }
    }
}

/// Draws `n` distinct elements from `pool` (partial Fisher-Yates, in draw order).
fn draw_distinct(pool: &mut [GridCoord], n: usize, rng: &mut Rng) -> Vec<GridCoord> {
    let len = pool.len();
    for i in 0..n {
        let j = rng.random_range(i..len);
        pool.swap(i, j);
    }
    pool[..n].to_vec()
}

/// Builds one chain per grid cell for `object`. The first cells of the chains
/// form a seeded permutation of the grid; later cells are drawn uniformly
/// without replacement from the cells still empty in that chain.
pub fn build_chains(object: ObjectSpec, dims: GridDims, length: usize, rng: &mut Rng) -> Result<Vec<Chain>, BuildError> {
    let n = dims.cell_count();
    if length > n || length == 0 {
        return Err(BuildError::InvalidLength { length, cells: n });
    }
    let mut firsts: Vec<GridCoord> = dims.cells().collect();
    firsts.shuffle(rng);
    let mut chains = Vec::with_capacity(n);
    for (chain_id, first) in firsts.into_iter().enumerate() {
        let mut pool: Vec<GridCoord> = dims.cells().filter(|c| *c != first).collect();
        let mut cells = Vec::with_capacity(length);
        cells.push(first);
        cells.extend(draw_distinct(&mut pool, length - 1, rng));
        chains.push(Chain { object, chain_id: chain_id as u16, cells });
    }
    Ok(chains)
}

fn chain_sample(chain: &Chain, count: u16, split: Split, dims: GridDims, seed: u64) -> Sample {
    let mut coords = chain.cells[..usize::from(count)].to_vec();
    coords.sort_unstable();
    Sample {
        split,
        dims,
        object: chain.object,
        chain_id: chain.chain_id,
        coords,
        label: count,
        distractors: Distractors::default(),
        variant: 0,
        seed,
    }
}

fn build_roster_split(
    roster: &[ObjectSpec],
    stream_name: &str,
    counts: core::ops::RangeInclusive<u16>,
    dims: GridDims,
    seed: u64,
    split_of: impl Fn(u16) -> Split,
) -> Result<Vec<Sample>, BuildError> {
    let length = usize::from(*counts.end());
    let mut out = Vec::with_capacity(roster.len() * dims.cell_count() * counts.len());
    for object in roster {
        let mut rng = seed::stream(seed, &[stream_name, &object.slug()]);
        for chain in build_chains(*object, dims, length, &mut rng)? {
            for count in counts.clone() {
                out.push(chain_sample(&chain, count, split_of(chain.chain_id), dims, seed));
            }
        }
    }
    Ok(out)
}

/// Number of chains (out of `dims.cell_count()`) that go to the training half.
pub fn train_chain_count(dims: GridDims) -> u16 {
    (dims.cell_count() * 2 / 3) as u16
}

/// Base split: 10 training objects × 81 chains × counts 1..=9, divided by chain.
pub fn build_base(seed: u64, dims: GridDims) -> Result<(Vec<Sample>, Vec<Sample>), BuildError> {
    let cut = train_chain_count(dims);
    let all = build_roster_split(&training_roster(), "base", ID_COUNTS, dims, seed, |chain| {
        if chain < cut {
            Split::BaseTrain
        } else {
            Split::BaseVal
        }
    })?;
    Ok(all.into_iter().partition(|s| s.split == Split::BaseTrain))
}

/// In-distribution test split over the 24 held-out objects.
pub fn build_id_test(seed: u64, dims: GridDims) -> Result<Vec<Sample>, BuildError> {
    build_roster_split(&held_out_roster(), "id", ID_COUNTS, dims, seed, |_| Split::Id)
}

/// Out-of-distribution test split: fresh length-18 chains, counts 10..=18.
pub fn build_ood_test(seed: u64, dims: GridDims) -> Result<Vec<Sample>, BuildError> {
    build_roster_split(&held_out_roster(), "ood", OOD_COUNTS, dims, seed, |_| Split::Ood)
}

fn empty_cells(sample: &Sample) -> Vec<GridCoord> {
    sample.dims.cells().filter(|c| sample.coords.binary_search(c).is_err()).collect()
}

/// Adds 1, 2 or 3 distractors to every Base image.
///
/// `base` is the concatenation of Base train and val. Distractor counts cycle
/// over a seeded permutation of the samples so each count occurs exactly a
/// third of the time; distractor types rotate through the non-target training
/// objects per target.
pub fn build_noisy_train(base: &[Sample], seed: u64) -> Result<Vec<Sample>, BuildError> {
    let roster = training_roster();
    let mut order: Vec<usize> = (0..base.len()).collect();
    order.shuffle(&mut seed::stream(seed, &["noisy_tr", "d"]));
    let mut d_of = alloc::vec![0usize; base.len()];
    for (pos, idx) in order.into_iter().enumerate() {
        d_of[idx] = 1 + pos % 3;
    }
    let mut rotation: BTreeMap<ObjectSpec, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(base.len());
    for (sample, d) in base.iter().zip(d_of) {
        let others: Vec<ObjectSpec> = roster.iter().copied().filter(|o| *o != sample.object).collect();
        let mut pool = empty_cells(sample);
        if pool.len() < d {
            return Err(BuildError::InsufficientEmptyCells { needed: d, available: pool.len() });
        }
        let mut rng = seed::stream(seed, &["noisy_tr", &sample.id()]);
        let cells = draw_distinct(&mut pool, d, &mut rng);
        let next = rotation.entry(sample.object).or_insert(0);
        let specs = (0..d)
            .map(|_| {
                let o = others[*next % others.len()];
                *next += 1;
                o
            })
            .collect();
        let split = if sample.split == Split::BaseTrain { Split::NoisyTrain } else { Split::NoisyVal };
        out.push(Sample { split, distractors: Distractors { specs, cells }, ..sample.clone() });
    }
    Ok(out)
}

/// Blue-star images of the in-distribution split, the Noisy_TS sources.
pub fn noisy_test_sources(id_set: &[Sample]) -> Vec<&Sample> {
    id_set.iter().filter(|s| s.object == NOISY_TEST_TARGET).collect()
}

/// Distractor types used by Noisy_TS: every held-out object except the target.
pub fn noisy_test_distractor_types() -> Vec<ObjectSpec> {
    held_out_roster().into_iter().filter(|o| *o != NOISY_TEST_TARGET).collect()
}

/// One Noisy_TS segment: `d` distractors of a single type added to each
/// blue-star ID image, for every distractor type, in three distinct seeded
/// spatial configurations.
pub fn build_noisy_test_segment(id_set: &[Sample], d: u8, seed: u64) -> Result<Vec<Sample>, BuildError> {
    let sources = noisy_test_sources(id_set);
    let types = noisy_test_distractor_types();
    let mut out = Vec::with_capacity(sources.len() * types.len() * usize::from(NOISY_TEST_CONFIGS));
    let d_tag = format!("d{d}");
    for source in sources {
        let empty = empty_cells(source);
        if empty.len() < usize::from(d) {
            return Err(BuildError::InsufficientEmptyCells { needed: usize::from(d), available: empty.len() });
        }
        let source_id = source.id();
        for ty in &types {
            let mut rng = seed::stream(seed, &["noisy_ts", &d_tag, &ty.slug(), &source_id]);
            let mut seen: Vec<Vec<GridCoord>> = Vec::new();
            for variant in 0..NOISY_TEST_CONFIGS {
                let mut cells;
                loop {
                    let mut pool = empty.clone();
                    cells = draw_distinct(&mut pool, usize::from(d), &mut rng);
                    let mut key = cells.clone();
                    key.sort_unstable();
                    // Configurations must differ; only a 1-cell grid could loop here.
                    if !seen.contains(&key) || empty.len() <= usize::from(d) {
                        seen.push(key);
                        break;
                    }
                }
                out.push(Sample {
                    split: Split::NoisyTest,
                    distractors: Distractors { specs: alloc::vec![*ty; usize::from(d)], cells },
                    variant,
                    ..source.clone()
                });
            }
        }
    }
    Ok(out)
}

/// All nine Noisy_TS segments, indexed by `d - 1`.
pub fn build_noisy_test(id_set: &[Sample], seed: u64) -> Result<Vec<Vec<Sample>>, BuildError> {
    NOISY_TEST_SEGMENTS.map(|d| build_noisy_test_segment(id_set, d, seed)).collect()
}

/// Label histogram of a sample set.
pub fn label_histogram<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> BTreeMap<u16, usize> {
    let mut h = BTreeMap::new();
    for s in samples {
        *h.entry(s.label).or_insert(0) += 1;
    }
    h
}
