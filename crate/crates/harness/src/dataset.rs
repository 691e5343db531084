//! Writing synthetic splits, ablation sets and fine-tuning exports to disk.
//!
//! Layout under the dataset root: one `<split>.jsonl` manifest per split,
//! Noisy_TS as `noisy_ts_d<d>.jsonl`, images under `images/`. Every
//! `image_path` in a manifest is relative to the root.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use pointcount_core::ablation::{self, FtRecord, PatchPair, BLACK_IMAGE_PATH};
use pointcount_core::builder::{self, SplitSpec, NOISY_TEST_SEGMENTS};
use pointcount_core::prompt::{self, TargetMode};
use pointcount_core::render::Renderer;
use pointcount_core::{GridDims, PixelGeometry, RgbImage, Sample};
use serde::{Deserialize, Serialize};

use crate::image_io::write_png;
use crate::manifest::{write_jsonl, Coords, ManifestRecord};
use crate::Error;

pub const IMAGE_DIR: &str = "images";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SplitName {
    Base,
    Id,
    Ood,
    NoisyTr,
    NoisyTs,
}

impl SplitName {
    pub const ALL: [SplitName; 5] = [SplitName::Base, SplitName::Id, SplitName::Ood, SplitName::NoisyTr, SplitName::NoisyTs];

    pub fn name(self) -> &'static str {
        match self {
            SplitName::Base => "base",
            SplitName::Id => "id",
            SplitName::Ood => "ood",
            SplitName::NoisyTr => "noisy_tr",
            SplitName::NoisyTs => "noisy_ts",
        }
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split '{s}' (expected base, id, ood, noisy_tr, noisy_ts)")))
    }
}

pub fn manifest_path(root: &Path, split: SplitName) -> PathBuf {
    root.join(format!("{}.jsonl", split.name()))
}

pub fn noisy_ts_manifest_path(root: &Path, d: u8) -> PathBuf {
    root.join(format!("noisy_ts_d{d}.jsonl"))
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub root: PathBuf,
    pub seed: u64,
    pub splits: Vec<SplitName>,
    pub images: bool,
    /// Noisy_TS segments to write (all nine by default).
    pub segments: Vec<u8>,
}

impl GenerateOptions {
    pub fn new(root: impl Into<PathBuf>, seed: u64) -> Self {
        GenerateOptions { root: root.into(), seed, splits: SplitName::ALL.to_vec(), images: true, segments: NOISY_TEST_SEGMENTS.collect() }
    }
}

/// Split name → number of samples written.
pub type Summary = BTreeMap<String, usize>;

fn record(s: &Sample) -> ManifestRecord {
    let mut rec = ManifestRecord::from(s);
    rec.image_path = format!("{IMAGE_DIR}/{}", rec.image_path);
    rec
}

fn emit(root: &Path, path: &Path, samples: &[Sample], renderer: Option<&Renderer>) -> Result<usize, Error> {
    let records: Vec<ManifestRecord> = samples.iter().map(record).collect();
    let n = write_jsonl(path, &records)?;
    if let Some(r) = renderer {
        for (s, rec) in samples.iter().zip(&records) {
            write_png(&root.join(&rec.image_path), &r.render(&s.scene()))?;
        }
    }
    Ok(n)
}

fn check(spec: &SplitSpec, n: usize) -> Result<(), Error> {
    spec.check(n).map_err(Error::Build)
}

/// Builds, checks and writes the requested splits.
pub fn generate(opts: &GenerateOptions) -> Result<Summary, Error> {
    let dims = GridDims::default();
    let renderer = opts.images.then(|| Renderer::new(PixelGeometry::STANDARD));
    let r = renderer.as_ref();
    let root = opts.root.as_path();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut summary = Summary::new();
    let wants = |s: SplitName| opts.splits.contains(&s);

    let mut base = None;
    if wants(SplitName::Base) || wants(SplitName::NoisyTr) {
        let (train, val) = builder::build_base(opts.seed, dims)?;
        check(&SplitSpec::BASE_TRAIN, train.len())?;
        check(&SplitSpec::BASE_VAL, val.len())?;
        let all: Vec<Sample> = train.into_iter().chain(val).collect();
        check(&SplitSpec::BASE, all.len())?;
        if wants(SplitName::Base) {
            let n = emit(root, &manifest_path(root, SplitName::Base), &all, r)?;
            info!("base: {n} samples");
            summary.insert("base".into(), n);
        }
        base = Some(all);
    }
    if let (true, Some(base)) = (wants(SplitName::NoisyTr), &base) {
        let noisy = builder::build_noisy_train(base, opts.seed)?;
        check(&SplitSpec::NOISY_TRAIN, noisy.len())?;
        let n = emit(root, &manifest_path(root, SplitName::NoisyTr), &noisy, r)?;
        info!("noisy_tr: {n} samples");
        summary.insert("noisy_tr".into(), n);
    }
    if wants(SplitName::Id) || wants(SplitName::NoisyTs) {
        let id = builder::build_id_test(opts.seed, dims)?;
        check(&SplitSpec::ID, id.len())?;
        if wants(SplitName::Id) {
            let n = emit(root, &manifest_path(root, SplitName::Id), &id, r)?;
            info!("id: {n} samples");
            summary.insert("id".into(), n);
        }
        if wants(SplitName::NoisyTs) {
            let mut total = 0;
            for &d in &opts.segments {
                let seg = builder::build_noisy_test_segment(&id, d, opts.seed)?;
                check(&SplitSpec::NOISY_TEST_SEGMENT, seg.len())?;
                let n = emit(root, &noisy_ts_manifest_path(root, d), &seg, r)?;
                info!("noisy_ts d={d}: {n} samples");
                summary.insert(format!("noisy_ts_d{d}"), n);
                total += n;
            }
            if opts.segments.len() == NOISY_TEST_SEGMENTS.count() && total != SplitSpec::NOISY_TEST_TOTAL {
                return Err(Error::Build(builder::BuildError::Cardinality {
                    split: "noisy_ts",
                    expected: SplitSpec::NOISY_TEST_TOTAL,
                    actual: total,
                }));
            }
            summary.insert("noisy_ts".into(), total);
        }
    }
    if wants(SplitName::Ood) {
        let ood = builder::build_ood_test(opts.seed, dims)?;
        check(&SplitSpec::OOD, ood.len())?;
        let n = emit(root, &manifest_path(root, SplitName::Ood), &ood, r)?;
        info!("ood: {n} samples");
        summary.insert("ood".into(), n);
    }
    Ok(summary)
}

/// Fine-tuning records for the samples of a manifest. Only synthetic (grid)
/// records can be exported.
pub fn export_ft(records: &[ManifestRecord], mode: &str) -> Result<Vec<FtRecord>, Error> {
    let mode = TargetMode::from_str(mode).map_err(|e| Error::UnknownMode(e.0))?;
    records
        .iter()
        .map(|r| match &r.coords {
            Coords::Grid(_) => Ok(FtRecord {
                id: r.id.clone(),
                image_path: r.image_path.clone(),
                prompt: r.query.clone(),
                target: prompt::ft_target(&r.coords.cells(), r.label as usize, mode),
            }),
            Coords::Points(_) => Err(Error::Manifest(format!("{}: fine-tuning export needs grid coordinates", r.id))),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchPairRecord {
    pub source_id: String,
    pub target_id: String,
    pub object: pointcount_core::ObjectSpec,
    pub source_count: u16,
    pub target_count: u16,
}

impl From<&PatchPair> for PatchPairRecord {
    fn from(p: &PatchPair) -> Self {
        PatchPairRecord {
            source_id: p.source_id.clone(),
            target_id: p.target_id.clone(),
            object: p.object,
            source_count: p.source_count,
            target_count: p.target_count,
        }
    }
}

/// Writes every ablation set: X-FT exports, black-image and leave-one-out
/// prefill manifests, and activation-patching pairs.
pub fn ablate(root: &Path, seed: u64, images: bool) -> Result<Summary, Error> {
    let dims = GridDims::default();
    let (train, val) = builder::build_base(seed, dims)?;
    let id = builder::build_id_test(seed, dims)?;
    let fix = |mut r: FtRecord| {
        r.image_path = format!("{IMAGE_DIR}/{}", r.image_path);
        r
    };
    let mut summary = Summary::new();
    let xft_train: Vec<FtRecord> = ablation::export_xft(&train).into_iter().map(fix).collect();
    let xft_val: Vec<FtRecord> = ablation::export_xft(&val).into_iter().map(fix).collect();
    summary.insert("xft_train".into(), write_jsonl(&root.join("xft_train.jsonl"), &xft_train)?);
    summary.insert("xft_val".into(), write_jsonl(&root.join("xft_val.jsonl"), &xft_val)?);

    let prefixed = |p: &ablation::PrefillSample| {
        let mut rec = ManifestRecord::from(p);
        rec.image_path = format!("{IMAGE_DIR}/{}", p.image_path);
        rec
    };
    let black: Vec<ManifestRecord> = ablation::build_black_image_set(&id).iter().map(prefixed).collect();
    summary.insert("black_image".into(), write_jsonl(&root.join("black_image.jsonl"), &black)?);
    let loo: Vec<ManifestRecord> = ablation::build_leave_one_out_set(&id).iter().map(prefixed).collect();
    summary.insert("leave_one_out".into(), write_jsonl(&root.join("leave_one_out.jsonl"), &loo)?);
    let pairs: Vec<PatchPairRecord> = ablation::build_patch_pairs(&id, seed).iter().map(PatchPairRecord::from).collect();
    summary.insert("patch_pairs".into(), write_jsonl(&root.join("patch_pairs.jsonl"), &pairs)?);
    if pairs.len() != 5_184 {
        return Err(Error::Build(builder::BuildError::Cardinality { split: "patch_pairs", expected: 5_184, actual: pairs.len() }));
    }
    if images {
        let size = PixelGeometry::STANDARD.image_size;
        write_png(&root.join(IMAGE_DIR).join(BLACK_IMAGE_PATH), &RgbImage::black(size, size))?;
    }
    Ok(summary)
}
