//! Converts a directory of mask-annotated photos into point manifests.
//!
//! Input layout: `scenes.csv` with columns `image,mask,scene_id,surface,view`
//! (paths relative to the input dir). `mask` is either a label PNG
//! (0 = background, one value per instance) or a directory of per-instance
//! binary PNGs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use pointcount_core::prompt::REAL_WORLD_QUERY;
use pointcount_core::real::{
    expand_training, instances_from_labels, mask_to_point, split_scenes, AnnotatedImage, AugmentConfig, Mask, NormPoint,
    RealError, SplitPolicy,
};
use pointcount_core::seed;
use serde::Deserialize;

use crate::dataset::{Summary, IMAGE_DIR};
use crate::image_io::{read_label_png, read_png, write_png};
use crate::manifest::{write_jsonl, Coords, DistractorRecord, ManifestRecord};
use crate::Error;

pub const SCENES_FILE: &str = "scenes.csv";

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct SceneRow {
    pub image: String,
    pub mask: String,
    pub scene_id: String,
    pub surface: String,
    pub view: String,
}

#[derive(Clone, Debug)]
pub struct AdaptOptions {
    pub input: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub policy: SplitPolicy,
    pub augment: AugmentConfig,
}

impl AdaptOptions {
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>, seed: u64) -> Self {
        AdaptOptions { input: input.into(), out: out.into(), seed, policy: SplitPolicy::reference(seed), augment: AugmentConfig::default() }
    }
}

pub fn read_scenes(input: &Path) -> Result<Vec<SceneRow>, Error> {
    let path = input.join(SCENES_FILE);
    let mut r = csv::Reader::from_path(&path).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}

/// Instance masks for one annotation, in label order.
pub fn load_instances(mask_path: &Path) -> Result<Vec<Mask>, Error> {
    if !mask_path.is_dir() {
        let (labels, w, h) = read_label_png(mask_path)?;
        return Ok(instances_from_labels(&labels, w, h)?.into_iter().map(|(_, m)| m).collect());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(mask_path)
        .map_err(|e| Error::io(mask_path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    let mut masks: Vec<Mask> = Vec::with_capacity(files.len());
    for f in &files {
        let (labels, w, h) = read_label_png(f)?;
        let mask = Mask { width: w, height: h, bits: labels.iter().map(|l| *l != 0).collect() };
        if let Some(prev) = masks.first() {
            if (prev.width, prev.height) != (w, h) {
                return Err(RealError::DimensionMismatch.into());
            }
        }
        if masks.iter().any(|m| m.bits.iter().zip(&mask.bits).any(|(a, b)| *a && *b)) {
            return Err(Error::Manifest(format!("{}: instance masks overlap", f.display())));
        }
        masks.push(mask);
    }
    Ok(masks)
}

struct Annotated {
    row: SceneRow,
    points: Vec<NormPoint>,
    size: [u32; 2],
}

fn stem(image: &str) -> String {
    Path::new(image).with_extension("").to_string_lossy().replace(['/', '\\'], "_")
}

fn record(split: &str, id: String, image_path: String, points: &[NormPoint], size: [u32; 2], seed: u64, source: Option<String>) -> ManifestRecord {
    ManifestRecord {
        id,
        split: split.into(),
        image_path,
        query: REAL_WORLD_QUERY.into(),
        object: None,
        coords: Coords::Points(points.iter().map(|p| [p.x, p.y]).collect()),
        label: points.len() as u32,
        distractors: DistractorRecord::default(),
        chain_id: None,
        seed,
        grid: None,
        image_size: Some(size),
        prefill: None,
        removed: None,
        source_id: source,
    }
}

/// Writes `real_{train,val,id,ood}.jsonl` plus images under `images/real/`.
pub fn adapt_real(opts: &AdaptOptions) -> Result<Summary, Error> {
    let rows = read_scenes(&opts.input)?;
    let mut by_ref: BTreeMap<String, Annotated> = BTreeMap::new();
    for row in rows {
        let masks = load_instances(&opts.input.join(&row.mask))?;
        let points = masks.iter().map(mask_to_point).collect::<Result<Vec<_>, _>>()?;
        let size = masks.first().map(|m| [m.width, m.height]).unwrap_or_default();
        if by_ref.contains_key(&row.image) {
            return Err(Error::Manifest(format!("image {} listed twice", row.image)));
        }
        by_ref.insert(row.image.clone(), Annotated { row, points, size });
    }
    let annotations: Vec<AnnotatedImage> = by_ref
        .values()
        .map(|a| AnnotatedImage {
            image_ref: a.row.image.clone(),
            scene_id: a.row.scene_id.clone(),
            surface: a.row.surface.clone(),
            view: a.row.view.clone(),
            count: a.points.len() as u32,
        })
        .collect();
    let splits = split_scenes(&annotations, &opts.policy)?;

    let mut summary = Summary::new();
    let load = |a: &Annotated| -> Result<pointcount_core::RgbImage, Error> {
        let img = read_png(&opts.input.join(&a.row.image))?;
        if a.size != [0, 0] && [img.width, img.height] != a.size {
            return Err(RealError::DimensionMismatch.into());
        }
        Ok(img)
    };
    for (name, list) in [("val", &splits.val), ("id", &splits.id_test), ("ood", &splits.ood_test)] {
        let split = format!("real_{name}");
        let mut recs = Vec::with_capacity(list.len());
        for ann in list {
            let a = &by_ref[&ann.image_ref];
            let s = stem(&a.row.image);
            let rel = format!("{IMAGE_DIR}/real/{name}/{s}.png");
            write_png(&opts.out.join(&rel), &load(a)?)?;
            recs.push(record(&split, format!("{split}/{s}"), rel, &a.points, a.size, opts.seed, None));
        }
        let n = write_jsonl(&opts.out.join(format!("{split}.jsonl")), &recs)?;
        info!("{split}: {n} samples");
        summary.insert(split, n);
    }

    let mut recs = Vec::new();
    for ann in &splits.train {
        let a = &by_ref[&ann.image_ref];
        let s = stem(&a.row.image);
        let mut rng = seed::stream(opts.seed, &["real", "augment", &a.row.image]);
        let copies = expand_training(&load(a)?, &a.points, &opts.augment, &mut rng);
        for (k, (img, points, _ops)) in copies.iter().enumerate() {
            let rel = format!("{IMAGE_DIR}/real/train/{s}_{k:02}.png");
            write_png(&opts.out.join(&rel), img)?;
            let source = (k > 0).then(|| format!("real_train/{s}_00"));
            recs.push(record("real_train", format!("real_train/{s}_{k:02}"), rel, points, [img.width, img.height], opts.seed, source));
        }
    }
    let n = write_jsonl(&opts.out.join("real_train.jsonl"), &recs)?;
    info!("real_train: {n} samples from {} images", splits.train.len());
    summary.insert("real_train".into(), n);
    Ok(summary)
}
