//! JSONL manifests: one sample per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use pointcount_core::ablation::PrefillSample;
use pointcount_core::metrics::{EvalItem, GroundTruth};
use pointcount_core::parse::CoordPair;
use pointcount_core::real::NormPoint;
use pointcount_core::{GridCoord, GridDims, ObjectSpec, Sample, Scene};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Error;

/// Ground-truth positions: grid cells `[row, col]` or normalized points `[x, y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coords {
    Grid(Vec<[u8; 2]>),
    Points(Vec<[f64; 2]>),
}

impl Coords {
    pub fn len(&self) -> usize {
        match self {
            Coords::Grid(v) => v.len(),
            Coords::Points(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> Vec<GridCoord> {
        match self {
            Coords::Grid(v) => v.iter().map(|[r, c]| GridCoord::new(*r, *c)).collect(),
            Coords::Points(_) => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistractorRecord {
    pub d: usize,
    pub specs: Vec<ObjectSpec>,
    pub cells: Vec<[u8; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub split: String,
    pub image_path: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<ObjectSpec>,
    pub coords: Coords,
    pub label: u32,
    #[serde(default)]
    pub distractors: DistractorRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_id: Option<u16>,
    pub seed: u64,
    /// Grid `[rows, cols]` for synthetic samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[u8; 2]>,
    /// `[width, height]` in pixels for real images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[u32; 2]>,
    /// Assistant-side prefill the model continues from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefill: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed: Option<[u8; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

fn pair(c: &GridCoord) -> [u8; 2] {
    [c.row, c.col]
}

impl From<&Sample> for ManifestRecord {
    fn from(s: &Sample) -> Self {
        ManifestRecord {
            id: s.id(),
            split: s.split.tag().into(),
            image_path: s.image_path(),
            query: s.query(),
            object: Some(s.object),
            coords: Coords::Grid(s.coords.iter().map(pair).collect()),
            label: u32::from(s.label),
            distractors: DistractorRecord {
                d: s.distractors.count(),
                specs: s.distractors.specs.clone(),
                cells: s.distractors.cells.iter().map(pair).collect(),
            },
            chain_id: Some(s.chain_id),
            seed: s.seed,
            grid: Some([s.dims.rows, s.dims.cols]),
            image_size: None,
            prefill: None,
            removed: None,
            source_id: None,
        }
    }
}

impl From<&PrefillSample> for ManifestRecord {
    fn from(p: &PrefillSample) -> Self {
        let mut rec = ManifestRecord::from(&p.source);
        rec.source_id = Some(rec.id.clone());
        rec.id = p.id.clone();
        rec.image_path = p.image_path.clone();
        rec.prefill = Some(p.prefill.clone());
        rec.removed = p.removed.as_ref().map(pair);
        rec
    }
}

impl ManifestRecord {
    pub fn dims(&self) -> Option<GridDims> {
        self.grid.map(|[r, c]| GridDims::new(r, c))
    }

    pub fn truth(&self) -> Result<GroundTruth, Error> {
        match (&self.coords, self.dims()) {
            (Coords::Grid(_), Some(dims)) => Ok(GroundTruth::Grid { dims, cells: self.coords.cells() }),
            (Coords::Points(p), _) => Ok(GroundTruth::Points(p.iter().map(|[x, y]| CoordPair::new(*x, *y)).collect())),
            (Coords::Grid(v), None) if v.is_empty() => Ok(GroundTruth::Points(Vec::new())),
            _ => Err(Error::Manifest(format!("{}: grid coordinates without grid dims", self.id))),
        }
    }

    pub fn eval_item(&self) -> Result<EvalItem, Error> {
        Ok(EvalItem { label: i64::from(self.label), truth: self.truth()?, distractors: self.distractors.d as u32 })
    }

    /// Reconstructs the synthetic scene (targets plus distractors).
    pub fn scene(&self) -> Option<Scene> {
        let (dims, object) = (self.dims()?, self.object?);
        let mut scene = Scene::new(dims, object);
        for c in self.coords.cells() {
            scene.place(c, object).ok()?;
        }
        for (spec, [r, c]) in self.distractors.specs.iter().zip(&self.distractors.cells) {
            scene.place(GridCoord::new(*r, *c), *spec).ok()?;
        }
        Some(scene)
    }

    pub fn points(&self) -> Vec<NormPoint> {
        match &self.coords {
            Coords::Points(p) => p.iter().map(|[x, y]| NormPoint { x: *x, y: *y }).collect(),
            Coords::Grid(_) => Vec::new(),
        }
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Error> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<usize, Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::Manifest(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}
