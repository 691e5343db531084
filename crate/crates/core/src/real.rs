//! Pointing supervision for instance-mask-annotated real images.
//!
//! Each instance mask becomes one point: the mask pixel nearest to the mask
//! centroid, normalized to `[0, 100]` and rounded to one decimal. Images are
//! split by scene, and training images are expanded with augmentations that
//! move the points along with the pixels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::parse::CoordPair;
use crate::render::RgbImage;
use crate::seed::{self, Rng};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RealError {
    EmptyMask,
    DegenerateCrop,
    InsufficientScenes { split: &'static str, wanted: usize, got: usize },
    DimensionMismatch,
}

impl fmt::Display for RealError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RealError::EmptyMask => f.write_str("instance mask has no pixels"),
            RealError::DegenerateCrop => f.write_str("augmentation removed every annotated point"),
            RealError::InsufficientScenes { split, wanted, got } => {
                write!(f, "split {split}: wanted {wanted} images, only {got} available")
            }
            RealError::DimensionMismatch => f.write_str("label image size does not match its dimensions"),
        }
    }
}

impl core::error::Error for RealError {}

/// Binary instance mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Mask { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = on;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Mask of the non-black pixels of an image.
    pub fn from_image(image: &RgbImage) -> Self {
        Mask {
            width: image.width,
            height: image.height,
            bits: image.pixels.chunks_exact(3).map(|p| p != [0, 0, 0]).collect(),
        }
    }

    /// White-on-black rendering, useful for pushing a mask through augmentation.
    pub fn to_image(&self) -> RgbImage {
        let mut img = RgbImage::black(self.width, self.height);
        for (i, on) in self.bits.iter().enumerate() {
            if *on {
                img.pixels[i * 3..i * 3 + 3].copy_from_slice(&[255, 255, 255]);
            }
        }
        img
    }
}

/// Splits a label image (0 = background) into per-instance masks, by label.
pub fn instances_from_labels(labels: &[u32], width: u32, height: u32) -> Result<Vec<(u32, Mask)>, RealError> {
    if labels.len() != width as usize * height as usize {
        return Err(RealError::DimensionMismatch);
    }
    let ids: BTreeSet<u32> = labels.iter().copied().filter(|l| *l != 0).collect();
    let mut masks: BTreeMap<u32, Mask> = ids.iter().map(|id| (*id, Mask::new(width, height))).collect();
    for (i, l) in labels.iter().enumerate() {
        if let Some(m) = masks.get_mut(l) {
            m.bits[i] = true;
        }
    }
    Ok(masks.into_iter().collect())
}

/// Point in normalized image coordinates, `[0, 100]` on both axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormPoint {
    pub x: f64,
    pub y: f64,
}

impl NormPoint {
    /// Clamps to `[0, 100]` and rounds to one decimal.
    pub fn rounded(x: f64, y: f64) -> Self {
        let r = |v: f64| libm::round(v.clamp(0.0, 100.0) * 10.0) / 10.0;
        NormPoint { x: r(x), y: r(y) }
    }

    pub fn as_pair(&self) -> CoordPair {
        CoordPair::new(self.x, self.y)
    }

    /// Nearest pixel index for an image of the given size.
    pub fn to_pixel(&self, width: u32, height: u32) -> (u32, u32) {
        let px = libm::round(self.x * f64::from(width) / 100.0) as u32;
        let py = libm::round(self.y * f64::from(height) / 100.0) as u32;
        (px.min(width.saturating_sub(1)), py.min(height.saturating_sub(1)))
    }
}

/// Mask pixel closest to the mask centroid; ties go to the first pixel in
/// row-major order.
pub fn mask_to_pixel(mask: &Mask) -> Result<(u32, u32), RealError> {
    let (mut sx, mut sy, mut n) = (0f64, 0f64, 0usize);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                sx += f64::from(x);
                sy += f64::from(y);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(RealError::EmptyMask);
    }
    let (cx, cy) = (sx / n as f64, sy / n as f64);
    let mut best = (f64::INFINITY, (0, 0));
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                let d = (f64::from(x) - cx) * (f64::from(x) - cx) + (f64::from(y) - cy) * (f64::from(y) - cy);
                if d < best.0 {
                    best = (d, (x, y));
                }
            }
        }
    }
    Ok(best.1)
}

/// Representative point of an instance mask, normalized.
pub fn mask_to_point(mask: &Mask) -> Result<NormPoint, RealError> {
    let (x, y) = mask_to_pixel(mask)?;
    Ok(NormPoint::rounded(
        100.0 * f64::from(x) / f64::from(mask.width),
        100.0 * f64::from(y) / f64::from(mask.height),
    ))
}

/// One annotated real image, as needed for splitting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub image_ref: String,
    pub scene_id: String,
    /// Scene type used for stratification (e.g. `floor`, `table`).
    pub surface: String,
    pub view: String,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPolicy {
    pub train: usize,
    pub val: usize,
    pub id_test: usize,
    pub ood_test: usize,
    pub id_counts: RangeInclusive<u32>,
    pub ood_counts: RangeInclusive<u32>,
    pub seed: u64,
}

impl SplitPolicy {
    /// 1,160 / 200 / 420 train/val/ID images with 1–10 objects, 510 OOD images with 11–20.
    pub fn reference(seed: u64) -> Self {
        SplitPolicy {
            train: 1_160,
            val: 200,
            id_test: 420,
            ood_test: 510,
            id_counts: 1..=10,
            ood_counts: 11..=20,
            seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RealSplits {
    pub train: Vec<AnnotatedImage>,
    pub val: Vec<AnnotatedImage>,
    pub id_test: Vec<AnnotatedImage>,
    pub ood_test: Vec<AnnotatedImage>,
}

/// Scene-level split. Scenes are shuffled within each surface stratum and
/// interleaved across strata, then handed out whole: OOD first (its 11–20
/// object images), then train, val and ID (their 1–10 object images). The
/// last scene of a split is trimmed to hit the target size exactly.
pub fn split_scenes(annotations: &[AnnotatedImage], policy: &SplitPolicy) -> Result<RealSplits, RealError> {
    let mut scenes: BTreeMap<&str, Vec<&AnnotatedImage>> = BTreeMap::new();
    for a in annotations {
        scenes.entry(a.scene_id.as_str()).or_default().push(a);
    }
    let mut strata: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, imgs) in &scenes {
        strata.entry(imgs[0].surface.as_str()).or_default().push(id);
    }
    let mut rng = seed::stream(policy.seed, &["real", "split"]);
    for list in strata.values_mut() {
        list.shuffle(&mut rng);
    }
    let mut order = Vec::with_capacity(scenes.len());
    let longest = strata.values().map(Vec::len).max().unwrap_or(0);
    for i in 0..longest {
        for list in strata.values() {
            if let Some(id) = list.get(i) {
                order.push(*id);
            }
        }
    }

    let mut used = vec![false; order.len()];
    let mut take = |name: &'static str, wanted: usize, counts: &RangeInclusive<u32>| {
        let mut out = Vec::with_capacity(wanted);
        for (i, id) in order.iter().enumerate() {
            if out.len() >= wanted {
                break;
            }
            if used[i] {
                continue;
            }
            let eligible: Vec<&AnnotatedImage> =
                scenes[id].iter().copied().filter(|a| counts.contains(&a.count)).collect();
            if eligible.is_empty() {
                continue;
            }
            used[i] = true;
            let room = wanted - out.len();
            out.extend(eligible.into_iter().take(room).cloned());
        }
        if out.len() < wanted {
            Err(RealError::InsufficientScenes { split: name, wanted, got: out.len() })
        } else {
            Ok(out)
        }
    };
    let ood_test = take("ood_test", policy.ood_test, &policy.ood_counts)?;
    let train = take("train", policy.train, &policy.id_counts)?;
    let val = take("val", policy.val, &policy.id_counts)?;
    let id_test = take("id_test", policy.id_test, &policy.id_counts)?;
    Ok(RealSplits { train, val, id_test, ood_test })
}

/// A concrete, already-sampled augmentation step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AugmentOp {
    /// `v' = (v - 128) * contrast + 128 + brightness`, per channel.
    ColorJitter { brightness: f64, contrast: f64 },
    Crop { x0: u32, y0: u32, width: u32, height: u32 },
    Translate { dx: i32, dy: i32 },
    /// Rotation about the image center; positive is clockwise on screen.
    Rotate { degrees: f64 },
    /// Exact clockwise quarter turns; swaps width and height for odd turns.
    QuarterTurns(u8),
    Resize { scale: f64 },
}

/// Ranges for sampling augmentations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub brightness: f64,
    pub contrast: f64,
    pub crop_min_scale: f64,
    pub translate_max: f64,
    pub rotate_max_degrees: f64,
    pub quarter_turns: bool,
    pub resize_min: f64,
    pub resize_max: f64,
    /// Augmented copies per training image, on top of the original.
    pub copies: usize,
    pub retries: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            brightness: 25.0,
            contrast: 0.2,
            crop_min_scale: 0.8,
            translate_max: 0.1,
            rotate_max_degrees: 15.0,
            quarter_turns: true,
            resize_min: 0.8,
            resize_max: 1.2,
            copies: 10,
            retries: 8,
        }
    }
}

impl AugmentConfig {
    /// Draws one augmentation recipe for an image of the given size.
    pub fn sample(&self, width: u32, height: u32, rng: &mut Rng) -> Vec<AugmentOp> {
        let mut ops = Vec::new();
        ops.push(AugmentOp::ColorJitter {
            brightness: rng.random_range(-self.brightness..=self.brightness),
            contrast: 1.0 + rng.random_range(-self.contrast..=self.contrast),
        });
        let s = rng.random_range(self.crop_min_scale..=1.0);
        let (cw, ch) = ((f64::from(width) * s) as u32, (f64::from(height) * s) as u32);
        let (cw, ch) = (cw.max(1), ch.max(1));
        ops.push(AugmentOp::Crop {
            x0: rng.random_range(0..=width - cw),
            y0: rng.random_range(0..=height - ch),
            width: cw,
            height: ch,
        });
        let (tx, ty) = ((f64::from(cw) * self.translate_max) as i32, (f64::from(ch) * self.translate_max) as i32);
        ops.push(AugmentOp::Translate { dx: rng.random_range(-tx..=tx), dy: rng.random_range(-ty..=ty) });
        if self.quarter_turns {
            let turns = rng.random_range(0..4u8);
            if turns > 0 {
                ops.push(AugmentOp::QuarterTurns(turns));
            }
        }
        ops.push(AugmentOp::Rotate { degrees: rng.random_range(-self.rotate_max_degrees..=self.rotate_max_degrees) });
        ops.push(AugmentOp::Resize { scale: rng.random_range(self.resize_min..=self.resize_max) });
        ops
    }
}

/// Point in pixel space, full precision. Pixel `i` spans `[i, i + 1)`, so a
/// point sitting on pixel `i` is carried at `i + 0.5`.
type Px = (f64, f64);

fn apply_op(image: &RgbImage, points: &[Px], op: &AugmentOp) -> (RgbImage, Vec<Px>) {
    let (w, h) = (image.width, image.height);
    let inside = |p: &Px, w: u32, h: u32| p.0 >= 0.0 && p.1 >= 0.0 && p.0 < f64::from(w) && p.1 < f64::from(h);
    match *op {
        AugmentOp::ColorJitter { brightness, contrast } => {
            let mut out = image.clone();
            for v in out.pixels.iter_mut() {
                let f = (f64::from(*v) - 128.0) * contrast + 128.0 + brightness;
                *v = libm::round(f.clamp(0.0, 255.0)) as u8;
            }
            (out, points.to_vec())
        }
        AugmentOp::Crop { x0, y0, width, height } => {
            let mut out = RgbImage::black(width, height);
            for y in 0..height {
                for x in 0..width {
                    if x0 + x < w && y0 + y < h {
                        out.put(x, y, image.get(x0 + x, y0 + y));
                    }
                }
            }
            let pts = points
                .iter()
                .map(|p| (p.0 - f64::from(x0), p.1 - f64::from(y0)))
                .filter(|p| inside(p, width, height))
                .collect();
            (out, pts)
        }
        AugmentOp::Translate { dx, dy } => {
            let mut out = RgbImage::black(w, h);
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let (sx, sy) = (x - i64::from(dx), y - i64::from(dy));
                    if sx >= 0 && sy >= 0 && sx < i64::from(w) && sy < i64::from(h) {
                        out.put(x as u32, y as u32, image.get(sx as u32, sy as u32));
                    }
                }
            }
            let pts = points
                .iter()
                .map(|p| (p.0 + f64::from(dx), p.1 + f64::from(dy)))
                .filter(|p| inside(p, w, h))
                .collect();
            (out, pts)
        }
        AugmentOp::QuarterTurns(turns) => {
            let turns = turns % 4;
            let (ow, oh) = if turns % 2 == 1 { (h, w) } else { (w, h) };
            let mut out = RgbImage::black(ow, oh);
            for y in 0..h {
                for x in 0..w {
                    let (ox, oy) = match turns {
                        1 => (h - 1 - y, x),
                        2 => (w - 1 - x, h - 1 - y),
                        3 => (y, w - 1 - x),
                        _ => (x, y),
                    };
                    out.put(ox, oy, image.get(x, y));
                }
            }
            let (fw, fh) = (f64::from(w), f64::from(h));
            let pts = points
                .iter()
                .map(|p| match turns {
                    1 => (fh - p.1, p.0),
                    2 => (fw - p.0, fh - p.1),
                    3 => (p.1, fw - p.0),
                    _ => *p,
                })
                .collect();
            (out, pts)
        }
        AugmentOp::Rotate { degrees } => {
            let t = degrees.to_radians();
            let (s, c) = (libm::sin(t), libm::cos(t));
            let (cx, cy) = (f64::from(w) / 2.0, f64::from(h) / 2.0);
            let mut out = RgbImage::black(w, h);
            for y in 0..h {
                for x in 0..w {
                    // Inverse rotation of the output pixel center.
                    let (ox, oy) = (f64::from(x) + 0.5 - cx, f64::from(y) + 0.5 - cy);
                    let sx = libm::floor(cx + ox * c + oy * s);
                    let sy = libm::floor(cy - ox * s + oy * c);
                    if sx >= 0.0 && sy >= 0.0 && sx < f64::from(w) && sy < f64::from(h) {
                        out.put(x, y, image.get(sx as u32, sy as u32));
                    }
                }
            }
            let pts = points
                .iter()
                .map(|p| {
                    let (dx, dy) = (p.0 - cx, p.1 - cy);
                    (cx + dx * c - dy * s, cy + dx * s + dy * c)
                })
                .filter(|p| inside(p, w, h))
                .collect();
            (out, pts)
        }
        AugmentOp::Resize { scale } => {
            let nw = (libm::round(f64::from(w) * scale) as u32).max(1);
            let nh = (libm::round(f64::from(h) * scale) as u32).max(1);
            let mut out = RgbImage::black(nw, nh);
            for y in 0..nh {
                let sy = ((f64::from(y) + 0.5) * f64::from(h) / f64::from(nh)) as u32;
                for x in 0..nw {
                    let sx = ((f64::from(x) + 0.5) * f64::from(w) / f64::from(nw)) as u32;
                    out.put(x, y, image.get(sx.min(w - 1), sy.min(h - 1)));
                }
            }
            let (fx, fy) = (f64::from(nw) / f64::from(w), f64::from(nh) / f64::from(h));
            let pts = points.iter().map(|p| ((p.0 - 0.5) * fx + 0.5, (p.1 - 0.5) * fy + 0.5)).collect();
            (out, pts)
        }
    }
}

/// Applies `ops` in order to the image and its points. Points that leave the
/// frame are dropped; losing all of them is a [`RealError::DegenerateCrop`].
pub fn augment(image: &RgbImage, points: &[NormPoint], ops: &[AugmentOp]) -> Result<(RgbImage, Vec<NormPoint>), RealError> {
    let mut img = image.clone();
    let mut px: Vec<Px> = points
        .iter()
        .map(|p| (p.x * f64::from(image.width) / 100.0 + 0.5, p.y * f64::from(image.height) / 100.0 + 0.5))
        .collect();
    for op in ops {
        let (next, pts) = apply_op(&img, &px, op);
        img = next;
        px = pts;
        if px.is_empty() && !points.is_empty() {
            return Err(RealError::DegenerateCrop);
        }
    }
    let out = px
        .iter()
        .map(|p| NormPoint::rounded(100.0 * (p.0 - 0.5) / f64::from(img.width), 100.0 * (p.1 - 0.5) / f64::from(img.height)))
        .collect();
    Ok((img, out))
}

/// The original plus `cfg.copies` augmented versions. A copy whose sampled
/// recipes keep dropping every point is retried up to `cfg.retries` times,
/// then skipped.
pub fn expand_training(
    image: &RgbImage,
    points: &[NormPoint],
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Vec<(RgbImage, Vec<NormPoint>, Vec<AugmentOp>)> {
    let mut out = vec![(image.clone(), points.to_vec(), Vec::new())];
    for _ in 0..cfg.copies {
        for _ in 0..=cfg.retries {
            let ops = cfg.sample(image.width, image.height, rng);
            if let Ok((img, pts)) = augment(image, points, &ops) {
                out.push((img, pts, ops));
                break;
            }
        }
    }
    out
}
