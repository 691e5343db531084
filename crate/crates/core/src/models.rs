//! Reference "models" that produce response text without a neural network:
//! a perfect oracle, a seeded noisy oracle, and a classical pixel counter.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::metrics::GroundTruth;
use crate::parse::CoordPair;
use crate::prompt::{self, Approach, TargetMode};
use crate::render::{Renderer, RgbImage, ShapePrototype};
use crate::scene::{Color, GridCoord, GridDims, ObjectSpec, PixelGeometry, Shape};
use crate::seed::Rng;

fn point_list(points: &[CoordPair]) -> Vec<String> {
    points.iter().map(|p| format!("({:.1}, {:.1})", p.a, p.b)).collect()
}

fn truth_items(truth: &GroundTruth) -> Vec<String> {
    match truth {
        GroundTruth::Grid { cells, .. } => {
            let mut sorted = cells.clone();
            sorted.sort_unstable();
            sorted.iter().map(|c| format!("({}, {})", c.row, c.col)).collect()
        }
        GroundTruth::Points(points) => point_list(points),
    }
}

/// Always-correct response in the format of `approach`.
pub fn perfect_oracle(truth: &GroundTruth, label: i64, approach: Approach) -> String {
    match approach {
        Approach::Dc | Approach::Reasoning => format!("{label}"),
        Approach::Ptc | Approach::CoordCount => match truth {
            GroundTruth::Grid { cells, .. } => prompt::ft_target(cells, cells.len(), TargetMode::Ptc),
            GroundTruth::Points(_) => format!("Coordinates: {}. Answer: {label}", truth_items(truth).join(", ")),
        },
        Approach::Ltc => {
            let mut out = String::from("<list>\n");
            for (i, item) in truth_items(truth).iter().enumerate() {
                out.push_str(&format!("{}. {item}\n", i + 1));
            }
            out.push_str(&format!("</list>\n<answer>{label}</answer>"));
            out
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "p")]
pub enum AnswerMode {
    /// Stated count equals the number of emitted coordinates.
    Consistent,
    /// Stated count is the true label with probability `1 - p`, else off by one.
    IndependentError(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub omit_rate: f64,
    pub hallucinate_rate: f64,
    pub jitter_rate: f64,
    pub answer_mode: AnswerMode,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { omit_rate: 0.0, hallucinate_rate: 0.0, jitter_rate: 0.0, answer_mode: AnswerMode::Consistent }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    InvalidRate { name: &'static str, value: f64 },
    UnparseableQuery(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidRate { name, value } => write!(f, "{name} must lie in [0, 1], got {value}"),
            ModelError::UnparseableQuery(q) => write!(f, "cannot find a color and shape in query `{q}`"),
        }
    }
}

impl core::error::Error for ModelError {}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let p = match self.answer_mode {
            AnswerMode::IndependentError(p) => p,
            AnswerMode::Consistent => 0.0,
        };
        for (name, value) in [
            ("omit_rate", self.omit_rate),
            ("hallucinate_rate", self.hallucinate_rate),
            ("jitter_rate", self.jitter_rate),
            ("answer error rate", p),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::InvalidRate { name, value });
            }
        }
        Ok(())
    }
}

/// Point-then-count response with seeded omissions, hallucinations and
/// one-cell jitter applied to the ground truth.
pub fn noisy_oracle(cells: &[GridCoord], dims: GridDims, cfg: &NoiseConfig, rng: &mut Rng) -> String {
    let mut truth = cells.to_vec();
    truth.sort_unstable();
    let mut emitted: Vec<GridCoord> = Vec::with_capacity(truth.len());
    for cell in &truth {
        if rng.random::<f64>() < cfg.omit_rate {
            continue;
        }
        if rng.random::<f64>() < cfg.jitter_rate {
            let (r, c) = (i16::from(cell.row), i16::from(cell.col));
            let near: Vec<GridCoord> = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
                .into_iter()
                .filter(|(r, c)| *r >= 0 && *c >= 0 && *r < i16::from(dims.rows) && *c < i16::from(dims.cols))
                .map(|(r, c)| GridCoord::new(r as u8, c as u8))
                .collect();
            emitted.push(near[rng.random_range(0..near.len())]);
        } else {
            emitted.push(*cell);
        }
    }
    let expected = cfg.hallucinate_rate * truth.len() as f64;
    let whole = libm::floor(expected);
    let extra = whole as usize + usize::from(rng.random::<f64>() < expected - whole);
    let mut free: Vec<GridCoord> =
        dims.cells().filter(|c| truth.binary_search(c).is_err() && !emitted.contains(c)).collect();
    for _ in 0..extra.min(free.len()) {
        let i = rng.random_range(0..free.len());
        emitted.push(free.swap_remove(i));
    }
    emitted.sort_unstable();
    let label = truth.len();
    let answer = match cfg.answer_mode {
        AnswerMode::Consistent => emitted.len(),
        AnswerMode::IndependentError(p) => {
            if rng.random::<f64>() < p {
                if label == 0 || rng.random::<bool>() {
                    label + 1
                } else {
                    label - 1
                }
            } else {
                label
            }
        }
    };
    let list: Vec<String> = emitted.iter().map(|c| format!("({}, {})", c.row, c.col)).collect();
    format!("Coordinates: {}. Answer: {answer}", list.join(", "))
}

/// What the pixel counter should look for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CountTarget {
    Object(ObjectSpec),
    /// Every recognizable object, whatever its color or shape.
    Any,
}

/// Extracts the queried object from a counting question.
pub fn parse_query(query: &str) -> Result<CountTarget, ModelError> {
    let mut color = None;
    let mut shape = None;
    for word in query.split(|c: char| !c.is_ascii_alphabetic()).filter(|w| !w.is_empty()) {
        color = color.or_else(|| Color::from_name(word));
        shape = shape.or_else(|| Shape::from_noun(word));
    }
    match (color, shape) {
        (Some(c), Some(s)) => Ok(CountTarget::Object(ObjectSpec::new(c, s))),
        _ if query.trim().eq_ignore_ascii_case(prompt::REAL_WORLD_QUERY) => Ok(CountTarget::Any),
        _ => Err(ModelError::UnparseableQuery(query.into())),
    }
}

/// A connected blob of one palette color.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub color: Color,
    pub area: usize,
    pub bbox: (u32, u32, u32, u32),
    pub centroid: (f64, f64),
    pub shape: Option<Shape>,
    pub iou: f64,
}

/// Minimum mask IoU for a blob to be recognized as a prototype shape.
pub const SHAPE_IOU_THRESHOLD: f64 = 0.95;

/// Classical point-then-count: exact palette thresholding, 4-connected
/// labeling, prototype IoU classification, centroid-to-cell mapping.
#[derive(Clone, Debug)]
pub struct PixelCounter {
    geom: PixelGeometry,
    dims: GridDims,
    prototypes: Vec<(ShapePrototype, (u32, u32, u32, u32))>,
}

impl PixelCounter {
    pub fn new(geom: PixelGeometry, dims: GridDims) -> Self {
        let renderer = Renderer::new(geom);
        let prototypes = renderer.prototypes().iter().map(|p| (p.clone(), p.bbox())).collect();
        PixelCounter { geom, dims, prototypes }
    }

    fn classify(&self, pixels: &[(u32, u32)], bbox: (u32, u32, u32, u32)) -> (Option<Shape>, f64) {
        let mut best = (None, 0.0);
        for (proto, pb) in &self.prototypes {
            let proto_area = proto.area();
            let mut inter = 0usize;
            for &(x, y) in pixels {
                let px = i64::from(x) - i64::from(bbox.0) + i64::from(pb.0);
                let py = i64::from(y) - i64::from(bbox.1) + i64::from(pb.1);
                if px >= 0 && py >= 0 && px < i64::from(proto.size) && py < i64::from(proto.size) && proto.get(px as u32, py as u32) {
                    inter += 1;
                }
            }
            let iou = inter as f64 / (pixels.len() + proto_area - inter) as f64;
            if iou > best.1 {
                best = (Some(proto.shape), iou);
            }
        }
        if best.1 >= SHAPE_IOU_THRESHOLD {
            best
        } else {
            (None, best.1)
        }
    }

    /// Labels the 4-connected components of the requested color (or of every
    /// palette color when `color` is `None`).
    pub fn components(&self, image: &RgbImage, color: Option<Color>) -> Vec<Component> {
        let (w, h) = (image.width as usize, image.height as usize);
        let mut seen = vec![false; w * h];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        let mut pixels = Vec::new();
        let wanted = color.map(Color::rgb);
        for (idx, px) in image.pixels.chunks_exact(3).enumerate() {
            if seen[idx] || px == [0, 0, 0] {
                continue;
            }
            let rgb = [px[0], px[1], px[2]];
            if wanted.is_some_and(|w| w != rgb) {
                continue;
            }
            let Some(found) = Color::from_rgb(rgb) else { continue };
            seen[idx] = true;
            stack.push(idx);
            pixels.clear();
            while let Some(p) = stack.pop() {
                let (x, y) = (p % w, p / w);
                pixels.push((x as u32, y as u32));
                let mut visit = |q: usize| {
                    if !seen[q] && image.pixels[q * 3..q * 3 + 3] == rgb {
                        seen[q] = true;
                        stack.push(q);
                    }
                };
                if x > 0 {
                    visit(p - 1);
                }
                if x + 1 < w {
                    visit(p + 1);
                }
                if y > 0 {
                    visit(p - w);
                }
                if y + 1 < h {
                    visit(p + w);
                }
            }
            let mut bbox = (u32::MAX, u32::MAX, 0, 0);
            let (mut sx, mut sy) = (0f64, 0f64);
            for &(x, y) in &pixels {
                bbox = (bbox.0.min(x), bbox.1.min(y), bbox.2.max(x), bbox.3.max(y));
                sx += f64::from(x) + 0.5;
                sy += f64::from(y) + 0.5;
            }
            let n = pixels.len() as f64;
            let (shape, iou) = self.classify(&pixels, bbox);
            out.push(Component { color: found, area: pixels.len(), bbox, centroid: (sx / n, sy / n), shape, iou });
        }
        out
    }

    /// Grid cells holding the target, row-major sorted.
    pub fn detect(&self, image: &RgbImage, target: CountTarget) -> Vec<GridCoord> {
        let color = match target {
            CountTarget::Object(o) => Some(o.color),
            CountTarget::Any => None,
        };
        let mut cells: Vec<GridCoord> = self
            .components(image, color)
            .into_iter()
            .filter(|c| match target {
                CountTarget::Object(o) => c.shape == Some(o.shape),
                CountTarget::Any => c.shape.is_some(),
            })
            .filter_map(|c| self.geom.cell_of_px(c.centroid.0, c.centroid.1, self.dims))
            .collect();
        cells.sort_unstable();
        cells
    }

    /// Point-then-count response for `query` on `image`.
    pub fn respond(&self, image: &RgbImage, query: &str) -> Result<String, ModelError> {
        let cells = self.detect(image, parse_query(query)?);
        Ok(prompt::ft_target(&cells, cells.len(), TargetMode::Ptc))
    }
}

impl Default for PixelCounter {
    fn default() -> Self {
        PixelCounter::new(PixelGeometry::STANDARD, GridDims::default())
    }
}

/// One-shot form of [`PixelCounter::respond`].
pub fn pixel_counter(image: &RgbImage, query: &str) -> Result<String, ModelError> {
    PixelCounter::default().respond(image, query)
}
