//! Grid scenes: cells, typed objects, placement and pixel geometry.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Star,
    Triangle,
    Plus,
}

impl Shape {
    pub const ALL: [Shape; 5] = [Shape::Circle, Shape::Square, Shape::Star, Shape::Triangle, Shape::Plus];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Star => "star",
            Shape::Triangle => "triangle",
            Shape::Plus => "plus",
        }
    }

    pub fn plural(self) -> &'static str {
        match self {
            Shape::Circle => "circles",
            Shape::Square => "squares",
            Shape::Star => "stars",
            Shape::Triangle => "triangles",
            Shape::Plus => "pluses",
        }
    }

    /// Accepts singular or plural nouns, case-insensitively.
    pub fn from_noun(word: &str) -> Option<Shape> {
        Shape::ALL.into_iter().find(|s| {
            word.eq_ignore_ascii_case(s.name())
                || word.eq_ignore_ascii_case(s.plural())
                // "plusses" shows up in free text
                || (*s == Shape::Plus && word.eq_ignore_ascii_case("plusses"))
        })
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Cyan,
    Magenta,
    Yellow,
    White,
}

impl Color {
    pub const ALL: [Color; 7] =
        [Color::Red, Color::Green, Color::Blue, Color::Cyan, Color::Magenta, Color::Yellow, Color::White];

    /// The six saturated colors (everything except white).
    pub const CHROMATIC: [Color; 6] =
        [Color::Red, Color::Green, Color::Blue, Color::Cyan, Color::Magenta, Color::Yellow];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Cyan => "cyan",
            Color::Magenta => "magenta",
            Color::Yellow => "yellow",
            Color::White => "white",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [255, 0, 0],
            Color::Green => [0, 255, 0],
            Color::Blue => [0, 0, 255],
            Color::Cyan => [0, 255, 255],
            Color::Magenta => [255, 0, 255],
            Color::Yellow => [255, 255, 0],
            Color::White => [255, 255, 255],
        }
    }

    pub fn from_rgb(rgb: [u8; 3]) -> Option<Color> {
        Color::ALL.into_iter().find(|c| c.rgb() == rgb)
    }

    pub fn from_name(word: &str) -> Option<Color> {
        Color::ALL.into_iter().find(|c| word.eq_ignore_ascii_case(c.name()))
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A drawable object type: shape plus color.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub color: Color,
}

impl ObjectSpec {
    pub const fn new(color: Color, shape: Shape) -> Self {
        ObjectSpec { shape, color }
    }

    /// `blue_star`-style identifier used in ids and paths.
    pub fn slug(&self) -> alloc::string::String {
        alloc::format!("{}_{}", self.color.name(), self.shape.name())
    }

    pub fn from_slug(slug: &str) -> Option<ObjectSpec> {
        let (color, shape) = slug.split_once('_')?;
        Some(ObjectSpec::new(Color::from_name(color)?, Shape::from_noun(shape)?))
    }
}

impl fmt::Display for ObjectSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.color, self.shape)
    }
}

/// Training roster: six colored pluses followed by four white shapes.
pub fn training_roster() -> Vec<ObjectSpec> {
    let mut roster: Vec<ObjectSpec> = Color::CHROMATIC.iter().map(|&c| ObjectSpec::new(c, Shape::Plus)).collect();
    roster.extend(
        [Shape::Circle, Shape::Square, Shape::Star, Shape::Triangle]
            .iter()
            .map(|&s| ObjectSpec::new(Color::White, s)),
    );
    roster
}

/// Held-out roster: every chromatic color on every non-plus shape (24 objects).
pub fn held_out_roster() -> Vec<ObjectSpec> {
    let mut roster = Vec::with_capacity(24);
    for shape in [Shape::Circle, Shape::Square, Shape::Star, Shape::Triangle] {
        for color in Color::CHROMATIC {
            roster.push(ObjectSpec::new(color, shape));
        }
    }
    roster
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub rows: u8,
    pub cols: u8,
}

impl GridDims {
    pub const fn new(rows: u8, cols: u8) -> Self {
        GridDims { rows, cols }
    }

    pub fn cell_count(&self) -> usize {
        usize::from(self.rows) * usize::from(self.cols)
    }

    pub fn contains(&self, cell: GridCoord) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    /// Row-major index of an in-bounds cell.
    pub fn index(&self, cell: GridCoord) -> usize {
        usize::from(cell.row) * usize::from(self.cols) + usize::from(cell.col)
    }

    pub fn cell_at(&self, index: usize) -> GridCoord {
        let cols = usize::from(self.cols);
        GridCoord::new((index / cols) as u8, (index % cols) as u8)
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = GridCoord> + '_ {
        (0..self.cell_count()).map(move |i| self.cell_at(i))
    }
}

impl Default for GridDims {
    fn default() -> Self {
        GridDims::new(9, 9)
    }
}

/// A grid cell. The derived ordering is row-major (row first, then column).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCoord {
    pub row: u8,
    pub col: u8,
}

impl GridCoord {
    pub const fn new(row: u8, col: u8) -> Self {
        GridCoord { row, col }
    }
}

impl fmt::Display for GridCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneError {
    OutOfBounds(GridCoord),
    CellOccupied(GridCoord),
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneError::OutOfBounds(c) => write!(f, "cell {c} is outside the grid"),
            SceneError::CellOccupied(c) => write!(f, "cell {c} already holds an object"),
        }
    }
}

impl core::error::Error for SceneError {}

/// Objects placed on a grid, at most one per cell, plus the queried target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scene {
    dims: GridDims,
    placements: BTreeMap<GridCoord, ObjectSpec>,
    target: ObjectSpec,
}

impl Scene {
    pub fn new(dims: GridDims, target: ObjectSpec) -> Self {
        Scene { dims, placements: BTreeMap::new(), target }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn target(&self) -> ObjectSpec {
        self.target
    }

    pub fn placements(&self) -> &BTreeMap<GridCoord, ObjectSpec> {
        &self.placements
    }

    pub fn object_at(&self, cell: GridCoord) -> Option<ObjectSpec> {
        self.placements.get(&cell).copied()
    }

    /// Returns a new scene with `spec` placed in `cell`.
    pub fn add_object(&self, cell: GridCoord, spec: ObjectSpec) -> Result<Scene, SceneError> {
        let mut next = self.clone();
        next.place(cell, spec)?;
        Ok(next)
    }

    /// In-place variant of [`Scene::add_object`] for builders.
    pub fn place(&mut self, cell: GridCoord, spec: ObjectSpec) -> Result<(), SceneError> {
        if !self.dims.contains(cell) {
            return Err(SceneError::OutOfBounds(cell));
        }
        if self.placements.contains_key(&cell) {
            return Err(SceneError::CellOccupied(cell));
        }
        self.placements.insert(cell, spec);
        Ok(())
    }

    /// Cells holding an object identical to the target, row-major.
    pub fn target_cells(&self) -> Vec<GridCoord> {
        self.placements.iter().filter(|(_, o)| **o == self.target).map(|(c, _)| *c).collect()
    }

    pub fn target_count(&self) -> usize {
        self.placements.values().filter(|o| **o == self.target).count()
    }
}

/// Pixel layout of the grid inside a square image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelGeometry {
    pub image_size: u32,
    pub cell_size: u32,
    pub padding: u32,
    pub object_size: u32,
}

impl PixelGeometry {
    /// 672 px image, 74 px cells, 3 px padding, 64 px objects.
    pub const STANDARD: PixelGeometry = PixelGeometry { image_size: 672, cell_size: 74, padding: 3, object_size: 64 };

    /// Whether the padded grid exactly fills the image for `dims`.
    pub fn fits(&self, dims: GridDims) -> bool {
        self.padding * 2 + self.cell_size * u32::from(dims.rows) == self.image_size
            && self.padding * 2 + self.cell_size * u32::from(dims.cols) == self.image_size
    }

    /// Integer pixel center `(x, y)` of a cell.
    pub fn cell_center_px(&self, cell: GridCoord) -> (u32, u32) {
        let half = self.cell_size / 2;
        (
            self.padding + u32::from(cell.col) * self.cell_size + half,
            self.padding + u32::from(cell.row) * self.cell_size + half,
        )
    }

    /// Cell containing pixel `(x, y)`, if it lies on the grid.
    pub fn cell_of_px(&self, x: f64, y: f64, dims: GridDims) -> Option<GridCoord> {
        let col = libm::floor((x - f64::from(self.padding)) / f64::from(self.cell_size));
        let row = libm::floor((y - f64::from(self.padding)) / f64::from(self.cell_size));
        if row < 0.0 || col < 0.0 || row >= f64::from(dims.rows) || col >= f64::from(dims.cols) {
            return None;
        }
        Some(GridCoord::new(row as u8, col as u8))
    }
}

impl Default for PixelGeometry {
    fn default() -> Self {
        PixelGeometry::STANDARD
    }
}
