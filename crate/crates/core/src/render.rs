//! Hard-edged rasterization of grid scenes onto a black canvas.
//!
//! Each shape has a fixed boolean prototype mask which is stamped, unmodified,
//! at the center of its cell and filled with the object's palette color.
//! There is no anti-aliasing, so every pixel is either black or exactly one
//! palette color; the pixel counter depends on that.

use alloc::vec;
use alloc::vec::Vec;

use crate::scene::{GridCoord, PixelGeometry, Scene, Shape};

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn black(width: u32, height: u32) -> Self {
        RgbImage { width, height, pixels: vec![0; width as usize * height as usize * 3] }
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }
}

/// Square boolean mask for one shape, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapePrototype {
    pub shape: Shape,
    pub size: u32,
    pub mask: Vec<bool>,
}

impl ShapePrototype {
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.mask[(y * self.size + x) as usize]
    }

    pub fn area(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bbox(&self) -> (u32, u32, u32, u32) {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..self.size {
            for x in 0..self.size {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0, y0, x1, y1)
    }
}

// cos/sin of 18 and 54 degrees.
const COS18: f64 = 0.951_056_516_295_153_5;
const SIN18: f64 = 0.309_016_994_374_947_45;
const COS54: f64 = 0.587_785_252_292_473_1;
const SIN54: f64 = 0.809_016_994_374_947_5;

/// Star outer/inner radius ratio, 32:13 at the standard 64 px tile.
const STAR_INNER_RATIO: f64 = 13.0 / 32.0;
/// Plus bar width relative to the tile, 22 px at 64 px.
const PLUS_BAR_RATIO: f64 = 22.0 / 64.0;

fn star_polygon(c: f64, outer: f64) -> [(f64, f64); 10] {
    let inner = outer * STAR_INNER_RATIO;
    // Vertex k sits at angle -90 + 36k degrees; even k are outer points.
    let dirs: [(f64, f64); 10] = [
        (0.0, -1.0),     // -90
        (COS54, -SIN54), // -54
        (COS18, -SIN18), // -18
        (COS18, SIN18),  // 18
        (COS54, SIN54),  // 54
        (0.0, 1.0),      // 90
        (-COS54, SIN54), // 126
        (-COS18, SIN18), // 162
        (-COS18, -SIN18), // 198
        (-COS54, -SIN54), // 234
    ];
    let mut pts = [(0.0, 0.0); 10];
    for (k, (dx, dy)) in dirs.iter().enumerate() {
        let r = if k % 2 == 0 { outer } else { inner };
        pts[k] = (c + dx * r, c + dy * r);
    }
    pts
}

fn inside_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Keeps only the largest 4-connected component of a square mask.
fn largest_component(mask: &mut [bool], size: u32) {
    let n = size as usize;
    let mut label = vec![0u32; n * n];
    let mut best = (0u32, 0usize);
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..n * n {
        if !mask[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut size_here = 0usize;
        while let Some(p) = stack.pop() {
            size_here += 1;
            let (x, y) = (p % n, p / n);
            let mut visit = |q: usize| {
                if mask[q] && label[q] == 0 {
                    label[q] = next;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < n {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - n);
            }
            if y + 1 < n {
                visit(p + n);
            }
        }
        if size_here > best.1 {
            best = (next, size_here);
        }
    }
    for (m, l) in mask.iter_mut().zip(label) {
        *m = *m && l == best.0;
    }
}

/// Prototype mask for `shape` on a `size`×`size` tile. Pixels are tested at
/// their centers; the mask is reduced to its largest 4-connected component.
pub fn prototype_sized(shape: Shape, size: u32) -> ShapePrototype {
    let s = f64::from(size);
    let c = s / 2.0;
    let bar = libm::round(s * PLUS_BAR_RATIO) as u32;
    let bar_lo = (size - bar) / 2;
    let star = star_polygon(c, c);
    let mut mask = vec![false; (size * size) as usize];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
            let on = match shape {
                Shape::Square => true,
                Shape::Circle => (px - c) * (px - c) + (py - c) * (py - c) <= c * c,
                // Apex at the top center, base along the bottom edge.
                Shape::Triangle => libm::fabs(px - c) <= py / 2.0,
                Shape::Star => inside_polygon(&star, px, py),
                Shape::Plus => (bar_lo..bar_lo + bar).contains(&x) || (bar_lo..bar_lo + bar).contains(&y),
            };
            mask[(y * size + x) as usize] = on;
        }
    }
    largest_component(&mut mask, size);
    ShapePrototype { shape, size, mask }
}

/// Standard 64×64 prototype.
pub fn prototype(shape: Shape) -> ShapePrototype {
    prototype_sized(shape, PixelGeometry::STANDARD.object_size)
}

/// Scene rasterizer with its prototype masks precomputed.
#[derive(Clone, Debug)]
pub struct Renderer {
    geom: PixelGeometry,
    prototypes: Vec<ShapePrototype>,
}

impl Renderer {
    pub fn new(geom: PixelGeometry) -> Self {
        let prototypes = Shape::ALL.iter().map(|&s| prototype_sized(s, geom.object_size)).collect();
        Renderer { geom, prototypes }
    }

    pub fn geometry(&self) -> PixelGeometry {
        self.geom
    }

    pub fn prototype(&self, shape: Shape) -> &ShapePrototype {
        &self.prototypes[Shape::ALL.iter().position(|s| *s == shape).unwrap_or(0)]
    }

    pub fn prototypes(&self) -> &[ShapePrototype] {
        &self.prototypes
    }

    /// Top-left pixel of the object tile in `cell`.
    pub fn tile_origin(&self, cell: GridCoord) -> (u32, u32) {
        let (cx, cy) = self.geom.cell_center_px(cell);
        let half = self.geom.object_size / 2;
        (cx - half, cy - half)
    }

    pub fn render(&self, scene: &Scene) -> RgbImage {
        let mut img = RgbImage::black(self.geom.image_size, self.geom.image_size);
        for (cell, obj) in scene.placements() {
            let proto = self.prototype(obj.shape);
            let (x0, y0) = self.tile_origin(*cell);
            let rgb = obj.color.rgb();
            for y in 0..proto.size {
                let row = &proto.mask[(y * proto.size) as usize..((y + 1) * proto.size) as usize];
                for (x, on) in row.iter().enumerate() {
                    if *on {
                        img.put(x0 + x as u32, y0 + y, rgb);
                    }
                }
            }
        }
        img
    }
}

/// Renders `scene` with freshly built prototypes.
pub fn render(scene: &Scene, geom: PixelGeometry) -> RgbImage {
    Renderer::new(geom).render(scene)
}
