//! Urban site map: rectangular building footprints over a `width × height`
//! meter area, the 1 m flag grid used by the mobility model, and exact
//! line-of-sight queries used by the tracer.

use alloc::vec::Vec;

use crate::geom::{Pixel, Point, Rect, Wall};

pub use crate::geom::mirror_across;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("map dimensions must be at least 1 m (got {width} x {height})")]
    BadDimensions { width: u32, height: u32 },
    #[error("building {index} has non-positive area")]
    EmptyBuilding { index: usize },
    #[error("building {index} lies outside the map boundary")]
    OutOfBounds { index: usize },
}

/// Building layout plus the derived flag grid and facade list.
///
/// Flags are stored column-major by pixel, `flags[(i-1) * height + (j-1)]`,
/// `true` for a free pixel.
#[derive(Debug, Clone)]
pub struct SiteMap {
    width: u32,
    height: u32,
    buildings: Vec<Rect>,
    walls: Vec<Wall>,
    flags: Vec<bool>,
}

impl SiteMap {
    /// Rasterizes `buildings` onto the pixel grid and extracts the four
    /// facades of each building.
    pub fn build(buildings: &[Rect], width: u32, height: u32) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::BadDimensions { width, height });
        }
        let (w, h) = (f64::from(width), f64::from(height));
        for (index, r) in buildings.iter().enumerate() {
            if !(r.x1 > r.x0 && r.y1 > r.y0) {
                return Err(MapError::EmptyBuilding { index });
            }
            if r.x0 < 0.0 || r.y0 < 0.0 || r.x1 > w || r.y1 > h {
                return Err(MapError::OutOfBounds { index });
            }
        }

        let mut flags = alloc::vec![true; width as usize * height as usize];
        for r in buildings {
            // Pixel centers inside [x0, x1] satisfy x0 <= i - 0.5 <= x1.
            let i_lo = (libm::ceil(r.x0 + 0.5) as i64).max(1);
            let i_hi = (libm::floor(r.x1 + 0.5) as i64).min(i64::from(width));
            let j_lo = (libm::ceil(r.y0 + 0.5) as i64).max(1);
            let j_hi = (libm::floor(r.y1 + 0.5) as i64).min(i64::from(height));
            for i in i_lo..=i_hi {
                for j in j_lo..=j_hi {
                    flags[(i as usize - 1) * height as usize + (j as usize - 1)] = false;
                }
            }
        }

        let mut walls = Vec::with_capacity(buildings.len() * 4);
        for r in buildings {
            let (p00, p10, p11, p01) = (
                Point::new(r.x0, r.y0),
                Point::new(r.x1, r.y0),
                Point::new(r.x1, r.y1),
                Point::new(r.x0, r.y1),
            );
            // Counter-clockwise traversal: outward normal is on the right.
            for (a, b) in [(p00, p10), (p10, p11), (p11, p01), (p01, p00)] {
                walls.extend(Wall::new(a, b, false));
            }
        }

        Ok(Self { width, height, buildings: buildings.to_vec(), walls, flags })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn buildings(&self) -> &[Rect] {
        &self.buildings
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn in_bounds(&self, p: Pixel) -> bool {
        p.x >= 1 && p.y >= 1 && p.x <= i64::from(self.width) && p.y <= i64::from(self.height)
    }

    /// Flag value of `p`; out-of-bounds pixels report `false`.
    pub fn is_free(&self, p: Pixel) -> bool {
        self.in_bounds(p) && self.flags[(p.x as usize - 1) * self.height as usize + (p.y as usize - 1)]
    }

    /// Is `p` (a continuous point) strictly inside some building?
    pub fn is_inside_building(&self, p: Point) -> bool {
        self.buildings.iter().any(|r| r.contains_open(p))
    }

    /// True iff the open segment `(a, b)` crosses no building interior.
    pub fn los_clear(&self, a: Point, b: Point) -> bool {
        !self.buildings.iter().any(|r| r.crosses_interior(a, b))
    }

    pub fn free_pixel_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_map() -> SiteMap {
        SiteMap::build(&[Rect::new(3.0, 3.0, 5.0, 5.0)], 10, 10).unwrap()
    }

    #[test]
    fn empty_map_all_free() {
        let m = SiteMap::build(&[], 10, 10).unwrap();
        assert_eq!(m.free_pixel_count(), 100);
        assert!(m.walls().is_empty());
    }

    #[test]
    fn flag_grid_matches_pixel_centers() {
        let m = block_map();
        // Hand oracle: centers i-0.5 in [3,5] => i in {4,5}; same for j.
        let blocked: [(i64, i64); 4] = [(4, 4), (4, 5), (5, 4), (5, 5)];
        for i in 1..=10 {
            for j in 1..=10 {
                let expect_free = !blocked.contains(&(i, j));
                assert_eq!(m.is_free(Pixel::new(i, j)), expect_free, "pixel ({i},{j})");
            }
        }
        assert_eq!(m.free_pixel_count(), 96);
        assert_eq!(m.walls().len(), 4);
    }

    #[test]
    fn rejects_bad_rectangles() {
        assert_eq!(
            SiteMap::build(&[Rect::new(8.0, 1.0, 11.0, 2.0)], 10, 10).unwrap_err(),
            MapError::OutOfBounds { index: 0 }
        );
        assert_eq!(
            SiteMap::build(&[Rect::new(1.0, 1.0, 1.0, 2.0)], 10, 10).unwrap_err(),
            MapError::EmptyBuilding { index: 0 }
        );
        assert!(SiteMap::build(&[], 0, 10).is_err());
    }

    #[test]
    fn is_free_out_of_bounds() {
        let m = block_map();
        assert!(!m.is_free(Pixel::new(0, 5)));
        assert!(!m.is_free(Pixel::new(11, 5)));
        assert!(!m.is_free(Pixel::new(5, 0)));
        assert!(m.is_free(Pixel::new(1, 1)));
        assert!(!m.is_free(Pixel::new(4, 4)));
    }

    #[test]
    fn los_queries() {
        let m = block_map();
        let p = Point::new(1.0, 1.0);
        assert!(m.los_clear(p, p));
        assert!(!m.los_clear(Point::new(1.0, 4.0), Point::new(9.0, 4.0)));
        // grazes the (5,3) corner
        assert!(m.los_clear(Point::new(3.0, 1.0), Point::new(7.0, 5.0)));
        assert!(m.los_clear(Point::new(1.0, 6.0), Point::new(9.0, 6.0)));
    }

    #[test]
    fn walls_face_outward() {
        let m = block_map();
        let center = Point::new(4.0, 4.0);
        for w in m.walls() {
            assert!(w.side(center) < 0.0);
            assert!((w.normal.norm() - 1.0).abs() < 1e-15);
            assert!(w.normal.dot(w.b - w.a).abs() < 1e-15);
        }
    }
}
