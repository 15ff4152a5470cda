//! Pixel-grid measurements: polygon rasterization, 8-connected components and
//! outer-boundary tracing with a corner-count perimeter estimator.

use super::hull::{point_in_ring, Point};

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[self.index(x, y)]
    }

    /// Out-of-range coordinates read as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && x < i64::from(self.width)
            && y < i64::from(self.height)
            && self.get(x as u32, y as u32)
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = self.index(x, y);
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn union_with(&mut self, other: &Bitmap) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w as usize) as u32, (i / w as usize) as u32))
    }
}

/// Fills every pixel whose centre lies inside any of the rings.
pub fn rasterize_polygons(rings: &[Vec<Point>], width: u32, height: u32) -> Bitmap {
    let mut bm = Bitmap::new(width, height);
    for ring in rings {
        if ring.len() < 3 {
            continue;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in ring {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        let xs = (x0.floor().max(0.0)) as u32;
        let ys = (y0.floor().max(0.0)) as u32;
        let xe = (x1.ceil().min(f64::from(width))) as u32;
        let ye = (y1.ceil().min(f64::from(height))) as u32;
        for y in ys..ye {
            for x in xs..xe {
                if !bm.get(x, y) && point_in_ring([f64::from(x) + 0.5, f64::from(y) + 0.5], ring) {
                    bm.set(x, y, true);
                }
            }
        }
    }
    bm
}

/// 8-connected components, each as a list of pixels in raster order.
pub fn components(mask: &Bitmap) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = (mask.width(), mask.height());
    let mut label = vec![usize::MAX; w as usize * h as usize];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let idx = y as usize * w as usize + x as usize;
            if !mask.get(x, y) || label[idx] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut pixels = Vec::new();
            let mut stack = vec![(x, y)];
            label[idx] = id;
            while let Some((cx, cy)) = stack.pop() {
                pixels.push((cx, cy));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (i64::from(cx) + dx, i64::from(cy) + dy);
                        if mask.get_signed(nx, ny) {
                            let nidx = ny as usize * w as usize + nx as usize;
                            if label[nidx] == usize::MAX {
                                label[nidx] = id;
                                stack.push((nx as u32, ny as u32));
                            }
                        }
                    }
                }
            }
            pixels.sort_by_key(|&(px, py)| (py, px));
            out.push(pixels);
        }
    }
    out
}

/// Chain-code directions, anticlockwise from east, with y pointing down.
const DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Outer boundary of the component containing `start`, which must be its
/// first pixel in raster order. Returns boundary pixels and the closed chain
/// code between consecutive boundary pixels.
pub fn trace_outer_boundary(mask: &Bitmap, start: (u32, u32)) -> (Vec<(u32, u32)>, Vec<u8>) {
    let p0 = (i64::from(start.0), i64::from(start.1));
    let mut boundary = vec![p0];
    let mut codes: Vec<u8> = Vec::new();
    let mut current = p0;
    let mut dir: usize = 7;
    loop {
        let first = if dir.is_multiple_of(2) {
            (dir + 7) % 8
        } else {
            (dir + 6) % 8
        };
        let mut found = None;
        for k in 0..8 {
            let d = (first + k) % 8;
            let (nx, ny) = (current.0 + DIRS[d].0, current.1 + DIRS[d].1);
            if mask.get_signed(nx, ny) {
                found = Some((d, (nx, ny)));
                break;
            }
        }
        let Some((d, next)) = found else {
            // Isolated pixel.
            return (vec![start], Vec::new());
        };
        dir = d;
        codes.push(d as u8);
        // Stop when the step P(n-1) -> P(n) repeats P0 -> P1.
        if boundary.len() >= 2 && current == p0 && next == boundary[1] {
            codes.pop();
            boundary.pop();
            break;
        }
        boundary.push(next);
        current = next;
        if boundary.len() > 4 * (mask.width() as usize * mask.height() as usize) + 8 {
            unreachable!("boundary tracing failed to close");
        }
    }
    let pixels = boundary
        .into_iter()
        .map(|(x, y)| (x as u32, y as u32))
        .collect();
    (pixels, codes)
}

/// Corner-count estimate of the length of a closed chain: axis steps weigh
/// 0.980, diagonal steps 1.406, and each direction change subtracts 0.091.
/// Nearly unbiased for digitized straight and curved boundaries.
pub fn chain_length(codes: &[u8]) -> f64 {
    if codes.is_empty() {
        return 0.0;
    }
    let even = codes.iter().filter(|c| *c % 2 == 0).count() as f64;
    let odd = codes.len() as f64 - even;
    let corners = (0..codes.len())
        .filter(|&i| codes[i] != codes[(i + 1) % codes.len()])
        .count() as f64;
    0.980 * even + 1.406 * odd - 0.091 * corners
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterOutline {
    /// Centres of outer-boundary pixels across all components.
    pub boundary_centres: Vec<Point>,
    /// Corners of outer-boundary pixels; their hull contains the mask.
    pub boundary_corners: Vec<Point>,
    /// Summed outer contour length over components.
    pub perimeter: f64,
}

pub fn outline(mask: &Bitmap) -> RasterOutline {
    let mut centres = Vec::new();
    let mut corners = Vec::new();
    let mut perimeter = 0.0;
    for comp in components(mask) {
        let (pixels, codes) = trace_outer_boundary(mask, comp[0]);
        if pixels.len() > 2 {
            perimeter += chain_length(&codes);
        }
        for (x, y) in pixels {
            let (fx, fy) = (f64::from(x), f64::from(y));
            centres.push([fx + 0.5, fy + 0.5]);
            corners.extend([
                [fx, fy],
                [fx + 1.0, fy],
                [fx, fy + 1.0],
                [fx + 1.0, fy + 1.0],
            ]);
        }
    }
    RasterOutline {
        boundary_centres: centres,
        boundary_corners: corners,
        perimeter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: u32, h: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> Bitmap {
        let mut bm = Bitmap::new(w, h);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                bm.set(x, y, true);
            }
        }
        bm
    }

    #[test]
    fn single_pixel_boundary() {
        let bm = rect(5, 5, 2, 2, 1, 1);
        let (px, codes) = trace_outer_boundary(&bm, (2, 2));
        assert_eq!(px, vec![(2, 2)]);
        assert!(codes.is_empty());
    }

    #[test]
    fn rectangle_boundary_is_its_rim() {
        let bm = rect(12, 12, 1, 1, 10, 5);
        let (px, codes) = trace_outer_boundary(&bm, (1, 1));
        // Rim of a 10x5 block: 2*10 + 2*3 pixels.
        assert_eq!(px.len(), 26);
        assert_eq!(codes.len(), 26);
        assert!(codes.iter().all(|c| c % 2 == 0));
    }

    #[test]
    fn concave_shape_closes() {
        // A "U" with a one-pixel-wide neck.
        let mut bm = Bitmap::new(8, 8);
        for (x, y) in [
            (1, 1),
            (1, 2),
            (1, 3),
            (2, 3),
            (3, 3),
            (3, 2),
            (3, 1),
            (5, 5),
            (6, 6),
        ] {
            bm.set(x, y, true);
        }
        let comps = components(&bm);
        assert_eq!(comps.len(), 2);
        let (px, codes) = trace_outer_boundary(&bm, comps[0][0]);
        // Thin arms are walked out and back; the inner corners are cut diagonally.
        assert_eq!(px.len(), 10);
        assert_eq!(codes.len(), 10);
        let distinct: std::collections::HashSet<_> = px.iter().collect();
        assert_eq!(distinct.len(), 7);
        let (px2, _) = trace_outer_boundary(&bm, comps[1][0]);
        assert_eq!(px2.len(), 2);
    }

    #[test]
    fn holes_are_ignored() {
        let mut bm = rect(10, 10, 1, 1, 7, 7);
        bm.set(4, 4, false);
        let (px, _) = trace_outer_boundary(&bm, (1, 1));
        assert_eq!(px.len(), 24);
    }

    #[test]
    fn rasterized_square_covers_expected_pixels() {
        let sq = vec![vec![[2.0, 2.0], [7.0, 2.0], [7.0, 7.0], [2.0, 7.0]]];
        assert_eq!(rasterize_polygons(&sq, 10, 10).count(), 25);
    }
}
