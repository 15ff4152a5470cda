//! Planar primitives: shoelace area, convex hull, rotating-calipers diameter.

pub type Point = [f64; 2];

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Signed shoelace area; positive for counter-clockwise rings in a y-up frame.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    acc / 2.0
}

pub fn ring_perimeter(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 2 {
        return 0.0;
    }
    (0..n).map(|i| distance(ring[i], ring[(i + 1) % n])).sum()
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Andrew's monotone chain. Returns the hull counter-clockwise (y-up) without
/// collinear points or a repeated first vertex.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Largest distance between two hull vertices, by rotating calipers over
/// antipodal pairs.
pub fn hull_diameter(hull: &[Point]) -> f64 {
    let n = hull.len();
    match n {
        0 | 1 => return 0.0,
        2 => return distance(hull[0], hull[1]),
        _ => {}
    }
    let mut best: f64 = 0.0;
    let mut j = 1;
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        // Advance j while the triangle (a, b, hull[j+1]) grows.
        while cross(a, b, hull[(j + 1) % n]).abs() > cross(a, b, hull[j]).abs() {
            j = (j + 1) % n;
        }
        best = best.max(distance(a, hull[j])).max(distance(b, hull[j]));
    }
    best
}

/// Segment intersection including touching and collinear overlap.
pub fn segments_touch(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    fn on_segment(p: Point, q: Point, r: Point) -> bool {
        q[0] <= p[0].max(r[0])
            && q[0] >= p[0].min(r[0])
            && q[1] <= p[1].max(r[1])
            && q[1] >= p[1].min(r[1])
    }
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, p1, q2))
        || (d2 == 0.0 && on_segment(q1, p2, q2))
        || (d3 == 0.0 && on_segment(p1, q1, p2))
        || (d4 == 0.0 && on_segment(p1, q2, p2))
}

/// Even-odd point-in-polygon test.
pub fn point_in_ring(p: Point, ring: &[Point]) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn bbox(ring: &[Point]) -> [f64; 4] {
    let mut b = [
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ];
    for p in ring {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].min(p[1]);
        b[2] = b[2].max(p[0]);
        b[3] = b[3].max(p[1]);
    }
    b
}

/// True when the two rings neither cross, touch, nor contain one another.
pub fn rings_disjoint(a: &[Point], b: &[Point]) -> bool {
    let (ba, bb) = (bbox(a), bbox(b));
    if ba[2] < bb[0] || bb[2] < ba[0] || ba[3] < bb[1] || bb[3] < ba[1] {
        return true;
    }
    for i in 0..a.len() {
        let (p1, p2) = (a[i], a[(i + 1) % a.len()]);
        for j in 0..b.len() {
            if segments_touch(p1, p2, b[j], b[(j + 1) % b.len()]) {
                return false;
            }
        }
    }
    !point_in_ring(a[0], b) && !point_in_ring(b[0], a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_diameter(points: &[Point]) -> f64 {
        let mut best: f64 = 0.0;
        for a in points {
            for b in points {
                best = best.max(distance(*a, *b));
            }
        }
        best
    }

    #[test]
    fn square_hull_area_and_diameter() {
        let sq = [
            [0.0, 0.0],
            [100.0, 0.0],
            [100.0, 100.0],
            [0.0, 100.0],
            [50.0, 50.0],
        ];
        let hull = convex_hull(&sq);
        assert_eq!(hull.len(), 4);
        assert_eq!(signed_area(&hull).abs(), 10000.0);
        assert!((hull_diameter(&hull) - 100.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn collinear_points() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 2);
        assert!((hull_diameter(&hull) - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn disjointness() {
        let a = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let b = [[2.0, 0.0], [3.0, 0.0], [3.0, 1.0], [2.0, 1.0]];
        let touching = [[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]];
        let inner = [[0.2, 0.2], [0.4, 0.2], [0.4, 0.4]];
        assert!(rings_disjoint(&a, &b));
        assert!(!rings_disjoint(&a, &touching));
        assert!(!rings_disjoint(&a, &inner));
    }

    proptest! {
        #[test]
        fn calipers_match_brute_force(points in proptest::collection::vec((-500i32..500, -500i32..500), 1..60)) {
            let pts: Vec<Point> = points.into_iter().map(|(x, y)| [f64::from(x), f64::from(y)]).collect();
            let hull = convex_hull(&pts);
            let fast = hull_diameter(&hull);
            let slow = brute_diameter(&pts);
            prop_assert!((fast - slow).abs() <= 1e-9 * slow.max(1.0), "{} vs {}", fast, slow);
        }

        #[test]
        fn hull_contains_every_point(points in proptest::collection::vec((-50i32..50, -50i32..50), 3..40)) {
            let pts: Vec<Point> = points.into_iter().map(|(x, y)| [f64::from(x), f64::from(y)]).collect();
            let hull = convex_hull(&pts);
            prop_assume!(hull.len() >= 3);
            for p in &pts {
                for i in 0..hull.len() {
                    prop_assert!(cross(hull[i], hull[(i + 1) % hull.len()], *p) >= -1e-9);
                }
            }
        }
    }
}
