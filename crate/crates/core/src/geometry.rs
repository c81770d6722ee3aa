//! Convex-hull and polygon rasterization helpers shared by the landmark,
//! segmenter, decision and synthesis code.
//!
//! Coordinates are `(x, y)` with `x` the column and `y` the row, origin at
//! the top-left corner. Rasters are row-major.

use crate::error::{Error, Result};

pub type Point = (f64, f64);

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull by Andrew's monotone chain, vertices in counter-clockwise
/// order for the image coordinate system (y grows downward).
///
/// Rejects inputs with fewer than 3 points and degenerate (collinear) sets,
/// which have no polygonal hull.
pub fn convex_hull(points: &[Point]) -> Result<Vec<Point>> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "convex hull needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("non-finite coordinate"));
    pts.dedup();

    // Lower and upper chains in the standard y-up orientation.
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    let mut hull = lower;
    hull.extend(upper);
    if hull.len() < 3 {
        return Err(Error::invalid("degenerate (collinear) point set"));
    }
    // The chains above are counter-clockwise in a y-up frame; flip for the
    // image frame so callers get CCW with y growing downward.
    hull.reverse();
    Ok(hull)
}

/// Signed polygon area (positive for CCW order in the image frame).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    // In image coordinates the y axis is flipped, so the sign convention
    // flips too.
    -acc / 2.0
}

/// True when the point lies inside or on the boundary of a convex CCW
/// polygon (image frame).
pub fn point_in_convex(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        // CCW in image frame means the interior is on the clockwise side of
        // each directed edge when y grows downward.
        if cross(a, b, p) > 1e-12 {
            return false;
        }
    }
    true
}

/// Rasterize a convex CCW polygon onto an `height x width` canvas.
///
/// A pixel is set when its center `(x + 0.5, y + 0.5)` lies inside the
/// polygon (boundary inclusive). Every module that needs a filled region
/// goes through this function so fills are bit-identical across the crate.
pub fn fill_convex(poly: &[Point], height: usize, width: usize) -> Vec<u8> {
    let mut bitmap = vec![0u8; height * width];
    if poly.len() < 3 {
        return bitmap;
    }
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in poly {
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let x0 = (min_x - 1.0).floor().max(0.0) as usize;
    let y0 = (min_y - 1.0).floor().max(0.0) as usize;
    let x1 = ((max_x + 1.0).ceil() as usize).min(width);
    let y1 = ((max_y + 1.0).ceil() as usize).min(height);
    for y in y0..y1 {
        for x in x0..x1 {
            if point_in_convex(poly, (x as f64 + 0.5, y as f64 + 0.5)) {
                bitmap[y * width + x] = 1;
            }
        }
    }
    bitmap
}

/// Convex hull of `points` rasterized onto the canvas. Shorthand used by the
/// mock segmenter, the decision areas and the synthetic renderer.
pub fn fill_hull(points: &[Point], height: usize, width: usize) -> Result<Vec<u8>> {
    let hull = convex_hull(points)?;
    Ok(fill_convex(&hull, height, width))
}

/// Centroid of a point set.
pub fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &(x, y) in points {
        sx += x;
        sy += y;
    }
    (sx / n, sy / n)
}

/// Distance from `origin` along unit direction `dir` to the boundary of a
/// convex CCW polygon containing `origin`. Returns `None` when the ray never
/// leaves through an edge (origin outside, or degenerate direction).
pub fn ray_exit_distance(poly: &[Point], origin: Point, dir: (f64, f64)) -> Option<f64> {
    let n = poly.len();
    let mut t_exit = f64::INFINITY;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let edge = (b.0 - a.0, b.1 - a.1);
        // Solve origin + t*dir on the edge line via the 2x2 system.
        let denom = dir.0 * edge.1 - dir.1 * edge.0;
        if denom.abs() < 1e-12 {
            continue;
        }
        let dx = a.0 - origin.0;
        let dy = a.1 - origin.1;
        let t = (dx * edge.1 - dy * edge.0) / denom;
        let u = (dir.0 * dy - dir.1 * dx) / -denom;
        if t > 1e-12 && (-1e-9..=1.0 + 1e-9).contains(&u) {
            t_exit = t_exit.min(t);
        }
    }
    if t_exit.is_finite() {
        Some(t_exit)
    } else {
        None
    }
}
