//! Least-squares similarity alignment between corresponding landmark sets,
//! and the pixel warp plan derived from it.

use crate::error::{Error, Result};
use crate::geometry::{convex_hull, fill_convex, point_in_convex, Point};

/// Rotation + uniform scale + translation, no reflection. Stored as the
/// complex coefficient a = s*e^{i*rot} plus a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub a_re: f64,
    pub a_im: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Similarity {
            a_re: 1.0,
            a_im: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.a_re.hypot(self.a_im)
    }

    pub fn rotation(&self) -> f64 {
        self.a_im.atan2(self.a_re)
    }

    pub fn translation(&self) -> (f64, f64) {
        (self.tx, self.ty)
    }

    pub fn apply(&self, p: Point) -> Point {
        (
            self.a_re * p.0 - self.a_im * p.1 + self.tx,
            self.a_im * p.0 + self.a_re * p.1 + self.ty,
        )
    }

    pub fn inverse(&self) -> Result<Similarity> {
        let norm = self.a_re * self.a_re + self.a_im * self.a_im;
        if norm < 1e-18 {
            return Err(Error::SingularFit);
        }
        let inv_re = self.a_re / norm;
        let inv_im = -self.a_im / norm;
        Ok(Similarity {
            a_re: inv_re,
            a_im: inv_im,
            tx: -(inv_re * self.tx - inv_im * self.ty),
            ty: -(inv_im * self.tx + inv_re * self.ty),
        })
    }
}

/// Closed-form least-squares fit of src onto dst: with centered complex
/// points p~, q~, the coefficient is a = sum(q~ * conj(p~)) / sum(|p~|^2)
/// and t follows from the centroids. Point sets correspond index-wise.
pub fn fit_similarity(src: &[Point], dst: &[Point]) -> Result<Similarity> {
    if src.len() != dst.len() {
        return Err(Error::invalid(format!(
            "point count mismatch: {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::invalid("similarity fit needs at least 3 points"));
    }
    // Degenerate shapes reject: region hulls must exist on both sides.
    convex_hull(src).map_err(|_| Error::SingularFit)?;
    convex_hull(dst).map_err(|_| Error::SingularFit)?;

    let n = src.len() as f64;
    let (mpx, mpy) = src
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let (mqx, mqy) = dst
        .iter()
        .fold((0.0, 0.0), |acc, q| (acc.0 + q.0, acc.1 + q.1));
    let (mpx, mpy) = (mpx / n, mpy / n);
    let (mqx, mqy) = (mqx / n, mqy / n);

    let mut num_re = 0.0;
    let mut num_im = 0.0;
    let mut den = 0.0;
    for (p, q) in src.iter().zip(dst.iter()) {
        let (px, py) = (p.0 - mpx, p.1 - mpy);
        let (qx, qy) = (q.0 - mqx, q.1 - mqy);
        num_re += qx * px + qy * py;
        num_im += qy * px - qx * py;
        den += px * px + py * py;
    }
    if den < 1e-12 {
        return Err(Error::SingularFit);
    }
    let a_re = num_re / den;
    let a_im = num_im / den;
    if a_re.hypot(a_im) < 1e-9 {
        return Err(Error::SingularFit);
    }
    Ok(Similarity {
        a_re,
        a_im,
        tx: mqx - (a_re * mpx - a_im * mpy),
        ty: mqy - (a_im * mpx + a_re * mpy),
    })
}

/// One pixel rewrite: target raster position and the donor pixel feeding it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edit {
    pub target: (usize, usize),
    pub source: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct RegionWarp {
    pub transform: Similarity,
    pub edits: Vec<Edit>,
}

/// Plan the nearest-neighbor resample of the donor region into the target
/// region's hull. A target pixel is rewritten only when its preimage falls
/// inside the donor hull and the donor frame; everything else is untouched.
pub fn plan_warp(
    donor_points: &[Point],
    target_points: &[Point],
    donor_dims: (usize, usize),
    target_dims: (usize, usize),
) -> Result<RegionWarp> {
    let transform = fit_similarity(donor_points, target_points)?;
    let inverse = transform.inverse()?;
    let donor_hull = convex_hull(donor_points)?;
    let target_hull = convex_hull(target_points)?;
    let (th, tw) = target_dims;
    let (dh, dw) = donor_dims;
    let fill = fill_convex(&target_hull, th, tw);

    let mut edits = Vec::new();
    for i in 0..th {
        for j in 0..tw {
            if fill[i * tw + j] == 0 {
                continue;
            }
            let center = (j as f64 + 0.5, i as f64 + 0.5);
            let q = inverse.apply(center);
            if !point_in_convex(&donor_hull, q) {
                continue;
            }
            let qj = q.0.floor();
            let qi = q.1.floor();
            if qi < 0.0 || qj < 0.0 {
                continue;
            }
            let (qi, qj) = (qi as usize, qj as usize);
            if qi >= dh || qj >= dw {
                continue;
            }
            edits.push(Edit {
                target: (i, j),
                source: (qi, qj),
            });
        }
    }
    Ok(RegionWarp { transform, edits })
}
