//! Open subsets of flat space with the two complement notions the stopping
//! times need: the full complement (including measure-zero barriers) and the
//! complement interior (blind to them).
//!
//! A `Region` is an open bulk shape (all of space, ball, box, half-space),
//! optionally intersected with a clip window from an exhaustion family, minus
//! a list of measure-zero barrier primitives. Points exactly on a smooth
//! boundary are classified as outside (open-set convention).

use thiserror::Error;

/// Tolerance for "on the boundary" classifications in geometric checks.
pub const DELTA_GEOM: f64 = 1e-12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GeometryError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("degenerate box: lo must be strictly below hi in every component")]
    DegenerateBox,
    #[error("normal vector must be nonzero")]
    ZeroNormal,
    #[error("unsupported dimension {0} (expected 1, 2 or 3)")]
    BadDimension(usize),
    #[error("barrier has wrong dimension for this region: {0}")]
    BarrierDimension(String),
    #[error("barrier must lie inside the closure of the region")]
    BarrierOutsideRegion,
    #[error("point lies outside the region")]
    PointOutsideRegion,
    #[error("exhaustion index must be >= 1")]
    BadExhaustionIndex,
}

/// Bulk shape of a region; all membership tests use strict inequalities.
#[derive(Debug, Clone, PartialEq)]
pub enum Bulk {
    All,
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Halfspace { normal: Vec<f64>, offset: f64 },
}

impl Bulk {
    fn contains(&self, x: &[f64]) -> bool {
        match self {
            Bulk::All => true,
            Bulk::Ball { center, radius } => dist2(x, center) < radius * radius,
            Bulk::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(&xi, (&l, &h))| l < xi && xi < h),
            Bulk::Halfspace { normal, offset } => dot(normal, x) > *offset,
        }
    }

    /// Strictly outside the closure, i.e. in the interior of the complement.
    fn strictly_outside(&self, x: &[f64]) -> bool {
        match self {
            Bulk::All => false,
            Bulk::Ball { center, radius } => dist2(x, center) > radius * radius,
            Bulk::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .any(|(&xi, (&l, &h))| xi < l || xi > h),
            Bulk::Halfspace { normal, offset } => dot(normal, x) < *offset,
        }
    }

    /// Distance from an interior point to the bulk boundary (∞ for `All`).
    fn interior_margin(&self, x: &[f64]) -> f64 {
        match self {
            Bulk::All => f64::INFINITY,
            Bulk::Ball { center, radius } => radius - dist2(x, center).sqrt(),
            Bulk::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .map(|(&xi, (&l, &h))| (xi - l).min(h - xi))
                .fold(f64::INFINITY, f64::min),
            Bulk::Halfspace { normal, offset } => dot(normal, x) - offset,
        }
    }
}

/// A measure-zero obstacle carried by a region.
///
/// Each primitive has an exact Brownian-bridge crossing formula against its
/// supporting hyperplane; bounded primitives additionally gate the crossing
/// by the interpolated crossing point.
#[derive(Debug, Clone, PartialEq)]
pub enum BarrierPrimitive {
    /// Full affine hyperplane `{x : normal·x = offset}` (a point in 1-d).
    Hyperplane { normal: Vec<f64>, offset: f64 },
    /// Closed line segment in the plane (2-d regions only).
    Segment { a: [f64; 2], b: [f64; 2] },
    /// Closed flat disk `{|x-c| <= r, n·(x-c) = 0}` (3-d regions only).
    DiskSlit { center: [f64; 3], normal: [f64; 3], radius: f64 },
}

impl BarrierPrimitive {
    pub fn segment(a: [f64; 2], b: [f64; 2]) -> Self {
        BarrierPrimitive::Segment { a, b }
    }

    pub fn hyperplane(normal: Vec<f64>, offset: f64) -> Result<Self, GeometryError> {
        let n = norm(&normal);
        if n == 0.0 {
            return Err(GeometryError::ZeroNormal);
        }
        let normal: Vec<f64> = normal.iter().map(|v| v / n).collect();
        Ok(BarrierPrimitive::Hyperplane { normal, offset: offset / n })
    }

    pub fn disk_slit(center: [f64; 3], normal: [f64; 3], radius: f64) -> Result<Self, GeometryError> {
        if radius <= 0.0 {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        let n = norm(&normal);
        if n == 0.0 {
            return Err(GeometryError::ZeroNormal);
        }
        Ok(BarrierPrimitive::DiskSlit {
            center,
            normal: [normal[0] / n, normal[1] / n, normal[2] / n],
            radius,
        })
    }

    fn dim(&self) -> Option<usize> {
        match self {
            BarrierPrimitive::Hyperplane { normal, .. } => Some(normal.len()),
            BarrierPrimitive::Segment { .. } => Some(2),
            BarrierPrimitive::DiskSlit { .. } => Some(3),
        }
    }

    /// True iff `x` lies on the primitive's point set (exact test).
    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance(x) == 0.0
    }

    /// Euclidean distance from `x` to the primitive's point set.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            BarrierPrimitive::Hyperplane { normal, offset } => (dot(normal, x) - offset).abs(),
            BarrierPrimitive::Segment { a, b } => {
                let dx = [b[0] - a[0], b[1] - a[1]];
                let len2 = dx[0] * dx[0] + dx[1] * dx[1];
                let w = [x[0] - a[0], x[1] - a[1]];
                let s = if len2 > 0.0 { ((w[0] * dx[0] + w[1] * dx[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let p = [a[0] + s * dx[0], a[1] + s * dx[1]];
                ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt()
            }
            BarrierPrimitive::DiskSlit { center, normal, radius } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let z = d[0] * normal[0] + d[1] * normal[1] + d[2] * normal[2];
                let in_plane = [d[0] - z * normal[0], d[1] - z * normal[1], d[2] - z * normal[2]];
                let rho = (in_plane[0].powi(2) + in_plane[1].powi(2) + in_plane[2].powi(2)).sqrt();
                if rho <= *radius {
                    z.abs()
                } else {
                    (z * z + (rho - radius) * (rho - radius)).sqrt()
                }
            }
        }
    }
}

/// How a crossing of a face's supporting hyperplane is gated.
#[derive(Debug, Clone)]
pub enum FaceGate {
    /// The whole hyperplane counts.
    None,
    /// Crossing point must project into the segment.
    Segment { a: [f64; 2], b: [f64; 2] },
    /// Crossing point must land within `radius` of `center` in the plane.
    Disk { center: [f64; 3], radius: f64 },
}

/// A supporting hyperplane the path engine samples bridge crossings against.
///
/// `signed(x) = normal·x - offset` is positive on the region side for
/// boundary faces; for barrier faces the sign only distinguishes sides.
#[derive(Debug, Clone)]
pub struct Face {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub gate: FaceGate,
    /// Stable identity used to derive the bridge uniform; face ids agree
    /// between a region and its exhaustion levels wherever the geometry does.
    pub id: u32,
    /// Whether crossing this face enters the complement interior (true for
    /// boundary faces, false for measure-zero barriers).
    pub enters_complement_interior: bool,
}

impl Face {
    #[inline]
    pub fn signed(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }
}

const CLIP_FACE_BASE: u32 = 64;
const BARRIER_FACE_BASE: u32 = 128;

/// The exhaustion window family: growing boxes `[-n, n]^m` or balls of
/// radius `n` about the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExhaustScheme {
    Boxes,
    Balls,
}

/// An open subset of R^m given by a bulk shape, an optional exhaustion clip
/// and a list of measure-zero barriers.
#[derive(Debug, Clone)]
pub struct Region {
    dim: usize,
    bulk: Bulk,
    clip: Option<Bulk>,
    barriers: Vec<BarrierPrimitive>,
    bounding_box: Option<(Vec<f64>, Vec<f64>)>,
    id: String,
}

impl Region {
    pub fn all(dim: usize) -> Result<Self, GeometryError> {
        check_dim(dim)?;
        Ok(Region {
            dim,
            bulk: Bulk::All,
            clip: None,
            barriers: Vec::new(),
            bounding_box: None,
            id: format!("all{}d", dim),
        })
    }

    pub fn ball(center: &[f64], radius: f64) -> Result<Self, GeometryError> {
        check_dim(center.len())?;
        if !(radius > 0.0) {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        let bb = (
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        );
        Ok(Region {
            dim: center.len(),
            bulk: Bulk::Ball { center: center.to_vec(), radius },
            clip: None,
            barriers: Vec::new(),
            bounding_box: Some(bb),
            id: format!("ball({};{})", fmt_point(center), radius),
        })
    }

    pub fn rect_box(lo: &[f64], hi: &[f64]) -> Result<Self, GeometryError> {
        check_dim(lo.len())?;
        if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
            return Err(GeometryError::DegenerateBox);
        }
        Ok(Region {
            dim: lo.len(),
            bulk: Bulk::Box { lo: lo.to_vec(), hi: hi.to_vec() },
            clip: None,
            barriers: Vec::new(),
            bounding_box: Some((lo.to_vec(), hi.to_vec())),
            id: format!("box({};{})", fmt_point(lo), fmt_point(hi)),
        })
    }

    /// Open half-space `{x : normal·x > offset}`; the normal is normalized.
    pub fn halfspace(normal: &[f64], offset: f64) -> Result<Self, GeometryError> {
        check_dim(normal.len())?;
        let n = norm(normal);
        if n == 0.0 {
            return Err(GeometryError::ZeroNormal);
        }
        let unit: Vec<f64> = normal.iter().map(|v| v / n).collect();
        let offset = offset / n;
        Ok(Region {
            dim: unit.len(),
            id: format!("halfspace({};{})", fmt_point(&unit), offset),
            bulk: Bulk::Halfspace { normal: unit, offset },
            clip: None,
            barriers: Vec::new(),
            bounding_box: None,
        })
    }

    /// Returns a copy of the region with `barrier` removed from it.
    ///
    /// The barrier must have the region's dimension and lie in the closure of
    /// the region (checked at its defining points).
    pub fn remove_barrier(&self, barrier: BarrierPrimitive) -> Result<Self, GeometryError> {
        match barrier.dim() {
            Some(d) if d == self.dim => {}
            _ => {
                return Err(GeometryError::BarrierDimension(format!(
                    "{:?} in a {}-d region",
                    barrier, self.dim
                )))
            }
        }
        let anchors: Vec<Vec<f64>> = match &barrier {
            BarrierPrimitive::Hyperplane { .. } => Vec::new(),
            BarrierPrimitive::Segment { a, b } => vec![
                a.to_vec(),
                b.to_vec(),
                vec![0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
            ],
            BarrierPrimitive::DiskSlit { center, .. } => vec![center.to_vec()],
        };
        if anchors.iter().any(|p| self.complement_interior(p)) {
            return Err(GeometryError::BarrierOutsideRegion);
        }
        let mut r = self.clone();
        r.id = format!("{} minus {}", r.id, fmt_barrier(&barrier));
        r.barriers.push(barrier);
        Ok(r)
    }

    /// `n`-th member of the exhaustion `Ω_n = Ω ∩ Υ_n` for the fixed growing
    /// window family `Υ_n` of the scheme. Barriers are inherited.
    pub fn exhaust(&self, scheme: ExhaustScheme, n: u32) -> Result<Self, GeometryError> {
        if n < 1 {
            return Err(GeometryError::BadExhaustionIndex);
        }
        let s = n as f64;
        let clip = match scheme {
            ExhaustScheme::Boxes => Bulk::Box { lo: vec![-s; self.dim], hi: vec![s; self.dim] },
            ExhaustScheme::Balls => Bulk::Ball { center: vec![0.0; self.dim], radius: s },
        };
        let mut r = self.clone();
        r.id = format!("{} clip{}", self.id, n);
        r.clip = Some(clip);
        Ok(r)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn barriers(&self) -> &[BarrierPrimitive] {
        &self.barriers
    }

    pub fn bounding_box(&self) -> Option<(&[f64], &[f64])> {
        self.bounding_box.as_ref().map(|(l, h)| (l.as_slice(), h.as_slice()))
    }

    /// Membership in the open set: inside the bulk and clip, off every barrier.
    pub fn membership(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim);
        self.bulk.contains(x)
            && self.clip.as_ref().map_or(true, |c| c.contains(x))
            && !self.barriers.iter().any(|b| b.contains(x))
    }

    /// Membership in the interior of the complement. Barriers, having empty
    /// interior, never contribute.
    pub fn complement_interior(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim);
        self.bulk.strictly_outside(x)
            || self.clip.as_ref().map_or(false, |c| c.strictly_outside(x))
    }

    /// Distance from an interior point to the nearest piece of the complement
    /// (bulk boundary, clip boundary or barrier).
    pub fn complement_distance(&self, x: &[f64]) -> f64 {
        let mut d = self.bulk.interior_margin(x);
        if let Some(c) = &self.clip {
            d = d.min(c.interior_margin(x));
        }
        for b in &self.barriers {
            d = d.min(b.distance(x));
        }
        d
    }

    /// Supporting hyperplanes for sub-step bridge sampling. Ball-shaped
    /// boundaries expose no faces; exits through them are detected on the
    /// step grid only.
    pub fn faces(&self) -> Vec<Face> {
        let mut faces = Vec::new();
        push_bulk_faces(&self.bulk, 0, &mut faces);
        if let Some(c) = &self.clip {
            push_bulk_faces(c, CLIP_FACE_BASE, &mut faces);
        }
        for (i, b) in self.barriers.iter().enumerate() {
            let id = BARRIER_FACE_BASE + i as u32;
            match b {
                BarrierPrimitive::Hyperplane { normal, offset } => faces.push(Face {
                    normal: normal.clone(),
                    offset: *offset,
                    gate: FaceGate::None,
                    id,
                    enters_complement_interior: false,
                }),
                BarrierPrimitive::Segment { a, b } => {
                    let t = [b[0] - a[0], b[1] - a[1]];
                    let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
                    let normal = vec![-t[1] / len, t[0] / len];
                    let offset = normal[0] * a[0] + normal[1] * a[1];
                    faces.push(Face {
                        normal,
                        offset,
                        gate: FaceGate::Segment { a: *a, b: *b },
                        id,
                        enters_complement_interior: false,
                    });
                }
                BarrierPrimitive::DiskSlit { center, normal, radius } => faces.push(Face {
                    normal: normal.to_vec(),
                    offset: dot(normal, center),
                    gate: FaceGate::Disk { center: *center, radius: *radius },
                    id,
                    enters_complement_interior: false,
                }),
            }
        }
        faces
    }
}

fn push_bulk_faces(bulk: &Bulk, id_base: u32, faces: &mut Vec<Face>) {
    match bulk {
        Bulk::All | Bulk::Ball { .. } => {}
        Bulk::Halfspace { normal, offset } => faces.push(Face {
            normal: normal.clone(),
            offset: *offset,
            gate: FaceGate::None,
            id: id_base,
            enters_complement_interior: true,
        }),
        Bulk::Box { lo, hi } => {
            let m = lo.len();
            for i in 0..m {
                let mut n_lo = vec![0.0; m];
                n_lo[i] = 1.0;
                faces.push(Face {
                    normal: n_lo,
                    offset: lo[i],
                    gate: FaceGate::None,
                    id: id_base + 2 * i as u32,
                    enters_complement_interior: true,
                });
                let mut n_hi = vec![0.0; m];
                n_hi[i] = -1.0;
                faces.push(Face {
                    normal: n_hi,
                    offset: -hi[i],
                    gate: FaceGate::None,
                    id: id_base + 2 * i as u32 + 1,
                    enters_complement_interior: true,
                });
            }
        }
    }
}

/// A nested exhaustion `Ω_1 ⊆ Ω_2 ⊆ … ⊆ Ω` of a parent region.
#[derive(Debug, Clone)]
pub struct Exhaustion {
    pub parent: Region,
    pub scheme: ExhaustScheme,
}

impl Exhaustion {
    pub fn new(parent: Region, scheme: ExhaustScheme) -> Self {
        Exhaustion { parent, scheme }
    }

    pub fn level(&self, n: u32) -> Result<Region, GeometryError> {
        self.parent.exhaust(self.scheme, n)
    }
}

fn check_dim(dim: usize) -> Result<(), GeometryError> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(GeometryError::BadDimension(dim))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn fmt_point(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_barrier(b: &BarrierPrimitive) -> String {
    match b {
        BarrierPrimitive::Hyperplane { normal, offset } => {
            format!("plane({};{})", fmt_point(normal), offset)
        }
        BarrierPrimitive::Segment { a, b } => {
            format!("segment({};{})", fmt_point(a), fmt_point(b))
        }
        BarrierPrimitive::DiskSlit { center, radius, .. } => {
            format!("disk({};{})", fmt_point(center), radius)
        }
    }
}
