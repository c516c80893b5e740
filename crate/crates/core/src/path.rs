//! Discretized Brownian paths with generator Δ, the coupled exit/penetration
//! detector, and the pathwise multiplicative functionals (potential integral,
//! ordered exponential, U(1) phase).
//!
//! Convention: increments are i.i.d. Gaussian with covariance `2h·Id` per
//! step, so `E|X_t - X_0|² = 2·m·t`. The within-step bridge touch probability
//! against a hyperplane at signed distances `d1`, `d2` from the endpoints is
//! `exp(-d1·d2/h)` under this normalization.

use num_complex::Complex64;
use rand::rngs::SmallRng;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::{Face, FaceGate, Region};
use crate::linalg::CMat;
use crate::potential::{GaugeForm, MatrixPotential, ScalarPotential, StepPropagator};
use crate::rng::PathStream;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PathError {
    #[error("path must start inside the region")]
    StartOutside,
    #[error("invalid step parameters: {0}")]
    BadParams(String),
}

/// A stored trajectory `X_0, X_h, …, X_{Kh}` with its seed record.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub dim: usize,
    pub h: f64,
    /// Flat row-major storage: position `k` is `positions[k*dim..(k+1)*dim]`.
    pub positions: Vec<f64>,
    pub stream: PathStream,
}

impl PathSample {
    pub fn steps(&self) -> usize {
        self.positions.len() / self.dim - 1
    }

    pub fn t_max(&self) -> f64 {
        self.steps() as f64 * self.h
    }

    #[inline]
    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    /// Generates the trajectory of `stream` started at `x0`.
    pub fn generate(stream: PathStream, x0: &[f64], t_max: f64, h: f64) -> Result<Self, PathError> {
        if !(h > 0.0) || !(t_max >= h) {
            return Err(PathError::BadParams(format!("need h > 0 and t_max >= h, got h={h}, t_max={t_max}")));
        }
        let dim = x0.len();
        let steps = (t_max / h - 1e-12).ceil() as usize;
        let mut rng = stream.increment_rng();
        let sqrt2h = (2.0 * h).sqrt();
        let mut positions = Vec::with_capacity((steps + 1) * dim);
        positions.extend_from_slice(x0);
        let mut cur = x0.to_vec();
        for _ in 0..steps {
            advance(&mut rng, &mut cur, sqrt2h);
            positions.extend_from_slice(&cur);
        }
        Ok(PathSample { dim, h, positions, stream })
    }
}

/// Draws one Euler step in place.
#[inline]
pub fn advance(rng: &mut SmallRng, x: &mut [f64], sqrt2h: f64) {
    for xi in x.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *xi += sqrt2h * g;
    }
}

/// Samples a Brownian path with generator Δ; deterministic given `seed`.
pub fn sample_path(x0: &[f64], t_max: f64, h: f64, seed: u64) -> Result<PathSample, PathError> {
    PathSample::generate(PathStream::derive(seed, 0), x0, t_max, h)
}

/// Estimated stopping times of one path; `f64::INFINITY` marks "not before
/// the horizon".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingTimes {
    pub alpha: f64,
    pub beta: f64,
}

/// Bridge touch events with probability below the uniform granularity are
/// dropped; exp(-36.74) < 2^-53.
const BRIDGE_LOG_CUTOFF: f64 = 36.74;

#[inline]
fn face_fires(face: &Face, a: &[f64], b: &[f64], h: f64, stream: &PathStream, salt: u64, step: u64) -> bool {
    let s1 = face.signed(a);
    let s2 = face.signed(b);
    let prod = s1 * s2;
    if prod > 0.0 {
        let q = prod / h;
        if q > BRIDGE_LOG_CUTOFF {
            return false;
        }
        let u = stream.bridge_uniform(salt, step, face.id);
        if u >= (-q).exp() {
            return false;
        }
    }
    // Either the supporting hyperplane was crossed outright or the bridge
    // touch fired; gate by the interpolated crossing point.
    match &face.gate {
        FaceGate::None => true,
        gate => {
            let (a1, a2) = (s1.abs(), s2.abs());
            let lam = if a1 + a2 > 0.0 { a1 / (a1 + a2) } else { 0.5 };
            match gate {
                FaceGate::Segment { a: sa, b: sb } => {
                    let px = a[0] + lam * (b[0] - a[0]);
                    let py = a[1] + lam * (b[1] - a[1]);
                    let dx = sb[0] - sa[0];
                    let dy = sb[1] - sa[1];
                    let len2 = dx * dx + dy * dy;
                    let s = ((px - sa[0]) * dx + (py - sa[1]) * dy) / len2;
                    (0.0..=1.0).contains(&s)
                }
                FaceGate::Disk { center, radius } => {
                    let p: Vec<f64> = a.iter().zip(b).map(|(ai, bi)| ai + lam * (bi - ai)).collect();
                    let d: Vec<f64> = p.iter().zip(center.iter()).map(|(pi, ci)| pi - ci).collect();
                    let z: f64 = d.iter().zip(&face.normal).map(|(di, ni)| di * ni).sum();
                    let rho2: f64 = d.iter().enumerate().map(|(i, di)| (di - z * face.normal[i]).powi(2)).sum();
                    rho2 <= radius * radius
                }
                FaceGate::None => unreachable!(),
            }
        }
    }
}

/// Incremental coupled detector for the first exit time (sees barriers) and
/// the first penetration time (blind to them). In every step the two share
/// the same bridge uniforms, so `alpha <= beta` holds by construction.
pub struct StopDetector<'a> {
    region: &'a Region,
    faces: &'a [Face],
    h: f64,
    stream: PathStream,
    salt: u64,
    prev_inside: bool,
    alpha: Option<f64>,
    beta: Option<f64>,
}

impl<'a> StopDetector<'a> {
    pub fn new(region: &'a Region, faces: &'a [Face], h: f64, stream: PathStream, salt: u64) -> Self {
        StopDetector { region, faces, h, stream, salt, prev_inside: true, alpha: None, beta: None }
    }

    /// Feeds the step `X_k = a → X_{k+1} = b`; returns true once both times
    /// are resolved.
    ///
    /// Sub-step crossings are sampled on every step that starts inside; a
    /// step that also ends outside takes the earlier of the bridge midpoint
    /// and the grid time. This keeps the detected times monotone under
    /// nested exhaustions even when a window exit and a barrier crossing
    /// fall into the same step.
    pub fn step(&mut self, k: usize, a: &[f64], b: &[f64]) -> bool {
        let b_in = self.region.membership(b);
        if self.prev_inside {
            let mut fired_alpha = false;
            let mut fired_beta = false;
            for face in self.faces {
                let need_alpha = self.alpha.is_none() && !fired_alpha;
                let need_beta = self.beta.is_none()
                    && !fired_beta
                    && face.enters_complement_interior;
                if !(need_alpha || need_beta) {
                    continue;
                }
                if face_fires(face, a, b, self.h, &self.stream, self.salt, k as u64) {
                    if need_alpha {
                        fired_alpha = true;
                    }
                    if need_beta {
                        fired_beta = true;
                    }
                }
            }
            let t_mid = (k as f64 + 0.5) * self.h;
            let t_grid = (k as f64 + 1.0) * self.h;
            if self.alpha.is_none() {
                if fired_alpha {
                    self.alpha = Some(t_mid);
                } else if !b_in {
                    self.alpha = Some(t_grid);
                }
            }
            if self.beta.is_none() {
                if fired_beta {
                    self.beta = Some(t_mid);
                } else if self.region.complement_interior(b) {
                    self.beta = Some(t_grid);
                }
            }
        } else if !b_in {
            let t_grid = (k as f64 + 1.0) * self.h;
            if self.alpha.is_none() {
                self.alpha = Some(t_grid);
            }
            if self.beta.is_none() && self.region.complement_interior(b) {
                self.beta = Some(t_grid);
            }
        }
        self.prev_inside = b_in;
        self.alpha.is_some() && self.beta.is_some()
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn times(&self) -> StoppingTimes {
        StoppingTimes {
            alpha: self.alpha.unwrap_or(f64::INFINITY),
            beta: self.beta.unwrap_or(f64::INFINITY),
        }
    }
}

/// Runs the coupled detector over a stored path. `salt` perturbs only the
/// bridge uniforms; callers comparing stopping times across regions must use
/// the same salt.
pub fn stopping_times(path: &PathSample, region: &Region, salt: u64) -> Result<StoppingTimes, PathError> {
    if !region.membership(path.position(0)) {
        return Err(PathError::StartOutside);
    }
    let faces = region.faces();
    let mut det = StopDetector::new(region, &faces, path.h, path.stream, salt);
    for k in 0..path.steps() {
        if det.step(k, path.position(k), path.position(k + 1)) {
            break;
        }
    }
    Ok(det.times())
}

/// First exit time estimate; `seed` salts the bridge decisions.
pub fn exit_time(path: &PathSample, region: &Region, seed: u64) -> Result<f64, PathError> {
    Ok(stopping_times(path, region, seed)?.alpha)
}

/// First penetration time estimate. Uses the path's own stream for bridge
/// decisions (salt 0), matching `exit_time(path, region, 0)`.
pub fn penetration_time(path: &PathSample, region: &Region) -> Result<f64, PathError> {
    Ok(stopping_times(path, region, 0)?.beta)
}

/// Pathwise state of the multiplicative functionals at the evaluation time.
#[derive(Debug, Clone)]
pub struct FunctionalState {
    /// Trapezoid value of `∫₀ᵗ V(X_s) ds` on the clamped potential.
    pub v_integral: f64,
    /// Ordered exponential; `1×1` step product in the scalar case.
    pub ordered_exp: CMat,
    /// U(1) transport `exp(-i ∫ η ∘ dX)` by the midpoint rule.
    pub phase: Complex64,
}

pub enum PotentialRef<'a> {
    Scalar(&'a ScalarPotential),
    Matrix(&'a MatrixPotential),
}

/// Step-by-step accumulator shared by the stored-path API and the streaming
/// estimators.
pub struct FunctionalAccumulator<'a> {
    h: f64,
    scalar: Option<&'a ScalarPotential>,
    v_prev: f64,
    v_integral: f64,
    scalar_product: f64,
    /// Skipped by the ensemble estimators, which weight with the trapezoid
    /// integral instead of the literal step product.
    track_scalar_product: bool,
    matrix: Option<(StepPropagator, CMat)>,
    gauge: Option<&'a GaugeForm>,
    phase: Complex64,
    rank: usize,
}

impl<'a> FunctionalAccumulator<'a> {
    pub fn new(
        h: f64,
        potential: Option<&PotentialRef<'a>>,
        gauge: Option<&'a GaugeForm>,
        x0: &[f64],
    ) -> Self {
        let (scalar, matrix, rank) = match potential {
            Some(PotentialRef::Scalar(v)) => (Some(*v), None, 1),
            Some(PotentialRef::Matrix(v)) => {
                let prop = v.step_propagator(h);
                (None, Some((prop, CMat::identity(v.rank()))), v.rank())
            }
            None => (None, None, 1),
        };
        let v_prev = scalar.map_or(0.0, |v| v.eval(x0));
        FunctionalAccumulator {
            h,
            scalar,
            v_prev,
            v_integral: 0.0,
            scalar_product: 1.0,
            track_scalar_product: true,
            matrix,
            gauge,
            phase: Complex64::ONE,
            rank,
        }
    }

    pub fn without_scalar_product(mut self) -> Self {
        self.track_scalar_product = false;
        self
    }

    #[inline]
    pub fn step(&mut self, a: &[f64], b: &[f64]) {
        if let Some(v) = self.scalar {
            let vb = v.eval(b);
            self.v_integral += 0.5 * self.h * (self.v_prev + vb);
            if self.track_scalar_product {
                self.scalar_product *= (-self.h * self.v_prev).exp();
            }
            self.v_prev = vb;
        }
        if let Some((prop, acc)) = &mut self.matrix {
            *acc = prop.apply(acc, a);
        }
        if let Some(eta) = self.gauge {
            if !matches!(eta, GaugeForm::Zero) {
                let mid: Vec<f64> = a.iter().zip(b).map(|(ai, bi)| 0.5 * (ai + bi)).collect();
                let dx: Vec<f64> = b.iter().zip(a).map(|(bi, ai)| bi - ai).collect();
                let theta = -eta.pair(&mid, &dx);
                self.phase *= Complex64::from_polar(1.0, theta);
            }
        }
    }

    pub fn finish(self) -> FunctionalState {
        let ordered_exp = match self.matrix {
            Some((_, acc)) => acc,
            None => {
                let mut m = CMat::identity(self.rank);
                if self.scalar.is_some() {
                    m.set(0, 0, Complex64::new(self.scalar_product, 0.0));
                }
                m
            }
        };
        FunctionalState { v_integral: self.v_integral, ordered_exp, phase: self.phase }
    }
}

/// Evaluates the pathwise functionals of a stored path at `t <= t_max`.
pub fn accumulate_functionals(
    path: &PathSample,
    potential: Option<PotentialRef<'_>>,
    gauge: Option<&GaugeForm>,
    t: f64,
) -> Result<FunctionalState, PathError> {
    let k_end = time_index(t, path.h)?;
    if k_end > path.steps() {
        return Err(PathError::BadParams(format!("t={t} exceeds the path horizon {}", path.t_max())));
    }
    let mut acc = FunctionalAccumulator::new(path.h, potential.as_ref(), gauge, path.position(0));
    for k in 0..k_end {
        acc.step(path.position(k), path.position(k + 1));
    }
    Ok(acc.finish())
}

/// Index of time `t` on the step grid; `t` must be an integer multiple of `h`.
pub fn time_index(t: f64, h: f64) -> Result<usize, PathError> {
    if !(h > 0.0) || t < 0.0 {
        return Err(PathError::BadParams(format!("need h > 0, t >= 0; got h={h}, t={t}")));
    }
    let k = (t / h).round();
    if (k * h - t).abs() > 1e-9 * t.max(1.0) {
        return Err(PathError::BadParams(format!("t={t} is not an integer multiple of h={h}")));
    }
    Ok(k as usize)
}
