//! Scalar and Hermitian matrix potentials with positive/negative part
//! decomposition, magnetic 1-forms, and the small-time heat-kernel probe that
//! separates Kato-type singularities from critically scaling ones.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::{dist2, Region};
use crate::linalg::CMat;
use crate::rng::{mix64, PathStream};

/// Default evaluation clamp near singular points.
pub const DEFAULT_CAP: f64 = 1e6;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PotentialError {
    #[error("matrix potential is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("potential is not locally integrable (singularity exponent {exponent} >= dimension {dim})")]
    NotLocallyIntegrable { exponent: f64, dim: usize },
    #[error("invalid parameter: {0}")]
    BadParam(String),
}

/// Scalar potential `V = V_+ - V_-` with singularity metadata and a clamp
/// used for pathwise evaluation.
#[derive(Debug, Clone)]
pub enum ScalarPotential {
    Zero,
    Constant(f64),
    /// `-Z/|x - center|`, clamped at `cap`.
    Coulomb { z: f64, center: Vec<f64>, cap: f64 },
    /// `|x - center|^{-power}` (nonnegative), clamped at `cap`.
    InversePower { power: f64, center: Vec<f64>, cap: f64 },
    /// `strength * 1_{M\Ω}(x)`, the boundary penalty.
    Penalty { region: Arc<Region>, strength: f64 },
}

/// `V(x) = -Z/|x - x0|` with mass at `x0`.
pub fn coulomb(z: f64, x0: &[f64]) -> ScalarPotential {
    assert!(z > 0.0, "coulomb charge must be positive");
    ScalarPotential::Coulomb { z, center: x0.to_vec(), cap: DEFAULT_CAP }
}

/// The penalizing potential `n * 1_{M\Ω}`; `eval(x) = n` exactly where
/// membership fails (barriers included), `0` inside.
pub fn indicator_penalty(region: Arc<Region>, n: f64) -> ScalarPotential {
    assert!(n >= 0.0, "penalty strength must be nonnegative");
    ScalarPotential::Penalty { region, strength: n }
}

impl ScalarPotential {
    pub fn inverse_power(power: f64, center: &[f64]) -> Self {
        assert!(power > 0.0);
        ScalarPotential::InversePower { power, center: center.to_vec(), cap: DEFAULT_CAP }
    }

    pub fn with_cap(self, cap: f64) -> Self {
        match self {
            ScalarPotential::Coulomb { z, center, .. } => ScalarPotential::Coulomb { z, center, cap },
            ScalarPotential::InversePower { power, center, .. } => {
                ScalarPotential::InversePower { power, center, cap }
            }
            other => other,
        }
    }

    pub fn cap(&self) -> f64 {
        match self {
            ScalarPotential::Coulomb { cap, .. } | ScalarPotential::InversePower { cap, .. } => *cap,
            _ => f64::INFINITY,
        }
    }

    /// Clamped pointwise value `V(x)`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.positive_part(x) - self.negative_part(x)
    }

    /// Clamped `V_+(x) >= 0`.
    #[inline]
    pub fn positive_part(&self, x: &[f64]) -> f64 {
        match self {
            ScalarPotential::Zero | ScalarPotential::Coulomb { .. } => 0.0,
            ScalarPotential::Constant(c) => c.max(0.0),
            ScalarPotential::InversePower { power, center, cap } => {
                let r2 = dist2(x, center);
                if r2 == 0.0 {
                    *cap
                } else {
                    r2.powf(-power / 2.0).min(*cap)
                }
            }
            ScalarPotential::Penalty { region, strength } => {
                if region.membership(x) {
                    0.0
                } else {
                    *strength
                }
            }
        }
    }

    /// Clamped `V_-(x) >= 0`.
    #[inline]
    pub fn negative_part(&self, x: &[f64]) -> f64 {
        match self {
            ScalarPotential::Constant(c) => (-c).max(0.0),
            ScalarPotential::Coulomb { z, center, cap } => {
                let r = dist2(x, center).sqrt();
                if r == 0.0 {
                    *cap
                } else {
                    (z / r).min(*cap)
                }
            }
            _ => 0.0,
        }
    }

    /// Unclamped `|V(x)|`, used by the heat-kernel probe.
    #[inline]
    pub fn abs_unclamped(&self, x: &[f64]) -> f64 {
        match self {
            ScalarPotential::Zero => 0.0,
            ScalarPotential::Constant(c) => c.abs(),
            ScalarPotential::Coulomb { z, center, .. } => z / dist2(x, center).sqrt(),
            ScalarPotential::InversePower { power, center, .. } => {
                dist2(x, center).powf(-power / 2.0)
            }
            ScalarPotential::Penalty { region, strength } => {
                if region.membership(x) {
                    0.0
                } else {
                    *strength
                }
            }
        }
    }

    /// Singular points with their local exponent `p` (`|V| ~ |x-x0|^{-p}`).
    pub fn singularities(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            ScalarPotential::Coulomb { center, .. } => vec![(center.clone(), 1.0)],
            ScalarPotential::InversePower { power, center, .. } => {
                vec![(center.clone(), *power)]
            }
            _ => Vec::new(),
        }
    }

    pub fn id(&self) -> String {
        match self {
            ScalarPotential::Zero => "zero".into(),
            ScalarPotential::Constant(c) => format!("constant({c})"),
            ScalarPotential::Coulomb { z, center, cap } => {
                format!("coulomb(Z={z};x0={};cap={cap:e})", join(center))
            }
            ScalarPotential::InversePower { power, center, cap } => {
                format!("invpow(p={power};x0={};cap={cap:e})", join(center))
            }
            ScalarPotential::Penalty { region, strength } => {
                format!("penalty(n={strength};{})", region.id())
            }
        }
    }
}

fn join(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Kato-style decomposition: the stored parts, `max(V,0)`/`max(-V,0)`.
pub fn decompose(v: &ScalarPotential) -> (impl Fn(&[f64]) -> f64 + '_, impl Fn(&[f64]) -> f64 + '_) {
    (move |x: &[f64]| v.positive_part(x), move |x: &[f64]| v.negative_part(x))
}

/// Hermitian matrix potential on the trivial rank-`k` bundle.
#[derive(Clone)]
pub struct MatrixPotential {
    rank: usize,
    kind: MatrixKind,
    pub lower_bound: Option<f64>,
}

#[derive(Clone)]
enum MatrixKind {
    Constant(CMat),
    Piecewise { region: Arc<Region>, inside: CMat, outside: CMat },
    Callback(Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>),
}

impl std::fmt::Debug for MatrixPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MatrixPotential(rank={})", self.rank)
    }
}

const HERMITIAN_TOL: f64 = 1e-12;

impl MatrixPotential {
    pub fn constant(v: CMat) -> Result<Self, PotentialError> {
        let dev = v.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(PotentialError::NotHermitian(dev));
        }
        Ok(MatrixPotential { rank: v.n, kind: MatrixKind::Constant(v), lower_bound: None })
    }

    pub fn piecewise(region: Arc<Region>, inside: CMat, outside: CMat) -> Result<Self, PotentialError> {
        for m in [&inside, &outside] {
            let dev = m.hermitian_deviation();
            if dev > HERMITIAN_TOL {
                return Err(PotentialError::NotHermitian(dev));
            }
        }
        if inside.n != outside.n {
            return Err(PotentialError::BadParam("piecewise ranks differ".into()));
        }
        Ok(MatrixPotential {
            rank: inside.n,
            kind: MatrixKind::Piecewise { region, inside, outside },
            lower_bound: None,
        })
    }

    /// Potential given by a callback; hermiticity is spot-checked at `probe`.
    pub fn from_callback(
        rank: usize,
        f: Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>,
        probe: &[f64],
    ) -> Result<Self, PotentialError> {
        let v = f(probe);
        if v.n != rank {
            return Err(PotentialError::BadParam("callback rank mismatch".into()));
        }
        let dev = v.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(PotentialError::NotHermitian(dev));
        }
        Ok(MatrixPotential { rank, kind: MatrixKind::Callback(f), lower_bound: None })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        match &self.kind {
            MatrixKind::Constant(v) => v.clone(),
            MatrixKind::Piecewise { region, inside, outside } => {
                if region.membership(x) {
                    inside.clone()
                } else {
                    outside.clone()
                }
            }
            MatrixKind::Callback(f) => f(x),
        }
    }

    /// One-step propagator `exp(-h V(x))`, with the constant and piecewise
    /// cases precomputed so the path loop only multiplies.
    pub fn step_propagator(&self, h: f64) -> StepPropagator {
        let scale = Complex64::new(-h, 0.0);
        match &self.kind {
            MatrixKind::Constant(v) => StepPropagator::Constant(v.scale(scale).exp()),
            MatrixKind::Piecewise { region, inside, outside } => StepPropagator::Piecewise {
                region: region.clone(),
                inside: inside.scale(scale).exp(),
                outside: outside.scale(scale).exp(),
            },
            MatrixKind::Callback(f) => StepPropagator::Callback { f: f.clone(), h },
        }
    }

    pub fn id(&self) -> String {
        match &self.kind {
            MatrixKind::Constant(_) => format!("matrix_constant(k={})", self.rank),
            MatrixKind::Piecewise { region, .. } => {
                format!("matrix_piecewise(k={};{})", self.rank, region.id())
            }
            MatrixKind::Callback(_) => format!("matrix_callback(k={})", self.rank),
        }
    }
}

pub enum StepPropagator {
    Constant(CMat),
    Piecewise { region: Arc<Region>, inside: CMat, outside: CMat },
    Callback { f: Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>, h: f64 },
}

impl StepPropagator {
    pub fn at(&self, x: &[f64]) -> CMat {
        match self {
            StepPropagator::Constant(m) => m.clone(),
            StepPropagator::Piecewise { region, inside, outside } => {
                if region.membership(x) {
                    inside.clone()
                } else {
                    outside.clone()
                }
            }
            StepPropagator::Callback { f, h } => f(x).scale(Complex64::new(-*h, 0.0)).exp(),
        }
    }

    /// Right-multiplies `acc <- acc * exp(-h V(x))` without reallocating in
    /// the precomputed cases.
    pub fn apply(&self, acc: &CMat, x: &[f64]) -> CMat {
        match self {
            StepPropagator::Constant(m) => acc.mul(m),
            StepPropagator::Piecewise { region, inside, outside } => {
                if region.membership(x) {
                    acc.mul(inside)
                } else {
                    acc.mul(outside)
                }
            }
            StepPropagator::Callback { .. } => acc.mul(&self.at(x)),
        }
    }
}

/// Real magnetic 1-form `η = Σ η_j dx^j`.
#[derive(Debug, Clone, PartialEq)]
pub enum GaugeForm {
    Zero,
    /// Constant coefficients; the exact form `dφ` of a linear `φ(x) = a·x`.
    Constant(Vec<f64>),
    /// `η = (B/2)(-y dx + x dy)` in the plane: uniform field of strength `B`.
    AxiallyLinear { b: f64 },
}

impl GaugeForm {
    /// Pairing `η(x)·v`.
    #[inline]
    pub fn pair(&self, x: &[f64], v: &[f64]) -> f64 {
        match self {
            GaugeForm::Zero => 0.0,
            GaugeForm::Constant(a) => a.iter().zip(v).map(|(ai, vi)| ai * vi).sum(),
            GaugeForm::AxiallyLinear { b } => 0.5 * b * (-x[1] * v[0] + x[0] * v[1]),
        }
    }

    pub fn id(&self) -> String {
        match self {
            GaugeForm::Zero => "none".into(),
            GaugeForm::Constant(a) => format!("gauge_const({})", join(a)),
            GaugeForm::AxiallyLinear { b } => format!("gauge_linear(B={b})"),
        }
    }
}

/// Deterministic importance-sampled estimate of the heat-kernel convolution
///
/// ```text
/// sup over probes of  ∫ (4πt)^{-m/2} exp(-|x-y|²/(4t)) |w(y)| dy
/// ```
///
/// The Gaussian factor is exactly the sampling density, so a constant
/// potential is reproduced without quadrature error. Potentials whose
/// singularity exponent reaches the ambient dimension are rejected as not
/// locally integrable.
pub fn kato_norm(
    w: &ScalarPotential,
    t: f64,
    probes: &[Vec<f64>],
    quadrature_n: usize,
    seed: u64,
) -> Result<f64, PotentialError> {
    if !(t > 0.0) {
        return Err(PotentialError::BadParam("t must be positive".into()));
    }
    if quadrature_n < 1000 {
        return Err(PotentialError::BadParam("quadrature_n must be >= 1000".into()));
    }
    if probes.is_empty() {
        return Err(PotentialError::BadParam("probe set must be nonempty".into()));
    }
    let dim = probes[0].len();
    for (_, p) in w.singularities() {
        if p >= dim as f64 {
            return Err(PotentialError::NotLocallyIntegrable { exponent: p, dim });
        }
    }
    let sigma = (2.0 * t).sqrt();
    let mut worst = 0.0f64;
    for (pi, x) in probes.iter().enumerate() {
        let stream = PathStream::derive(mix64(seed ^ (pi as u64).wrapping_mul(0x9E37)), 0);
        let mut rng = stream.increment_rng();
        let mut sum = 0.0f64;
        let mut y = vec![0.0f64; dim];
        for _ in 0..quadrature_n {
            for (yi, xi) in y.iter_mut().zip(x) {
                let g: f64 = rng.sample(StandardNormal);
                *yi = xi + sigma * g;
            }
            let mut v = w.abs_unclamped(&y);
            if !v.is_finite() {
                v = 1e12; // sample landed exactly on a singular point
            }
            sum += v;
        }
        worst = worst.max(sum / quadrature_n as f64);
    }
    Ok(worst)
}

/// One row of the small-time probe: the raw convolution at horizon `t` and
/// the scale-invariant combination `t * raw`, which tends to zero exactly for
/// Kato-type singularities and sits at a positive plateau for the critical
/// `|x|^{-2}` scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct KatoRow {
    pub t: f64,
    pub raw: f64,
    pub scaled: f64,
}

pub fn kato_probe_table(
    w: &ScalarPotential,
    times: &[f64],
    probes: &[Vec<f64>],
    quadrature_n: usize,
    seed: u64,
) -> Result<Vec<KatoRow>, PotentialError> {
    times
        .iter()
        .map(|&t| {
            let raw = kato_norm(w, t, probes, quadrature_n, seed)?;
            Ok(KatoRow { t, raw, scaled: t * raw })
        })
        .collect()
}
