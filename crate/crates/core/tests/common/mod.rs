//! Independent oracles for the integration tests: quadrature, eigen-series,
//! closed forms and a brute-force replay of the stopping-time detection.
//! Nothing here reuses the library's solver paths.

#![allow(dead_code)]

use kaclab_core::{Face, FaceGate, PathSample, PathStream, Region};

/// `erf(x)` by adaptive-free Simpson quadrature of the Gaussian.
pub fn erf_oracle(x: f64) -> f64 {
    let n = 20_001; // odd number of nodes
    let a = 0.0;
    let b = x;
    let h = (b - a) / (n - 1) as f64;
    let f = |s: f64| (-s * s).exp();
    let mut sum = f(a) + f(b);
    for i in 1..n - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    (2.0 / std::f64::consts::PI.sqrt()) * sum * h / 3.0
}

/// Survival probability of Brownian motion with generator Δ on the half-line
/// `(0,∞)` from `x` at time `t`, by the method-of-images kernel:
/// `∫₀^∞ (4πt)^{-1/2} (e^{-(x-y)²/4t} - e^{-(x+y)²/4t}) dy = erf(x/(2√t))`.
pub fn halfline_survival_oracle(x: f64, t: f64) -> f64 {
    erf_oracle(x / (2.0 * t.sqrt()))
}

/// Dirichlet eigen-series survival on the unit interval from `x` at time `t`
/// (generator Δ, eigenvalues `k²π²`).
pub fn interval_survival_oracle(x: f64, t: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut s = 0.0;
    for k in (1..200).step_by(2) {
        let kf = k as f64;
        s += 4.0 / (kf * pi) * (kf * pi * x).sin() * (-kf * kf * pi * pi * t).exp();
    }
    s
}

/// Radial Simpson quadrature of the heat-kernel convolution of `r^{-p}`
/// about the probe point in 3-d:
/// `∫₀^∞ (4πt)^{-3/2} e^{-r²/4t} r^{-p} 4πr² dr`.
pub fn kato_radial_oracle(p: f64, t: f64) -> f64 {
    let rmax = 40.0 * t.sqrt();
    let n = 400_001;
    let h = rmax / (n - 1) as f64;
    let c = (4.0 * std::f64::consts::PI * t).powf(-1.5) * 4.0 * std::f64::consts::PI;
    let f = |r: f64| {
        if r == 0.0 {
            0.0
        } else {
            c * (-r * r / (4.0 * t)).exp() * r.powf(2.0 - p)
        }
    };
    let mut sum = f(0.0) + f(rmax);
    for i in 1..n - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    sum * h / 3.0
}

/// Dense symmetric eigensolver by cyclic Jacobi rotations (oracle only).
/// Returns eigenvalues ascending and eigenvectors as rows.
pub fn jacobi_eig(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(a[i][j].abs());
            }
        }
        if off < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[p][k];
                    let vkq = v[q][k];
                    v[p][k] = c * vkp - s * vkq;
                    v[q][k] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x][x].partial_cmp(&a[y][y]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let vecs: Vec<Vec<f64>> = order.iter().map(|&i| v[i].clone()).collect();
    (vals, vecs)
}

/// Brute-force replay of the stopping-time detection over a stored path:
/// a flat scan over every (step, face) pair, sharing only the documented
/// counter-hash contract for bridge uniforms with the production detector.
pub fn replay_times(path: &PathSample, region: &Region) -> (f64, f64) {
    replay_times_salted(path, region, 0)
}

pub fn replay_times_salted(path: &PathSample, region: &Region, salt: u64) -> (f64, f64) {
    let faces = region.faces();
    let mut alpha = f64::INFINITY;
    let mut beta = f64::INFINITY;
    for k in 0..path.steps() {
        let a = path.position(k);
        let b = path.position(k + 1);
        let a_in = region.membership(a);
        let b_in = region.membership(b);
        let tm = (k as f64 + 0.5) * path.h;
        let tg = (k as f64 + 1.0) * path.h;
        if a_in {
            let mut fired_alpha = false;
            let mut fired_beta = false;
            for face in &faces {
                if replay_face_fires(face, a, b, path.h, &path.stream, salt, k as u64) {
                    fired_alpha = true;
                    if face.enters_complement_interior {
                        fired_beta = true;
                    }
                }
            }
            if alpha.is_infinite() {
                if fired_alpha {
                    alpha = tm;
                } else if !b_in {
                    alpha = tg;
                }
            }
            if beta.is_infinite() {
                if fired_beta {
                    beta = tm;
                } else if region.complement_interior(b) {
                    beta = tg;
                }
            }
        } else if !b_in {
            if alpha.is_infinite() {
                alpha = tg;
            }
            if beta.is_infinite() && region.complement_interior(b) {
                beta = tg;
            }
        }
        if alpha.is_finite() && beta.is_finite() {
            break;
        }
    }
    (alpha, beta)
}

fn replay_face_fires(
    face: &Face,
    a: &[f64],
    b: &[f64],
    h: f64,
    stream: &PathStream,
    salt: u64,
    step: u64,
) -> bool {
    let dot = |n: &[f64], x: &[f64]| n.iter().zip(x).map(|(u, v)| u * v).sum::<f64>();
    let s1 = dot(&face.normal, a) - face.offset;
    let s2 = dot(&face.normal, b) - face.offset;
    if s1 * s2 > 0.0 {
        let q = s1 * s2 / h;
        if q > 36.74 {
            return false;
        }
        if stream.bridge_uniform(salt, step, face.id) >= (-q).exp() {
            return false;
        }
    }
    let lam = if s1.abs() + s2.abs() > 0.0 { s1.abs() / (s1.abs() + s2.abs()) } else { 0.5 };
    match &face.gate {
        FaceGate::None => true,
        FaceGate::Segment { a: sa, b: sb } => {
            let px = a[0] + lam * (b[0] - a[0]);
            let py = a[1] + lam * (b[1] - a[1]);
            let dx = sb[0] - sa[0];
            let dy = sb[1] - sa[1];
            let s = ((px - sa[0]) * dx + (py - sa[1]) * dy) / (dx * dx + dy * dy);
            (0.0..=1.0).contains(&s)
        }
        FaceGate::Disk { center, radius } => {
            let p: Vec<f64> = a.iter().zip(b).map(|(ai, bi)| ai + lam * (bi - ai)).collect();
            let d: Vec<f64> = p.iter().zip(center.iter()).map(|(pi, ci)| pi - ci).collect();
            let z: f64 = d.iter().zip(&face.normal).map(|(di, ni)| di * ni).sum();
            let rho2: f64 =
                d.iter().enumerate().map(|(i, di)| (di - z * face.normal[i]).powi(2)).sum();
            rho2 <= radius * radius
        }
    }
}

/// Closed-form `exp(-t V)` for a 2x2 Hermitian `V` via `V = μI + W`,
/// `W² = δ² I`.
pub fn herm2_exp(v: &kaclab_core::CMat, t: f64) -> kaclab_core::CMat {
    use num_complex::Complex64;
    assert_eq!(v.n, 2);
    let a = v.get(0, 0).re;
    let c = v.get(1, 1).re;
    let b = v.get(0, 1);
    let mu = 0.5 * (a + c);
    let delta = ((0.5 * (a - c)).powi(2) + b.norm_sqr()).sqrt();
    let w = v.add(&kaclab_core::CMat::identity(2).scale(Complex64::new(-mu, 0.0)));
    let (ch, sh_over_d) = if delta > 1e-300 {
        ((t * delta).cosh(), (t * delta).sinh() / delta)
    } else {
        (1.0, t)
    };
    kaclab_core::CMat::identity(2)
        .scale(Complex64::new(ch, 0.0))
        .add(&w.scale(Complex64::new(-sh_over_d, 0.0)))
        .scale(Complex64::new((-t * mu).exp(), 0.0))
}
