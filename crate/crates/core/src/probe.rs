//! Regularity verdicts: runs the paired gap estimator over a point/time
//! battery with three-level step refinement, and replays stored paths
//! against nested exhaustions.

use std::fmt::Write as _;

use thiserror::Error;

use crate::estimator::{kac_gap, step_budget};
use crate::geometry::{ExhaustScheme, GeometryError, Region};
use crate::path::{stopping_times, PathError, PathSample, StoppingTimes};
use crate::rng::{mix64, PathStream};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ProbeError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("invalid parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ConsistentWithRegular,
    Irregular,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::ConsistentWithRegular => "consistent-with-regular",
            Verdict::Irregular => "irregular",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelGap {
    pub h: f64,
    pub gap: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub x: Vec<f64>,
    pub t: f64,
    /// Gap estimates at `h`, `h/2`, `h/4`.
    pub levels: Vec<LevelGap>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub region_id: String,
    pub n_paths: u64,
    pub base_h: f64,
    pub master_seed: u64,
    pub probes: Vec<ProbeOutcome>,
    pub verdict: Verdict,
}

impl RegularityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("region_id,x,t,h,N,gap,stderr,error\n");
        for p in &self.probes {
            let x = p.x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
            if let Some(err) = &p.error {
                writeln!(s, "{},{},{},,,,,{}", self.region_id, x, p.t, err).unwrap();
                continue;
            }
            for l in &p.levels {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},",
                    self.region_id, x, p.t, l.h, self.n_paths, l.gap, l.stderr
                )
                .unwrap();
            }
        }
        s
    }

    pub fn verdict_line(&self) -> String {
        format!("{}: {}", self.region_id, self.verdict)
    }
}

/// Decision rule on a battery of paired gap estimates.
///
/// "irregular" requires a probe whose gap exceeds five paired standard
/// errors at all three refinement levels; "consistent-with-regular" requires
/// every gap to sit within `3σ + budget` at the finest level with a
/// nonincreasing refinement trend. Everything else is "inconclusive".
pub fn regularity_battery(
    region: &Region,
    points: &[Vec<f64>],
    times: &[f64],
    n_paths: u64,
    h: f64,
    seed: u64,
) -> RegularityReport {
    let mut probes = Vec::new();
    for (pi, x) in points.iter().enumerate() {
        for (ti, &t) in times.iter().enumerate() {
            let mut levels = Vec::with_capacity(3);
            let mut error = None;
            for (li, div) in [1.0, 2.0, 4.0].iter().enumerate() {
                let lh = h / div;
                let probe_seed = mix64(
                    seed ^ (pi as u64 + 1).wrapping_mul(0x9E3779B1)
                        ^ (ti as u64 + 1).wrapping_mul(0x85EBCA77)
                        ^ (li as u64 + 1).wrapping_mul(0xC2B2AE3D),
                );
                match kac_gap(region, x, t, n_paths, lh, probe_seed) {
                    Ok(g) => levels.push(LevelGap { h: lh, gap: g.gap, stderr: g.stderr }),
                    Err(e) => {
                        error = Some(e.to_string());
                        break;
                    }
                }
            }
            probes.push(ProbeOutcome { x: x.clone(), t, levels, error });
        }
    }

    let mut any_irregular = false;
    let mut all_consistent = true;
    for p in &probes {
        if p.error.is_some() || p.levels.len() != 3 {
            all_consistent = false;
            continue;
        }
        if p.levels.iter().all(|l| l.gap > 5.0 * l.stderr && l.gap > 0.0) {
            any_irregular = true;
        }
        let finest = &p.levels[2];
        let within = finest.gap <= 3.0 * finest.stderr + step_budget(finest.h);
        let trend_ok = p.levels[0].gap + 1e-12 >= p.levels[1].gap
            && p.levels[1].gap + 1e-12 >= p.levels[2].gap;
        if !(within && trend_ok) {
            all_consistent = false;
        }
    }
    let verdict = if any_irregular {
        Verdict::Irregular
    } else if all_consistent && !probes.is_empty() {
        Verdict::ConsistentWithRegular
    } else {
        Verdict::Inconclusive
    };

    RegularityReport {
        region_id: region.id().into(),
        n_paths,
        base_h: h,
        master_seed: seed,
        probes,
        verdict,
    }
}

#[derive(Debug, Clone)]
pub struct ExhaustionViolation {
    pub path_index: u64,
    pub level: u32,
    pub kind: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ExhaustionCheck {
    pub n_paths: u64,
    pub levels: u32,
    pub violations: Vec<ExhaustionViolation>,
    /// Paths whose range was covered by at least one window, so the plateau
    /// identity with the parent was actually exercised.
    pub plateau_paths: u64,
}

impl ExhaustionCheck {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Replays stored paths against the nested exhaustion `Ω_n = Ω ∩ Υ_n` and
/// checks that both stopping times are nondecreasing in `n` and lock onto the
/// parent's values once `Υ_n` covers the path's range.
pub fn exhaustion_consistency(
    parent: &Region,
    scheme: ExhaustScheme,
    x0: &[f64],
    levels: u32,
    n_paths: u64,
    t_max: f64,
    h: f64,
    seed: u64,
) -> Result<ExhaustionCheck, ProbeError> {
    if levels < 1 {
        return Err(ProbeError::BadParams("need at least one exhaustion level".into()));
    }
    let first = parent.exhaust(scheme, 1)?;
    if !first.membership(x0) {
        return Err(ProbeError::Path(PathError::StartOutside));
    }
    let regions: Vec<Region> = (1..=levels)
        .map(|n| parent.exhaust(scheme, n))
        .collect::<Result<_, _>>()?;

    let mut violations = Vec::new();
    let mut plateau_paths = 0u64;
    // Windows stop firing bridge events once the squared distance passes the
    // cutoff; beyond that margin the level must agree with the parent exactly.
    let margin = (37.0 * h).sqrt() + h;

    for p in 0..n_paths {
        let path = PathSample::generate(PathStream::derive(seed, p), x0, t_max, h)?;
        let parent_times = stopping_times(&path, parent, 0)?;
        let range = path_range(&path);
        let mut prev: Option<StoppingTimes> = None;
        let mut plateau_seen = false;
        for (li, region_n) in regions.iter().enumerate() {
            let level = li as u32 + 1;
            let st = stopping_times(&path, region_n, 0)?;
            if st.alpha > st.beta {
                violations.push(ExhaustionViolation {
                    path_index: p,
                    level,
                    kind: "alpha_gt_beta",
                    detail: format!("alpha={} beta={}", st.alpha, st.beta),
                });
            }
            if let Some(prev) = prev {
                if st.alpha < prev.alpha {
                    violations.push(ExhaustionViolation {
                        path_index: p,
                        level,
                        kind: "alpha_decreased",
                        detail: format!("{} -> {}", prev.alpha, st.alpha),
                    });
                }
                if st.beta < prev.beta {
                    violations.push(ExhaustionViolation {
                        path_index: p,
                        level,
                        kind: "beta_decreased",
                        detail: format!("{} -> {}", prev.beta, st.beta),
                    });
                }
            }
            if st.alpha > parent_times.alpha || st.beta > parent_times.beta {
                violations.push(ExhaustionViolation {
                    path_index: p,
                    level,
                    kind: "exceeds_parent",
                    detail: format!(
                        "level ({}, {}) parent ({}, {})",
                        st.alpha, st.beta, parent_times.alpha, parent_times.beta
                    ),
                });
            }
            if level as f64 >= range + margin {
                plateau_seen = true;
                if st.alpha != parent_times.alpha || st.beta != parent_times.beta {
                    violations.push(ExhaustionViolation {
                        path_index: p,
                        level,
                        kind: "plateau_mismatch",
                        detail: format!(
                            "level ({}, {}) parent ({}, {})",
                            st.alpha, st.beta, parent_times.alpha, parent_times.beta
                        ),
                    });
                }
            }
            prev = Some(st);
        }
        if plateau_seen {
            plateau_paths += 1;
        }
    }

    Ok(ExhaustionCheck { n_paths, levels, violations, plateau_paths })
}

fn path_range(path: &PathSample) -> f64 {
    path.positions.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}
