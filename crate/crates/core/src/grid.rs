//! Finite-dimensional realization on uniform grids: sparse Dirichlet
//! Laplacians, principal-submatrix restrictions, diagonal penalties, a
//! Lanczos propagator for `exp(-tA)f`, and the monotone-limit defect tables.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::Region;
use crate::linalg::{symm_tridiag_eig, LinalgError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3 nodes per axis")]
    DegenerateGrid,
    #[error("grid spacing must be uniform across axes (got {0} vs {1})")]
    NonUniformSpacing(f64, f64),
    #[error("interior mask is empty")]
    EmptyInterior,
    #[error("operator is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("masks are not nested")]
    MasksNotNested,
    #[error("Krylov propagator did not converge within the iteration cap")]
    NoConvergence,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Uniform tensor grid of interior nodes of an outer box, with a partition of
/// the nodes into region-interior and penalty sets.
///
/// Node `i` along an axis sits at `lo + (i+1)·dx`; the outer box boundary
/// itself carries the Dirichlet truncation and holds no nodes.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
    pub dx: f64,
    pub interior_mask: Vec<bool>,
    pub penalty_mask: Vec<bool>,
}

impl GridSpec {
    /// Grid on `[lo, hi]` with everything interior (no penalty nodes).
    pub fn new(lo: &[f64], hi: &[f64], nodes: &[usize]) -> Result<Self, GridError> {
        let dim = lo.len();
        if dim == 0 || dim > 2 || hi.len() != dim || nodes.len() != dim {
            return Err(GridError::BadParams("grids are 1-d or 2-d".into()));
        }
        if nodes.iter().any(|&n| n < 3) {
            return Err(GridError::DegenerateGrid);
        }
        let dx0 = (hi[0] - lo[0]) / (nodes[0] + 1) as f64;
        for a in 1..dim {
            let dxa = (hi[a] - lo[a]) / (nodes[a] + 1) as f64;
            if (dxa - dx0).abs() > 1e-12 * dx0.abs() {
                return Err(GridError::NonUniformSpacing(dx0, dxa));
            }
        }
        if !(dx0 > 0.0) {
            return Err(GridError::BadParams("box must have positive extent".into()));
        }
        let total: usize = nodes.iter().product();
        Ok(GridSpec {
            dim,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            nodes: nodes.to_vec(),
            dx: dx0,
            interior_mask: vec![true; total],
            penalty_mask: vec![false; total],
        })
    }

    /// Builds the masks from a region: a node is a penalty node exactly when
    /// it lies in the complement interior. Nodes on measure-zero barriers or
    /// on the topological boundary are counted as interior, so null sets
    /// receive no penalty mass.
    pub fn from_region(lo: &[f64], hi: &[f64], nodes: &[usize], region: &Region) -> Result<Self, GridError> {
        let mut g = GridSpec::new(lo, hi, nodes)?;
        for i in 0..g.node_count() {
            let x = g.node_coord(i);
            let pen = region.complement_interior(&x);
            g.penalty_mask[i] = pen;
            g.interior_mask[i] = !pen;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn node_coord(&self, idx: usize) -> Vec<f64> {
        match self.dim {
            1 => vec![self.lo[0] + (idx + 1) as f64 * self.dx],
            _ => {
                let nx = self.nodes[0];
                let (ix, iy) = (idx % nx, idx / nx);
                vec![
                    self.lo[0] + (ix + 1) as f64 * self.dx,
                    self.lo[1] + (iy + 1) as f64 * self.dx,
                ]
            }
        }
    }

    /// Flat index of the node nearest to `x`, if within half a cell.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0usize;
        let mut stride = 1usize;
        for a in 0..self.dim {
            let fi = (x[a] - self.lo[a]) / self.dx - 1.0;
            let i = fi.round();
            if i < 0.0 || i >= self.nodes[a] as f64 || (fi - i).abs() > 0.5 + 1e-9 {
                return None;
            }
            flat += stride * i as usize;
            stride *= self.nodes[a];
        }
        Some(flat)
    }
}

/// Symmetric sparse operator in CSR layout; symmetry is certified on
/// construction (max |A_ij - A_ji| < 1e-14 relative).
#[derive(Debug, Clone)]
pub struct SparseSymmetricOperator {
    pub n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymmetricOperator {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, GridError> {
        use std::collections::BTreeMap;
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut scale = 0.0f64;
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(GridError::BadParams("triplet index out of range".into()));
            }
            *map.entry((i, j)).or_insert(0.0) += v;
            scale = scale.max(v.abs());
        }
        let mut worst = 0.0f64;
        for (&(i, j), &v) in &map {
            if i < j {
                let vt = map.get(&(j, i)).copied().unwrap_or(0.0);
                worst = worst.max((v - vt).abs());
            }
        }
        if worst > 1e-14 * scale.max(1.0) {
            return Err(GridError::NotSymmetric(worst));
        }
        let mut row_ptr = vec![0usize; n + 1];
        for (&(i, _), _) in &map {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let nnz = map.len();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for (&(_, j), &v) in &map {
            col_idx.push(j);
            vals.push(v);
        }
        Ok(SparseSymmetricOperator { n, row_ptr, col_idx, vals })
    }

    pub fn diagonal(n: usize, d: &[f64]) -> Result<Self, GridError> {
        if d.len() != n {
            return Err(GridError::BadParams("diagonal length mismatch".into()));
        }
        let trips: Vec<(usize, usize, f64)> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(n, &trips)
    }

    #[inline]
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] == j {
                return self.vals[k];
            }
        }
        0.0
    }

    /// `A + n·diag(mask)`.
    pub fn plus_diag_mask(&self, mask: &[bool], n: f64) -> Self {
        let mut out = self.clone();
        let mut extra: Vec<(usize, usize, f64)> = Vec::new();
        for i in 0..self.n {
            if !mask[i] {
                continue;
            }
            let mut found = false;
            for k in out.row_ptr[i]..out.row_ptr[i + 1] {
                if out.col_idx[k] == i {
                    out.vals[k] += n;
                    found = true;
                    break;
                }
            }
            if !found {
                extra.push((i, i, n));
            }
        }
        if extra.is_empty() {
            out
        } else {
            // rare path: rebuild including missing diagonal slots
            let mut trips: Vec<(usize, usize, f64)> = Vec::new();
            for i in 0..self.n {
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    trips.push((i, self.col_idx[k], self.vals[k]));
                }
            }
            trips.extend(extra);
            Self::from_triplets(self.n, &trips).expect("symmetric by construction")
        }
    }

    /// Principal submatrix on `keep`; returns the kept global indices too.
    pub fn principal_submatrix(&self, keep: &[bool]) -> Result<(Self, Vec<usize>), GridError> {
        if keep.len() != self.n {
            return Err(GridError::BadParams("mask length mismatch".into()));
        }
        let map: Vec<usize> = keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
        if map.is_empty() {
            return Err(GridError::EmptyInterior);
        }
        let mut local = vec![usize::MAX; self.n];
        for (li, &gi) in map.iter().enumerate() {
            local[gi] = li;
        }
        let mut trips = Vec::new();
        for i in 0..self.n {
            if local[i] == usize::MAX {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if local[j] != usize::MAX {
                    trips.push((local[i], local[j], self.vals[k]));
                }
            }
        }
        Ok((Self::from_triplets(map.len(), &trips)?, map))
    }

    /// Gershgorin upper bound for the largest eigenvalue.
    pub fn gershgorin_max(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let mut diag = 0.0;
            let mut off = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    diag = self.vals[k];
                } else {
                    off += self.vals[k].abs();
                }
            }
            worst = worst.max(diag + off);
        }
        worst
    }

    /// Plain-text coordinate export: one `row col value` line per entry.
    pub fn export_coo(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(out, "{} {} {}", i, self.col_idx[k], self.vals[k]).unwrap();
            }
        }
        out
    }
}

/// Standard (2m+1)-point stencil for `-Δ` with Dirichlet truncation at the
/// outer box. Positive semidefinite; interior stencil rows annihilate
/// constants.
pub fn build_laplacian(grid: &GridSpec) -> Result<SparseSymmetricOperator, GridError> {
    if grid.nodes.iter().any(|&n| n < 3) {
        return Err(GridError::DegenerateGrid);
    }
    let inv_dx2 = 1.0 / (grid.dx * grid.dx);
    let total = grid.node_count();
    let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(total * (2 * grid.dim + 1));
    match grid.dim {
        1 => {
            let n = grid.nodes[0];
            for i in 0..n {
                trips.push((i, i, 2.0 * inv_dx2));
                if i > 0 {
                    trips.push((i, i - 1, -inv_dx2));
                }
                if i + 1 < n {
                    trips.push((i, i + 1, -inv_dx2));
                }
            }
        }
        _ => {
            let (nx, ny) = (grid.nodes[0], grid.nodes[1]);
            for iy in 0..ny {
                for ix in 0..nx {
                    let i = ix + nx * iy;
                    trips.push((i, i, 4.0 * inv_dx2));
                    if ix > 0 {
                        trips.push((i, i - 1, -inv_dx2));
                    }
                    if ix + 1 < nx {
                        trips.push((i, i + 1, -inv_dx2));
                    }
                    if iy > 0 {
                        trips.push((i, i - nx, -inv_dx2));
                    }
                    if iy + 1 < ny {
                        trips.push((i, i + nx, -inv_dx2));
                    }
                }
            }
        }
    }
    SparseSymmetricOperator::from_triplets(total, &trips)
}

/// Principal submatrix on the interior mask: the Dirichlet realization on Ω.
pub fn dirichlet_restriction(
    l: &SparseSymmetricOperator,
    grid: &GridSpec,
) -> Result<(SparseSymmetricOperator, Vec<usize>), GridError> {
    l.principal_submatrix(&grid.interior_mask)
}

/// `L + n·diag(penalty_mask)`.
pub fn penalize(l: &SparseSymmetricOperator, grid: &GridSpec, n: f64) -> Result<SparseSymmetricOperator, GridError> {
    if !(n >= 0.0) {
        return Err(GridError::BadParams("penalty must be nonnegative".into()));
    }
    Ok(l.plus_diag_mask(&grid.penalty_mask, n))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Target spectral width per Lanczos substep.
const SUBSTEP_SPECTRAL_WIDTH: f64 = 256.0;
const LANCZOS_MAX_DIM: usize = 120;

/// Applies `exp(-tA)` to `f` with a certified relative tolerance.
///
/// The time interval is split so each substep sees a modest spectral width,
/// then a full-reorthogonalization Lanczos step propagates with the residual
/// estimate `β_m·|[exp(-τT)]_{m,1}|` checked against the per-step budget. If
/// a substep stalls at the dimension cap the whole computation restarts with
/// the substep count doubled.
pub fn apply_semigroup(
    a: &SparseSymmetricOperator,
    f: &[f64],
    t: f64,
    tol: f64,
) -> Result<Vec<f64>, GridError> {
    if f.len() != a.n {
        return Err(GridError::BadParams("vector length mismatch".into()));
    }
    if !(t >= 0.0) || !(tol > 0.0) {
        return Err(GridError::BadParams("need t >= 0 and tol > 0".into()));
    }
    if t == 0.0 {
        return Ok(f.to_vec());
    }
    let lam = a.gershgorin_max().max(1.0);
    let mut substeps = ((t * lam / SUBSTEP_SPECTRAL_WIDTH).ceil() as usize).max(1);
    'retry: for _attempt in 0..5 {
        let tau = t / substeps as f64;
        let step_tol = tol / substeps as f64;
        let mut v = f.to_vec();
        for _ in 0..substeps {
            match lanczos_exp_step(a, &v, tau, step_tol) {
                Ok(next) => v = next,
                Err(GridError::NoConvergence) => {
                    substeps *= 2;
                    continue 'retry;
                }
                Err(e) => return Err(e),
            }
        }
        return Ok(v);
    }
    Err(GridError::NoConvergence)
}

fn lanczos_exp_step(
    a: &SparseSymmetricOperator,
    v: &[f64],
    tau: f64,
    rel_tol: f64,
) -> Result<Vec<f64>, GridError> {
    let n = a.n;
    let beta0 = norm2(v);
    if beta0 == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let m_cap = LANCZOS_MAX_DIM.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_cap + 1);
    basis.push(v.iter().map(|x| x / beta0).collect());
    let mut diag: Vec<f64> = Vec::new();
    let mut off: Vec<f64> = Vec::new();
    let mut w = vec![0.0f64; n];

    for j in 0..m_cap {
        a.matvec(&basis[j], &mut w);
        if j > 0 {
            let b = off[j - 1];
            let prev = &basis[j - 1];
            for (wi, pi) in w.iter_mut().zip(prev) {
                *wi -= b * pi;
            }
        }
        let alpha: f64 = w.iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
        for (wi, qi) in w.iter_mut().zip(&basis[j]) {
            *wi -= alpha * qi;
        }
        diag.push(alpha);
        // full reorthogonalization
        for q in &basis {
            let c: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
            if c != 0.0 {
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let beta = norm2(&w);
        let m = j + 1;
        let exhausted = beta < 1e-12 * beta0.max(1.0) || m == m_cap || m == n;
        if exhausted || m % 8 == 0 {
            let y = tridiag_exp_e1(&diag, &off, tau)?;
            let err = tau.min(1.0) * beta * y[m - 1].abs();
            if beta < 1e-12 * beta0.max(1.0) || err <= rel_tol || m == n {
                let mut out = vec![0.0f64; n];
                for (k, q) in basis.iter().enumerate() {
                    let c = beta0 * y[k];
                    for (oi, qi) in out.iter_mut().zip(q) {
                        *oi += c * qi;
                    }
                }
                return Ok(out);
            }
            if m == m_cap {
                return Err(GridError::NoConvergence);
            }
        }
        off.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }
    Err(GridError::NoConvergence)
}

/// `exp(-τT)·e₁` for a symmetric tridiagonal `T`.
fn tridiag_exp_e1(diag: &[f64], off: &[f64], tau: f64) -> Result<Vec<f64>, GridError> {
    let m = diag.len();
    let (vals, vecs) = symm_tridiag_eig(diag, &off[..m - 1])?;
    let mut y = vec![0.0f64; m];
    for j in 0..m {
        let w = (-tau * vals[j]).exp() * vecs[j * m];
        for i in 0..m {
            y[i] += w * vecs[j * m + i];
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectRow {
    pub n: f64,
    pub defect_inside: f64,
    pub defect_outside: f64,
}

#[derive(Debug, Clone)]
pub struct DefectReport {
    pub rows: Vec<DefectRow>,
    /// Inside-defect monotonically nonincreasing along the sequence.
    pub monotone: bool,
    pub final_defect_inside: f64,
}

impl DefectReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,defect_inside,defect_outside\n");
        for r in &self.rows {
            writeln!(s, "{},{},{}", r.n, r.defect_inside, r.defect_outside).unwrap();
        }
        s
    }
}

/// Defect of the penalized semigroup against the Dirichlet one:
/// `d_in(n) = ‖P_Ω exp(-t(L+nD))f − exp(-tL_Ω)(P_Ω f)‖` and
/// `d_out(n) = ‖(1-P_Ω) exp(-t(L+nD))f‖` over the penalty sequence.
pub fn penalization_limit_check(
    grid: &GridSpec,
    t: f64,
    f: &[f64],
    n_sequence: &[f64],
    tol: f64,
) -> Result<DefectReport, GridError> {
    if !(t > 0.0) {
        return Err(GridError::BadParams("t must be positive".into()));
    }
    let l = build_laplacian(grid)?;
    let (l_in, map) = dirichlet_restriction(&l, grid)?;
    let f_in: Vec<f64> = map.iter().map(|&g| f[g]).collect();
    let reference = apply_semigroup(&l_in, &f_in, t, tol)?;

    let mut rows = Vec::with_capacity(n_sequence.len());
    for &n in n_sequence {
        let a = penalize(&l, grid, n)?;
        let u = apply_semigroup(&a, f, t, tol)?;
        let mut d_in2 = 0.0f64;
        for (li, &g) in map.iter().enumerate() {
            let d = u[g] - reference[li];
            d_in2 += d * d;
        }
        let mut d_out2 = 0.0f64;
        for (g, &pen) in grid.penalty_mask.iter().enumerate() {
            if pen {
                d_out2 += u[g] * u[g];
            }
        }
        rows.push(DefectRow { n, defect_inside: d_in2.sqrt(), defect_outside: d_out2.sqrt() });
    }
    let monotone = rows.windows(2).all(|w| w[1].defect_inside <= w[0].defect_inside + 1e-12);
    let final_defect_inside = rows.last().map_or(0.0, |r| r.defect_inside);
    Ok(DefectReport { rows, monotone, final_defect_inside })
}

/// The two monotone-limit directions realized on grid operators.
pub enum MonotoneCase<'a> {
    /// Increasing forms `L + nD`; identical computation (and output) to
    /// `penalization_limit_check`.
    Increasing { n_sequence: &'a [f64] },
    /// Decreasing forms: Dirichlet restrictions to a growing nested family
    /// of masks, compared against the restriction to the full interior mask.
    Decreasing { masks: &'a [Vec<bool>] },
}

pub fn monotone_form_limit_check(
    grid: &GridSpec,
    t: f64,
    f: &[f64],
    case: MonotoneCase<'_>,
    tol: f64,
) -> Result<DefectReport, GridError> {
    match case {
        MonotoneCase::Increasing { n_sequence } => penalization_limit_check(grid, t, f, n_sequence, tol),
        MonotoneCase::Decreasing { masks } => {
            if !(t > 0.0) {
                return Err(GridError::BadParams("t must be positive".into()));
            }
            let total = grid.node_count();
            for w in masks.windows(2) {
                if w[0].iter().zip(&w[1]).any(|(&a, &b)| a && !b) {
                    return Err(GridError::MasksNotNested);
                }
            }
            for m in masks {
                if m.len() != total {
                    return Err(GridError::BadParams("mask length mismatch".into()));
                }
                if m.iter().zip(&grid.interior_mask).any(|(&a, &b)| a && !b) {
                    return Err(GridError::MasksNotNested);
                }
            }
            let l = build_laplacian(grid)?;
            let (l_lim, map_lim) = dirichlet_restriction(&l, grid)?;
            let f_lim: Vec<f64> = map_lim.iter().map(|&g| f[g]).collect();
            let u_lim = apply_semigroup(&l_lim, &f_lim, t, tol)?;
            let mut limit_embedded = vec![0.0f64; total];
            for (li, &g) in map_lim.iter().enumerate() {
                limit_embedded[g] = u_lim[li];
            }

            let mut rows = Vec::with_capacity(masks.len());
            for (k, mask) in masks.iter().enumerate() {
                let (l_k, map_k) = l.principal_submatrix(mask)?;
                let f_k: Vec<f64> = map_k.iter().map(|&g| f[g]).collect();
                let u_k = apply_semigroup(&l_k, &f_k, t, tol)?;
                let mut embedded = vec![0.0f64; total];
                for (li, &g) in map_k.iter().enumerate() {
                    embedded[g] = u_k[li];
                }
                let mut inside2 = 0.0f64;
                let mut outside2 = 0.0f64;
                for g in 0..total {
                    let d = embedded[g] - limit_embedded[g];
                    if mask[g] {
                        inside2 += d * d;
                    } else {
                        outside2 += d * d;
                    }
                }
                rows.push(DefectRow {
                    n: (k + 1) as f64,
                    defect_inside: inside2.sqrt(),
                    defect_outside: outside2.sqrt(),
                });
            }
            let monotone = rows.windows(2).all(|w| w[1].defect_inside <= w[0].defect_inside + 1e-12);
            let final_defect_inside = rows.last().map_or(0.0, |r| r.defect_inside);
            Ok(DefectReport { rows, monotone, final_defect_inside })
        }
    }
}
