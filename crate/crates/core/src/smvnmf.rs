//! Masked non-negative matrix factorization with a graph-Laplacian spatial
//! penalty, used as a multi-attribute imputer.
//!
//! Minimizes `||M ⊙ (X − WH)||²_F + λ·tr(Wᵀ L W)` with multiplicative updates,
//! where `L = D − A` is the Laplacian of a symmetrized k-nearest-neighbor
//! graph over block centroids.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockTable, Feature, Imputation, TargetPair, N_SHARES};
use crate::rng::rng_from_seed;
use crate::spatial::SpatialIndex;

const DENOM_FLOOR: f64 = 1e-12;

/// Column layout of the factorized matrix.
pub const N_COLUMNS: usize = N_SHARES + 3;
const AREA_COL: usize = N_SHARES;
const FSI_COL: usize = N_SHARES + 1;
const GSI_COL: usize = N_SHARES + 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfConfig {
    pub rank: usize,
    pub lambda: f64,
    pub graph_k: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        Self { rank: 4, lambda: 0.1, graph_k: 8, max_iter: 500, tol: 1e-6 }
    }
}

impl NmfConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rank >= 1
            && self.lambda >= 0.0
            && self.lambda.is_finite()
            && self.graph_k >= 1
            && self.max_iter >= 1
            && self.tol >= 0.0
            && self.tol.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid smvnmf parameters {self:?}")))
        }
    }
}

/// Sparse graph Laplacian `D − A` with binary symmetric adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    /// Sorted neighbor lists.
    pub adjacency: Vec<Vec<usize>>,
    pub degree: Vec<f64>,
}

impl Laplacian {
    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.degree[i];
            for &j in &self.adjacency[i] {
                m[i][j] = -1.0;
            }
        }
        m
    }

    /// `tr(Wᵀ L W)` for row-major `W` with `r` columns.
    pub fn quadratic_form(&self, w: &[f64], r: usize) -> f64 {
        let mut acc = 0.0;
        let mut diff = vec![0.0; r];
        for ((wi, adj), &deg) in w.chunks_exact(r).zip(&self.adjacency).zip(&self.degree) {
            // wᵢ · (deg·wᵢ − Σⱼ wⱼ)
            for (dk, &wk) in diff.iter_mut().zip(wi) {
                *dk = deg * wk;
            }
            for &j in adj {
                axpy(&mut diff, -1.0, &w[j * r..(j + 1) * r]);
            }
            acc += dot(wi, &diff);
        }
        acc
    }
}

/// Union-symmetrized `g`-nearest-neighbor graph Laplacian. Distance ties are
/// broken by point order.
pub fn build_spatial_laplacian(centroids: &[[f64; 2]], g: usize) -> Laplacian {
    let n = centroids.len();
    let index = SpatialIndex::new(
        centroids.iter().enumerate().map(|(i, &p)| (format!("{i:012}"), p, i)).collect(),
    );
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &p) in centroids.iter().enumerate() {
        if n < 2 {
            break;
        }
        let nbrs = index.knn_query(p, g + 1).expect("index is non-empty");
        for j in nbrs.into_iter().map(|nb| nb.row).filter(|&j| j != i).take(g) {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    let degree = adjacency.iter().map(|l| l.len() as f64).collect();
    Laplacian { adjacency, degree }
}

/// Factorization result.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfState {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    /// Row-major `rows × rank`.
    pub w: Vec<f64>,
    /// Row-major `rank × cols`.
    pub h: Vec<f64>,
    /// Objective at initialization and after every iteration.
    pub objective_trace: Vec<f64>,
}

impl NmfState {
    pub fn reconstruct(&self, i: usize, j: usize) -> f64 {
        (0..self.rank).map(|k| self.w[i * self.rank + k] * self.h[k * self.cols + j]).sum()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `rank × cols` to `cols × rank`.
fn transpose_into(h: &[f64], r: usize, d: usize, ht: &mut [f64]) {
    for k in 0..r {
        for j in 0..d {
            ht[j * r + k] = h[k * d + j];
        }
    }
}

fn objective(x: &[f64], mask: &[bool], st: &NmfState, lambda: f64, lap: Option<&Laplacian>) -> f64 {
    match st.rank {
        1 => objective_impl(1, x, mask, st, lambda, lap),
        2 => objective_impl(2, x, mask, st, lambda, lap),
        3 => objective_impl(3, x, mask, st, lambda, lap),
        4 => objective_impl(4, x, mask, st, lambda, lap),
        5 => objective_impl(5, x, mask, st, lambda, lap),
        6 => objective_impl(6, x, mask, st, lambda, lap),
        r => objective_impl(r, x, mask, st, lambda, lap),
    }
}

#[inline(always)]
fn objective_impl(r: usize, x: &[f64], mask: &[bool], st: &NmfState, lambda: f64, lap: Option<&Laplacian>) -> f64 {
    let d = st.cols;
    let mut ht = vec![0.0; d * r];
    transpose_into(&st.h, r, d, &mut ht);
    let mut acc = 0.0;
    for (wi, (xr, mr)) in st.w.chunks_exact(r).zip(x.chunks_exact(d).zip(mask.chunks_exact(d))) {
        let mut row = 0.0;
        for ((&xj, &mj), htj) in xr.iter().zip(mr).zip(ht.chunks_exact(r)) {
            let e = xj - dot(wi, htj);
            row += if mj { e * e } else { 0.0 };
        }
        acc += row;
    }
    match lap {
        Some(l) if lambda > 0.0 => acc + lambda * l.quadratic_form(&st.w, r),
        _ => acc,
    }
}

struct Buffers {
    w_new: Vec<f64>,
    ht: Vec<f64>,
    hht: Vec<f64>,
    wtw: Vec<f64>,
    num_h: Vec<f64>,
    den_h: Vec<f64>,
    num: Vec<f64>,
    den: Vec<f64>,
}

impl Buffers {
    fn new(n: usize, d: usize, r: usize) -> Self {
        Self {
            w_new: vec![0.0; n * r],
            ht: vec![0.0; d * r],
            hht: vec![0.0; r * r],
            wtw: vec![0.0; r * r],
            num_h: vec![0.0; r * d],
            den_h: vec![0.0; r * d],
            num: vec![0.0; r],
            den: vec![0.0; r],
        }
    }
}

/// One W update followed by one H update. Small ranks get dedicated copies
/// with the rank known at compile time.
fn step(st: &mut NmfState, xo: &[f64], missing: &[(usize, Vec<usize>)], lap: Option<&Laplacian>, lambda: f64, buf: &mut Buffers) {
    match st.rank {
        1 => step_impl(1, st, xo, missing, lap, lambda, buf),
        2 => step_impl(2, st, xo, missing, lap, lambda, buf),
        3 => step_impl(3, st, xo, missing, lap, lambda, buf),
        4 => step_impl(4, st, xo, missing, lap, lambda, buf),
        5 => step_impl(5, st, xo, missing, lap, lambda, buf),
        6 => step_impl(6, st, xo, missing, lap, lambda, buf),
        r => step_impl(r, st, xo, missing, lap, lambda, buf),
    }
}

#[inline(always)]
fn step_impl(
    r: usize,
    st: &mut NmfState,
    xo: &[f64],
    missing: &[(usize, Vec<usize>)],
    lap: Option<&Laplacian>,
    lambda: f64,
    buf: &mut Buffers,
) {
    let d = st.cols;
    // W step: numerator (M⊙X)Hᵀ + λAW, denominator (M⊙WH)Hᵀ + λDW.
    transpose_into(&st.h, r, d, &mut buf.ht);
    for a in 0..r {
        for c in 0..r {
            buf.hht[a * r + c] = dot(&st.h[a * d..(a + 1) * d], &st.h[c * d..(c + 1) * d]);
        }
    }
    let (num, den, ht) = (&mut buf.num[..r], &mut buf.den[..r], &buf.ht[..d * r]);
    let mut missing_ptr = 0;
    for (i, ((wi, xr), out)) in
        st.w.chunks_exact(r).zip(xo.chunks_exact(d)).zip(buf.w_new.chunks_exact_mut(r)).enumerate()
    {
        num.fill(0.0);
        for (&xj, htj) in xr.iter().zip(ht.chunks_exact(r)) {
            if xj != 0.0 {
                axpy(num, xj, htj);
            }
        }
        for (dk, hk) in den.iter_mut().zip(buf.hht.chunks_exact(r)) {
            *dk = dot(wi, hk);
        }
        if let Some((mi, cols)) = missing.get(missing_ptr) {
            if *mi == i {
                missing_ptr += 1;
                for &j in cols {
                    let htj = &ht[j * r..(j + 1) * r];
                    axpy(den, -dot(wi, htj), htj);
                }
            }
        }
        if let Some(l) = lap {
            for &j in &l.adjacency[i] {
                axpy(num, lambda, &st.w[j * r..(j + 1) * r]);
            }
            axpy(den, lambda * l.degree[i], wi);
        }
        for k in 0..r {
            out[k] = wi[k] * num[k] / den[k].max(DENOM_FLOOR);
        }
    }
    std::mem::swap(&mut st.w, &mut buf.w_new);

    // H step: numerator Wᵀ(M⊙X), denominator Wᵀ(M⊙WH).
    buf.wtw.fill(0.0);
    buf.num_h.fill(0.0);
    for (wi, xr) in st.w.chunks_exact(r).zip(xo.chunks_exact(d)) {
        for (a, &wa) in wi.iter().enumerate() {
            axpy(&mut buf.wtw[a * r..(a + 1) * r], wa, wi);
            axpy(&mut buf.num_h[a * d..(a + 1) * d], wa, xr);
        }
    }
    for k in 0..r {
        for j in 0..d {
            buf.den_h[k * d + j] = (0..r).map(|c| buf.wtw[k * r + c] * st.h[c * d + j]).sum();
        }
    }
    for (i, cols) in missing {
        let wi = &st.w[i * r..(i + 1) * r];
        for &j in cols {
            let wh = dot(wi, &ht[j * r..(j + 1) * r]);
            for k in 0..r {
                buf.den_h[k * d + j] -= wi[k] * wh;
            }
        }
    }
    for ((h, nh), dh) in st.h.iter_mut().zip(&buf.num_h).zip(&buf.den_h) {
        *h *= nh / dh.max(DENOM_FLOOR);
    }
}

/// Runs masked multiplicative updates on row-major `x` (`rows × cols`).
/// `mask[i * cols + j]` is true where `x` is observed; unobserved entries of
/// `x` are ignored.
#[allow(clippy::too_many_arguments)]
pub fn masked_nmf(
    x: &[f64],
    mask: &[bool],
    rows: usize,
    cols: usize,
    config: &NmfConfig,
    laplacian: Option<&Laplacian>,
    seed: u64,
) -> Result<NmfState> {
    config.validate()?;
    let (n, d, r) = (rows, cols, config.rank);
    if x.len() != n * d || mask.len() != n * d {
        return Err(Error::LengthMismatch(x.len(), n * d));
    }
    if r >= n.min(d) {
        return Err(Error::RankTooLarge { rank: r, limit: n.min(d) });
    }
    if let Some(l) = laplacian {
        if l.len() != n {
            return Err(Error::LengthMismatch(l.len(), n));
        }
    }
    let mut xo = vec![0.0; n * d];
    for idx in 0..n * d {
        if mask[idx] {
            let v = x[idx];
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NonNegativeViolation { row: idx / d, col: idx % d, value: v });
            }
            xo[idx] = v;
        }
    }
    // Rows with unobserved cells, and which cells.
    let missing: Vec<(usize, Vec<usize>)> = (0..n)
        .filter_map(|i| {
            let m: Vec<usize> = (0..d).filter(|&j| !mask[i * d + j]).collect();
            (!m.is_empty()).then_some((i, m))
        })
        .collect();

    let mut rng = rng_from_seed(seed);
    let mut init = |len: usize| -> Vec<f64> { (0..len).map(|_| 1.0 - rng.gen::<f64>()).collect() };
    let w = init(n * r);
    let h = init(r * d);
    let mut st = NmfState { rows: n, cols: d, rank: r, w, h, objective_trace: Vec::new() };
    let lambda = config.lambda;
    let lap = laplacian.filter(|_| lambda > 0.0);
    st.objective_trace.push(objective(x, mask, &st, lambda, lap));

    let mut buf = Buffers::new(n, d, r);
    for _ in 0..config.max_iter {
        step(&mut st, &xo, &missing, lap, lambda, &mut buf);
        let obj = objective(x, mask, &st, lambda, lap);
        let prev = *st.objective_trace.last().unwrap();
        st.objective_trace.push(obj);
        if (prev - obj).abs() <= config.tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(st)
}

/// Imputes missing FSI/GSI by factorizing shares, scaled site area, and the
/// observed targets together.
pub fn smvnmf_impute(table: &BlockTable, config: &NmfConfig, seed: u64) -> Result<Imputation> {
    let n = table.len();
    let d = N_COLUMNS;
    let max_area = table.iter().map(|r| r.site_area).fold(0.0, f64::max);
    if !(max_area > 0.0) {
        return Err(Error::InvalidTable("no positive site area".into()));
    }
    let mut x = vec![0.0; n * d];
    let mut mask = vec![true; n * d];
    for (i, r) in table.iter().enumerate() {
        x[i * d..i * d + N_SHARES].copy_from_slice(&r.shares);
        x[i * d + AREA_COL] = r.site_area / max_area;
        for (col, f) in [(FSI_COL, Feature::Fsi), (GSI_COL, Feature::Gsi)] {
            match r.target(f) {
                Some(v) => x[i * d + col] = v,
                None => mask[i * d + col] = false,
            }
        }
    }
    let incomplete = table.incomplete_indices();
    if incomplete.is_empty() {
        return Ok(Imputation::new());
    }
    let centroids: Vec<[f64; 2]> = table.iter().map(|r| [r.centroid.0, r.centroid.1]).collect();
    let lap = (config.lambda > 0.0 && n >= 2).then(|| build_spatial_laplacian(&centroids, config.graph_k));
    let st = masked_nmf(&x, &mask, n, d, config, lap.as_ref(), seed)?;
    let mut out = Imputation::new();
    for i in incomplete {
        let r = &table.records()[i];
        let fsi = r.fsi.unwrap_or_else(|| st.reconstruct(i, FSI_COL).max(0.0));
        let gsi = r.gsi.unwrap_or_else(|| st.reconstruct(i, GSI_COL).max(0.0));
        out.insert(r.id.clone(), TargetPair::new(fsi, gsi));
    }
    Ok(out)
}
