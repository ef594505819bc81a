//! Dense linear complementarity problems.
//!
//! An LCP(M, q) asks for `v >= 0` with `Mv + q >= 0` and `v'(Mv + q) = 0`.
//! This module holds the problem type, the natural-map residual, a
//! semismooth Newton solver for positive definite (not necessarily
//! symmetric) matrices, and an exhaustive active-set enumeration used as a
//! test oracle on small instances.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`enumerate_active_sets`].
pub const MAX_ENUMERATION_DIM: usize = 24;

const NEWTON_MAX_STEPS: usize = 200;
const MAX_FAILED_LINE_SEARCHES: usize = 5;
const PGS_MAX_SWEEPS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LcpProblem {
    m: DMatrix<f64>,
    q: DVector<f64>,
}

impl LcpProblem {
    pub fn new(m: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim("LCP matrix columns", m.nrows(), m.ncols()));
        }
        if q.len() != m.nrows() {
            return Err(Error::dim("LCP vector q", m.nrows(), q.len()));
        }
        if m.iter().chain(q.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("LCP data contains non-finite entries"));
        }
        Ok(Self { m, q })
    }

    /// Convenience constructor from row-major data.
    pub fn from_rows(rows: &[&[f64]], q: &[f64]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::dim("LCP matrix row", n, bad.len()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(m, DVector::from_column_slice(q))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    /// Replaces `q`, keeping `M`. Used by solvers that reuse one matrix with
    /// many right-hand sides.
    pub(crate) fn set_q(&mut self, q: DVector<f64>) {
        assert_eq!(q.len(), self.dim());
        self.q = q;
    }

    /// `Mv + q`.
    pub fn affine(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.m * v + &self.q
    }

    /// The problem `LCP(ΛM, Λq)` for a positive diagonal `Λ`. It has the same
    /// solution set as the original.
    pub fn scale_rows(&self, lambda: &[f64]) -> Result<Self> {
        if lambda.len() != self.dim() {
            return Err(Error::dim("row scaling", self.dim(), lambda.len()));
        }
        if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("row scaling must be positive and finite"));
        }
        let mut m = self.m.clone();
        let mut q = self.q.clone();
        for (i, &l) in lambda.iter().enumerate() {
            m.row_mut(i).scale_mut(l);
            q[i] *= l;
        }
        Self::new(m, q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub v: DVector<f64>,
    pub residual: f64,
    /// Newton steps (or fallback sweeps) used; zero for enumerated candidates.
    pub iterations: usize,
}

/// `‖min(w, v)‖₂` for precomputed `w = Mv + q`.
pub fn natural_residual(w: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), v.len());
    w.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let m = a.min(b);
            m * m
        })
        .sum::<f64>()
        .sqrt()
}

/// Natural-map residual `‖min(Mv + q, v)‖₂`. Zero exactly at solutions.
pub fn lcp_residual(prob: &LcpProblem, v: &DVector<f64>) -> Result<f64> {
    if v.len() != prob.dim() {
        return Err(Error::dim("LCP iterate", prob.dim(), v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("LCP iterate contains non-finite entries"));
    }
    let w = prob.affine(v);
    Ok(natural_residual(w.as_slice(), v.as_slice()))
}

/// Checks `z'Mz > 0` for all `z != 0` by factoring the symmetric part.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.cholesky().is_some()
}

/// Solves an LCP whose matrix is positive definite (`z'Mz > 0`, symmetry not
/// required). Starts from `v = 0`.
pub fn solve_lcp_pd(prob: &LcpProblem, tol: f64) -> Result<LcpSolution> {
    solve_lcp_pd_from(prob, tol, None)
}

/// Like [`solve_lcp_pd`] with an optional warm start.
///
/// Semismooth Newton on the min-map `Φ(v) = min(v, Mv + q)` with Armijo
/// backtracking on `½‖Φ‖²`. After [`MAX_FAILED_LINE_SEARCHES`] failed line
/// searches the remaining work goes to projected Gauss-Seidel.
pub fn solve_lcp_pd_from(
    prob: &LcpProblem,
    tol: f64,
    start: Option<&DVector<f64>>,
) -> Result<LcpSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let n = prob.dim();
    if n == 0 {
        return Ok(LcpSolution {
            v: DVector::zeros(0),
            residual: 0.0,
            iterations: 0,
        });
    }
    if !is_positive_definite(&prob.m) {
        return Err(Error::NotPositiveDefinite(
            "symmetric part of the LCP matrix failed Cholesky".into(),
        ));
    }
    newton_pd(prob, tol, start)
}

/// [`solve_lcp_pd_from`] without the positive-definiteness probe. The caller
/// has already checked the matrix.
pub(crate) fn newton_pd(
    prob: &LcpProblem,
    tol: f64,
    start: Option<&DVector<f64>>,
) -> Result<LcpSolution> {
    let n = prob.dim();
    let mut v = match start {
        Some(s) if s.len() == n && s.iter().all(|x| x.is_finite()) => s.map(|x| x.max(0.0)),
        Some(s) => return Err(Error::dim("LCP warm start", n, s.len())),
        None => DVector::zeros(n),
    };

    let mut w = prob.affine(&v);
    let mut merit = min_map(&w, &v).norm_squared();
    let mut failed = 0usize;
    let mut best = (merit, v.clone());

    for step in 0..NEWTON_MAX_STEPS {
        if merit.sqrt() <= tol {
            return finish(prob, v, step);
        }
        let d = match newton_direction(prob, &v, &w) {
            Some(d) => d,
            None => break,
        };

        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1e-10 {
            let trial = &v + &d * alpha;
            let tw = prob.affine(&trial);
            let tmerit = min_map(&tw, &trial).norm_squared();
            if tmerit <= (1.0 - 1e-4 * alpha) * merit {
                v = trial;
                w = tw;
                merit = tmerit;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if merit < best.0 {
            best = (merit, v.clone());
        }
        if !accepted {
            failed += 1;
            if failed >= MAX_FAILED_LINE_SEARCHES {
                break;
            }
            // Nudge with one Gauss-Seidel sweep so Newton sees a new active set.
            pgs_sweep(prob, &mut v);
            w = prob.affine(&v);
            merit = min_map(&w, &v).norm_squared();
        }
    }
    if merit.sqrt() <= tol {
        return finish(prob, v, NEWTON_MAX_STEPS);
    }

    let (_, start) = best;
    projected_gauss_seidel(prob, tol, start)
}

fn finish(prob: &LcpProblem, v: DVector<f64>, iterations: usize) -> Result<LcpSolution> {
    let v = v.map(|x| x.max(0.0));
    let residual = natural_residual(prob.affine(&v).as_slice(), v.as_slice());
    Ok(LcpSolution {
        v,
        residual,
        iterations,
    })
}

fn min_map(w: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    w.zip_map(v, f64::min)
}

/// Newton direction for the min-map. Rows with `w_i < v_i` linearize
/// `(Mv + q)_i = 0`; the rest linearize `v_i = 0`.
fn newton_direction(prob: &LcpProblem, v: &DVector<f64>, w: &DVector<f64>) -> Option<DVector<f64>> {
    let n = v.len();
    let active: Vec<usize> = (0..n).filter(|&i| w[i] < v[i]).collect();
    let mut d = DVector::zeros(n);
    for i in 0..n {
        if w[i] >= v[i] {
            d[i] = -v[i];
        }
    }
    if active.is_empty() {
        return Some(d);
    }
    let k = active.len();
    let m = &prob.m;
    let sub = DMatrix::from_fn(k, k, |a, b| m[(active[a], active[b])]);
    let rhs = DVector::from_fn(k, |a, _| {
        let i = active[a];
        // -(w_i + Σ_{j inactive} M_ij d_j)
        let mut r = w[i];
        for j in 0..n {
            if w[j] >= v[j] {
                r += m[(i, j)] * d[j];
            }
        }
        -r
    });
    let sol = sub.lu().solve(&rhs)?;
    for (a, &i) in active.iter().enumerate() {
        d[i] = sol[a];
    }
    d.iter().all(|x| x.is_finite()).then_some(d)
}

fn pgs_sweep(prob: &LcpProblem, v: &mut DVector<f64>) {
    let m = &prob.m;
    for i in 0..v.len() {
        let mii = m[(i, i)];
        let wi = m.row(i).dot(&v.transpose()) + prob.q[i];
        v[i] = (v[i] - wi / mii).max(0.0);
    }
}

/// Projected Gauss-Seidel: `v_i <- max(0, v_i - (Mv + q)_i / M_ii)` in index
/// order until the natural residual drops below `tol`.
pub fn projected_gauss_seidel(
    prob: &LcpProblem,
    tol: f64,
    start: DVector<f64>,
) -> Result<LcpSolution> {
    let mut v = start.map(|x| x.max(0.0));
    if (0..v.len()).any(|i| !(prob.m[(i, i)] > 0.0)) {
        return Err(Error::NotPositiveDefinite(
            "projected Gauss-Seidel needs a positive diagonal".into(),
        ));
    }
    let mut best_res = f64::INFINITY;
    let mut best = v.clone();
    for sweep in 0..PGS_MAX_SWEEPS {
        pgs_sweep(prob, &mut v);
        let res = natural_residual(prob.affine(&v).as_slice(), v.as_slice());
        if res < best_res {
            best_res = res;
            best.copy_from(&v);
        }
        if res <= tol {
            return Ok(LcpSolution {
                v,
                residual: res,
                iterations: NEWTON_MAX_STEPS + sweep + 1,
            });
        }
        if !res.is_finite() {
            break;
        }
    }
    Err(Error::NotConverged {
        solver: "lcp_pd",
        iterations: NEWTON_MAX_STEPS + PGS_MAX_SWEEPS,
        residual: best_res,
        best: best.as_slice().to_vec(),
    })
}

/// Exhaustive complementarity enumeration.
///
/// For every index subset `K`, solves `(Mv + q)_K = 0` with `v = 0` off `K`
/// and keeps the candidates with `v >= 0`, `Mv + q >= 0` and natural
/// residual at most `1e-10`. Subsets with a singular principal submatrix are
/// skipped. Candidates within `1e-9` (max-norm) of an earlier one are
/// dropped. Ties are not resolved: all valid solutions are returned.
pub fn enumerate_active_sets(prob: &LcpProblem) -> Result<Vec<LcpSolution>> {
    const FEAS_TOL: f64 = 1e-10;
    const DEDUP_TOL: f64 = 1e-9;

    let n = prob.dim();
    if n > MAX_ENUMERATION_DIM {
        return Err(Error::invalid(format!(
            "active-set enumeration limited to n <= {MAX_ENUMERATION_DIM}, got {n}"
        )));
    }
    // Row-major copy for cache-friendly access in the hot loop.
    let m: Vec<f64> = (0..n * n).map(|k| prob.m[(k / n, k % n)]).collect();
    let q: Vec<f64> = prob.q.iter().copied().collect();
    let scale = m.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));

    let mut found: Vec<LcpSolution> = Vec::new();
    let mut idx = [0usize; MAX_ENUMERATION_DIM];
    let mut a = [0.0f64; MAX_ENUMERATION_DIM * MAX_ENUMERATION_DIM];
    let mut b = [0.0f64; MAX_ENUMERATION_DIM];
    let mut v = vec![0.0; n];

    'subsets: for mask in 0u32..(1u32 << n) {
        let mut k = 0;
        for i in 0..n {
            if mask & (1 << i) != 0 {
                idx[k] = i;
                k += 1;
            }
        }
        // Off K: v = 0, so w = q must be nonnegative there. Cheap prefilter.
        if k == 0 {
            if q.iter().all(|&qi| qi >= -FEAS_TOL) {
                push_unique(&mut found, prob, vec![0.0; n], DEDUP_TOL, FEAS_TOL);
            }
            continue;
        }
        for r in 0..k {
            for c in 0..k {
                a[r * k + c] = m[idx[r] * n + idx[c]];
            }
            b[r] = -q[idx[r]];
        }
        if !gauss_solve(&mut a[..k * k], &mut b[..k], k, 1e-12 * scale) {
            continue;
        }
        for r in 0..k {
            if b[r] < -FEAS_TOL {
                continue 'subsets;
            }
        }
        v.iter_mut().for_each(|x| *x = 0.0);
        for r in 0..k {
            v[idx[r]] = b[r].max(0.0);
        }
        for i in 0..n {
            if mask & (1 << i) == 0 {
                let row = &m[i * n..(i + 1) * n];
                let mut wi = q[i];
                for r in 0..k {
                    wi += row[idx[r]] * v[idx[r]];
                }
                if wi < -FEAS_TOL {
                    continue 'subsets;
                }
            }
        }
        push_unique(&mut found, prob, v.clone(), DEDUP_TOL, FEAS_TOL);
    }
    Ok(found)
}

fn push_unique(found: &mut Vec<LcpSolution>, prob: &LcpProblem, v: Vec<f64>, dedup: f64, tol: f64) {
    let v = DVector::from_vec(v);
    let w = prob.affine(&v);
    if w.iter().any(|&x| x < -tol) {
        return;
    }
    let residual = natural_residual(w.as_slice(), v.as_slice());
    if residual > tol {
        return;
    }
    if found.iter().any(|s| (&s.v - &v).amax() <= dedup) {
        return;
    }
    found.push(LcpSolution {
        v,
        residual,
        iterations: 0,
    });
}

/// In-place Gaussian elimination with partial pivoting on a row-major
/// `k x k` block. Returns false when a pivot falls below `tiny`.
fn gauss_solve(a: &mut [f64], b: &mut [f64], k: usize, tiny: f64) -> bool {
    for col in 0..k {
        let mut piv = col;
        let mut best = a[col * k + col].abs();
        for r in col + 1..k {
            let val = a[r * k + col].abs();
            if val > best {
                best = val;
                piv = r;
            }
        }
        if best <= tiny {
            return false;
        }
        if piv != col {
            for c in 0..k {
                a.swap(col * k + c, piv * k + c);
            }
            b.swap(col, piv);
        }
        let p = a[col * k + col];
        for r in col + 1..k {
            let f = a[r * k + col] / p;
            if f != 0.0 {
                for c in col..k {
                    a[r * k + c] -= f * a[col * k + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for r in (0..k).rev() {
        let mut s = b[r];
        for c in r + 1..k {
            s -= a[r * k + c] * b[c];
        }
        b[r] = s / a[r * k + r];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(rows: &[&[f64]], q: &[f64]) -> LcpProblem {
        LcpProblem::from_rows(rows, q).unwrap()
    }

    #[test]
    fn residual_examples() {
        let a = p(&[&[2.0]], &[-1.0]);
        assert_eq!(
            lcp_residual(&a, &DVector::from_vec(vec![0.5])).unwrap(),
            0.0
        );

        let b = p(&[&[1.0, 0.0], &[0.0, 1.0]], &[1.0, 2.0]);
        assert_eq!(lcp_residual(&b, &DVector::zeros(2)).unwrap(), 0.0);

        let c = p(&[&[1.0, 0.0], &[0.0, 1.0]], &[-1.0, -1.0]);
        let r = lcp_residual(&c, &DVector::zeros(2)).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn residual_rejects_wrong_length() {
        let a = p(&[&[2.0]], &[-1.0]);
        assert!(matches!(
            lcp_residual(&a, &DVector::zeros(2)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn constructor_rejects_bad_data() {
        assert!(LcpProblem::from_rows(&[&[1.0, 2.0]], &[0.0]).is_err());
        assert!(LcpProblem::from_rows(&[&[f64::NAN]], &[0.0]).is_err());
        assert!(LcpProblem::new(DMatrix::identity(2, 2), DVector::zeros(3)).is_err());
    }

    #[test]
    fn pd_solver_examples() {
        let a = p(&[&[1.0]], &[-2.0]);
        let s = solve_lcp_pd(&a, 1e-12).unwrap();
        assert_eq!(s.v[0], 2.0);
        assert_eq!(s.residual, 0.0);

        let b = p(&[&[1.0, 0.0], &[0.0, 1.0]], &[3.0, 5.0]);
        let s = solve_lcp_pd(&b, 1e-12).unwrap();
        assert_eq!(s.v.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn pd_solver_matches_enumeration_nonsymmetric() {
        let a = p(&[&[2.0, 1.0], &[-1.0, 2.0]], &[-1.0, -4.0]);
        let s = solve_lcp_pd(&a, 1e-12).unwrap();
        let oracle = enumerate_active_sets(&a).unwrap();
        assert_eq!(oracle.len(), 1);
        assert!((&s.v - &oracle[0].v).amax() < 1e-8);
        // Interior solve gives v_1 < 0, so v_1 = 0 and 2 v_2 = 4.
        assert!(s.v[0].abs() < 1e-12 && (s.v[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pd_solver_rejects_indefinite() {
        let a = p(&[&[1.0, 0.0], &[0.0, -1.0]], &[-1.0, -1.0]);
        assert!(matches!(
            solve_lcp_pd(&a, 1e-10),
            Err(Error::NotPositiveDefinite(_))
        ));
        // Positive semidefinite but singular is also rejected.
        let b = p(&[&[1.0, 1.0], &[-1.0, 0.0]], &[-1.0, 1.0]);
        assert!(matches!(
            solve_lcp_pd(&b, 1e-10),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn enumeration_examples() {
        let a = p(&[&[1.0]], &[1.0]);
        let s = enumerate_active_sets(&a).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].v[0], 0.0);

        let b = p(&[&[1.0]], &[-1.0]);
        let s = enumerate_active_sets(&b).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].v[0], 1.0);
    }

    #[test]
    fn enumeration_rejects_large_problems() {
        let n = MAX_ENUMERATION_DIM + 1;
        let a = LcpProblem::new(DMatrix::identity(n, n), DVector::zeros(n)).unwrap();
        assert!(enumerate_active_sets(&a).is_err());
    }

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> LcpProblem {
        // Symmetric part = A'A + 0.1 I plus a random skew part.
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let k = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let skew = &k - k.transpose();
        let m = a.transpose() * &a + DMatrix::identity(n, n) * 0.1 + skew;
        let q = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        LcpProblem::new(m, q).unwrap()
    }

    #[test]
    fn pd_solver_agrees_with_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let n = 1 + trial % 6;
            let prob = random_pd(&mut rng, n);
            let s = solve_lcp_pd(&prob, 1e-12).unwrap();
            let oracle = enumerate_active_sets(&prob).unwrap();
            assert_eq!(oracle.len(), 1, "PD LCP has a unique solution");
            assert!(
                (&s.v - &oracle[0].v).amax() < 1e-8,
                "trial {trial}: {} vs {}",
                s.v,
                oracle[0].v
            );
            assert!(s.v.iter().all(|&x| x >= 0.0));
            let w = prob.affine(&s.v);
            assert!(w.iter().all(|&x| x >= -1e-10 * (1.0 + prob.q().norm())));
        }
    }

    #[test]
    fn pgs_converges_on_diagonally_dominant_matrix() {
        let prob = p(
            &[&[4.0, 1.0, -0.5], &[-1.0, 3.0, 0.5], &[0.2, -0.3, 2.0]],
            &[-1.0, 2.0, -3.0],
        );
        let s = projected_gauss_seidel(&prob, 1e-12, DVector::zeros(3)).unwrap();
        let oracle = enumerate_active_sets(&prob).unwrap();
        assert!((&s.v - &oracle[0].v).amax() < 1e-9);
    }

    #[test]
    fn scaling_preserves_solutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let prob = random_pd(&mut rng, 4);
            let lambda: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..10.0)).collect();
            let scaled = prob.scale_rows(&lambda).unwrap();
            let a = enumerate_active_sets(&prob).unwrap();
            let b = enumerate_active_sets(&scaled).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!((&x.v - &y.v).amax() < 1e-9);
            }
        }
    }
}
