//! Dense linear-algebra kernel for the closed-loop analysis: spectra, Schur
//! tests, orthonormal bases, reachability subspaces and block similarity.
//!
//! Rank and invariance decisions use [`RANK_TOL`] relative to the scale of
//! the matrix involved; eigenvalue classification uses [`CIRCLE_TOL`].

use nalgebra::{Complex, DMatrix, Schur, SVD};

use crate::{Error, Real, Result};

/// Relative tolerance for rank decisions.
pub const RANK_TOL: f64 = 1e-9;

/// Band around the unit circle for eigenvalue classification.
pub const CIRCLE_TOL: f64 = 1e-9;
/// Condition-number ceiling accepted by [`solve_linear`].
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EigenClass {
    Inside,
    OnCircle,
    Outside,
}

impl EigenClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EigenClass::Inside => "inside",
            EigenClass::OnCircle => "on_circle",
            EigenClass::Outside => "outside",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub inside: usize,
    pub on_circle: usize,
    pub outside: usize,
}

/// Eigenvalues of a square matrix, with multiplicity, and the tolerance
/// used to place them relative to the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T: Real> {
    pub eigenvalues: Vec<Complex<T>>,
    pub tol: T,
}

impl<T: Real> Spectrum<T> {
    pub fn classify(&self, lambda: &Complex<T>) -> EigenClass {
        let r = modulus(lambda);
        if r < T::one() - self.tol {
            EigenClass::Inside
        } else if (r - T::one()).abs() <= self.tol {
            EigenClass::OnCircle
        } else {
            EigenClass::Outside
        }
    }

    pub fn counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for l in &self.eigenvalues {
            match self.classify(l) {
                EigenClass::Inside => c.inside += 1,
                EigenClass::OnCircle => c.on_circle += 1,
                EigenClass::Outside => c.outside += 1,
            }
        }
        c
    }

    pub fn spectral_radius(&self) -> T {
        self.eigenvalues.iter().map(modulus).fold(T::zero(), |a, b| a.max(b))
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalues within `radius` of `target`.
    pub fn cluster_size(&self, target: Complex<T>, radius: T) -> usize {
        self.eigenvalues.iter().filter(|l| modulus(&(**l - target)) <= radius).count()
    }

    /// Sum of the eigenvalues (should equal the trace).
    pub fn sum(&self) -> Complex<T> {
        self.eigenvalues.iter().fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
    }
}

/// Orthonormal basis of a subspace, stored as the columns of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis<T: Real> {
    pub columns: DMatrix<T>,
}

impl<T: Real> SubspaceBasis<T> {
    pub fn empty(ambient: usize) -> Self {
        Self { columns: DMatrix::zeros(ambient, 0) }
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    /// `‖BᵀB − I‖_max`.
    pub fn orthonormality_defect(&self) -> T {
        let k = self.dim();
        max_abs(&(self.columns.transpose() * &self.columns - DMatrix::identity(k, k)))
    }

    /// Orthogonal projector `BBᵀ`.
    pub fn projector(&self) -> DMatrix<T> {
        &self.columns * self.columns.transpose()
    }

    /// Largest distance of a column of `other` from this subspace.
    pub fn distance_of(&self, other: &DMatrix<T>) -> T {
        let residual = other - self.projector() * other;
        residual.column_iter().map(|c| c.norm()).fold(T::zero(), |a, b| a.max(b))
    }
}

/// `|λ|` for a complex eigenvalue.
pub fn modulus<T: Real>(lambda: &Complex<T>) -> T {
    lambda.re.hypot(lambda.im)
}

pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, v| a.max(v.abs()))
}

pub fn spectrum<T: Real>(m: &DMatrix<T>) -> Result<Spectrum<T>> {
    spectrum_with_tol(m, T::tol(CIRCLE_TOL))
}

pub fn spectrum_with_tol<T: Real>(m: &DMatrix<T>, tol: T) -> Result<Spectrum<T>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("spectrum of a {:?} matrix", m.shape())));
    }
    if m.nrows() == 0 {
        return Ok(Spectrum { eigenvalues: Vec::new(), tol });
    }
    let mut eigenvalues = schur_eigenvalues(m)?;
    // Descending modulus, then real part, so reports are stable.
    eigenvalues.sort_by(|a, b| {
        modulus(b)
            .partial_cmp(&modulus(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(Spectrum { eigenvalues, tol })
}

/// Iteration budget per Schur attempt, per matrix row.
const SCHUR_ITER_PER_ROW: usize = 100;
const SCHUR_ATTEMPTS: usize = 4;

/// Eigenvalues from the real Schur form. The shifted QR iteration can stall
/// on matrices with exact zero blocks and repeated eigenvalues; when the
/// budget runs out the matrix is replaced by a similar one `QᵀMQ` with a
/// fixed orthogonal `Q` and the decomposition is retried.
fn schur_eigenvalues<T: Real>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    let n = m.nrows();
    for attempt in 0..SCHUR_ATTEMPTS {
        let candidate = if attempt == 0 {
            m.clone()
        } else {
            let q = scrambling_orthogonal::<T>(n, attempt);
            q.transpose() * m * &q
        };
        if let Some(schur) = Schur::try_new(candidate, T::default_epsilon(), SCHUR_ITER_PER_ROW * n) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::EigenFailure)
}

/// Deterministic dense orthogonal matrix, the Q factor of a fixed
/// pseudo-random matrix.
fn scrambling_orthogonal<T: Real>(n: usize, attempt: usize) -> DMatrix<T> {
    let phase = 0.618_033_988_749_895 * attempt as f64 + 0.1;
    let m = DMatrix::from_fn(n, n, |i, j| T::lit((((i * n + j + 1) as f64) * phase * 12.9898).sin()));
    m.qr().q()
}

/// True iff every eigenvalue has modulus below `1 − tol`.
pub fn is_schur<T: Real>(m: &DMatrix<T>, tol: T) -> Result<bool> {
    Ok(spectrum_with_tol(m, tol)?.spectral_radius() < T::one() - tol)
}

/// Largest distance between paired eigenvalues when each entry of `a` is
/// greedily matched to its nearest unused entry of `b`. Returns `None` when
/// the lists differ in length.
pub fn greedy_match_distance<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Option<T> {
    if a.len() != b.len() {
        return None;
    }
    let mut used = vec![false; b.len()];
    let mut worst = T::zero();
    for x in a {
        let (k, dist) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, modulus(&(*x - *y))))
            .min_by(|p, q| p.1.partial_cmp(&q.1).unwrap_or(std::cmp::Ordering::Equal))?;
        used[k] = true;
        worst = worst.max(dist);
    }
    Some(worst)
}

/// Single-linkage clusters of eigenvalues within `radius`, as (centroid, size).
pub fn eigen_clusters<T: Real>(values: &[Complex<T>], radius: T) -> Vec<(Complex<T>, usize)> {
    let mut label: Vec<usize> = (0..values.len()).collect();
    let root = |label: &Vec<usize>, mut i: usize| {
        while label[i] != i {
            i = label[i];
        }
        i
    };
    for i in 0..values.len() {
        for j in 0..i {
            if modulus(&(values[i] - values[j])) <= radius {
                let (ri, rj) = (root(&label, i), root(&label, j));
                label[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut clusters: Vec<(usize, Complex<T>, usize)> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let r = root(&label, i);
        match clusters.iter_mut().find(|c| c.0 == r) {
            Some(c) => {
                c.1 += *v;
                c.2 += 1;
            }
            None => clusters.push((r, *v, 1)),
        }
    }
    clusters.into_iter().map(|(_, sum, n)| (sum / T::from_usize(n).unwrap(), n)).collect()
}

/// Like [`greedy_match_distance`] but on cluster centroids, pairing only
/// clusters of equal size. A defective eigenvalue splits by roughly
/// `ε^(1/m)` under rounding while the mean of its cluster stays accurate.
pub fn clustered_match_distance<T: Real>(a: &[Complex<T>], b: &[Complex<T>], radius: T) -> Option<T> {
    if a.len() != b.len() {
        return None;
    }
    let (ca, cb) = (eigen_clusters(a, radius), eigen_clusters(b, radius));
    let mut used = vec![false; cb.len()];
    let mut worst = T::zero();
    for (x, n) in &ca {
        let (k, dist) = cb
            .iter()
            .enumerate()
            .filter(|(k, c)| !used[*k] && c.1 == *n)
            .map(|(k, c)| (k, modulus(&(*x - c.0))))
            .min_by(|p, q| p.1.partial_cmp(&q.1).unwrap_or(std::cmp::Ordering::Equal))?;
        used[k] = true;
        worst = worst.max(dist);
    }
    Some(worst)
}

/// Orthonormal basis of `1_N^⊥ ⊗ R^d`: `R` with `RᵀR = I` and `Rᵀ(1_N ⊗ I_d) = 0`.
///
/// Built from the Helmert vectors `(1, …, 1, −k, 0, …)/√(k(k+1))`.
pub fn ones_complement<T: Real>(n_agents: usize, d: usize) -> SubspaceBasis<T> {
    let n = n_agents.max(1);
    let mut helmert = DMatrix::<T>::zeros(n, n - 1);
    for k in 1..n {
        let scale = T::one() / T::from_usize(k * (k + 1)).unwrap().sqrt();
        for i in 0..k {
            helmert[(i, k - 1)] = scale;
        }
        helmert[(k, k - 1)] = -T::from_usize(k).unwrap() * scale;
    }
    SubspaceBasis { columns: helmert.kronecker(&DMatrix::identity(d, d)) }
}

/// Appends the components of `candidates` orthogonal to `basis` (two passes
/// of Gram–Schmidt) whose norm exceeds `threshold`. Returns how many columns
/// were added.
fn extend_orthonormal<T: Real>(basis: &mut Vec<nalgebra::DVector<T>>, candidates: &DMatrix<T>, threshold: T) -> usize {
    let mut added = 0;
    for c in candidates.column_iter() {
        let mut v = c.clone_owned();
        for _ in 0..2 {
            for q in basis.iter() {
                let proj = q.dot(&v);
                v.axpy(-proj, q, T::one());
            }
        }
        let norm = v.norm();
        if norm > threshold {
            basis.push(v / norm);
            added += 1;
        }
    }
    added
}

fn basis_from_columns<T: Real>(ambient: usize, cols: Vec<nalgebra::DVector<T>>) -> SubspaceBasis<T> {
    if cols.is_empty() {
        SubspaceBasis::empty(ambient)
    } else {
        SubspaceBasis { columns: DMatrix::from_columns(&cols) }
    }
}

/// Orthonormal basis of the column space of `m`.
pub fn column_space<T: Real>(m: &DMatrix<T>) -> SubspaceBasis<T> {
    let scale = max_abs(m).max(T::one());
    let mut cols = Vec::new();
    extend_orthonormal(&mut cols, m, T::tol(RANK_TOL) * scale);
    basis_from_columns(m.nrows(), cols)
}

/// Smallest `F0`-invariant subspace containing the image of `B0`.
///
/// Krylov images `B0, F0·B0, F0²·B0, …` are orthogonalized against the
/// growing basis at every step; only the newly added directions are pushed
/// through `F0` again.
pub fn reachable_subspace<T: Real>(f0: &DMatrix<T>, b0: &DMatrix<T>) -> Result<SubspaceBasis<T>> {
    let n = f0.nrows();
    if !f0.is_square() || b0.nrows() != n {
        return Err(Error::Dimension(format!("pair ({:?}, {:?})", f0.shape(), b0.shape())));
    }
    let scale = max_abs(f0).max(max_abs(b0)).max(T::one());
    let threshold = T::tol(RANK_TOL) * scale;
    let mut cols = Vec::new();
    let mut fresh = extend_orthonormal(&mut cols, b0, threshold);
    while fresh > 0 && cols.len() < n {
        let start = cols.len() - fresh;
        let newest = DMatrix::from_columns(&cols[start..]);
        fresh = extend_orthonormal(&mut cols, &(f0 * newest), threshold);
    }
    Ok(basis_from_columns(n, cols))
}

/// Orthonormal basis of `{w : wᵀ M = 0}`.
pub fn left_null_space<T: Real>(m: &DMatrix<T>) -> SubspaceBasis<T> {
    let rows = m.nrows();
    // Pad to at least square so the thin SVD returns a full U.
    let padded = if m.ncols() < rows {
        let mut p = DMatrix::zeros(rows, rows);
        p.view_mut((0, 0), m.shape()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, true, false);
    let u = svd.u.expect("U requested");
    let sigma_max = svd.singular_values.iter().fold(T::zero(), |a, v| a.max(*v));
    let threshold = T::tol(RANK_TOL) * sigma_max.max(T::one());
    let cols: Vec<_> = (0..rows)
        .filter(|&k| svd.singular_values[k] <= threshold)
        .map(|k| u.column(k).clone_owned())
        .collect();
    basis_from_columns(rows, cols)
}

/// Left kernel of `[F0 − I, B0]`: directions that fail the PBH reachability
/// test at eigenvalue 1.
pub fn pbh_unreachable_left_kernel<T: Real>(f0: &DMatrix<T>, b0: &DMatrix<T>) -> Result<SubspaceBasis<T>> {
    let n = f0.nrows();
    if !f0.is_square() || b0.nrows() != n {
        return Err(Error::Dimension(format!("pair ({:?}, {:?})", f0.shape(), b0.shape())));
    }
    let mut stacked = DMatrix::zeros(n, n + b0.ncols());
    stacked.view_mut((0, 0), (n, n)).copy_from(&(f0 - DMatrix::identity(n, n)));
    stacked.view_mut((0, n), b0.shape()).copy_from(b0);
    Ok(left_null_space(&stacked))
}

/// Blocks of `TᵀFT` for `T = [T1 T2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBlocks<T: Real> {
    /// `T1ᵀ F T1`, the restriction to span T1.
    pub internal: DMatrix<T>,
    /// `T1ᵀ F T2`.
    pub coupling: DMatrix<T>,
    /// `T2ᵀ F T2`, the induced map on the complement.
    pub external: DMatrix<T>,
    /// `T2ᵀ F T1`, zero when span T1 is F-invariant.
    pub lower: DMatrix<T>,
    /// `‖T2ᵀ F T1‖_max`.
    pub residual: T,
}

pub fn similarity_blocks<T: Real>(
    f: &DMatrix<T>,
    t1: &SubspaceBasis<T>,
    t2: &SubspaceBasis<T>,
) -> Result<SimilarityBlocks<T>> {
    let n = f.nrows();
    if !f.is_square() || t1.ambient_dim() != n || t2.ambient_dim() != n || t1.dim() + t2.dim() != n {
        return Err(Error::Dimension(format!(
            "F is {:?}, T1 is {:?}, T2 is {:?}",
            f.shape(),
            t1.columns.shape(),
            t2.columns.shape()
        )));
    }
    let t = stack_columns(&t1.columns, &t2.columns);
    let defect = max_abs(&(t.transpose() * &t - DMatrix::identity(n, n)));
    if defect > T::tol(RANK_TOL) {
        return Err(Error::NotOrthonormal(defect.as_f64()));
    }
    let f_t1 = f * &t1.columns;
    let f_t2 = f * &t2.columns;
    let lower = t2.columns.transpose() * &f_t1;
    let residual = max_abs(&lower);
    Ok(SimilarityBlocks {
        internal: t1.columns.transpose() * f_t1,
        coupling: t1.columns.transpose() * &f_t2,
        external: t2.columns.transpose() * f_t2,
        lower,
        residual,
    })
}

pub fn stack_columns<T: Real>(left: &DMatrix<T>, right: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    out
}

pub fn stack_rows<T: Real>(top: &DMatrix<T>, bottom: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

pub fn block_diagonal<T: Real>(blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Solves `A X = B` for nonsingular `A`.
pub fn solve_linear<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !a.is_square() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!("system {:?} with rhs {:?}", a.shape(), b.shape())));
    }
    let sv = a.singular_values();
    let (hi, lo) = sv.iter().fold((T::zero(), T::max_value().unwrap()), |(h, l), v| (h.max(*v), l.min(*v)));
    let condition = if lo > T::zero() { hi / lo } else { T::max_value().unwrap() };
    if a.nrows() > 0 && condition > T::lit(MAX_CONDITION) {
        return Err(Error::Singular { condition: condition.as_f64() });
    }
    a.clone().lu().solve(b).ok_or(Error::Singular { condition: condition.as_f64() })
}

/// Minimum-norm least-squares solution of `A X ≈ B` and its Frobenius residual.
pub fn least_squares<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<(DMatrix<T>, T)> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!("system {:?} with rhs {:?}", a.shape(), b.shape())));
    }
    let svd = SVD::new(a.clone(), true, true);
    let sigma_max = svd.singular_values.iter().fold(T::zero(), |acc, v| acc.max(*v));
    let x = svd
        .solve(b, T::tol(RANK_TOL) * sigma_max.max(T::one()))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, DVector};

    fn reals(s: &Spectrum<f64>) -> Vec<f64> {
        s.eigenvalues.iter().map(|l| l.re).collect()
    }

    #[test]
    fn spectrum_of_metropolis_path() {
        // det(A − λI) = −λ(λ − 1)(λ − 2/3).
        let a = dmatrix![2.0 / 3.0, 1.0 / 3.0, 0.0; 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0; 0.0, 1.0 / 3.0, 2.0 / 3.0];
        let s = spectrum(&a).unwrap();
        let re = reals(&s);
        assert_abs_diff_eq!(re[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(re[1], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(re[2], 0.0, epsilon = 1e-12);
        assert!(s.eigenvalues.iter().all(|l| l.im.abs() < 1e-12));
    }

    #[test]
    fn spectrum_simple_cases() {
        let s = spectrum(&DMatrix::<f64>::identity(3, 3)).unwrap();
        assert_eq!(reals(&s), vec![1.0, 1.0, 1.0]);
        assert_eq!(s.counts(), ClassCounts { inside: 0, on_circle: 3, outside: 0 });
        let s = spectrum(&dmatrix![0.5, 0.0; 0.0, -0.2]).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.eigenvalues[1].re, -0.2, epsilon = 1e-15);
        assert_eq!(s.counts().inside, 2);
    }

    #[test]
    fn spectrum_rejects_non_square() {
        assert!(spectrum(&DMatrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn rotation_has_complex_pair() {
        let (c, s) = (0.6_f64, 0.8_f64);
        let sp = spectrum(&dmatrix![c, -s; s, c]).unwrap();
        assert_abs_diff_eq!(sp.eigenvalues[0].norm(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sp.eigenvalues[0].im.abs(), 0.8_f64, epsilon = 1e-14);
        assert_eq!(sp.counts().on_circle, 2);
    }

    #[test]
    fn schur_test() {
        assert!(is_schur(&(DMatrix::<f64>::identity(3, 3) * 0.9), 1e-9).unwrap());
        let a = dmatrix![0.5, 0.5; 0.25, 0.75];
        assert!(!is_schur(&a, 1e-9).unwrap());
    }

    #[test]
    fn ones_complement_properties() {
        let r = ones_complement::<f64>(2, 1);
        assert_eq!(r.dim(), 1);
        let v = r.columns.column(0);
        assert_abs_diff_eq!(v[0].abs(), 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[0], -v[1], epsilon = 1e-15);
        assert_eq!(ones_complement::<f64>(1, 3).dim(), 0);
        for (n, d) in [(3, 1), (4, 2), (6, 3)] {
            let r = ones_complement::<f64>(n, d);
            let ones = DMatrix::<f64>::from_element(n, 1, 1.0).kronecker(&DMatrix::identity(d, d));
            assert_eq!(r.dim(), (n - 1) * d);
            assert!(max_abs(&(r.columns.transpose() * ones)) <= 1e-12);
            assert!(r.orthonormality_defect() <= 1e-12);
        }
    }

    #[test]
    fn reachable_subspace_cases() {
        let full = reachable_subspace(&DMatrix::<f64>::zeros(3, 3), &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(full.dim(), 3);
        let e1 = dmatrix![1.0; 0.0];
        let v = reachable_subspace(&DMatrix::<f64>::identity(2, 2), &e1).unwrap();
        assert_eq!(v.dim(), 1);
        assert_abs_diff_eq!(v.columns[(0, 0)].abs(), 1.0, epsilon = 1e-15);
        // Shift register: e1 → e2 → e3.
        let shift = dmatrix![0.0, 0.0, 0.0; 1.0, 0.0, 0.0; 0.0, 1.0, 0.0];
        let v = reachable_subspace(&shift, &dmatrix![1.0; 0.0; 0.0]).unwrap();
        assert_eq!(v.dim(), 3);
    }

    #[test]
    fn pbh_kernel_of_controllable_pair_is_empty() {
        let k = pbh_unreachable_left_kernel(&DMatrix::<f64>::zeros(3, 3), &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(k.dim(), 0);
        let k = pbh_unreachable_left_kernel(&DMatrix::<f64>::identity(2, 2), &dmatrix![1.0; 0.0]).unwrap();
        assert_eq!(k.dim(), 1);
        assert_abs_diff_eq!(k.columns[(1, 0)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn similarity_of_identity() {
        let t1 = SubspaceBasis { columns: dmatrix![1.0; 0.0; 0.0] };
        let t2 = SubspaceBasis { columns: dmatrix![0.0, 0.0; 1.0, 0.0; 0.0, 1.0] };
        let b = similarity_blocks(&DMatrix::<f64>::identity(3, 3), &t1, &t2).unwrap();
        assert_eq!(b.internal, DMatrix::identity(1, 1));
        assert_eq!(b.external, DMatrix::identity(2, 2));
        assert_eq!(b.coupling, DMatrix::zeros(1, 2));
        assert_eq!(b.residual, 0.0);
    }

    #[test]
    fn similarity_of_block_triangular() {
        let f = dmatrix![0.3, 2.0; 0.0, 1.0];
        let t1 = SubspaceBasis { columns: dmatrix![1.0; 0.0] };
        let t2 = SubspaceBasis { columns: dmatrix![0.0; 1.0] };
        let b = similarity_blocks(&f, &t1, &t2).unwrap();
        assert_eq!(b.residual, 0.0);
        assert_eq!(b.coupling[(0, 0)], 2.0);
        let bad = SubspaceBasis { columns: dmatrix![1.0; 1.0] };
        assert!(matches!(similarity_blocks(&f, &t1, &bad), Err(Error::NotOrthonormal(_))));
    }

    #[test]
    fn linear_solves() {
        let b = dmatrix![1.0, 2.0; 3.0, 4.0];
        assert_eq!(solve_linear(&DMatrix::identity(2, 2), &b).unwrap(), b);
        let x = solve_linear(&dmatrix![2.0, 0.0; 0.0, 4.0], &dmatrix![2.0; 4.0]).unwrap();
        assert_abs_diff_eq!(x, dmatrix![1.0; 1.0], epsilon = 1e-15);
        let singular = dmatrix![1.0, 2.0; 2.0, 4.0];
        assert!(matches!(solve_linear(&singular, &dmatrix![1.0; 1.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn least_squares_inconsistent_system() {
        // x = 1 and x = 3: best fit 2, residual √2.
        let (x, r) = least_squares(&dmatrix![1.0; 1.0], &dmatrix![1.0; 3.0]).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r, 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn greedy_matching() {
        let a = [Complex::new(1.0, 0.0), Complex::new(0.5, 0.0)];
        let b = [Complex::new(0.5, 1e-10), Complex::new(1.0, 0.0)];
        assert!(greedy_match_distance(&a, &b).unwrap() <= 1e-10);
        assert!(greedy_match_distance(&a, &b[..1]).is_none());
    }

    #[test]
    fn column_space_rank() {
        let m = dmatrix![1.0, 2.0, 0.0; 2.0, 4.0, 0.0; 0.0, 0.0, 1.0];
        let b = column_space(&m);
        assert_eq!(b.dim(), 2);
        assert!(b.distance_of(&m) < 1e-12);
        let v = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!(b.distance_of(&DMatrix::from_columns(&[v])) < 1e-12);
    }

    #[test]
    fn jordan_block_centroids_match() {
        // Perturbed 2x2 Jordan block: eigenvalues split by sqrt(1e-16).
        let m = dmatrix![0.0, 1.0; 1e-16, 0.0];
        let split = spectrum(&m).unwrap().eigenvalues;
        let exact = vec![Complex::new(0.0, 0.0); 2];
        assert!(greedy_match_distance(&split, &exact).unwrap() > 1e-9);
        assert!(clustered_match_distance(&split, &exact, 1e-6).unwrap() <= 1e-15);
        let clusters = eigen_clusters(&[Complex::new(1.0, 0.0), Complex::new(1.0 + 1e-9, 0.0), Complex::new(0.5, 0.0)], 1e-6);
        assert_eq!(clusters.iter().map(|c| c.1).collect::<Vec<_>>(), vec![2, 1]);
    }

}
