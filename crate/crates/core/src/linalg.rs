//! Dense complex linear algebra shared by every other module: Hermitian
//! eigen-decompositions with deterministic bases, PSD square roots, defect
//! operators, compressions, norms and a few least-squares helpers.

use nalgebra::linalg::SVD;
use nalgebra::{ComplexField, DMatrix, DVector, Dyn};
pub use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Dense complex matrix; the carrier for every finite or truncated operator.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Shorthand for a complex scalar.
#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Numerical thresholds used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute singular-value / eigenvalue cutoff for rank decisions.
    pub rank_tol: f64,
    /// Pass threshold for identity residuals.
    pub residual_tol: f64,
    /// Stopping threshold for fixed-point iterations.
    pub convergence_tol: f64,
    /// Points per dimension for grid scans.
    pub grid_points: usize,
    /// Tolerance for grid-limited decisions (boundary limits, mu).
    pub grid_tol: f64,
    /// Tolerance for algebraic membership decisions (root moduli, β sums).
    pub membership_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_tol: 1e-10,
            residual_tol: 1e-8,
            convergence_tol: 1e-12,
            grid_points: 64,
            grid_tol: 1e-3,
            membership_tol: 1e-9,
        }
    }
}

impl Tolerances {
    /// Checks that every tolerance is strictly positive.
    pub fn validate(&self) -> Result<(), LinalgError> {
        let ok = self.rank_tol > 0.0
            && self.residual_tol > 0.0
            && self.convergence_tol > 0.0
            && self.grid_tol > 0.0
            && self.membership_tol > 0.0
            && self.grid_points > 0;
        if ok {
            Ok(())
        } else {
            Err(LinalgError::InvalidTolerances)
        }
    }

    /// Same tolerances with a different residual threshold.
    pub fn with_residual(mut self, residual_tol: f64) -> Self {
        self.residual_tol = residual_tol;
        self
    }
}

/// Errors raised by the linear-algebra layer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (asymmetry {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("matrix has eigenvalue {eigenvalue:.3e} below the negative rank tolerance")]
    IndefiniteBeyondTolerance { eigenvalue: f64 },
    #[error("operator norm {norm:.6} exceeds 1")]
    NotAContraction { norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("tolerances must be strictly positive")]
    InvalidTolerances,
}

fn dims(m: &ComplexMatrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

/// Builds a matrix from rows, rejecting ragged input and non-finite entries.
pub fn matrix_from_rows(rows: &[Vec<Complex64>]) -> Result<ComplexMatrix, LinalgError> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(LinalgError::DimensionMismatch {
            expected: format!("{c} columns in every row"),
            found: "ragged rows".into(),
        });
    }
    let m = ComplexMatrix::from_fn(r, c, |i, j| rows[i][j]);
    ensure_finite(&m)?;
    Ok(m)
}

/// Rejects matrices with NaN or infinite entries.
pub fn ensure_finite(m: &ComplexMatrix) -> Result<(), LinalgError> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Orthonormal basis of a subspace, stored as the columns of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    pub ambient_dim: usize,
    pub basis: ComplexMatrix,
}

impl SubspaceBasis {
    pub fn new(basis: ComplexMatrix) -> Self {
        SubspaceBasis { ambient_dim: basis.nrows(), basis }
    }

    /// The whole ambient space with the standard basis.
    pub fn full(dim: usize) -> Self {
        SubspaceBasis::new(ComplexMatrix::identity(dim, dim))
    }

    /// The zero subspace of an ambient space.
    pub fn zero(dim: usize) -> Self {
        SubspaceBasis::new(ComplexMatrix::zeros(dim, 0))
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthogonal projection onto the subspace, as an ambient matrix.
    pub fn projector(&self) -> ComplexMatrix {
        &self.basis * self.basis.adjoint()
    }

    /// Deviation of the basis from orthonormality.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.dim();
        op_norm(&(self.basis.adjoint() * &self.basis - ComplexMatrix::identity(k, k)))
    }
}

/// Largest singular value; zero for empty matrices.
pub fn op_norm(m: &ComplexMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return 0.0;
    }
    // The Gram matrix of the thinner side keeps the eigenproblem small.
    let gram = if m.nrows() >= m.ncols() {
        m.adjoint() * m
    } else {
        m * m.adjoint()
    };
    if gram.nrows() <= 64 {
        let eig = nalgebra::linalg::SymmetricEigen::new(hermitian_part(&gram));
        let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        // Refine through the singular values when the Gram route loses digits.
        if top > 1e-16 {
            return top.sqrt();
        }
    }
    checked_svd(m)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Full singular value decomposition whose factors are verified to
/// reproduce the input.
///
/// nalgebra's implicit-shift SVD occasionally returns orthogonal factors
/// that do not reproduce the matrix (observed on matrices with many
/// repeated singular values). The product U·Σ·V* is checked against the
/// input; on failure the decomposition is recomputed from the adjoint, from
/// a rescaled copy and finally from the eigendecomposition of the Gram
/// matrix, keeping the most accurate candidate.
pub fn checked_svd<T>(m: &DMatrix<T>) -> SVD<T, Dyn, Dyn>
where
    T: ComplexField<RealField = f64>,
{
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let accept = 1e-12 * scale * (m.nrows().max(m.ncols()).max(1) as f64).sqrt();
    let error = |svd: &SVD<T, Dyn, Dyn>| -> f64 {
        match (&svd.u, &svd.v_t) {
            (Some(u), Some(vt)) => {
                let sigma = DMatrix::from_diagonal(&svd.singular_values.map(T::from_real));
                let rec = u * sigma * vt;
                let e = (rec - m).norm();
                if e.is_finite() { e } else { f64::INFINITY }
            }
            _ => f64::INFINITY,
        }
    };
    let mut best = m.clone().svd(true, true);
    let mut best_err = error(&best);
    if best_err <= accept {
        return best;
    }
    let mut consider = |cand: SVD<T, Dyn, Dyn>| {
        let e = error(&cand);
        if e < best_err {
            best_err = e;
            best = cand;
        }
        best_err <= accept
    };
    // A* = UΣV*  ⇒  A = VΣU*.
    let adj = m.adjoint().svd(true, true);
    let flipped = SVD { u: adj.v_t.map(|v| v.adjoint()), v_t: adj.u.map(|u| u.adjoint()), singular_values: adj.singular_values };
    if consider(flipped) {
        return best;
    }
    // A non-power-of-two rescaling changes the shift sequence.
    let factor = 1.0 / (1.17 * scale);
    let mut scaled = (m * T::from_real(factor)).svd(true, true);
    scaled.singular_values /= factor;
    if consider(scaled) {
        return best;
    }
    // Gram route: V and Σ² from A*A, U = AVΣ⁻¹ completed orthonormally.
    let (rows, cols) = m.shape();
    let eig = nalgebra::SymmetricEigen::new(m.adjoint() * m);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal));
    let r = rows.min(cols);
    let mut v = DMatrix::<T>::zeros(cols, cols);
    for (j, &i) in order.iter().enumerate() {
        v.set_column(j, &eig.eigenvectors.column(i));
    }
    let sv = DVector::from_fn(r, |j, _| eig.eigenvalues[order[j]].max(0.0).sqrt());
    let mut u = DMatrix::<T>::zeros(rows, rows);
    let av = m * &v;
    let mut filled = 0;
    for j in 0..r {
        if sv[j] > 1e-12 * scale {
            u.set_column(j, &(av.column(j) / T::from_real(sv[j])));
            filled += 1;
        }
    }
    // Complete U by Gram–Schmidt against the identity columns.
    let mut next = filled;
    for e in 0..rows {
        if next == rows {
            break;
        }
        let mut col = DVector::<T>::zeros(rows);
        col[e] = T::one();
        for k in 0..next {
            let proj = u.column(k).dotc(&col);
            col -= u.column(k) * proj;
        }
        let nrm = col.norm();
        if nrm > 1e-8 {
            u.set_column(next, &(col / T::from_real(nrm)));
            next += 1;
        }
    }
    let u_thin = u.columns(0, r).into_owned();
    let vt_thin = v.columns(0, r).adjoint();
    consider(SVD { u: Some(u_thin), v_t: Some(vt_thin), singular_values: sv });
    best
}

/// Operator norm of the submatrix selected by row and column index lists.
pub fn submatrix_norm(m: &ComplexMatrix, rows: &[usize], cols: &[usize]) -> f64 {
    op_norm(&submatrix(m, rows, cols))
}

/// Extracts the submatrix with the given row and column indices.
pub fn submatrix(m: &ComplexMatrix, rows: &[usize], cols: &[usize]) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// (M + M*)/2.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Frobenius norm of M − M*, relative to max(1, ‖M‖_F).
pub fn hermitian_residual(m: &ComplexMatrix) -> f64 {
    (m - m.adjoint()).norm() / m.norm().max(1.0)
}

/// Eigen-decomposition of a Hermitian matrix with a reproducible basis.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Eigenvalues in decreasing order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, aligned with `values`.
    pub vectors: ComplexMatrix,
}

/// Eigenvalues closer than this (relative to the spectral scale) share a
/// cluster whose basis is rebuilt canonically.
const CLUSTER_GAP: f64 = 1e-9;

/// Hermitian eigen-decomposition sorted by decreasing eigenvalue.
///
/// Each eigenvector has its first non-negligible entry made real-positive.
/// Degenerate eigenspaces are given the basis obtained by pivoted
/// Gram–Schmidt on the projections of the standard basis vectors, so that the
/// result does not depend on the eigen-solver's arbitrary choice inside a
/// cluster (for example the identity keeps the standard basis).
pub fn hermitian_eigen(m: &ComplexMatrix) -> HermitianEigen {
    let n = m.nrows();
    if n == 0 {
        return HermitianEigen { values: vec![], vectors: ComplexMatrix::zeros(0, 0) };
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    let scale = values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (values[end - 1] - values[end]).abs() <= CLUSTER_GAP * scale {
            end += 1;
        }
        if end - start > 1 {
            let cluster = vectors.columns(start, end - start).into_owned();
            let canonical = canonical_span_basis(&cluster);
            vectors.columns_mut(start, end - start).copy_from(&canonical);
        } else {
            let mut v = vectors.column(start).into_owned();
            normalize_phase(&mut v);
            vectors.set_column(start, &v);
        }
        start = end;
    }
    HermitianEigen { values, vectors }
}

/// Rotates a vector so that its first non-negligible entry is real-positive.
pub fn normalize_phase(v: &mut DVector<Complex64>) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-8 * norm).cloned() {
        let phase = z.conj() / z.norm();
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
}

/// Canonical orthonormal basis for the span of the (orthonormal) columns of
/// `q`: pivoted Gram–Schmidt over the projected standard basis vectors,
/// preferring the lowest index among near-ties.
pub fn canonical_span_basis(q: &ComplexMatrix) -> ComplexMatrix {
    let n = q.nrows();
    let k = q.ncols();
    let proj = q * q.adjoint();
    let mut chosen: Vec<DVector<Complex64>> = Vec::with_capacity(k);
    let mut candidates: Vec<DVector<Complex64>> =
        (0..n).map(|i| proj.column(i).into_owned()).collect();
    for _ in 0..k {
        let norms: Vec<f64> = candidates.iter().map(|c| c.norm()).collect();
        let best = norms.iter().cloned().fold(0.0, f64::max);
        let pick = norms.iter().position(|&x| x >= best * (1.0 - 1e-8)).unwrap_or(0);
        let mut v = candidates[pick].clone();
        for _ in 0..2 {
            for u in &chosen {
                let coef = u.dotc(&v);
                v -= u * coef;
            }
        }
        let nv = v.norm();
        if nv == 0.0 {
            break;
        }
        v /= Complex64::new(nv, 0.0);
        normalize_phase(&mut v);
        for c in candidates.iter_mut() {
            let coef = v.dotc(c);
            *c -= &v * coef;
        }
        chosen.push(v);
    }
    let mut out = ComplexMatrix::zeros(n, chosen.len());
    for (j, v) in chosen.iter().enumerate() {
        out.set_column(j, v);
    }
    out
}

/// Hermitian PSD square root, clamping eigenvalues of magnitude at most
/// `rank_tol` to zero.
pub fn psd_sqrt(m: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::DimensionMismatch { expected: "square".into(), found: dims(m) });
    }
    let asym = hermitian_residual(m);
    if asym > tol.residual_tol {
        return Err(LinalgError::NotHermitian { residual: asym });
    }
    let eig = hermitian_eigen(m);
    if let Some(&low) = eig.values.last() {
        if low < -tol.rank_tol {
            return Err(LinalgError::IndefiniteBeyondTolerance { eigenvalue: low });
        }
    }
    let roots: Vec<f64> =
        eig.values.iter().map(|&l| if l <= tol.rank_tol { 0.0 } else { l.sqrt() }).collect();
    Ok(spectral_combination(&eig.vectors, &roots))
}

/// V·diag(values)·V*.
pub fn spectral_combination(v: &ComplexMatrix, values: &[f64]) -> ComplexMatrix {
    let mut scaled = v.clone();
    for (j, &s) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * v.adjoint()
}

/// Defect operator of a contraction together with its defect space.
#[derive(Debug, Clone)]
pub struct Defect {
    /// D = (I − P*P)^{1/2}.
    pub d: ComplexMatrix,
    /// Orthonormal basis of the closure of Ran D, ordered by decreasing
    /// singular value of D.
    pub space: SubspaceBasis,
    /// Singular values of D on its defect space (aligned with the basis).
    pub values: Vec<f64>,
}

impl Defect {
    /// Defect data of the zero-dimensional defect space.
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Matrix of D restricted to its defect space, as an ambient-to-basis map:
    /// basis*·D.
    pub fn compressed_rows(&self) -> ComplexMatrix {
        self.space.basis.adjoint() * &self.d
    }
}

/// Defect operator D_P = (I − P*P)^{1/2} and a basis for the defect space.
pub fn defect(p: &ComplexMatrix, tol: &Tolerances) -> Result<Defect, LinalgError> {
    if p.nrows() != p.ncols() {
        return Err(LinalgError::DimensionMismatch { expected: "square".into(), found: dims(p) });
    }
    let norm = op_norm(p);
    if norm > 1.0 + tol.rank_tol.max(1e-12) {
        return Err(LinalgError::NotAContraction { norm });
    }
    let n = p.nrows();
    let m = ComplexMatrix::identity(n, n) - p.adjoint() * p;
    defect_from_square(&m, tol)
}

/// Defect data from the Hermitian operator I − P*P (or any PSD operator).
pub fn defect_from_square(m: &ComplexMatrix, tol: &Tolerances) -> Result<Defect, LinalgError> {
    let n = m.nrows();
    let eig = hermitian_eigen(m);
    if let Some(&low) = eig.values.last() {
        if low < -tol.rank_tol.max(1e-12) * 1e2 {
            return Err(LinalgError::IndefiniteBeyondTolerance { eigenvalue: low });
        }
    }
    let roots: Vec<f64> =
        eig.values.iter().map(|&l| if l <= tol.rank_tol { 0.0 } else { l.sqrt() }).collect();
    let rank = roots.iter().filter(|&&r| r > 0.0).count();
    let d = spectral_combination(&eig.vectors, &roots);
    let basis = eig.vectors.columns(0, rank).into_owned();
    Ok(Defect {
        d,
        space: SubspaceBasis { ambient_dim: n, basis },
        values: roots[..rank].to_vec(),
    })
}

/// Matrix of the compression codomain*·T·domain in the two bases.
pub fn compress(
    t: &ComplexMatrix,
    domain: &SubspaceBasis,
    codomain: &SubspaceBasis,
) -> Result<ComplexMatrix, LinalgError> {
    if t.ncols() != domain.ambient_dim || t.nrows() != codomain.ambient_dim {
        return Err(LinalgError::DimensionMismatch {
            expected: format!("{}x{}", codomain.ambient_dim, domain.ambient_dim),
            found: dims(t),
        });
    }
    Ok(codomain.basis.adjoint() * t * &domain.basis)
}

/// Lifts an operator given in subspace bases back to the ambient spaces:
/// codomain·X·domain*.
pub fn lift(x: &ComplexMatrix, domain: &SubspaceBasis, codomain: &SubspaceBasis) -> ComplexMatrix {
    &codomain.basis * x * domain.basis.adjoint()
}

/// Maximum over pairs of ‖T_iT_j − T_jT_i‖.
pub fn commutation_residual(members: &[ComplexMatrix]) -> Result<f64, LinalgError> {
    if let Some(first) = members.first() {
        let n = first.nrows();
        for m in members {
            if m.nrows() != n || m.ncols() != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: format!("{n}x{n}"),
                    found: dims(m),
                });
            }
        }
    }
    let mut worst = 0.0_f64;
    for i in 0..members.len() {
        for j in (i + 1)..members.len() {
            let c = &members[i] * &members[j] - &members[j] * &members[i];
            worst = worst.max(op_norm(&c));
        }
    }
    Ok(worst)
}

/// Unitary polar factor of a square matrix (nearest unitary in Frobenius
/// norm); the orthogonal Procrustes solution.
pub fn polar_unitary(m: &ComplexMatrix) -> ComplexMatrix {
    if m.nrows() == 0 {
        return m.clone();
    }
    let svd = m.clone().svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

/// Result of a real least-squares solve.
#[derive(Debug, Clone)]
pub struct RealLstsq {
    pub x: DVector<f64>,
    /// Singular values of the system matrix, in decreasing order.
    pub singular_values: Vec<f64>,
    /// Numerical rank at the requested relative cutoff.
    pub rank: usize,
}

/// Minimum-norm least-squares solution of A x = b via the SVD, truncating
/// singular values below `rel_cutoff`·σ_max.
pub fn real_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rel_cutoff: f64) -> RealLstsq {
    let cols = a.ncols();
    if cols == 0 {
        return RealLstsq { x: DVector::zeros(0), singular_values: vec![], rank: 0 };
    }
    let svd = checked_svd(a);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut x = DVector::zeros(cols);
    let mut rank = 0;
    for (k, &s) in sv.iter().enumerate() {
        if s > rel_cutoff * smax && s > 0.0 {
            rank += 1;
            let coef = u.column(k).dot(b) / s;
            x += vt.row(k).transpose() * coef;
        }
    }
    let mut sorted = sv.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    RealLstsq { x, singular_values: sorted, rank }
}

/// Stacks the real and imaginary parts of a complex matrix column-major.
pub fn realify(m: &ComplexMatrix) -> DVector<f64> {
    let mut v = DVector::zeros(2 * m.len());
    for (k, z) in m.iter().enumerate() {
        v[2 * k] = z.re;
        v[2 * k + 1] = z.im;
    }
    v
}

/// Inverse of [`realify`] for a matrix of the given shape.
pub fn complexify(v: &[f64], rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |i, j| {
        let k = j * rows + i;
        Complex64::new(v[2 * k], v[2 * k + 1])
    })
}

/// Block-diagonal assembly of square or rectangular blocks.
pub fn block_diag(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Integer power of a square matrix.
pub fn mat_pow(m: &ComplexMatrix, k: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

/// Binomial coefficient C(n, k), zero outside 0 ≤ k ≤ n.
pub fn binomial(n: usize, k: i64) -> f64 {
    if k < 0 || k as usize > n {
        return 0.0;
    }
    let k = k as usize;
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_svd_reproduces_input() {
        let m = ComplexMatrix::from_fn(5, 3, |i, j| c64((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.2));
        let svd = checked_svd(&m);
        let sigma = DMatrix::from_diagonal(&svd.singular_values.map(|s| c64(s, 0.0)));
        let rec = svd.u.unwrap() * sigma * svd.v_t.unwrap();
        assert!((rec - &m).norm() < 1e-12);
    }

    fn diag(values: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&DVector::from_iterator(
            values.len(),
            values.iter().map(|&v| c64(v, 0.0)),
        ))
    }

    #[test]
    fn psd_sqrt_examples() {
        let tol = Tolerances::default();
        let i3 = ComplexMatrix::identity(3, 3);
        assert!(op_norm(&(psd_sqrt(&i3, &tol).unwrap() - &i3)) < 1e-14);
        let z2 = ComplexMatrix::zeros(2, 2);
        assert!(op_norm(&psd_sqrt(&z2, &tol).unwrap()) < 1e-14);
        let r = psd_sqrt(&diag(&[4.0, 9.0]), &tol).unwrap();
        assert!(op_norm(&(r - diag(&[2.0, 3.0]))) < 1e-12);
    }

    #[test]
    fn psd_sqrt_rejects_bad_input() {
        let tol = Tolerances::default();
        let mut m = ComplexMatrix::zeros(2, 2);
        m[(0, 1)] = c64(1.0, 0.0);
        assert!(matches!(psd_sqrt(&m, &tol), Err(LinalgError::NotHermitian { .. })));
        assert!(matches!(
            psd_sqrt(&diag(&[1.0, -0.5]), &tol),
            Err(LinalgError::IndefiniteBeyondTolerance { .. })
        ));
    }

    #[test]
    fn defect_examples() {
        let tol = Tolerances::default();
        let d0 = defect(&ComplexMatrix::zeros(2, 2), &tol).unwrap();
        assert_eq!(d0.dim(), 2);
        assert!(op_norm(&(d0.d - ComplexMatrix::identity(2, 2))) < 1e-14);
        assert!(op_norm(&(d0.space.basis - ComplexMatrix::identity(2, 2))) < 1e-14);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = ComplexMatrix::from_row_slice(2, 2, &[c64(s, 0.0), c64(0.0, s), c64(0.0, s), c64(s, 0.0)]);
        let du = defect(&u, &tol).unwrap();
        assert_eq!(du.dim(), 0);
        assert!(op_norm(&du.d) < 1e-7);

        let dh = defect(&diag(&[0.5]), &tol).unwrap();
        assert_eq!(dh.dim(), 1);
        assert!((dh.d[(0, 0)].re - 3f64.sqrt() / 2.0).abs() < 1e-14);

        assert!(matches!(defect(&diag(&[1.5]), &tol), Err(LinalgError::NotAContraction { .. })));
    }

    #[test]
    fn compress_examples() {
        let full = SubspaceBasis::full(3);
        let i3 = ComplexMatrix::identity(3, 3);
        assert_eq!(compress(&i3, &full, &full).unwrap(), i3);
        let empty = SubspaceBasis::zero(3);
        let out = compress(&diag(&[1.0, 2.0, 3.0]), &empty, &full).unwrap();
        assert_eq!((out.nrows(), out.ncols()), (3, 0));
        let two = SubspaceBasis::new(i3.columns(0, 2).into_owned());
        let c = compress(&diag(&[1.0, 2.0, 3.0]), &two, &two).unwrap();
        assert_eq!(c, diag(&[1.0, 2.0]));
        assert!(compress(&diag(&[1.0, 2.0]), &two, &two).is_err());
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&ComplexMatrix::identity(4, 4)) - 1.0).abs() < 1e-14);
        assert_eq!(op_norm(&ComplexMatrix::zeros(3, 2)), 0.0);
        let m = ComplexMatrix::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(2.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        assert!((op_norm(&m) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn commutation_examples() {
        let a = diag(&[1.0, 2.0]);
        let b = diag(&[3.0, -1.0]);
        assert_eq!(commutation_residual(&[a.clone(), b]).unwrap(), 0.0);
        let a2 = &a * &a;
        assert!(commutation_residual(&[a, a2]).unwrap() < 1e-15);
        let e12 = ComplexMatrix::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        let e21 = e12.transpose();
        assert!((commutation_residual(&[e12, e21]).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_entries_rejected() {
        let rows = vec![vec![c64(f64::NAN, 0.0)]];
        assert_eq!(matrix_from_rows(&rows), Err(LinalgError::NonFinite));
        let ragged = vec![vec![c64(1.0, 0.0)], vec![]];
        assert!(matrix_from_rows(&ragged).is_err());
    }

    #[test]
    fn canonical_cluster_basis_is_standard_for_identity() {
        let eig = hermitian_eigen(&ComplexMatrix::identity(4, 4));
        assert!(op_norm(&(eig.vectors - ComplexMatrix::identity(4, 4))) < 1e-14);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(3, 0), 1.0);
        assert_eq!(binomial(3, 2), 3.0);
        assert_eq!(binomial(3, -1), 0.0);
        assert_eq!(binomial(3, 4), 0.0);
    }
}
