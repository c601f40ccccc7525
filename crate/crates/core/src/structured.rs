//! Structured operators on H²(E) and L²(E): trigonometric-polynomial
//! symbols, truncated Hardy (block-Toeplitz) and Laurent multipliers, the
//! backward shift, direct sums, and their finite materializations.
//!
//! Coordinates of a materialized Hardy space are ordered mode-major: index
//! `k·d + a` is Fourier mode `k ∈ 0..=N`, component `a`. Laurent spaces use
//! modes `−N..=N` at position `(m + N)·d + a`.

use crate::linalg::{op_norm, ComplexMatrix, Tolerances};
use num_complex::Complex64;

/// Errors raised by structured-operator manipulation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StructuredError {
    #[error("incompatible operators: {0}")]
    IncompatibleOperators(String),
    #[error("matrix is not block-Toeplitz on the interior window (structural residual {residual:.3e})")]
    NotToeplitz { residual: f64 },
    #[error("strong-limit iteration did not converge after {iterations} steps")]
    NoConvergence { iterations: usize },
    #[error("operator norm {norm:.6} exceeds 1")]
    NotAContraction { norm: f64 },
    #[error("invalid symbol: {0}")]
    InvalidSymbol(String),
    #[error("invalid truncation: interior margin {margin} must be below N = {n}")]
    InvalidTruncation { n: usize, margin: usize },
}

/// Matrix-valued trigonometric polynomial Σ_{k=−neg}^{pos} C_k e^{ikt}.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolySymbol {
    pub block_dim: usize,
    pub degree_neg: usize,
    pub degree_pos: usize,
    /// Coefficient blocks; entry `k + degree_neg` holds C_k.
    pub coeffs: Vec<ComplexMatrix>,
}

impl TrigPolySymbol {
    /// Builds a symbol from coefficients C_{−neg}, …, C_{pos}.
    pub fn new(degree_neg: usize, coeffs: Vec<ComplexMatrix>) -> Result<Self, StructuredError> {
        let first = coeffs
            .first()
            .ok_or_else(|| StructuredError::InvalidSymbol("no coefficients".into()))?;
        let d = first.nrows();
        if coeffs.iter().any(|c| c.nrows() != d || c.ncols() != d) {
            return Err(StructuredError::InvalidSymbol("coefficient blocks differ in size".into()));
        }
        if degree_neg >= coeffs.len() {
            return Err(StructuredError::InvalidSymbol("degree_neg exceeds coefficient count".into()));
        }
        let degree_pos = coeffs.len() - 1 - degree_neg;
        Ok(TrigPolySymbol { block_dim: d, degree_neg, degree_pos, coeffs })
    }

    /// Analytic symbol C_0 + C_1 z + … .
    pub fn analytic(coeffs: Vec<ComplexMatrix>) -> Result<Self, StructuredError> {
        Self::new(0, coeffs)
    }

    /// Constant symbol.
    pub fn constant(c: ComplexMatrix) -> Self {
        Self::new(0, vec![c]).expect("single square block")
    }

    /// Single-frequency symbol C·e^{ikt}.
    pub fn monomial(k: i64, c: ComplexMatrix) -> Self {
        let d = c.nrows();
        let zero = ComplexMatrix::zeros(d, d);
        if k >= 0 {
            let mut coeffs = vec![zero; k as usize + 1];
            coeffs[k as usize] = c;
            Self::new(0, coeffs).expect("valid monomial")
        } else {
            let neg = (-k) as usize;
            let mut coeffs = vec![zero; neg + 1];
            coeffs[0] = c;
            Self::new(neg, coeffs).expect("valid monomial")
        }
    }

    /// Scalar polynomial Σ c_k e^{ikt} times the identity of size `block_dim`.
    pub fn scalar(degree_neg: usize, coeffs: &[Complex64], block_dim: usize) -> Self {
        let blocks = coeffs
            .iter()
            .map(|&c| ComplexMatrix::identity(block_dim, block_dim) * c)
            .collect();
        Self::new(degree_neg, blocks).expect("valid scalar symbol")
    }

    /// Coefficient C_k, or `None` outside the stored range.
    pub fn coeff(&self, k: i64) -> Option<&ComplexMatrix> {
        let idx = k + self.degree_neg as i64;
        if idx < 0 {
            return None;
        }
        self.coeffs.get(idx as usize)
    }

    /// True when no negative-frequency coefficient is present.
    pub fn is_analytic(&self) -> bool {
        self.degree_neg == 0
    }

    /// Σ C_k e^{ikt}.
    pub fn eval(&self, t: f64) -> ComplexMatrix {
        self.eval_z(Complex64::from_polar(1.0, t))
    }

    /// Σ C_k z^k (z ≠ 0 when negative frequencies are present).
    pub fn eval_z(&self, z: Complex64) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.block_dim, self.block_dim);
        for (idx, c) in self.coeffs.iter().enumerate() {
            let k = idx as i32 - self.degree_neg as i32;
            out += c * z.powi(k);
        }
        out
    }

    /// Symbol of the product operator: convolution of coefficients.
    pub fn mul(&self, other: &TrigPolySymbol) -> Result<TrigPolySymbol, StructuredError> {
        if self.block_dim != other.block_dim {
            return Err(StructuredError::IncompatibleOperators("block dimensions differ".into()));
        }
        let d = self.block_dim;
        let len = self.coeffs.len() + other.coeffs.len() - 1;
        let mut coeffs = vec![ComplexMatrix::zeros(d, d); len];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        TrigPolySymbol::new(self.degree_neg + other.degree_neg, coeffs)
    }

    /// Pointwise adjoint: coefficient k becomes C_{−k}*.
    pub fn adjoint(&self) -> TrigPolySymbol {
        let coeffs = self.coeffs.iter().rev().map(|c| c.adjoint()).collect();
        TrigPolySymbol::new(self.degree_pos, coeffs).expect("valid adjoint")
    }

    /// Drops outer coefficients whose norm is at most `tol`.
    pub fn trimmed(&self, tol: f64) -> TrigPolySymbol {
        let keep: Vec<bool> = self.coeffs.iter().map(|c| op_norm(c) > tol).collect();
        let zero_idx = self.degree_neg;
        let lo = keep.iter().position(|&k| k).unwrap_or(zero_idx).min(zero_idx);
        let hi = keep.iter().rposition(|&k| k).unwrap_or(zero_idx).max(zero_idx);
        TrigPolySymbol::new(zero_idx - lo, self.coeffs[lo..=hi].to_vec()).expect("valid trim")
    }

    /// Largest absolute frequency with a stored coefficient.
    pub fn total_degree(&self) -> usize {
        self.degree_neg.max(self.degree_pos)
    }
}

/// What the strong limit of PⁿP*ⁿ is known to be, when known analytically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AstarHint {
    Zero,
    Identity,
    Unknown,
}

/// The shape of a structured operator.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// A plain finite block.
    Finite(ComplexMatrix),
    /// Multiplication by an analytic symbol on H²(C^d).
    HardyMultiplier(TrigPolySymbol),
    /// Multiplication by a trigonometric polynomial on L²(C^d).
    LaurentMultiplier(TrigPolySymbol),
    /// Orthogonal direct sum.
    DirectSum(Vec<StructuredOperator>),
    /// Backward shift M_z* on H²(C^d).
    HardyShiftAdjoint(usize),
    /// Adjoint of an operator whose adjoint has no closed symbolic form
    /// (Hardy multipliers); materialized on demand.
    MaterializedAdjoint(Box<StructuredOperator>),
}

/// Structured operator with its analytic 𝒜_* hint.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredOperator {
    pub kind: OperatorKind,
    pub astar_hint: AstarHint,
}

/// Truncation of Hardy (modes 0..=N) and Laurent (modes −N..=N) spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationOrder {
    pub n: usize,
    /// Modes within this distance of a truncation edge are excluded from
    /// residual checks.
    pub interior_margin: usize,
}

impl TruncationOrder {
    pub fn new(n: usize, interior_margin: usize) -> Result<Self, StructuredError> {
        if n == 0 || interior_margin >= n {
            return Err(StructuredError::InvalidTruncation { n, margin: interior_margin });
        }
        Ok(TruncationOrder { n, interior_margin })
    }

    /// Truncation whose margin is the symbol degree plus two.
    pub fn for_degree(n: usize, degree: usize) -> Result<Self, StructuredError> {
        Self::new(n, degree + 2)
    }

    /// Highest Hardy mode treated as interior.
    pub fn window(&self) -> usize {
        self.n - self.interior_margin
    }
}

impl Default for TruncationOrder {
    fn default() -> Self {
        TruncationOrder { n: 64, interior_margin: 3 }
    }
}

impl StructuredOperator {
    pub fn finite(m: ComplexMatrix) -> Self {
        StructuredOperator { kind: OperatorKind::Finite(m), astar_hint: AstarHint::Unknown }
    }

    pub fn hardy(symbol: TrigPolySymbol) -> Result<Self, StructuredError> {
        if !symbol.is_analytic() {
            return Err(StructuredError::InvalidSymbol("Hardy multipliers need analytic symbols".into()));
        }
        Ok(StructuredOperator { kind: OperatorKind::HardyMultiplier(symbol), astar_hint: AstarHint::Unknown })
    }

    pub fn laurent(symbol: TrigPolySymbol) -> Self {
        // A unitary monomial symbol gives a unitary operator, so PⁿP*ⁿ = I.
        let hint = if symbol.coeffs.iter().filter(|c| op_norm(c) > 0.0).count() == 1 {
            let c = symbol.coeffs.iter().find(|c| op_norm(c) > 0.0).unwrap();
            let d = c.nrows();
            if op_norm(&(c.adjoint() * c - ComplexMatrix::identity(d, d))) < 1e-14 {
                AstarHint::Identity
            } else {
                AstarHint::Unknown
            }
        } else {
            AstarHint::Unknown
        };
        StructuredOperator { kind: OperatorKind::LaurentMultiplier(symbol), astar_hint: hint }
    }

    pub fn direct_sum(children: Vec<StructuredOperator>) -> Result<Self, StructuredError> {
        if children.is_empty() {
            return Err(StructuredError::IncompatibleOperators("empty direct sum".into()));
        }
        let hint = if children.iter().all(|c| c.astar_hint == AstarHint::Zero) {
            AstarHint::Zero
        } else if children.iter().all(|c| c.astar_hint == AstarHint::Identity) {
            AstarHint::Identity
        } else {
            AstarHint::Unknown
        };
        Ok(StructuredOperator { kind: OperatorKind::DirectSum(children), astar_hint: hint })
    }

    pub fn shift_adjoint(block_dim: usize) -> Self {
        StructuredOperator { kind: OperatorKind::HardyShiftAdjoint(block_dim), astar_hint: AstarHint::Identity }
    }

    /// Dimension of the materialization at a truncation order.
    pub fn dim_at(&self, trunc: &TruncationOrder) -> usize {
        match &self.kind {
            OperatorKind::Finite(m) => m.nrows(),
            OperatorKind::HardyMultiplier(s) => (trunc.n + 1) * s.block_dim,
            OperatorKind::LaurentMultiplier(s) => (2 * trunc.n + 1) * s.block_dim,
            OperatorKind::DirectSum(children) => children.iter().map(|c| c.dim_at(trunc)).sum(),
            OperatorKind::HardyShiftAdjoint(d) => (trunc.n + 1) * d,
            OperatorKind::MaterializedAdjoint(inner) => inner.dim_at(trunc),
        }
    }

    /// Indices of coordinates away from every truncation edge.
    pub fn interior_indices(&self, trunc: &TruncationOrder) -> Vec<usize> {
        let w = trunc.window();
        match &self.kind {
            OperatorKind::Finite(m) => (0..m.nrows()).collect(),
            OperatorKind::HardyMultiplier(s) => (0..(w + 1) * s.block_dim).collect(),
            OperatorKind::HardyShiftAdjoint(d) => (0..(w + 1) * d).collect(),
            OperatorKind::LaurentMultiplier(s) => {
                let d = s.block_dim;
                let lo = trunc.interior_margin * d;
                (lo..(2 * trunc.n + 1) * d - lo).collect()
            }
            OperatorKind::MaterializedAdjoint(inner) => inner.interior_indices(trunc),
            OperatorKind::DirectSum(children) => {
                let mut out = Vec::new();
                let mut offset = 0;
                for c in children {
                    out.extend(c.interior_indices(trunc).into_iter().map(|i| i + offset));
                    offset += c.dim_at(trunc);
                }
                out
            }
        }
    }
}

/// Block-Toeplitz matrix of a symbol on `modes` consecutive Fourier modes:
/// block (r, c) is C_{r−c}.
fn toeplitz_blocks(symbol: &TrigPolySymbol, modes: usize) -> ComplexMatrix {
    let d = symbol.block_dim;
    let mut out = ComplexMatrix::zeros(modes * d, modes * d);
    for r in 0..modes {
        for c in 0..modes {
            if let Some(block) = symbol.coeff(r as i64 - c as i64) {
                out.view_mut((r * d, c * d), (d, d)).copy_from(block);
            }
        }
    }
    out
}

/// Finite realization of a structured operator at a truncation order.
pub fn materialize(op: &StructuredOperator, trunc: &TruncationOrder) -> ComplexMatrix {
    match &op.kind {
        OperatorKind::Finite(m) => m.clone(),
        OperatorKind::HardyMultiplier(s) => toeplitz_blocks(s, trunc.n + 1),
        OperatorKind::LaurentMultiplier(s) => toeplitz_blocks(s, 2 * trunc.n + 1),
        OperatorKind::DirectSum(children) => {
            let blocks: Vec<ComplexMatrix> = children.iter().map(|c| materialize(c, trunc)).collect();
            crate::linalg::block_diag(&blocks)
        }
        OperatorKind::HardyShiftAdjoint(d) => {
            let shift = TrigPolySymbol::monomial(1, ComplexMatrix::identity(*d, *d));
            toeplitz_blocks(&shift, trunc.n + 1).adjoint()
        }
        OperatorKind::MaterializedAdjoint(inner) => materialize(inner, trunc).adjoint(),
    }
}

/// Result of composing two structured operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub op: StructuredOperator,
    /// True when the product had to be materialized at the default truncation.
    pub lossy: bool,
}

fn is_identity(m: &ComplexMatrix) -> bool {
    m.nrows() == m.ncols() && *m == ComplexMatrix::identity(m.nrows(), m.ncols())
}

/// Product a·b, exact at symbol level where possible.
pub fn compose(
    a: &StructuredOperator,
    b: &StructuredOperator,
    default_trunc: &TruncationOrder,
) -> Result<Composition, StructuredError> {
    use OperatorKind::*;
    let exact = |op| Ok(Composition { op, lossy: false });
    match (&a.kind, &b.kind) {
        (Finite(x), Finite(y)) => {
            if x.ncols() != y.nrows() {
                return Err(StructuredError::IncompatibleOperators("finite block sizes differ".into()));
            }
            exact(StructuredOperator::finite(x * y))
        }
        (Finite(x), _) if is_identity(x) && x.nrows() == b.dim_at(default_trunc) => exact(b.clone()),
        (_, Finite(y)) if is_identity(y) && y.nrows() == a.dim_at(default_trunc) => exact(a.clone()),
        (HardyMultiplier(x), HardyMultiplier(y)) => exact(StructuredOperator::hardy(x.mul(y)?)?),
        (LaurentMultiplier(x), LaurentMultiplier(y)) => exact(StructuredOperator::laurent(x.mul(y)?)),
        (DirectSum(xs), DirectSum(ys)) if xs.len() == ys.len() => {
            let mut lossy = false;
            let mut parts = Vec::with_capacity(xs.len());
            for (x, y) in xs.iter().zip(ys) {
                let c = compose(x, y, default_trunc)?;
                lossy |= c.lossy;
                parts.push(c.op);
            }
            Ok(Composition { op: StructuredOperator::direct_sum(parts)?, lossy })
        }
        _ => {
            let (x, y) = (materialize(a, default_trunc), materialize(b, default_trunc));
            if x.ncols() != y.nrows() {
                return Err(StructuredError::IncompatibleOperators(format!(
                    "materialized sizes {}x{} and {}x{}",
                    x.nrows(),
                    x.ncols(),
                    y.nrows(),
                    y.ncols()
                )));
            }
            Ok(Composition { op: StructuredOperator::finite(x * y), lossy: true })
        }
    }
}

/// Result of taking a structured adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointResult {
    pub op: StructuredOperator,
    /// True when the adjoint only exists as an on-demand materialization.
    pub materialized: bool,
}

/// Adjoint of a structured operator.
pub fn adjoint(op: &StructuredOperator) -> AdjointResult {
    use OperatorKind::*;
    let exact = |op| AdjointResult { op, materialized: false };
    match &op.kind {
        Finite(m) => exact(StructuredOperator::finite(m.adjoint())),
        LaurentMultiplier(s) => exact(StructuredOperator::laurent(s.adjoint())),
        HardyShiftAdjoint(d) => {
            // (M_z*)* = M_z exactly, also after truncation.
            let shift = TrigPolySymbol::monomial(1, ComplexMatrix::identity(*d, *d));
            exact(StructuredOperator::hardy(shift).expect("analytic"))
        }
        HardyMultiplier(_) => AdjointResult {
            op: StructuredOperator {
                kind: MaterializedAdjoint(Box::new(op.clone())),
                astar_hint: AstarHint::Unknown,
            },
            materialized: true,
        },
        MaterializedAdjoint(inner) => exact((**inner).clone()),
        DirectSum(children) => {
            let parts: Vec<AdjointResult> = children.iter().map(adjoint).collect();
            let materialized = parts.iter().any(|p| p.materialized);
            AdjointResult {
                op: StructuredOperator::direct_sum(parts.into_iter().map(|p| p.op).collect())
                    .expect("nonempty"),
                materialized,
            }
        }
    }
}

/// A symbol recovered from a matrix, with the structural residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedSymbol {
    pub symbol: TrigPolySymbol,
    /// Largest deviation of an interior block from its diagonal average.
    pub residual: f64,
}

/// Fits block-Toeplitz structure to a Hardy (N+1 modes) or Laurent (2N+1
/// modes) materialization over the interior window.
pub fn toeplitz_extract(
    m: &ComplexMatrix,
    block_dim: usize,
    trunc: &TruncationOrder,
    tol: &Tolerances,
) -> Result<ExtractedSymbol, StructuredError> {
    if block_dim == 0 || m.nrows() != m.ncols() || m.nrows() % block_dim != 0 {
        return Err(StructuredError::IncompatibleOperators("matrix is not square in whole blocks".into()));
    }
    let d = block_dim;
    let modes = m.nrows() / d;
    let window: Vec<usize> = if modes == trunc.n + 1 {
        (0..=trunc.window()).collect()
    } else if modes == 2 * trunc.n + 1 {
        (trunc.interior_margin..modes - trunc.interior_margin).collect()
    } else {
        return Err(StructuredError::IncompatibleOperators(format!(
            "{modes} modes fit neither a Hardy nor a Laurent truncation at N = {}",
            trunc.n
        )));
    };
    let span = window.len() as i64 - 1;
    let block = |r: usize, c: usize| m.view((r * d, c * d), (d, d)).into_owned();
    let mut coeffs = Vec::with_capacity(2 * span as usize + 1);
    let mut residual = 0.0_f64;
    for k in -span..=span {
        let pairs: Vec<(usize, usize)> = window
            .iter()
            .filter_map(|&c| {
                let r = c as i64 + k;
                (r >= 0 && window.contains(&(r as usize))).then_some((r as usize, c))
            })
            .collect();
        let mut avg = ComplexMatrix::zeros(d, d);
        for &(r, c) in &pairs {
            avg += block(r, c);
        }
        avg /= Complex64::new(pairs.len() as f64, 0.0);
        for &(r, c) in &pairs {
            residual = residual.max(op_norm(&(block(r, c) - &avg)));
        }
        coeffs.push(avg);
    }
    if residual > tol.residual_tol {
        return Err(StructuredError::NotToeplitz { residual });
    }
    let symbol = TrigPolySymbol::new(span as usize, coeffs)?.trimmed(tol.residual_tol);
    Ok(ExtractedSymbol { symbol, residual })
}

/// Strong limit 𝒜_* of PⁿP*ⁿ, structure-aware.
///
/// Analytic hints take precedence: truncations of shift-like operators are
/// nilpotent and would falsely converge to zero. Finite blocks (and any
/// component without a hint) are iterated by repeated squaring,
/// M_{2k} = P^k M_k P*^k, at most 10·N doublings.
pub fn strong_limit_astar(
    op: &StructuredOperator,
    trunc: &TruncationOrder,
    tol: &Tolerances,
) -> Result<StructuredOperator, StructuredError> {
    let p = materialize(op, trunc);
    let norm = op_norm(&p);
    if norm > 1.0 + tol.rank_tol {
        return Err(StructuredError::NotAContraction { norm });
    }
    let dim = p.nrows();
    let tagged = |m: ComplexMatrix, hint| StructuredOperator { kind: OperatorKind::Finite(m), astar_hint: hint };
    match (&op.kind, op.astar_hint) {
        (OperatorKind::DirectSum(children), _) => {
            let parts = children
                .iter()
                .map(|c| strong_limit_astar(c, trunc, tol))
                .collect::<Result<Vec<_>, _>>()?;
            StructuredOperator::direct_sum(parts)
        }
        (OperatorKind::HardyShiftAdjoint(d), _) => Ok(StructuredOperator {
            kind: OperatorKind::HardyMultiplier(TrigPolySymbol::constant(ComplexMatrix::identity(*d, *d))),
            astar_hint: AstarHint::Identity,
        }),
        (_, AstarHint::Identity) => Ok(tagged(ComplexMatrix::identity(dim, dim), AstarHint::Identity)),
        (_, AstarHint::Zero) => Ok(tagged(ComplexMatrix::zeros(dim, dim), AstarHint::Zero)),
        _ => {
            let limit = finite_astar(&p, tol, 10 * trunc.n.max(1))?;
            let hint = if op_norm(&limit) <= tol.residual_tol { AstarHint::Zero } else { AstarHint::Unknown };
            Ok(tagged(limit, hint))
        }
    }
}

/// PⁿP*ⁿ iterated to convergence for a finite matrix.
pub fn finite_astar(p: &ComplexMatrix, tol: &Tolerances, max_steps: usize) -> Result<ComplexMatrix, StructuredError> {
    let n = p.nrows();
    let mut m = ComplexMatrix::identity(n, n);
    let mut power = p.clone();
    for _ in 0..max_steps {
        let next = &power * &m * power.adjoint();
        let change = op_norm(&(&next - &m));
        m = next;
        if change < tol.convergence_tol {
            return Ok(m);
        }
        power = &power * &power;
    }
    Err(StructuredError::NoConvergence { iterations: max_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    fn scalar(z: f64) -> ComplexMatrix {
        ComplexMatrix::from_element(1, 1, c64(z, 0.0))
    }

    #[test]
    fn materialize_examples() {
        let tr = TruncationOrder::new(2, 0).unwrap();
        let mz = StructuredOperator::hardy(TrigPolySymbol::monomial(1, scalar(1.0))).unwrap();
        let m = materialize(&mz, &tr);
        let expected = ComplexMatrix::from_fn(3, 3, |r, c| if r == c + 1 { c64(1.0, 0.0) } else { c64(0.0, 0.0) });
        assert_eq!(m, expected);

        let tr1 = TruncationOrder::new(1, 0).unwrap();
        let one = StructuredOperator::laurent(TrigPolySymbol::constant(scalar(1.0)));
        assert_eq!(materialize(&one, &tr1), ComplexMatrix::identity(3, 3));

        let s = TrigPolySymbol::analytic(vec![scalar(2.0), scalar(3.0)]).unwrap();
        let m = materialize(&StructuredOperator::hardy(s).unwrap(), &tr1);
        let expected = ComplexMatrix::from_row_slice(2, 2, &[c64(2.0, 0.0), c64(0.0, 0.0), c64(3.0, 0.0), c64(2.0, 0.0)]);
        assert_eq!(m, expected);
    }

    #[test]
    fn compose_examples() {
        let tr = TruncationOrder::default();
        let mz = StructuredOperator::hardy(TrigPolySymbol::monomial(1, scalar(1.0))).unwrap();
        let c = compose(&mz, &mz, &tr).unwrap();
        assert!(!c.lossy);
        let z2 = TrigPolySymbol::monomial(2, scalar(1.0));
        assert_eq!(c.op, StructuredOperator::hardy(z2).unwrap());

        let x = StructuredOperator::finite(ComplexMatrix::from_element(2, 2, c64(1.5, -0.5)));
        let id = StructuredOperator::finite(ComplexMatrix::identity(2, 2));
        assert_eq!(compose(&id, &x, &tr).unwrap().op, x);

        let e = StructuredOperator::laurent(TrigPolySymbol::monomial(1, scalar(1.0)));
        let e_inv = StructuredOperator::laurent(TrigPolySymbol::monomial(-1, scalar(1.0)));
        let prod = compose(&e, &e_inv, &tr).unwrap().op;
        match prod.kind {
            OperatorKind::LaurentMultiplier(s) => {
                let t = s.trimmed(0.0);
                assert_eq!(t, TrigPolySymbol::constant(scalar(1.0)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn compose_falls_back_to_lossy_materialization() {
        let tr = TruncationOrder::new(4, 1).unwrap();
        let mz = StructuredOperator::hardy(TrigPolySymbol::monomial(1, scalar(1.0))).unwrap();
        let back = StructuredOperator::shift_adjoint(1);
        let c = compose(&back, &mz, &tr).unwrap();
        assert!(c.lossy);
        let e = StructuredOperator::laurent(TrigPolySymbol::monomial(1, scalar(1.0)));
        assert!(matches!(compose(&e, &mz, &tr), Err(StructuredError::IncompatibleOperators(_))));
    }

    #[test]
    fn adjoint_examples() {
        let e = StructuredOperator::laurent(TrigPolySymbol::monomial(1, scalar(1.0)));
        let a = adjoint(&e);
        assert!(!a.materialized);
        match a.op.kind {
            OperatorKind::LaurentMultiplier(s) => {
                assert_eq!(s.coeff(-1).unwrap(), &scalar(1.0));
                assert_eq!(s.coeff(0).unwrap(), &scalar(0.0));
            }
            other => panic!("unexpected {other:?}"),
        }
        let m = ComplexMatrix::from_row_slice(1, 2, &[c64(1.0, 2.0), c64(0.0, -1.0)]);
        assert_eq!(adjoint(&StructuredOperator::finite(m.clone())).op, StructuredOperator::finite(m.adjoint()));

        let c0 = ComplexMatrix::from_row_slice(2, 2, &[c64(1.0, 1.0), c64(2.0, 0.0), c64(0.0, 3.0), c64(-1.0, 0.5)]);
        let c1 = ComplexMatrix::from_row_slice(2, 2, &[c64(0.0, 1.0), c64(1.0, 0.0), c64(4.0, 0.0), c64(0.5, 0.5)]);
        let sym = TrigPolySymbol::new(0, vec![c0.clone(), c1.clone()]).unwrap();
        let adj = sym.adjoint();
        assert_eq!(adj.coeff(0).unwrap(), &c0.adjoint());
        assert_eq!(adj.coeff(-1).unwrap(), &c1.adjoint());

        let mz = StructuredOperator::hardy(sym).unwrap();
        let a = adjoint(&mz);
        assert!(a.materialized);
        let tr = TruncationOrder::new(6, 2).unwrap();
        assert_eq!(materialize(&a.op, &tr), materialize(&mz, &tr).adjoint());
    }

    #[test]
    fn toeplitz_extract_examples() {
        let tol = Tolerances::default();
        let tr = TruncationOrder::new(8, 3).unwrap();
        let mz = StructuredOperator::hardy(TrigPolySymbol::monomial(1, scalar(1.0))).unwrap();
        let ex = toeplitz_extract(&materialize(&mz, &tr), 1, &tr, &tol).unwrap();
        assert_eq!(ex.residual, 0.0);
        assert_eq!(ex.symbol, TrigPolySymbol::monomial(1, scalar(1.0)));

        let ex = toeplitz_extract(&ComplexMatrix::identity(9, 9), 1, &tr, &tol).unwrap();
        assert_eq!(ex.symbol, TrigPolySymbol::constant(scalar(1.0)));

        let mut bad = ComplexMatrix::identity(9, 9);
        bad[(2, 2)] = c64(2.0, 0.0);
        assert!(matches!(toeplitz_extract(&bad, 1, &tr, &tol), Err(StructuredError::NotToeplitz { .. })));
    }

    #[test]
    fn strong_limit_examples() {
        let tol = Tolerances::default();
        let tr = TruncationOrder::new(16, 3).unwrap();
        let strict = StructuredOperator::finite(ComplexMatrix::from_row_slice(
            2,
            2,
            &[c64(0.5, 0.0), c64(0.3, 0.0), c64(0.0, 0.0), c64(0.2, 0.1)],
        ));
        let a = strong_limit_astar(&strict, &tr, &tol).unwrap();
        assert!(op_norm(&materialize(&a, &tr)) < 1e-12);
        assert_eq!(a.astar_hint, AstarHint::Zero);

        let back = StructuredOperator::shift_adjoint(2);
        let a = strong_limit_astar(&back, &tr, &tol).unwrap();
        assert_eq!(materialize(&a, &tr), ComplexMatrix::identity(34, 34));
        // The truncated backward shift is nilpotent; the hint avoids the false zero.
        assert_eq!(a.astar_hint, AstarHint::Identity);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = StructuredOperator::finite(ComplexMatrix::from_row_slice(
            2,
            2,
            &[c64(s, 0.0), c64(-s, 0.0), c64(s, 0.0), c64(s, 0.0)],
        ));
        let a = strong_limit_astar(&u, &tr, &tol).unwrap();
        assert!(op_norm(&(materialize(&a, &tr) - ComplexMatrix::identity(2, 2))) < 1e-12);

        let big = StructuredOperator::finite(scalar(1.5));
        assert!(matches!(strong_limit_astar(&big, &tr, &tol), Err(StructuredError::NotAContraction { .. })));
    }
}
