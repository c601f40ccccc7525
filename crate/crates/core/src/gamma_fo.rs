//! Fundamental operators of Γₙ-contractions: class tests through the
//! algebraic characterizations of Γₙ-unitaries and Γₙ-isometries, the two
//! solvers for the fundamental operator tuple (defect sandwich and the
//! coupled real-linear system), the relation identities between a tuple, its
//! adjoint and the characteristic function, and seeded instance generators.

use crate::charfn::{CharFnError, CharFnEvaluator, DefectPair};
use crate::gamma_domain::{refute_tuple, symmetrize, Domain, RefutationWitness};
use crate::io::{digest, matrix_list, opt_matrix_list};
use crate::linalg::{
    binomial, c64, commutation_residual, complexify, lift, mat_pow, op_norm, real_lstsq, realify, submatrix,
    ComplexMatrix, Defect, LinalgError, Tolerances,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Errors of the fundamental-operator layer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FoError {
    #[error("residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("coupled system has rank {rank} < {unknowns}; minimum-norm solution attached")]
    RankDeficientSystem { rank: usize, unknowns: usize, solution: Vec<ComplexMatrix> },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("tuple needs at least two members and equal square sizes: {0}")]
    Malformed(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    CharFn(#[from] CharFnError),
}

/// A commuting tuple (S₁, …, S_{n−1}, P), optionally restricted to an
/// interior window of coordinates (for truncations of function-space
/// operators) and optionally carrying precomputed fundamental operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorTuple {
    pub n: usize,
    pub dim: usize,
    #[serde(with = "matrix_list")]
    pub members: Vec<ComplexMatrix>,
    /// Coordinates on which identities are checked; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<usize>>,
    /// Precomputed fundamental operators of the tuple (defect basis of P).
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none", with = "opt_matrix_list")]
    pub a: Option<Vec<ComplexMatrix>>,
    /// Precomputed fundamental operators of the adjoint tuple.
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none", with = "opt_matrix_list")]
    pub b: Option<Vec<ComplexMatrix>>,
    /// Max over pairs of ‖T_iT_j − T_jT_i‖, recomputed on construction.
    #[serde(skip)]
    pub commutation_residual: f64,
}

impl OperatorTuple {
    /// Builds a tuple from (S₁, …, S_{n−1}, P).
    pub fn new(members: Vec<ComplexMatrix>) -> Result<Self, FoError> {
        if members.len() < 2 {
            return Err(FoError::Malformed(format!("{} members", members.len())));
        }
        let dim = members[0].nrows();
        let commutation_residual = commutation_residual(&members)?;
        Ok(OperatorTuple { n: members.len(), dim, members, window: None, a: None, b: None, commutation_residual })
    }

    /// Same tuple with an interior window.
    pub fn with_window(mut self, window: Vec<usize>) -> Self {
        self.window = Some(window);
        self
    }

    /// Re-validates a deserialized tuple and fills the cached residual.
    pub fn validated(mut self) -> Result<Self, FoError> {
        if self.members.len() != self.n || self.n < 2 {
            return Err(FoError::Malformed(format!("n = {} but {} members", self.n, self.members.len())));
        }
        for m in &self.members {
            if m.nrows() != self.dim || m.ncols() != self.dim {
                return Err(FoError::Linalg(LinalgError::DimensionMismatch {
                    expected: format!("{0}x{0}", self.dim),
                    found: format!("{}x{}", m.nrows(), m.ncols()),
                }));
            }
        }
        if let Some(w) = &self.window {
            if w.iter().any(|&i| i >= self.dim) {
                return Err(FoError::Malformed("window index out of range".into()));
            }
        }
        self.commutation_residual = commutation_residual(&self.members)?;
        Ok(self)
    }

    /// S_i for 1 ≤ i ≤ n−1.
    pub fn s(&self, i: usize) -> &ComplexMatrix {
        &self.members[i - 1]
    }

    pub fn p(&self) -> &ComplexMatrix {
        &self.members[self.n - 1]
    }

    /// Coordinates on which residuals are measured.
    pub fn mask(&self) -> Vec<usize> {
        self.window.clone().unwrap_or_else(|| (0..self.dim).collect())
    }

    /// The adjoint tuple (S₁*, …, S_{n−1}*, P*), with the fundamental
    /// operator slots swapped.
    pub fn adjoint(&self) -> Self {
        OperatorTuple {
            n: self.n,
            dim: self.dim,
            members: self.members.iter().map(|m| m.adjoint()).collect(),
            window: self.window.clone(),
            a: self.b.clone(),
            b: self.a.clone(),
            commutation_residual: self.commutation_residual,
        }
    }

    /// Hex digest of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        digest(self)
    }

    /// Defect data of P and P*, with truncation-edge directions removed
    /// when a window is present.
    pub fn defects(&self, tol: &Tolerances) -> Result<DefectPair, FoError> {
        let mask = self.window.as_deref();
        Ok(DefectPair::new(self.p(), mask, tol)?)
    }
}

/// Norm of a matrix restricted to window rows and columns.
fn masked_norm(m: &ComplexMatrix, mask: &[usize]) -> f64 {
    op_norm(&submatrix(m, mask, mask))
}

/// Norm of an operator from a defect space into the ambient space,
/// restricted to window rows.
fn masked_rows_norm(m: &ComplexMatrix, mask: &[usize]) -> f64 {
    let cols: Vec<usize> = (0..m.ncols()).collect();
    op_norm(&submatrix(m, mask, &cols))
}

/// Fundamental operator tuple (A₁, …, A_{n−1}) in the defect basis of P.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoTuple {
    pub n: usize,
    #[serde(with = "matrix_list")]
    pub ops: Vec<ComplexMatrix>,
    pub defect_dim: usize,
    /// max_i ‖S_i − S_{n−i}*P − D_P Ã_i D_P‖ on the window.
    pub residual: f64,
}

/// Sandwich solve of S_i − S_{n−i}*P = D_P X D_P with explicit defect data.
pub fn solve_fo_tuple_with(
    tuple: &OperatorTuple,
    defect: &Defect,
    tol: &Tolerances,
) -> Result<FoTuple, FoError> {
    let n = tuple.n;
    let mask = tuple.mask();
    let p = tuple.p();
    let q = &defect.space.basis;
    let k = defect.dim();
    // D⁺Q = Q·diag(1/σ) because Q consists of eigenvectors of D.
    let inv = ComplexMatrix::from_fn(k, k, |i, j| if i == j { c64(1.0 / defect.values[i], 0.0) } else { c64(0.0, 0.0) });
    let mut ops = Vec::with_capacity(n - 1);
    let mut residual = 0.0_f64;
    for i in 1..n {
        let r = tuple.s(i) - tuple.s(n - i).adjoint() * p;
        let a = &inv * q.adjoint() * &r * q * &inv;
        let lifted = lift(&a, &defect.space, &defect.space);
        let rec = &r - &defect.d * lifted * &defect.d;
        residual = residual.max(masked_norm(&rec, &mask));
        ops.push(a);
    }
    let fo = FoTuple { n, ops, defect_dim: k, residual };
    if residual > tol.residual_tol {
        return Err(FoError::ResidualTooLarge { residual, tolerance: tol.residual_tol });
    }
    Ok(fo)
}

/// Fundamental operator tuple of a Γₙ-contraction by the restricted
/// pseudo-inverse of D_P; unique on 𝒟_P.
pub fn solve_fo_tuple(tuple: &OperatorTuple, tol: &Tolerances) -> Result<FoTuple, FoError> {
    let pair = tuple.defects(tol)?;
    solve_fo_tuple_with(tuple, &pair.defect, tol)
}

/// Solution of the coupled system D_PS_i = X_iD_P + X_{n−i}*D_PP.
#[derive(Debug, Clone, PartialEq)]
pub struct FoSystemSolution {
    pub ops: Vec<ComplexMatrix>,
    pub residual: f64,
    pub rank: usize,
    pub unknowns: usize,
}

/// Solves the coupled system in its basis form
/// Q*D_PS_i = X_i·(Q*D_P) + X_{n−i}*·(Q*D_PP) on the window columns. The map
/// is only real-linear (X and X* both appear), so the unknowns are realified
/// and solved by SVD least squares. Returns the minimum-norm solution and
/// its rank; no error policy is applied.
pub fn solve_fo_system_with(
    tuple: &OperatorTuple,
    defect: &Defect,
) -> FoSystemSolution {
    let n = tuple.n;
    let mask = tuple.mask();
    let k = defect.dim();
    let q = &defect.space.basis;
    let all_rows: Vec<usize> = (0..k).collect();
    let qd = q.adjoint() * &defect.d;
    let m = submatrix(&qd, &all_rows, &mask);
    let np = submatrix(&(&qd * tuple.p()), &all_rows, &mask);
    let targets: Vec<ComplexMatrix> =
        (1..n).map(|i| submatrix(&(&qd * tuple.s(i)), &all_rows, &mask)).collect();
    let per = 2 * k * k;
    let unknowns = (n - 1) * per;
    if unknowns == 0 {
        let residual = targets.iter().map(op_norm).fold(0.0, f64::max);
        return FoSystemSolution { ops: vec![ComplexMatrix::zeros(0, 0); n - 1], residual, rank: 0, unknowns };
    }
    let apply = |xs: &[ComplexMatrix]| -> Vec<ComplexMatrix> {
        (1..n).map(|i| &xs[i - 1] * &m + xs[n - i - 1].adjoint() * &np).collect()
    };
    let rows_per = 2 * k * mask.len();
    let mut a = DMatrix::<f64>::zeros((n - 1) * rows_per, unknowns);
    for col in 0..unknowns {
        let mut raw = vec![0.0; unknowns];
        raw[col] = 1.0;
        let xs: Vec<ComplexMatrix> = (0..n - 1).map(|i| complexify(&raw[i * per..(i + 1) * per], k, k)).collect();
        for (i, e) in apply(&xs).iter().enumerate() {
            a.view_mut((i * rows_per, col), (rows_per, 1)).copy_from(&realify(e));
        }
    }
    let mut b = DVector::<f64>::zeros((n - 1) * rows_per);
    for (i, t) in targets.iter().enumerate() {
        b.rows_mut(i * rows_per, rows_per).copy_from(&realify(t));
    }
    let sol = real_lstsq(&a, &b, 1e-10);
    let raw: Vec<f64> = sol.x.iter().cloned().collect();
    let ops: Vec<ComplexMatrix> = (0..n - 1).map(|i| complexify(&raw[i * per..(i + 1) * per], k, k)).collect();
    let residual = apply(&ops).iter().zip(&targets).map(|(e, t)| op_norm(&(e - t))).fold(0.0, f64::max);
    FoSystemSolution { ops, residual, rank: sol.rank, unknowns }
}

/// Fundamental operators as the solution set of the coupled system.
pub fn solve_fo_equations(tuple: &OperatorTuple, tol: &Tolerances) -> Result<Vec<ComplexMatrix>, FoError> {
    let pair = tuple.defects(tol)?;
    let sol = solve_fo_system_with(tuple, &pair.defect);
    if sol.residual > tol.residual_tol {
        return Err(FoError::ResidualTooLarge { residual: sol.residual, tolerance: tol.residual_tol });
    }
    if sol.rank < sol.unknowns {
        return Err(FoError::RankDeficientSystem { rank: sol.rank, unknowns: sol.unknowns, solution: sol.ops });
    }
    Ok(sol.ops)
}

/// Verdict of the Γₙ class test.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaVerdict {
    GammaUnitary,
    GammaIsometry,
    PureGammaIsometry,
    ContractionUnrefuted,
    Refuted(RefutationWitness),
}

impl GammaVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            GammaVerdict::GammaUnitary => "GammaUnitary",
            GammaVerdict::GammaIsometry => "GammaIsometry",
            GammaVerdict::PureGammaIsometry => "PureGammaIsometry",
            GammaVerdict::ContractionUnrefuted => "ContractionUnrefuted",
            GammaVerdict::Refuted(_) => "Refuted",
        }
    }
}

/// One measured condition of a class test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub condition: String,
    pub residual: f64,
    /// True when the condition is only tested by refutation sampling.
    pub one_sided: bool,
}

/// Class verdict with per-condition evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaClass {
    pub verdict: GammaVerdict,
    pub evidence: Vec<Evidence>,
}

/// Scaled tuple ((n−1)/n·S₁, (n−2)/n·S₂, …, (1/n)·S_{n−1}).
pub fn scaled_tuple(members: &[ComplexMatrix], n: usize) -> Vec<ComplexMatrix> {
    (1..n).map(|i| &members[i - 1] * c64((n - i) as f64 / n as f64, 0.0)).collect()
}

/// One-sided test that a tuple is a Γ_m-contraction (m = tuple length).
/// For m = 1 the test is exact: Γ₁ is the closed disc.
pub fn gamma_contraction_check(
    members: &[ComplexMatrix],
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<f64, RefutationWitness> {
    if members.len() == 1 {
        let norm = op_norm(&members[0]);
        if norm > 1.0 + tol.residual_tol {
            let f = crate::gamma_domain::Polynomial::coordinate(1, 0);
            return Err(RefutationWitness { polynomial: f, operator_norm: norm, sup: 1.0, sample: 0 });
        }
        return Ok(norm);
    }
    match refute_tuple(Domain::Gamma, members, samples, seed, tol) {
        Some(w) => Err(w),
        None => Ok(0.0),
    }
}

/// Class test: Γₙ-unitary / Γₙ-isometry by the algebraic
/// characterizations, otherwise refutation sampling.
pub fn classify_gamma_tuple(tuple: &OperatorTuple, tol: &Tolerances, samples: usize) -> GammaClass {
    let n = tuple.n;
    let mask = tuple.mask();
    let dim = tuple.dim;
    let p = tuple.p();
    let eye = ComplexMatrix::identity(dim, dim);
    let iso = masked_norm(&(p.adjoint() * p - &eye), &mask);
    let coiso = masked_norm(&(p * p.adjoint() - &eye), &mask);
    let rel = (1..n)
        .map(|i| masked_norm(&(tuple.s(i) - tuple.s(n - i).adjoint() * p), &mask))
        .fold(0.0, f64::max);
    let mut evidence = vec![
        Evidence { condition: "commutation".into(), residual: tuple.commutation_residual, one_sided: false },
        Evidence { condition: "P isometry".into(), residual: iso, one_sided: false },
        Evidence { condition: "P co-isometry".into(), residual: coiso, one_sided: false },
        Evidence { condition: "S_i = S_{n-i}* P".into(), residual: rel, one_sided: false },
    ];
    if iso <= tol.residual_tol && rel <= tol.residual_tol {
        let scaled = scaled_tuple(&tuple.members, n);
        let sub = gamma_contraction_check(&scaled, samples, 0x5ca1ed, tol);
        evidence.push(Evidence {
            condition: "scaled tuple is a Gamma_{n-1}-contraction".into(),
            residual: match &sub {
                Ok(_) => 0.0,
                Err(w) => w.operator_norm / w.sup - 1.0,
            },
            one_sided: n > 2,
        });
        if sub.is_ok() {
            let verdict = if coiso <= tol.residual_tol {
                GammaVerdict::GammaUnitary
            } else {
                let k = 4 * dim.max(1);
                let tail = op_norm(&mat_pow(&p.adjoint(), k).select_columns(&mask));
                evidence.push(Evidence { condition: format!("||P*^{k}||"), residual: tail, one_sided: false });
                if tail <= tol.residual_tol.sqrt() {
                    GammaVerdict::PureGammaIsometry
                } else {
                    GammaVerdict::GammaIsometry
                }
            };
            return GammaClass { verdict, evidence };
        }
    }
    let verdict = match refute_tuple(Domain::Gamma, &tuple.members, samples, 0xfeed, tol) {
        Some(w) => GammaVerdict::Refuted(w),
        None => GammaVerdict::ContractionUnrefuted,
    };
    evidence.push(Evidence { condition: "von Neumann sampling".into(), residual: 0.0, one_sided: true });
    GammaClass { verdict, evidence }
}

/// Which instance coordinates a report covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInfo {
    /// "full" or "interior".
    pub kind: String,
    pub ambient: usize,
    pub retained: usize,
}

impl WindowInfo {
    pub fn of_mask(ambient: usize, mask: &[usize]) -> Self {
        let kind = if mask.len() == ambient { "full" } else { "interior" };
        WindowInfo { kind: kind.into(), ambient, retained: mask.len() }
    }
}

/// Residual record of one identity on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub identity: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub window: WindowInfo,
    pub instance_digest: String,
}

impl VerificationReport {
    pub fn new(identity: &str, residual: f64, tolerance: f64, window: WindowInfo, digest: String) -> Self {
        VerificationReport {
            identity: identity.into(),
            residual,
            tolerance,
            pass: residual.is_finite() && residual <= tolerance,
            window,
            instance_digest: digest,
        }
    }
}

/// Identities relating a Γₙ-contraction to its adjoint, Θ_P and 𝒜_*.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GammaIdentity {
    /// D_PA_i = (S_iD_P − D_{P*}B_{n−i}P) on 𝒟_P.
    L44,
    /// PA_i = B_i*P on 𝒟_P.
    L45,
    /// (B_i* + zB_{n−i})Θ_P(z) = Θ_P(z)(A_i + zA_{n−i}*).
    L43,
    /// C(n−1,j−1)𝒜_* + C(n−1,j)𝒜_*P* = 𝒜_*S_{n−j}*.
    L41a,
    /// C(n−1,j−1)P𝒜_* + C(n−1,j)𝒜_* = P𝒜_*S_{n−j}*.
    L41b,
    /// Σ₁(z), Σ₂(z) are Γ_{n−1}-contractions on the disc grid.
    Sigma,
}

impl GammaIdentity {
    pub const ALL: [GammaIdentity; 6] = [
        GammaIdentity::L44,
        GammaIdentity::L45,
        GammaIdentity::L43,
        GammaIdentity::L41a,
        GammaIdentity::L41b,
        GammaIdentity::Sigma,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            GammaIdentity::L44 => "GAMMA-L44",
            GammaIdentity::L45 => "GAMMA-L45",
            GammaIdentity::L43 => "GAMMA-L43",
            GammaIdentity::L41a => "GAMMA-L41a",
            GammaIdentity::L41b => "GAMMA-L41b",
            GammaIdentity::Sigma => "GAMMA-SIGMA",
        }
    }

    pub fn from_id(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|i| i.id() == s)
    }
}

/// The standard disc grid {r·e^{iθ}}: radii 0, .25, .5, .75, .95 and 64 angles.
pub fn disc_grid() -> Vec<Complex64> {
    let mut out = Vec::with_capacity(5 * 64);
    for &r in &[0.0, 0.25, 0.5, 0.75, 0.95] {
        for k in 0..64 {
            out.push(Complex64::from_polar(r, 2.0 * PI * k as f64 / 64.0));
        }
    }
    out
}

/// A tuple together with everything the relation identities reference.
#[derive(Debug, Clone)]
pub struct GammaInstance {
    pub tuple: OperatorTuple,
    pub defects: DefectPair,
    /// Fundamental operators of the tuple, in the 𝒟_P basis.
    pub a: Option<Vec<ComplexMatrix>>,
    /// Fundamental operators of the adjoint tuple, in the 𝒟_{P*} basis.
    pub b: Option<Vec<ComplexMatrix>>,
    /// The strong limit 𝒜_* when known.
    pub astar: Option<ComplexMatrix>,
}

impl GammaInstance {
    /// Collects defect data and fundamental operators. Precomputed A/B on
    /// the tuple are used as given; otherwise both are solved (and left
    /// absent when a solve fails).
    pub fn prepare(tuple: OperatorTuple, tol: &Tolerances) -> Result<Self, FoError> {
        let defects = tuple.defects(tol)?;
        let a = match &tuple.a {
            Some(a) => Some(a.clone()),
            None => solve_fo_tuple_with(&tuple, &defects.defect, tol).ok().map(|f| f.ops),
        };
        let b = match &tuple.b {
            Some(b) => Some(b.clone()),
            None => solve_fo_tuple_with(&tuple.adjoint(), &defects.defect_star, tol).ok().map(|f| f.ops),
        };
        Ok(GammaInstance { tuple, defects, a, b, astar: None })
    }

    pub fn with_astar(mut self, astar: ComplexMatrix) -> Self {
        self.astar = Some(astar);
        self
    }

    fn need_a(&self) -> Result<&Vec<ComplexMatrix>, FoError> {
        self.a.as_ref().ok_or_else(|| FoError::MissingInput("fundamental operators of the tuple".into()))
    }

    fn need_b(&self) -> Result<&Vec<ComplexMatrix>, FoError> {
        self.b.as_ref().ok_or_else(|| FoError::MissingInput("fundamental operators of the adjoint".into()))
    }

    fn need_astar(&self) -> Result<&ComplexMatrix, FoError> {
        self.astar.as_ref().ok_or_else(|| FoError::MissingInput("strong limit A_*".into()))
    }

    fn check_shapes(&self, ops: &[ComplexMatrix], k: usize, what: &str) -> Result<(), FoError> {
        if ops.len() != self.tuple.n - 1 || ops.iter().any(|m| m.nrows() != k || m.ncols() != k) {
            return Err(FoError::MissingInput(format!("{what} must be {} matrices of size {k}x{k}", self.tuple.n - 1)));
        }
        Ok(())
    }
}

/// Residual of one relation identity on an instance.
pub fn verify_gamma_identity(
    id: GammaIdentity,
    inst: &GammaInstance,
    tol: &Tolerances,
    samples: usize,
) -> Result<VerificationReport, FoError> {
    let t = &inst.tuple;
    let n = t.n;
    let mask = t.mask();
    let p = t.p();
    let (dp, dps) = (&inst.defects.defect, &inst.defects.defect_star);
    let q = &dp.space.basis;
    let residual = match id {
        GammaIdentity::L44 => {
            let a = inst.need_a()?;
            let b = inst.need_b()?;
            inst.check_shapes(a, dp.dim(), "A")?;
            inst.check_shapes(b, dps.dim(), "B")?;
            (1..n)
                .map(|i| {
                    let bt = lift(&b[n - i - 1], &dps.space, &dps.space);
                    let lhs = &dp.d * q * &a[i - 1];
                    let rhs = (t.s(i) * &dp.d - &dps.d * bt * p) * q;
                    masked_rows_norm(&(lhs - rhs), &mask)
                })
                .fold(0.0, f64::max)
        }
        GammaIdentity::L45 => {
            let a = inst.need_a()?;
            let b = inst.need_b()?;
            inst.check_shapes(a, dp.dim(), "A")?;
            inst.check_shapes(b, dps.dim(), "B")?;
            (1..n)
                .map(|i| {
                    let bt = lift(&b[i - 1], &dps.space, &dps.space);
                    let lhs = p * q * &a[i - 1];
                    let rhs = bt.adjoint() * p * q;
                    masked_rows_norm(&(lhs - rhs), &mask)
                })
                .fold(0.0, f64::max)
        }
        GammaIdentity::L43 => {
            let a = inst.need_a()?;
            let b = inst.need_b()?;
            inst.check_shapes(a, dp.dim(), "A")?;
            inst.check_shapes(b, dps.dim(), "B")?;
            let ev = CharFnEvaluator::with_defects(p.clone(), inst.defects.clone(), *tol);
            let mut worst = 0.0_f64;
            for z in disc_grid() {
                let th = ev.theta_eval(z)?;
                for i in 1..n {
                    let left = b[i - 1].adjoint() + &b[n - i - 1] * z;
                    let right = &a[i - 1] + a[n - i - 1].adjoint() * z;
                    worst = worst.max(op_norm(&(left * &th - &th * right)));
                }
            }
            worst
        }
        GammaIdentity::L41a | GammaIdentity::L41b => {
            let astar = inst.need_astar()?;
            (1..n)
                .map(|j| {
                    let (c0, c1) = (binomial(n - 1, j as i64 - 1), binomial(n - 1, j as i64));
                    let s_adj = t.s(n - j).adjoint();
                    let diff = if id == GammaIdentity::L41a {
                        astar * c64(c0, 0.0) + astar * p.adjoint() * c64(c1, 0.0) - astar * s_adj
                    } else {
                        p * astar * c64(c0, 0.0) + astar * c64(c1, 0.0) - p * astar * s_adj
                    };
                    masked_norm(&diff, &mask)
                })
                .fold(0.0, f64::max)
        }
        GammaIdentity::Sigma => {
            let a = inst.need_a()?;
            let b = inst.need_b()?;
            let mut worst = 0.0_f64;
            for (g, z) in disc_grid().into_iter().enumerate() {
                let sigma1: Vec<ComplexMatrix> = (1..n).map(|i| &a[i - 1] + a[n - i - 1].adjoint() * z).collect();
                let sigma2: Vec<ComplexMatrix> = (1..n).map(|i| b[i - 1].adjoint() + &b[n - i - 1] * z).collect();
                for sigma in [sigma1, sigma2] {
                    if sigma[0].nrows() == 0 {
                        continue;
                    }
                    let scaled = scaled_tuple(&sigma, n);
                    if let Err(w) = gamma_contraction_check(&scaled, samples, g as u64, tol) {
                        worst = worst.max(w.operator_norm / w.sup - 1.0);
                    }
                }
            }
            worst
        }
    };
    Ok(VerificationReport::new(id.id(), residual, tol.residual_tol, WindowInfo::of_mask(t.dim, &mask), t.digest()))
}

/// Haar-random unitary from the QR factorization of a Gaussian matrix.
pub fn random_unitary(dim: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
        c64(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix column phases so the distribution is Haar and deterministic.
    let phases = ComplexMatrix::from_fn(dim, dim, |i, j| {
        if i == j && r[(i, i)].norm() > 0.0 {
            r[(i, i)] / r[(i, i)].norm()
        } else {
            c64(0.0, 0.0)
        }
    });
    q * phases
}

/// Uniform random point of the open disc of radius `radius`.
pub fn random_disc_point(radius: f64, rng: &mut ChaCha8Rng) -> Complex64 {
    let r = radius * rng.random::<f64>().sqrt();
    Complex64::from_polar(r, 2.0 * PI * rng.random::<f64>())
}

fn diag(values: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { c64(0.0, 0.0) })
}

/// πₙ applied to commuting normal matrices W·diag(z^{(k)})·W*.
fn symmetrized_normal(points: &[Vec<Complex64>], w: &ComplexMatrix) -> Vec<ComplexMatrix> {
    // points[a] is the n-tuple of eigenvalues for eigenvector a.
    let n = points[0].len();
    let sym: Vec<Vec<Complex64>> = points.iter().map(|z| symmetrize(z).coords).collect();
    (0..n)
        .map(|i| {
            let d: Vec<Complex64> = sym.iter().map(|s| s[i]).collect();
            w * diag(&d) * w.adjoint()
        })
        .collect()
}

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenParams {
    pub n: usize,
    /// Ambient dimension for finite generators.
    pub dim: usize,
    /// Truncation order for function-space generators.
    pub truncation: usize,
    /// Number of kernel points for compression generators.
    pub points: usize,
    /// Explicit point (s₁, …, p) for the scalar generator.
    pub point: Option<Vec<Complex64>>,
}

/// Supported Γₙ generator identifiers.
pub const GAMMA_GENERATORS: [&str; 5] =
    ["symmetrized-unitaries", "binomial-isometry", "coinvariant-compression", "scalar", "zero-p"];

/// Γₙ-isometry symbol φ_i(z) = e_i(u₁, …, u_{n−1}) + z·e_{i−1}(u₁, …, u_{n−1})
/// with commuting unitary constants u_k, evaluated at λ.
fn isometry_symbol(us: &[Vec<Complex64>], v: &ComplexMatrix, i: usize, lambda: Complex64) -> ComplexMatrix {
    // us[a] = eigenvalues of (u₁, …, u_{n−1}) on eigenvector a.
    let vals: Vec<Complex64> = us
        .iter()
        .map(|u| {
            let e = symmetrize(u).coords;
            let ei = if i <= e.len() { e[i - 1] } else { c64(0.0, 0.0) };
            let ei1 = if i == 1 { c64(1.0, 0.0) } else { e[i - 2] };
            ei + lambda * ei1
        })
        .collect();
    v * diag(&vals) * v.adjoint()
}

/// Compression of the multiplier Γₙ-isometry (M_{φ₁}, …, M_{φ_{n−1}}, M_z)
/// on H²(ℂ^d) (the constants must satisfy u₁⋯u_{n−1} = I) to the co-invariant span of kernel functions at `lambdas`:
/// T = G^{−1/2}·blockdiag(φ(λ_j))·G^{1/2} with Gram G_{jk} = 1/(1 − λ_jλ̄_k).
pub fn kernel_compression(
    n: usize,
    us: &[Vec<Complex64>],
    v: &ComplexMatrix,
    lambdas: &[Complex64],
    tol: &Tolerances,
) -> Result<Vec<ComplexMatrix>, FoError> {
    let d = v.nrows();
    let m = lambdas.len();
    let dim = m * d;
    let mut gram = ComplexMatrix::zeros(dim, dim);
    for j in 0..m {
        for k in 0..m {
            let g = c64(1.0, 0.0) / (c64(1.0, 0.0) - lambdas[j] * lambdas[k].conj());
            for a in 0..d {
                gram[(j * d + a, k * d + a)] = g;
            }
        }
    }
    let half = crate::linalg::psd_sqrt(&gram, tol)?;
    let half_inv = half
        .clone()
        .try_inverse()
        .ok_or_else(|| FoError::InvalidParams("kernel points too close together".into()))?;
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut blocks = ComplexMatrix::zeros(dim, dim);
        for (j, &l) in lambdas.iter().enumerate() {
            let b = if i == n { ComplexMatrix::identity(d, d) * l } else { isometry_symbol(us, v, i, l) };
            blocks.view_mut((j * d, j * d), (d, d)).copy_from(&b);
        }
        out.push(&half_inv * blocks * &half);
    }
    Ok(out)
}

/// Compression of M_z to the model space of the Blaschke product with zeros
/// `lambdas`, in the orthonormal Takenaka–Malmquist basis
/// e_j = √(1−|λ_j|²)/(1−λ̄_jz)·Π_{l<j} b_{λ_l}: lower triangular with
/// diagonal λ_j and (j, k) entry √(1−|λ_j|²)√(1−|λ_k|²)·Π_{k<l<j}(−λ̄_l).
/// Unlike the kernel-Gram construction this stays well conditioned when
/// points cluster.
pub fn compressed_shift(lambdas: &[Complex64]) -> ComplexMatrix {
    let m = lambdas.len();
    let w: Vec<f64> = lambdas.iter().map(|l| (1.0 - l.norm_sqr()).sqrt()).collect();
    ComplexMatrix::from_fn(m, m, |j, k| {
        if j == k {
            lambdas[j]
        } else if j > k {
            let prod: Complex64 = lambdas[k + 1..j].iter().map(|l| -l.conj()).product();
            prod * w[j] * w[k]
        } else {
            c64(0.0, 0.0)
        }
    })
}

/// The same compression as [`kernel_compression`], assembled as
/// T_i = I ⊗ e_i(u) + S_B ⊗ e_{i−1}(u) from the compressed shift S_B.
pub fn model_space_compression(
    n: usize,
    us: &[Vec<Complex64>],
    v: &ComplexMatrix,
    lambdas: &[Complex64],
) -> Vec<ComplexMatrix> {
    let d = v.nrows();
    let m = lambdas.len();
    let sb = compressed_shift(lambdas);
    let eye_m = ComplexMatrix::identity(m, m);
    let mut out: Vec<ComplexMatrix> = (1..n)
        .map(|i| {
            let a = isometry_symbol(us, v, i, c64(0.0, 0.0));
            let b = isometry_symbol(us, v, i, c64(1.0, 0.0)) - &a;
            eye_m.kronecker(&a) + sb.kronecker(&b)
        })
        .collect();
    out.push(sb.kronecker(&ComplexMatrix::identity(d, d)));
    out
}

/// Binomial multiplier tuple (C(n−1,i)·I + C(n−1,i−1)·Q)_i, with Q last.
pub fn binomial_tuple(n: usize, q: &ComplexMatrix) -> Vec<ComplexMatrix> {
    let dim = q.nrows();
    let mut out: Vec<ComplexMatrix> = (1..n)
        .map(|i| {
            ComplexMatrix::identity(dim, dim) * c64(binomial(n - 1, i as i64), 0.0)
                + q * c64(binomial(n - 1, i as i64 - 1), 0.0)
        })
        .collect();
    out.push(q.clone());
    out
}

/// Lower shift on modes 0..=N (the truncation of M_z on H²).
pub fn truncated_shift(modes: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(modes, modes, |i, j| if i == j + 1 { c64(1.0, 0.0) } else { c64(0.0, 0.0) })
}

/// Seeded Γₙ instance generator.
pub fn make_gamma_instance(kind: &str, params: &GenParams, seed: u64) -> Result<OperatorTuple, FoError> {
    let n = params.n;
    if n < 2 {
        return Err(FoError::InvalidParams("n must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        "symmetrized-unitaries" => {
            let dim = params.dim.max(1);
            let w = random_unitary(dim, &mut rng);
            let pts: Vec<Vec<Complex64>> = (0..dim)
                .map(|_| (0..n).map(|_| Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>())).collect())
                .collect();
            OperatorTuple::new(symmetrized_normal(&pts, &w))
        }
        "zero-p" => {
            // πₙ(z₁, …, z_{n−1}, 0) on commuting normals: P = 0.
            let dim = params.dim.max(1);
            let w = random_unitary(dim, &mut rng);
            let pts: Vec<Vec<Complex64>> = (0..dim)
                .map(|_| {
                    let mut z: Vec<Complex64> = (0..n - 1).map(|_| random_disc_point(1.0, &mut rng)).collect();
                    z.push(c64(0.0, 0.0));
                    z
                })
                .collect();
            let mut members = symmetrized_normal(&pts, &w);
            members[n - 1] = ComplexMatrix::zeros(dim, dim);
            OperatorTuple::new(members)
        }
        "binomial-isometry" => {
            let big_n = params.truncation.max(4);
            let modes = big_n + 1;
            let tuple = OperatorTuple::new(binomial_tuple(n, &truncated_shift(modes)))?;
            // Degree-one symbols: the last mode carries the truncation edge.
            Ok(tuple.with_window((0..modes - 1).collect()))
        }
        "coinvariant-compression" => {
            let d = params.dim.max(1);
            let m = params.points.max(1);
            if m * d > 8 {
                return Err(FoError::InvalidParams("points·dim must be at most 8".into()));
            }
            let v = random_unitary(d, &mut rng);
            // Unitary constants with u₁⋯u_{n−1} = I, so the last coordinate
            // of πₙ(u₁, …, u_{n−1}, z) is exactly z.
            let us: Vec<Vec<Complex64>> = (0..d)
                .map(|_| {
                    let mut u: Vec<Complex64> =
                        (0..n - 2).map(|_| Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>())).collect();
                    let prod: Complex64 = u.iter().product();
                    u.push(prod.conj());
                    u
                })
                .collect();
            let lambdas: Vec<Complex64> = (0..m).map(|_| random_disc_point(0.6, &mut rng)).collect();
            OperatorTuple::new(model_space_compression(n, &us, &v, &lambdas))
        }
        "scalar" => {
            let coords = match &params.point {
                Some(pt) => {
                    if pt.len() != n {
                        return Err(FoError::InvalidParams(format!("point needs {n} coordinates")));
                    }
                    pt.clone()
                }
                None => {
                    let z: Vec<Complex64> = (0..n).map(|_| random_disc_point(0.95, &mut rng)).collect();
                    symmetrize(&z).coords
                }
            };
            OperatorTuple::new(coords.iter().map(|&c| ComplexMatrix::from_element(1, 1, c)).collect())
        }
        other => Err(FoError::InvalidParams(format!("unknown generator {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_tuple(s: f64, p: f64) -> OperatorTuple {
        OperatorTuple::new(vec![
            ComplexMatrix::from_element(1, 1, c64(s, 0.0)),
            ComplexMatrix::from_element(1, 1, c64(p, 0.0)),
        ])
        .unwrap()
    }

    #[test]
    fn scalar_fundamental_operator() {
        let tol = Tolerances::default();
        let fo = solve_fo_tuple(&scalar_tuple(1.2, 0.5), &tol).unwrap();
        assert!((fo.ops[0][(0, 0)] - c64(0.8, 0.0)).norm() < 1e-12);
        let x = solve_fo_equations(&scalar_tuple(1.2, 0.5), &tol).unwrap();
        assert!((x[0][(0, 0)] - c64(0.8, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn zero_p_recovers_s() {
        let tol = Tolerances::default();
        let t = make_gamma_instance("zero-p", &GenParams { n: 3, dim: 3, ..Default::default() }, 4).unwrap();
        let fo = solve_fo_tuple(&t, &tol).unwrap();
        for i in 1..3 {
            assert!(op_norm(&(&fo.ops[i - 1] - t.s(i))) < 1e-12);
        }
    }

    #[test]
    fn unitary_instance_is_classified() {
        let tol = Tolerances::default();
        let t = make_gamma_instance("symmetrized-unitaries", &GenParams { n: 3, dim: 4, ..Default::default() }, 1)
            .unwrap();
        assert_eq!(classify_gamma_tuple(&t, &tol, 40).verdict, GammaVerdict::GammaUnitary);
        let fo = solve_fo_tuple(&t, &tol).unwrap();
        assert_eq!(fo.defect_dim, 0);
    }

    #[test]
    fn binomial_isometry_is_pure() {
        let tol = Tolerances::default();
        let t = make_gamma_instance("binomial-isometry", &GenParams { n: 3, truncation: 16, ..Default::default() }, 0)
            .unwrap();
        assert_eq!(classify_gamma_tuple(&t, &tol, 40).verdict, GammaVerdict::PureGammaIsometry);
    }

    #[test]
    fn planted_violator_refuted() {
        let tol = Tolerances::default();
        let t = OperatorTuple::new(vec![ComplexMatrix::identity(2, 2) * c64(3.0, 0.0), ComplexMatrix::zeros(2, 2)])
            .unwrap();
        assert!(matches!(classify_gamma_tuple(&t, &tol, 200).verdict, GammaVerdict::Refuted(_)));
    }

    #[test]
    fn model_space_matches_kernel_gram() {
        // Both constructions compress the same operators to the same
        // subspace in different orthonormal bases, so traces of words agree.
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random_unitary(2, &mut rng);
        let us = vec![vec![c64(0.6, 0.8), c64(0.6, -0.8)], vec![c64(0.0, 1.0), c64(0.0, -1.0)]];
        let lambdas = [c64(0.3, 0.1), c64(-0.4, 0.2), c64(0.1, -0.5)];
        let a = kernel_compression(3, &us, &v, &lambdas, &tol).unwrap();
        let b = model_space_compression(3, &us, &v, &lambdas);
        for i in 0..3 {
            for j in 0..3 {
                for (x, y) in [(1, 0), (1, 1), (2, 1), (3, 2)] {
                    let wa = mat_pow(&a[i], x) * mat_pow(&a[j].adjoint(), y);
                    let wb = mat_pow(&b[i], x) * mat_pow(&b[j].adjoint(), y);
                    assert!((wa.trace() - wb.trace()).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn json_shape() {
        let t = scalar_tuple(1.2, 0.5);
        let text = serde_json::to_string(&t).unwrap();
        assert_eq!(text, r#"{"n":2,"dim":1,"members":[[[[1.2,0.0]]],[[[0.5,0.0]]]]}"#);
        let back: OperatorTuple = serde_json::from_str::<OperatorTuple>(&text).unwrap().validated().unwrap();
        assert_eq!(back, t);
    }
}
