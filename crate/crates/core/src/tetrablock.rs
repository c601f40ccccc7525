//! Tetrablock contractions: fundamental operator pairs, class tests through
//! the algebraic characterizations of 𝔼-unitaries and 𝔼-isometries, the
//! intertwinings through Θ_{P*}, the 𝒜_* relations, and the sufficiency
//! construction A = φ₂*W₁φ₂, B = φ₂*W₂φ₂ with the M_{(I+e^{it})/2} block.
//!
//! A triple (A, B, P) satisfies the fundamental equations
//! A − B*P = D_PF₁D_P and B − A*P = D_PF₂D_P, which are the n = 3 case of
//! the Γₙ equations with (S₁, S₂) = (A, B); both solvers are shared with
//! [`crate::gamma_fo`].

use crate::charfn::{CharFnError, CharFnEvaluator, DefectPair};
use crate::gamma_domain::{refute_tuple, Domain, Polynomial, RefutationWitness};
use crate::gamma_fo::{
    disc_grid, random_disc_point, random_unitary, solve_fo_system_with, solve_fo_tuple_with, Evidence, FoError,
    GenParams, OperatorTuple, VerificationReport, WindowInfo,
};
use crate::io::{digest, matrix_rows, opt_matrix};
use crate::linalg::{c64, commutation_residual, op_norm, submatrix, ComplexMatrix, LinalgError, Tolerances};
use crate::model::{
    commuting_square_residual, construct_members, extract_through_column, masked_commutation,
    power_dilation_residual, DilationInstance, DilationModel, ModelCheckOptions, ModelConfig, ModelError,
    WBlockData,
};
use crate::structured::{
    materialize, StructuredError, StructuredOperator, TrigPolySymbol, TruncationOrder,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Errors of the tetrablock layer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TetraError {
    #[error("residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("sandwich and coupled-system solutions differ by {difference:.3e} (tolerance {tolerance:.3e})")]
    SolverDisagreement { difference: f64, tolerance: f64 },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("hypothesis {identity} violated: residual {residual:.3e}")]
    HypothesisViolated { identity: String, residual: f64 },
    #[error(transparent)]
    Fo(#[from] FoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    CharFn(#[from] CharFnError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Structured(#[from] StructuredError),
}

/// A commuting triple (A, B, P), optionally with an interior window and
/// precomputed fundamental pairs of the triple (F) and of its adjoint (G).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ETriple {
    #[serde(rename = "A", with = "matrix_rows")]
    pub a: ComplexMatrix,
    #[serde(rename = "B", with = "matrix_rows")]
    pub b: ComplexMatrix,
    #[serde(rename = "P", with = "matrix_rows")]
    pub p: ComplexMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<usize>>,
    /// F₁ of a precomputed pair on 𝒟_P.
    #[serde(rename = "F1", default, skip_serializing_if = "Option::is_none", with = "opt_matrix")]
    pub f1: Option<ComplexMatrix>,
    /// F₂ of a precomputed pair on 𝒟_P.
    #[serde(rename = "F2", default, skip_serializing_if = "Option::is_none", with = "opt_matrix")]
    pub f2: Option<ComplexMatrix>,
    /// G₁ of a precomputed pair of the adjoint, on 𝒟_{P*}.
    #[serde(rename = "G1", default, skip_serializing_if = "Option::is_none", with = "opt_matrix")]
    pub g1: Option<ComplexMatrix>,
    /// G₂ of a precomputed pair of the adjoint, on 𝒟_{P*}.
    #[serde(rename = "G2", default, skip_serializing_if = "Option::is_none", with = "opt_matrix")]
    pub g2: Option<ComplexMatrix>,
    /// Max over pairs of ‖T_iT_j − T_jT_i‖, recomputed on construction.
    #[serde(skip)]
    pub commutation_residual: f64,
}

impl ETriple {
    pub fn new(a: ComplexMatrix, b: ComplexMatrix, p: ComplexMatrix) -> Result<Self, TetraError> {
        let commutation_residual = commutation_residual(&[a.clone(), b.clone(), p.clone()])?;
        Ok(ETriple { a, b, p, window: None, f1: None, f2: None, g1: None, g2: None, commutation_residual })
    }

    pub fn with_window(mut self, window: Vec<usize>) -> Self {
        self.window = Some(window);
        self
    }

    /// Re-validates a deserialized triple and fills the cached residual.
    pub fn validated(mut self) -> Result<Self, TetraError> {
        let dim = self.p.nrows();
        for m in [&self.a, &self.b, &self.p] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(TetraError::Linalg(LinalgError::DimensionMismatch {
                    expected: format!("{dim}x{dim}"),
                    found: format!("{}x{}", m.nrows(), m.ncols()),
                }));
            }
        }
        if let Some(w) = &self.window {
            if w.iter().any(|&i| i >= dim) {
                return Err(TetraError::InvalidParams("window index out of range".into()));
            }
        }
        if self.f1.is_some() != self.f2.is_some() || self.g1.is_some() != self.g2.is_some() {
            return Err(TetraError::InvalidParams("fundamental pairs need both members".into()));
        }
        self.commutation_residual = commutation_residual(&self.members())?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn members(&self) -> Vec<ComplexMatrix> {
        vec![self.a.clone(), self.b.clone(), self.p.clone()]
    }

    pub fn mask(&self) -> Vec<usize> {
        self.window.clone().unwrap_or_else(|| (0..self.dim()).collect())
    }

    /// (A*, B*, P*) with the pair slots swapped.
    pub fn adjoint(&self) -> Self {
        ETriple {
            a: self.a.adjoint(),
            b: self.b.adjoint(),
            p: self.p.adjoint(),
            window: self.window.clone(),
            f1: self.g1.clone(),
            f2: self.g2.clone(),
            g1: self.f1.clone(),
            g2: self.f2.clone(),
            commutation_residual: self.commutation_residual,
        }
    }

    /// The triple as the Γ₃-shaped tuple (A, B, P), whose fundamental
    /// equations coincide with the pair equations.
    pub fn as_tuple(&self) -> OperatorTuple {
        let mut t = OperatorTuple::new(self.members()).expect("three square members");
        t.window = self.window.clone();
        t
    }

    /// Precomputed (F₁, F₂), when both are present.
    pub fn f_pair(&self) -> Option<[ComplexMatrix; 2]> {
        Some([self.f1.clone()?, self.f2.clone()?])
    }

    /// Precomputed (G₁, G₂), when both are present.
    pub fn g_pair(&self) -> Option<[ComplexMatrix; 2]> {
        Some([self.g1.clone()?, self.g2.clone()?])
    }

    /// Attaches precomputed pairs.
    pub fn with_pairs(mut self, f: &[ComplexMatrix; 2], g: &[ComplexMatrix; 2]) -> Self {
        self.f1 = Some(f[0].clone());
        self.f2 = Some(f[1].clone());
        self.g1 = Some(g[0].clone());
        self.g2 = Some(g[1].clone());
        self
    }

    pub fn defects(&self, tol: &Tolerances) -> Result<DefectPair, TetraError> {
        Ok(DefectPair::new(&self.p, self.window.as_deref(), tol)?)
    }

    pub fn digest(&self) -> String {
        digest(self)
    }
}

/// Commutation hypotheses on a fundamental pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommutationFlags {
    /// [F₁, F₂] = 0.
    pub fo_commute: bool,
    /// [F₁, F₁*] = [F₂, F₂*].
    pub defect_balance: bool,
}

/// Fundamental pair (F₁, F₂) in the defect basis of P.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoPair {
    #[serde(rename = "F1", with = "matrix_rows")]
    pub f1: ComplexMatrix,
    #[serde(rename = "F2", with = "matrix_rows")]
    pub f2: ComplexMatrix,
    pub defect_dim: usize,
    /// max(‖A − B*P − D_PF̃₁D_P‖, ‖B − A*P − D_PF̃₂D_P‖) on the window.
    pub residual: f64,
    /// Distance between the two solver paths (0 when the coupled system is
    /// rank deficient and only the sandwich solution is unique).
    pub solver_gap: f64,
    pub commutation_flags: CommutationFlags,
}

impl FoPair {
    pub fn ops(&self) -> [ComplexMatrix; 2] {
        [self.f1.clone(), self.f2.clone()]
    }
}

/// Residuals behind [`CommutationFlags`].
pub fn commutation_flag_residuals(f1: &ComplexMatrix, f2: &ComplexMatrix) -> (f64, f64) {
    let comm = op_norm(&(f1 * f2 - f2 * f1));
    let balance =
        op_norm(&((f1 * f1.adjoint() - f1.adjoint() * f1) - (f2 * f2.adjoint() - f2.adjoint() * f2)));
    (comm, balance)
}

fn flags(f1: &ComplexMatrix, f2: &ComplexMatrix, tol: &Tolerances) -> CommutationFlags {
    let (c, b) = commutation_flag_residuals(f1, f2);
    CommutationFlags { fo_commute: c <= tol.residual_tol, defect_balance: b <= tol.residual_tol }
}

/// Solves the pair equations with explicit defect data by the defect
/// sandwich and by the coupled system D_PA = X₁D_P + X₂*D_PP,
/// D_PB = X₂D_P + X₁*D_PP; the paths must agree to 10·residual_tol when
/// the system has full rank.
pub fn solve_fo_pair_with(
    t: &ETriple,
    defect: &crate::linalg::Defect,
    tol: &Tolerances,
) -> Result<FoPair, TetraError> {
    let tuple = t.as_tuple();
    let fo = solve_fo_tuple_with(&tuple, defect, tol)?;
    let sys = solve_fo_system_with(&tuple, defect);
    let solver_gap = if sys.rank == sys.unknowns {
        let gap = fo.ops.iter().zip(&sys.ops).map(|(a, b)| op_norm(&(a - b))).fold(0.0, f64::max);
        let limit = 10.0 * tol.residual_tol;
        if gap > limit {
            return Err(TetraError::SolverDisagreement { difference: gap, tolerance: limit });
        }
        gap
    } else {
        0.0
    };
    let (f1, f2) = (fo.ops[0].clone(), fo.ops[1].clone());
    let commutation_flags = flags(&f1, &f2, tol);
    Ok(FoPair { f1, f2, defect_dim: fo.defect_dim, residual: fo.residual, solver_gap, commutation_flags })
}

/// Fundamental pair of a triple (window-aware defect of P).
pub fn solve_fo_pair(t: &ETriple, tol: &Tolerances) -> Result<FoPair, TetraError> {
    let pair = t.defects(tol)?;
    solve_fo_pair_with(t, &pair.defect, tol)
}

/// Verdict of the 𝔼 class test.
#[derive(Debug, Clone, PartialEq)]
pub enum EVerdict {
    EUnitary,
    EIsometry,
    ContractionUnrefuted,
    Refuted(RefutationWitness),
}

impl EVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            EVerdict::EUnitary => "EUnitary",
            EVerdict::EIsometry => "EIsometry",
            EVerdict::ContractionUnrefuted => "ContractionUnrefuted",
            EVerdict::Refuted(_) => "Refuted",
        }
    }
}

/// Class verdict with per-condition evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct EClass {
    pub verdict: EVerdict,
    pub evidence: Vec<Evidence>,
}

/// Class test: 𝔼-unitary when P is unitary, B a contraction and A = B*P;
/// 𝔼-isometry when P is only isometric; otherwise coordinate bounds
/// (|x_i| ≤ 1 on the closed tetrablock) and von Neumann refutation
/// sampling over the distinguished boundary.
pub fn classify_e_triple(t: &ETriple, tol: &Tolerances, samples: usize) -> EClass {
    let mask = t.mask();
    let masked = |m: &ComplexMatrix| op_norm(&submatrix(m, &mask, &mask));
    let dim = t.dim();
    let eye = ComplexMatrix::identity(dim, dim);
    let members = t.members();
    let commutation = masked_commutation(&members, &mask);
    let iso = masked(&(t.p.adjoint() * &t.p - &eye));
    let coiso = masked(&(&t.p * t.p.adjoint() - &eye));
    let rel = masked(&(&t.a - t.b.adjoint() * &t.p));
    let b_excess = (masked(&t.b) - 1.0).max(0.0);
    let mut evidence = vec![
        Evidence { condition: "commutation".into(), residual: commutation, one_sided: false },
        Evidence { condition: "P isometry".into(), residual: iso, one_sided: false },
        Evidence { condition: "P co-isometry".into(), residual: coiso, one_sided: false },
        Evidence { condition: "A = B* P".into(), residual: rel, one_sided: false },
        Evidence { condition: "B contraction".into(), residual: b_excess, one_sided: false },
    ];
    if commutation <= tol.residual_tol && iso <= tol.residual_tol && rel <= tol.residual_tol && b_excess <= tol.residual_tol
    {
        let verdict = if coiso <= tol.residual_tol { EVerdict::EUnitary } else { EVerdict::EIsometry };
        return EClass { verdict, evidence };
    }
    // Every coordinate has modulus at most one on the closed tetrablock.
    let restricted: Vec<ComplexMatrix> = members.iter().map(|m| submatrix(m, &mask, &mask)).collect();
    for (i, m) in restricted.iter().enumerate() {
        let norm = op_norm(m);
        if norm > 1.0 + tol.residual_tol {
            evidence.push(Evidence { condition: format!("coordinate {} bound", i + 1), residual: norm - 1.0, one_sided: false });
            let w = RefutationWitness { polynomial: Polynomial::coordinate(3, i), operator_norm: norm, sup: 1.0, sample: 0 };
            return EClass { verdict: EVerdict::Refuted(w), evidence };
        }
    }
    evidence.push(Evidence { condition: "von Neumann sampling".into(), residual: 0.0, one_sided: true });
    let verdict = match refute_tuple(Domain::Tetrablock, &restricted, samples, 0x7e7a, tol) {
        Some(w) => EVerdict::Refuted(w),
        None => EVerdict::ContractionUnrefuted,
    };
    EClass { verdict, evidence }
}

/// Tetrablock identity catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TetraIdentity {
    /// (F₁* + F₂z)Θ_{P*}(z) = Θ_{P*}(z)(G₁ + G₂*z).
    L52a,
    /// (F₂* + F₁z)Θ_{P*}(z) = Θ_{P*}(z)(G₂ + G₁*z).
    L52b,
    /// 𝒜_* + 𝒜_*P* = 2𝒜_*A* = 2𝒜_*B* and P𝒜_* + 𝒜_* = 2P𝒜_*A*.
    Astar,
    /// (M_{(I+e^{it})/2}, M_{(I+e^{it})/2}, M_{e^{it}}) is an 𝔼-unitary.
    HalfUnit,
    /// Commuting square of the W-blocks against the column (M_Θ; Δ).
    Nec,
    /// Compression of the W-blocks through the column is an 𝔼-isometry
    /// symbol pair with M_z.
    Extract,
    /// φ₂ intertwinings and power-dilation residuals.
    Dil,
}

impl TetraIdentity {
    pub const ALL: [TetraIdentity; 7] = [
        TetraIdentity::L52a,
        TetraIdentity::L52b,
        TetraIdentity::Astar,
        TetraIdentity::HalfUnit,
        TetraIdentity::Nec,
        TetraIdentity::Extract,
        TetraIdentity::Dil,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            TetraIdentity::L52a => "TETRA-L52a",
            TetraIdentity::L52b => "TETRA-L52b",
            TetraIdentity::Astar => "TETRA-ASTAR",
            TetraIdentity::HalfUnit => "TETRA-HALFUNIT",
            TetraIdentity::Nec => "TETRA-NEC",
            TetraIdentity::Extract => "TETRA-EXTRACT",
            TetraIdentity::Dil => "TETRA-DIL",
        }
    }

    pub fn from_id(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|i| i.id() == s)
    }
}

/// A triple with everything the identities reference.
#[derive(Debug, Clone)]
pub struct TetraInstance {
    pub triple: ETriple,
    pub defects: DefectPair,
    pub f: Option<[ComplexMatrix; 2]>,
    pub g: Option<[ComplexMatrix; 2]>,
    pub astar: Option<ComplexMatrix>,
    /// Model data when the instance was built over a c.n.u P.
    pub model: Option<DilationInstance>,
}

fn as_pair(v: &[ComplexMatrix]) -> [ComplexMatrix; 2] {
    [v[0].clone(), v[1].clone()]
}

impl TetraInstance {
    /// Collects defect data and both fundamental pairs; precomputed pairs on
    /// the triple are used as given, failed solves leave the slot empty.
    pub fn prepare(triple: ETriple, tol: &Tolerances) -> Result<Self, TetraError> {
        let defects = triple.defects(tol)?;
        let f = match triple.f_pair() {
            Some(f) => Some(f),
            None => solve_fo_pair_with(&triple, &defects.defect, tol).ok().map(|p| p.ops()),
        };
        let g = match triple.g_pair() {
            Some(g) => Some(g),
            None => solve_fo_pair_with(&triple.adjoint(), &defects.defect_star, tol).ok().map(|p| p.ops()),
        };
        Ok(TetraInstance { triple, defects, f, g, astar: None, model: None })
    }

    pub fn with_astar(mut self, astar: ComplexMatrix) -> Self {
        self.astar = Some(astar);
        self
    }

    /// Instance view of a tetrablock model instance.
    pub fn from_model(inst: DilationInstance) -> Self {
        let m = &inst.tuple.members;
        let mut triple = ETriple::new(m[0].clone(), m[1].clone(), m[2].clone()).expect("square members");
        triple.window = inst.tuple.window.clone();
        let f = inst.tuple.a.as_deref().map(as_pair);
        let g = inst.tuple.b.as_deref().map(as_pair);
        if let (Some(f), Some(g)) = (&f, &g) {
            triple = triple.with_pairs(f, g);
        }
        TetraInstance {
            defects: inst.model.defects().clone(),
            f,
            g,
            astar: Some(inst.model.astar.clone()),
            triple,
            model: Some(inst),
        }
    }

    fn need_pairs(&self) -> Result<(&[ComplexMatrix; 2], &[ComplexMatrix; 2]), TetraError> {
        let f = self.f.as_ref().ok_or_else(|| TetraError::MissingInput("fundamental pair of the triple".into()))?;
        let g = self.g.as_ref().ok_or_else(|| TetraError::MissingInput("fundamental pair of the adjoint".into()))?;
        Ok((f, g))
    }

    fn need_model(&self) -> Result<&DilationInstance, TetraError> {
        self.model.as_ref().ok_or_else(|| TetraError::MissingInput("model data (c.n.u instance)".into()))
    }
}

/// Residual of the half-unitary lemma on a Laurent truncation with block
/// dimension `d`: unitarity of M_{e^{it}} and A = B*P on the interior,
/// contractivity of (I + e^{it})/2, the symbol identity
/// ((I + e^{it})/2)*·e^{it} = (I + e^{it})/2, and interior commutation.
pub fn half_unit_residual(d: usize, trunc: &TruncationOrder, tol: &Tolerances) -> f64 {
    let eye = ComplexMatrix::identity(d, d);
    let u_sym = TrigPolySymbol::monomial(1, eye.clone());
    let h_sym = TrigPolySymbol::scalar(0, &[c64(0.5, 0.0), c64(0.5, 0.0)], d);
    let symbol_gap = match h_sym.adjoint().mul(&u_sym) {
        Ok(prod) => (-2..=2)
            .map(|k| {
                let zero = ComplexMatrix::zeros(d, d);
                let a = prod.coeff(k).unwrap_or(&zero);
                let b = h_sym.coeff(k).unwrap_or(&zero);
                op_norm(&(a - b))
            })
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    let sup = (0..64)
        .map(|g| op_norm(&h_sym.eval(2.0 * PI * g as f64 / 64.0)))
        .fold(0.0, f64::max);
    let u_op = StructuredOperator::laurent(u_sym);
    let h = materialize(&StructuredOperator::laurent(h_sym), trunc);
    let u = materialize(&u_op, trunc);
    let mask = u_op.interior_indices(trunc);
    let triple = ETriple::new(h.clone(), h, u).expect("square").with_window(mask);
    let class = classify_e_triple(&triple, tol, 0);
    let algebraic = class.evidence.iter().filter(|e| !e.one_sided).map(|e| e.residual).fold(0.0, f64::max);
    let verdict_gap = if class.verdict == EVerdict::EUnitary { 0.0 } else { 1.0 };
    symbol_gap.max((sup - 1.0).max(0.0)).max(algebraic).max(verdict_gap)
}

/// Residual report for one tetrablock identity.
pub fn verify_tetra_identity(
    id: TetraIdentity,
    inst: &TetraInstance,
    tol: &Tolerances,
    opts: &ModelCheckOptions,
) -> Result<VerificationReport, TetraError> {
    let t = &inst.triple;
    let mask = t.mask();
    let masked = |m: &ComplexMatrix| op_norm(&submatrix(m, &mask, &mask));
    let mut window = WindowInfo::of_mask(t.dim(), &mask);
    let residual = match id {
        TetraIdentity::L52a | TetraIdentity::L52b => {
            let (f, g) = inst.need_pairs()?;
            let (k, ks) = (inst.defects.defect.dim(), inst.defects.defect_star.dim());
            if f.iter().any(|m| m.nrows() != k || m.ncols() != k) || g.iter().any(|m| m.nrows() != ks || m.ncols() != ks) {
                return Err(TetraError::MissingInput(format!("F must be {k}x{k} and G {ks}x{ks}")));
            }
            let ev = CharFnEvaluator::with_defects(t.p.adjoint(), inst.defects.swapped(), *tol);
            let (i, j) = if id == TetraIdentity::L52a { (0, 1) } else { (1, 0) };
            let mut worst = 0.0_f64;
            for z in disc_grid() {
                let th = ev.theta_eval(z)?;
                let left = f[i].adjoint() + &f[j] * z;
                let right = &g[i] + g[j].adjoint() * z;
                worst = worst.max(op_norm(&(left * &th - &th * right)));
            }
            worst
        }
        TetraIdentity::Astar => {
            let astar = inst.astar.as_ref().ok_or_else(|| TetraError::MissingInput("strong limit A_*".into()))?;
            let two = c64(2.0, 0.0);
            let lhs1 = astar + astar * t.p.adjoint();
            let lhs2 = &t.p * astar + astar;
            masked(&(&lhs1 - astar * t.a.adjoint() * two))
                .max(masked(&(&lhs1 - astar * t.b.adjoint() * two)))
                .max(masked(&(&lhs2 - &t.p * astar * t.a.adjoint() * two)))
        }
        TetraIdentity::HalfUnit => {
            let trunc = inst.model.as_ref().map(|m| m.model.truncation).unwrap_or(TruncationOrder::new(32, 3)?);
            let d = inst.defects.defect.dim().max(1);
            window = WindowInfo { kind: "interior".into(), ambient: (2 * trunc.n + 1) * d, retained: (2 * trunc.window() + 1) * d };
            half_unit_residual(d, &trunc, tol)
        }
        TetraIdentity::Nec => {
            let m = inst.need_model()?;
            commuting_square_residual(&m.model, &m.data)
        }
        TetraIdentity::Extract => {
            let m = inst.need_model()?;
            extract_through_column(&m.model, &m.data, opts.samples, tol)?.worst()
        }
        TetraIdentity::Dil => {
            let m = inst.need_model()?;
            dilation_residual(m).max(power_dilation_residual(m, opts.power_degree))
        }
    };
    Ok(VerificationReport::new(id.id(), residual, tol.residual_tol, window, t.digest()))
}

/// max of ‖φ₂T* − W*φ₂‖ over T ∈ {A, B} with their W-blocks and
/// ‖φ₂P* − V*φ₂‖, on window rows and interior columns.
pub fn dilation_residual(inst: &DilationInstance) -> f64 {
    let model = &inst.model;
    let layout = model.layout();
    let rows = layout.window_rows(model.truncation.window());
    let mask = &model.mask;
    let phi = &model.phi2;
    let mut worst = op_norm(&submatrix(&(phi * model.p.adjoint() - layout.apply_v_adjoint(phi)), &rows, mask));
    for (blk, member) in inst.data.blocks.iter().zip(&inst.tuple.members) {
        let diff = phi * member.adjoint() - layout.apply_w_adjoint(blk, phi);
        worst = worst.max(op_norm(&submatrix(&diff, &rows, mask)));
    }
    worst
}

/// Tetrablock model instance from (A, B) over a structured P: solves both
/// pairs on the interior window and builds the model.
pub fn tetra_model_instance(
    op: &StructuredOperator,
    a: ComplexMatrix,
    b: ComplexMatrix,
    trunc: &TruncationOrder,
    cfg: &ModelConfig,
    tol: &Tolerances,
) -> Result<DilationInstance, TetraError> {
    let model = DilationModel::build(op, trunc, cfg, tol)?;
    let triple = ETriple::new(a, b, model.p.clone())?.with_window(model.mask.clone());
    let pair = model.defects().clone();
    let f = solve_fo_pair_with(&triple, &pair.defect, tol)?.ops();
    let g = solve_fo_pair_with(&triple.adjoint(), &pair.defect_star, tol)?.ops();
    let mut tuple = triple.as_tuple();
    tuple.a = Some(f.to_vec());
    tuple.b = Some(g.to_vec());
    let data = WBlockData::tetrablock(&f, &g);
    Ok(DilationInstance::new(tuple, data, model, tol))
}

/// Round-trip diagnostics of the tetrablock sufficiency construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ERoundTrip {
    /// Max pairwise commutator of (A, B, P) on the window.
    pub commutation: f64,
    /// max_i ‖solve(A, B, P)_i − F_i‖.
    pub f_error: f64,
    /// max_i ‖solve(A*, B*, P*)_i − G_i‖.
    pub g_error: f64,
}

/// Sufficiency construction for the tetrablock: from P (structured) and
/// pairs F (on 𝒟_P) and G (on 𝒟_{P*}) in the model's canonical defect
/// bases, builds A = φ₂*W₁φ₂ and B = φ₂*W₂φ₂ and checks the round trip.
pub fn construct_e_from_fo(
    op: &StructuredOperator,
    f: &[ComplexMatrix; 2],
    g: &[ComplexMatrix; 2],
    trunc: &TruncationOrder,
    cfg: &ModelConfig,
    tol: &Tolerances,
) -> Result<(DilationInstance, ERoundTrip), TetraError> {
    let model = DilationModel::build(op, trunc, cfg, tol)?;
    construct_e_on_model(model, f, g, tol)
}

/// [`construct_e_from_fo`] on a prebuilt model.
pub fn construct_e_on_model(
    model: DilationModel,
    f: &[ComplexMatrix; 2],
    g: &[ComplexMatrix; 2],
    tol: &Tolerances,
) -> Result<(DilationInstance, ERoundTrip), TetraError> {
    let layout = model.layout();
    if f.iter().any(|m| m.nrows() != layout.k || m.ncols() != layout.k)
        || g.iter().any(|m| m.nrows() != layout.ks || m.ncols() != layout.ks)
    {
        return Err(TetraError::MissingInput(format!(
            "F must be {0}x{0} and G {1}x{1} (defect dimensions)",
            layout.k, layout.ks
        )));
    }
    let (comm, balance) = commutation_flag_residuals(&f[0], &f[1]);
    if comm > tol.residual_tol {
        return Err(TetraError::HypothesisViolated { identity: "[F1,F2] = 0".into(), residual: comm });
    }
    if balance > tol.residual_tol {
        return Err(TetraError::HypothesisViolated { identity: "[F1,F1*] = [F2,F2*]".into(), residual: balance });
    }
    let data = WBlockData::tetrablock(f, g);
    let built = construct_members(&model, &data, tol)?;
    let mask = model.mask.clone();
    let triple = ETriple::new(built[0].clone(), built[1].clone(), model.p.clone())?.with_window(mask.clone());
    let commutation = masked_commutation(&triple.members(), &mask);
    let pair = model.defects().clone();
    let sf = solve_fo_pair_with(&triple, &pair.defect, tol)?;
    let sg = solve_fo_pair_with(&triple.adjoint(), &pair.defect_star, tol)?;
    let err = |x: &[ComplexMatrix; 2], y: &[ComplexMatrix; 2]| {
        x.iter().zip(y).map(|(u, v)| op_norm(&(u - v))).fold(0.0, f64::max)
    };
    let rt = ERoundTrip { commutation, f_error: err(&sf.ops(), f), g_error: err(&sg.ops(), g) };
    let mut tuple = triple.as_tuple();
    tuple.a = Some(f.to_vec());
    tuple.b = Some(g.to_vec());
    Ok((DilationInstance::new(tuple, data, model, tol), rt))
}

/// Random point (β₁ + β̄₂x₃, β₂ + β̄₁x₃, x₃) with |β₁| + |β₂| ≤ `beta` and
/// |x₃| ≤ `radius` (|x₃| = `radius` when `on_circle`).
pub fn random_tetrablock_point(beta: f64, radius: f64, on_circle: bool, rng: &mut ChaCha8Rng) -> [Complex64; 3] {
    let x3 = if on_circle {
        Complex64::from_polar(radius, 2.0 * PI * rng.random::<f64>())
    } else {
        random_disc_point(radius, rng)
    };
    let total = beta * rng.random::<f64>();
    let split = rng.random::<f64>();
    let b1 = Complex64::from_polar(total * split, 2.0 * PI * rng.random::<f64>());
    let b2 = Complex64::from_polar(total * (1.0 - split), 2.0 * PI * rng.random::<f64>());
    [b1 + b2.conj() * x3, b2 + b1.conj() * x3, x3]
}

fn diag(values: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { c64(0.0, 0.0) })
}

/// Commuting normal triple W·diag(points)·W*.
fn normal_triple(points: &[[Complex64; 3]], w: &ComplexMatrix) -> Result<ETriple, TetraError> {
    let coord = |i: usize| {
        let d: Vec<Complex64> = points.iter().map(|p| p[i]).collect();
        w * diag(&d) * w.adjoint()
    };
    ETriple::new(coord(0), coord(1), coord(2))
}

/// Supported tetrablock generator identifiers.
pub const TETRA_GENERATORS: [&str; 6] =
    ["e-unitary", "normal", "coinvariant-compression", "backshift-astar", "scalar", "zero-p"];

/// Compression of the 𝔼-isometry (M_{Y₁*+zY₀*}, M_{Y₀+zY₁}, M_z) on
/// H²(ℂ^d) to the model space of the Blaschke product with zeros `lambdas`,
/// in the Takenaka–Malmquist basis. Y₀, Y₁ are V·diag(y₀), V·diag(y₁)·V*
/// with |y₀| + |y₁| ≤ 1 entrywise, so the symbols commute and V₂ is a
/// contraction.
pub fn compressed_e_isometry(
    y0: &[Complex64],
    y1: &[Complex64],
    v: &ComplexMatrix,
    lambdas: &[Complex64],
) -> Result<ETriple, TetraError> {
    let d = v.nrows();
    let m = lambdas.len();
    let sb = crate::gamma_fo::compressed_shift(lambdas);
    let eye_m = ComplexMatrix::identity(m, m);
    let c0 = v * diag(y0) * v.adjoint();
    let c1 = v * diag(y1) * v.adjoint();
    let a = eye_m.kronecker(&c1.adjoint()) + sb.kronecker(&c0.adjoint());
    let b = eye_m.kronecker(&c0) + sb.kronecker(&c1);
    let p = sb.kronecker(&ComplexMatrix::identity(d, d));
    ETriple::new(a, b, p)
}

/// Seeded tetrablock triple generator.
///
/// * `e-unitary`: commuting normal triple with joint spectrum in b𝔼.
/// * `normal`: commuting normal triple with joint spectrum in 𝔼 and
///   |x₃| ≤ 0.6 (pure P).
/// * `coinvariant-compression`: [`compressed_e_isometry`] with `dim`
///   components and `points` zeros (points·dim ≤ 8, |λ| ≤ 0.6).
/// * `backshift-astar`: ((I+P)/2, (I+P)/2, P) with P = M_z* on H²(ℂ^dim)
///   truncated at `truncation` (default 32), interior window attached.
/// * `scalar`: a point of 𝔼 (given or random).
/// * `zero-p`: commuting normal (A, B, 0) with joint spectrum in 𝔼.
pub fn make_tetra_instance(kind: &str, params: &GenParams, seed: u64) -> Result<ETriple, TetraError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = params.dim.max(1);
    match kind {
        "e-unitary" => {
            let w = random_unitary(dim, &mut rng);
            let pts: Vec<[Complex64; 3]> = (0..dim).map(|_| random_tetrablock_point(1.0, 1.0, true, &mut rng)).collect();
            normal_triple(&pts, &w)
        }
        "normal" => {
            let w = random_unitary(dim, &mut rng);
            let pts: Vec<[Complex64; 3]> = (0..dim).map(|_| random_tetrablock_point(0.99, 0.6, false, &mut rng)).collect();
            normal_triple(&pts, &w)
        }
        "zero-p" => {
            let w = random_unitary(dim, &mut rng);
            let pts: Vec<[Complex64; 3]> = (0..dim).map(|_| random_tetrablock_point(0.99, 0.0, false, &mut rng)).collect();
            normal_triple(&pts, &w)
        }
        "coinvariant-compression" => {
            let m = params.points.max(1);
            if m * dim > 8 {
                return Err(TetraError::InvalidParams("points·dim must be at most 8".into()));
            }
            let v = random_unitary(dim, &mut rng);
            let mut y0 = Vec::with_capacity(dim);
            let mut y1 = Vec::with_capacity(dim);
            for _ in 0..dim {
                let total = 0.99 * rng.random::<f64>().sqrt();
                let split = rng.random::<f64>();
                y0.push(Complex64::from_polar(total * split, 2.0 * PI * rng.random::<f64>()));
                y1.push(Complex64::from_polar(total * (1.0 - split), 2.0 * PI * rng.random::<f64>()));
            }
            let lambdas: Vec<Complex64> = (0..m).map(|_| random_disc_point(0.6, &mut rng)).collect();
            compressed_e_isometry(&y0, &y1, &v, &lambdas)
        }
        "backshift-astar" => {
            let n = if params.truncation == 0 { 32 } else { params.truncation };
            let trunc = TruncationOrder::new(n, 3)?;
            let op = StructuredOperator::shift_adjoint(dim);
            let p = materialize(&op, &trunc);
            let h = (ComplexMatrix::identity(p.nrows(), p.nrows()) + &p) * c64(0.5, 0.0);
            Ok(ETriple::new(h.clone(), h, p)?.with_window(op.interior_indices(&trunc)))
        }
        "scalar" => {
            let x = match &params.point {
                Some(pt) if pt.len() == 3 => [pt[0], pt[1], pt[2]],
                Some(pt) => return Err(TetraError::InvalidParams(format!("point needs 3 coordinates, got {}", pt.len()))),
                None => random_tetrablock_point(0.99, 0.95, false, &mut rng),
            };
            let s = |z: Complex64| ComplexMatrix::from_element(1, 1, z);
            ETriple::new(s(x[0]), s(x[1]), s(x[2]))
        }
        other => Err(TetraError::InvalidParams(format!("unknown tetrablock generator {other}"))),
    }
}

/// Seeded tetrablock model instances over c.n.u P: `backshift-astar`
/// (multiplicity `dim`, A = B = (I+P)/2), `compression-model` (a
/// co-invariant compression, pure P) and `direct-sum-model` (a
/// multiplicity-one backward shift plus a compression).
pub fn make_tetra_model_instance(
    kind: &str,
    params: &GenParams,
    seed: u64,
    cfg: &ModelConfig,
    tol: &Tolerances,
) -> Result<DilationInstance, TetraError> {
    let n_trunc = if params.truncation == 0 { 64 } else { params.truncation };
    let trunc = TruncationOrder::new(n_trunc, n_trunc / 2)?;
    let half_plus = |p: &ComplexMatrix| (ComplexMatrix::identity(p.nrows(), p.nrows()) + p) * c64(0.5, 0.0);
    let finite = || {
        make_tetra_instance(
            "coinvariant-compression",
            &GenParams { dim: params.dim.max(1), points: params.points.max(1), ..Default::default() },
            seed,
        )
    };
    match kind {
        "backshift-astar" => {
            let op = StructuredOperator::shift_adjoint(params.dim.max(1));
            let h = half_plus(&materialize(&op, &trunc));
            tetra_model_instance(&op, h.clone(), h, &trunc, cfg, tol)
        }
        "compression-model" => {
            let t = finite()?;
            tetra_model_instance(&StructuredOperator::finite(t.p.clone()), t.a, t.b, &trunc, cfg, tol)
        }
        "direct-sum-model" => {
            let t = finite()?;
            let shift = StructuredOperator::shift_adjoint(1);
            let op = StructuredOperator::direct_sum(vec![shift.clone(), StructuredOperator::finite(t.p.clone())])?;
            let h = half_plus(&materialize(&shift, &trunc));
            let a = crate::linalg::block_diag(&[h.clone(), t.a]);
            let b = crate::linalg::block_diag(&[h, t.b]);
            tetra_model_instance(&op, a, b, &trunc, cfg, tol)
        }
        other => Err(TetraError::InvalidParams(format!("unknown tetrablock model generator {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn scalar(a: f64, b: f64, p: f64) -> ETriple {
        let s = |x: f64| ComplexMatrix::from_element(1, 1, c64(x, 0.0));
        ETriple::new(s(a), s(b), s(p)).unwrap()
    }

    #[test]
    fn zero_p_pair_is_the_triple() {
        let t = make_tetra_instance("zero-p", &GenParams { dim: 3, ..Default::default() }, 4).unwrap();
        let pair = solve_fo_pair(&t, &tol()).unwrap();
        let q = &t.defects(&tol()).unwrap().defect.space.basis;
        assert!(op_norm(&(q * &pair.f1 * q.adjoint() - &t.a)) < 1e-12);
        assert!(op_norm(&(q * &pair.f2 * q.adjoint() - &t.b)) < 1e-12);
    }

    #[test]
    fn scalar_pair_closed_form() {
        let t = scalar(0.3, 0.4, 0.5);
        let pair = solve_fo_pair(&t, &tol()).unwrap();
        // 1-dim defect with positive basis vector: F₁ = (a − b̄p)/(1 − |p|²).
        assert!((pair.f1[(0, 0)] - c64((0.3 - 0.4 * 0.5) / 0.75, 0.0)).norm() < 1e-12);
        assert!((pair.f2[(0, 0)] - c64((0.4 - 0.3 * 0.5) / 0.75, 0.0)).norm() < 1e-12);
        assert!(pair.commutation_flags.fo_commute && pair.commutation_flags.defect_balance);
    }

    #[test]
    fn e_unitary_has_empty_pair() {
        let t = make_tetra_instance("e-unitary", &GenParams { dim: 3, ..Default::default() }, 9).unwrap();
        assert_eq!(classify_e_triple(&t, &tol(), 10).verdict, EVerdict::EUnitary);
        let pair = solve_fo_pair(&t, &tol()).unwrap();
        assert_eq!(pair.defect_dim, 0);
    }

    #[test]
    fn refutes_large_coordinate() {
        let e = ComplexMatrix::identity(2, 2);
        let t = ETriple::new(&e * c64(2.0, 0.0), e * c64(0.0, 0.0), ComplexMatrix::zeros(2, 2)).unwrap();
        assert_eq!(classify_e_triple(&t, &tol(), 10).verdict.label(), "Refuted");
    }

    #[test]
    fn half_unit_lemma() {
        let trunc = TruncationOrder::new(32, 3).unwrap();
        assert!(half_unit_residual(1, &trunc, &tol()) <= 1e-12);
        assert!(half_unit_residual(2, &trunc, &tol()) <= 1e-12);
    }

    #[test]
    fn backshift_triple_is_e_isometry_adjoint() {
        let t = make_tetra_instance("backshift-astar", &GenParams { dim: 1, truncation: 24, ..Default::default() }, 0)
            .unwrap();
        let class = classify_e_triple(&t.adjoint(), &tol(), 0);
        assert_eq!(class.verdict, EVerdict::EIsometry);
        let pair = solve_fo_pair(&t, &tol()).unwrap();
        assert!((pair.f1[(0, 0)] - c64(0.5, 0.0)).norm() < 1e-12);
        assert!((pair.f2[(0, 0)] - c64(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn coupled_system_agrees_with_sandwich_on_clustered_spectrum() {
        // The realified system of this normal triple has many repeated
        // singular values; a factorization that fails to reproduce it shows
        // up as a solver disagreement.
        let t = make_tetra_instance("normal", &GenParams { dim: 4, ..Default::default() }, 19).unwrap();
        let pair = solve_fo_pair(&t, &tol()).unwrap();
        assert!(pair.solver_gap <= 1e-9, "gap {}", pair.solver_gap);
    }
}
