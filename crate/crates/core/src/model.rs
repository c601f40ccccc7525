//! Characteristic-function model and dilation verification.
//!
//! For a completely non-unitary contraction P (a finite pure block, a
//! truncated backward shift, or a direct sum of these) this module builds
//! truncated versions of
//!
//! * the column operator C = (M_{Θ_P}; Δ_P) from H²(𝒟_P) into
//!   𝐊 = H²(𝒟_{P*}) ⊕ clos(Δ_P L²(𝒟_P)), with 𝒬_P = Ran C and ℋ_P = 𝐊 ⊖ 𝒬_P;
//! * the Douglas embedding φ₁ h = Σ zᵐ D_{P*}P*ᵐh ⊕ 𝒜_*^{1/2}h;
//! * the intertwiner 𝔘 between the two minimal isometric dilations and
//!   φ₂ = 𝔘*φ₁, which lands in ℋ_P;
//!
//! and checks the identities relating them to fundamental operators:
//! Fourier-coefficient expansions, the commuting squares of the necessary
//! condition, multiplier extraction, the block structure of 𝔘 and the
//! power-dilation relation. [`construct_from_fo_data`] runs the sufficiency
//! direction: S_j = φ₂*W_jφ₂ from prescribed fundamental operators.
//!
//! Coordinates of the ambient space are mode-major: Hardy modes 0..=N of
//! 𝒟_{P*} first, then Laurent modes −N..=N of 𝒟_P. The unitary part of the
//! Douglas dilation for a backward-shift block is realized inside the
//! Laurent coordinates: mode k of the block maps to e^{−i(k+1)t}, so the
//! unitary there is multiplication by e^{−it}.

use crate::charfn::{CharFnError, CharFnEvaluator, DefectPair};
use crate::gamma_domain::{refute_tuple, Domain};
use crate::gamma_fo::{
    disc_grid, gamma_contraction_check, scaled_tuple, solve_fo_tuple_with, FoError, OperatorTuple,
    VerificationReport, WindowInfo,
};
use crate::linalg::{
    binomial, c64, checked_svd, hermitian_part, mat_pow, op_norm, polar_unitary, submatrix, ComplexMatrix, LinalgError,
    Tolerances,
};
use crate::structured::{
    materialize, strong_limit_astar, toeplitz_extract, OperatorKind, StructuredError, StructuredOperator,
    TruncationOrder,
};
use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Errors of the model layer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("truncation too coarse: isometry defect {defect:.3e} exceeds {tolerance:.3e} on the interior window")]
    TruncationInsufficient { defect: f64, tolerance: f64 },
    #[error("Douglas series tail {tail:.3e} is not negligible for a finite block")]
    TailTooLarge { tail: f64 },
    #[error("no embedding into the model space found (residual {residual:.3e})")]
    EmbeddingNotFound { residual: f64 },
    #[error("hypothesis {identity} violated: residual {residual:.3e}")]
    HypothesisViolated { identity: String, residual: f64 },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("FFT grid {0} must be a power of two covering the requested modes")]
    InvalidGrid(usize),
    #[error("unsupported operator: {0}")]
    Unsupported(String),
    #[error(transparent)]
    CharFn(#[from] CharFnError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Structured(#[from] StructuredError),
    #[error(transparent)]
    Fo(#[from] FoError),
}

/// Numerical parameters of the model construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// FFT grid for Taylor and Fourier coefficients (power of two).
    pub fft_grid: usize,
    /// Radius of the circle on which Θ_P is sampled for Taylor coefficients.
    pub taylor_radius: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { fft_grid: 4096, taylor_radius: 0.98 }
    }
}

/// Index bookkeeping for the ambient space H²(𝒟_{P*}) ⊕ L²(𝒟_P) at
/// truncation N.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelLayout {
    /// Truncation order N.
    pub n: usize,
    /// dim 𝒟_P.
    pub k: usize,
    /// dim 𝒟_{P*}.
    pub ks: usize,
}

impl ModelLayout {
    pub fn hardy_len(&self) -> usize {
        (self.n + 1) * self.ks
    }

    pub fn laurent_len(&self) -> usize {
        (2 * self.n + 1) * self.k
    }

    pub fn ambient(&self) -> usize {
        self.hardy_len() + self.laurent_len()
    }

    /// Dimension of truncated H²(𝒟_P), the domain of the column.
    pub fn input_len(&self) -> usize {
        (self.n + 1) * self.k
    }

    /// Row of Hardy mode m, component a.
    pub fn hardy(&self, m: usize, a: usize) -> usize {
        m * self.ks + a
    }

    /// Row of Laurent mode m ∈ [−N, N], component a.
    pub fn laurent(&self, m: i64, a: usize) -> usize {
        self.hardy_len() + (m + self.n as i64) as usize * self.k + a
    }

    /// Ambient rows with Hardy mode ≤ w and Laurent |mode| ≤ w.
    pub fn window_rows(&self, w: usize) -> Vec<usize> {
        let w = w.min(self.n);
        let mut out: Vec<usize> = (0..(w + 1) * self.ks).collect();
        let wi = w as i64;
        for m in -wi..=wi {
            out.extend((0..self.k).map(|a| self.laurent(m, a)));
        }
        out
    }

    /// Columns of truncated H²(𝒟_P) with mode ≤ w.
    pub fn input_window(&self, w: usize) -> Vec<usize> {
        (0..(w.min(self.n) + 1) * self.k).collect()
    }

    /// V = M_z ⊕ M_{e^{it}} applied to ambient columns.
    pub fn apply_v(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(x.nrows(), x.ncols());
        let (ks, k, n) = (self.ks, self.k, self.n);
        if ks > 0 {
            for m in 1..=n {
                out.rows_mut(m * ks, ks).copy_from(&x.rows((m - 1) * ks, ks));
            }
        }
        if k > 0 {
            let base = self.hardy_len();
            for m in 1..=2 * n {
                out.rows_mut(base + m * k, k).copy_from(&x.rows(base + (m - 1) * k, k));
            }
        }
        out
    }

    /// V* applied to ambient columns.
    pub fn apply_v_adjoint(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(x.nrows(), x.ncols());
        let (ks, k, n) = (self.ks, self.k, self.n);
        if ks > 0 {
            for m in 0..n {
                out.rows_mut(m * ks, ks).copy_from(&x.rows((m + 1) * ks, ks));
            }
        }
        if k > 0 {
            let base = self.hardy_len();
            for m in 0..2 * n {
                out.rows_mut(base + m * k, k).copy_from(&x.rows(base + (m + 1) * k, k));
            }
        }
        out
    }

    /// diag(M_{Y₀+zY₁} on H²(𝒟_{P*}), M_{c₀+c₁e^{it}} on L²(𝒟_P)) applied
    /// to ambient columns.
    pub fn apply_w(&self, w: &WBlock, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(x.nrows(), x.ncols());
        let (ks, k, n) = (self.ks, self.k, self.n);
        if ks > 0 {
            for m in 0..=n {
                let mut blk = &w.hardy.0 * x.rows(m * ks, ks);
                if m > 0 {
                    blk += &w.hardy.1 * x.rows((m - 1) * ks, ks);
                }
                out.rows_mut(m * ks, ks).copy_from(&blk);
            }
        }
        if k > 0 {
            let base = self.hardy_len();
            for m in 0..=2 * n {
                let mut blk = x.rows(base + m * k, k) * w.laurent.0;
                if m > 0 {
                    blk += x.rows(base + (m - 1) * k, k) * w.laurent.1;
                }
                out.rows_mut(base + m * k, k).copy_from(&blk);
            }
        }
        out
    }

    /// Adjoint of [`ModelLayout::apply_w`] on the truncation (the last
    /// mode loses its coupling to the discarded next mode).
    pub fn apply_w_adjoint(&self, w: &WBlock, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(x.nrows(), x.ncols());
        let (ks, k, n) = (self.ks, self.k, self.n);
        if ks > 0 {
            let (y0, y1) = (w.hardy.0.adjoint(), w.hardy.1.adjoint());
            for m in 0..=n {
                let mut blk = &y0 * x.rows(m * ks, ks);
                if m < n {
                    blk += &y1 * x.rows((m + 1) * ks, ks);
                }
                out.rows_mut(m * ks, ks).copy_from(&blk);
            }
        }
        if k > 0 {
            let base = self.hardy_len();
            let (c0, c1) = (w.laurent.0.conj(), w.laurent.1.conj());
            for m in 0..=2 * n {
                let mut blk = x.rows(base + m * k, k) * c0;
                if m < 2 * n {
                    blk += x.rows(base + (m + 1) * k, k) * c1;
                }
                out.rows_mut(base + m * k, k).copy_from(&blk);
            }
        }
        out
    }

    /// (I ⊗ U₁) ⊕ (I ⊗ U₂) applied to ambient columns.
    pub fn apply_block_unitary(&self, u1: &ComplexMatrix, u2: &ComplexMatrix, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(x.nrows(), x.ncols());
        let (ks, k, n) = (self.ks, self.k, self.n);
        if ks > 0 {
            for m in 0..=n {
                out.rows_mut(m * ks, ks).copy_from(&(u1 * x.rows(m * ks, ks)));
            }
        }
        if k > 0 {
            let base = self.hardy_len();
            for m in 0..=2 * n {
                out.rows_mut(base + m * k, k).copy_from(&(u2 * x.rows(base + m * k, k)));
            }
        }
        out
    }
}

/// M_{X₀+zX₁} on truncated H²(ℂ^k) applied to columns (mode-major rows).
pub fn apply_hardy_symbol(x0: &ComplexMatrix, x1: &ComplexMatrix, n: usize, f: &ComplexMatrix) -> ComplexMatrix {
    let k = x0.nrows();
    let mut out = ComplexMatrix::zeros(f.nrows(), f.ncols());
    if k == 0 {
        return out;
    }
    for m in 0..=n {
        let mut blk = x0 * f.rows(m * k, k);
        if m > 0 {
            blk += x1 * f.rows((m - 1) * k, k);
        }
        out.rows_mut(m * k, k).copy_from(&blk);
    }
    out
}

/// One W-block of a model: M_{Y₀+zY₁} on H²(𝒟_{P*}) and M_{c₀+c₁e^{it}} on
/// L²(𝒟_P), together with the symbol X₀ + zX₁ on 𝒟_P it should intertwine
/// with through the column (M_Θ; Δ).
#[derive(Debug, Clone, PartialEq)]
pub struct WBlock {
    pub hardy: (ComplexMatrix, ComplexMatrix),
    pub laurent: (Complex64, Complex64),
    pub right: (ComplexMatrix, ComplexMatrix),
}

/// Which operator family the W-blocks encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    /// Γₙ: blocks (B_j* + zB_{n−j}, C(n−1,j) + C(n−1,j−1)e^{it}).
    Gamma,
    /// Tetrablock: blocks (G_j* + zG_{3−j}, (1 + e^{it})/2).
    Tetrablock,
}

/// W-block data of a model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct WBlockData {
    pub family: Family,
    pub blocks: Vec<WBlock>,
}

impl WBlockData {
    /// Γₙ blocks from fundamental operators A (on 𝒟_P) and B (on 𝒟_{P*}).
    pub fn gamma(n: usize, a: &[ComplexMatrix], b: &[ComplexMatrix]) -> Self {
        let blocks = (1..n)
            .map(|j| WBlock {
                hardy: (b[j - 1].adjoint(), b[n - j - 1].clone()),
                laurent: (c64(binomial(n - 1, j as i64), 0.0), c64(binomial(n - 1, j as i64 - 1), 0.0)),
                right: (a[j - 1].clone(), a[n - j - 1].adjoint()),
            })
            .collect();
        WBlockData { family: Family::Gamma, blocks }
    }

    /// Tetrablock blocks from the fundamental pairs F (on 𝒟_P) and G (on
    /// 𝒟_{P*}).
    pub fn tetrablock(f: &[ComplexMatrix; 2], g: &[ComplexMatrix; 2]) -> Self {
        let half = c64(0.5, 0.0);
        let blocks = (0..2)
            .map(|j| WBlock {
                hardy: (g[j].adjoint(), g[1 - j].clone()),
                laurent: (half, half),
                right: (f[j].clone(), f[1 - j].adjoint()),
            })
            .collect();
        WBlockData { family: Family::Tetrablock, blocks }
    }
}

/// Uniform samples of a matrix function on the circle |z| = radius, turned
/// into coefficients c_m = (1/G)Σ f(r e^{it_j}) e^{−imt_j} / r^m.
fn fft_coefficients<E>(
    grid: usize,
    radius: f64,
    rows: usize,
    cols: usize,
    modes: &[i64],
    mut sample: impl FnMut(Complex64) -> Result<ComplexMatrix, E>,
) -> Result<Vec<ComplexMatrix>, E> {
    let mut data = vec![vec![Complex64::new(0.0, 0.0); grid]; rows * cols];
    for j in 0..grid {
        let z = Complex64::from_polar(radius, 2.0 * PI * j as f64 / grid as f64);
        let v = sample(z)?;
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c][j] = v[(r, c)];
            }
        }
    }
    let fft = FftPlanner::new().plan_fft_forward(grid);
    for d in data.iter_mut() {
        fft.process(d);
    }
    Ok(modes
        .iter()
        .map(|&m| {
            let idx = m.rem_euclid(grid as i64) as usize;
            let scale = 1.0 / (grid as f64 * radius.powi(m as i32));
            ComplexMatrix::from_fn(rows, cols, |r, c| data[r * cols + c][idx] * scale)
        })
        .collect())
}

/// Taylor coefficients Θ̂_0, …, Θ̂_N of Θ_P by FFT on |z| = radius.
pub fn theta_taylor_fft(
    ev: &CharFnEvaluator,
    n: usize,
    cfg: &ModelConfig,
) -> Result<Vec<ComplexMatrix>, CharFnError> {
    let modes: Vec<i64> = (0..=n as i64).collect();
    let (ks, k) = (ev.defect_star_dim(), ev.defect_dim());
    if ks == 0 || k == 0 {
        return Ok(vec![ComplexMatrix::zeros(ks, k); n + 1]);
    }
    fft_coefficients(cfg.fft_grid, cfg.taylor_radius, ks, k, &modes, |z| ev.theta_eval(z))
}

/// Closed-form Taylor coefficients: Θ̂_0 = −P and Θ̂_m = D_{P*}P*^{m−1}D_P,
/// compressed to the defect bases.
pub fn theta_taylor_closed(ev: &CharFnEvaluator, n: usize) -> Vec<ComplexMatrix> {
    let pair = ev.defects();
    let q = &pair.defect.space.basis;
    let qs = &pair.defect_star.space.basis;
    let mut out = vec![-(qs.adjoint() * ev.p() * q)];
    let mut x = &pair.defect.d * q;
    let ps = ev.p().adjoint();
    for _ in 1..=n {
        out.push(qs.adjoint() * &pair.defect_star.d * &x);
        x = &ps * x;
    }
    out
}

/// Truncated model spaces and the column (M_Θ; Δ).
#[derive(Debug, Clone)]
pub struct ModelSpaces {
    pub truncation: TruncationOrder,
    pub layout: ModelLayout,
    /// Θ̂_0, …, Θ̂_N (dim 𝒟_{P*} × dim 𝒟_P).
    pub theta_coeffs: Vec<ComplexMatrix>,
    /// Δ̂_m for m = −2N..=2N, stored at index m + 2N.
    pub delta_coeffs: Vec<ComplexMatrix>,
    /// True when Δ_P(t) is constant in t to rounding.
    pub delta_constant: bool,
    /// The column operator, ambient × (N+1)·dim 𝒟_P.
    pub column: ComplexMatrix,
    /// Orthonormal basis of truncated 𝐊 (ambient coordinates).
    pub k_basis: ComplexMatrix,
    /// Orthonormal basis of 𝒬_P.
    pub q_basis: ComplexMatrix,
    /// Orthonormal basis of ℋ_P = 𝐊 ⊖ 𝒬_P.
    pub h_basis: ComplexMatrix,
    /// ‖C*C − I‖ on the interior input window.
    pub isometry_defect: f64,
}

impl ModelSpaces {
    /// Δ̂_m for |m| ≤ 2N.
    pub fn delta_coeff(&self, m: i64) -> &ComplexMatrix {
        &self.delta_coeffs[(m + 2 * self.truncation.n as i64) as usize]
    }

    /// Laurent matrix of Δ_P on modes −N..=N.
    pub fn delta_laurent(&self) -> ComplexMatrix {
        let (n, k) = (self.truncation.n as i64, self.layout.k);
        let size = (2 * n + 1) as usize * k;
        let mut out = ComplexMatrix::zeros(size, size);
        for r in -n..=n {
            for c in -n..=n {
                let blk = self.delta_coeff(r - c);
                out.view_mut(((r + n) as usize * k, (c + n) as usize * k), (k, k)).copy_from(blk);
            }
        }
        out
    }
}

/// Orthonormal basis of the orthogonal complement of the columns of `q` in
/// ℂ^dim.
fn complement_basis(q: &ComplexMatrix, dim: usize) -> ComplexMatrix {
    if q.ncols() == 0 {
        return ComplexMatrix::identity(dim, dim);
    }
    let proj = ComplexMatrix::identity(dim, dim) - q * q.adjoint();
    let eig = SymmetricEigen::new(hermitian_part(&proj));
    let keep: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let mut out = ComplexMatrix::zeros(dim, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &eig.eigenvectors.column(i));
    }
    out
}

/// Builds truncated 𝐊, 𝒬_P and ℋ_P from the column (M_Θ; Δ).
///
/// Θ's Taylor coefficients come from an FFT on |z| = `cfg.taylor_radius`;
/// Δ's Fourier coefficients from an FFT on the unit circle. Ran Δ is
/// resolved exactly when Δ is constant, otherwise from the Laurent matrix.
/// 𝒬_P is spanned by left singular vectors of the column with singular
/// value above 1/2; ℋ_P is the complement inside 𝐊.
pub fn build_model_spaces(
    ev: &CharFnEvaluator,
    trunc: &TruncationOrder,
    cfg: &ModelConfig,
    tol: &Tolerances,
) -> Result<ModelSpaces, ModelError> {
    let n = trunc.n;
    if !cfg.fft_grid.is_power_of_two() || cfg.fft_grid < 8 * (n + 1) {
        return Err(ModelError::InvalidGrid(cfg.fft_grid));
    }
    let layout = ModelLayout { n, k: ev.defect_dim(), ks: ev.defect_star_dim() };
    let (k, ks) = (layout.k, layout.ks);
    let theta_coeffs = theta_taylor_fft(ev, n, cfg)?;
    let modes: Vec<i64> = (-2 * n as i64..=2 * n as i64).collect();
    let delta_coeffs = if k == 0 {
        vec![ComplexMatrix::zeros(0, 0); modes.len()]
    } else {
        fft_coefficients(cfg.fft_grid, 1.0, k, k, &modes, |z| ev.delta_eval(z.arg()))?
    };
    let const_scale = delta_coeffs.iter().map(op_norm).fold(0.0, f64::max).max(1.0);
    let delta_constant =
        modes.iter().zip(&delta_coeffs).all(|(&m, c)| m == 0 || op_norm(c) <= 1e-12 * const_scale);

    let amb = layout.ambient();
    let cols = layout.input_len();
    let mut column = ComplexMatrix::zeros(amb, cols);
    for c in 0..=n {
        for r in c..=n {
            if ks > 0 && k > 0 {
                column.view_mut((layout.hardy(r, 0), c * k), (ks, k)).copy_from(&theta_coeffs[r - c]);
            }
        }
        if k > 0 {
            for r in -(n as i64)..=n as i64 {
                let blk = &delta_coeffs[(r - c as i64 + 2 * n as i64) as usize];
                column.view_mut((layout.laurent(r, 0), c * k), (k, k)).copy_from(blk);
            }
        }
    }

    // Basis of truncated 𝐊: all Hardy coordinates plus the range of Δ.
    let range_vectors: Vec<nalgebra::DVector<Complex64>> = if k == 0 {
        vec![]
    } else if delta_constant {
        let eig = SymmetricEigen::new(hermitian_part(&delta_coeffs[2 * n]));
        let dirs: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] > 1e-8).collect();
        let mut out = Vec::new();
        for m in -(n as i64)..=n as i64 {
            for &i in &dirs {
                let mut v = nalgebra::DVector::zeros(amb);
                for a in 0..k {
                    v[layout.laurent(m, a)] = eig.eigenvectors[(a, i)];
                }
                out.push(v);
            }
        }
        out
    } else {
        let lap = {
            let size = layout.laurent_len();
            let mut lm = ComplexMatrix::zeros(size, size);
            for r in 0..=2 * n {
                for c in 0..=2 * n {
                    let blk = &delta_coeffs[(r as i64 - c as i64 + 2 * n as i64) as usize];
                    lm.view_mut((r * k, c * k), (k, k)).copy_from(blk);
                }
            }
            lm
        };
        let eig = SymmetricEigen::new(hermitian_part(&lap));
        (0..lap.nrows())
            .filter(|&i| eig.eigenvalues[i] > 1e-8)
            .map(|i| {
                let mut v = nalgebra::DVector::zeros(amb);
                v.rows_mut(layout.hardy_len(), layout.laurent_len()).copy_from(&eig.eigenvectors.column(i));
                v
            })
            .collect()
    };
    let hl = layout.hardy_len();
    let mut k_basis = ComplexMatrix::zeros(amb, hl + range_vectors.len());
    for i in 0..hl {
        k_basis[(i, i)] = c64(1.0, 0.0);
    }
    for (j, v) in range_vectors.iter().enumerate() {
        k_basis.set_column(hl + j, v);
    }

    let dim_k = k_basis.ncols();
    let ck = k_basis.adjoint() * &column;
    let (q_k, h_k) = if cols == 0 || dim_k == 0 {
        (ComplexMatrix::zeros(dim_k, 0), ComplexMatrix::identity(dim_k, dim_k))
    } else {
        let svd = checked_svd(&ck);
        let u = svd.u.expect("left vectors");
        let big: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 0.5).collect();
        let mut q = ComplexMatrix::zeros(dim_k, big.len());
        for (j, &i) in big.iter().enumerate() {
            q.set_column(j, &u.column(i));
        }
        let h = complement_basis(&q, dim_k);
        (q, h)
    };
    let q_basis = &k_basis * q_k;
    let h_basis = &k_basis * h_k;

    let win = layout.input_window(trunc.window());
    let cw = submatrix(&column, &(0..amb).collect::<Vec<_>>(), &win);
    let isometry_defect = if win.is_empty() || k == 0 {
        0.0
    } else {
        op_norm(&(cw.adjoint() * &cw - ComplexMatrix::identity(win.len(), win.len())))
    };
    if isometry_defect > tol.residual_tol {
        return Err(ModelError::TruncationInsufficient { defect: isometry_defect, tolerance: tol.residual_tol });
    }
    Ok(ModelSpaces {
        truncation: *trunc,
        layout,
        theta_coeffs,
        delta_coeffs,
        delta_constant,
        column,
        k_basis,
        q_basis,
        h_basis,
        isometry_defect,
    })
}

/// Truncated Douglas embedding with its diagnostics.
#[derive(Debug, Clone)]
pub struct DouglasEmbedding {
    /// φ₁ as an ambient × dim H matrix.
    pub phi: ComplexMatrix,
    /// ‖(φ₁*φ₁ − I + P^{N+1}P*^{N+1} − 𝒜_*)‖ on the window, the second
    /// group being the geometric tail of the truncated series.
    pub isometry_defect: f64,
    /// ‖φ₁P* − V*φ₁‖ on the window.
    pub intertwining_residual: f64,
}

/// Walks the block structure of P: (offset, block) for each leaf.
fn leaves<'a>(op: &'a StructuredOperator, trunc: &TruncationOrder, offset: usize, out: &mut Vec<(usize, &'a StructuredOperator)>) {
    if let OperatorKind::DirectSum(children) = &op.kind {
        let mut off = offset;
        for c in children {
            leaves(c, trunc, off, out);
            off += c.dim_at(trunc);
        }
    } else {
        out.push((offset, op));
    }
}

/// φ₁h = Σ_{m≤N} zᵐ D_{P*}P*ᵐh ⊕ 𝒜_*^{1/2}h on a truncation.
///
/// Finite blocks must be pure (their 𝒜_* vanishes and the tail
/// ‖P*^{N+1}‖ is small); backward-shift blocks have 𝒜_* = I and embed into
/// negative Laurent modes of their defect direction.
pub fn douglas_embedding(
    op: &StructuredOperator,
    trunc: &TruncationOrder,
    defects: &DefectPair,
    tol: &Tolerances,
) -> Result<DouglasEmbedding, ModelError> {
    let p = materialize(op, trunc);
    let h = p.nrows();
    let n = trunc.n;
    let layout = ModelLayout { n, k: defects.defect.dim(), ks: defects.defect_star.dim() };
    let mut phi = ComplexMatrix::zeros(layout.ambient(), h);
    let qs = &defects.defect_star.space.basis;
    let mut x = ComplexMatrix::identity(h, h);
    let ps = p.adjoint();
    let left = qs.adjoint() * &defects.defect_star.d;
    for m in 0..=n {
        if layout.ks > 0 {
            phi.view_mut((layout.hardy(m, 0), 0), (layout.ks, h)).copy_from(&(&left * &x));
        }
        x = &ps * x;
    }
    let mut tail = ComplexMatrix::zeros(h, h);
    let q = &defects.defect.space.basis;
    let mut blocks = Vec::new();
    leaves(op, trunc, 0, &mut blocks);
    for (off, leaf) in blocks {
        match &leaf.kind {
            OperatorKind::Finite(m) => {
                let size = m.nrows();
                let astar = crate::structured::finite_astar(m, tol, 10 * n.max(1))?;
                let power = mat_pow(&m.adjoint(), n + 1);
                let edge = op_norm(&power);
                if op_norm(&astar) > tol.residual_tol || edge > tol.residual_tol.sqrt() {
                    return Err(ModelError::TailTooLarge { tail: edge.max(op_norm(&astar)) });
                }
                let t = power.adjoint() * &power - astar;
                tail.view_mut((off, off), (size, size)).copy_from(&t);
            }
            OperatorKind::HardyShiftAdjoint(d) => {
                for a in 0..*d {
                    // Defect direction of the block's first mode.
                    let col = (0..q.ncols())
                        .find(|&j| q[(off + a, j)].norm() > 0.5)
                        .ok_or_else(|| ModelError::Unsupported("backward-shift defect direction not retained".into()))?;
                    let phase = q[(off + a, col)] / q[(off + a, col)].norm();
                    for mode in 0..n {
                        phi[(layout.laurent(-(mode as i64 + 1), col), off + mode * d + a)] = phase.conj();
                    }
                }
            }
            other => {
                return Err(ModelError::Unsupported(format!(
                    "Douglas embedding needs finite or backward-shift blocks, got {}",
                    match other {
                        OperatorKind::HardyMultiplier(_) => "a Hardy multiplier",
                        OperatorKind::LaurentMultiplier(_) => "a Laurent multiplier",
                        _ => "a materialized adjoint",
                    }
                )))
            }
        }
    }
    let mask = op.interior_indices(trunc);
    let gram = phi.adjoint() * &phi - ComplexMatrix::identity(h, h) + tail;
    let isometry_defect = op_norm(&submatrix(&gram, &mask, &mask));
    let rows = layout.window_rows(trunc.window());
    let diff = &phi * &ps - layout.apply_v_adjoint(&phi);
    let intertwining_residual = op_norm(&submatrix(&diff, &rows, &mask));
    Ok(DouglasEmbedding { phi, isometry_defect, intertwining_residual })
}

/// Block-diagonal intertwiner 𝔘 = (I ⊗ U₁) ⊕ (I ⊗ U₂) with 𝔘*φ₁ ⊥ 𝒬_P.
#[derive(Debug, Clone)]
pub struct Intertwiner {
    pub u1: ComplexMatrix,
    pub u2: ComplexMatrix,
    /// ‖φ₁*𝔘C‖ on the window after the unitary projection.
    pub residual: f64,
    /// Dimension of the solution space of the linear intertwining system.
    pub nullity: usize,
}

/// Solves φ₁*𝔘C = 0 over block-constant 𝔘 on the window, takes the
/// solution nearest to the identity (Frobenius) and projects each block to
/// the nearest unitary.
fn solve_intertwiner(
    layout: &ModelLayout,
    phi1: &ComplexMatrix,
    column: &ComplexMatrix,
    mask: &[usize],
    window: usize,
) -> Result<Intertwiner, ModelError> {
    let (k, ks, n) = (layout.k, layout.ks, layout.n);
    let win = layout.input_window(window);
    let unknowns = ks * ks + k * k;
    let eye = || Intertwiner {
        u1: ComplexMatrix::identity(ks, ks),
        u2: ComplexMatrix::identity(k, k),
        residual: 0.0,
        nullity: unknowns,
    };
    if mask.is_empty() || win.is_empty() || unknowns == 0 {
        return Ok(eye());
    }
    // Per-component row families: F[a] has rows φ₁ restricted to component a
    // of every mode, G[b] the same for the column.
    let gather = |mat: &ComplexMatrix, cols: &[usize], hardy: bool, a: usize| -> ComplexMatrix {
        let (modes, idx): (usize, Box<dyn Fn(usize) -> usize>) = if hardy {
            (n + 1, Box::new(move |m| layout.hardy(m, a)))
        } else {
            (2 * n + 1, Box::new(move |m| layout.laurent(m as i64 - n as i64, a)))
        };
        ComplexMatrix::from_fn(modes, cols.len(), |m, c| mat[(idx(m), cols[c])])
    };
    let rows = mask.len() * win.len();
    let mut sys = ComplexMatrix::zeros(rows, unknowns);
    let mut col = 0;
    for (hardy, dim) in [(true, ks), (false, k)] {
        let fs: Vec<ComplexMatrix> = (0..dim).map(|a| gather(phi1, mask, hardy, a)).collect();
        let gs: Vec<ComplexMatrix> = (0..dim).map(|b| gather(column, &win, hardy, b)).collect();
        for a in 0..dim {
            for b in 0..dim {
                let m = fs[a].adjoint() * &gs[b];
                sys.column_mut(col).copy_from_slice(m.as_slice());
                col += 1;
            }
        }
    }
    let svd = checked_svd(&sys);
    let vt = svd.v_t.expect("right vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    // Right singular vectors with (numerically) zero singular value,
    // including those beyond the row count.
    let mut null: Vec<nalgebra::DVector<Complex64>> = Vec::new();
    for i in 0..vt.nrows() {
        if svd.singular_values[i] <= 1e-8 * smax.max(1.0) {
            null.push(vt.row(i).adjoint());
        }
    }
    if vt.nrows() < unknowns {
        // Complete with the complement of the row space.
        let rowspace = vt.adjoint();
        let comp = complement_basis(&rowspace, unknowns);
        for j in 0..comp.ncols() {
            null.push(comp.column(j).into_owned());
        }
    }
    if null.is_empty() {
        let residual = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(ModelError::EmbeddingNotFound { residual });
    }
    let mut target = nalgebra::DVector::<Complex64>::zeros(unknowns);
    for a in 0..ks {
        target[a * ks + a] = c64(1.0, 0.0);
    }
    for a in 0..k {
        target[ks * ks + a * k + a] = c64(1.0, 0.0);
    }
    let mut x = nalgebra::DVector::<Complex64>::zeros(unknowns);
    for v in &null {
        x += v * v.dotc(&target);
    }
    // Unknown (a, b) multiplies φ-component a against column component b,
    // i.e. it is entry (a, b) of U.
    let u1 = polar_unitary(&ComplexMatrix::from_fn(ks, ks, |a, b| x[a * ks + b]));
    let u2 = polar_unitary(&ComplexMatrix::from_fn(k, k, |a, b| x[ks * ks + a * k + b]));
    let mut xu = nalgebra::DVector::<Complex64>::zeros(unknowns);
    for a in 0..ks {
        for b in 0..ks {
            xu[a * ks + b] = u1[(a, b)];
        }
    }
    for a in 0..k {
        for b in 0..k {
            xu[ks * ks + a * k + b] = u2[(a, b)];
        }
    }
    let residual = (&sys * xu).norm();
    Ok(Intertwiner { u1, u2, residual, nullity: null.len() })
}

/// All model data attached to a c.n.u contraction at a truncation.
#[derive(Debug, Clone)]
pub struct DilationModel {
    pub operator: StructuredOperator,
    pub truncation: TruncationOrder,
    pub p: ComplexMatrix,
    /// Interior coordinates of H.
    pub mask: Vec<usize>,
    pub evaluator: CharFnEvaluator,
    /// Strong limit 𝒜_* of PⁿP*ⁿ.
    pub astar: ComplexMatrix,
    pub spaces: ModelSpaces,
    pub douglas: DouglasEmbedding,
    pub intertwiner: Intertwiner,
    /// φ₂ = 𝔘*φ₁: H → ℋ_P.
    pub phi2: ComplexMatrix,
    /// ‖𝒬-component of φ₂‖ plus its distance from 𝐊, on the window.
    pub embedding_residual: f64,
}

impl DilationModel {
    pub fn build(
        op: &StructuredOperator,
        trunc: &TruncationOrder,
        cfg: &ModelConfig,
        tol: &Tolerances,
    ) -> Result<Self, ModelError> {
        let p = materialize(op, trunc);
        let mask = op.interior_indices(trunc);
        let defects = DefectPair::new(&p, Some(&mask), tol)?;
        let astar = materialize(&strong_limit_astar(op, trunc, tol)?, trunc);
        let evaluator = CharFnEvaluator::with_defects(p.clone(), defects.clone(), *tol);
        let spaces = build_model_spaces(&evaluator, trunc, cfg, tol)?;
        let douglas = douglas_embedding(op, trunc, &defects, tol)?;
        let layout = spaces.layout;
        let intertwiner = solve_intertwiner(&layout, &douglas.phi, &spaces.column, &mask, trunc.window())?;
        let phi2 = layout.apply_block_unitary(&intertwiner.u1.adjoint(), &intertwiner.u2.adjoint(), &douglas.phi);
        let all: Vec<usize> = (0..layout.ambient()).collect();
        let pw = submatrix(&phi2, &all, &mask);
        let in_q = op_norm(&(spaces.q_basis.adjoint() * &pw));
        let outside_k = op_norm(&(&pw - &spaces.k_basis * (spaces.k_basis.adjoint() * &pw)));
        let embedding_residual = in_q.max(outside_k).max(intertwiner.residual);
        if embedding_residual > tol.residual_tol.sqrt() {
            return Err(ModelError::EmbeddingNotFound { residual: embedding_residual });
        }
        Ok(DilationModel {
            operator: op.clone(),
            truncation: *trunc,
            p,
            mask,
            evaluator,
            astar,
            spaces,
            douglas,
            intertwiner,
            phi2,
            embedding_residual,
        })
    }

    pub fn layout(&self) -> ModelLayout {
        self.spaces.layout
    }

    pub fn defects(&self) -> &DefectPair {
        self.evaluator.defects()
    }

    /// Window info for reports on H coordinates.
    pub fn window_info(&self) -> WindowInfo {
        WindowInfo::of_mask(self.p.nrows(), &self.mask)
    }
}

/// Instance flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InstanceFlags {
    /// 𝒜_* = 0 (finite pure P).
    pub pure: bool,
    /// 𝒜_* ≠ 0, realized by backward-shift blocks.
    pub astar_surrogate: bool,
}

/// A tuple (members and P) together with its model and W-blocks.
#[derive(Debug, Clone)]
pub struct DilationInstance {
    /// (S₁, …, S_{n−1}, P) for Γₙ or (A, B, P) for the tetrablock, with the
    /// interior window; Γₙ fundamental operators in the `a`/`b` slots.
    pub tuple: OperatorTuple,
    pub data: WBlockData,
    pub model: DilationModel,
    pub flags: InstanceFlags,
}

#[derive(Serialize)]
struct InstanceJson<'a> {
    family: Family,
    truncation: (usize, usize),
    flags: InstanceFlags,
    tuple: &'a OperatorTuple,
}

impl DilationInstance {
    /// Assembles an instance from a tuple with known W-blocks.
    pub fn new(tuple: OperatorTuple, data: WBlockData, model: DilationModel, tol: &Tolerances) -> Self {
        let astar_norm = op_norm(&model.astar);
        let flags = InstanceFlags { pure: astar_norm <= tol.residual_tol, astar_surrogate: astar_norm > tol.residual_tol };
        DilationInstance { tuple, data, model, flags }
    }

    /// JSON text of the tuple, truncation, family and flags.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&InstanceJson {
            family: self.data.family,
            truncation: (self.model.truncation.n, self.model.truncation.interior_margin),
            flags: self.flags,
            tuple: &self.tuple,
        })
        .expect("serializable")
    }

    pub fn digest(&self) -> String {
        crate::io::digest(&self.to_json())
    }
}

/// Solves the Γₙ fundamental operators of a tuple and its adjoint.
fn solve_both(tuple: &OperatorTuple, pair: &DefectPair, tol: &Tolerances) -> Result<(Vec<ComplexMatrix>, Vec<ComplexMatrix>), ModelError> {
    let a = solve_fo_tuple_with(tuple, &pair.defect, tol)?.ops;
    let b = solve_fo_tuple_with(&tuple.adjoint(), &pair.defect_star, tol)?.ops;
    Ok((a, b))
}

/// Γₙ model instance from S-members (S₁, …, S_{n−1}) over a structured P:
/// solves both fundamental tuples on the interior window and builds the
/// model.
pub fn gamma_model_instance(
    op: &StructuredOperator,
    s: Vec<ComplexMatrix>,
    trunc: &TruncationOrder,
    cfg: &ModelConfig,
    tol: &Tolerances,
) -> Result<DilationInstance, ModelError> {
    let model = DilationModel::build(op, trunc, cfg, tol)?;
    let mut members = s;
    members.push(model.p.clone());
    let n = members.len();
    let mut tuple = OperatorTuple::new(members)?.with_window(model.mask.clone());
    let (a, b) = solve_both(&tuple, model.defects(), tol)?;
    tuple.a = Some(a.clone());
    tuple.b = Some(b.clone());
    let data = WBlockData::gamma(n, &a, &b);
    Ok(DilationInstance::new(tuple, data, model, tol))
}

/// S_j = C(n−1,j)·I + C(n−1,j−1)·Q for j = 1, …, n−1.
pub fn binomial_members(n: usize, q: &ComplexMatrix) -> Vec<ComplexMatrix> {
    let dim = q.nrows();
    (1..n)
        .map(|j| {
            ComplexMatrix::identity(dim, dim) * c64(binomial(n - 1, j as i64), 0.0)
                + q * c64(binomial(n - 1, j as i64 - 1), 0.0)
        })
        .collect()
}

/// Γₙ instance on a backward-shift block of multiplicity d (𝒜_* = I):
/// S_j = C(n−1,j)·I + C(n−1,j−1)·P with P = M_z* on H²(ℂ^d). Its
/// fundamental operators are A_j = C(n−1,j)·I and B is empty.
pub fn backshift_instance(
    n: usize,
    d: usize,
    trunc: &TruncationOrder,
    cfg: &ModelConfig,
    tol: &Tolerances,
) -> Result<DilationInstance, ModelError> {
    let op = StructuredOperator::shift_adjoint(d);
    let p = materialize(&op, trunc);
    gamma_model_instance(&op, binomial_members(n, &p), trunc, cfg, tol)
}

/// Γₙ instance from a finite tuple with pure P.
pub fn finite_instance(
    tuple: &OperatorTuple,
    trunc: &TruncationOrder,
    cfg: &ModelConfig,
    tol: &Tolerances,
) -> Result<DilationInstance, ModelError> {
    let op = StructuredOperator::finite(tuple.p().clone());
    let s: Vec<ComplexMatrix> = tuple.members[..tuple.n - 1].to_vec();
    gamma_model_instance(&op, s, trunc, cfg, tol)
}

/// Direct sum of a backward-shift instance (multiplicity d) and a finite
/// tuple with pure P.
pub fn direct_sum_instance(
    d: usize,
    finite: &OperatorTuple,
    trunc: &TruncationOrder,
    cfg: &ModelConfig,
    tol: &Tolerances,
) -> Result<DilationInstance, ModelError> {
    let n = finite.n;
    let shift = StructuredOperator::shift_adjoint(d);
    let op = StructuredOperator::direct_sum(vec![shift.clone(), StructuredOperator::finite(finite.p().clone())])?;
    let back = binomial_members(n, &materialize(&shift, trunc));
    let s: Vec<ComplexMatrix> = (0..n - 1)
        .map(|j| crate::linalg::block_diag(&[back[j].clone(), finite.members[j].clone()]))
        .collect();
    gamma_model_instance(&op, s, trunc, cfg, tol)
}

/// The two appendix coefficient families for index j.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFamilies {
    /// Coefficients of Δ_P²·(C(n−1,j) + C(n−1,j−1)e^{it}).
    pub i: BTreeMap<i64, ComplexMatrix>,
    /// Coefficients of Δ_P²·(A_j + e^{it}A_{n−j}*).
    pub j: BTreeMap<i64, ComplexMatrix>,
}

/// Closed-form Fourier coefficients I_m and J_m, |m| ≤ m_range, assembled
/// from (S, P), the fundamental operators A and B and 𝒜_*, each
/// compressed to the 𝒟_P basis.
pub fn fourier_coeffs_closed(inst: &DilationInstance, j: usize, m_range: usize) -> Result<CoefficientFamilies, ModelError> {
    let t = &inst.tuple;
    let n = t.n;
    if inst.data.family != Family::Gamma {
        return Err(ModelError::MissingInput("Γₙ fundamental operators".into()));
    }
    if j == 0 || j >= n {
        return Err(ModelError::MissingInput(format!("index j = {j} outside 1..{}", n - 1)));
    }
    let a = t.a.as_ref().ok_or_else(|| ModelError::MissingInput("fundamental operators A".into()))?;
    let b = t.b.as_ref().ok_or_else(|| ModelError::MissingInput("fundamental operators B".into()))?;
    let pair = inst.model.defects();
    let (dp, dps) = (&pair.defect, &pair.defect_star);
    let q = &dp.space.basis;
    let d = &dp.d;
    let ds = &dps.d;
    let p = t.p();
    let ps = p.adjoint();
    let astar = &inst.model.astar;
    let c = c64(binomial(n - 1, j as i64), 0.0);
    let cp = c64(binomial(n - 1, j as i64 - 1), 0.0);
    let s_j = t.s(j);
    let s_adj = t.s(n - j).adjoint();
    let qs = &dps.space.basis;
    // Every term is q*·(…)·q with D_P at both ends, so products are formed
    // right to left on thin h × k blocks.
    let dq = d * q;
    let gram = dq.adjoint() * &dq;
    let sadj_dq = &s_adj * &dq;
    let astar_dq = astar * &dq;
    let astar_sadj_dq = astar * &sadj_dq;
    let mr = m_range as usize;
    // u_e = P*ᵉ·D_P·q for e ≤ m_range + 1, v_e = P*ᵉ·S_{n−j}*·D_P·q.
    let mut u = vec![dq.clone()];
    let mut v = vec![sadj_dq.clone()];
    for e in 1..=mr + 1 {
        u.push(&ps * &u[e - 1]);
        v.push(&ps * &v[e - 1]);
    }
    let dq_astar = astar_dq.adjoint();
    let mut fam_i = BTreeMap::new();
    let mut fam_j = BTreeMap::new();
    let b_nj = qs * &b[n - j - 1] * qs.adjoint();
    let b_j_adj = qs * b[j - 1].adjoint() * qs.adjoint();
    let j0 = &gram * &a[j - 1] - dq.adjoint() * (s_j * &dq)
        + dq.adjoint() * (ds * (&b_nj * (p * q)))
        + u[1].adjoint() * &astar_sadj_dq;
    let j1 = a[n - j - 1].adjoint() * &gram + q.adjoint() * (&ps * (&b_j_adj * (ds * &dq)))
        - dq.adjoint() * &sadj_dq
        + dq.adjoint() * &astar_sadj_dq;
    for m in -(mr as i64)..=mr as i64 {
        let (im, jm) = if m == 0 {
            (&dq_astar * &dq * c + u[1].adjoint() * &astar_dq * cp, j0.clone())
        } else if m == 1 {
            (&dq_astar * &dq * cp + &dq_astar * &u[1] * c, j1.clone())
        } else if m >= 2 {
            let e = m as usize;
            (&dq_astar * &u[e - 1] * cp + &dq_astar * &u[e] * c, &dq_astar * &v[e - 1])
        } else {
            let e = (-m) as usize;
            (
                u[e].adjoint() * &astar_dq * c + u[e + 1].adjoint() * &astar_dq * cp,
                u[e + 1].adjoint() * &astar_sadj_dq,
            )
        };
        fam_i.insert(m, im);
        fam_j.insert(m, jm);
    }
    Ok(CoefficientFamilies { i: fam_i, j: fam_j })
}

/// FFT coefficients of t ↦ Δ_P(t)²·(X₀ + e^{it}X₁) for |m| ≤ m_range.
pub fn fourier_coeffs_numeric_symbol(
    ev: &CharFnEvaluator,
    x0: &ComplexMatrix,
    x1: &ComplexMatrix,
    m_range: usize,
    grid: usize,
) -> Result<BTreeMap<i64, ComplexMatrix>, ModelError> {
    if !grid.is_power_of_two() || grid < 4 * (2 * m_range + 1) {
        return Err(ModelError::InvalidGrid(grid));
    }
    let k = ev.defect_dim();
    let modes: Vec<i64> = (-(m_range as i64)..=m_range as i64).collect();
    if k == 0 {
        return Ok(modes.into_iter().map(|m| (m, ComplexMatrix::zeros(0, 0))).collect());
    }
    let coeffs = fft_coefficients(grid, 1.0, k, k, &modes, |z| {
        ev.delta_squared(z.arg()).map(|d2| d2 * (x0 + x1 * z))
    })?;
    Ok(modes.into_iter().zip(coeffs).collect())
}

/// FFT coefficients of t ↦ Δ_P(t)²·(c + c′e^{it}) for |m| ≤ m_range.
pub fn fourier_coeffs_numeric(
    ev: &CharFnEvaluator,
    weights: (Complex64, Complex64),
    m_range: usize,
    grid: usize,
) -> Result<BTreeMap<i64, ComplexMatrix>, ModelError> {
    let k = ev.defect_dim();
    let eye = ComplexMatrix::identity(k, k);
    fourier_coeffs_numeric_symbol(ev, &(&eye * weights.0), &(&eye * weights.1), m_range, grid)
}

/// Appendix check results for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixResiduals {
    /// max_{j,m} ‖I_m − J_m‖.
    pub closed: f64,
    /// max_{j,m} of ‖I_m − FFT_m‖ and ‖J_m − FFT_m‖ for the respective
    /// left-hand sides.
    pub numeric: f64,
    /// max_{j,m} ‖I_m‖ (zero exactly when 𝒜_* vanishes).
    pub magnitude: f64,
}

/// Compares both closed-form families with each other and with FFT
/// coefficients of their defining functions, for all j and |m| ≤ m_range.
pub fn appendix_residuals(inst: &DilationInstance, m_range: usize, grid: usize) -> Result<AppendixResiduals, ModelError> {
    let n = inst.tuple.n;
    let a = inst.tuple.a.as_ref().ok_or_else(|| ModelError::MissingInput("fundamental operators A".into()))?;
    let ev = &inst.model.evaluator;
    let mut out = AppendixResiduals { closed: 0.0, numeric: 0.0, magnitude: 0.0 };
    for j in 1..n {
        let fam = fourier_coeffs_closed(inst, j, m_range)?;
        let c = c64(binomial(n - 1, j as i64), 0.0);
        let cp = c64(binomial(n - 1, j as i64 - 1), 0.0);
        let num_i = fourier_coeffs_numeric(ev, (c, cp), m_range, grid)?;
        let num_j = fourier_coeffs_numeric_symbol(ev, &a[j - 1], &a[n - j - 1].adjoint(), m_range, grid)?;
        for (m, im) in &fam.i {
            let jm = &fam.j[m];
            out.closed = out.closed.max(op_norm(&(im - jm)));
            out.numeric = out.numeric.max(op_norm(&(im - &num_i[m]))).max(op_norm(&(jm - &num_j[m])));
            out.magnitude = out.magnitude.max(op_norm(im));
        }
    }
    Ok(out)
}

/// ‖W_jC − C·M_{X₀+zX₁}‖ over all blocks, window rows and columns.
pub fn commuting_square_residual(model: &DilationModel, data: &WBlockData) -> f64 {
    let layout = model.layout();
    let w = model.truncation.window();
    let rows = layout.window_rows(w);
    let win = layout.input_window(w);
    let c = &model.spaces.column;
    if win.is_empty() {
        return 0.0;
    }
    let all_in: Vec<usize> = (0..layout.input_len()).collect();
    let cw = submatrix(c, &(0..layout.ambient()).collect::<Vec<_>>(), &win);
    let mut basis = ComplexMatrix::zeros(layout.input_len(), win.len());
    for (j, &i) in win.iter().enumerate() {
        basis[(i, j)] = c64(1.0, 0.0);
    }
    let _ = all_in;
    data.blocks
        .iter()
        .map(|blk| {
            let lhs = layout.apply_w(blk, &cw);
            let rhs = c * apply_hardy_symbol(&blk.right.0, &blk.right.1, layout.n, &basis);
            op_norm(&submatrix(&(lhs - rhs), &rows, &(0..win.len()).collect::<Vec<_>>()))
        })
        .fold(0.0, f64::max)
}

/// ‖(c₀ + c₁e^{it})Δ − Δ(X₀ + e^{it}X₁)‖ on the Laurent window.
pub fn relation_one_residual(model: &DilationModel, data: &WBlockData) -> f64 {
    let layout = model.layout();
    let (k, n) = (layout.k, layout.n);
    if k == 0 {
        return 0.0;
    }
    let w = model.truncation.window() as i64;
    let idx: Vec<usize> = (-w..=w).flat_map(|m| (0..k).map(move |a| (m + n as i64) as usize * k + a)).collect();
    let delta = model.spaces.delta_laurent();
    let size = delta.nrows();
    data.blocks
        .iter()
        .map(|blk| {
            // Laurent matrices of the scalar and matrix symbols.
            let mut left = ComplexMatrix::zeros(size, size);
            let mut right = ComplexMatrix::zeros(size, size);
            for m in 0..=2 * n {
                for a in 0..k {
                    left[(m * k + a, m * k + a)] = blk.laurent.0;
                    if m > 0 {
                        left[(m * k + a, (m - 1) * k + a)] = blk.laurent.1;
                    }
                }
                right.view_mut((m * k, m * k), (k, k)).copy_from(&blk.right.0);
                if m > 0 {
                    right.view_mut((m * k, (m - 1) * k), (k, k)).copy_from(&blk.right.1);
                }
            }
            let diff = &left * &delta - &delta * &right;
            op_norm(&submatrix(&diff, &idx, &idx))
        })
        .fold(0.0, f64::max)
}

/// Outcome of multiplier extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionReport {
    /// Largest Toeplitz structural residual over the members.
    pub toeplitz_residual: f64,
    /// Largest coefficient outside frequencies {0, 1}.
    pub degree_residual: f64,
    /// Residual of the isometry relations between the extracted symbols.
    pub relation_residual: f64,
    /// Relative excess of a refuting polynomial for the contraction
    /// condition on symbol values (0 when unrefuted).
    pub contraction_excess: f64,
    /// Extracted (Y₀, Y₁) per member.
    pub symbols: Vec<(ComplexMatrix, ComplexMatrix)>,
}

impl ExtractionReport {
    pub fn worst(&self) -> f64 {
        self.toeplitz_residual.max(self.degree_residual).max(self.relation_residual).max(self.contraction_excess)
    }
}

/// Extracts degree-one analytic symbols from Hardy-layout matrices and
/// checks that, together with M_z, they form a Γₙ-isometry (family Γ) or an
/// 𝔼-isometry (family 𝔼): T_i = T_{n−i}*M_z as a symbol identity plus the
/// contraction condition on the scaled symbol values over the circle.
pub fn extract_multiplier_tuple(
    members: &[ComplexMatrix],
    block_dim: usize,
    trunc: &TruncationOrder,
    family: Family,
    samples: usize,
    tol: &Tolerances,
) -> Result<ExtractionReport, ModelError> {
    let mut report = ExtractionReport {
        toeplitz_residual: 0.0,
        degree_residual: 0.0,
        relation_residual: 0.0,
        contraction_excess: 0.0,
        symbols: Vec::new(),
    };
    if block_dim == 0 {
        report.symbols = members.iter().map(|_| (ComplexMatrix::zeros(0, 0), ComplexMatrix::zeros(0, 0))).collect();
        return Ok(report);
    }
    for m in members {
        let ex = match toeplitz_extract(m, block_dim, trunc, tol) {
            Ok(ex) => ex,
            Err(StructuredError::NotToeplitz { residual }) => {
                report.toeplitz_residual = report.toeplitz_residual.max(residual);
                return Ok(report);
            }
            Err(e) => return Err(e.into()),
        };
        report.toeplitz_residual = report.toeplitz_residual.max(ex.residual);
        let sym = &ex.symbol;
        let zero = ComplexMatrix::zeros(block_dim, block_dim);
        for idx in 0..sym.coeffs.len() {
            let f = idx as i64 - sym.degree_neg as i64;
            if f != 0 && f != 1 {
                report.degree_residual = report.degree_residual.max(op_norm(&sym.coeffs[idx]));
            }
        }
        report.symbols.push((sym.coeff(0).cloned().unwrap_or(zero.clone()), sym.coeff(1).cloned().unwrap_or(zero)));
    }
    let count = members.len();
    // T_i = T_{count+1−i}*·M_z: Y₀ᵢ = Y₁_{other}*, Y₁ᵢ = Y₀_{other}*.
    for i in 0..count {
        let o = count - 1 - i;
        let (y0, y1) = &report.symbols[i];
        let (z0, z1) = &report.symbols[o];
        report.relation_residual =
            report.relation_residual.max(op_norm(&(y0 - z1.adjoint()))).max(op_norm(&(y1 - z0.adjoint())));
    }
    let angles = 16;
    for g in 0..angles {
        let z = Complex64::from_polar(1.0, 2.0 * PI * g as f64 / angles as f64);
        let values: Vec<ComplexMatrix> = report.symbols.iter().map(|(y0, y1)| y0 + y1 * z).collect();
        match family {
            Family::Gamma => {
                let n = count + 1;
                let scaled = scaled_tuple(&values, n);
                if let Err(w) = gamma_contraction_check(&scaled, samples, g as u64, tol) {
                    report.contraction_excess = report.contraction_excess.max(w.operator_norm / w.sup - 1.0);
                }
            }
            Family::Tetrablock => {
                // 𝔼-isometry with V₃ = M_z: V₂ must be a contraction.
                let excess = values.iter().map(op_norm).fold(0.0, f64::max) - 1.0;
                report.contraction_excess = report.contraction_excess.max(excess.max(0.0));
            }
        }
    }
    Ok(report)
}

/// Compresses every W_j through the column and extracts the symbols.
pub fn extract_through_column(
    model: &DilationModel,
    data: &WBlockData,
    samples: usize,
    tol: &Tolerances,
) -> Result<ExtractionReport, ModelError> {
    let layout = model.layout();
    let c = &model.spaces.column;
    let members: Vec<ComplexMatrix> = data.blocks.iter().map(|blk| c.adjoint() * layout.apply_w(blk, c)).collect();
    extract_multiplier_tuple(&members, layout.k, &model.truncation, data.family, samples, tol)
}

/// Douglas/φ₂ plumbing diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DouglasReport {
    pub phi1_isometry: f64,
    pub phi1_intertwining: f64,
    pub phi2_intertwining: f64,
    pub phi2_isometry: f64,
}

impl DouglasReport {
    pub fn worst(&self) -> f64 {
        self.phi1_isometry.max(self.phi1_intertwining).max(self.phi2_intertwining).max(self.phi2_isometry)
    }
}

/// φ₁ and φ₂ isometry defects and intertwining residuals φP* = V*φ.
pub fn douglas_report(model: &DilationModel) -> DouglasReport {
    let layout = model.layout();
    let rows = layout.window_rows(model.truncation.window());
    let mask = &model.mask;
    let phi2 = &model.phi2;
    let diff = phi2 * model.p.adjoint() - layout.apply_v_adjoint(phi2);
    let h = model.p.nrows();
    // 𝔘 is unitary, so the tail-corrected Gram defect carries over.
    let gram2 = phi2.adjoint() * phi2 - model.douglas.phi.adjoint() * &model.douglas.phi;
    let _ = h;
    DouglasReport {
        phi1_isometry: model.douglas.isometry_defect,
        phi1_intertwining: model.douglas.intertwining_residual,
        phi2_intertwining: op_norm(&submatrix(&diff, &rows, mask)),
        phi2_isometry: model.douglas.isometry_defect.max(op_norm(&submatrix(&gram2, mask, mask))),
    }
}

/// Structure of the least-squares intertwiner between the two dilations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDiagReport {
    /// Norm of the blocks between H²(𝒟_{P*}) and L²(𝒟_P) on the window.
    pub off_diagonal: f64,
    /// Deviation of the H² block from I ⊗ U₁ (diagonal blocks pairwise
    /// equal, off-diagonal mode blocks zero) on the window.
    pub tensor_defect: f64,
    /// Residual of the Sylvester intertwining for the independent φ₂.
    pub sylvester_residual: f64,
    /// ‖X − 𝔘‖ on the window, against the intertwiner used for φ₂.
    pub agreement: f64,
}

/// Conjugate-gradient least squares for a linear map on matrices: the
/// minimum-norm minimizer of ‖A(x) − b‖ starting from zero. Stops once the
/// normal-equation residual ‖A*(b − Ax)‖ drops below `abs_tol`.
fn cgls(
    apply: impl Fn(&ComplexMatrix) -> ComplexMatrix,
    apply_adj: impl Fn(&ComplexMatrix) -> ComplexMatrix,
    b: &ComplexMatrix,
    shape: (usize, usize),
    max_iter: usize,
    abs_tol: f64,
) -> ComplexMatrix {
    let mut x = ComplexMatrix::zeros(shape.0, shape.1);
    let mut r = b.clone();
    let mut s = apply_adj(&r);
    let mut p = s.clone();
    let mut gamma = s.norm_squared();
    let stop = abs_tol * abs_tol;
    for _ in 0..max_iter {
        if gamma <= stop {
            break;
        }
        let q = apply(&p);
        let qq = q.norm_squared();
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        x += &p * c64(alpha, 0.0);
        r -= &q * c64(alpha, 0.0);
        s = apply_adj(&r);
        let next = s.norm_squared();
        p = &s + &p * c64(next / gamma, 0.0);
        gamma = next;
    }
    x
}

/// Recomputes φ₂ independently inside ℋ_P (the solution of
/// Y·P* = (H*V*H)·Y nearest to the compressed Douglas map), fits the
/// intertwiner X = F₁F₂⁺ between the families Vᵏφ₁ and Vᵏφ₂, and measures
/// its block structure.
pub fn block_diagonal_report(model: &DilationModel) -> BlockDiagReport {
    let layout = model.layout();
    let hb = &model.spaces.h_basis;
    let mask = &model.mask;
    let h = model.p.nrows();
    let phi1 = &model.douglas.phi;
    let guess = hb.adjoint() * phi1;
    let t = hb.adjoint() * layout.apply_v_adjoint(hb);
    let ps_mask = submatrix(&model.p.adjoint(), &(0..h).collect::<Vec<_>>(), mask);
    let p_mask_rows = submatrix(&model.p, mask, &(0..h).collect::<Vec<_>>());
    let dim_h = hb.ncols();
    let apply = |y: &ComplexMatrix| -> ComplexMatrix {
        let ym = submatrix(y, &(0..dim_h).collect::<Vec<_>>(), mask);
        y * &ps_mask - &t * ym
    };
    let apply_adj = |r: &ComplexMatrix| -> ComplexMatrix {
        let mut out = r * &p_mask_rows;
        let tr = t.adjoint() * r;
        for (j, &c) in mask.iter().enumerate() {
            let col = out.column(c) - tr.column(j);
            out.set_column(c, &col);
        }
        out
    };
    let b = apply(&guess);
    let delta = cgls(&apply, &apply_adj, &b, (dim_h, h), 500, 1e-15 * (1.0 + guess.norm()));
    let y = &guess - delta;
    let sylvester_residual = op_norm(&apply(&y));
    let phi2_indep = hb * &y;

    let check = model.truncation.window() / 2;
    let powers = check + 2;
    let all: Vec<usize> = (0..layout.ambient()).collect();
    let mut f1 = submatrix(phi1, &all, mask);
    let mut f2 = submatrix(&phi2_indep, &all, mask);
    let mut fam1 = vec![f1.clone()];
    let mut fam2 = vec![f2.clone()];
    for _ in 0..powers {
        f1 = layout.apply_v(&f1);
        f2 = layout.apply_v(&f2);
        fam1.push(f1.clone());
        fam2.push(f2.clone());
    }
    let hcat = |fs: &[ComplexMatrix]| -> ComplexMatrix {
        let cols: usize = fs.iter().map(|f| f.ncols()).sum();
        let mut out = ComplexMatrix::zeros(layout.ambient(), cols);
        let mut c = 0;
        for f in fs {
            out.view_mut((0, c), (f.nrows(), f.ncols())).copy_from(f);
            c += f.ncols();
        }
        out
    };
    let big1 = hcat(&fam1);
    let big2 = hcat(&fam2);
    // Restrict to rows the families touch.
    let active: Vec<usize> = (0..layout.ambient())
        .filter(|&r| big1.row(r).iter().chain(big2.row(r).iter()).any(|z| z.norm() > 0.0))
        .collect();
    let cols: Vec<usize> = (0..big2.ncols()).collect();
    let a1 = submatrix(&big1, &active, &cols);
    let a2 = submatrix(&big2, &active, &cols);
    let x_active = if active.is_empty() {
        ComplexMatrix::zeros(0, 0)
    } else {
        // F₂⁺ = F₂*(F₂F₂*)⁺ through the (small) active-row Gram matrix; the
        // families are near-isometric on their span, so the spectrum splits
        // cleanly into O(1) and rounding-level eigenvalues.
        let gram = hermitian_part(&(&a2 * a2.adjoint()));
        let eig = SymmetricEigen::new(gram);
        let emax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let inv = ComplexMatrix::from_fn(active.len(), active.len(), |r, c| {
            (0..active.len())
                .filter(|&i| eig.eigenvalues[i] > 1e-10 * emax.max(1e-300))
                .map(|i| eig.eigenvectors[(r, i)] * eig.eigenvectors[(c, i)].conj() / eig.eigenvalues[i])
                .sum()
        });
        &a1 * (a2.adjoint() * inv)
    };
    let mut x = ComplexMatrix::zeros(layout.ambient(), layout.ambient());
    for (i, &r) in active.iter().enumerate() {
        for (j, &c) in active.iter().enumerate() {
            x[(r, c)] = x_active[(i, j)];
        }
    }
    let (ks, k) = (layout.ks, layout.k);
    let hardy_rows: Vec<usize> = (0..(check.min(layout.n) + 1) * ks).collect();
    let w = check as i64;
    let laurent_rows: Vec<usize> = (-w..=w).flat_map(|m| (0..k).map(move |a| layout.laurent(m, a))).collect();
    let off_diagonal = op_norm(&submatrix(&x, &hardy_rows, &laurent_rows))
        .max(op_norm(&submatrix(&x, &laurent_rows, &hardy_rows)));
    let mut tensor_defect = 0.0_f64;
    if ks > 0 {
        let blk = |r: usize, c: usize| x.view((r * ks, c * ks), (ks, ks)).into_owned();
        let base = blk(0, 0);
        for r in 0..=check.min(layout.n) {
            for c in 0..=check.min(layout.n) {
                let d = if r == c { blk(r, c) - &base } else { blk(r, c) };
                tensor_defect = tensor_defect.max(op_norm(&d));
            }
        }
    }
    let rows = layout.window_rows(check);
    let u = layout.apply_block_unitary(
        &model.intertwiner.u1,
        &model.intertwiner.u2,
        &ComplexMatrix::identity(layout.ambient(), layout.ambient()),
    );
    // Compare only where the families span: X·F₂ against 𝔘·F₂.
    let span = submatrix(&(&x * &big2 - &u * &big2), &rows, &cols);
    BlockDiagReport { off_diagonal, tensor_defect, sylvester_residual, agreement: op_norm(&span) }
}

/// Exponent vectors of total degree ≤ `degree` over `vars` variables.
fn exponents(vars: usize, degree: usize) -> Vec<Vec<usize>> {
    if vars == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..=degree {
        for mut rest in exponents(vars - 1, degree - first) {
            let mut e = vec![first];
            e.append(&mut rest);
            out.push(e);
        }
    }
    out
}

/// max over exponents of total degree ≤ `degree` of
/// ‖φ₂*W₁^{m₁}⋯W_{n−1}^{m_{n−1}}V^mφ₂ − S₁^{m₁}⋯S_{n−1}^{m_{n−1}}P^m‖ on the
/// window.
pub fn power_dilation_residual(inst: &DilationInstance, degree: usize) -> f64 {
    let model = &inst.model;
    let layout = model.layout();
    let mask = &model.mask;
    let all: Vec<usize> = (0..layout.ambient()).collect();
    let phi = submatrix(&model.phi2, &all, mask);
    let members = &inst.tuple.members;
    let count = members.len() - 1;
    let p = inst.tuple.p();
    let h = p.nrows();
    let mut worst = 0.0_f64;
    for e in exponents(count + 1, degree) {
        let mut y = phi.clone();
        for _ in 0..e[count] {
            y = layout.apply_v(&y);
        }
        let mut rhs = mat_pow(p, e[count]);
        for j in (0..count).rev() {
            for _ in 0..e[j] {
                y = layout.apply_w(&inst.data.blocks[j], &y);
            }
            rhs = mat_pow(&members[j], e[j]) * rhs;
        }
        let _ = h;
        let lhs = phi.adjoint() * y;
        worst = worst.max(op_norm(&(lhs - submatrix(&rhs, mask, mask))));
    }
    worst
}

/// Model identity catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelIdentity {
    Appx,
    Rel1,
    Nec,
    Extract,
    Doug,
    BlkDiag,
    PowDil,
}

impl ModelIdentity {
    pub const ALL: [ModelIdentity; 7] = [
        ModelIdentity::Appx,
        ModelIdentity::Rel1,
        ModelIdentity::Nec,
        ModelIdentity::Extract,
        ModelIdentity::Doug,
        ModelIdentity::BlkDiag,
        ModelIdentity::PowDil,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ModelIdentity::Appx => "MODEL-APPX",
            ModelIdentity::Rel1 => "MODEL-REL1",
            ModelIdentity::Nec => "MODEL-NEC",
            ModelIdentity::Extract => "MODEL-EXTRACT",
            ModelIdentity::Doug => "MODEL-DOUG",
            ModelIdentity::BlkDiag => "MODEL-BLKDIAG",
            ModelIdentity::PowDil => "MODEL-POWDIL",
        }
    }

    pub fn from_id(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|i| i.id() == s)
    }
}

/// Options for model verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelCheckOptions {
    /// Largest |m| in the appendix comparison.
    pub m_range: usize,
    /// FFT grid of the numeric coefficients.
    pub grid: usize,
    /// Polynomial samples for contraction refutation.
    pub samples: usize,
    /// Tolerance for FFT-versus-closed-form comparisons.
    pub fft_tol: f64,
    /// Tolerance for intertwiner structure.
    pub structure_tol: f64,
    /// Largest total degree in the power-dilation check.
    pub power_degree: usize,
}

impl Default for ModelCheckOptions {
    fn default() -> Self {
        ModelCheckOptions { m_range: 8, grid: 4096, samples: 20, fft_tol: 1e-6, structure_tol: 1e-6, power_degree: 3 }
    }
}

/// Residual report for one model identity.
pub fn verify_model_identity(
    id: ModelIdentity,
    inst: &DilationInstance,
    tol: &Tolerances,
    opts: &ModelCheckOptions,
) -> Result<VerificationReport, ModelError> {
    let model = &inst.model;
    let (residual, tolerance) = match id {
        ModelIdentity::Appx => {
            let r = appendix_residuals(inst, opts.m_range, opts.grid)?;
            // Closed forms must agree to residual_tol and match the FFT to
            // fft_tol; report the worse of the two on a common scale.
            let scaled = r.closed.max(r.numeric * tol.residual_tol / opts.fft_tol);
            (scaled, tol.residual_tol)
        }
        ModelIdentity::Rel1 => (relation_one_residual(model, &inst.data), tol.residual_tol),
        ModelIdentity::Nec => (commuting_square_residual(model, &inst.data), tol.residual_tol),
        ModelIdentity::Extract => {
            let r = extract_through_column(model, &inst.data, opts.samples, tol)?;
            (r.worst(), tol.residual_tol)
        }
        ModelIdentity::Doug => (douglas_report(model).worst(), tol.residual_tol),
        ModelIdentity::BlkDiag => {
            let r = block_diagonal_report(model);
            (r.off_diagonal.max(r.tensor_defect), opts.structure_tol)
        }
        ModelIdentity::PowDil => (power_dilation_residual(inst, opts.power_degree), tol.residual_tol),
    };
    Ok(VerificationReport::new(id.id(), residual, tolerance, model.window_info(), inst.digest()))
}

/// Σ₂ condition: the scaled tuple of B_j* + zB_{n−j} is not refuted as a
/// Γ_{n−1}-contraction on the disc grid; returns the largest excess.
pub fn sigma_two_excess(n: usize, b: &[ComplexMatrix], samples: usize, tol: &Tolerances) -> f64 {
    if b.is_empty() || b[0].nrows() == 0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for (g, z) in disc_grid().into_iter().enumerate().step_by(4) {
        let sigma: Vec<ComplexMatrix> = (1..n).map(|i| b[i - 1].adjoint() + &b[n - i - 1] * z).collect();
        let scaled = scaled_tuple(&sigma, n);
        if let Err(w) = gamma_contraction_check(&scaled, samples, g as u64, tol) {
            worst = worst.max(w.operator_norm / w.sup - 1.0);
        }
    }
    worst
}

/// Members φ₂*W_jφ₂ after the commuting-square hypothesis is confirmed.
pub fn construct_members(model: &DilationModel, data: &WBlockData, tol: &Tolerances) -> Result<Vec<ComplexMatrix>, ModelError> {
    let nec = commuting_square_residual(model, data);
    if nec > tol.residual_tol {
        let identity = match data.family {
            Family::Gamma => "MODEL-NEC",
            Family::Tetrablock => "TETRA-NEC",
        };
        return Err(ModelError::HypothesisViolated { identity: identity.into(), residual: nec });
    }
    let layout = model.layout();
    Ok(data.blocks.iter().map(|blk| model.phi2.adjoint() * layout.apply_w(blk, &model.phi2)).collect())
}

/// Max ‖[T_i, T_j]‖ over pairs, restricted to window rows and columns.
pub fn masked_commutation(members: &[ComplexMatrix], mask: &[usize]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let c = &members[i] * &members[j] - &members[j] * &members[i];
            worst = worst.max(op_norm(&submatrix(&c, mask, mask)));
        }
    }
    worst
}

/// Round-trip diagnostics of the sufficiency construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrip {
    /// Max ‖[S_i, S_j]‖, ‖[S_i, P]‖ on the window.
    pub commutation: f64,
    /// max_i ‖solve(S, P)_i − A_i‖.
    pub a_error: f64,
    /// max_i ‖solve(S*, P*)_i − B_i‖.
    pub b_error: f64,
}

/// Sufficiency construction for Γₙ: from P (structured) and prescribed
/// fundamental operators A (on 𝒟_P) and B (on 𝒟_{P*}), both in the model's
/// canonical defect bases, builds S_j = φ₂*W_jφ₂ and checks the round trip.
pub fn construct_from_fo_data(
    op: &StructuredOperator,
    a: &[ComplexMatrix],
    b: &[ComplexMatrix],
    trunc: &TruncationOrder,
    cfg: &ModelConfig,
    tol: &Tolerances,
    samples: usize,
) -> Result<(DilationInstance, RoundTrip), ModelError> {
    let model = DilationModel::build(op, trunc, cfg, tol)?;
    construct_on_model(model, a, b, tol, samples)
}

/// [`construct_from_fo_data`] on a prebuilt model.
pub fn construct_on_model(
    model: DilationModel,
    a: &[ComplexMatrix],
    b: &[ComplexMatrix],
    tol: &Tolerances,
    samples: usize,
) -> Result<(DilationInstance, RoundTrip), ModelError> {
    let n = a.len() + 1;
    let layout = model.layout();
    if n < 2 || b.len() != n - 1 {
        return Err(ModelError::MissingInput("A and B need n−1 members each".into()));
    }
    if a.iter().any(|m| m.nrows() != layout.k || m.ncols() != layout.k)
        || b.iter().any(|m| m.nrows() != layout.ks || m.ncols() != layout.ks)
    {
        return Err(ModelError::MissingInput(format!(
            "A must be {0}x{0} and B {1}x{1} (defect dimensions)",
            layout.k, layout.ks
        )));
    }
    let sigma = sigma_two_excess(n, b, samples, tol);
    if sigma > 0.0 {
        return Err(ModelError::HypothesisViolated { identity: "SIGMA-2".into(), residual: sigma });
    }
    let data = WBlockData::gamma(n, a, b);
    let mut members = construct_members(&model, &data, tol)?;
    members.push(model.p.clone());
    let mask = model.mask.clone();
    let commutation = masked_commutation(&members, &mask);
    let mut tuple = OperatorTuple::new(members)?.with_window(mask);
    let pair = model.defects().clone();
    let solved_a = solve_fo_tuple_with(&tuple, &pair.defect, tol)?.ops;
    let solved_b = solve_fo_tuple_with(&tuple.adjoint(), &pair.defect_star, tol)?.ops;
    let err = |x: &[ComplexMatrix], y: &[ComplexMatrix]| {
        x.iter().zip(y).map(|(u, v)| op_norm(&(u - v))).fold(0.0, f64::max)
    };
    let rt = RoundTrip { commutation, a_error: err(&solved_a, a), b_error: err(&solved_b, b) };
    tuple.a = Some(a.to_vec());
    tuple.b = Some(b.to_vec());
    Ok((DilationInstance::new(tuple, data, model, tol), rt))
}

/// Seeded model-instance generators.
pub const MODEL_GENERATORS: [&str; 3] = ["backshift-astar", "compression-model", "direct-sum-model"];

/// Builds a model instance: `backshift-astar` (multiplicity `dim`),
/// `compression-model` (finite pure P from a co-invariant compression) or
/// `direct-sum-model` (a multiplicity-one backward shift plus a
/// compression).
pub fn make_model_instance(
    kind: &str,
    params: &crate::gamma_fo::GenParams,
    seed: u64,
    cfg: &ModelConfig,
    tol: &Tolerances,
) -> Result<DilationInstance, ModelError> {
    let n_trunc = if params.truncation == 0 { 64 } else { params.truncation };
    let trunc = TruncationOrder::new(n_trunc, n_trunc / 2)?;
    let finite = || {
        crate::gamma_fo::make_gamma_instance(
            "coinvariant-compression",
            &crate::gamma_fo::GenParams {
                n: params.n,
                dim: params.dim.max(1),
                points: params.points.max(1),
                truncation: 0,
                point: None,
            },
            seed,
        )
    };
    match kind {
        "backshift-astar" => backshift_instance(params.n, params.dim.max(1), &trunc, cfg, tol),
        "compression-model" => finite_instance(&finite()?, &trunc, cfg, tol),
        "direct-sum-model" => direct_sum_instance(1, &finite()?, &trunc, cfg, tol),
        other => Err(ModelError::Fo(FoError::InvalidParams(format!("unknown model generator {other}")))),
    }
}

/// Excess of a refuting polynomial for an arbitrary tuple against Γ or 𝔼
/// (0 when unrefuted).
pub fn refutation_excess(domain: Domain, members: &[ComplexMatrix], samples: usize, seed: u64, tol: &Tolerances) -> f64 {
    refute_tuple(domain, members, samples, seed, tol).map(|w| w.operator_norm / w.sup - 1.0).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma_fo::{make_gamma_instance, GenParams};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn taylor_fft_matches_closed_form() {
        let t = make_gamma_instance("coinvariant-compression", &GenParams { n: 2, dim: 2, points: 3, ..Default::default() }, 3)
            .unwrap();
        let ev = CharFnEvaluator::new(t.p().clone(), &tol()).unwrap();
        let fft = theta_taylor_fft(&ev, 16, &ModelConfig::default()).unwrap();
        let closed = theta_taylor_closed(&ev, 16);
        for (a, b) in fft.iter().zip(&closed) {
            assert!(op_norm(&(a - b)) < 1e-12);
        }
    }

    #[test]
    fn scalar_model_space_is_one_dimensional() {
        let op = StructuredOperator::finite(ComplexMatrix::from_element(1, 1, c64(0.5, 0.0)));
        let trunc = TruncationOrder::new(32, 16).unwrap();
        let m = DilationModel::build(&op, &trunc, &ModelConfig::default(), &tol()).unwrap();
        assert_eq!(m.spaces.h_basis.ncols(), 1);
        assert!(m.spaces.delta_coeffs.iter().all(|c| op_norm(c) < 1e-10));
    }

    #[test]
    fn zero_contraction_model() {
        let op = StructuredOperator::finite(ComplexMatrix::zeros(2, 2));
        let trunc = TruncationOrder::new(32, 16).unwrap();
        let m = DilationModel::build(&op, &trunc, &ModelConfig::default(), &tol()).unwrap();
        // φ₁h = h in Hardy mode 0.
        assert!(op_norm(&(m.douglas.phi.rows(0, 2) - ComplexMatrix::identity(2, 2))) < 1e-14);
        assert_eq!(m.spaces.h_basis.ncols(), 2);
    }

    #[test]
    fn backshift_numeric_coefficients() {
        let trunc = TruncationOrder::new(16, 8).unwrap();
        let inst = backshift_instance(2, 1, &trunc, &ModelConfig::default(), &tol()).unwrap();
        let ev = &inst.model.evaluator;
        let one = c64(1.0, 0.0);
        let zero = c64(0.0, 0.0);
        let a = fourier_coeffs_numeric(ev, (one, zero), 4, 256).unwrap();
        let b = fourier_coeffs_numeric(ev, (zero, one), 4, 256).unwrap();
        for m in -4..=4 {
            let expect_a = if m == 0 { 1.0 } else { 0.0 };
            let expect_b = if m == 1 { 1.0 } else { 0.0 };
            assert!((a[&m][(0, 0)] - c64(expect_a, 0.0)).norm() < 1e-12);
            assert!((b[&m][(0, 0)] - c64(expect_b, 0.0)).norm() < 1e-12);
        }
        let fam = fourier_coeffs_closed(&inst, 1, 4).unwrap();
        assert!((fam.i[&0][(0, 0)] - one).norm() < 1e-12);
        assert!(fam.i[&2].norm() < 1e-12 && fam.i[&-2].norm() < 1e-12);
    }

    /// Dense transcription of the coefficient formulas, compressed at the
    /// end.
    fn dense_families(inst: &DilationInstance, j: usize, mr: i64) -> (BTreeMap<i64, ComplexMatrix>, BTreeMap<i64, ComplexMatrix>) {
        let t = &inst.tuple;
        let n = t.n;
        let pair = inst.model.defects();
        let (q, qs) = (&pair.defect.space.basis, &pair.defect_star.space.basis);
        let (d, ds) = (&pair.defect.d, &pair.defect_star.d);
        let p = t.p();
        let ps = p.adjoint();
        let astar = &inst.model.astar;
        let (a, b) = (t.a.as_ref().unwrap(), t.b.as_ref().unwrap());
        let c = c64(binomial(n - 1, j as i64), 0.0);
        let cp = c64(binomial(n - 1, j as i64 - 1), 0.0);
        let s_j = t.s(j);
        let s_adj = t.s(n - j).adjoint();
        let a_j = q * &a[j - 1] * q.adjoint();
        let a_adj = (q * &a[n - j - 1] * q.adjoint()).adjoint();
        let b_nj = qs * &b[n - j - 1] * qs.adjoint();
        let b_j_adj = (qs * &b[j - 1] * qs.adjoint()).adjoint();
        let pw = |m: &ComplexMatrix, e: usize| mat_pow(m, e);
        let (mut fi, mut fj) = (BTreeMap::new(), BTreeMap::new());
        for m in -mr..=mr {
            let (im, jm) = if m == 0 {
                (d * astar * d * c + d * p * astar * d * cp,
                 d * d * &a_j - d * s_j * d + d * ds * &b_nj * p + d * p * astar * &s_adj * d)
            } else if m == 1 {
                (d * astar * d * cp + d * astar * &ps * d * c,
                 &a_adj * d * d + &ps * &b_j_adj * ds * d - d * &s_adj * d + d * astar * &s_adj * d)
            } else if m >= 2 {
                let e = m as usize;
                (d * astar * pw(&ps, e - 1) * d * cp + d * astar * pw(&ps, e) * d * c,
                 d * astar * pw(&ps, e - 1) * &s_adj * d)
            } else {
                let e = (-m) as usize;
                (d * pw(p, e) * astar * d * c + d * pw(p, e + 1) * astar * d * cp,
                 d * pw(p, e + 1) * astar * &s_adj * d)
            };
            fi.insert(m, q.adjoint() * im * q);
            fj.insert(m, q.adjoint() * jm * q);
        }
        (fi, fj)
    }

    #[test]
    fn closed_coefficients_match_dense_transcription() {
        let fin = make_gamma_instance("coinvariant-compression", &GenParams { n: 3, dim: 1, points: 2, ..Default::default() }, 5)
            .unwrap();
        let trunc = TruncationOrder::new(48, 24).unwrap();
        let inst = direct_sum_instance(1, &fin, &trunc, &ModelConfig::default(), &tol()).unwrap();
        for j in 1..3 {
            let fam = fourier_coeffs_closed(&inst, j, 5).unwrap();
            let (fi, fj) = dense_families(&inst, j, 5);
            for m in -5..=5 {
                assert!(op_norm(&(&fam.i[&m] - &fi[&m])) < 1e-12, "I_{m}");
                assert!(op_norm(&(&fam.j[&m] - &fj[&m])) < 1e-12, "J_{m}");
                assert!(op_norm(&(&fam.i[&m] - &fam.j[&m])) < 1e-8, "I_{m} vs J_{m}");
            }
        }
    }

    #[test]
    fn exponent_enumeration() {
        assert_eq!(exponents(2, 3).len(), 10);
        assert_eq!(exponents(3, 3).len(), 20);
    }
}
