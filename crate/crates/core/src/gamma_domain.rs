//! Point geometry of the symmetrized polydisc Γₙ and the tetrablock 𝔼:
//! symmetrization, membership tests, μ for 2×2 diagonal uncertainty,
//! sup-norms over distinguished boundaries, and a von Neumann–inequality
//! refuter for operator tuples.

use crate::io::complex_pair;
use crate::linalg::{op_norm, ComplexMatrix, Tolerances};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Errors raised by the point-geometry layer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("polynomial root finding failed")]
    RootFindingFailure,
    #[error("mu grid too coarse: mu = {mu:.6} disagrees with tetrablock membership")]
    GridTooCoarse { mu: f64 },
    #[error("expected {expected} coordinates, found {found}")]
    WrongArity { expected: usize, found: usize },
}

/// A point (s₁, …, s_{n−1}, p) of ℂⁿ in symmetrized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPoint {
    pub n: usize,
    pub coords: Vec<Complex64>,
}

/// Classification of a point against a domain and its closure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MembershipStatus {
    Interior,
    InSet,
    OnDistinguishedBoundary,
    Outside,
}

/// Membership verdict with supporting data.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipVerdict {
    pub status: MembershipStatus,
    /// Roots (for Γₙ) or recovered (β₁, β₂) (for 𝔼), when available.
    pub witness: Vec<Complex64>,
    /// Positive inside the open domain, negative outside the closure.
    pub margin: f64,
}

/// Elementary symmetric polynomials e₁, …, eₙ of the input.
pub fn symmetrize(z: &[Complex64]) -> GammaPoint {
    let n = z.len();
    // e[k] accumulates the k-th elementary symmetric polynomial.
    let mut e = vec![Complex64::new(0.0, 0.0); n + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for (i, &zi) in z.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            let prev = e[k - 1];
            e[k] += prev * zi;
        }
    }
    GammaPoint { n, coords: e[1..].to_vec() }
}

/// Roots of the monic polynomial zⁿ + c₁zⁿ⁻¹ + … + cₙ via companion-matrix
/// eigenvalues, with Newton polishing of simple roots and centroid
/// replacement for clusters (multiple roots are ill-conditioned individually
/// but their mean is not).
pub fn monic_roots(c: &[Complex64]) -> Result<Vec<Complex64>, DomainError> {
    let n = c.len();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut comp = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -c[j];
    }
    for i in 1..n {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    let mut roots = companion_eigenvalues(&comp)?;
    if roots.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) {
        return Err(DomainError::RootFindingFailure);
    }
    let eval = |z: Complex64| -> (Complex64, Complex64) {
        let mut p = Complex64::new(1.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &ck in c {
            dp = dp * z + p;
            p = p * z + ck;
        }
        (p, dp)
    };
    let scale = roots.iter().fold(1.0_f64, |a, r| a.max(r.norm()));
    let radius = 1e-4 * scale;
    // Single-linkage clusters of nearby roots.
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..i {
            if (roots[i] - roots[j]).norm() < radius {
                let (a, b) = (label[i], label[j]);
                for l in label.iter_mut() {
                    if *l == a {
                        *l = b;
                    }
                }
            }
        }
    }
    for i in 0..n {
        let members: Vec<usize> = (0..n).filter(|&j| label[j] == label[i]).collect();
        if members.len() > 1 {
            continue;
        }
        let mut z = roots[i];
        for _ in 0..3 {
            let (p, dp) = eval(z);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !(step.norm() < radius) {
                break;
            }
            z -= step;
        }
        roots[i] = z;
    }
    let mut out = roots.clone();
    for i in 0..n {
        let members: Vec<usize> = (0..n).filter(|&j| label[j] == label[i]).collect();
        if members.len() > 1 {
            let mean = members.iter().map(|&j| roots[j]).sum::<Complex64>() / members.len() as f64;
            out[i] = mean;
        }
    }
    Ok(out)
}

/// Eigenvalues of a companion matrix. A bounded-iteration Schur
/// decomposition is used; nilpotent inputs (where the unshifted QR iteration
/// stalls) are retried with a complex diagonal shift.
fn companion_eigenvalues(comp: &ComplexMatrix) -> Result<Vec<Complex64>, DomainError> {
    let n = comp.nrows();
    for shift in [Complex64::new(0.0, 0.0), Complex64::new(0.37, 0.29), Complex64::new(-0.61, 0.17)] {
        let shifted = comp + ComplexMatrix::identity(n, n) * shift;
        if let Some(eig) = nalgebra::linalg::Schur::try_new(shifted, f64::EPSILON, 10_000)
            .and_then(|s| s.eigenvalues())
        {
            return Ok(eig.iter().map(|&l| l - shift).collect());
        }
    }
    Err(DomainError::RootFindingFailure)
}

/// Membership in Γₙ through the roots of zⁿ − s₁zⁿ⁻¹ + … + (−1)ⁿp.
pub fn gamma_membership(pt: &GammaPoint, tol: &Tolerances) -> Result<MembershipVerdict, DomainError> {
    if pt.coords.len() != pt.n {
        return Err(DomainError::WrongArity { expected: pt.n, found: pt.coords.len() });
    }
    let c: Vec<Complex64> = pt
        .coords
        .iter()
        .enumerate()
        .map(|(k, &s)| if k % 2 == 0 { -s } else { s })
        .collect();
    let roots = monic_roots(&c)?;
    let moduli: Vec<f64> = roots.iter().map(|r| r.norm()).collect();
    let max = moduli.iter().cloned().fold(0.0, f64::max);
    let eps = tol.membership_tol;
    let status = if max > 1.0 + eps {
        MembershipStatus::Outside
    } else if !moduli.is_empty() && moduli.iter().all(|&m| m >= 1.0 - eps) {
        MembershipStatus::OnDistinguishedBoundary
    } else if max < 1.0 - eps {
        MembershipStatus::Interior
    } else {
        MembershipStatus::InSet
    };
    Ok(MembershipVerdict { status, witness: roots, margin: 1.0 - max })
}

/// Membership in the tetrablock 𝔼 and its closure.
///
/// Inside |x₃| < 1 the point is inverted through the parametrization
/// (β₁ + β̄₂x₃, β₂ + β̄₁x₃, x₃). On |x₃| ≈ 1 the closure collapses to the
/// distinguished boundary {x₁ = x̄₂x₃, |x₂| ≤ 1}.
pub fn tetrablock_membership(x: [Complex64; 3], tol: &Tolerances) -> MembershipVerdict {
    let [x1, x2, x3] = x;
    let eps = tol.membership_tol;
    let r3 = x3.norm();
    if r3 < 1.0 - eps {
        let denom = 1.0 - r3 * r3;
        let b1 = (x1 - x2.conj() * x3) / denom;
        let b2 = (x2 - x1.conj() * x3) / denom;
        let sum = b1.norm() + b2.norm();
        let status = if sum < 1.0 - eps {
            MembershipStatus::Interior
        } else if sum <= 1.0 + eps {
            MembershipStatus::InSet
        } else {
            MembershipStatus::Outside
        };
        return MembershipVerdict { status, witness: vec![b1, b2], margin: 1.0 - sum };
    }
    if r3 > 1.0 + eps {
        return MembershipVerdict { status: MembershipStatus::Outside, witness: vec![], margin: 1.0 - r3 };
    }
    let mismatch = (x1 - x2.conj() * x3).norm();
    let excess = x2.norm() - 1.0;
    let margin = -(mismatch.max(excess));
    let status = if mismatch <= eps.max(tol.grid_tol * (r3 - 1.0).abs().sqrt()) && excess <= eps {
        MembershipStatus::OnDistinguishedBoundary
    } else {
        MembershipStatus::Outside
    };
    MembershipVerdict { status, witness: vec![x2], margin }
}

/// Minimum of |x₂| over |x₁| ≤ r subject to det(I − A·diag(x₁, x₂)) = 0.
fn min_partner_modulus(a11: Complex64, a22: Complex64, det: Complex64, r: f64, angles: usize) -> f64 {
    if a11.norm() > 0.0 && 1.0 / a11.norm() <= r {
        return 0.0;
    }
    // x₂ = (1 − a₁₁x₁)/(a₂₂ − det·x₁) has no zero in the disc, so its
    // modulus is minimized on the boundary circle.
    let partner = |theta: f64| {
        let x1 = Complex64::from_polar(r, theta);
        let den = a22 - det * x1;
        if den.norm() == 0.0 {
            f64::INFINITY
        } else {
            ((Complex64::new(1.0, 0.0) - a11 * x1) / den).norm()
        }
    };
    let h = 2.0 * PI / angles as f64;
    let (mut best, mut best_t) = (f64::INFINITY, 0.0);
    for k in 0..angles {
        let t = k as f64 * h;
        let v = partner(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    // Golden-section refinement around the best grid angle.
    let (mut lo, mut hi) = (best_t - h, best_t + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if partner(m1) < partner(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.min(partner(0.5 * (lo + hi)))
}

/// Structured singular value of a 2×2 matrix with respect to diagonal
/// uncertainty: 1 / min{max(|x₁|,|x₂|) : det(I − A·diag(x₁,x₂)) = 0}.
///
/// The inner minimization scans a phase grid on |x₁| = r and refines; the
/// outer radius is found by bisection. The result is cross-checked against
/// tetrablock membership of (a₁₁, a₂₂, det A).
pub fn mu_diag_2x2(a: &ComplexMatrix, tol: &Tolerances) -> Result<f64, DomainError> {
    if a.nrows() != 2 || a.ncols() != 2 {
        return Err(DomainError::WrongArity { expected: 4, found: a.len() });
    }
    let (a11, a22) = (a[(0, 0)], a[(1, 1)]);
    let det = a11 * a22 - a[(0, 1)] * a[(1, 0)];
    let angles = 16 * tol.grid_points.max(16);
    let gap = |r: f64| min_partner_modulus(a11, a22, det, r, angles) - r;
    let mut hi = 1.0;
    while gap(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(0.0);
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 1.0 / hi;
    if (mu - 1.0).abs() > tol.grid_tol {
        let verdict = tetrablock_membership([a11, a22, det], tol);
        let interior = verdict.status == MembershipStatus::Interior;
        if interior != (mu < 1.0) {
            return Err(DomainError::GridTooCoarse { mu });
        }
    }
    Ok(mu)
}

/// One monomial c·x^α of a polynomial in n variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub alpha: Vec<usize>,
    #[serde(with = "complex_pair")]
    pub coeff: Complex64,
}

/// Polynomial in n variables as a list of monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub n: usize,
    pub terms: Vec<Term>,
}

impl Polynomial {
    /// The coordinate polynomial x_i (zero-based index).
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut alpha = vec![0; n];
        alpha[i] = 1;
        Polynomial { n, terms: vec![Term { alpha, coeff: Complex64::new(1.0, 0.0) }] }
    }

    pub fn constant(n: usize, c: Complex64) -> Self {
        Polynomial { n, terms: vec![Term { alpha: vec![0; n], coeff: c }] }
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.alpha.iter().sum::<usize>()).max().unwrap_or(0)
    }

    /// Value at a point.
    pub fn eval(&self, x: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|t| {
                t.alpha
                    .iter()
                    .zip(x)
                    .fold(t.coeff, |acc, (&k, &xi)| acc * xi.powu(k as u32))
            })
            .sum()
    }

    /// Value on a commuting tuple of square matrices (ordered products).
    pub fn eval_tuple(&self, members: &[ComplexMatrix]) -> ComplexMatrix {
        let dim = members.first().map_or(0, |m| m.nrows());
        let max_deg = self.degree();
        let powers: Vec<Vec<ComplexMatrix>> = members
            .iter()
            .map(|m| {
                let mut p = vec![ComplexMatrix::identity(dim, dim)];
                for k in 1..=max_deg {
                    let next = &p[k - 1] * m;
                    p.push(next);
                }
                p
            })
            .collect();
        let mut out = ComplexMatrix::zeros(dim, dim);
        for t in &self.terms {
            let mut prod = ComplexMatrix::identity(dim, dim) * t.coeff;
            for (i, &k) in t.alpha.iter().enumerate() {
                if k > 0 {
                    prod = prod * &powers[i][k];
                }
            }
            out += prod;
        }
        out
    }

    /// All monomials of total degree ≤ `degree` with standard complex
    /// Gaussian coefficients.
    pub fn random(n: usize, degree: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut terms = Vec::new();
        for alpha in multi_indices(n, degree) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            terms.push(Term { alpha, coeff: Complex64::new(re, im) / 2f64.sqrt() });
        }
        Polynomial { n, terms }
    }
}

/// Multi-indices in n variables with total degree ≤ d, graded-lexicographic.
pub fn multi_indices(n: usize, d: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(n, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, d, &mut Vec::new(), &mut out);
    out.sort_by_key(|a| (a.iter().sum::<usize>(), a.iter().map(|&k| usize::MAX - k).collect::<Vec<_>>()));
    out
}

/// Estimate of a supremum over a distinguished boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupEstimate {
    /// Best value after local refinement (a lower bound for the true sup).
    pub value: f64,
    /// Maximum over the raw grid (or random sample).
    pub grid_value: f64,
    /// Number of grid or sample evaluations.
    pub evaluations: usize,
    /// True when the grid exceeded the evaluation cap and random sampling
    /// was used instead.
    pub sampled: bool,
}

/// Cap on the number of grid evaluations for a single sup estimate.
pub const MAX_GRID_EVALUATIONS: usize = 10_000_000;

/// Maximizes a function of real parameters over a product grid, then refines
/// the best few grid points by a shrinking pattern search. Stops as soon as
/// a value reaches `target` (pass infinity for a full estimate).
fn grid_sup<F: Fn(&[f64]) -> f64>(
    f: F,
    ranges: &[(f64, f64, bool)],
    per_dim: &[usize],
    seed: u64,
    target: f64,
) -> SupEstimate {
    let dims = ranges.len();
    let total = per_dim.iter().try_fold(1usize, |acc, &g| acc.checked_mul(g)).unwrap_or(usize::MAX);
    let sampled = total > MAX_GRID_EVALUATIONS;
    let count = total.min(MAX_GRID_EVALUATIONS);
    let keep = 8;
    let mut best: Vec<(f64, Vec<f64>)> = Vec::with_capacity(keep + 1);
    let mut grid_value = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = vec![0.0; dims];
    for idx in 0..count {
        if sampled {
            for (d, &(lo, hi, _)) in ranges.iter().enumerate() {
                point[d] = lo + (hi - lo) * rng.random::<f64>();
            }
        } else {
            let mut rest = idx;
            for d in 0..dims {
                let g = per_dim[d];
                let k = rest % g;
                rest /= g;
                let (lo, hi, periodic) = ranges[d];
                let denom = if periodic || g == 1 { g as f64 } else { (g - 1) as f64 };
                point[d] = lo + (hi - lo) * k as f64 / denom;
            }
        }
        let v = f(&point);
        grid_value = grid_value.max(v);
        if v >= target {
            return SupEstimate { value: v, grid_value, evaluations: idx + 1, sampled };
        }
        if best.len() < keep || v > best[best.len() - 1].0 {
            best.push((v, point.clone()));
            best.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            best.truncate(keep);
        }
    }
    let mut value = grid_value;
    for (v0, p0) in best {
        let mut p = p0;
        let mut v = v0;
        let mut step: Vec<f64> = ranges
            .iter()
            .zip(per_dim)
            .map(|(&(lo, hi, _), &g)| (hi - lo) / g.max(2) as f64)
            .collect();
        while step.iter().cloned().fold(0.0, f64::max) > 1e-10 {
            let mut improved = false;
            for d in 0..dims {
                for sign in [1.0, -1.0] {
                    let mut q = p.clone();
                    q[d] += sign * step[d];
                    let (lo, hi, periodic) = ranges[d];
                    if !periodic {
                        q[d] = q[d].clamp(lo, hi);
                    }
                    let w = f(&q);
                    if w >= target {
                        return SupEstimate { value: w, grid_value, evaluations: count, sampled };
                    }
                    if w > v {
                        v = w;
                        p = q;
                        improved = true;
                    }
                }
            }
            if !improved {
                for s in step.iter_mut() {
                    *s *= 0.5;
                }
            }
        }
        value = value.max(v);
    }
    SupEstimate { value, grid_value, evaluations: count, sampled }
}

/// Sup of |f| over Γₙ, attained on πₙ(𝕋ⁿ): a torus grid with `grid` points
/// per angle, refined locally. Beyond the evaluation cap the torus is sampled
/// at random (deterministically seeded) and the estimate is flagged.
pub fn sup_norm_on_gamma(f: &Polynomial, n: usize, grid: usize) -> SupEstimate {
    gamma_sup_until(f, n, grid, f64::INFINITY)
}

fn gamma_sup_until(f: &Polynomial, n: usize, grid: usize, target: f64) -> SupEstimate {
    let eval = |theta: &[f64]| {
        let z: Vec<Complex64> = theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        f.eval(&symmetrize(&z).coords).norm()
    };
    let ranges = vec![(0.0, 2.0 * PI, true); n];
    grid_sup(eval, &ranges, &vec![grid.max(1); n], 0x5eed_0000 + n as u64, target)
}

/// Sup of |f| over the closed tetrablock, attained on its distinguished
/// boundary {(x̄₂x₃, x₂, x₃) : |x₃| = 1, |x₂| ≤ 1}.
pub fn sup_norm_on_tetrablock(f: &Polynomial, grid: usize) -> SupEstimate {
    tetrablock_sup_until(f, grid, f64::INFINITY)
}

fn tetrablock_sup_until(f: &Polynomial, grid: usize, target: f64) -> SupEstimate {
    let eval = |q: &[f64]| {
        let x3 = Complex64::from_polar(1.0, q[0]);
        let x2 = Complex64::from_polar(q[1], q[2]);
        f.eval(&[x2.conj() * x3, x2, x3]).norm()
    };
    let g = grid.max(2);
    let ranges = [(0.0, 2.0 * PI, true), (0.0, 1.0, false), (0.0, 2.0 * PI, true)];
    grid_sup(eval, &ranges, &[g, g / 2 + 1, g], 0x7e7a, target)
}

/// A polynomial violating the von Neumann-type inequality for a tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct RefutationWitness {
    pub polynomial: Polynomial,
    /// ‖f(tuple)‖.
    pub operator_norm: f64,
    /// Estimated sup of |f| over the domain.
    pub sup: f64,
    /// Index of the sample that produced the witness.
    pub sample: usize,
}

/// Which domain a refutation samples against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Γₙ for an n-tuple (s₁, …, s_{n−1}, p).
    Gamma,
    /// The tetrablock for a triple (a, b, p).
    Tetrablock,
}

/// Grid size per dimension keeping a sup estimate near 2·10⁵ evaluations.
fn refuter_grid(dims: usize, requested: usize) -> usize {
    let cap = (2e5f64).powf(1.0 / dims as f64).floor() as usize;
    requested.min(cap).max(4)
}

/// Samples random polynomials (degree 1–4, complex Gaussian coefficients)
/// and returns the first f with ‖f(tuple)‖ > sup|f|·(1 + grid_tol).
/// `None` is not a certificate.
pub fn refute_tuple(
    domain: Domain,
    members: &[ComplexMatrix],
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Option<RefutationWitness> {
    let n = members.len();
    if n == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = match domain {
        Domain::Gamma => n,
        Domain::Tetrablock => 3,
    };
    let grid = refuter_grid(dims, tol.grid_points);
    let sup = |f: &Polynomial, g: usize, target: f64| match domain {
        Domain::Gamma => gamma_sup_until(f, n, g, target),
        Domain::Tetrablock => tetrablock_sup_until(f, g, target),
    };
    for sample in 0..samples {
        let degree = rng.random_range(1..=4usize);
        let f = Polynomial::random(n, degree, &mut rng);
        let lhs = op_norm(&f.eval_tuple(members));
        // Any attained value of |f| on the boundary bounds the sup from
        // below, so a coarse scan reaching ‖f(T)‖ settles the sample.
        let coarse = sup(&f, 6, lhs);
        if lhs <= coarse.value {
            continue;
        }
        let fine = sup(&f, grid, lhs / (1.0 + tol.grid_tol));
        if lhs > fine.value * (1.0 + tol.grid_tol) {
            return Some(RefutationWitness { polynomial: f, operator_norm: lhs, sup: fine.value, sample });
        }
    }
    None
}

/// [`refute_tuple`] against Γₙ.
pub fn refute_gamma_contraction(
    members: &[ComplexMatrix],
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Option<RefutationWitness> {
    refute_tuple(Domain::Gamma, members, samples, seed, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    fn r(x: f64) -> Complex64 {
        c64(x, 0.0)
    }

    #[test]
    fn symmetrize_examples() {
        assert_eq!(symmetrize(&[r(1.0), r(1.0), r(1.0)]).coords, vec![r(3.0), r(3.0), r(1.0)]);
        let z = c64(0.3, -0.2);
        assert_eq!(symmetrize(&[z, r(0.0), r(0.0)]).coords, vec![z, r(0.0), r(0.0)]);
        assert_eq!(symmetrize(&[r(0.5), r(-0.5)]).coords, vec![r(0.0), r(-0.25)]);
    }

    #[test]
    fn gamma_membership_examples() {
        let tol = Tolerances::default();
        let zero = GammaPoint { n: 3, coords: vec![r(0.0); 3] };
        assert_eq!(gamma_membership(&zero, &tol).unwrap().status, MembershipStatus::Interior);
        let edge = GammaPoint { n: 2, coords: vec![r(2.0), r(1.0)] };
        assert_eq!(gamma_membership(&edge, &tol).unwrap().status, MembershipStatus::OnDistinguishedBoundary);
        let triple = GammaPoint { n: 3, coords: vec![r(3.0), r(3.0), r(1.0)] };
        assert_eq!(gamma_membership(&triple, &tol).unwrap().status, MembershipStatus::OnDistinguishedBoundary);
        let out = GammaPoint { n: 2, coords: vec![r(3.0), r(0.0)] };
        assert_eq!(gamma_membership(&out, &tol).unwrap().status, MembershipStatus::Outside);
        let scalar = GammaPoint { n: 2, coords: vec![r(1.2), r(0.5)] };
        let v = gamma_membership(&scalar, &tol).unwrap();
        assert_eq!(v.status, MembershipStatus::Interior);
        assert!((v.margin - (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn tetrablock_examples() {
        let tol = Tolerances::default();
        assert_eq!(tetrablock_membership([r(0.0); 3], &tol).status, MembershipStatus::Interior);
        assert_eq!(
            tetrablock_membership([r(0.0), r(0.0), r(1.0)], &tol).status,
            MembershipStatus::OnDistinguishedBoundary
        );
        let (b1, b2, x3) = (r(0.3), r(0.2), r(0.5));
        let x = [b1 + b2.conj() * x3, b2 + b1.conj() * x3, x3];
        let v = tetrablock_membership(x, &tol);
        assert_eq!(v.status, MembershipStatus::Interior);
        assert!((v.witness[0] - b1).norm() < 1e-12 && (v.witness[1] - b2).norm() < 1e-12);
        assert_eq!(tetrablock_membership([r(1.0), r(1.0), r(0.0)], &tol).status, MembershipStatus::Outside);
    }

    fn diag2(a: Complex64, b: Complex64) -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[a, r(0.0), r(0.0), b])
    }

    #[test]
    fn mu_examples() {
        let tol = Tolerances::default();
        assert_eq!(mu_diag_2x2(&ComplexMatrix::zeros(2, 2), &tol).unwrap(), 0.0);
        assert!((mu_diag_2x2(&diag2(r(2.0), r(0.0)), &tol).unwrap() - 2.0).abs() < 1e-9);
        let (a, b) = (c64(0.3, 0.4), c64(-0.2, 0.1));
        assert!((mu_diag_2x2(&diag2(a, b), &tol).unwrap() - 0.5).abs() < 1e-9);
        let v = tetrablock_membership([a, b, a * b], &tol);
        assert_eq!(v.status, MembershipStatus::Interior);
    }

    #[test]
    fn sup_examples() {
        let s1 = Polynomial::coordinate(2, 0);
        assert!((sup_norm_on_gamma(&s1, 2, 32).value - 2.0).abs() < 1e-9);
        let p = Polynomial::coordinate(3, 2);
        assert!((sup_norm_on_gamma(&p, 3, 8).value - 1.0).abs() < 1e-12);
        let c = Polynomial::constant(2, c64(3.0, 4.0));
        assert!((sup_norm_on_gamma(&c, 2, 4).value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn refuter_examples() {
        let tol = Tolerances::default();
        let i2 = ComplexMatrix::identity(2, 2);
        let planted = vec![i2.clone() * r(3.0), ComplexMatrix::zeros(2, 2)];
        let w = refute_gamma_contraction(&planted, 200, 7, &tol).expect("refuted");
        assert!(w.operator_norm > w.sup);
        let zero = vec![ComplexMatrix::zeros(2, 2); 2];
        assert!(refute_gamma_contraction(&zero, 50, 7, &tol).is_none());
    }

    #[test]
    fn polynomial_json_format() {
        let f = Polynomial { n: 2, terms: vec![Term { alpha: vec![1, 0], coeff: c64(1.0, -0.5) }] };
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(text, r#"{"n":2,"terms":[{"alpha":[1,0],"coeff":[1.0,-0.5]}]}"#);
        assert_eq!(serde_json::from_str::<Polynomial>(&text).unwrap(), f);
    }

    #[test]
    fn multi_index_count() {
        // C(n + d, d) monomials of degree ≤ d.
        assert_eq!(multi_indices(2, 4).len(), 15);
        assert_eq!(multi_indices(3, 4).len(), 35);
        assert_eq!(multi_indices(3, 0), vec![vec![0, 0, 0]]);
    }
}
