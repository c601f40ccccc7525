//! Reference computations for the integration tests, written independently
//! of the library's solvers: dense defect operators from a Hermitian
//! eigendecomposition, the fundamental-operator equations written out
//! literally, the characteristic function from a plain resolvent solve, and
//! Fourier coefficients by direct summation.

#![allow(dead_code)]

use nalgebra::SymmetricEigen;
use opkit_core::linalg::{c64, Complex64, ComplexMatrix};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Spectral norm as the square root of the top eigenvalue of the Gram
/// matrix of the thinner side (0 for empty matrices).
pub fn norm2(m: &ComplexMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() >= m.ncols() { m.adjoint() * m } else { m * m.adjoint() };
    let h = (&gram + gram.adjoint()) * c64(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.max().max(0.0).sqrt()
}

/// The submatrix on the given rows and columns.
pub fn sub(m: &ComplexMatrix, rows: &[usize], cols: &[usize]) -> ComplexMatrix {
    m.select_rows(rows).select_columns(cols)
}

/// Norm of the compression to `mask` × `mask`.
pub fn masked_norm(m: &ComplexMatrix, mask: &[usize]) -> f64 {
    norm2(&sub(m, mask, mask))
}

/// D_T = (I − T*T)^{1/2} and the orthogonal projection onto its range.
pub struct DefectOracle {
    pub d: ComplexMatrix,
    pub range: ComplexMatrix,
}

/// Defect operator of a contraction from the eigendecomposition of the
/// Hermitian part of I − T*T. Eigenvalues below a rounding floor of
/// 100·n·ε (the accuracy to which I − T*T is formed) are treated as zero
/// before the square root — otherwise rounding noise ε would enter D as √ε —
/// and the remaining eigenvectors span the range.
pub fn defect_oracle(t: &ComplexMatrix) -> DefectOracle {
    let n = t.ncols();
    let m = ComplexMatrix::identity(n, n) - t.adjoint() * t;
    let h = (&m + m.adjoint()) * c64(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let floor = 100.0 * n.max(1) as f64 * f64::EPSILON;
    let mut d = ComplexMatrix::zeros(n, n);
    let mut range = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = eig.eigenvalues[k];
        if lambda <= floor {
            continue;
        }
        let v = eig.eigenvectors.column(k).into_owned();
        let outer = &v * v.adjoint();
        d += &outer * c64(lambda.sqrt(), 0.0);
        range += outer;
    }
    DefectOracle { d, range }
}

/// max_i ‖S_i − S_{n−i}*P − D_P(Q X_i Q*)D_P‖ on `mask`, with D_P from
/// [`defect_oracle`]. `members` is (S₁, …, S_{n−1}, P); `q` spans the
/// defect space in which the X_i are expressed.
pub fn fo_residual(members: &[ComplexMatrix], x: &[ComplexMatrix], q: &ComplexMatrix, mask: &[usize]) -> f64 {
    let n = members.len();
    let p = &members[n - 1];
    let d = defect_oracle(p).d;
    (1..n)
        .map(|i| {
            let lifted = q * &x[i - 1] * q.adjoint();
            let r = &members[i - 1] - members[n - i - 1].adjoint() * p - &d * lifted * &d;
            masked_norm(&r, mask)
        })
        .fold(0.0, f64::max)
}

/// Residual of the coupled system Q*D S_i = X_i Q*D + X_{n−i}* Q*D P on the
/// `mask` columns, for given defect operator `d` and basis `q`.
pub fn fo_system_residual(
    members: &[ComplexMatrix],
    d: &ComplexMatrix,
    q: &ComplexMatrix,
    x: &[ComplexMatrix],
    mask: &[usize],
) -> f64 {
    let n = members.len();
    let p = &members[n - 1];
    let qd = q.adjoint() * d;
    let rows: Vec<usize> = (0..qd.nrows()).collect();
    (1..n)
        .map(|i| {
            let lhs = &qd * &members[i - 1];
            let rhs = &x[i - 1] * &qd + x[n - i - 1].adjoint() * &qd * p;
            norm2(&sub(&(lhs - rhs), &rows, mask))
        })
        .fold(0.0, f64::max)
}

/// Ambient characteristic function −T + z·D_{T*}(I − zT*)⁻¹D_T.
pub fn theta_ambient(t: &ComplexMatrix, d: &ComplexMatrix, d_star: &ComplexMatrix, z: Complex64) -> ComplexMatrix {
    let n = t.nrows();
    let m = ComplexMatrix::identity(n, n) - t.adjoint() * z;
    let x = m.lu().solve(d).expect("resolvent of a contraction inside the disc");
    -t + d_star * x * z
}

/// The 5 × 64 disc grid: radii 0, .25, .5, .75, .95 and 64 angles.
pub fn disc_points() -> Vec<Complex64> {
    let mut out = Vec::new();
    for r in [0.0, 0.25, 0.5, 0.75, 0.95] {
        for k in 0..64 {
            out.push(Complex64::from_polar(r, 2.0 * PI * k as f64 / 64.0));
        }
    }
    out
}

/// max over the disc grid and i of
/// ‖((B̃_i* + zB̃_{n−i})Θ̃(z) − Θ̃(z)(Ã_i + zÃ_{n−i}*))Π‖ with the ambient
/// characteristic function of P = members.last() and Π the projection onto
/// 𝒟_P. `a`, `b` are lifted through the bases `q`, `q_star`.
pub fn theta_intertwining_residual(
    p: &ComplexMatrix,
    a: &[ComplexMatrix],
    b: &[ComplexMatrix],
    q: &ComplexMatrix,
    q_star: &ComplexMatrix,
) -> f64 {
    let n = a.len() + 1;
    let dp = defect_oracle(p);
    let dps = defect_oracle(&p.adjoint());
    let at: Vec<ComplexMatrix> = a.iter().map(|x| q * x * q.adjoint()).collect();
    let bt: Vec<ComplexMatrix> = b.iter().map(|x| q_star * x * q_star.adjoint()).collect();
    let mut worst = 0.0_f64;
    for z in disc_points() {
        let th = theta_ambient(p, &dp.d, &dps.d, z);
        for i in 1..n {
            let left = bt[i - 1].adjoint() + &bt[n - i - 1] * z;
            let right = &at[i - 1] + at[n - i - 1].adjoint() * z;
            worst = worst.max(norm2(&((left * &th - &th * right) * &dp.range)));
        }
    }
    worst
}

/// Fourier coefficients (1/G)·Σ_g f(ω^g)ω^{−gm} for |m| ≤ `m_range` by
/// direct summation over the G-point grid.
pub fn direct_coefficients(
    samples: &[ComplexMatrix],
    m_range: i64,
) -> BTreeMap<i64, ComplexMatrix> {
    let g = samples.len();
    let (r, c) = samples[0].shape();
    let mut out = BTreeMap::new();
    for m in -m_range..=m_range {
        let mut acc = ComplexMatrix::zeros(r, c);
        for (k, s) in samples.iter().enumerate() {
            let phase = Complex64::from_polar(1.0 / g as f64, -2.0 * PI * (k as f64) * (m as f64) / g as f64);
            acc += s * phase;
        }
        out.insert(m, acc);
    }
    out
}

/// Greedy matching of two point multisets; the largest matched distance.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0_f64;
    for x in a {
        let (idx, dist) = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, y)| (i, (x - y).norm()))
            .fold((usize::MAX, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
        if idx == usize::MAX {
            return f64::INFINITY;
        }
        used[idx] = true;
        worst = worst.max(dist);
    }
    worst
}

/// Binomial coefficient as a float (0 outside 0 ≤ k ≤ n).
pub fn choose(n: usize, k: i64) -> f64 {
    if k < 0 || k as usize > n {
        return 0.0;
    }
    let k = k as usize;
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Matrix power by repeated multiplication.
pub fn power(m: &ComplexMatrix, e: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..e {
        out = &out * m;
    }
    out
}

/// Data entering the dense coefficient formulas for index j of an n-tuple.
pub struct FamilyData<'a> {
    pub n: usize,
    pub j: usize,
    /// (S₁, …, S_{n−1}, P).
    pub members: &'a [ComplexMatrix],
    pub a: &'a [ComplexMatrix],
    pub b: &'a [ComplexMatrix],
    pub q: &'a ComplexMatrix,
    pub q_star: &'a ComplexMatrix,
    pub d: &'a ComplexMatrix,
    pub d_star: &'a ComplexMatrix,
    pub astar: &'a ComplexMatrix,
}

/// The families I_m and J_m written out on the ambient space and
/// compressed to the defect basis at the end.
pub fn dense_families(f: &FamilyData, m_range: i64) -> (BTreeMap<i64, ComplexMatrix>, BTreeMap<i64, ComplexMatrix>) {
    let (n, j) = (f.n, f.j);
    let (q, qs, d, ds, astar) = (f.q, f.q_star, f.d, f.d_star, f.astar);
    let p = &f.members[n - 1];
    let ps = p.adjoint();
    let c = c64(choose(n - 1, j as i64), 0.0);
    let cp = c64(choose(n - 1, j as i64 - 1), 0.0);
    let s_j = &f.members[j - 1];
    let s_adj = f.members[n - j - 1].adjoint();
    let a_j = q * &f.a[j - 1] * q.adjoint();
    let a_adj = (q * &f.a[n - j - 1] * q.adjoint()).adjoint();
    let b_nj = qs * &f.b[n - j - 1] * qs.adjoint();
    let b_j_adj = (qs * &f.b[j - 1] * qs.adjoint()).adjoint();
    let (mut fi, mut fj) = (BTreeMap::new(), BTreeMap::new());
    for m in -m_range..=m_range {
        let (im, jm) = if m == 0 {
            (
                d * astar * d * c + d * p * astar * d * cp,
                d * d * &a_j - d * s_j * d + d * ds * &b_nj * p + d * p * astar * &s_adj * d,
            )
        } else if m == 1 {
            (
                d * astar * d * cp + d * astar * &ps * d * c,
                &a_adj * d * d + &ps * &b_j_adj * ds * d - d * &s_adj * d + d * astar * &s_adj * d,
            )
        } else if m >= 2 {
            let e = m as usize;
            (
                d * astar * power(&ps, e - 1) * d * cp + d * astar * power(&ps, e) * d * c,
                d * astar * power(&ps, e - 1) * &s_adj * d,
            )
        } else {
            let e = (-m) as usize;
            (
                d * power(p, e) * astar * d * c + d * power(p, e + 1) * astar * d * cp,
                d * power(p, e + 1) * astar * &s_adj * d,
            )
        };
        fi.insert(m, q.adjoint() * im * q);
        fj.insert(m, q.adjoint() * jm * q);
    }
    (fi, fj)
}

/// Δ(t)² = I − Θ(e^{it})*Θ(e^{it}) on the 𝒟_P basis at the G grid points,
/// with Θ = Q_**(−P + zD_{P*}(I − zP*)⁻¹D_P)Q from explicit defect data.
pub fn delta_squared_samples(
    p: &ComplexMatrix,
    d: &ComplexMatrix,
    d_star: &ComplexMatrix,
    q: &ComplexMatrix,
    q_star: &ComplexMatrix,
    grid: usize,
) -> Vec<ComplexMatrix> {
    let k = q.ncols();
    let eye = ComplexMatrix::identity(k, k);
    (0..grid)
        .map(|g| {
            if q_star.ncols() == 0 {
                return eye.clone();
            }
            let z = Complex64::from_polar(1.0, 2.0 * PI * g as f64 / grid as f64);
            let th = q_star.adjoint() * theta_ambient(p, d, d_star, z) * q;
            &eye - th.adjoint() * th
        })
        .collect()
}
