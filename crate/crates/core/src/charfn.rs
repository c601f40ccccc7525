//! Characteristic function Θ_P(z) = −P + zD_{P*}(I − zP*)⁻¹D_P of a
//! contraction, expressed between orthonormal bases of its defect spaces,
//! and the defect function Δ_P(t) = (I − Θ_P(e^{it})*Θ_P(e^{it}))^{1/2}.

use crate::linalg::{defect, op_norm, psd_sqrt, ComplexMatrix, Defect, LinalgError, Tolerances};
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::Mutex;

/// Errors raised while evaluating characteristic functions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CharFnError {
    #[error("I - zP* is singular at z = {z}")]
    ResolventSingular { z: Complex64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Defect data of a contraction P and of its adjoint, possibly with
/// truncation-edge artifacts removed.
#[derive(Debug, Clone)]
pub struct DefectPair {
    /// D_P and an orthonormal basis of 𝒟_P.
    pub defect: Defect,
    /// D_{P*} and an orthonormal basis of 𝒟_{P*}.
    pub defect_star: Defect,
}

/// Removes from a defect every eigenvector concentrated outside `mask`
/// (mass outside above one half). Truncating an isometry or co-isometry
/// produces such spurious defect directions at the last retained modes.
pub fn mask_defect(full: Defect, mask: &[usize]) -> Defect {
    let n = full.d.nrows();
    if mask.len() == n {
        return full;
    }
    let mut inside = vec![false; n];
    for &i in mask {
        inside[i] = true;
    }
    let keep: Vec<usize> = (0..full.dim())
        .filter(|&k| {
            let v = full.space.basis.column(k);
            let outside: f64 = (0..n).filter(|&i| !inside[i]).map(|i| v[i].norm_sqr()).sum();
            outside < 0.5
        })
        .collect();
    let mut basis = ComplexMatrix::zeros(n, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        basis.set_column(j, &full.space.basis.column(k));
    }
    let values: Vec<f64> = keep.iter().map(|&k| full.values[k]).collect();
    let scaled = ComplexMatrix::from_fn(n, keep.len(), |i, j| basis[(i, j)] * values[j]);
    let d = &scaled * basis.adjoint();
    Defect { d, space: crate::linalg::SubspaceBasis { ambient_dim: n, basis }, values }
}

impl DefectPair {
    /// Defects of P and P*, with edge artifacts outside `mask` removed when
    /// a mask is given.
    pub fn new(p: &ComplexMatrix, mask: Option<&[usize]>, tol: &Tolerances) -> Result<Self, LinalgError> {
        let d = defect(p, tol)?;
        let ds = defect(&p.adjoint(), tol)?;
        Ok(match mask {
            Some(m) => DefectPair { defect: mask_defect(d, m), defect_star: mask_defect(ds, m) },
            None => DefectPair { defect: d, defect_star: ds },
        })
    }

    /// The pair for P*, obtained by swapping roles.
    pub fn swapped(&self) -> Self {
        DefectPair { defect: self.defect_star.clone(), defect_star: self.defect.clone() }
    }
}

/// Evaluator of Θ_P and Δ_P with a cache of resolvent solves keyed by z.
#[derive(Debug)]
pub struct CharFnEvaluator {
    p: ComplexMatrix,
    defects: DefectPair,
    tol: Tolerances,
    /// Connected coordinate blocks of P on which both D_P and D_{P*} act.
    components: Vec<Vec<usize>>,
    /// Q_*^*·D_{P*}, Q_*^*·P·Q and D_P·Q, fixed factors of Θ_P.
    left: ComplexMatrix,
    constant: ComplexMatrix,
    rhs: ComplexMatrix,
    /// (I − zP*)⁻¹·D_P·Q for previously requested z.
    cache: Mutex<HashMap<[u64; 2], ComplexMatrix>>,
}

/// Coordinate blocks of P (connected components of its sparsity graph)
/// touched by both the 𝒟_P basis and D_{P*}.
fn relevant_components(p: &ComplexMatrix, defects: &DefectPair) -> Vec<Vec<usize>> {
    let n = p.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut j = i;
        while parent[j] != r {
            let next = parent[j];
            parent[j] = r;
            j = next;
        }
        r
    }
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] != Complex64::new(0.0, 0.0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let rhs = &defects.defect.d * &defects.defect.space.basis;
    let left = &defects.defect_star.d;
    let mut out: Vec<Vec<usize>> = groups
        .into_values()
        .filter(|comp| {
            let touches_rhs = comp.iter().any(|&i| rhs.row(i).iter().any(|x| x.norm() > 0.0));
            let touches_left = comp.iter().any(|&i| left.column(i).iter().any(|x| x.norm() > 0.0));
            touches_rhs && touches_left
        })
        .collect();
    out.sort();
    out
}

impl Clone for CharFnEvaluator {
    fn clone(&self) -> Self {
        CharFnEvaluator::with_defects(self.p.clone(), self.defects.clone(), self.tol)
    }
}

impl CharFnEvaluator {
    /// Evaluator for a finite contraction with its exact defect data.
    pub fn new(p: ComplexMatrix, tol: &Tolerances) -> Result<Self, LinalgError> {
        let defects = DefectPair::new(&p, None, tol)?;
        Ok(Self::with_defects(p, defects, *tol))
    }

    /// Evaluator with caller-supplied defect data (used for truncated
    /// structured operators).
    pub fn with_defects(p: ComplexMatrix, defects: DefectPair, tol: Tolerances) -> Self {
        let components = relevant_components(&p, &defects);
        let qs = &defects.defect_star.space.basis;
        let q = &defects.defect.space.basis;
        let left = qs.adjoint() * &defects.defect_star.d;
        let constant = qs.adjoint() * &p * q;
        let rhs = &defects.defect.d * q;
        CharFnEvaluator {
            p,
            defects,
            tol,
            components,
            left,
            constant,
            rhs,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn p(&self) -> &ComplexMatrix {
        &self.p
    }

    pub fn defects(&self) -> &DefectPair {
        &self.defects
    }

    /// dim 𝒟_P.
    pub fn defect_dim(&self) -> usize {
        self.defects.defect.dim()
    }

    /// dim 𝒟_{P*}.
    pub fn defect_star_dim(&self) -> usize {
        self.defects.defect_star.dim()
    }

    fn resolvent_applied(&self, z: Complex64) -> Result<ComplexMatrix, CharFnError> {
        let key = [z.re.to_bits(), z.im.to_bits()];
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let n = self.p.nrows();
        let rhs = &self.rhs;
        let mut solved = ComplexMatrix::zeros(n, rhs.ncols());
        // P is block diagonal up to a permutation for direct sums; only
        // blocks seen by both defect operators contribute to Θ.
        for comp in &self.components {
            let m = ComplexMatrix::from_fn(comp.len(), comp.len(), |i, j| {
                let delta = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                delta - self.p[(comp[j], comp[i])].conj() * z
            });
            let local_rhs = crate::linalg::submatrix(rhs, comp, &(0..rhs.ncols()).collect::<Vec<_>>());
            let x = m.lu().solve(&local_rhs).ok_or(CharFnError::ResolventSingular { z })?;
            for (li, &gi) in comp.iter().enumerate() {
                for c in 0..rhs.ncols() {
                    solved[(gi, c)] = x[(li, c)];
                }
            }
        }
        if !solved.iter().all(|x| x.re.is_finite() && x.im.is_finite())
            || op_norm(&solved) > 1.0 / self.tol.rank_tol
        {
            return Err(CharFnError::ResolventSingular { z });
        }
        self.cache.lock().expect("cache lock").insert(key, solved.clone());
        Ok(solved)
    }

    /// Matrix of Θ_P(z) from the 𝒟_P basis to the 𝒟_{P*} basis.
    pub fn theta_eval(&self, z: Complex64) -> Result<ComplexMatrix, CharFnError> {
        Ok(&self.left * self.resolvent_applied(z)? * z - &self.constant)
    }

    /// Δ_P(t) on the 𝒟_P basis.
    pub fn delta_eval(&self, t: f64) -> Result<ComplexMatrix, CharFnError> {
        let th = self.theta_eval(Complex64::from_polar(1.0, t))?;
        let k = self.defect_dim();
        let sq = ComplexMatrix::identity(k, k) - th.adjoint() * th;
        Ok(psd_sqrt(&crate::linalg::hermitian_part(&sq), &self.tol.clone())?)
    }

    /// Δ_P(t)² on the 𝒟_P basis (no square root, so it stays smooth where
    /// Δ_P degenerates).
    pub fn delta_squared(&self, t: f64) -> Result<ComplexMatrix, CharFnError> {
        let th = self.theta_eval(Complex64::from_polar(1.0, t))?;
        let k = self.defect_dim();
        Ok(ComplexMatrix::identity(k, k) - th.adjoint() * th)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    #[test]
    fn zero_contraction_gives_z() {
        let ev = CharFnEvaluator::new(ComplexMatrix::zeros(2, 2), &Tolerances::default()).unwrap();
        let z = c64(0.3, -0.4);
        let th = ev.theta_eval(z).unwrap();
        assert!(op_norm(&(th - ComplexMatrix::identity(2, 2) * z)) < 1e-14);
    }

    #[test]
    fn scalar_mobius() {
        let ev = CharFnEvaluator::new(ComplexMatrix::from_element(1, 1, c64(0.5, 0.0)), &Tolerances::default())
            .unwrap();
        for &z in &[c64(0.0, 0.0), c64(0.2, 0.7), c64(-0.9, 0.1)] {
            let oracle = (z - 0.5) / (c64(1.0, 0.0) - z * 0.5);
            let th = ev.theta_eval(z).unwrap()[(0, 0)];
            // Basis phases are normalized real-positive, so no unimodular factor.
            assert!((th - oracle).norm() < 1e-13);
        }
        assert!(op_norm(&ev.delta_eval(1.1).unwrap()) < 1e-6);
    }

    #[test]
    fn shift_adjoint_truncation_masked() {
        let n = 6;
        // Upper shift: P e_{k+1} = e_k.
        let p = ComplexMatrix::from_fn(n, n, |i, j| if j == i + 1 { c64(1.0, 0.0) } else { c64(0.0, 0.0) });
        let mask: Vec<usize> = (0..n - 2).collect();
        let pair = DefectPair::new(&p, Some(&mask), &Tolerances::default()).unwrap();
        assert_eq!(pair.defect.dim(), 1);
        assert_eq!(pair.defect_star.dim(), 0);
        let ev = CharFnEvaluator::with_defects(p, pair, Tolerances::default());
        assert!((ev.delta_eval(0.7).unwrap()[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-12);
    }
}
