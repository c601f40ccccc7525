//! Property tests for symmetrization and Γₙ membership.

use num_complex::Complex64;
use opkit_core::gamma_domain::{gamma_membership, symmetrize, MembershipStatus};
use opkit_core::linalg::Tolerances;
use proptest::prelude::*;

fn disc_point(max_radius: f64) -> impl Strategy<Value = Complex64> {
    (0.0..max_radius, 0.0..std::f64::consts::TAU).prop_map(|(r, t)| Complex64::from_polar(r, t))
}

proptest! {
    #[test]
    fn symmetrize_is_permutation_invariant(z in prop::collection::vec(disc_point(2.0), 2..5), k in 0usize..4) {
        let mut rotated = z.clone();
        rotated.rotate_left(k % z.len());
        let a = symmetrize(&z);
        let b = symmetrize(&rotated);
        for (x, y) in a.coords.iter().zip(&b.coords) {
            prop_assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn symmetrized_open_polydisc_points_are_interior(z in prop::collection::vec(disc_point(0.95), 2..5)) {
        let v = gamma_membership(&symmetrize(&z), &Tolerances::default()).unwrap();
        prop_assert_eq!(v.status, MembershipStatus::Interior);
    }

    #[test]
    fn a_root_outside_the_closed_disc_is_outside(z in prop::collection::vec(disc_point(0.9), 1..4), r in 1.1f64..3.0) {
        let mut roots = z.clone();
        roots.push(Complex64::new(r, 0.0));
        let v = gamma_membership(&symmetrize(&roots), &Tolerances::default()).unwrap();
        prop_assert_eq!(v.status, MembershipStatus::Outside);
    }
}
