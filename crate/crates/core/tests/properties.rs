mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn trace_is_preserved(case in ring_case()) {
        check_trace_preservation(case)?;
    }

    #[test]
    fn purity_never_increases(case in ring_case()) {
        check_purity_monotone(case)?;
    }

    #[test]
    fn projectors_resolve_the_identity(case in ring_case()) {
        check_projectors(case)?;
    }

    #[test]
    fn tau_b_matches_sign_matrix_form(case in tau_case()) {
        check_tau_b(case)?;
    }

    #[test]
    fn cdfs_are_symmetric(case in phi_case()) {
        check_phi_symmetry(case)?;
    }
}
