mod common;

use bsl_core::measures::rearrange_values;
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn convex_sandwich_holds_for_bracketed_sequences(s in sandwiched(0.6, 3.0), beta in 0.4f64..1.0) {
        prop_assert!(a1_holds(&s, beta));
    }

    #[test]
    fn concave_sandwich_holds_for_bracketed_sequences(s in sandwiched(1.05, 3.0), f in 0.1f64..0.95) {
        prop_assert!(a2_holds(&s, f));
    }

    #[test]
    fn weak_majorisation_transfers_to_cut_powers(m in majorized()) {
        prop_assert!(majorization_holds(&m));
    }

    #[test]
    fn rearrangement_is_a_sorted_permutation(v in prop::collection::vec(0.0f64..1e3, 0..200)) {
        let r = rearrange_values(&v);
        prop_assert!(r.windows(2).all(|w| w[0] >= w[1]));
        let (mut a, mut b) = (v.clone(), r.clone());
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }
}
