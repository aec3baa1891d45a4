//! Randomized invariants over the codec, routing and whole runs.

mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn codec_round_trip_and_bit_flip(frame in arb_frame(), bit in any::<usize>()) {
        check_codec(&frame, bit)?;
    }

    #[test]
    fn parent_table_is_acyclic_and_connected(cfg in arb_scenario()) {
        check_parent_table(&cfg)?;
    }

    #[test]
    fn rounds_open_with_awake_and_close_with_sleep(case in arb_run_case()) {
        let sim = execute(&case);
        check_round_ordering(&case, &sim)?;
    }

    #[test]
    fn energy_is_conserved(case in arb_run_case()) {
        let sim = execute(&case);
        check_energy(&case, &sim)?;
    }

    #[test]
    fn runs_are_bitwise_deterministic(case in arb_run_case()) {
        check_determinism(&case)?;
    }
}
