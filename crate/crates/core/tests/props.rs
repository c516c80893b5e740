use kaclab_core::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn arb_region() -> impl Strategy<Value = Region> {
    prop_oneof![
        (-2.0..2.0f64, -2.0..2.0f64, 0.2..3.0f64)
            .prop_map(|(cx, cy, r)| Region::ball(&[cx, cy], r).unwrap()),
        (-2.0..0.0f64, -2.0..0.0f64, 0.1..2.0f64, 0.1..2.0f64)
            .prop_map(|(lx, ly, wx, wy)| Region::rect_box(&[lx, ly], &[lx + wx, ly + wy]).unwrap()),
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_filter_map("nonzero normal", |(nx, ny, c)| {
            if nx.abs() + ny.abs() > 1e-3 {
                Some(Region::halfspace(&[nx, ny], c).unwrap())
            } else {
                None
            }
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complement_interior_implies_not_member(region in arb_region(), x in -4.0..4.0f64, y in -4.0..4.0f64) {
        let p = [x, y];
        if region.complement_interior(&p) {
            prop_assert!(!region.membership(&p));
        }
    }

    #[test]
    fn barrier_free_regions_have_matching_oracles(region in arb_region(), x in -4.0..4.0f64, y in -4.0..4.0f64) {
        // complement_interior == !membership away from the boundary
        let p = [x, y];
        let margin = if region.membership(&p) {
            region.complement_distance(&p)
        } else {
            f64::INFINITY
        };
        if margin > 1e-9 {
            prop_assert_eq!(region.complement_interior(&p), !region.membership(&p));
        }
    }

    #[test]
    fn alpha_never_exceeds_beta(region in arb_region(), seed in 0u64..1000, steps in 1usize..200) {
        let h = 0.01;
        // pick a start inside, if the origin-ish probe is inside
        let start = [0.01, 0.02];
        if region.membership(&start) {
            let path = PathSample::generate(PathStream::derive(seed, 0), &start, steps as f64 * h, h).unwrap();
            let st = stopping_times(&path, &region, 0).unwrap();
            prop_assert!(st.alpha <= st.beta);
        }
    }

    #[test]
    fn exhaustion_times_are_monotone(seed in 0u64..500) {
        let parent = Region::halfspace(&[0.0, 1.0], -1.5).unwrap();
        let path = PathSample::generate(PathStream::derive(seed, 3), &[0.0, 0.0], 1.0, 0.01).unwrap();
        let mut prev_a = 0.0f64;
        let mut prev_b = 0.0f64;
        for n in 1..=5u32 {
            let level = parent.exhaust(ExhaustScheme::Boxes, n).unwrap();
            let st = stopping_times(&path, &level, 0).unwrap();
            prop_assert!(st.alpha >= prev_a);
            prop_assert!(st.beta >= prev_b);
            prev_a = st.alpha;
            prev_b = st.beta;
        }
    }

    #[test]
    fn decomposition_recombines(c in -5.0..5.0f64, x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64) {
        let pot = ScalarPotential::Constant(c);
        let p = [x, y, z];
        prop_assert!((pot.eval(&p) - (pot.positive_part(&p) - pot.negative_part(&p))).abs() < 1e-12);
        let coul = coulomb(1.3, &[0.0, 0.0, 0.0]);
        if (x*x + y*y + z*z).sqrt() > 1e-3 {
            prop_assert!((coul.eval(&p) - (coul.positive_part(&p) - coul.negative_part(&p))).abs() < 1e-12);
        }
    }

    #[test]
    fn estimator_chain_is_ordered(seed in 0u64..100) {
        let square = Region::rect_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let one = |_: &[f64]| vec![Complex64::ONE];
        let req = EnsembleRequest {
            region: &square,
            potential: None,
            gauge: None,
            f: &one,
            x: &[0.5, 0.5],
            t: 0.06,
            h: 2e-3,
            n_paths: 256,
            seed,
            antithetic: false,
        };
        let d = dirichlet_semigroup(&req).unwrap().scalar().re;
        let p = penetration_semigroup(&req).unwrap().scalar().re;
        let pen = penalized_semigroup(&req, 25.0).unwrap().scalar().re;
        let free = free_semigroup(&req).unwrap().scalar().re;
        prop_assert!(d <= p + 1e-15);
        prop_assert!(p <= pen + 1e-12);
        prop_assert!(pen <= free + 1e-12);
    }

    #[test]
    fn phase_modulus_is_one(bx in -3.0..3.0f64, seed in 0u64..200) {
        let eta = GaugeForm::AxiallyLinear { b: bx };
        let path = sample_path(&[0.5, -0.5], 0.2, 2e-3, seed).unwrap();
        let st = accumulate_functionals(&path, None, Some(&eta), 0.2).unwrap();
        prop_assert!((st.phase.norm() - 1.0).abs() < 1e-10);
    }
}
