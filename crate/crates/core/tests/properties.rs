use biflab::cli::config::parse_complex;
use biflab::cli::pgm::{gray_levels, Scale};
use biflab::cli::Grid;
use biflab::family::{FamilySpec, ParameterDomain, Point};
use biflab::lyapunov::BifField;
use biflab::measure::{pushforward_check, sample_equilibrium, SamplerConfig};
use biflab::polyroots::solve_shifted;
use biflab::scalar::cx;
use proptest::prelude::*;

fn family(idx: usize) -> FamilySpec<f64> {
    match idx {
        0 => FamilySpec::quadratic(4.0),
        1 => FamilySpec::cubic(4.0),
        2 => FamilySpec::monomial(5, 4.0),
        3 => FamilySpec::skew_quadratic(4.0),
        _ => FamilySpec::product_squares(4.0),
    }
}

fn any_f64() -> impl Strategy<Value = f64> {
    prop_oneof![any::<u64>().prop_map(f64::from_bits), -1e3..1e3f64, Just(0.0), Just(-0.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn preimages_count_is_topological_degree(
        fam in 0usize..5,
        lr in -1.0..1.0f64, li in -1.0..1.0f64,
        zr in -2.0..2.0f64, zi in -2.0..2.0f64,
        wr in -2.0..2.0f64, wi in -2.0..2.0f64,
    ) {
        let spec = family(fam);
        let lambda = cx(lr, li);
        let target = Point::new(cx(zr, zi), if spec.dim() == 2 { cx(wr, wi) } else { cx(0.0, 0.0) });
        let pre = solve_shifted(&spec, lambda, target).unwrap();
        prop_assert_eq!(pre.count(), spec.d_t());
        prop_assert_eq!(pre.expanded().len(), spec.d_t());
        for p in pre.expanded() {
            let img = spec.evaluate(lambda, p).unwrap();
            prop_assert!(img.dist(&target) < 1e-8 * (1.0 + target.norm()), "{:?} -> {:?}", p, img);
        }
    }

    #[test]
    fn grid_text_round_trip_is_bit_exact(
        (nx, ny, values) in (1usize..6, 1usize..6).prop_flat_map(|(nx, ny)| {
            (Just(nx), Just(ny), prop::collection::vec(any_f64(), nx * ny))
        }),
        x0 in any_f64(), h in 1e-9..10.0f64,
    ) {
        let g = Grid { nx, ny, x0, y0: -x0, h, values };
        let back = Grid::parse(&g.to_text()).unwrap();
        let same = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        prop_assert!(g.values.iter().zip(&back.values).all(|(&a, &b)| same(a, b)));
        prop_assert!(same(g.x0, back.x0) && same(g.y0, back.y0) && same(g.h, back.h));
        prop_assert_eq!((g.nx, g.ny), (back.nx, back.ny));
    }

    #[test]
    fn green_identity(
        (n, values) in (3usize..24).prop_flat_map(|n| (Just(n), prop::collection::vec(-1.0..1.0f64, n * n))),
        side in 0.01..10.0f64,
    ) {
        let dom = ParameterDomain::square(cx(0.3, -0.2), side, n).unwrap();
        let f = BifField::from_values(&dom, values).unwrap();
        prop_assert!((f.total_mass() - f.boundary_flux()).abs() < 1e-12);
    }

    #[test]
    fn harmonic_null_is_exact(
        n in 3usize..16,
        a in -50i64..50, b in -50i64..50, c in -50i64..50, d in -5i64..5, e in -5i64..5,
    ) {
        // h = 1/2 keeps every stencil operation exact
        let dom = ParameterDomain::square(cx(0.0, 0.0), n as f64 / 2.0, n).unwrap();
        let values: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = ((k % n) as i64, (k / n) as i64);
                (a + b * i + c * j + d * (i * i - j * j) + e * i * j) as f64
            })
            .collect();
        let f = BifField::from_values(&dom, values).unwrap();
        prop_assert!(f.laplacian.iter().all(|&v| v == 0.0));
        prop_assert_eq!(f.total_mass(), 0.0);
    }

    #[test]
    fn complex_literal_round_trip(re in -1e6..1e6f64, im in -1e6..1e6f64) {
        let text = format!("{re:e}{im:+e}i");
        prop_assert_eq!(parse_complex(&text), Some(cx(re, im)));
    }

    #[test]
    fn linear_gray_levels_span_full_range(values in prop::collection::vec(-1e6..1e6f64, 2..50)) {
        let g = gray_levels(&values, Scale::Linear);
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            prop_assert_eq!(g.iter().min(), Some(&0));
            prop_assert_eq!(g.iter().max(), Some(&255));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pushforward_invariance(fam in 0usize..5, lr in -0.2..0.2f64, li in -0.2..0.2f64, seed in any::<u64>()) {
        let spec = family(fam);
        let sample = sample_equilibrium(&spec, cx(lr, li), &SamplerConfig::new(24, 4000), seed).unwrap();
        let report = pushforward_check(&sample, &spec).unwrap();
        prop_assert_eq!(report.escaped, 0);
        prop_assert!(report.gap < 0.05, "gap {}", report.gap);
    }
}
