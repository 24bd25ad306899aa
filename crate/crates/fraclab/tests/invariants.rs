use fraclab::cli::emit_report;
use fraclab::experiments::interp_sweep;
use fraclab::expr::parse;
use fraclab::grid::{truncate, GridFunction, GridSpec, Truncation};
use fraclab::kernel_form::{gagliardo_form, phi_integral};
use fraclab::special_functions::{gamma, kernel_constant, FractionalOrder};
use fraclab::spectral_form::{interpolation_ratio, partial_sums, quadratic_form};
use proptest::prelude::*;

fn spec(points: usize) -> GridSpec {
    GridSpec::new(1, 16.0, points).unwrap()
}

/// Sum of Gaussians a e^{-(x-c)^2/w^2}, negligible well before the domain edge.
fn gaussians(spec: &GridSpec, terms: &[(f64, f64, f64)]) -> GridFunction {
    let samples = (0..spec.points())
        .map(|j| {
            let x = spec.node(j);
            terms.iter().map(|&(a, c, w)| a * (-((x - c) / w).powi(2)).exp()).sum()
        })
        .collect();
    GridFunction::from_samples(spec.clone(), samples).unwrap()
}

fn terms() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, 0.4..1.0f64), 1..4)
        .prop_filter("not negligible", |t| t.iter().any(|&(a, _, _)| a.abs() > 0.1))
}

fn expr_source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        (0u32..50).prop_map(|k| format!("{}", k as f64 / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*", "/", "^"]), inner.clone())
                .prop_map(|(a, op, b)| format!("({a}){op}({b})")),
            inner.clone().prop_map(|a| format!("-({a})")),
            (prop::sample::select(vec!["exp", "sin", "cos", "abs", "bump"]), inner).prop_map(|(f, a)| format!("{f}({a})")),
        ]
    })
}

fn same_value(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn parser_never_panics(src in "[x0-9a-z+*/^(). eE-]{0,40}", dim in 1usize..3) {
        if let Ok(ast) = parse(&src, dim) {
            let _ = ast.eval(&vec![0.3; dim]);
        }
    }

    #[test]
    fn printed_expression_reparses(src in expr_source(), x in -3.0..3.0f64) {
        let ast = parse(&src, 1).unwrap();
        let again = parse(&ast.to_string(), 1).unwrap();
        match (ast.eval(&[x]), again.eval(&[x])) {
            (Ok(a), Ok(b)) => prop_assert!(same_value(a, b), "{src} -> {ast}: {a} vs {b}"),
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn gamma_recursion(x in -4.5..12.0f64) {
        prop_assume!((x - x.round()).abs() > 1e-3 || x > 0.5);
        let lhs = gamma(x + 1.0).unwrap();
        let rhs = x * gamma(x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-300));
    }

    #[test]
    fn kernel_constant_step(n in 1usize..4, s in 0.02..2.98f64) {
        prop_assume!((s - s.round()).abs() > 1e-3);
        let c = kernel_constant(n, FractionalOrder::new(s).unwrap()).unwrap();
        let next = kernel_constant(n, FractionalOrder::new(s + 1.0).unwrap()).unwrap();
        let expected = -4.0 * (s + 1.0) * (n as f64 / 2.0 + s) * c.value;
        prop_assert!((next.value - expected).abs() <= 1e-12 * expected.abs());
        prop_assert_eq!(c.value.signum(), c.expected_sign());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn positive_and_negative_parts(t in terms(), shift in 0.01..0.5f64) {
        let u = gaussians(&spec(1024), &t);
        let pos = truncate(&u, Truncation::Pos).unwrap();
        let neg = truncate(&u, Truncation::Neg).unwrap();
        let abs = truncate(&u, Truncation::Abs).unwrap();
        let (diff, sum) = (pos.sub(&neg).unwrap(), pos.add(&neg).unwrap());
        prop_assert_eq!(diff.samples(), u.samples());
        prop_assert_eq!(sum.samples(), abs.samples());
        let shifted = truncate(&u, Truncation::ShiftedPos(shift)).unwrap();
        prop_assert!(shifted.samples().iter().all(|&y| y >= 0.0));
    }

    #[test]
    fn polarization(a in terms(), b in terms(), s in 0.1..2.4f64) {
        let sp = spec(1024);
        let (u, v) = (gaussians(&sp, &a), gaussians(&sp, &b));
        let q = |f: &GridFunction, g: &GridFunction| quadratic_form(f, g, s, None).unwrap();
        let cross = q(&u, &v);
        let polar = (q(&u.add(&v).unwrap(), &u.add(&v).unwrap()) - q(&u.sub(&v).unwrap(), &u.sub(&v).unwrap())) / 4.0;
        let scale = q(&u, &u) + q(&v, &v);
        prop_assert!((cross - polar).abs() <= 1e-11 * scale);
        prop_assert!((cross - q(&v, &u)).abs() <= 1e-13 * scale);
    }

    #[test]
    fn homogeneity(t in terms(), lambda in prop_oneof![-5.0..-0.01f64, 0.01..5.0f64], s in 0.1..2.4f64) {
        let u = gaussians(&spec(1024), &t);
        let q = quadratic_form(&u, &u, s, None).unwrap();
        let scaled = quadratic_form(&u.scale(lambda), &u.scale(lambda), s, None).unwrap();
        prop_assert!(q > 0.0);
        prop_assert!((scaled - lambda * lambda * q).abs() <= 1e-12 * lambda * lambda * q + 1e-300);
    }

    #[test]
    fn partial_sums_grow_with_cutoff(t in terms(), s in 0.1..2.4f64) {
        let u = gaussians(&spec(1024), &t);
        let cutoffs = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        let sums = partial_sums(&u, &u, s, &cutoffs).unwrap();
        for w in sums.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-14), "{:?}", sums);
        }
    }

    #[test]
    fn interpolation_inequality(t in terms(), s in 0.3..2.4f64, frac in 0.05..0.95f64) {
        let u = gaussians(&spec(1024), &t);
        let r = interpolation_ratio(&u, frac * s, s).unwrap();
        prop_assert!(r > 0.0 && r <= 1.0 + 1e-10, "ratio {r}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn phi_is_non_negative(t in terms(), s in 0.1..1.45f64) {
        prop_assume!((s - 1.0).abs() > 1e-3);
        let u = gaussians(&spec(512), &t);
        let phi = phi_integral(&u, FractionalOrder::new(s).unwrap(), 1e-2).unwrap();
        prop_assert!(phi.value >= -phi.error_estimate, "{phi:?}");
    }

    #[test]
    fn gagliardo_symmetric(a in terms(), b in terms(), s in 0.1..0.95f64) {
        let sp = spec(512);
        let (u, v) = (gaussians(&sp, &a), gaussians(&sp, &b));
        let uv = gagliardo_form(&u, &v, s, 1e-3).unwrap();
        let vu = gagliardo_form(&v, &u, s, 1e-3).unwrap();
        let scale = gagliardo_form(&u, &u, s, 1e-3).unwrap() + gagliardo_form(&v, &v, s, 1e-3).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-10 * scale);
    }

    #[test]
    fn seeded_sweep_is_reproducible(seed in any::<u64>()) {
        let sp = GridSpec::new(1, 20.0, 1024).unwrap();
        let a = interp_sweep(2, seed, 1.45, &sp).unwrap();
        let b = interp_sweep(2, seed, 1.45, &sp).unwrap();
        prop_assert_eq!(&a.results, &b.results);
        prop_assert_eq!(&a.verdicts, &b.verdicts);

        let mut first = Vec::new();
        let mut second = Vec::new();
        emit_report(&a, &mut first, false).unwrap();
        emit_report(&a, &mut second, false).unwrap();
        prop_assert_eq!(&first, &second);
        first.clear();
        second.clear();
        emit_report(&a, &mut first, true).unwrap();
        emit_report(&a, &mut second, true).unwrap();
        prop_assert_eq!(first, second);
    }
}
