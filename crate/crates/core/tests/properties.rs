use magsuper::analysis::{schatten_from_singular, schur_bound_dense, spectral_norm};
use magsuper::channels::{apply_channel, build_partition_symbols, ChannelSpec};
use magsuper::frames::FrameSystem;
use magsuper::geometry::{circulation, flux, transversal_gauge, GradientTerm, MagneticField, STOKES_SIGN};
use magsuper::io::{self, Array};
use magsuper::phase_space::{l2_norm, make_grid, GridSpec, SymbolGrid};
use magsuper::rng::{random_kernel, random_matrix, random_psd, seeded};
use magsuper::weights::{builtin_corpus, self_check};
use magsuper::weyl::{gauge_covariance_residual, moyal, weyl_dequantize, weyl_kernel, QuantizationContext};
use magsuper::window::FrameWindow;
use magsuper::C64;
use proptest::prelude::*;

fn ctx(g: GridSpec, b: f64) -> QuantizationContext {
    if b == 0.0 { QuantizationContext::zero_field(g) } else { QuantizationContext::constant(g, b).unwrap() }
}

fn gauss(g: GridSpec, c: [f64; 4]) -> SymbolGrid {
    SymbolGrid::from_fn(g, move |x, xi| {
        let dx: f64 = x.iter().enumerate().map(|(i, v)| (v - if i == 0 { c[0] } else { c[1] }).powi(2)).sum();
        let dxi: f64 = xi.iter().enumerate().map(|(i, v)| (v - if i == 0 { c[2] } else { c[3] }).powi(2)).sum();
        C64::new((-(dx + dxi) / 2.0).exp(), 0.0)
    })
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    [-3.0..3.0f64, -3.0..3.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn circulation_is_antisymmetric(x in point(), y in point(), b in 0.1..3.0f64) {
        let a = transversal_gauge(&MagneticField::constant(b));
        prop_assert_eq!(circulation(&a, &x, &y).unwrap(), -circulation(&a, &y, &x).unwrap());
    }

    #[test]
    fn stokes_cocycle(x in point(), y in point(), z in point(), b in -2.0..2.0f64) {
        let f = MagneticField::constant(b);
        let a = transversal_gauge(&f);
        let s = circulation(&a, &x, &y).unwrap() + circulation(&a, &y, &z).unwrap() + circulation(&a, &z, &x).unwrap();
        prop_assert!((s - STOKES_SIGN * flux(&f, &x, &y, &z).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn dequantize_inverts_quantize_on_any_kernel(seed in any::<u64>(), magnetic in any::<bool>()) {
        let g = make_grid(2, 8, 2.0).unwrap();
        let c = ctx(g, if magnetic { 1.0 } else { 0.0 });
        let t = random_kernel(&mut seeded(seed), g);
        let back = weyl_kernel(&weyl_dequantize(&t, &c).unwrap(), &c).unwrap();
        prop_assert!(back.rel_diff(&t) < 1e-12);
    }

    #[test]
    fn gauge_covariance_for_random_bumps(amp in -2.0..2.0f64, cx in -1.0..1.0f64, cy in -1.0..1.0f64, w in 0.5..1.5f64, b in 0.0..1.5f64) {
        let g = make_grid(2, 8, 3.0).unwrap();
        let phi = gauss(g, [0.2, -0.1, 0.0, 0.3]);
        let r = gauge_covariance_residual(&phi, &ctx(g, b), GradientTerm::gaussian_bump(amp, [cx, cy], w)).unwrap();
        prop_assert!(r < 1e-8, "{}", r);
    }

    #[test]
    fn full_box_parseval_on_random_vectors(seed in any::<u64>()) {
        let g = make_grid(1, 32, 4.0).unwrap();
        let fs = FrameSystem::new(&QuantizationContext::zero_field(g), FrameWindow::standard(1)).unwrap();
        let f: Vec<C64> = random_matrix(&mut seeded(seed), 32).column(0).iter().copied().collect();
        let e = fs.analyze(&f, &fs.full_box()).unwrap().energy();
        let n2 = l2_norm(&g, &f).powi(2);
        prop_assert!((e - n2).abs() < 1e-10 * n2);
    }

    #[test]
    fn moyal_is_associative(c in prop::array::uniform4(-0.5..0.5f64), b in 0.0..1.0f64) {
        let g = make_grid(2, 8, 3.0).unwrap();
        let q = ctx(g, b);
        let (p1, p2, p3) = (gauss(g, c), gauss(g, [c[1], c[0], c[3], c[2]]), gauss(g, [0.0, 0.1, -0.2, 0.0]));
        let lhs = moyal(&moyal(&p1, &p2, &q).unwrap(), &p3, &q).unwrap();
        let rhs = moyal(&p1, &moyal(&p2, &p3, &q).unwrap(), &q).unwrap();
        prop_assert!(lhs.rel_diff(&rhs) < 1e-8);
    }

    #[test]
    fn partition_is_quadratic_unity(count in 1usize..7) {
        let (_, r) = build_partition_symbols(count, make_grid(1, 32, 4.0).unwrap(), None).unwrap();
        prop_assert!(r < 1e-12);
    }

    #[test]
    fn channel_preserves_trace(seed in any::<u64>(), count in 1usize..5, rank in 1usize..6) {
        let g = make_grid(1, 16, 2.0).unwrap();
        let spec = ChannelSpec::partition(&QuantizationContext::zero_field(g), count, None).unwrap();
        let rho = random_psd(&mut seeded(seed), g, rank);
        let out = apply_channel(&spec, &rho).unwrap();
        prop_assert!((out.trace() - rho.trace()).norm() < 1e-8 * rho.trace().norm());
    }

    #[test]
    fn schur_bounds_the_spectral_norm(seed in any::<u64>(), width in 0.5..8.0f64) {
        let m = random_matrix(&mut seeded(seed), 24).map_with_location(|i, j, v| v * (-((i as f64 - j as f64).powi(2)) / width).exp());
        prop_assert!(schur_bound_dense(&m) >= spectral_norm(&m) * (1.0 - 1e-12));
    }

    #[test]
    fn schatten_norms_decrease_in_p(sv in prop::collection::vec(0.0..10.0f64, 1..20)) {
        let s: Vec<f64> = [1.0, 2.0, 4.0, f64::INFINITY].iter().map(|p| schatten_from_singular(&sv, *p)).collect();
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1] * (1.0 - 1e-12)));
    }

    #[test]
    fn mpdo_round_trip(seed in any::<u64>(), d in 1usize..3) {
        let g = if d == 1 { make_grid(1, 16, 2.0).unwrap() } else { make_grid(2, 8, 2.0).unwrap() };
        let t = random_kernel(&mut seeded(seed), g);
        match io::decode(&io::encode(&Array::Kernel(t.clone()))).unwrap() {
            Array::Kernel(k) => prop_assert_eq!(k, t),
            other => prop_assert!(false, "decoded {}", other.kind_name()),
        }
    }
}

#[test]
fn corpus_weights_satisfy_their_certificates() {
    for m in builtin_corpus() {
        assert!(self_check(&m).unwrap().pass, "{}", m.label());
    }
}
