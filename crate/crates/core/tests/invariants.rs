use cavsim::css::*;
use cavsim::engine::lindblad_derivative;
use cavsim::fock::*;
use cavsim::reduction::block_decompose;
use cavsim::schedule::Schedule;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const DIM: usize = 16;

// Random normalized states supported below level 8, away from the truncation edge.
fn low_state() -> impl Strategy<Value = StateVector> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8).prop_filter_map("zero vector", |amps| {
        let mut v = DVector::<C64>::zeros(DIM);
        for (k, (re, im)) in amps.into_iter().enumerate() {
            v[k] = C64::new(re, im);
        }
        StateVector::new(Layout::single(SINGLE_MODE, DIM).unwrap(), v).unwrap().normalize().ok()
    })
}

fn random_density(layout: Layout) -> impl Strategy<Value = DensityMatrix> {
    let d = layout.dim();
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d * d).prop_map(move |xs| {
        let a = DMatrix::from_iterator(d, d, xs.into_iter().map(|(r, i)| C64::new(r, i)));
        let m = &a * a.adjoint();
        let tr = m.trace();
        DensityMatrix::new(layout.clone(), m / tr).unwrap()
    })
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_fidelity_is_a_fidelity(n in 1u32..40) {
        let f = css_fidelity_closed(n);
        prop_assert!(f > 0.9 && f <= 1.0 + 1e-12, "F({n}) = {f}");
    }

    #[test]
    fn closed_fidelity_matches_overlap(n in 1u32..=12) {
        let dim = 2 * n as usize + 40;
        let psi = quadrature_jump_state(n, dim).unwrap();
        let cat = cat_state(C64::new((n as f64 / 2.0).sqrt(), 0.0), Parity::of(n), dim).unwrap();
        prop_assert!((fidelity(&psi, &cat).unwrap() - css_fidelity_closed(n)).abs() < 1e-10);
    }

    #[test]
    fn both_unravelings_share_the_no_jump_generator(psi in low_state()) {
        let p = CssParams::unit_gamma(DIM).unwrap();
        let rho = psi.to_density();
        let closed = no_jump_generator(&p, NoJumpChannels::Both, &rho).unwrap();
        for set in [ChannelSet::Quadrature, ChannelSet::Mode] {
            let g = no_jump_generator_of(&css_model(&p, set).unwrap(), &rho).unwrap();
            prop_assert!(max_abs(&(g.entries() - closed.entries())) < 1e-12);
        }
    }

    #[test]
    fn frozen_minus_leaves_plus_only_drift(psi in low_state()) {
        let p = CssParams::unit_gamma(DIM).unwrap();
        let rho = psi.to_density();
        let frozen = nkf_transform(&css_model(&p, ChannelSet::Quadrature).unwrap(), L_MINUS).unwrap();
        let g = no_jump_generator_of(&frozen, &rho).unwrap();
        let closed = no_jump_generator(&p, NoJumpChannels::PlusOnly, &rho).unwrap();
        prop_assert!(max_abs(&(g.entries() - closed.entries())) < 1e-12);
    }

    #[test]
    fn freeze_unfreeze_round_trip(which in prop::sample::select(vec![L_PLUS, L_MINUS])) {
        let p = CssParams::unit_gamma(8).unwrap();
        let m = css_model(&p, ChannelSet::Quadrature).unwrap();
        let frozen = nkf_freeze(&m, which).unwrap();
        prop_assert!(!frozen.model.channel_labels().contains(&which));
        prop_assert_eq!(frozen.unfreeze().unwrap(), m);
    }

    #[test]
    fn lindblad_derivative_is_traceless_and_hermitian(
        rho in random_density(Layout::single(SINGLE_MODE, 6).unwrap()),
    ) {
        let p = CssParams::unit_gamma(6).unwrap();
        for set in [ChannelSet::Quadrature, ChannelSet::Mode] {
            let d = lindblad_derivative(&css_model(&p, set).unwrap(), &rho).unwrap();
            prop_assert!(d.trace().norm() < 1e-12);
            prop_assert!(d.hermiticity_defect() < 1e-12);
        }
    }

    #[test]
    fn block_reassembly_is_exact(rho in random_density(Layout::new([("e", 3), ("h", 2), ("b", 3)]).unwrap())) {
        let blocks = block_decompose(&rho, "b").unwrap();
        let back = blocks.reassemble(rho.layout(), "b").unwrap();
        prop_assert!(max_abs(&(back - rho.entries())) == 0.0);
        prop_assert!(blocks.hermiticity_defect() < 1e-14);
    }

    #[test]
    fn layout_index_round_trip(dims in prop::collection::vec(2usize..5, 1..4), seed in 0usize..1000) {
        let layout = Layout::new(dims.iter().enumerate().map(|(i, d)| (format!("m{i}"), *d))).unwrap();
        let idx = seed % layout.dim();
        let occ = layout.occupations(idx);
        prop_assert_eq!(layout.index_of(&occ), idx);
        // first mode most significant
        prop_assert_eq!(occ[0], idx / layout.stride(0));
    }

    #[test]
    fn schedule_lookup_is_piecewise_constant(values in prop::collection::vec(-5.0f64..5.0, 2..40), frac in 0.0f64..0.999) {
        let dt = 0.125;
        let s = Schedule::from_real("s", 1.0, dt, &values, UnitTag::Rate).unwrap();
        for (k, v) in values.iter().enumerate() {
            prop_assert_eq!(s.real_at(s.time(k) + frac * dt), *v);
        }
        prop_assert_eq!(s.real_at(-10.0), values[0]);
        prop_assert_eq!(s.real_at(1e6), *values.last().unwrap());
    }

    #[test]
    fn sequence_text_round_trip(
        jumps in prop::collection::vec(any::<bool>(), 1..12),
        gap in prop::option::of((0usize..12, 1u32..16)),
    ) {
        let signs = jumps.iter().map(|p| if *p { JumpSign::Plus } else { JumpSign::Minus }).collect();
        let mut seq = JumpSequence::zero_gap(signs);
        if let Some((i, g)) = gap {
            let at = i % seq.len();
            seq = seq.with_gap_after(at, g as f64 / 8.0).unwrap();
        }
        prop_assert_eq!(JumpSequence::parse(&seq.to_string()).unwrap(), seq);
    }

    #[test]
    fn wider_gate_admits_more(gaps in prop::collection::vec(0.0f64..2.0, 0..30), a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let count = |g: Gate| gaps.iter().filter(|x| g.admits(**x)).count();
        let (narrow, wide) = (count(Gate::MaxGap { max_gap: lo }), count(Gate::MaxGap { max_gap: hi }));
        prop_assert!(narrow <= wide);
        prop_assert_eq!(count(Gate::None), gaps.len());
    }
}

