use hiwave_core::tokenizer::{avg_abs, gem, GEM_EPS, GEM_P_MAX, GEM_P_MIN};
use hiwave_core::*;
use proptest::prelude::*;

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, len)
}

fn graph_gem(x: &[f64], p: f64) -> f64 {
    let mut g = Graph::new();
    let c = g.param(Tensor::new(vec![1, x.len()], x.to_vec()).unwrap());
    let p = g.param(Tensor::from_vec(vec![p]));
    let y = g.gem(c, p, GEM_EPS, GEM_P_MIN, GEM_P_MAX).unwrap();
    g.value(y).data()[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn packets_reconstruct_and_conserve_energy(x in signal(16), depth in 1usize..=4, db4 in any::<bool>()) {
        let f = WaveletFilterPair::new(if db4 { WaveletKind::Db4 } else { WaveletKind::Db2 });
        let tree = wpd(&x, &f, depth).unwrap();
        let back = tree.reconstruct(&f).unwrap();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10, "reconstruction error {err}");
        let e: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!((tree.energy() - e).abs() <= 1e-9 * e.max(1.0));
    }

    #[test]
    fn gem_is_monotone_in_p(x in prop::collection::vec(-5.0..5.0f64, 1..16)) {
        let (a, b, c) = (gem(&x, 1.0, 0.0), gem(&x, 2.0, 0.0), gem(&x, 4.0, 0.0));
        let max = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let tol = 1e-12 * max.max(1.0);
        prop_assert!(a <= b + tol && b <= c + tol && c <= max + tol);
    }

    #[test]
    fn gem_ignores_signs_and_order(x in prop::collection::vec(-5.0..5.0f64, 2..16), p in 0.5..10.0f64, flips in any::<u16>()) {
        let mut y: Vec<f64> = x.iter().enumerate().map(|(i, v)| if flips >> i & 1 == 1 { -v } else { *v }).collect();
        y.reverse();
        let (a, b) = (graph_gem(&x, p), graph_gem(&y, p));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn graph_gem_matches_scalar_formula(x in prop::collection::vec(-5.0..5.0f64, 1..16), p in 0.1..12.0f64) {
        let (a, b) = (graph_gem(&x, p), gem(&x, p, GEM_EPS));
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }

    #[test]
    fn unit_exponent_without_eps_is_mean_magnitude(x in prop::collection::vec(-5.0..5.0f64, 1..16)) {
        prop_assert!((gem(&x, 1.0, 0.0) - avg_abs(&x)).abs() < 1e-9);
    }

    #[test]
    fn token_dim_matches_closed_form(variant in 0usize..3, depth in 1usize..=3, pyramid in any::<bool>(), avg in any::<bool>()) {
        let depth_set: Vec<usize> = if pyramid { (1..=depth).collect() } else { vec![depth] };
        let cfg = TokenizerConfig {
            variant: [Variant::Baseline, Variant::Hybrid, Variant::Replacement][variant],
            pooling: if avg { Pooling::Avg } else { Pooling::Gem },
            depth_set: depth_set.clone(),
            ..TokenizerConfig::champion()
        };
        let wav: usize = 9 * depth_set.iter().map(|d| 1 << d).sum::<usize>();
        let want = match cfg.variant {
            Variant::Baseline => 144,
            Variant::Hybrid => 144 + wav,
            Variant::Replacement => wav,
        };
        prop_assert_eq!(cfg.token_dim(), want);
        let model = HiWaveModel::build(ModelConfig::default(), cfg.clone(), 0).unwrap();
        prop_assert_eq!(model.count_parameters(), expected_parameter_count(&ModelConfig::default(), &cfg));
    }
}

#[test]
fn gem_exponent_and_input_gradients_match_finite_differences() {
    let x0 = [0.5, -2.0, 1.25, 0.0, 3.0, -0.75];
    let p0 = 3.0;
    let mut g = Graph::new();
    let c = g.param(Tensor::new(vec![1, 6], x0.to_vec()).unwrap());
    let p = g.param(Tensor::from_vec(vec![p0]));
    let y = g.gem(c, p, GEM_EPS, GEM_P_MIN, GEM_P_MAX).unwrap();
    let y = g.sum_all(y).unwrap();
    g.backward(y).unwrap();
    let h = 1e-6;
    let dp = (gem(&x0, p0 + h, GEM_EPS) - gem(&x0, p0 - h, GEM_EPS)) / (2.0 * h);
    let got = g.grad(p).unwrap()[0];
    assert!((got - dp).abs() / dp.abs() < 1e-5, "{got} vs {dp}");
    let gx = g.grad(c).unwrap().to_vec();
    for i in [0, 1, 2, 4, 5] {
        let (mut a, mut b) = (x0, x0);
        a[i] += h;
        b[i] -= h;
        let fd = (gem(&a, p0, GEM_EPS) - gem(&b, p0, GEM_EPS)) / (2.0 * h);
        assert!((gx[i] - fd).abs() / fd.abs() < 1e-5, "x[{i}]: {} vs {fd}", gx[i]);
    }
}

#[test]
fn constant_signal_concentrates_in_first_packet() {
    for kind in [WaveletKind::Db2, WaveletKind::Db4] {
        let tree = wpd(&[1.0; 16], &WaveletFilterPair::new(kind), 3).unwrap();
        for (i, packet) in tree.packets().enumerate() {
            for v in packet {
                if i == 0 {
                    assert!((v - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
                } else {
                    assert!(v.abs() < 1e-12);
                }
            }
        }
    }
}
