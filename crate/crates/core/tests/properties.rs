use num_complex::Complex64;
use phaseless::config::ExperimentConfig;
use phaseless::forward_freq::{
    extract_line_integral, incident_field, AsymptoticSignature, SpectralTrace,
};
use phaseless::geometry::{chord_integral, Bump, Chord, GridSpec, Phantom, Vec3};
use phaseless::io::{self, ArrayHeader, Dtype};
use phaseless::phase_retrieval::{blaschke_factor, count_zeros_upper, rectangle_contour, ZeroSet};
use phaseless::radon::{line_parameters, relative_l2};
use phaseless::report::RunReport;
use phaseless::volterra::{convolve, solve_second_kind, uniqueness_mechanism};
use proptest::prelude::*;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn upper_zero() -> impl Strategy<Value = (Complex64, u32)> {
    (-10.0..10.0f64, 0.05..5.0f64, 1u32..=3).prop_map(|(re, im, m)| (Complex64::new(re, im), m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blaschke_is_unimodular_on_the_real_line(zeros in prop::collection::vec(upper_zero(), 1..=6), k in -100.0..100.0f64) {
        let z = ZeroSet::upper(&zeros).unwrap();
        prop_assert!((blaschke_factor(Complex64::new(k, 0.0), &z).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blaschke_is_bounded_by_one_below(zeros in prop::collection::vec(upper_zero(), 1..=4), k in -20.0..20.0f64, y in 0.0..20.0f64) {
        let z = ZeroSet::upper(&zeros).unwrap();
        prop_assert!(blaschke_factor(Complex64::new(k, -y), &z).norm() <= 1.0 + 1e-12);
        prop_assert!(blaschke_factor(Complex64::new(k, y), &z).norm() >= 1.0 - 1e-12);
    }

    #[test]
    fn winding_counts_upper_zeros(
        up in prop::collection::vec((-4.0..4.0f64, 0.5..3.5f64), 0..4),
        down in prop::collection::vec((-4.0..4.0f64, -3.0..-0.2f64), 0..3),
    ) {
        let contour = rectangle_contour(-6.0, 6.0, 0.1, 4.0, 300);
        let vals: Vec<Complex64> = contour
            .iter()
            .map(|k| up.iter().chain(&down).fold(Complex64::new(1.0, 0.0), |a, (x, y)| a * (k - Complex64::new(*x, *y))))
            .collect();
        prop_assert_eq!(count_zeros_upper(&vals).unwrap(), up.len() as i64);
    }

    #[test]
    fn homogeneous_volterra_has_only_the_zero_solution(
        a in -10.0..10.0f64, b in -10.0..10.0f64, w in 0.1..30.0f64, h in 1e-4..1e-2f64,
    ) {
        let kernel: Vec<f64> = (0..300).map(|j| a + b * (w * j as f64 * h).cos()).collect();
        let v = uniqueness_mechanism(&kernel, None, h, 100.0 * h).unwrap();
        prop_assert_eq!(v.lambda_sup, 0.0);
        prop_assert!(v.unique);
    }

    #[test]
    fn volterra_solution_satisfies_its_equation(c in -3.0..3.0f64, f0 in -2.0..2.0f64) {
        let h = 1e-3;
        let kernel: Vec<f64> = (0..500).map(|j| c * (-(j as f64) * h).exp()).collect();
        let rhs = vec![f0; 500];
        let lam = solve_second_kind(&kernel, &rhs, h).unwrap();
        let conv = convolve(&kernel, &lam, h);
        for j in 0..500 {
            prop_assert!((lam[j] + conv[j] - rhs[j]).abs() < 1e-9 * (1.0 + f0.abs()));
        }
    }

    #[test]
    fn extraction_recovers_parity_model(
        c0 in -1.0..1.0f64, c1 in -5.0..5.0f64, c2 in -50.0..50.0f64, d in 1.0..3.0f64,
    ) {
        let c = Chord::new(Vec3::new(-d / 2.0, 0.0, 0.0), Vec3::new(d / 2.0, 0.0, 0.0)).unwrap();
        let ks: Vec<f64> = (0..300).map(|i| 60.0 + i as f64 * 0.5).collect();
        let values = ks
            .iter()
            .map(|k| incident_field(&c, *k) * (1.0 + (c0 + I * c1 / k + c2 / (k * k)) / (2.0 * I * k)))
            .collect();
        let sig = AsymptoticSignature { c: Complex64::new(0.0, 0.0), n: 0, l: d };
        let fit = extract_line_integral(&SpectralTrace { k: ks, values, signature: sig }, &c, (60.0, 210.0)).unwrap();
        prop_assert!((fit.value - c0).abs() < 1e-8);
    }

    #[test]
    fn chord_integral_is_linear_and_reversible(a in 0.0..2.0f64, s in -0.8..0.8f64, z in -0.5..0.5f64) {
        let q = Phantom::new(vec![Bump::new(Vec3::new(0.1, 0.0, 0.0), 0.8, 1.0)], vec![]);
        let qa = Phantom::new(vec![Bump::new(Vec3::new(0.1, 0.0, 0.0), 0.8, a)], vec![]);
        let c = Chord::new(Vec3::new(-1.5, s, z), Vec3::new(1.5, s, z)).unwrap();
        let r = Chord::new(c.receiver, c.source).unwrap();
        let v = chord_integral(&q, &c, 801).unwrap();
        prop_assert!((chord_integral(&qa, &c, 801).unwrap() - a * v).abs() < 1e-12);
        prop_assert!((chord_integral(&q, &r, 801).unwrap() - v).abs() < 1e-12);
    }

    #[test]
    fn line_parameters_agree_for_both_orientations(
        ax in -1.0..1.0f64, ay in -1.0..1.0f64, bx in -1.0..1.0f64, by in -1.0..1.0f64,
    ) {
        prop_assume!((ax - bx).hypot(ay - by) > 1e-3);
        let (t1, s1) = line_parameters((ax, ay), (bx, by)).unwrap();
        let (t2, s2) = line_parameters((bx, by), (ax, ay)).unwrap();
        prop_assert!((0.0..std::f64::consts::PI).contains(&t1));
        prop_assert!((t1 - t2).abs() < 1e-12 && (s1 - s2).abs() < 1e-12);
        prop_assert!((s1 - (ax * t1.cos() + ay * t1.sin())).abs() < 1e-12);
    }

    #[test]
    fn relative_l2_is_scale_invariant(v in prop::collection::vec(-1.0..1.0f64, 2..40), s in 0.1..10.0f64) {
        let w: Vec<f64> = v.iter().map(|x| x * 1.1 + 0.01).collect();
        prop_assume!(w.iter().any(|x| x.abs() > 1e-6));
        let a: Vec<f64> = v.iter().map(|x| x * s).collect();
        let b: Vec<f64> = w.iter().map(|x| x * s).collect();
        prop_assert!((relative_l2(&a, &b) - relative_l2(&v, &w)).abs() < 1e-10);
        prop_assert_eq!(relative_l2(&w, &w), 0.0);
    }

    #[test]
    fn grid_nodes_interpolate_exactly(n in 3usize..12, r in 0.5..3.0f64) {
        let g = GridSpec::covering(r, n);
        let vals: Vec<f64> = (0..g.len()).map(|i| { let p = g.node_of(i); p.x - 2.0 * p.y + 0.5 * p.z }).collect();
        for i in (0..g.len()).step_by(7) {
            prop_assert!((g.interpolate(&vals, g.node_of(i)) - vals[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_arrays_round_trip(v in prop::collection::vec(-1e6..1e6f64, 1..64)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let h = ArrayHeader::new("test", Dtype::F64, vec![v.len()]).with_geometry(vec![0.5], vec![-1.0]);
        io::write_f64_array(&p, &h, &v).unwrap();
        let (h2, back) = io::read_f64_array(&p).unwrap();
        prop_assert_eq!(h2, h);
        prop_assert_eq!(back, v);
    }

    #[test]
    fn configs_round_trip(seed in 0..=i64::MAX as u64, dt in 1e-4..1e-2f64, lo in 10.0..90.0f64) {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.solver.dt = dt;
        cfg.spectral.fit_window = (lo, 150.0);
        prop_assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg.clone());
        cfg.seed = seed | (1 << 63);
        prop_assert!(cfg.validate().is_err());
    }

    #[test]
    fn reports_round_trip(x in -1e3..1e3f64, seed in any::<u64>(), passed in any::<bool>()) {
        let mut r = RunReport::new("prop", 1, seed);
        r.errors.insert("x".into(), x);
        r.flag("f", 8, passed, "detail");
        prop_assert_eq!(RunReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }
}
