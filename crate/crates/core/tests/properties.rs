use proptest::prelude::*;

use spectral_mp::coefficients::{project_theta, Catalog, CatalogKind, CoefficientSet, Mollified, ShiftedDrift, Truncated};
use spectral_mp::diagnostics::{
    aldous_statistic, modulus_w_prime, total_oscillation, weak_distance, StoppingRule,
};
use spectral_mp::generator::{eval_generator, MfTrack, Profile, TestFunction, TruncationSpec};
use spectral_mp::noise::{JumpMeasureSpec, RandomStream};
use spectral_mp::simulator::{simulate_ensemble, simulate_path, InitialLaw, NormKind, SamplePath, SimConfig};
use spectral_mp::spectral_space::{HilbertVector, SpectralBasis};

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n)
}

fn random_path(seed: u64, m: usize) -> SamplePath {
    let mut s = RandomStream::new(seed, 0);
    let times: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let mut x = vec![0.0; 2];
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            if s.uniform() < 0.2 {
                x[0] += s.normal();
            }
            x[1] += 0.1 * s.normal();
            x.clone()
        })
        .collect();
    SamplePath::from_rows(times, &rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mollification_preserves_constants(n in 1usize..6, value in coeffs(6), x in coeffs(6)) {
        struct Constant(Vec<f64>);
        impl CoefficientSet for Constant {
            fn n_modes(&self) -> usize { self.0.len() }
            fn n_noise(&self) -> usize { self.0.len() }
            fn drift(&self, _x: &[f64], out: &mut [f64]) { out.copy_from_slice(&self.0) }
            fn diffusion(&self, _x: &[f64]) -> spectral_mp::coefficients::Diffusion {
                spectral_mp::coefficients::Diffusion::Diagonal(self.0.clone())
            }
            fn jump(&self, _m: &[f64], _x: &[f64], out: &mut [f64]) { out.copy_from_slice(&self.0) }
            fn growth(&self) -> spectral_mp::coefficients::GrowthProfile {
                spectral_mp::coefficients::GrowthProfile { linear_growth: 1.0 }
            }
            fn jump_gamma(&self, _m: &[f64]) -> f64 { 1.0 }
            fn jump_zeta(&self, _b: f64, _m: &[f64]) -> f64 { 1.0 }
        }
        let basis = SpectralBasis::harmonic_heat(6);
        let c = Constant(value.clone());
        let m = Mollified::new(&c, n, &basis).unwrap();
        let d = m.drift_vec(&x);
        for (a, b) in d.coeffs().iter().zip(&value) {
            prop_assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn truncation_is_identity_inside_the_ball(x in coeffs(4), radius in 0.1..50.0f64) {
        let basis = SpectralBasis::harmonic_heat(4);
        let c = Catalog::new(CatalogKind::BoundedNemytskii { amplitude: 1.0, noise_scale: 0.5, jump_scale: 1.0 }, &basis);
        let t = Truncated::new(&c, radius, &basis);
        if basis.norm_k(&x) <= radius {
            prop_assert_eq!(t.drift_vec(&x), c.drift_vec(&x));
            prop_assert_eq!(t.jump_vec(&[0.7], &x), c.jump_vec(&[0.7], &x));
        } else {
            prop_assert!(basis.norm_k(t.drift_vec(&x).coeffs()) <= basis.norm_k(c.drift_vec(&x).coeffs()) + 1e-12);
        }
    }

    #[test]
    fn projection_round_trips(x in coeffs(5), n in 1usize..=5) {
        let p = project_theta(&HilbertVector::new(x.clone()), n);
        prop_assert_eq!(&p[..], &x[..n]);
        prop_assert_eq!(project_theta(&HilbertVector::new(p.clone()), n), p);
    }

    #[test]
    fn generator_is_affine_in_the_drift(x in coeffs(3), shift in coeffs(3), scale in 0.2..3.0f64) {
        let basis = SpectralBasis::harmonic_heat(3);
        let c = Catalog::new(CatalogKind::BoundedNemytskii { amplitude: 1.0, noise_scale: 0.7, jump_scale: 0.3 }, &basis);
        let shifted = ShiftedDrift::new(&c, HilbertVector::new(shift.clone()));
        let f = TestFunction::new(Profile::Saturating { scale }, vec![1.0, -0.5, 0.25]);
        let spec = JumpMeasureSpec::single_atom(1.5, vec![0.4]);
        let h = TruncationSpec::default();
        let base = eval_generator(&f, &x, &c, &basis, &spec, &h);
        let moved = eval_generator(&f, &x, &shifted, &basis, &spec, &h);
        let (_, g1, _) = f.profile.eval(f.pairing(&x));
        let expected = base + g1 * f.pairing(&shift);
        prop_assert!((moved - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
    }

    #[test]
    fn martingale_increments_telescope(seed in 0u64..1000, a in 0usize..10, b in 0usize..10, c in 0usize..10) {
        let mut idx = [a, b, c];
        idx.sort();
        let basis = SpectralBasis::harmonic_heat(2);
        let cat = Catalog::new(CatalogKind::Ou { noise_scale: 1.0 }, &basis);
        let path = random_path(seed, 10);
        let f = TestFunction::new(Profile::Bump { center: 0.0, width: 2.0 }, vec![1.0, 1.0]);
        let track = MfTrack::new(&f, &path, &cat, &basis, &JumpMeasureSpec::none(), &TruncationSpec::default());
        let whole = track.increment(idx[0], idx[2], None);
        let parts = track.increment(idx[0], idx[1], None) + track.increment(idx[1], idx[2], None);
        prop_assert!((whole - parts).abs() < 1e-12);
    }

    #[test]
    fn w_prime_is_monotone_and_bounded(seed in 0u64..1000, m in 2usize..30, t1 in 0.0..1.0f64, t2 in 0.0..1.0f64) {
        let path = random_path(seed, m);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = modulus_w_prime(&path, lo, 1.0);
        let b = modulus_w_prime(&path, hi, 1.0);
        prop_assert!(a <= b);
        prop_assert!(b <= total_oscillation(&path, 1.0));
    }
}

fn small_ensemble(seed: u64) -> spectral_mp::simulator::Ensemble {
    let basis = SpectralBasis::harmonic_heat(3);
    let c = Catalog::new(CatalogKind::Ou { noise_scale: 1.0 }, &basis);
    let cfg = SimConfig::new(0.5, 0.01, InitialLaw::Point { coeffs: vec![0.5] });
    simulate_ensemble(&cfg, &c, &basis, &JumpMeasureSpec::none(), seed, 64).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn aldous_estimates_are_probabilities(seed in 0u64..100, h in 0.0..0.5f64, eps in 0.0..2.0f64) {
        let e = small_ensemble(seed);
        let p = aldous_statistic(&e, StoppingRule::Deterministic { time: 0.1 }, h, eps);
        prop_assert!((0.0..=1.0).contains(&p.probability));
        let all = aldous_statistic(&e, StoppingRule::FirstHitting { level: 0.6, cap: 0.3 }, h, 0.0);
        prop_assert_eq!(all.probability, 1.0);
    }

    #[test]
    fn weak_distance_is_a_pseudometric(s1 in 0u64..50, s2 in 50u64..100, s3 in 100u64..150) {
        let (a, b, c) = (small_ensemble(s1), small_ensemble(s2), small_ensemble(s3));
        let panel = vec![
            TestFunction::new(Profile::Saturating { scale: 1.0 }, vec![1.0]),
            TestFunction::new(Profile::Bump { center: 0.0, width: 1.0 }, vec![0.0, 1.0]),
        ];
        let times = [0.1, 0.5];
        let d = |x: &_, y: &_| weak_distance(x, y, &panel, &times).unwrap().distance;
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }

    #[test]
    fn enlarging_levels_keeps_the_prefix(index in 0u64..10_000) {
        let basis = SpectralBasis::new((1..=4).map(|k| 1.0 / k as f64).collect(), vec![0.0; 4]).unwrap();
        let c = Catalog::new(CatalogKind::Linear { rate: 0.5, noise_scale: 1.0, jump_scale: 0.5 }, &basis);
        let spec = JumpMeasureSpec::single_atom(2.0, vec![0.5]);
        let mut cfg = SimConfig::new(0.5, 1e-2, InitialLaw::Point { coeffs: vec![1.0, 0.5] });
        cfg.levels = vec![2.0];
        let short = simulate_path(&cfg, &c, &basis, &spec, &mut RandomStream::new(1, index)).unwrap();
        cfg.levels = vec![2.0, 4.0, 1e6];
        let long = simulate_path(&cfg, &c, &basis, &spec, &mut RandomStream::new(1, index)).unwrap();
        let end = long.tau_index(2.0, NormKind::K, &basis).unwrap_or(long.len() - 1);
        for j in 0..=end {
            prop_assert_eq!(short.state(j), long.state(j));
        }
        let stopped = long.stopped_at(long.tau_index(4.0, NormKind::K, &basis));
        prop_assert_eq!(stopped.tau_z(2.0, NormKind::K, &basis), long.tau_z(2.0, NormKind::K, &basis));
    }
}

#[test]
fn zero_coefficients_follow_the_semigroup_exactly() {
    let basis = SpectralBasis::harmonic_heat(5);
    let c = Catalog::new(CatalogKind::Zero, &basis);
    let x0 = HilbertVector::new(vec![1.0, -0.5, 0.25, 0.0, 2.0]);
    let cfg = SimConfig::new(0.1, 1e-3, InitialLaw::point(&x0));
    let path = simulate_path(&cfg, &c, &basis, &JumpMeasureSpec::none(), &mut RandomStream::new(0, 0)).unwrap();
    let mut x = x0.clone();
    for i in 1..path.len() {
        x = basis.semigroup_apply(1e-3, &x);
        for (a, b) in path.state(i).iter().zip(x.coeffs()) {
            assert_eq!(a, b);
        }
    }
}
