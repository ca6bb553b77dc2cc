use lcsample::hard_family::{run_identification_experiment, verify_family, HardFamily, MemberSamplers};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Pinned by adaptive quadrature here and, independently, by an mpmath
// evaluation of the defining curvature sum; the two agree to 1e-14.
const WINDOW_MASS_1E6_FIRST: f64 = 0.102_655_657_058_453_96;
const POPULATION_RATE_1E3: f64 = 0.183_454_257_564_322_86;

#[test]
fn window_mass_regression() {
    let fam = HardFamily::new(1e6).unwrap();
    assert_eq!(fam.window(1), (1.0 / 2000.0, 1.0 / 1000.0));
    let mass = fam.member_mass_in_window(1, 1e-10).unwrap();
    assert!((mass - WINDOW_MASS_1E6_FIRST).abs() < 1e-9, "{mass}");
}

#[test]
fn population_rate_regression() {
    let fam = HardFamily::new(1e3).unwrap();
    let rate = fam.population_identification_rate(1e-10).unwrap();
    assert!((rate - POPULATION_RATE_1E3).abs() < 1e-9, "{rate}");
}

#[test]
fn window_mass_bound_for_every_member() {
    for kappa in [1e3, 1e6] {
        let fam = HardFamily::new(kappa).unwrap();
        for i in 1..=fam.m() {
            assert!(fam.member_mass_in_window(i, 1e-10).unwrap() >= 1.0 / 32.0);
        }
    }
}

#[test]
fn identification_with_exact_sampler_matches_population_rate() {
    let fam = HardFamily::new(1e3).unwrap();
    let mut samplers = MemberSamplers::new(&fam).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let r = run_identification_experiment(&fam, 40_000, &mut rng, |i, rng| samplers.sample(i, rng)).unwrap();
    let se = r.standard_error(POPULATION_RATE_1E3);
    assert!((r.rate - POPULATION_RATE_1E3).abs() <= 3.0 * se, "{}", r.rate);
    assert!(r.rate >= 1.0 / 32.0);
}

#[test]
fn verification_report_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let report = verify_family(1e6, 5_000, &mut rng).unwrap();
    assert_eq!(report.m, 11);
    assert_eq!(report.lemma1_max_dev, 0.0);
    assert!(report.degeneracy_max <= 5);
    report.check().unwrap();
}

#[test]
fn large_kappa_family_is_well_formed() {
    let fam = HardFamily::new(1e12).unwrap();
    assert_eq!(fam.m(), 21);
    for v in fam.members() {
        v.check_class(1.0, 1e12).unwrap();
    }
    for i in 1..fam.m() {
        let (a, b) = fam.curvature_telescoping(i).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
        assert!(fam.off_band_max_deviation(i, 2000).unwrap() <= 1e-9);
    }
}
