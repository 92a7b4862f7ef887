use lr_fermi::one_particle::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cosine2() -> PotentialModel {
    PotentialModel::cosine(2.0, 1.0).unwrap()
}

#[test]
fn series_matches_grid_oracle() {
    let p = GaussianPacket::centered(1, 1.0).unwrap();
    for t in [0.1, 0.25, 0.5, 1.0] {
        let est = dyson_overlap(&p, &Probe::Point(vec![0.0]), &cosine2(), t, 8, &SimplexQuadrature::default()).unwrap();
        let oracle = oracle_point_values(&p, &cosine2(), t, &[0.0], &OracleSettings::default()).unwrap()[0];
        let diff = (est.value - oracle.value).norm();
        let budget = est.tail_bound + est.quadrature_error_estimate + oracle.error_estimate;
        eprintln!("t={t} diff={diff:e} tail={:e} quad={:e} oracle={:e}", est.tail_bound, est.quadrature_error_estimate, oracle.error_estimate);
        assert!(diff <= budget + 1e-3);
    }
}

#[test]
fn modulus_contract_on_random_tuples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=5);
        let t: f64 = rng.gen_range(0.01..3.0);
        let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..t)).collect();
        times.sort_by(f64::total_cmp);
        let momenta: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let p = GaussianPacket::new(y, rng.gen_range(0.3..2.0)).unwrap();
        let a = dyson_term_amplitude(t, &times, &momenta, &p, &x).unwrap();
        let m = dyson_term_magnitude(t, &times, &momenta, &p, &x).unwrap();
        assert!((a.norm() - m).abs() <= 1e-10 * m, "{} vs {m}", a.norm());
    }
}

#[test]
fn magnitude_is_shift_covariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let shift: f64 = rng.gen_range(-50.0..50.0);
        let (y, x) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let times = [0.2, 0.7];
        let ks = [vec![1.0], vec![-0.5]];
        let a = dyson_term_magnitude(1.0, &times, &ks, &GaussianPacket::new(vec![y], 1.0).unwrap(), &[x]).unwrap();
        let b = dyson_term_magnitude(1.0, &times, &ks, &GaussianPacket::new(vec![y + shift], 1.0).unwrap(), &[x + shift]).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }
}

#[test]
fn oracle_norm_drift_over_many_steps() {
    let p = GaussianPacket::centered(1, 1.0).unwrap();
    let g = GridFunction::from_packet(&p, 64.0, 512).unwrap();
    let out = grid_propagate(&g, &cosine2(), 1.0, 10_000).unwrap();
    assert!((out.norm() - g.norm()).abs() <= 1e-12);
}

#[test]
fn free_point_value_matches_oracle() {
    let p = GaussianPacket::centered(1, 1.0).unwrap();
    let o = oracle_point_values(&p, &PotentialModel::free(1), 0.5, &[2.0], &OracleSettings::default()).unwrap()[0];
    let m = free_kernel_magnitude(&p, &[2.0], 0.5).unwrap();
    assert!((o.value.norm() - m).abs() < 1e-6);
    let _ = Complex64::new(0.0, 0.0);
}
