use lr_fermi::bounds::InteractionModel;
use lr_fermi::fock::*;
use lr_fermi::one_particle::{GaussianPacket, PotentialModel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn random_mode(rng: &mut ChaCha8Rng, l: usize) -> ModeVector {
    ModeVector::new(
        (0..l)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[test]
fn car_relations_for_random_modes() {
    let lat = Lattice::new(8, 0.5, Boundary::Open).unwrap();
    let one = FockOperator::identity(lat.basis());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f = random_mode(&mut rng, 8);
        let g = random_mode(&mut rng, 8);
        let af = annihilator(&f, &lat).unwrap();
        let ag = annihilator(&g, &lat).unwrap();
        let cg = creator(&g, &lat).unwrap();
        let mixed = af.anticommutator(&cg).unwrap().sub(&one.scale(f.inner(&g))).unwrap();
        let same = af.anticommutator(&ag).unwrap();
        worst = worst.max(mixed.max_abs()).max(same.max_abs());
        assert!((af.norm() - f.norm()).abs() < 1e-12 * f.norm().max(1.0));
    }
    assert!(worst < 1e-12, "worst CAR defect {worst:e}");
}

#[test]
fn number_operator_counts_and_commutes() {
    let lat = Lattice::new(6, 0.5, Boundary::Open).unwrap();
    let n = number_operator(&lat);
    for k in 0..=6 {
        let b = n.block(k);
        let expected = DMatrix::<Complex64>::identity(b.nrows(), b.ncols()) * c(k as f64);
        assert!((b - expected).iter().all(|z| z.norm() < 1e-14));
    }
    let w = InteractionModel::exponential(1.0, 1.0, 1).unwrap();
    let v = PotentialModel::cosine(2.0, 1.0).unwrap();
    let sys = ManyBodySystem::new(&lat, &Region::all(&lat), 1.0, &w, &v).unwrap();
    assert!(sys.hamiltonian().commutator(&n).unwrap().max_abs() < 1e-10);
    assert!(sys.hamiltonian().hermiticity_defect() < 1e-12);
}

#[test]
fn free_dynamics_intertwines_with_one_body_flow() {
    let lat = Lattice::new(8, 0.5, Boundary::Open).unwrap();
    let v = PotentialModel::cosine(2.0, 1.0).unwrap();
    let sys = ManyBodySystem::new(&lat, &Region::empty(), 1.0, &InteractionModel::zero(1), &v).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f = random_mode(&mut rng, 8);
        for t in [0.5, 1.0] {
            let lhs = sys.evolved_annihilator(&f, t).unwrap();
            let rhs = annihilator(&f.evolve(sys.one_body(), t).unwrap(), &lat).unwrap();
            worst = worst.max(lhs.sub(&rhs).unwrap().norm());
        }
    }
    assert!(worst < 1e-10, "intertwining defect {worst:e}");
}

#[test]
fn heisenberg_group_law_and_unitarity() {
    let lat = Lattice::new(5, 0.5, Boundary::Open).unwrap();
    let w = InteractionModel::exponential(1.0, 1.0, 1).unwrap();
    let sys = ManyBodySystem::new(&lat, &Region::all(&lat), 1.0, &w, &PotentialModel::free(1)).unwrap();
    let f = ModeVector::site(&lat, 2).unwrap();
    let a = annihilator(&f, &lat).unwrap();
    let h = sys.hamiltonian();
    let two_steps = heisenberg(&heisenberg(&a, h, 0.3).unwrap(), h, 0.4).unwrap();
    let direct = heisenberg(&a, h, 0.7).unwrap();
    assert!(two_steps.sub(&direct).unwrap().norm() < 1e-10);
    assert!((direct.norm() - 1.0).abs() < 1e-10);
    let back = heisenberg(&direct, h, -0.7).unwrap();
    assert!(back.sub(&a).unwrap().norm() < 1e-10);
}

#[test]
fn discretisation_examples() {
    let lat = Lattice::new(4, 0.5, Boundary::Open).unwrap();
    let ones = discretize(|_| c(1.0), &lat).unwrap();
    for z in ones.coefficients().iter() {
        assert!((z - c(0.5f64.sqrt())).norm() < 1e-15);
    }
    assert!((ones.norm() - 2.0f64.sqrt()).abs() < 1e-15);

    let fine = Lattice::new(14, 0.5, Boundary::Open).unwrap();
    let packet = discretize_packet(&GaussianPacket::new(vec![0.0], 1.0).unwrap(), &fine).unwrap();
    // Riemann sum of |phi|^2 approximates 1 / (2 sqrt(pi) sigma).
    let want = (0.5 / PI.sqrt()).sqrt();
    assert!((packet.norm() - want).abs() < 1e-3, "{}", packet.norm());
    // Nothing beyond 6 sigma.
    let narrow = discretize_packet(&GaussianPacket::new(vec![-3.5], 0.25).unwrap(), &fine).unwrap();
    for (j, z) in narrow.coefficients().iter().enumerate() {
        if (fine.position(j) + 3.5).abs() > 1.5 {
            assert_eq!(z.norm(), 0.0);
        }
    }
}

#[test]
fn periodic_laplacian_spectrum() {
    for (l, h) in [(8usize, 0.5), (12, 0.25)] {
        let lat = Lattice::new(l, h, Boundary::Periodic).unwrap();
        let h1 = one_body_hamiltonian(&lat, &PotentialModel::free(1)).unwrap();
        let mut got: Vec<f64> = h1.map(|z| z.re).symmetric_eigenvalues().iter().copied().collect();
        got.sort_by(f64::total_cmp);
        let mut want: Vec<f64> = (0..l)
            .map(|m| (2.0 - 2.0 * (2.0 * PI * m as f64 / l as f64).cos()) / (h * h))
            .collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10 * b.max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn lattice_eigenvalue_converges_quadratically() {
    // Lowest periodic mode with m = 1 on a box of length 2 pi: continuum value 1.
    let err = |l: usize| {
        let h = 2.0 * PI / l as f64;
        (2.0 - 2.0 * (2.0 * PI / l as f64).cos()) / (h * h) - 1.0
    };
    let lat = Lattice::new(12, 2.0 * PI / 12.0, Boundary::Periodic).unwrap();
    let h1 = one_body_hamiltonian(&lat, &PotentialModel::free(1)).unwrap();
    let mut ev: Vec<f64> = h1.map(|z| z.re).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    assert!((ev[1] - 1.0 - err(12)).abs() < 1e-12);
    let ratio = err(6) / err(12);
    assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn smeared_interaction_respects_norm_bound() {
    let lat = Lattice::new(8, 0.5, Boundary::Open).unwrap();
    let w = InteractionModel::exponential(1.0, 1.0, 1).unwrap();
    for region in [Region::all(&lat), Region::interval(2, 5, &lat).unwrap()] {
        let op = smeared_interaction(&lat, &region, 1.0, &w).unwrap();
        let bound = smeared_interaction_norm_bound(&lat, &region, 1.0, &w).unwrap();
        assert!(op.norm() <= bound * (1.0 + 1e-12), "{} > {bound}", op.norm());
        assert!(op.hermiticity_defect() < 1e-14);
    }
    assert_eq!(smeared_interaction(&lat, &Region::empty(), 1.0, &w).unwrap().max_abs(), 0.0);
}

#[test]
fn f_function_vanishes_without_interaction() {
    let lat = Lattice::new(6, 0.5, Boundary::Open).unwrap();
    let f = ModeVector::site(&lat, 1).unwrap();
    let g = ModeVector::site(&lat, 4).unwrap();
    let v = PotentialModel::free(1);
    let w = InteractionModel::exponential(1.0, 1.0, 1).unwrap();
    let zero_w = f_function(&f, &g, 0.7, &lat, &Region::all(&lat), 1.0, &InteractionModel::zero(1), &v).unwrap();
    let empty = f_function(&f, &g, 0.7, &lat, &Region::empty(), 1.0, &w, &v).unwrap();
    let at_zero = f_function(&f, &g, 0.0, &lat, &Region::all(&lat), 1.0, &w, &v).unwrap();
    assert!(zero_w < 1e-12 && empty < 1e-12 && at_zero < 1e-12, "{zero_w} {empty} {at_zero}");
    let positive = f_function(&f, &g, 0.7, &lat, &Region::all(&lat), 1.0, &w, &v).unwrap();
    assert!(positive > 1e-6);
}

#[test]
fn thermo_gap_is_bounded_and_nested() {
    let lat = Lattice::new(7, 0.5, Boundary::Open).unwrap();
    let w = InteractionModel::exponential(1.0, 1.0, 1).unwrap();
    let v = PotentialModel::free(1);
    let f = ModeVector::site(&lat, 3).unwrap();
    let inner = Region::interval(2, 4, &lat).unwrap();
    let outer = Region::all(&lat);
    let gap = thermo_limit_gap(&f, 0.5, &inner, &outer, &lat, 1.0, &w, &v).unwrap();
    assert!(gap > 0.0 && gap <= 2.0 * f.norm());
    assert_eq!(thermo_limit_gap(&f, 0.5, &outer, &outer, &lat, 1.0, &w, &v).unwrap(), 0.0);
    assert!(thermo_limit_gap(&f, 0.5, &outer, &inner, &lat, 1.0, &w, &v).is_err());
}

#[test]
fn sigma_limit_requires_resolution_and_vanishes_for_zero_interaction() {
    let psi = TwoParticleGrid::from_fn(|x, y| c((-(x * x) - y * y).exp()), 64, 8.0).unwrap();
    let w = InteractionModel::exponential(1.0, 1.0, 1).unwrap();
    assert!(sigma_limit_error(&psi, (-2.0, 2.0), &w, 0.1).is_err());
    assert_eq!(sigma_limit_error(&psi, (-2.0, 2.0), &InteractionModel::zero(1), 0.5).unwrap(), 0.0);
    let e = sigma_limit_error(&psi, (-2.0, 2.0), &w, 0.5).unwrap();
    assert!(e > 0.0 && e <= 2.0 * psi.norm());
}
