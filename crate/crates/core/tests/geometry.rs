use std::f64::consts::PI;

use adiabatics::geometry::{
    berry_connection, berry_connection_fd, effective_field, geometry_grid, induced_inertia,
    isotropic_inertia, quantum_geometric_tensor, record_from, GridOptions, LevelGeometry,
};
use adiabatics::linalg::RMatrix;
use adiabatics::models::{
    FastModel, MovingWellModel, RandomHermitianModel, SpinFieldModel, SpinProfile, Stencil,
    TwoLevelModel, WellProfile,
};
use adiabatics::spectral::{eigensystem, loop_connection_integral, SpectralOptions};
use adiabatics::ParameterPoint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts() -> SpectralOptions {
    SpectralOptions::default()
}

fn rel(a: &RMatrix, b: &RMatrix) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1e-300)
}

fn wrap(x: f64, period: f64) -> f64 {
    x - period * (x / period).round()
}

#[test]
fn lw_inertia_spin_one() {
    let m = SpinFieldModel::new(
        2,
        SpinProfile::PlanarRotation { gb: 2.0, rates: vec![0.3] },
        1.0,
    )
    .unwrap();
    let p = ParameterPoint::from(0.4);
    let i = induced_inertia(&m, &p, 0, &opts()).unwrap();
    assert!((i[(0, 0)] - 0.045).abs() < 1e-12, "{}", i[(0, 0)]);
}

#[test]
fn lw_inertia_is_odd_in_projection() {
    let m = SpinFieldModel::new(1, SpinProfile::PlanarRotation { gb: 1.0, rates: vec![1.0] }, 1.0)
        .unwrap();
    let p = ParameterPoint::from(0.2);
    let low = induced_inertia(&m, &p, 0, &opts()).unwrap()[(0, 0)];
    let high = induced_inertia(&m, &p, 1, &opts()).unwrap()[(0, 0)];
    assert!((low - 0.5).abs() < 1e-12);
    assert!((low + high).abs() < 1e-12);
}

#[test]
fn analytic_references_agree_for_spin_families() {
    for twice_s in 1..=3u32 {
        for profile in [
            SpinProfile::Sphere { gb: 1.7 },
            SpinProfile::PlanarRotation { gb: 0.8, rates: vec![0.5, -1.2] },
        ] {
            let m = SpinFieldModel::new(twice_s, profile, 0.9).unwrap();
            let p = ParameterPoint::new(vec![0.9, 0.3]).unwrap();
            for level in 0..m.dim() {
                let geo = LevelGeometry::compute(&m, &p, level, &opts()).unwrap();
                let reference = m.analytic_reference(&p, level).unwrap();
                let (g, f) = geo.metric_and_curvature();
                let i = geo.induced_inertia().unwrap();
                assert!((g - reference.metric.unwrap()).amax() < 1e-12);
                assert!((f - reference.curvature.unwrap()).amax() < 1e-12);
                assert!((i - reference.induced_inertia.unwrap()).amax() < 1e-12);
            }
        }
    }
}

#[test]
fn two_level_closed_forms() {
    let m = TwoLevelModel::new(
        [0.2, -0.1, 0.4],
        vec![[1.0, 0.3, 0.0], [0.0, 1.0, 0.5], [0.2, 0.0, 1.0]],
        1.3,
    )
    .unwrap();
    let p = ParameterPoint::new(vec![0.3, 0.1, -0.2]).unwrap();
    for level in 0..2 {
        let geo = LevelGeometry::compute(&m, &p, level, &opts()).unwrap();
        let r = m.analytic_reference(&p, level).unwrap();
        let (g, f) = geo.metric_and_curvature();
        assert!(rel(&g, r.metric.as_ref().unwrap()) < 1e-12);
        assert!(rel(&f, r.curvature.as_ref().unwrap()) < 1e-12);
        assert!(rel(&geo.induced_inertia().unwrap(), r.induced_inertia.as_ref().unwrap()) < 1e-12);
    }
}

#[test]
fn connection_matches_finite_difference_of_fixed_gauge() {
    let m = RandomHermitianModel::new(5, 3, 11, 1.0).unwrap();
    let p = ParameterPoint::new(vec![0.1, -0.2, 0.05]).unwrap();
    for level in [0, 2, 4] {
        let exact = berry_connection(&m, &p, level, &opts()).unwrap();
        let coarse = berry_connection_fd(&m, &p, level, 2e-3, &opts()).unwrap();
        let fine = berry_connection_fd(&m, &p, level, 1e-3, &opts()).unwrap();
        for i in 0..3 {
            let (ec, ef) = ((coarse[i] - exact[i]).abs(), (fine[i] - exact[i]).abs());
            assert!(ef < 1e-5, "level {level} i {i}: {} vs {}", fine[i], exact[i]);
            // second-order stencil
            assert!(ef < 0.3 * ec || ef < 1e-9, "{ec} -> {ef}");
        }
    }
}

#[test]
fn metric_matches_fidelity_oracle() {
    // 1 - |<n(X)|n(X + h u)>|^2 = h^2 u.g.u + O(h^4)
    let m = RandomHermitianModel::new(6, 2, 5, 1.0).unwrap();
    let p = ParameterPoint::new(vec![0.3, 0.2]).unwrap();
    let (g, _) = quantum_geometric_tensor(&m, &p, 1, &opts()).unwrap();
    let u = [0.6, 0.8];
    let guu = u[0] * u[0] * g[(0, 0)] + 2.0 * u[0] * u[1] * g[(0, 1)] + u[1] * u[1] * g[(1, 1)];
    let n0 = eigensystem(&m.hamiltonian(&p), &p).unwrap().state(1);
    let one_sided = |h: f64| {
        let q = p.offset(&u, h);
        let n1 = eigensystem(&m.hamiltonian(&q), &q).unwrap().state(1);
        (1.0 - n0.dotc(&n1).norm_sqr()) / (h * h)
    };
    // the expansion has an odd h^3 term; averaging +-h removes it
    let fid = |h: f64| 0.5 * (one_sided(h) + one_sided(-h));
    let (a, b) = (fid(1e-3), fid(2e-3));
    let extrapolated = (4.0 * a - b) / 3.0;
    assert!((extrapolated - guu).abs() < 1e-6 * guu.max(1.0), "{extrapolated} vs {guu}");
}

#[test]
fn induced_inertia_matches_perturbative_energy_oracle() {
    // Second-order energy of H(X) + V.P_x, with the canonical momentum operator built
    // from the couplings, reproduces -I V^2/2 (the velocity expansion of the shift).
    // Independent route: sum over states with <m|dH|n>/(E_n - E_m)^3 written directly.
    let m = RandomHermitianModel::new(6, 2, 3, 0.7).unwrap();
    let p = ParameterPoint::new(vec![-0.1, 0.4]).unwrap();
    let s = eigensystem(&m.hamiltonian(&p), &p).unwrap();
    let grads = m.gradients(&p);
    for level in 0..6 {
        let i = induced_inertia(&m, &p, level, &opts()).unwrap();
        let mut direct = RMatrix::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                let mut acc = 0.0;
                for k in 0..6 {
                    if k == level {
                        continue;
                    }
                    let va = s.state(k).dotc(&(&grads[a] * s.state(level)));
                    let vb = s.state(k).dotc(&(&grads[b] * s.state(level)));
                    let de = s.energies[k] - s.energies[level];
                    acc += (va.conj() * vb).re / de.powi(3);
                }
                direct[(a, b)] = 2.0 * 0.49 * acc;
            }
        }
        assert!(rel(&i, &direct) < 1e-10, "level {level}");
    }
}

#[test]
fn spin_half_cap_flux_matches_loop_phase() {
    let m = SpinFieldModel::new(1, SpinProfile::Sphere { gb: 1.0 }, 1.0).unwrap();
    let hbar = 1.0;
    for theta in [0.4, 1.1, 2.3] {
        let k = 400;
        let pts: Vec<_> = (0..k)
            .map(|j| ParameterPoint::new(vec![theta, 2.0 * PI * j as f64 / k as f64]).unwrap())
            .collect();
        // analytic A integrated with the periodic trapezoid rule
        let line: f64 = pts
            .iter()
            .map(|q| berry_connection(&m, q, 0, &opts()).unwrap()[1])
            .sum::<f64>()
            * 2.0
            * PI
            / k as f64;
        let mut path: Vec<_> = pts
            .iter()
            .map(|q| eigensystem(&m.hamiltonian(q), q).unwrap())
            .collect();
        path.push(path[0].clone());
        let phase = loop_connection_integral(&path, 0, hbar).unwrap();
        let flux = -PI * hbar * (1.0 - theta.cos());
        let period = 2.0 * PI * hbar;
        assert!(wrap(line - flux, period).abs() < 1e-10, "theta {theta}: {line} vs {flux}");
        assert!(wrap(phase - flux, period).abs() < 1e-4, "theta {theta}: {phase} vs {flux}");

        // rephasing every vertex leaves the loop phase unchanged
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut shuffled = path.clone();
        for sd in shuffled.iter_mut() {
            for n in 0..2 {
                sd.rephase(n, rng.random_range(0.0..2.0 * PI));
            }
        }
        let again = loop_connection_integral(&shuffled, 0, hbar).unwrap();
        assert!(wrap(again - phase, period).abs() < 1e-10);
    }
}

#[test]
fn spin_half_total_flux_is_one_quantum() {
    let m = SpinFieldModel::new(1, SpinProfile::Sphere { gb: 1.0 }, 1.0).unwrap();
    // Gauss-Legendre would be overkill: midpoint rule in theta, F is independent of phi
    let k = 2000;
    let h = PI / k as f64;
    for (level, sign) in [(0usize, -1.0), (1, 1.0)] {
        let total: f64 = (0..k)
            .map(|j| {
                let q = ParameterPoint::new(vec![(j as f64 + 0.5) * h, 0.0]).unwrap();
                quantum_geometric_tensor(&m, &q, level, &opts()).unwrap().1[(0, 1)]
            })
            .sum::<f64>()
            * h
            * 2.0
            * PI;
        assert!((total - sign * 2.0 * PI).abs() < 1e-5, "{total}");
    }
}

#[test]
fn theta_scan_grid_has_constant_metric() {
    let m = SpinFieldModel::new(1, SpinProfile::Sphere { gb: 1.0 }, 1.0).unwrap();
    let pts: Vec<_> = (0..100)
        .map(|j| ParameterPoint::new(vec![0.1 + 2.9 * j as f64 / 99.0, 0.3]).unwrap())
        .collect();
    let i_prim = isotropic_inertia(2, 50.0);
    let out = geometry_grid(&m, &pts, 0, &i_prim, &opts(), GridOptions::default()).unwrap();
    assert_eq!(out.len(), 100);
    for (rec, q) in out.iter().zip(&pts) {
        let rec = rec.as_ref().unwrap();
        assert_eq!(rec.tensors.point, q.coords());
        assert!((rec.tensors.metric[(0, 0)] - 0.25).abs() < 1e-12);
    }
    // singleton grid equals the pointwise call
    let single = geometry_grid(&m, &pts[..1], 0, &i_prim, &opts(), GridOptions::default()).unwrap();
    let pointwise = effective_field(&m, &pts[0], 0, &i_prim, &opts()).unwrap();
    let a = &single[0].as_ref().unwrap().field;
    assert_eq!(a.total_inertia, pointwise.total_inertia);
    assert_eq!(a.scalar_potential, pointwise.scalar_potential);
    assert_eq!(a.connection, pointwise.connection);
}

#[test]
fn grid_is_independent_of_worker_count() {
    let m = RandomHermitianModel::new(6, 2, 42, 1.0).unwrap();
    let pts: Vec<_> = (0..40)
        .map(|j| ParameterPoint::new(vec![0.05 * j as f64, -0.02 * j as f64]).unwrap())
        .collect();
    let i_prim = isotropic_inertia(2, 10.0);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| geometry_grid(&m, &pts, 0, &i_prim, &opts(), GridOptions::default()))
            .unwrap()
            .into_iter()
            .map(|r| r.unwrap().field.scalar_potential)
            .collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn dressed_scalar_potential_tracks_inertia_ratio() {
    let m = SpinFieldModel::new(2, SpinProfile::PlanarRotation { gb: 1.0, rates: vec![1.0] }, 1.0)
        .unwrap();
    let p = ParameterPoint::from(0.0);
    let mass = 20.0;
    let geo = LevelGeometry::compute(&m, &p, 0, &opts()).unwrap();
    let rec = record_from(&geo, &isotropic_inertia(1, mass)).unwrap();
    let i_ind = rec.tensors.induced_inertia[(0, 0)];
    let ratio = rec.field.scalar_potential / rec.tensors.scalar_potential;
    assert!((ratio - mass / (mass + i_ind)).abs() < 1e-14);
    assert!(rec.field.scalar_potential < rec.tensors.scalar_potential);
}

#[test]
fn moving_well_carries_the_particle_mass() {
    let mp = 1.0;
    let m = MovingWellModel::new(161, 0.1, mp, WellProfile::Harmonic { k: 1.0 }, Stencil::FivePoint, 1.0)
        .unwrap();
    let p = ParameterPoint::from(0.0);
    let big = 1836.0;
    let f = effective_field(&m, &p, 0, &isotropic_inertia(1, big), &opts()).unwrap();
    assert!((f.total_inertia[(0, 0)] - (big + mp)).abs() < 1e-2 * mp);
    let i1 = induced_inertia(&m, &p, 0, &opts()).unwrap()[(0, 0)];
    let i2 = induced_inertia(&m, &ParameterPoint::from(0.1), 0, &opts()).unwrap()[(0, 0)];
    assert!((i1 - i2).abs() < 1e-10);
}

#[test]
fn excited_level_near_crossing_has_negative_inertia() {
    let m = TwoLevelModel::conical(1.0);
    let p = ParameterPoint::new(vec![0.05, 0.02, 0.01]).unwrap();
    let i = induced_inertia(&m, &p, 1, &opts()).unwrap();
    let min = i.clone().symmetric_eigen().eigenvalues.min();
    assert!(min < 0.0);
    // and the excited level cannot carry a light primitive mass
    assert!(effective_field(&m, &p, 1, &isotropic_inertia(3, 1.0), &opts()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rephasing_leaves_tensors_unchanged(seed in 0u64..10_000, level in 0usize..6, phase_seed in 0u64..1000) {
        let m = RandomHermitianModel::new(6, 3, seed, 1.0).unwrap();
        let p = ParameterPoint::new(vec![0.1, -0.3, 0.2]).unwrap();
        let geo = LevelGeometry::compute(&m, &p, level, &opts()).unwrap();
        let mut spectral = geo.spectral.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(phase_seed);
        for n in 0..6 {
            spectral.rephase(n, rng.random_range(0.0..2.0 * PI));
        }
        let other = LevelGeometry::from_spectral(spectral, &m.gradients(&p), level, 1.0, &opts()).unwrap();
        let (g0, f0) = geo.metric_and_curvature();
        let (g1, f1) = other.metric_and_curvature();
        prop_assert!(rel(&g0, &g1) < 1e-12);
        prop_assert!(rel(&f0, &f1) < 1e-12);
        let (i0, i1) = (geo.induced_inertia().unwrap(), other.induced_inertia().unwrap());
        prop_assert!(rel(&i0, &i1) < 1e-12);
        let q = RMatrix::identity(3, 3) * 0.1;
        let phi0 = adiabatics::geometry::scalar_potential(&g0, &q, 1.0).unwrap();
        let phi1 = adiabatics::geometry::scalar_potential(&g1, &q, 1.0).unwrap();
        prop_assert!((phi0 - phi1).abs() <= 1e-12 * phi0.abs());
    }

    #[test]
    fn tensor_invariants_hold(seed in 0u64..10_000, level in 0usize..5) {
        let m = RandomHermitianModel::new(5, 3, seed, 1.0).unwrap();
        let p = ParameterPoint::new(vec![0.2, 0.1, -0.1]).unwrap();
        let geo = LevelGeometry::compute(&m, &p, level, &opts()).unwrap();
        let (g, f) = geo.metric_and_curvature();
        let tr = g.trace();
        prop_assert!(g.clone().symmetric_eigen().eigenvalues.min() >= -1e-12 * tr);
        prop_assert!((&f + f.transpose()).amax() <= 1e-12);
        let i = geo.induced_inertia().unwrap();
        prop_assert!((&i - i.transpose()).amax() == 0.0);
        if level == 0 {
            prop_assert!(i.clone().symmetric_eigen().eigenvalues.min() >= -1e-12 * i.trace());
        }
        let phi = adiabatics::geometry::scalar_potential(&g, &RMatrix::identity(3, 3), 1.0).unwrap();
        prop_assert!(phi >= 0.0);
    }
}
