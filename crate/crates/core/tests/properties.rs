use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thinfilm::banded::CyclicBanded;
use thinfilm::evolution::{self, EvolutionState, SchemeConfig};
use thinfilm::experiments::{self, RunMeta};
use thinfilm::functionals::{self, DiagnosticsSample, ExactProfile};
use thinfilm::grid::{self, Field, PeriodicGrid, Spectrum};
use thinfilm::steady;
use thinfilm::Params;

fn smooth_field(n: usize, c0: f64, coeffs: &[(f64, f64)]) -> Field {
    PeriodicGrid::new(n).unwrap().sample(|x| {
        c0 + coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let p = (k + 1) as f64;
                (a * (p * x).cos() + b * (p * x).sin()) / (p * p)
            })
            .sum::<f64>()
    })
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(c0 in 0.5..3.0f64, cs in coeffs(), nyq in -0.1..0.1f64) {
        let mut u = smooth_field(64, c0, &cs);
        for (i, v) in u.values_mut().iter_mut().enumerate() {
            *v += if i % 2 == 0 { nyq } else { -nyq };
        }
        let spec = Spectrum::of(&u);
        let sum: f64 = spec.resolved().map(|(_, c)| c.norm_sqr()).sum::<f64>() + spec.nyquist().norm_sqr();
        let l2 = grid::l2_norm(&u);
        prop_assert!((l2 * l2 - 2.0 * PI * sum).abs() <= 1e-12 * (1.0 + l2 * l2));
    }

    #[test]
    fn h1_distance_two_paths(c0 in 0.5..3.0f64, a in coeffs(), b in coeffs()) {
        let u = smooth_field(128, c0, &a);
        let v = smooth_field(128, c0, &b);
        let d1 = grid::h1_distance(&u, &v).unwrap();
        let d2 = functionals::h1_distance_fourier(&u, &v).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-10 * (1.0 + d1));
    }

    #[test]
    fn step_conserves_mass(c0 in 1.0..3.0f64, cs in coeffs(), alpha in 0.2..1.8f64, dt in 1e-5..1e-2f64) {
        let u0 = smooth_field(64, c0, &cs);
        prop_assume!(u0.min() > 0.05);
        let m0 = u0.mass();
        let params = Params::new(3.0, alpha, m0, 1e-8).unwrap();
        let cfg = SchemeConfig::new(64, 1.0, vec![0.0]);
        let mut state = EvolutionState::new(u0, &cfg, &params);
        let log = evolution::step(&mut state, &cfg, &params, dt).unwrap();
        prop_assert!((log.mass - m0).abs() <= 1e-13 * m0);
        prop_assert!((state.u.mass() - m0).abs() <= 1e-13 * m0);
    }

    #[test]
    fn field_csv_round_trip(c0 in 0.5..3.0f64, cs in coeffs()) {
        let u = smooth_field(32, c0, &cs);
        let back = Field::parse_csv(u.to_csv().as_bytes()).unwrap();
        prop_assert_eq!(u.values(), back.values());
    }

    #[test]
    fn tau_round_trip(alpha in 0.3..2.5f64, frac in 0.02..0.98f64) {
        let tau = frac * steady::hanging_tau_max(alpha);
        let drop = steady::hanging_drop(alpha, tau).unwrap();
        let back = steady::tau_from_mass(alpha, drop.mass).unwrap();
        let again = steady::hanging_drop(alpha, back).unwrap();
        prop_assert!((again.mass - drop.mass).abs() <= 1e-10 * (1.0 + drop.mass));
    }
}

#[test]
fn energy_fourier_matches_grid_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let cs: Vec<(f64, f64)> = (0..8).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let u = smooth_field(256, rng.gen_range(1.0..3.0), &cs);
        let alpha = rng.gen_range(0.1..2.0);
        let e = functionals::energy(&u, alpha);
        let f = functionals::energy_fourier(&u, alpha, u.mass()).unwrap();
        assert!((e - f).abs() <= 1e-9 * e.abs(), "{e} vs {f}");
    }
}

#[test]
fn energy_fourier_rejects_wrong_mass() {
    let u = PeriodicGrid::new(32).unwrap().constant(1.0);
    assert!(functionals::energy_fourier(&u, 1.0, 1.0).is_err());
}

/// Nonnegative random fields of the minimizer's mass: never below the
/// minimizer energy nor below the analytic lower bound; the second-order
/// expansion about u* is exact.
#[test]
fn random_fields_against_the_minimizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = PeriodicGrid::new(512).unwrap();
    for &(alpha, mass) in &[(1.0, 2.0 * PI), (0.5, 4.0), (0.5, 20.0), (2f64.sqrt(), 3.0)] {
        let star = steady::minimizer(alpha, mass).unwrap();
        let ustar = star.evaluate(&g);
        let lower = functionals::energy_lower_bound(mass, alpha);
        for _ in 0..20 {
            let cs: Vec<(f64, f64)> = (0..6).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let w = smooth_field(512, 0.0, &cs);
            let amp = rng.gen_range(0.01..0.5);
            // Perturb by a nonnegative bump pattern and rescale to mass M.
            let v = ustar.zip_with(&w, |a, b| (a + amp * b).max(0.0)).unwrap();
            let v = v.scale(mass / v.mass());
            let ev = functionals::energy(&v, alpha);
            assert!(ev >= lower, "α={alpha} M={mass}: {ev} below the bound {lower}");
            let gap = functionals::energy_gap(&v, &star, alpha, star.lambda());
            assert!(gap >= -1e-9, "α={alpha} M={mass}: perturbation lowers the energy by {gap}");
            let taylor = functionals::taylor_gap(&v, &star, alpha, star.lambda());
            assert!(taylor <= 1e-6 * (1.0 + ev.abs()), "α={alpha} M={mass}: expansion residual {taylor}");
        }
    }
}

#[test]
fn tau_round_trip_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let alpha = [0.5, 1.0, 2f64.sqrt(), 2.0][rng.gen_range(0..4)];
        let mass = rng.gen_range(0.2..8.0);
        let Ok(tau) = steady::tau_from_mass(alpha, mass) else {
            // Only α < 1 has a finite hanging-drop mass ceiling.
            assert!(alpha < 1.0 && mass * (1.0 - alpha * alpha) >= 2.0 * PI - 1e-6);
            continue;
        };
        let d = steady::hanging_drop(alpha, tau).unwrap();
        assert!((d.mass - mass).abs() <= 1e-10 * (1.0 + mass), "α={alpha} M={mass}: got {}", d.mass);
        assert!(d.value(tau).abs() <= 1e-12 && d.slope(tau).abs() <= 1e-12);
    }
}

#[test]
fn banded_solve_matches_dense_lu() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for &(n, w) in &[(12usize, 1usize), (20, 2), (33, 3)] {
        let mut a = CyclicBanded::zeros(n, w);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for d in -(w as isize)..=(w as isize) {
                let v = if d == 0 { 10.0 + rng.gen_range(0.0..1.0) } else { rng.gen_range(-1.0..1.0) };
                a.add(i, d, v);
                let j = (i as isize + d).rem_euclid(n as isize) as usize;
                dense[(i, j)] += v;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = a.solve(&rhs).unwrap();
        let y = dense.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for (p, q) in x.iter().zip(y.iter()) {
            assert!((p - q).abs() <= 1e-12, "{p} vs {q}");
        }
    }
}

/// Written trajectories re-read and re-measured reproduce the logged diagnostics.
#[test]
fn trajectory_round_trip_rediagnostics() {
    let g = PeriodicGrid::new(64).unwrap();
    let u0 = g.sample(|x| 1.5 + 0.3 * x.cos() + 0.1 * (2.0 * x).sin());
    let params = Params::new(3.0, 1.0, u0.mass(), 1e-8).unwrap();
    let star = steady::minimizer(1.0, u0.mass()).unwrap();
    let reference = star.evaluate(&g);
    let cfg = SchemeConfig::new(64, 0.5, vec![0.0, 0.1, 0.5]);
    let rec = evolution::run(u0, &params, &cfg, Some(&reference)).unwrap();
    let meta = RunMeta { grid_size: 64, n: 3.0, alpha: 1.0, eps: 1e-8, mass: params.mass };
    let dir = tempfile::tempdir().unwrap();
    experiments::write_trajectory(dir.path(), &rec, &meta).unwrap();
    let traj = experiments::read_trajectory(dir.path()).unwrap();
    assert_eq!(traj.meta, meta);
    assert_eq!(traj.snapshots.len(), 3);
    let p = traj.meta.params().unwrap();
    for (t, u) in &traj.snapshots {
        let logged = traj.samples.iter().find(|s| s.t == *t).unwrap();
        let again = DiagnosticsSample::measure(*t, u, &p, Some(&reference)).unwrap();
        for (a, b) in [
            (logged.energy, again.energy),
            (logged.dissipation, again.dissipation),
            (logged.mass, again.mass),
            (logged.entropy_bf, again.entropy_bf),
            (logged.entropy_kadanoff, again.entropy_kadanoff),
            (logged.d_h1, again.d_h1),
            (logged.d_l2, again.d_l2),
            (logged.d_linf, again.d_linf),
        ] {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "t={t}: {a} vs {b}");
        }
    }
}
