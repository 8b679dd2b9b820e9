use proptest::prelude::*;
use wavefront_core::bec::{self, BecChannel};
use wavefront_core::front::{self, MeasureWindow, RunOptions};
use wavefront_core::gauss::{self, DenominatorVariant, GaussChannel, Psi};
use wavefront_core::{DegreePolynomial, Ensemble, GridConfig};

fn distribution() -> impl Strategy<Value = DegreePolynomial> {
    prop::collection::vec(0.0..1.0f64, 2..9).prop_filter_map("needs a degree >= 2", |w| {
        let mut c = vec![0.0];
        c.extend(w);
        let total: f64 = c.iter().sum();
        c.iter_mut().for_each(|x| *x /= total);
        DegreePolynomial::new(c).ok()
    })
}

proptest! {
    #[test]
    fn ensemble_text_round_trips(lambda in distribution(), rho in distribution()) {
        let ens = Ensemble::new(lambda, rho);
        let text = ens.spec_string();
        let back: Ensemble = text.parse().unwrap();
        prop_assert_eq!(back.spec_string(), text);
        prop_assert_eq!(&back, &ens);
        for y in [0.0, 0.3, 0.77, 1.0] {
            prop_assert!((back.lambda().eval(y).unwrap() - ens.lambda().eval(y).unwrap()).abs() < 1e-15);
            prop_assert!((back.rho().eval(y).unwrap() - ens.rho().eval(y).unwrap()).abs() < 1e-15);
        }
    }
}

#[test]
fn regular_ensembles_round_trip_exactly() {
    for (l, r) in [(3, 6), (4, 8), (5, 10), (4, 12), (2, 2)] {
        let ens = Ensemble::regular(l, r).unwrap();
        assert_eq!(ens.spec_string(), format!("regular:{l},{r}"));
        assert_eq!(ens.spec_string().parse::<Ensemble>().unwrap(), ens);
        assert_eq!(ens.regular_degrees(), Some((l, r)));
    }
}

#[test]
fn continuum_and_coupled_velocities_agree_on_table_one() {
    let ens = Ensemble::regular(3, 6).unwrap();
    for eps in [0.455, 0.465, 0.475, 0.485] {
        let ch = BecChannel::new(eps).unwrap();
        let v = bec::solve_wave(ch, &ens, &GridConfig::default())
            .unwrap()
            .velocity;
        let traj = bec::coupled_run(ch, &ens, 8, 256, &RunOptions::default()).unwrap();
        let e = bec::empirical_velocity(&traj, ch, &ens).unwrap();
        assert!((v - e).abs() < 5e-3, "{eps}: {v} {e}");
    }
}

#[test]
fn halving_dz_barely_moves_the_velocity() {
    let ens = Ensemble::regular(3, 6).unwrap();
    let ch = BecChannel::new(0.465).unwrap();
    let base = GridConfig::default();
    let fine = GridConfig {
        dz: base.dz / 2.0,
        ..base
    };
    let a = bec::solve_wave(ch, &ens, &base).unwrap().velocity;
    let b = bec::solve_wave(ch, &ens, &fine).unwrap().velocity;
    assert!((a - b).abs() < 1e-4, "{a} {b}");
}

#[test]
fn wave_profile_is_a_monotone_kink() {
    let ens = Ensemble::regular(3, 6).unwrap();
    let ch = BecChannel::new(0.465).unwrap();
    let sol = bec::solve_wave(ch, &ens, &GridConfig::default()).unwrap();
    let x = bec::x_bp(ch, &ens).unwrap();
    let p = &sol.profile;
    assert!(p.is_nondecreasing(1e-12));
    assert!(p.values[0] < 1e-6);
    assert!((p.values[p.len() - 1] - x).abs() < 1e-6);
}

#[test]
fn gaussian_wave_matches_gaussian_coupled_runs() {
    let psi = Psi::new();
    for (l, r) in [(3, 6), (4, 8)] {
        let ens = Ensemble::regular(l, r).unwrap();
        for mean in [2.33, 2.35, 2.38, 2.40] {
            let ch = GaussChannel::new(mean).unwrap();
            let (p, traj) =
                gauss::coupled_run_ga(&psi, ch, &ens, 3, 100, &RunOptions::default()).unwrap();
            let e = front::empirical_velocity(&traj, 0.5 * p, &MeasureWindow::default()).unwrap();
            let v = gauss::solve_wave_ga(
                &psi,
                ch,
                &ens,
                &GridConfig::default(),
                DenominatorVariant::RMinusOne,
            )
            .unwrap()
            .velocity;
            assert!((v - e).abs() < 3e-3, "({l},{r}) {mean}: {v} {e}");
        }
    }
}
