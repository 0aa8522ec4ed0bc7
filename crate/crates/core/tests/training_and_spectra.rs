use ndarray::Array2;
use opdyn_core::exact::{exact_spectral_lines, generate_trajectory_with, EigenSystem, Observable, TfimSpec};
use opdyn_core::node::{predict, train, trajectory_loss, Network, NetworkSpec, SolverConfig, StopReason, TrainConfig, Variant};
use opdyn_core::pauli::{PauliBasis, TruncationPolicy};
use opdyn_core::spectrum::{assemble_two_point, compare_spectra, fft_spectrum, find_peaks, match_lines, Window};
use opdyn_core::trajectory::{grid_between, Metadata, Trajectory};

fn constant_trajectory() -> Trajectory {
    let basis = PauliBasis::from_labels(&["XI", "IZ", "YY"]).unwrap();
    let times = grid_between(0.0, 3.0, 0.1).unwrap();
    let coeffs = Array2::from_shape_fn((times.len(), 3), |(_, i)| [0.4, -0.2, 0.7][i]);
    Trajectory::new(times, basis, coeffs, Metadata::new()).unwrap()
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        window_steps: 3,
        learning_rate: 3e-3,
        lr_decay: 1.0,
        max_epochs: epochs,
        patience: epochs,
        validation_fraction: 0.2,
        grad_clip: 0.0,
        seed: 11,
    }
}

#[test]
fn loss_examples() {
    let a = constant_trajectory();
    assert_eq!(trajectory_loss(&a, &a).unwrap(), 0.0);
    let mut c = a.coeffs().to_owned();
    c[(4, 1)] += 0.5;
    let b = Trajectory::new(a.times().to_vec(), a.basis().clone(), c, Metadata::new()).unwrap();
    assert!((trajectory_loss(&a, &b).unwrap() - 0.25).abs() < 1e-15);
    let short = a.slice_time(0.0, 1.0).unwrap();
    assert!(trajectory_loss(&short, &a).is_err());
}

#[test]
fn constant_trajectory_is_learned() {
    let traj = constant_trajectory();
    let net = Network::init(NetworkSpec::new(Variant::Fcn, 3).with_width(32), 1).unwrap();
    let out = train(net, &traj, &small_config(200), &SolverConfig::default(), &[]).unwrap();
    assert!(out.best_val_loss < 1e-6, "{}", out.best_val_loss);
    assert_eq!(out.history.len(), 200);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let traj = constant_trajectory();
    let spec = NetworkSpec::new(Variant::Fan, 3).with_width(8);
    let cfg = small_config(5);
    let run = || train(Network::init(spec.clone(), 2).unwrap(), &traj, &cfg, &SolverConfig::default(), &[]).unwrap();
    let a = run();
    let b = run();
    assert_eq!(a.network.params(), b.network.params());
    assert_eq!(a.history, b.history);
    let c = train(a.network.clone(), &traj, &cfg, &SolverConfig::default(), &a.history).unwrap();
    assert_eq!(c.history.len(), 10);
    assert_eq!(c.history[5].epoch, 5);
    assert_eq!(&c.history[..5], &a.history[..]);
}

#[test]
fn early_stopping_respects_patience() {
    let traj = constant_trajectory();
    let mut cfg = small_config(500);
    cfg.learning_rate = 0.5;
    cfg.patience = 4;
    let net = Network::init(NetworkSpec::new(Variant::Fcn, 3).with_width(8), 3).unwrap();
    match train(net, &traj, &cfg, &SolverConfig::default(), &[]) {
        Ok(out) => {
            if out.stop == StopReason::EarlyStopping {
                let last = out.history.last().unwrap().epoch;
                assert!(last - out.best_epoch <= cfg.patience);
            }
        }
        Err(f) => assert!(!f.history.is_empty() || f.error.is_numerical()),
    }
}

#[test]
fn predict_on_single_point_grid_returns_initial_state() {
    let traj = constant_trajectory();
    let net = Network::init(NetworkSpec::new(Variant::FanTime, 3).with_width(8), 4).unwrap();
    let h0 = [0.1, 0.2, 0.3];
    let p = predict(&net, &h0, 2.5, &[2.5], &SolverConfig::default(), traj.basis(), &Metadata::new()).unwrap();
    assert_eq!(p.row(0).to_vec(), h0.to_vec());
    assert_eq!(p.meta().get("t0"), Some("2.5"));
    assert!(predict(&net, &h0, 2.5, &[2.0], &SolverConfig::default(), traj.basis(), &Metadata::new()).is_err());
}

#[test]
fn exact_long_spectrum_resolves_lines_and_short_one_does_not() {
    let spec = TfimSpec::default();
    let eig = EigenSystem::new(&spec).unwrap();
    let o = Observable::uniform_sum(3, 'X').unwrap();
    let lines = exact_spectral_lines(&eig, &o).unwrap();
    let tol = 2.0 * std::f64::consts::PI / 200.0;

    let grid = grid_between(0.0, 199.9, 0.1).unwrap();
    let traj = generate_trajectory_with(&eig, &o, &TruncationPolicy::full(false), &grid).unwrap();
    let s = fft_spectrum(traj.times(), &assemble_two_point(&traj, &eig, &o).unwrap(), Window::Rectangular).unwrap();
    assert!((s.span() - 200.0).abs() < 1e-9);
    let m = match_lines(&find_peaks(&s, 0.05).unwrap(), &lines, 0.05, tol, -1.0);
    assert!(m.passes(), "{m:?}");
    assert_eq!(m.matched.len(), lines.iter().filter(|l| l.weight >= 0.05 * lines.iter().map(|l| l.weight).sum::<f64>()).count());

    let short = traj.slice_time(0.0, 5.0).unwrap();
    let ss = fft_spectrum(short.times(), &assemble_two_point(&short, &eig, &o).unwrap(), Window::Rectangular).unwrap();
    assert!(ss.is_low_resolution(50.0));
    assert!(!match_lines(&find_peaks(&ss, 0.05).unwrap(), &lines, 0.05, tol, -1.0).passes());
    assert!(compare_spectra(&s, &s, 0.05).unwrap().all_matched());
}
