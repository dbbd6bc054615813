use tap_core::amp::{amp_run, se_diagnostics, AmpConfig};
use tap_core::experiments::output::{mse_rows, write_csv, MSE_HEADER};
use tap_core::experiments::{instance_from_seed, run_mse_sweep, Design, ExperimentConfig};
use tap_core::free_energy::{tap_energy, VariationalState};
use tap_core::ngd::{mf_minimize, ngd_run, NgdConfig};
use tap_core::oracle::{gaussian_posterior, gaussian_tap_minimizer, v_mean_field};
use tap_core::scalar_channel::{PriorSpec, QuadratureSpec};

#[test]
fn se_diagnostics_shrink_with_n() {
    let spec = PriorSpec::ThreePoint;
    let prior = spec.to_prior().unwrap();
    let cfg = AmpConfig {
        iterations: 6,
        keep_trajectory: true,
        track_gradient: false,
        ..AmpConfig::default()
    };
    let median_worst = |n: usize| {
        let mut devs: Vec<f64> = (100u64..108)
            .map(|seed| {
                let (model, truth) = instance_from_seed(&spec, Design::Gaussian, n, n, 0.3, seed).unwrap();
                let amp = amp_run(&model, &prior, &QuadratureSpec::default(), &cfg, Some(&truth)).unwrap();
                let rep = se_diagnostics(&amp, &model, &truth, 5).unwrap();
                rep.vtv_deviation.max(rep.rtr_deviation)
            })
            .collect();
        devs.sort_by(f64::total_cmp);
        0.5 * (devs[3] + devs[4])
    };
    let (small, large) = (median_worst(500), median_worst(2000));
    assert!(large < 0.05, "{large}");
    assert!(large < small, "{small} {large}");
}

#[test]
fn gaussian_tap_minimizer_is_an_ngd_fixed_point() {
    let spec = PriorSpec::Gaussian { variance: 1.0 };
    let prior = spec.to_prior().unwrap();
    for p in [200, 800] {
        let (model, _) = instance_from_seed(&spec, Design::Gaussian, p, p, 1.0, p as u64).unwrap();
        let oracle = gaussian_posterior(&model, 1.0).unwrap();
        let (m, s) = gaussian_tap_minimizer(&oracle);
        let state = VariationalState::from_moments(&prior, &m, &s).unwrap();
        let f = tap_energy(&model, &state).unwrap();
        assert!((-f / p as f64 - oracle.log_evidence / p as f64).abs() <= 0.5 / (p as f64).sqrt());
        let cfg = NgdConfig {
            grad_tol: 1e-14,
            ..NgdConfig::default()
        };
        let trace = ngd_run(&model, &prior, state, &cfg).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.steps(), 0);
    }
}

#[test]
fn mean_field_variance_is_uniform() {
    let spec = PriorSpec::Gaussian { variance: 1.0 };
    let prior = spec.to_prior().unwrap();
    let p = 300;
    let (model, _) = instance_from_seed(&spec, Design::Gaussian, 450, p, 0.8, 3).unwrap();
    let trace = mf_minimize(&model, &prior, VariationalState::null_state(&prior, p), &NgdConfig::default()).unwrap();
    assert!(trace.converged);
    let target = v_mean_field(1.0, 0.64, 1.5);
    let st = &trace.state;
    for j in 0..p {
        assert!((st.s()[j] - st.m()[j].powi(2) - target).abs() < 1e-6);
    }
}

#[test]
fn sweep_csv_is_byte_identical() {
    let cfg = ExperimentConfig {
        n: 60,
        delta_grid: vec![0.8, 1.2],
        replicates: 2,
        ..ExperimentConfig::default()
    };
    let render = || {
        let mut buf = Vec::new();
        write_csv(&mut buf, &MSE_HEADER, mse_rows(&run_mse_sweep(&cfg).unwrap())).unwrap();
        buf
    };
    let a = render();
    assert_eq!(a, render());
    assert!(String::from_utf8(a).unwrap().starts_with("# tap-lab v1\ndelta,seed"));
}
