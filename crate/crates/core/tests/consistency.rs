//! Consistency harness determinism and coarse/fine coupling.

use stqg_core::consistency::{local_error_samples, stratonovich_compat, LocalErrorConfig};
use stqg_core::model::{ModelData, State};
use stqg_core::noise::{sample_path, NoiseBasis, NoiseMode};
use stqg_core::stepper::StepperConfig;
use stqg_core::torus::{Field, TorusSpec};

fn setup() -> (State, ModelData) {
    let s = TorusSpec::square(16).unwrap();
    let basis = NoiseBasis::new(
        s,
        vec![
            NoiseMode::Fourier { k: [1, 0], amplitude: 0.4, phase: 0.0 },
            NoiseMode::Fourier { k: [1, -1], amplitude: 0.3, phase: 1.0 },
        ],
    )
    .unwrap();
    let data = ModelData::new(Field::from_fn(s, |x, y| 0.1 * (x - y).sin()), Field::zeros(s), basis).unwrap();
    let b = Field::from_fn(s, |x, y| (x + y).sin());
    let q = Field::from_fn(s, |x, y| 0.5 * (2.0 * y).cos() + 0.2 * x.sin());
    (data.state(b, q, 0.0).unwrap(), data)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let (st, data) = setup();
    let cfg = StepperConfig::new(0.01).unwrap();
    let exp = LocalErrorConfig {
        dt_list: vec![0.02, 0.01, 0.005],
        n_paths: 40,
        ref_level: 4,
        seed: 17,
        zero_noise: false,
    };
    let a = in_pool(1, || local_error_samples(&st, &data, &cfg, &exp).unwrap());
    let b = in_pool(4, || local_error_samples(&st, &data, &cfg, &exp).unwrap());
    assert_eq!(a, b);
    let ladder = [0.02, 0.01, 0.005];
    let c = in_pool(1, || stratonovich_compat(&st, &data, &cfg, &ladder, 150, 3).unwrap());
    let d = in_pool(3, || stratonovich_compat(&st, &data, &cfg, &ladder, 150, 3).unwrap());
    assert_eq!(c, d);
}

#[test]
fn coarse_increment_is_exact_sum_of_fine() {
    let p = sample_path(5, 9, 1, 0.01, 2, 4).unwrap();
    for i in 0..2 {
        let sum: f64 = p.increments[i].iter().sum();
        assert_eq!(p.block_increments(0, 4)[i], sum);
        let coarse = sample_path(5, 9, 1, 0.01, 2, 0).unwrap();
        assert_eq!(coarse.increments[i][0], sum);
    }
}
