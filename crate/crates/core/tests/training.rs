use belnet_core::data::SamplingMode;
use belnet_core::operators::{Model, ModelSpec, OperatorModel};
use belnet_core::training::{train_on, LrSchedule, TrainConfig};
use belnet_core::Exec;

mod common;
use common::{synthetic_samples, synthetic_spec};

fn config(epochs: usize) -> TrainConfig {
    let mut config = TrainConfig::new(ModelSpec::BelNet(synthetic_spec()), epochs, 1);
    config.optimizer.learning_rate = 2e-2;
    config.schedule = LrSchedule::StepDecay { factor: 0.5, every: (epochs / 2).max(1) };
    config
}

fn flat(model: &Model) -> Vec<f64> {
    model.blocks().iter().flat_map(|(_, b)| b.data().to_vec()).collect()
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let samples = synthetic_samples(10, 0);
    let cfg = config(0);
    let mut model = Model::init(&cfg.model, cfg.seed).unwrap();
    let before = flat(&model);
    let history = train_on(&mut model, &samples, SamplingMode::Fix, &cfg, Exec::default(), |_, _| {}).unwrap();
    assert!(history.is_empty());
    assert_eq!(flat(&model), before);
}

#[test]
fn rank_one_kernel_loss_falls_below_1e4_within_2000_steps() {
    let samples = synthetic_samples(100, 0);
    // 100 samples in batches of 20: five steps per epoch.
    let cfg = config(400);
    let steps = cfg.epochs * samples.len().div_ceil(cfg.batch_size);
    assert!(steps <= 2000);
    let mut model = Model::init(&cfg.model, cfg.seed).unwrap();
    let history = train_on(&mut model, &samples, SamplingMode::Fix, &cfg, Exec::default(), |_, _| {}).unwrap();
    let last = *history.last().unwrap();
    assert!(last < 1e-4, "final loss {last:e}");
}

#[test]
fn training_is_reproducible_and_independent_of_the_policy() {
    let samples = synthetic_samples(30, 0);
    let mut cfg = config(5);
    cfg.batch_size = 8;
    cfg.grad_chunks = 3;
    let run = |exec| {
        let mut model = Model::init(&cfg.model, cfg.seed).unwrap();
        let history = train_on(&mut model, &samples, SamplingMode::Fix, &cfg, exec, |_, _| {}).unwrap();
        (flat(&model), history)
    };
    let first = run(Exec::Sequential);
    assert_eq!(first, run(Exec::Sequential));
    assert_eq!(first, run(Exec::Parallel));
}

#[test]
fn mismatched_architecture_is_rejected() {
    let samples = synthetic_samples(4, 0);
    let cfg = config(1);
    let mut other = synthetic_spec();
    other.projection_width = 4;
    let mut model = Model::init(&ModelSpec::BelNet(other), 0).unwrap();
    assert!(train_on(&mut model, &samples, SamplingMode::Fix, &cfg, Exec::default(), |_, _| {}).is_err());
}
