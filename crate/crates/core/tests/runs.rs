use ufedgan_core::attacker::{run_attack, AttackMode, AttackerState};
use ufedgan_core::data::{ToyDistribution, UnlabeledView};
use ufedgan_core::metrics::{fid, GaussianMoments};
use ufedgan_core::nn::{generate, sample_latent, GanSpec, OptimizerKind, Profile};
use ufedgan_core::protocol::{run_until_converged, server_init, ClientState, Federation, ProtocolConfig, StopReason};
use ufedgan_core::rng::StreamRng;
use ufedgan_core::tensor::BatchNormMode;
use ufedgan_core::transport::{read_header, EavesdropTap, TapFilter, Transcript};
use ufedgan_core::Tensor;

const DATA: ToyDistribution = ToyDistribution::Gaussian1d { mean: 2.0, std: 0.5 };

fn constant_scorer(_: &Tensor<f32>, _: usize) -> ufedgan_core::Result<f64> {
    Ok(1.0)
}

fn config(rounds: u32, steps: u32) -> ProtocolConfig {
    ProtocolConfig {
        steps_per_round: steps,
        batch_size: 64,
        max_rounds: rounds,
        window: 1000,
        is_samples: 64,
        is_splits: 2,
        optimizer: OptimizerKind::adam(2e-3),
        ..ProtocolConfig::default()
    }
}

fn federation(users: usize, seed: u64, config: &ProtocolConfig, taps: &[EavesdropTap]) -> Federation<f32> {
    let spec = GanSpec::for_profile(Profile::Gaussian1d, 1).unwrap();
    let server = server_init::<f32>(users, &spec, config, seed).unwrap();
    let clients = (0..users as u32)
        .map(|u| {
            let data = DATA.sample::<f32>(1000, &mut StreamRng::new(seed, &format!("local:{u}"))).unwrap();
            ClientState::new(u, UnlabeledView::from_samples(data), spec.discriminator.clone(), config.batch_size, seed).unwrap()
        })
        .collect();
    Federation::new(server, clients, taps).unwrap()
}

fn train(fed: &mut Federation<f32>) {
    run_until_converged(fed, &constant_scorer, |_| Ok(())).unwrap();
}

#[test]
fn taps_do_not_change_the_outcome() {
    let config = config(8, 5);
    let mut plain = federation(2, 4, &config, &[]);
    let taps = [EavesdropTap::new(TapFilter::Uplink), EavesdropTap::new(TapFilter::Both)];
    let mut tapped = federation(2, 4, &config, &taps);
    train(&mut plain);
    train(&mut tapped);
    assert!(!taps[1].is_empty());
    assert_eq!(plain.server.state_hash(), tapped.server.state_hash());
}

#[test]
fn hundred_rounds_of_five_steps_leave_five_hundred_uplink_frames() {
    let tap = EavesdropTap::new(TapFilter::Uplink);
    let mut fed = federation(1, 9, &config(100, 5), &[tap.clone()]);
    let outcome = run_until_converged(&mut fed, &constant_scorer, |_| Ok(())).unwrap();
    assert_eq!((outcome[0].rounds, outcome[0].stop), (100, StopReason::RoundCap));
    let headers: Vec<_> = tap.frames().iter().map(|f| read_header(f).unwrap()).collect();
    assert_eq!(headers.len(), 500);
    assert!(headers.iter().all(|h| h.is_uplink() && h.user == 0));
    let transcript = Transcript::new(9, tap.frames());
    assert_eq!(Transcript::from_bytes(&transcript.to_bytes()).unwrap().len(), 500);
}

#[test]
fn clients_do_one_pass_per_step_and_never_train() {
    let steps = 4;
    let mut fed = federation(3, 1, &config(6, steps), &[]);
    let mut rounds = 0;
    run_until_converged(&mut fed, &constant_scorer, |report| {
        assert_eq!(report.users.len(), 3);
        rounds += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(rounds, 6);
    for c in &fed.clients {
        let k = c.counters();
        assert_eq!(k.forward_passes, 6 * steps as u64);
        assert_eq!(k.backward_passes, 6 * steps as u64);
        assert_eq!(k.steps, 6 * steps as u64);
        assert_eq!((k.generator_allocations, k.optimizer_steps), (0, 0));
    }
}

fn attacker_for(transcript: &Transcript, seed: u64) -> AttackerState<f32> {
    let spec = GanSpec::for_profile(Profile::Gaussian1d, 1).unwrap();
    let c = config(0, 0);
    let mut attacker = AttackerState::new(&spec, 0, c.optimizer, c.batch_size, seed).unwrap();
    run_attack(transcript, &mut attacker, AttackMode::UplinkOnly).unwrap();
    attacker
}

#[test]
fn attack_replay_is_isolated_and_deterministic() {
    let tap = EavesdropTap::new(TapFilter::Uplink);
    let mut fed = federation(1, 3, &config(10, 5), &[tap.clone()]);
    train(&mut fed);
    let before = fed.server.state_hash();
    let transcript = Transcript::new(3, tap.frames());
    let a = attacker_for(&transcript, 77);
    let b = attacker_for(&transcript, 77);
    assert_eq!(a.consumed(), 50);
    assert_eq!(fed.server.state_hash(), before);
    assert_eq!(a.trainer.pair.generator.flatten(), b.trainer.pair.generator.flatten());
    assert_ne!(a.trainer.pair.generator.flatten(), fed.server.user(0).unwrap().trainer.pair.generator.flatten());
}

/// Frechet distance between the 1-D sample sets, treating samples as features.
fn distance(samples: &Tensor<f32>, reference: &GaussianMoments) -> f64 {
    let feats: Vec<f64> = samples.data().iter().map(|&v| v as f64).collect();
    fid(&GaussianMoments::from_features(&feats, 1).unwrap(), reference).unwrap().value
}

#[test]
fn attacker_generator_stays_further_from_the_data() {
    let reference = DATA.sample::<f64>(5000, &mut StreamRng::new(0, "reference")).unwrap();
    let reference = GaussianMoments::from_features(reference.data(), 1).unwrap();
    for seed in 0..5 {
        let tap = EavesdropTap::new(TapFilter::Uplink);
        let mut fed = federation(1, seed, &config(60, 20), &[tap.clone()]);
        train(&mut fed);
        let server = distance(&fed.server.generate_synthetic_dataset(0, 2000).unwrap(), &reference);
        let mut attacker = attacker_for(&Transcript::new(seed, tap.frames()), seed + 1000);
        let z = sample_latent::<f32>(attacker.trainer.pair.latent_dim, 2000, &mut StreamRng::new(seed, "attacker-eval"));
        let shadow = generate(&mut attacker.trainer.pair.generator, &z, BatchNormMode::Eval).unwrap();
        let attacker = distance(&shadow, &reference);
        assert!(attacker > server, "seed {seed}: attacker {attacker} vs server {server}");
    }
}
