use super::*;
use crate::envsim::{EnvSpec, PacMen};
use crate::gradcheck::{central_difference, max_relative_error};
use crate::mixer::MixerKind;
use crate::params::{Matrix, ParamSet};
use crate::policy::EpsilonSchedule;
use crate::rng::{SeedTree, Stream};
use crate::tape::Tape;
use approx::assert_abs_diff_eq;
use rand::Rng as _;

fn micro_spec() -> EnvSpec {
    EnvSpec {
        n_agents: 2,
        n_actions: 3,
        obs_dim: 4,
        state_dim: 5,
        episode_limit: 3,
    }
}

fn micro_settings() -> Settings {
    let mut s = Settings::default();
    s.model.fc_dim = 3;
    s.model.hidden_dim = 3;
    s.model.posterior_hidden = 4;
    s.learner.batch_size = 2;
    s.learner.buffer_capacity = 4;
    s.learner.lambda = 0.3;
    s
}

fn random_episode(spec: EnvSpec, len: usize, rng: &mut crate::rng::Rng) -> Episode {
    let obs = |rng: &mut crate::rng::Rng| -> Vec<Vec<f64>> {
        (0..spec.n_agents)
            .map(|_| (0..spec.obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    let state = |rng: &mut crate::rng::Rng| -> Vec<f64> { (0..spec.state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let o = obs(rng);
    let s = state(rng);
    let mut b = EpisodeBuilder::new(spec, &o, &s).unwrap();
    for _ in 0..len {
        let actions: Vec<usize> = (0..spec.n_agents).map(|_| rng.gen_range(0..spec.n_actions)).collect();
        let o = obs(rng);
        let s = state(rng);
        b.push_step(&actions, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0), false, &o, &s)
            .unwrap();
    }
    b.finish()
}

fn micro_batch(seed: u64) -> EpisodeBatch {
    let mut rng = SeedTree::new(seed).stream(Stream::Env);
    let a = random_episode(micro_spec(), 3, &mut rng);
    let b = random_episode(micro_spec(), 2, &mut rng);
    EpisodeBatch::from_episodes(&[&a, &b]).unwrap()
}

fn micro_learner(settings: Settings, seed: u64) -> Learner {
    let mut l = Learner::new(micro_spec(), settings, &SeedTree::new(seed)).unwrap();
    // Distinct target parameters so the bootstrap term is not trivial.
    let mut rng = SeedTree::new(seed + 1000).stream(Stream::Init);
    for id in l.target.ids().collect::<Vec<_>>() {
        l.target.get_mut(id).mapv_inplace(|x| x + rng.gen_range(-0.1..0.1));
    }
    l
}

/// One agent, two actions, one step; every weight zero so values are the
/// head biases.
fn bias_only(online_bias: [f64; 2], target_bias: [f64; 2], reward: f64, mixer: MixerKind) -> (Learner, EpisodeBatch) {
    let spec = EnvSpec {
        n_agents: 1,
        n_actions: 2,
        obs_dim: 1,
        state_dim: 1,
        episode_limit: 1,
    };
    let mut settings = Settings::default();
    settings.intrinsic.beta = 0.0;
    settings.learner.gamma = 0.9;
    settings.learner.mixer = mixer;
    settings.learner.batch_size = 1;
    let mut l = Learner::new(spec, settings, &SeedTree::new(0)).unwrap();
    for params in [&mut l.online, &mut l.target] {
        for id in params.ids().collect::<Vec<_>>() {
            params.get_mut(id).fill(0.0);
        }
    }
    let set_bias = |params: &mut ParamSet, bias: [f64; 2]| {
        let id = params.ids().find(|&id| params.name(id) == "agent.shared_head.bias").unwrap();
        params.get_mut(id).row_mut(0).assign(&ndarray::arr1(&bias));
        // Single-agent weight head: unit total weight.
        for id in params.ids().filter(|&id| params.name(id).starts_with("mixer.") && params.name(id).ends_with(".bias")).collect::<Vec<_>>() {
            params.get_mut(id).fill(0.25);
        }
    };
    set_bias(&mut l.online, online_bias);
    set_bias(&mut l.target, target_bias);
    let mut b = EpisodeBuilder::new(spec, &[vec![0.0]], &[0.0]).unwrap();
    b.push_step(&[0], reward, 0.0, false, &[vec![0.0]], &[0.0]).unwrap();
    let ep = b.finish();
    let batch = EpisodeBatch::from_episodes(&[&ep]).unwrap();
    (l, batch)
}

#[test]
fn td_loss_matches_hand_evaluation() {
    let expected = (1.0 + 0.9 * 2.0 - 2.5f64).powi(2);
    assert_abs_diff_eq!(expected, 0.09, epsilon = 1e-12);
    for mixer in [MixerKind::Dueling, MixerKind::Additive] {
        let (l, batch) = bias_only([2.5, 0.0], [2.0, -1.0], 1.0, mixer);
        let td = td_loss(&l.nets, &l.online, &l.target, &batch, &l.settings).unwrap();
        assert_abs_diff_eq!(td, expected, epsilon = 1e-12);
    }
}

#[test]
fn td_loss_vanishes_at_a_bellman_fixed_point() {
    // Q = r + γ Q with Q = 3 needs r = 0.3.
    let (l, batch) = bias_only([3.0, 1.0], [3.0, 1.0], 3.0 * (1.0 - 0.9), MixerKind::Dueling);
    let td = td_loss(&l.nets, &l.online, &l.target, &batch, &l.settings).unwrap();
    assert!(td < 1e-24, "{td}");
}

#[test]
fn raw_ablation_ignores_intrinsic_rewards() {
    let settings = apply_ablation(&micro_settings(), Ablation::Raw);
    let l = micro_learner(settings, 1);
    let batch = micro_batch(2);
    let mut other = batch.clone();
    other.intrinsic_reward.mapv_inplace(|x| 50.0 * x - 3.0);
    let a = total_loss(&l.nets, &l.online, &l.target, &batch, &l.settings).unwrap();
    let b = total_loss(&l.nets, &l.online, &l.target, &other, &l.settings).unwrap();
    assert_eq!(a, b);

    let full = micro_learner(micro_settings(), 1);
    let a = total_loss(&full.nets, &full.online, &full.target, &batch, &full.settings).unwrap();
    let b = total_loss(&full.nets, &full.online, &full.target, &other, &full.settings).unwrap();
    assert_ne!(a.td, b.td);
}

#[test]
fn empty_batch_is_an_error() {
    assert!(matches!(EpisodeBatch::from_episodes(&[]), Err(crate::Error::EmptyBatch)));
    let l = micro_learner(micro_settings(), 1);
    let mut batch = micro_batch(3);
    batch.filled_mask.fill(0.0);
    assert!(matches!(
        total_loss(&l.nets, &l.online, &l.target, &batch, &l.settings),
        Err(crate::Error::EmptyBatch)
    ));
}

#[test]
fn l1_examples() {
    assert_eq!(l1_loss(&Matrix::zeros((3, 2)), &[0, 1, 0], &[1.0; 3], 2), 0.0);
    assert_eq!(l1_loss(&ndarray::array![[1.0, -1.0]], &[0], &[1.0], 1), 1.0);
    let x = ndarray::array![[0.5, -2.0], [1.5, 0.0], [9.0, 9.0]];
    let base = l1_loss(&x, &[0, 1, 1], &[1.0, 1.0, 0.0], 2);
    // Agent 0: (0.5 + 2) / 2 actions; agent 1: 1.5 / 2 with its second row masked.
    assert_abs_diff_eq!(base, 1.25 + 0.75, epsilon = 1e-12);
    assert_abs_diff_eq!(l1_loss(&(&x * 3.0), &[0, 1, 1], &[1.0, 1.0, 0.0], 2), 3.0 * base, epsilon = 1e-12);
}

#[test]
fn graph_l1_matches_the_scalar_definition() {
    let l = micro_learner(micro_settings(), 4);
    let batch = micro_batch(5);
    let targets = loss::target_values(&l.nets, &l.target, &batch);
    let mut tape = Tape::no_grad();
    let g = LossGraph::build(&mut tape, &l.nets, &l.online, &targets, &batch, &l.settings).unwrap();
    let (rows, mask) = posterior_rows(&batch, tape.value(g.hidden));
    let individual = tape.value(g.q.individual.unwrap());
    let scalar = l1_loss(individual, &rows.identities, &mask, 2);
    assert_abs_diff_eq!(tape.scalar(g.l1), scalar, epsilon = 1e-12);
    let parts = g.parts(&tape);
    assert_abs_diff_eq!(parts.total, parts.td + 0.3 * parts.l1, epsilon = 1e-12);
}

#[test]
fn zero_lambda_gives_total_equal_to_td() {
    let settings = apply_ablation(&micro_settings(), Ablation::NoL1);
    let l = micro_learner(settings, 6);
    let p = total_loss(&l.nets, &l.online, &l.target, &micro_batch(7), &l.settings).unwrap();
    assert_eq!(p.total, p.td);
    assert!(p.l1 > 0.0);
}

fn check_total_loss_gradient(settings: Settings, seed: u64) {
    let l = micro_learner(settings, seed);
    let batch = micro_batch(seed + 1);
    let targets = loss::target_values(&l.nets, &l.target, &batch);
    let mut tape = Tape::new();
    let g = LossGraph::build(&mut tape, &l.nets, &l.online, &targets, &batch, &l.settings).unwrap();
    let grads = tape.backward(g.total);
    let eval = |p: &ParamSet| {
        let mut tape = Tape::no_grad();
        let g = LossGraph::build(&mut tape, &l.nets, p, &targets, &batch, &l.settings).unwrap();
        tape.scalar(g.total)
    };
    let mut probe = l.online.clone();
    for id in l.online.ids() {
        let analytic = grads.get(&l.online, id).cloned().unwrap_or_else(|| Matrix::zeros(l.online.get(id).dim()));
        let numeric = central_difference(&mut probe, id, &eval);
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "{}: {err}", l.online.name(id));
    }
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    check_total_loss_gradient(micro_settings(), 8);
}

#[test]
fn weight_l1_and_shared_variants_have_correct_gradients() {
    let mut s = micro_settings();
    s.learner.l1_target = L1Target::Weights;
    check_total_loss_gradient(s, 9);
    check_total_loss_gradient(apply_ablation(&micro_settings(), Ablation::AllShared), 10);
}

#[test]
fn padded_steps_never_reach_the_loss_or_its_gradient() {
    let l = micro_learner(micro_settings(), 11);
    let batch = micro_batch(12);
    // Episode 1 has two real steps; step 2 and observation 3 are padding.
    let mut noisy = batch.clone();
    noisy.observations.slice_mut(ndarray::s![1, 3, .., ..]).fill(7.0);
    noisy.global_state.slice_mut(ndarray::s![1, 3, ..]).fill(-5.0);
    noisy.actions.slice_mut(ndarray::s![1, 2, ..]).fill(2);
    noisy.env_reward[[1, 2]] = 100.0;
    noisy.intrinsic_reward[[1, 2]] = -100.0;
    noisy.terminated[[1, 2]] = 1.0;

    let grad = |batch: &EpisodeBatch| {
        let targets = loss::target_values(&l.nets, &l.target, batch);
        let mut tape = Tape::new();
        let g = LossGraph::build(&mut tape, &l.nets, &l.online, &targets, batch, &l.settings).unwrap();
        let grads = tape.backward(g.total);
        let all: Vec<Matrix> = l.online.ids().filter_map(|id| grads.get(&l.online, id).cloned()).collect();
        (g.parts(&tape), all)
    };
    assert_eq!(grad(&batch), grad(&noisy));
}

#[test]
fn ablation_tags_round_trip_and_unknown_tags_fail() {
    for a in Ablation::ALL {
        assert_eq!(a.tag().parse::<Ablation>().unwrap(), a);
    }
    assert!(matches!("no_such".parse::<Ablation>(), Err(crate::Error::UnknownAblation(_))));
}

#[test]
fn each_ablation_changes_only_its_switch() {
    let base = Settings::default();
    assert_eq!(base.intrinsic.beta, 0.15);
    assert_eq!(base.intrinsic.beta1, 2.0);
    assert_eq!(base.intrinsic.beta2, 1.0);
    assert_eq!(base.learner.lambda, 0.01);
    assert_eq!(apply_ablation(&base, Ablation::None), base);

    let mut expect = base.clone();
    expect.intrinsic.beta = 0.0;
    assert_eq!(apply_ablation(&base, Ablation::Raw), expect);
    let mut expect = base.clone();
    expect.intrinsic.beta1 = 0.0;
    assert_eq!(apply_ablation(&base, Ablation::NoIdentity), expect);
    let mut expect = base.clone();
    expect.intrinsic.beta2 = 0.0;
    assert_eq!(apply_ablation(&base, Ablation::NoAction), expect);
    let mut expect = base.clone();
    expect.intrinsic.obs_term = false;
    assert_eq!(apply_ablation(&base, Ablation::NoObs), expect);
    let mut expect = base.clone();
    expect.learner.lambda = 0.0;
    assert_eq!(apply_ablation(&base, Ablation::NoL1), expect);
    expect.model.individual_heads = false;
    expect.model.identity_input = true;
    assert_eq!(apply_ablation(&base, Ablation::AllShared), expect);
}

#[test]
fn all_shared_has_no_individual_values_and_zero_l1() {
    let s = apply_ablation(&micro_settings(), Ablation::AllShared);
    let l = micro_learner(s, 13);
    assert!(l.nets.agent.individual_heads().is_empty());
    assert_eq!(l.nets.agent.config.input_dim(), 4 + 3 + 2);
    let p = total_loss(&l.nets, &l.online, &l.target, &micro_batch(14), &l.settings).unwrap();
    assert_eq!(p.l1, 0.0);
    assert_eq!(p.total, p.td);
}

#[test]
fn invalid_learner_settings_are_rejected() {
    let mut s = Settings::default();
    s.learner.gamma = 1.0;
    assert!(s.validate().is_err());
    let mut s = Settings::default();
    s.learner.lambda = -0.1;
    assert!(s.validate().is_err());
    let mut s = Settings::default();
    s.intrinsic.beta1 = -1.0;
    assert!(s.validate().is_err());
    let mut s = Settings::default();
    s.learner.batch_size = 6000;
    assert!(s.validate().is_err());
}

#[test]
fn replay_buffer_evicts_oldest_first_and_samples_reproducibly() {
    let mut rng = SeedTree::new(15).stream(Stream::Env);
    let mut buffer = ReplayBuffer::new(3);
    let episodes: Vec<Episode> = (0..5).map(|k| random_episode(micro_spec(), 1 + k % 3, &mut rng)).collect();
    for (k, e) in episodes.iter().enumerate() {
        buffer.push(e.clone());
        assert!(buffer.len() <= 3);
        assert_eq!(buffer.len(), (k + 1).min(3));
    }
    assert_eq!(buffer.get(0), Some(&episodes[2]));
    assert_eq!(buffer.get(2), Some(&episodes[4]));
    let a = buffer.sample(2, &mut SeedTree::new(1).stream(Stream::Sampling)).unwrap();
    let b = buffer.sample(2, &mut SeedTree::new(1).stream(Stream::Sampling)).unwrap();
    assert_eq!(a, b);
    assert!(buffer.sample(4, &mut SeedTree::new(1).stream(Stream::Sampling)).is_err());
}

#[test]
fn batches_pad_short_episodes() {
    let batch = micro_batch(16);
    assert_eq!(batch.max_len(), 3);
    assert_eq!(batch.filled_mask.row(0).to_vec(), vec![1.0, 1.0, 1.0]);
    assert_eq!(batch.filled_mask.row(1).to_vec(), vec![1.0, 1.0, 0.0]);
    assert_eq!(batch.valid_steps(), 5.0);
}

fn small_pacmen_settings(ablation: Ablation) -> Settings {
    let mut s = Settings::default();
    s.model.fc_dim = 8;
    s.model.hidden_dim = 8;
    s.model.posterior_hidden = 8;
    s.learner.batch_size = 2;
    s.learner.buffer_capacity = 3;
    s.learner.target_update_interval = 2;
    apply_ablation(&s, ablation)
}

fn run(settings: Settings, seed: u64, episodes: usize) -> Vec<EpisodeMetrics> {
    let mut t = Trainer::new(PacMen::new(), settings, EpsilonSchedule::default(), seed).unwrap();
    (0..episodes).map(|_| t.run_episode().unwrap()).collect()
}

#[test]
fn training_is_deterministic_per_seed() {
    let a = run(small_pacmen_settings(Ablation::None), 3, 4);
    let b = run(small_pacmen_settings(Ablation::None), 3, 4);
    assert_eq!(a, b);
    let c = run(small_pacmen_settings(Ablation::None), 4, 4);
    assert_ne!(a, c);
    assert_eq!(a[0].epsilon, 1.0);
    assert_eq!(a[0].env_steps, 100);
    assert!(a[0].step.is_none());
    assert!(a[1].step.is_some());
    assert!(!a[1].step.as_ref().unwrap().target_updated);
    assert!(a[2].step.as_ref().unwrap().target_updated);
}

#[test]
fn every_ablation_trains() {
    for ablation in Ablation::ALL {
        let m = run(small_pacmen_settings(ablation), 5, 2);
        let step = m[1].step.as_ref().unwrap();
        assert!(step.loss.total.is_finite(), "{ablation}");
        if ablation == Ablation::NoObs {
            assert!(m.iter().all(|e| e.intrinsic_obs_mean == 0.0));
            assert!(step.posterior.is_empty());
        }
    }
}

#[test]
fn recomputed_intrinsic_rewards_replace_stored_ones() {
    for ablation in [Ablation::None, Ablation::AllShared] {
        let mut settings = small_pacmen_settings(ablation);
        settings.learner.recompute_intrinsic = true;
        let mut t = Trainer::new(PacMen::new(), settings, EpsilonSchedule::default(), 6).unwrap();
        t.run_episode().unwrap();
        t.run_episode().unwrap();
        let mut batch = t.buffer.sample(2, &mut SeedTree::new(0).stream(Stream::Sampling)).unwrap();
        let stored = batch.intrinsic_reward.clone();
        t.learner.recompute_intrinsic(&mut batch).unwrap();
        assert!(batch.intrinsic_reward.iter().all(|x| x.is_finite()));
        assert_ne!(stored, batch.intrinsic_reward);
    }
}

#[test]
fn recompute_with_unchanged_models_reproduces_collection_values() {
    // Before any update the networks that collected an episode are the
    // ones that recompute it.
    let mut settings = small_pacmen_settings(Ablation::AllShared);
    settings.learner.batch_size = 3;
    let mut t = Trainer::new(PacMen::new(), settings, EpsilonSchedule::default(), 7).unwrap();
    t.run_episode().unwrap();
    let ep = t.buffer.get(0).unwrap();
    let mut batch = EpisodeBatch::from_episodes(&[ep]).unwrap();
    let stored = batch.intrinsic_reward.clone();
    t.learner.recompute_intrinsic(&mut batch).unwrap();
    for (a, b) in stored.iter().zip(batch.intrinsic_reward.iter()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }
}

#[test]
fn evaluation_is_reproducible_and_rejects_zero_episodes() {
    let mut t = Trainer::new(PacMen::new(), small_pacmen_settings(Ablation::None), EpsilonSchedule::default(), 8).unwrap();
    let l = t.learner.clone();
    let mut env = PacMen::new();
    let a = evaluate(&mut env, &l, 2, 0.0, true, &mut SeedTree::new(1).stream(Stream::Evaluation)).unwrap();
    let b = evaluate(&mut env, &l, 2, 0.0, true, &mut SeedTree::new(1).stream(Stream::Evaluation)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.traces.len(), 200);
    assert!(a.returns.iter().all(|&r| r >= -10.0 - 1e-9));
    assert!(t.evaluate(0, 0.0, false).is_err());
}
