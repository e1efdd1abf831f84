//! Reward-inference properties: resampling, losses, separability and identity.

use mata_core::env::{self, distance, EnvConfig, Point, TrajectorySegment};
use mata_core::expert::generate_demos;
use mata_core::irl::{
    adapt_reward, discriminator_loss, generator_loss, input_dim, resample_points, resample_segment,
    FeatureAblation, IrlConfig, IrlModule, RewardCoefficients, SharedCoefficients,
};
use mata_core::nets::HeadConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn path_length(p: &[Point]) -> f64 {
    p.windows(2).map(|w| distance(w[0], w[1])).sum()
}

fn jagged(rng: &mut ChaCha8Rng, world: f64) -> Vec<Point> {
    let n = rng.gen_range(1..30);
    (0..n).map(|_| [rng.gen_range(0.0..world), rng.gen_range(0.0..world)]).collect()
}

#[test]
fn resampling_examples() {
    let out = resample_points(&[[0.0, 0.0], [3.0, 0.0]], 4);
    assert_eq!(out, vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
    let uniform: Vec<Point> = (0..16).map(|i| [i as f64 * 0.5, 2.0]).collect();
    let again = resample_points(&uniform, 16);
    for (a, b) in uniform.iter().zip(&again) {
        assert!(distance(*a, *b) < 1e-12);
    }
    assert_eq!(resample_points(&[[4.0, 5.0]], 3), vec![[4.0, 5.0]; 3]);
}

#[test]
fn resampling_never_lengthens_a_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let pts = jagged(&mut rng, 10.0);
        let out = resample_points(&pts, 16);
        assert_eq!(out.len(), 16);
        assert_eq!(out[0], pts[0]);
        assert_eq!(out[15], *pts.last().unwrap());
        assert!(path_length(&out) <= path_length(&pts) + 1e-9);
    }
}

proptest! {
    #[test]
    fn features_have_fixed_width_and_range(
        pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..40),
        l_fix in 2usize..24,
        start in 1u32..60,
        len in 0u32..80,
    ) {
        let seg = TrajectorySegment {
            agent: 0,
            task: 0,
            points: pts.iter().map(|&(x, y)| [x, y]).collect(),
            start_t: start,
            end_t: start + len,
        };
        let f = resample_segment(&seg, l_fix, 10.0, 40);
        prop_assert_eq!(f.len(), input_dim(l_fix));
        prop_assert!(f.iter().all(|&v| (0.0..=1.5).contains(&v)));
    }
}

#[test]
fn closed_form_losses() {
    let ln2 = std::f64::consts::LN_2;
    assert!((generator_loss(&[0.5; 7]) - ln2).abs() < 1e-12);
    assert!(generator_loss(&[1.0; 3]).abs() < 1e-12);
    assert!((discriminator_loss(&[0.5; 4], &[0.5; 4]) - 2.0 * ln2).abs() < 1e-12);
    assert!(discriminator_loss(&[1.0 - 1e-13; 2], &[1e-13; 2]) < 1e-9);
    assert!(discriminator_loss(&[0.0], &[1.0]).is_finite());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let e: Vec<f64> = (0..9).map(|_| rng.gen_range(0.01..0.99)).collect();
    let p: Vec<f64> = (0..5).map(|_| rng.gen_range(0.01..0.99)).collect();
    let oracle = -e.iter().map(|v| v.ln()).sum::<f64>() / 9.0 - p.iter().map(|v| (1.0 - v).ln()).sum::<f64>() / 5.0;
    assert!((discriminator_loss(&e, &p) - oracle).abs() < 1e-12);
    let oracle = -p.iter().map(|v| v.ln()).sum::<f64>() / 5.0;
    assert!((generator_loss(&p) - oracle).abs() < 1e-12);
}

#[test]
fn shared_coefficient_updates() {
    let h = HeadConfig::default();
    let mut full = SharedCoefficients::new(1.0 - f64::EPSILON, h);
    full.update(&[RewardCoefficients { alpha: 1.4, beta: 0.9 }]);
    assert!((full.current.alpha - 1.0).abs() < 1e-12 && full.current.beta.abs() < 1e-12);

    let mut c = SharedCoefficients::new(0.0, h);
    c.update(&[]);
    assert_eq!(c.current, RewardCoefficients::IDENTITY);
    c.update(&[
        RewardCoefficients { alpha: 1.3, beta: 0.4 },
        RewardCoefficients { alpha: 0.7, beta: -0.4 },
    ]);
    assert!((c.current.alpha - 1.0).abs() < 1e-12 && c.current.beta.abs() < 1e-12);
    assert_eq!(adapt_reward(7.5, &c, false), 7.5);
}

fn straight_line(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let a = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
    let b = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
    let steps = (distance(a, b).ceil() as usize).max(1);
    (0..=steps)
        .map(|i| {
            let u = i as f64 / steps as f64;
            [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
        })
        .collect()
}

fn random_walk(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut p = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
    let n = rng.gen_range(4..14);
    let mut out = vec![p];
    for _ in 0..n {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        p = [(p[0] + angle.cos()).clamp(0.0, 10.0), (p[1] + angle.sin()).clamp(0.0, 10.0)];
        out.push(p);
    }
    out
}

fn as_segment(points: Vec<Point>) -> TrajectorySegment {
    let len = points.len() as u32;
    TrajectorySegment { agent: 0, task: 0, points, start_t: 1, end_t: len - 1 }
}

#[test]
fn discriminator_separates_lines_from_random_walks() {
    let env = EnvConfig::desk();
    let cfg = IrlConfig::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let feats = |segs: Vec<Vec<Point>>| -> Vec<Vec<f64>> {
        segs.into_iter()
            .map(|p| resample_segment(&as_segment(p), cfg.l_fix, env.world_size, env.max_steps))
            .collect()
    };
    let expert = feats((0..200).map(|_| straight_line(&mut rng)).collect());
    let mut irl = IrlModule::with_expert_features(&cfg, &env, FeatureAblation::default(), expert, 3);

    let first = irl.discriminator_update(&feats(vec![random_walk(&mut rng)]), false).unwrap();
    assert!((first.loss - 2.0 * std::f64::consts::LN_2).abs() < 0.2);

    let mut accuracy = 0.0;
    for _ in 0..200 {
        let batch = feats((0..8).map(|_| random_walk(&mut rng)).collect());
        accuracy = irl.discriminator_update(&batch, true).unwrap().accuracy;
    }
    let held_expert = irl.scores(&feats((0..200).map(|_| straight_line(&mut rng)).collect())).unwrap();
    let held_policy = irl.scores(&feats((0..200).map(|_| random_walk(&mut rng)).collect())).unwrap();
    let correct = held_expert.iter().filter(|&&p| p > 0.5).count() + held_policy.iter().filter(|&&p| p < 0.5).count();
    let held = correct as f64 / 400.0;
    assert!(held >= 0.95, "held-out accuracy {held} (last batch {accuracy})");
}

#[test]
fn zero_discriminator_gives_two_ln_two() {
    let env = EnvConfig::desk();
    let cfg = IrlConfig::desk();
    let expert = vec![vec![0.3; input_dim(cfg.l_fix)]; 4];
    let mut irl = IrlModule::with_expert_features(&cfg, &env, FeatureAblation::default(), expert, 1);
    let net = irl.discriminator_net().clone();
    net.init_zeros(irl.discriminator_params_mut());
    let r = irl.discriminator_update(&vec![vec![0.7; input_dim(cfg.l_fix)]; 4], false).unwrap();
    assert!((r.loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-9);
    assert_eq!(irl.scores(&[vec![0.1; input_dim(cfg.l_fix)]]).unwrap(), vec![0.5]);
}

fn module(seed: u64) -> (EnvConfig, IrlModule) {
    let env = EnvConfig::desk();
    let demos = generate_demos(&env, 3, seed).unwrap();
    let irl = IrlModule::new(&IrlConfig::desk(), &env, FeatureAblation::default(), &demos, seed).unwrap();
    (env, irl)
}

#[test]
fn no_completions_leave_everything_unchanged() {
    let (env, mut irl) = module(4);
    let state = env::reset(&env, 4);
    let before = (irl.generator_params().clone(), irl.discriminator_params().clone(), *irl.shared());
    let mut rewards = vec![-0.5, -0.6, -0.7];
    let out = irl.irl_step(&[], &state, &mut rewards, true).unwrap();
    assert!(out.is_none());
    assert_eq!(rewards, vec![-0.5, -0.6, -0.7]);
    assert_eq!(before.0, *irl.generator_params());
    assert_eq!(before.1, *irl.discriminator_params());
    assert_eq!(before.2, *irl.shared());
}

#[test]
fn zero_head_first_reward_is_environmental() {
    let (env, mut irl) = module(6);
    let state = env::reset(&env, 6);
    let seg = TrajectorySegment { agent: 1, task: 2, points: vec![[1.0, 1.0], [2.0, 1.0], [3.0, 1.0]], start_t: 1, end_t: 2 };
    let mut rewards = vec![-0.5, 6.85, -0.5];
    let report = irl.irl_step(&[seg], &state, &mut rewards, true).unwrap().unwrap();
    assert_eq!(rewards, vec![-0.5, 6.85, -0.5]);
    assert_eq!((report.alpha, report.beta), (1.0, 0.0));
    assert!(report.gen_loss >= 0.0 && report.disc_loss >= 0.0);
}

#[test]
fn frozen_evaluation_changes_nothing() {
    let (env, mut irl) = module(8);
    let state = env::reset(&env, 8);
    let seg = TrajectorySegment { agent: 0, task: 0, points: vec![[5.0, 5.0], [6.0, 5.0]], start_t: 1, end_t: 1 };
    // move the head off the identity first
    for _ in 0..5 {
        let mut r = vec![6.85, -0.5, -0.5];
        irl.irl_step(std::slice::from_ref(&seg), &state, &mut r, true).unwrap();
    }
    let before = (irl.generator_params().clone(), irl.discriminator_params().clone(), *irl.shared());
    let mut rewards = vec![6.85, -0.5, -0.5];
    irl.irl_step(&[seg], &state, &mut rewards, false).unwrap();
    assert_eq!(before.0, *irl.generator_params());
    assert_eq!(before.1, *irl.discriminator_params());
    assert_eq!(before.2, *irl.shared());
    assert_eq!(&rewards[1..], &[-0.5, -0.5]);
}

#[test]
fn coefficients_stay_in_bounds_during_training() {
    let (env, mut irl) = module(9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = HeadConfig::default();
    let state = env::reset(&env, 9);
    for _ in 0..100 {
        let seg = as_segment(random_walk(&mut rng));
        let mut r = vec![6.85, -0.5, -0.5];
        let rep = irl.irl_step(&[seg], &state, &mut r, true).unwrap().unwrap();
        assert!((1.0 - h.c_alpha..=1.0 + h.c_alpha).contains(&rep.alpha));
        assert!((-h.c_beta..=h.c_beta).contains(&rep.beta));
        assert!(rep.gen_loss >= 0.0 && rep.disc_loss >= 0.0);
    }
}

#[test]
fn empty_demos_fail_at_construction() {
    let env = EnvConfig::desk();
    let mut demos = generate_demos(&env, 1, 0).unwrap();
    demos.segments.clear();
    assert!(IrlModule::new(&IrlConfig::desk(), &env, FeatureAblation::default(), &demos, 0).is_err());
}
