mod common;

use metadr::env::{
    self, compute_reward, curtail_shift_response, curtailed_hours, deterministic_response, generate_baseline,
    sample_task, shift_target, CurtailShiftPerson, DeterministicPerson, EnvConfig, OfficeEnv, PersonKind,
    ResponseKind, RewardConfig, TaskDistribution, TaskSpec, HISTORY_DAYS,
};
use metadr::seed::stream;
use proptest::collection::vec;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

const H: usize = 10;

fn points_strategy() -> impl Strategy<Value = Vec<f64>> {
    // Small integer grid mixed with continuous values so ties are common.
    vec(prop_oneof![(0u8..=4).prop_map(|k| k as f64 * 2.5), 0.0f64..10.0], H)
}

fn components() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (vec(0.1f64..50.0, H), vec(0.0f64..50.0, H), vec(0.0f64..50.0, H))
}

fn cs(fixed: Vec<f64>, curtail: Vec<f64>, shift: Vec<f64>, tc: usize, ts: usize) -> CurtailShiftPerson {
    CurtailShiftPerson {
        b_fixed: fixed,
        b_curtail: curtail,
        b_shift: shift,
        t_curtail: tc,
        t_shift: ts,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn shift_load_is_conserved(
        f in vec(1u32..500, H),
        s in vec(0u32..500, H),
        p in points_strategy(),
        tc in 0usize..12,
        ts in 0usize..12,
    ) {
        // Integer-valued loads make every partial sum exact.
        let f: Vec<f64> = f.into_iter().map(f64::from).collect();
        let s: Vec<f64> = s.into_iter().map(f64::from).collect();
        let person = cs(f.clone(), vec![0.0; H], s.clone(), tc, ts);
        let d = curtail_shift_response(&person, &p).unwrap();
        let delivered: f64 = d.iter().zip(&f).map(|(d, f)| d - f).sum();
        prop_assert_eq!(delivered, s.iter().sum::<f64>());
    }

    #[test]
    fn exactly_min_t_hours_curtailed(p in points_strategy(), tc in 0usize..15) {
        let hours = curtailed_hours(&p, tc);
        prop_assert_eq!(hours.len(), tc.min(H));
        let mut sorted = hours.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), hours.len());
        for t in 0..H {
            prop_assert_eq!(hours.contains(&t), common::is_curtailed_oracle(&p, t, tc));
        }
    }

    #[test]
    fn response_matches_brute_force((f, c, s) in components(), p in points_strategy(), tc in 0usize..12, ts in 0usize..12) {
        let person = cs(f.clone(), c.clone(), s.clone(), tc, ts);
        let got = curtail_shift_response(&person, &p).unwrap();
        let want = common::curtail_shift_oracle(&f, &c, &s, &p, tc, ts);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn shift_target_is_window_optimal(p in points_strategy(), t in 0usize..H, ts in 0usize..12) {
        let target = shift_target(&p, t, ts);
        prop_assert!(target.abs_diff(t) <= ts);
        let lo = t.saturating_sub(ts);
        let hi = (t + ts).min(H - 1);
        for s in lo..=hi {
            prop_assert!(p[target] <= p[s]);
        }
        prop_assert_eq!(target, common::shift_target_oracle(&p, t, ts));
    }

    #[test]
    fn deterministic_response_within_bounds(
        p in vec(0.0f64..10.0, H),
        b in vec(1.0f64..40.0, H),
        lo in vec(1.0f64..20.0, H),
        width in vec(0.0f64..20.0, H),
        m in 0.5f64..2.0,
        kind in prop_oneof![Just(ResponseKind::Linear), Just(ResponseKind::Sinusoidal), Just(ResponseKind::ThresholdExponential)],
    ) {
        let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
        let person = DeterministicPerson { kind, multiplier: m, d_min: lo.clone(), d_max: hi.clone(), threshold: 5.0 };
        let d = deterministic_response(&person, &p, &b).unwrap();
        for t in 0..H {
            prop_assert!(lo[t] <= d[t] && d[t] <= hi[t]);
        }
    }

    #[test]
    fn linear_response_is_monotone(
        p in vec(0.0f64..10.0, H),
        b in vec(1.0f64..40.0, H),
        t in 0usize..H,
        bump in 0.0f64..5.0,
        m in 0.5f64..2.0,
    ) {
        let person = DeterministicPerson { kind: ResponseKind::Linear, multiplier: m, d_min: vec![2.0; H], d_max: vec![30.0; H], threshold: 5.0 };
        let base = deterministic_response(&person, &p, &b).unwrap();
        let mut q = p.clone();
        q[t] += bump;
        let raised = deterministic_response(&person, &q, &b).unwrap();
        prop_assert!(raised[t] <= base[t]);
        for s in (0..H).filter(|&s| s != t) {
            prop_assert_eq!(raised[s], base[s]);
        }
    }

    #[test]
    fn reward_branch_is_zero_or_minus_lambda(
        d in vec(0.1f64..40.0, H),
        g in vec(0.05f64..0.5, H),
        b in vec(1.0f64..40.0, H),
        lambda in 0.0f64..20.0,
        kappa in 0.05f64..1.5,
    ) {
        let cfg = RewardConfig { lambda, dhat_fraction: kappa };
        let out = compute_reward(&d, &g, &b, &cfg).unwrap();
        let cost: f64 = d.iter().zip(&g).map(|(x, y)| x * y).sum();
        // Exactly one of the two branches, bit for bit.
        let free = -cost.ln();
        prop_assert!(out.reward == free || out.reward == free - lambda, "reward {}", out.reward);
        let residual = out.reward + cost.ln();
        prop_assert!(residual.abs() < 1e-12 || (residual + lambda).abs() < 1e-12);
        let dhat = kappa * b.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>();
        prop_assert_eq!(out.penalized, cost < dhat);
    }

    #[test]
    fn step_cost_matches_recomputation(seed in any::<u64>(), kind in 0usize..4) {
        let mut rng = stream(seed);
        let person = [PersonKind::Linear, PersonKind::Sinusoidal, PersonKind::ThresholdExponential, PersonKind::CurtailAndShift][kind];
        let task = TaskSpec { person, multiplier: rng.random_range(0.5..2.0), baseline_seed: rng.random(), price_seed: rng.random() };
        let mut env = OfficeEnv::new(task, &EnvConfig::default()).unwrap();
        let action: Vec<f64> = (0..H).map(|_| rng.random_range(-3.0..13.0)).collect();
        let step = env.step(&action).unwrap();
        prop_assert!(step.done);
        prop_assert!(step.info.points.iter().all(|p| (0.0..=10.0).contains(p)));
        let cost: f64 = step.info.demand.iter().zip(&env.grid().price).map(|(d, g)| d * g).sum();
        prop_assert!((cost - step.info.cost).abs() <= 1e-12 * cost);
        prop_assert_eq!(step.obs.len(), 3 * H);
        prop_assert!(step.obs.iter().all(|x| x.is_finite()));
    }
}

#[test]
fn uniform_points_tie_rules() {
    let p = [4.0; H];
    assert_eq!(curtailed_hours(&p, 3), vec![0, 1, 2]);
    for t in 0..H {
        assert_eq!(shift_target(&p, t, 3), t.saturating_sub(3));
    }
}

#[test]
fn office_scenario_1000_units() {
    // 08:00 start; points peak over 11:00-14:00 (hours 3, 4, 5).
    let fixed = vec![40.0; H];
    let curtail = vec![30.0; H];
    let shift = vec![30.0; H];
    let mut p = vec![1.0; H];
    p[3..6].fill(9.0);
    let person = cs(fixed.clone(), curtail.clone(), shift.clone(), 3, 3);
    let d = curtail_shift_response(&person, &p).unwrap();
    let want = common::curtail_shift_oracle(&fixed, &curtail, &shift, &p, 3, 3);
    assert_eq!(d, want);
    for (t, &dt) in d.iter().enumerate().take(6).skip(3) {
        assert_eq!(dt, 40.0, "peak hour {t} keeps only fixed load");
    }
    assert_eq!(d.iter().sum::<f64>(), 1000.0 - 90.0);
    assert_eq!(d, vec![190.0, 100.0, 100.0, 40.0, 40.0, 40.0, 190.0, 70.0, 70.0, 70.0]);
}

#[test]
fn deterministic_response_reference_values() {
    let det = |kind, m, lo: f64, hi: f64| DeterministicPerson {
        kind,
        multiplier: m,
        d_min: vec![lo],
        d_max: vec![hi],
        threshold: 5.0,
    };
    let r = |p: &DeterministicPerson, x: f64, b: f64| deterministic_response(p, &[x], &[b]).unwrap()[0];
    assert_eq!(r(&det(ResponseKind::Linear, 1.0, 2.0, 18.0), 2.0, 10.0), 8.0);
    assert!((r(&det(ResponseKind::Sinusoidal, 2.0, 2.0, 18.0), std::f64::consts::PI, 10.0) - 10.0).abs() < 1e-12);
    let te = det(ResponseKind::ThresholdExponential, 1.0, 20.0, 180.0);
    assert_eq!(r(&te, 5.0, 100.0), 100.0);
    assert_eq!(r(&te, 6.0, 100.0), 20.0);
}

#[test]
fn reward_reference_values() {
    let cfg = RewardConfig {
        lambda: 10.0,
        dhat_fraction: 0.5,
    };
    assert_eq!(compute_reward(&[1.0], &[1.0], &[1.0], &cfg).unwrap().reward, 0.0);
    let e = std::f64::consts::E;
    assert!((compute_reward(&[e], &[1.0], &[e], &cfg).unwrap().reward + 1.0).abs() < 1e-15);
    // bᵀg = 4 so d̂ = 2; dᵀg = 1 = 0.5·d̂.
    let out = compute_reward(&[1.0], &[1.0], &[4.0], &cfg).unwrap();
    assert!(out.penalized);
    assert!((out.reward - (-(1.0f64).ln() - 10.0)).abs() < 1e-15);
    assert!(compute_reward(&[0.0], &[1.0], &[1.0], &cfg).is_err());
}

#[test]
fn baseline_quantiles_match_sort_oracle() {
    for seed in [0u64, 1, 2021, 99_999] {
        let prof = generate_baseline(seed, H).unwrap();
        // Reproduce the same 61 draws independently.
        let mut rng = stream(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let shape: Vec<f64> = (0..H)
            .map(|t| {
                let center = (H as f64 - 1.0) / 2.0;
                let width = H as f64 / 4.0;
                15.0 + 10.0 * (-0.5 * ((t as f64 - center) / width).powi(2)).exp()
            })
            .collect();
        let mut draw = || -> Vec<f64> { shape.iter().map(|s| (s + normal.sample(&mut rng)).max(1.0)).collect() };
        let history: Vec<Vec<f64>> = (0..HISTORY_DAYS).map(|_| draw()).collect();
        let baseline = draw();
        assert_eq!(prof.baseline, baseline);
        for t in 0..H {
            let col: Vec<f64> = history.iter().map(|d| d[t]).collect();
            assert_eq!(prof.d_min[t], common::quantile_oracle(&col, 0.05));
            assert_eq!(prof.d_max[t], common::quantile_oracle(&col, 0.95));
            assert!(prof.d_min[t] < prof.d_max[t]);
            assert!(prof.baseline[t] >= 1.0);
        }
    }
}

#[test]
fn baseline_is_seed_deterministic() {
    assert_eq!(generate_baseline(5, H).unwrap(), generate_baseline(5, H).unwrap());
    assert_ne!(generate_baseline(5, H).unwrap(), generate_baseline(6, H).unwrap());
}

#[test]
fn zero_action_linear_costs_baseline() {
    let task = TaskSpec {
        person: PersonKind::Linear,
        multiplier: 1.0,
        baseline_seed: 3,
        price_seed: 4,
    };
    let cfg = EnvConfig::default();
    let mut env = OfficeEnv::new(task, &cfg).unwrap();
    let prof = generate_baseline(3, H).unwrap();
    let step = env.step(&[0.0; H]).unwrap();
    let clipped: Vec<f64> = (0..H).map(|t| prof.baseline[t].clamp(prof.d_min[t], prof.d_max[t])).collect();
    assert_eq!(step.info.demand, clipped);
    let cost = env::dot(&clipped, &env.grid().price);
    assert!(!step.info.penalized);
    assert!((step.reward + cost.ln()).abs() < 1e-12);
}

#[test]
fn identical_steps_identical_outcomes() {
    let task = TaskSpec {
        person: PersonKind::CurtailAndShift,
        multiplier: 1.0,
        baseline_seed: 8,
        price_seed: 9,
    };
    let a = [3.0, 1.0, 7.5, 0.0, 10.0, 2.0, 9.0, 4.0, 4.0, 6.0];
    let mut e1 = OfficeEnv::new(task, &EnvConfig::default()).unwrap();
    let mut e2 = OfficeEnv::new(task, &EnvConfig::default()).unwrap();
    assert_eq!(e1.step(&a).unwrap(), e2.step(&a).unwrap());
}

#[test]
fn task_sampling_multinomial() {
    let dist = TaskDistribution::new(vec![
        PersonKind::Linear,
        PersonKind::Sinusoidal,
        PersonKind::ThresholdExponential,
    ]);
    let mut rng = stream(77);
    let n = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let t = sample_task(&dist, &mut rng).unwrap();
        assert!((0.5..=2.0).contains(&t.multiplier));
        counts[dist.kinds.iter().position(|k| *k == t.person).unwrap()] += 1;
    }
    let p = 1.0 / 3.0;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn task_sampling_degenerate_and_deterministic() {
    let single = TaskDistribution::new(vec![PersonKind::Sinusoidal]);
    let mut rng = stream(1);
    assert!((0..100).all(|_| sample_task(&single, &mut rng).unwrap().person == PersonKind::Sinusoidal));
    let dist = TaskDistribution::new(vec![PersonKind::Linear, PersonKind::Sinusoidal]);
    let a: Vec<_> = {
        let mut r = stream(5);
        (0..20).map(|_| sample_task(&dist, &mut r).unwrap()).collect()
    };
    let b: Vec<_> = {
        let mut r = stream(5);
        (0..20).map(|_| sample_task(&dist, &mut r).unwrap()).collect()
    };
    assert_eq!(a, b);
    assert!(sample_task(&TaskDistribution::new(vec![]), &mut rng).is_err());
}
