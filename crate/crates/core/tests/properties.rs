use drsel_core::belief::{ell, likelihood, logistic_prob, variational_likelihood, Context, GaussianBelief, Theta};
use drsel_core::ocs::{
    check_network, solve_budget, solve_budget_network, Bus, CustomerEvent, Line, NetworkSpec, RadialNetwork,
};
use drsel_core::par::Execution;
use drsel_core::sim::{
    generate_population, make_priors, run_ols, run_policy, step_environment, stream, stream_rng, Objective,
    Policy, SimConfig,
};
use drsel_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn events(d: &[f64], r: &[f64]) -> Vec<CustomerEvent> {
    d.iter()
        .zip(r)
        .enumerate()
        .map(|(i, (&d, &r))| CustomerEvent::new(i, d, r, Context::new(vec![])).unwrap())
        .collect()
}

fn spd(k: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_iterator(k, k, entries.iter().copied().cycle().take(k * k));
    &a * a.transpose() + DMatrix::identity(k, k) * 0.1
}

proptest! {
    #[test]
    fn ell_is_even_negative_and_bounded(xi in -1e3f64..1e3) {
        let l = ell(xi);
        prop_assert!(l < 0.0);
        prop_assert!(l.abs() <= 0.125);
        prop_assert_eq!(l, ell(-xi));
    }

    #[test]
    fn bound_never_exceeds_likelihood(
        w in prop::collection::vec(-4.0f64..4.0, 1..8),
        x in prop::collection::vec(-2.0f64..2.0, 8),
        xi in -20.0f64..20.0,
        z: bool,
    ) {
        let theta = Theta::new(w.clone()).unwrap();
        let ctx = Context::new(x[..w.len() - 1].to_vec());
        let exact = likelihood(z, &theta, &ctx).unwrap();
        let bound = variational_likelihood(z, &theta, &ctx, xi).unwrap();
        prop_assert!(bound <= exact * (1.0 + 1e-15));
        let p = logistic_prob(&theta, &ctx).unwrap();
        let want = if z { p } else { 1.0 - p };
        prop_assert!((exact - want).abs() <= 1e-15);
    }

    #[test]
    fn update_shrinks_variance_along_context(
        k in 2usize..8,
        entries in prop::collection::vec(-1.0f64..1.0, 64),
        x in prop::collection::vec(-2.0f64..2.0, 7),
        xi in 0.0f64..6.0,
        z: bool,
    ) {
        let prior = GaussianBelief::new(DVector::from_element(k, 0.1), spd(k, &entries)).unwrap();
        let ctx = Context::new(x[..k - 1].to_vec());
        let post = prior.posterior_update(&ctx, z, xi).unwrap();
        let v = |b: &GaussianBelief| ctx.augmented().dot(&(b.covariance() * ctx.augmented()));
        prop_assert!(v(&post) <= v(&prior) * (1.0 + 1e-12));
        // pure: same inputs, same output
        prop_assert_eq!(post, prior.posterior_update(&ctx, z, xi).unwrap());
        let once = prior.observe(&ctx, z, 3).unwrap();
        prop_assert_eq!(once, prior.observe(&ctx, z, 3).unwrap());
    }

    #[test]
    fn near_explicit_inverse(
        k in 2usize..=12,
        entries in prop::collection::vec(-1.0f64..1.0, 144),
        x in prop::collection::vec(0.0f64..2.0, 11),
        xi in 0.01f64..5.0,
        z: bool,
    ) {
        let cov = spd(k, &entries);
        let mean = DVector::from_fn(k, |i, _| entries[i]);
        let prior = GaussianBelief::new(mean.clone(), cov.clone()).unwrap();
        let ctx = Context::new(x[..k - 1].to_vec());
        let post = prior.posterior_update(&ctx, z, xi).unwrap();
        let xv = ctx.augmented();
        let prec = cov.try_inverse().unwrap();
        let cov_ref = (&prec + xv * xv.transpose() * (2.0 * ell(xi).abs())).try_inverse().unwrap();
        let mean_ref = &cov_ref * (&prec * &mean + xv * if z { 0.5 } else { -0.5 });
        prop_assert!((post.covariance() - &cov_ref).amax() <= 1e-10 * cov_ref.amax());
        prop_assert!((post.mean() - &mean_ref).amax() <= 1e-10 * mean_ref.amax().max(1.0));
    }

    #[test]
    fn larger_budget_never_hurts(
        d in prop::collection::vec(0.01f64..1.0, 1..25),
        seed: u64,
        b in 0.0f64..10.0,
        extra in 0.0f64..3.0,
    ) {
        let mut g = stream_rng(seed, 0, 0);
        let r: Vec<f64> = d.iter().map(|_| g.random_range(0.0..1.0)).collect();
        let p: Vec<f64> = d.iter().map(|_| g.random_range(0.0..1.0)).collect();
        let ev = events(&d, &r);
        let small = solve_budget(&ev, &p, b).unwrap().objective;
        let large = solve_budget(&ev, &p, b + extra).unwrap().objective;
        prop_assert!(large >= small - 1e-12 * small.max(1.0));
    }

    #[test]
    fn network_solutions_pass_the_check(
        n in 1usize..14,
        seed: u64,
        budget in 0.0f64..6.0,
    ) {
        let mut g = stream_rng(seed, 1, 0);
        let nb = g.random_range(2..7);
        let d: Vec<f64> = (0..n).map(|_| g.random_range(0.01..1.0)).collect();
        let r: Vec<f64> = (0..n).map(|_| g.random_range(0.0..1.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| g.random_range(0.0..1.0)).collect();
        let spec = NetworkSpec {
            buses: (0..nb)
                .map(|b| Bus {
                    id: b,
                    u_min: 0.95,
                    u_max: g.random_range(1.0..1.06),
                    p_in: if b == 0 { 0.0 } else { g.random_range(-0.5..0.1) },
                    q_in: 0.0,
                })
                .collect(),
            lines: (1..nb)
                .map(|k| Line {
                    from: g.random_range(0..k),
                    to: k,
                    r: g.random_range(0.0..0.05),
                    x: g.random_range(0.0..0.05),
                    s_cap: g.random_range(0.3..3.0),
                })
                .collect(),
            root: 0,
            root_u: 1.0,
            customer_bus: (0..n).map(|_| g.random_range(1..nb)).collect(),
            eta: (0..n).map(|_| g.random_range(-0.3..0.3)).collect(),
        };
        let net = RadialNetwork::new(spec).unwrap();
        let ev = events(&d, &r);
        match solve_budget_network(&ev, &p, budget, &net) {
            Ok(sol) => prop_assert!(check_network(&sol.selection, &ev, &net).unwrap().feasible),
            Err(Error::Infeasible) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn regret_is_nonnegative_and_values_bounded(
        n in 1usize..40,
        horizon in 0usize..25,
        seed: u64,
        policy in prop::sample::select(Policy::ALL.to_vec()),
    ) {
        let mut cfg = SimConfig::scaled(n, horizon);
        cfg.seed = seed;
        let pop = generate_population(&cfg, &mut stream_rng(seed, stream::POPULATION, 0)).unwrap();
        let total: f64 = pop.d.iter().sum();
        let tr = run_policy(&cfg, policy, &Objective::Budget, Execution::default()).unwrap();
        prop_assert_eq!(tr.steps.len(), horizon);
        let mut acc = 0.0;
        for s in &tr.steps {
            prop_assert!(s.step_regret >= -1e-9);
            prop_assert!(s.oracle_value <= total + 1e-12 && s.expected_reward <= total + 1e-12);
            prop_assert!(s.expected_reward >= 0.0);
            acc += s.step_regret;
            prop_assert_eq!(acc, s.cum_regret);
        }
    }
}

#[test]
fn traces_are_bit_identical_across_runs() {
    let mut cfg = SimConfig::scaled(60, 40);
    cfg.seed = 11;
    for policy in Policy::ALL {
        let a = run_policy(&cfg, policy, &Objective::Budget, Execution::default()).unwrap();
        let b = run_policy(&cfg, policy, &Objective::Budget, Execution::Sequential).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb, "{policy}");
    }
}

#[test]
fn realised_reward_is_centred_on_its_expectation() {
    let cfg = SimConfig::scaled(30, 1);
    let pop = generate_population(&cfg, &mut stream_rng(4, stream::POPULATION, 0)).unwrap();
    let ctx: Vec<Context> = (0..30).map(|_| Context::new(vec![1.0; 9])).collect();
    let ev: Vec<CustomerEvent> = (0..30)
        .map(|i| CustomerEvent::new(i, pop.d[i], pop.r[i], ctx[i].clone()).unwrap())
        .collect();
    let p: Vec<f64> = (0..30).map(|i| pop.truth.prob(i, &ctx[i]).unwrap()).collect();
    let sel = solve_budget(&ev, &p, 9.0).unwrap().selection;
    let f: f64 = sel.indices().iter().map(|&i| pop.d[i] * p[i]).sum();
    let mut g = stream_rng(4, stream::OUTCOME, 0);
    let draws = 10_000;
    let diffs: Vec<f64> = (0..draws)
        .map(|_| {
            let out = step_environment(&sel, &pop.truth, &ctx, &mut g).unwrap();
            out.iter().filter(|o| o.1).map(|&(i, _)| pop.d[i]).sum::<f64>() - f
        })
        .collect();
    let mean = diffs.iter().sum::<f64>() / draws as f64;
    let var = diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let se = (var / draws as f64).sqrt();
    assert!(mean.abs() <= 3.0 * se, "{mean} vs se {se}");
}

#[test]
fn sampled_probabilities_approach_the_truth() {
    let runs = 20;
    let mut good = 0;
    for seed in 0..runs {
        let mut cfg = SimConfig::scaled(50, 500);
        cfg.seed = seed;
        let pop = generate_population(&cfg, &mut stream_rng(seed, stream::POPULATION, 0)).unwrap();
        let priors = make_priors(&pop.truth, cfg.delta, cfg.sigma, &mut stream_rng(seed, stream::PRIOR, 0)).unwrap();
        let tr = run_ols(&cfg, &pop, priors, &Objective::Budget, Execution::default()).unwrap();
        let blocks: Vec<f64> = tr
            .steps
            .chunks(100)
            .map(|block| {
                let (mut err, mut count) = (0.0, 0usize);
                for s in block {
                    for (a, b) in s.policy_probs.iter().zip(&s.true_probs) {
                        err += (a - b).abs();
                        count += 1;
                    }
                }
                err / count.max(1) as f64
            })
            .collect();
        if blocks.windows(2).all(|w| w[1] <= w[0]) {
            good += 1;
        }
    }
    assert!(good * 10 >= runs * 9, "{good} of {runs} runs improve block by block");
}
