use ara_core::belief::{
    assess_neighbors, incorporate_observation, reduction_posterior, type_posterior_gamma,
    update_type_belief, Candidate, Component, MixtureBelief, NeighborAssessment, Observation,
    PayoffLikelihood,
};
use ara_core::network::{EdgeId, NodeId};
use ara_core::niw::{condition_niw, niw_to_mvt, Coord, NiwParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-conditioned SPD matrix `A A^T + p I`.
fn spd(p: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_iterator(p, p, entries.iter().copied());
    &a * a.transpose() + DMatrix::identity(p, p) * p as f64
}

fn coords(p: usize) -> Vec<Coord> {
    (0..p).map(|i| Coord::Payoff(NodeId(i))).collect()
}

prop_compose! {
    fn niw_instance()(p in 3usize..7)
        (p in Just(p),
         entries in prop::collection::vec(-1.0f64..1.0, p * p),
         mu in prop::collection::vec(-5.0f64..5.0, p),
         extra in 2.0f64..12.0,
         values in prop::collection::vec(-6.0f64..6.0, p),
         order in Just((0..p).collect::<Vec<_>>()).prop_shuffle(),
         split in 1usize..p)
        -> (NiwParams, Vec<(Coord, f64)>, usize)
    {
        let params = NiwParams::new(DVector::from_vec(mu), spd(p, &entries), p as f64 + extra, coords(p)).unwrap();
        // Observe all but one coordinate, in a random order.
        let observed: Vec<(Coord, f64)> = order[..p - 1].iter().map(|&i| (Coord::Payoff(NodeId(i)), values[i])).collect();
        (params, observed, split.min(p - 1))
    }
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(1.0);
    (a - b).amax() / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn conditioning_is_closed_and_sequentially_coherent((params, observed, split) in niw_instance()) {
        let p = params.dim();
        let k = observed.len();
        let joint = condition_niw(&params, &observed).unwrap();
        prop_assert_eq!(joint.dim(), p - k);
        prop_assert_eq!(joint.nu(), params.nu() - k as f64);
        prop_assert!(joint.is_positive_definite());
        prop_assert!(observed.iter().all(|(c, _)| !joint.index().contains(*c)));

        let first = condition_niw(&params, &observed[..split]).unwrap();
        prop_assert_eq!(first.dim(), p - split);
        prop_assert!(first.is_positive_definite());
        let seq = condition_niw(&first, &observed[split..]).unwrap();
        prop_assert_eq!(seq.index().coords(), joint.index().coords());
        prop_assert_eq!(seq.nu(), joint.nu());
        let mu_a = DMatrix::from_column_slice(joint.dim(), 1, joint.mu().as_slice());
        let mu_b = DMatrix::from_column_slice(seq.dim(), 1, seq.mu().as_slice());
        prop_assert!(max_rel(&mu_a, &mu_b) < 1e-10, "means differ: {} vs {}", mu_a, mu_b);
        prop_assert!(max_rel(joint.psi(), seq.psi()) < 1e-10);
    }

    #[test]
    fn mvt_dof_identity((params, observed, _) in niw_instance()) {
        for b in [params.clone(), condition_niw(&params, &observed).unwrap()] {
            let t = niw_to_mvt(&b).unwrap();
            prop_assert_eq!(t.dof(), b.nu() - b.dim() as f64 + 1.0);
            prop_assert_eq!(b.t_dof(), t.dof());
        }
    }

    #[test]
    fn gamma_equals_pi_when_likelihoods_match(
        q1 in 0.0f64..1.0, q2_frac in 0.0f64..1.0, pi in 0.0f64..1.0, ln_f in -600.0f64..5.0,
    ) {
        let q2 = (1.0 - q1) * q2_frac;
        let part = [PayoffLikelihood { weight: 1.0, ln_f_x: ln_f, ln_f_x_star: ln_f }];
        prop_assert_eq!(type_posterior_gamma(q1, q2, pi, &part).value, pi);
    }

    #[test]
    fn posteriors_are_monotone_in_reduced_likelihood(
        q1 in 0.0f64..1.0, q2_frac in 0.0f64..1.0, pi in 0.0f64..1.0,
        ln_f in -30.0f64..0.0, lo in -30.0f64..0.0, step in 0.0f64..10.0,
    ) {
        let q2 = (1.0 - q1) * q2_frac;
        let at = |ln_star: f64| [PayoffLikelihood { weight: 1.0, ln_f_x: ln_f, ln_f_x_star: ln_star }];
        let (a, b) = (at(lo), at(lo + step));
        let (ra, rb) = (reduction_posterior(q1, q2, pi, &a).value, reduction_posterior(q1, q2, pi, &b).value);
        prop_assert!(rb >= ra - 1e-12);
        // gamma moves with f(x*) only in the direction of q1 - q2.
        let (ga, gb) = (type_posterior_gamma(q1, q2, pi, &a).value, type_posterior_gamma(q1, q2, pi, &b).value);
        if q1 >= q2 {
            prop_assert!(gb >= ga - 1e-12);
        } else {
            prop_assert!(gb <= ga + 1e-12);
        }
        for v in [ra, rb, ga, gb] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn beta_update_adds_exactly_one(alpha in 0.1f64..50.0, beta in 0.1f64..50.0, gamma in 0.0f64..=1.0) {
        let prior = NiwParams::new(DVector::zeros(2), DMatrix::identity(2, 2), 6.0, coords(2)).unwrap();
        let b = MixtureBelief::new(prior, alpha, beta, 1e-3).unwrap();
        let u = update_type_belief(&b, gamma).unwrap();
        prop_assert_eq!(u.alpha(), alpha + gamma);
        prop_assert_eq!(u.beta(), beta + (1.0 - gamma));
        prop_assert!(((u.alpha() + u.beta()) - (alpha + beta) - 1.0).abs() <= 4.0 * f64::EPSILON * (alpha + beta + 1.0));
    }
}

/// Two neighbours reached over edges 0, 1; payoffs of nodes 1, 2 and an
/// unrelated node 3.
fn neighbour_prior(entries: &[f64], mu: &[f64]) -> NiwParams {
    let c = vec![
        Coord::Cost(EdgeId(0)),
        Coord::Cost(EdgeId(1)),
        Coord::Payoff(NodeId(1)),
        Coord::Payoff(NodeId(2)),
        Coord::Payoff(NodeId(3)),
    ];
    NiwParams::new(DVector::from_column_slice(mu), spd(5, entries), 10.0, c).unwrap()
}

fn cands() -> Vec<Candidate> {
    vec![Candidate { node: NodeId(1), edge: EdgeId(0) }, Candidate { node: NodeId(2), edge: EdgeId(1) }]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn updates_keep_the_weight_simplex(
        entries in prop::collection::vec(-1.0f64..1.0, 25),
        mu in prop::collection::vec(0.0f64..8.0, 5),
        x1 in 0.0f64..10.0, c1 in 0.0f64..4.0, x3 in 0.0f64..10.0,
        eps in prop_oneof![Just(0.0), Just(1e-3), Just(0.2)],
        seed in any::<u64>(),
    ) {
        let prior = neighbour_prior(&entries, &mu);
        let mut belief = MixtureBelief::new(prior, 1.0, 1.0, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = assess_neighbors(&belief, &cands(), 0.3, 1_000, &mut rng).unwrap();
        let obs = Observation::new(NodeId(1), x1, EdgeId(0), c1, 0.3);
        let inc = incorporate_observation(&belief, &obs, a.iter().find(|a| a.node == NodeId(1)), true).unwrap();
        belief = inc.belief;
        let g = inc.gamma.unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
        prop_assert!((belief.alpha() + belief.beta() - 3.0).abs() < 1e-12);
        // A second split on a coordinate no assessment covered.
        let a3 = NeighborAssessment { node: NodeId(3), edge: EdgeId(1), delta_mean: 0.0, q1: 0.4, q2: 0.5, expected_payoff: 0.0, expected_cost: 0.0 };
        let obs3 = Observation::new(NodeId(3), x3, EdgeId(1), 1.0, 0.3);
        let belief = incorporate_observation(&belief, &obs3, Some(&a3), true).unwrap().belief;
        let total: f64 = belief.components().iter().map(|k: &Component| k.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(belief.components().iter().all(|k| k.weight > 0.0));
        prop_assert!(belief.component_count() >= 1 && belief.component_count() <= 4);
        if eps > 0.0 {
            prop_assert!(belief.components().iter().all(|k| k.weight >= eps) || belief.component_count() == 1);
        }
    }

    #[test]
    fn assessment_is_seed_deterministic_and_sums_to_one(
        entries in prop::collection::vec(-1.0f64..1.0, 25),
        mu in prop::collection::vec(0.0f64..8.0, 5),
        seed in any::<u64>(),
    ) {
        let belief = MixtureBelief::new(neighbour_prior(&entries, &mu), 1.0, 1.0, 1e-3).unwrap();
        let run = || assess_neighbors(&belief, &cands(), 0.3, 1_000, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (a, b) = (run(), run());
        prop_assert_eq!(&a, &b);
        let s1: f64 = a.iter().map(|x| x.q1).sum();
        let s2: f64 = a.iter().map(|x| x.q2).sum();
        prop_assert!((s1 - 1.0).abs() < 1e-12 && (s2 - 1.0).abs() < 1e-12);
        for x in &a {
            prop_assert!(x.q1 >= 0.0 && x.q2 >= 0.0 && x.q1 <= 1.0 && x.q2 <= 1.0);
        }
    }
}
