use proptest::prelude::*;

use gtb_core::config::{EnvConfig, InvestmentParams};
use gtb_core::env::{AgentAction, Env, PlannerAction, AGENT_ACTIONS, PLANNER_ACTIONS};
use gtb_core::fiscal::{redistribution_shares, TaxRate, TaxSchedule};
use gtb_core::governance::{borda_aggregate, filter_voters, invested_regen, split_by_ranking, InvestmentAllocation, Institution, Ranking};
use gtb_core::market::{Order, OrderBook, Side, MAX_PRICE};
use gtb_core::metrics::{equality, gini};
use gtb_core::policy::{AgentPolicyKind, PlannerPolicyKind, PolicySet};
use gtb_core::rng::{substream, Stream};
use gtb_core::units::{Coins, Resource};

fn schedule() -> impl Strategy<Value = TaxSchedule> {
    (prop::collection::vec(1i64..100_000, 6), prop::collection::vec(0u8..=20, 7)).prop_map(|(gaps, levels)| {
        let mut cutoffs = vec![Coins::ZERO];
        for g in gaps {
            let last = *cutoffs.last().unwrap();
            cutoffs.push(last + Coins::from_cents(g));
        }
        let rates = levels.into_iter().map(|l| TaxRate::from_level(l).unwrap()).collect();
        TaxSchedule::new(cutoffs, rates).unwrap()
    })
}

fn ranking() -> impl Strategy<Value = Ranking> {
    (0usize..6).prop_map(|i| Ranking::ALL[i])
}

proptest! {
    #[test]
    fn tax_is_monotone_and_bounded(s in schedule(), z in -100_000i64..2_000_000, dz in 0i64..100_000) {
        let t = s.tax(Coins::from_cents(z));
        prop_assert!(t >= Coins::ZERO);
        prop_assert!(t.cents() <= z.max(0));
        prop_assert!(s.tax(Coins::from_cents(z + dz)) >= t);
    }

    #[test]
    fn tax_never_rises_faster_than_income(s in schedule(), z in 0i64..1_000_000) {
        let lo = s.tax(Coins::from_cents(z)).cents();
        let hi = s.tax(Coins::from_cents(z + 20)).cents();
        prop_assert!(hi - lo <= 20);
    }

    #[test]
    fn redistribution_is_exact_and_even(cents in 0i64..10_000_000, n in 1usize..30) {
        let shares = redistribution_shares(Coins::from_cents(cents), n);
        prop_assert_eq!(shares.iter().copied().sum::<Coins>(), Coins::from_cents(cents));
        let max = shares.iter().max().unwrap().cents();
        let min = shares.iter().min().unwrap().cents();
        prop_assert!(max - min <= 1);
    }

    #[test]
    fn split_preserves_amount_and_order(cents in 0i64..10_000_000, r in ranking()) {
        let a = split_by_ranking(Coins::from_cents(cents), r);
        prop_assert_eq!(a.total(), Coins::from_cents(cents));
        let [first, second, third] = r.order();
        prop_assert!(a.get(first) >= a.get(second) && a.get(second) >= a.get(third));
    }

    #[test]
    fn invested_regen_never_falls_below_base(cents in prop::array::uniform3(0i64..1_000_000), base in prop::array::uniform3(0.0f64..0.1)) {
        let params = InvestmentParams::default();
        let alloc = InvestmentAllocation(cents.map(Coins::from_cents));
        let regen = invested_regen(base, &alloc, &params);
        for i in 0..3 {
            prop_assert!(regen[i] >= base[i].min(params.regen_max));
            prop_assert!(regen[i] <= params.regen_max);
        }
    }

    #[test]
    fn borda_ignores_vote_order(mut votes in prop::collection::vec(ranking(), 0..15), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let before = borda_aggregate(&votes);
        votes.shuffle(&mut substream(seed, Stream::Order, 0));
        prop_assert_eq!(borda_aggregate(&votes), before);
    }

    #[test]
    fn unanimous_vote_wins(r in ranking(), n in 1usize..10) {
        prop_assert_eq!(borda_aggregate(&vec![r; n]), r);
    }

    #[test]
    fn voter_filters_are_sorted_subsets(coins in prop::collection::vec(0i64..10_000, 1..20), seed in any::<u64>(), period in 0u64..100) {
        let coins: Vec<Coins> = coins.into_iter().map(Coins::from_cents).collect();
        let n = coins.len();
        for inst in [Institution::Inclusive, Institution::Arbitrary, Institution::Extractive] {
            let chosen = filter_voters(inst, &coins, seed, period);
            prop_assert!(chosen.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(chosen.iter().all(|&i| i < n));
            let expect = if inst == Institution::Inclusive { n } else { (n / 2).max(1) };
            prop_assert_eq!(chosen.len(), expect);
        }
        let rich = filter_voters(Institution::Extractive, &coins, seed, period);
        let poorest_chosen = rich.iter().map(|&i| coins[i]).min().unwrap();
        for i in (0..n).filter(|i| !rich.contains(i)) {
            prop_assert!(coins[i] <= poorest_chosen);
        }
    }

    #[test]
    fn equality_is_bounded_and_scale_free(cents in prop::collection::vec(0i64..1_000_000, 2..20), k in 1i64..100) {
        let c: Vec<f64> = cents.iter().map(|&x| Coins::from_cents(x).as_f64()).collect();
        let scaled: Vec<f64> = cents.iter().map(|&x| Coins::from_cents(x * k).as_f64()).collect();
        let e = equality(&c);
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert!((equality(&scaled) - e).abs() < 1e-9);
        let n = c.len() as f64;
        prop_assert!(gini(&c) <= (n - 1.0) / n + 1e-12);
    }

    #[test]
    fn order_book_never_rests_crossed(orders in prop::collection::vec((0usize..3, 0usize..6, any::<bool>(), 0u8..=MAX_PRICE), 1..200), seed in any::<u64>()) {
        let mut book = OrderBook::new();
        let mut rng = substream(seed, Stream::Market, 0);
        for (id, (r, agent, bid, price)) in orders.into_iter().enumerate() {
            let order = Order {
                id: id as u64,
                agent,
                resource: Resource::ALL[r],
                side: if bid { Side::Bid } else { Side::Ask },
                price,
                placed_at: id as u64 / 4,
            };
            if let Ok(Some(fill)) = book.submit(order, &mut rng) {
                prop_assert!(fill.buyer != fill.seller);
                prop_assert!(fill.bid_id != fill.ask_id);
            }
            for r in Resource::ALL {
                prop_assert!(!book.is_crossed(r));
            }
        }
    }

    #[test]
    fn action_ids_round_trip(agent in 0usize..AGENT_ACTIONS, planner in 0usize..PLANNER_ACTIONS) {
        prop_assert_eq!(AgentAction::from_id(agent).unwrap().id(), agent);
        prop_assert_eq!(PlannerAction::from_id(planner).unwrap().id(), planner);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_play_preserves_invariants(seed in any::<u64>(), heuristic in any::<bool>(), redistribute in any::<bool>()) {
        let mut config = EnvConfig { steps_per_episode: 200, ..EnvConfig::default() };
        if redistribute {
            config.disposition = gtb_core::fiscal::DispositionMode::Redistribute;
        }
        let mut env = Env::new(config, seed).unwrap();
        let agents = if heuristic { AgentPolicyKind::Heuristic } else { AgentPolicyKind::Random };
        let mut policies = PolicySet::new(agents, PlannerPolicyKind::Random, Ranking::DEFAULT, &env);
        let mut obs = env.observations();
        while !env.done() {
            let (a, p) = policies.act(&env, &obs);
            obs = env.step(&a, &p).unwrap().observations;
            if let Err(m) = env.check_invariants() {
                prop_assert!(false, "step {}: {}", env.current_step(), m);
            }
        }
    }
}
