use std::collections::HashSet;
use std::sync::Arc;

use proptest::collection::vec;
use proptest::prelude::*;

use coldstart::dataset::{self, ProblemKind, RatingDataset, RatingTriple};
use coldstart::evaluator::{run_experiment, EvalSet, ReplayConfig};
use coldstart::imputation::{fill, BaseMatrix, ImputationMethod};
use coldstart::linalg::{self, Matrix};
use coldstart::policies::{
    argmax_lowest, exp3_distribution, ALinUcb, Decision, LinUcb, LinUcbInverse, Policy, PolicySpec,
};

fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-3.0f64..3.0, 1..=max_len)
}

/// Sparse ratings on a `users × items` grid where every user has at least one rating.
fn ratings(max_users: usize, max_items: usize, scale: f64) -> impl Strategy<Value = RatingDataset> {
    (2..=max_users, 1..=max_items)
        .prop_flat_map(move |(u, i)| {
            (
                Just(u),
                Just(i),
                vec(proptest::option::of(0.0..=scale), u * i),
            )
        })
        .prop_map(move |(u, i, cells)| {
            let mut triples = Vec::new();
            for (idx, cell) in cells.iter().enumerate() {
                if let Some(r) = cell {
                    triples.push(RatingTriple {
                        user: idx / i,
                        item: idx % i,
                        rating: *r,
                    });
                }
            }
            for user in 0..u {
                if !triples.iter().any(|t| t.user == user) {
                    triples.push(RatingTriple {
                        user,
                        item: user % i,
                        rating: scale / 2.0,
                    });
                }
            }
            RatingDataset::new(u, i, triples, scale).unwrap()
        })
}

fn base_strategy(max_k: usize, max_n: usize) -> impl Strategy<Value = BaseMatrix> {
    (1..=max_k, 1..=max_n).prop_flat_map(|(k, n)| {
        vec(0.0f64..=1.0, k * n).prop_map(move |v| {
            BaseMatrix::from_contexts(Matrix::from_vec(n, k, v).unwrap()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_one_inverse_is_an_inverse(x in finite_vec(50)) {
        let k = x.len();
        let a = Matrix::identity(k).add(&Matrix::outer(&x, &x)).unwrap();
        let prod = a.matmul(&linalg::rank_one_identity_inverse(&x).unwrap()).unwrap();
        prop_assert!(prod.max_abs_diff(&Matrix::identity(k)) < 1e-10);
    }

    #[test]
    fn fixed_quadratic_form_closed_form(x in finite_vec(50)) {
        let n2 = linalg::norm_sq(&x);
        let q = linalg::fixed_quadratic_form(&x).unwrap();
        prop_assert!((q - n2 / (1.0 + n2)).abs() < 1e-12);
        prop_assert!((0.0..1.0).contains(&q));
    }

    #[test]
    fn more_pulls_shrink_the_inverse(x in finite_vec(12), t in prop::sample::select(vec![1.0, 2.0, 5.0, 10.0, 100.0])) {
        let k = x.len();
        let once = linalg::invert(&Matrix::identity(k).add(&Matrix::outer(&x, &x)).unwrap()).unwrap();
        let many = linalg::invert(&Matrix::identity(k).add(&Matrix::outer(&x, &x).scale(t)).unwrap()).unwrap();
        prop_assert!(linalg::psd_order_holds(&many, &once, 1e-12).unwrap());
    }

    #[test]
    fn ridge_solution_zeroes_the_gradient(
        (rows, cols, d, b) in (1usize..12, 1usize..6).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), vec(-2.0f64..2.0, r * c), vec(-2.0f64..2.0, r))
        }),
        lambda in 0.05f64..5.0,
    ) {
        let d = Matrix::from_vec(rows, cols, d).unwrap();
        let theta = linalg::ridge_solve(&d, &b, lambda).unwrap();
        let resid: Vec<f64> = d.mul_vec(&theta).unwrap().iter().zip(&b).map(|(p, y)| p - y).collect();
        let grad: Vec<f64> = d.transpose().mul_vec(&resid).unwrap().iter().zip(&theta).map(|(g, t)| 2.0 * g + 2.0 * lambda * t).collect();
        prop_assert!(linalg::norm_sq(&grad).sqrt() <= 1e-8);
    }

    #[test]
    fn normalized_ratings_are_unit_interval(d in ratings(8, 8, 5.0)) {
        let n = dataset::normalize(&d);
        prop_assert!(n.triples().iter().all(|t| (0.0..=1.0).contains(&t.rating)));
        prop_assert_eq!(n.len(), d.len());
    }

    #[test]
    fn orient_new_item_is_an_involution(d in ratings(8, 8, 5.0)) {
        let twice = dataset::orient(&dataset::orient(&d, ProblemKind::NewItem), ProblemKind::NewItem);
        prop_assert_eq!(twice, d);
    }

    #[test]
    fn split_partitions_rows(d in ratings(12, 6, 5.0), seed in any::<u64>(), frac in 0.0f64..1.0) {
        let k = 1 + ((d.n_users() - 1) as f64 * frac) as usize;
        let k = k.min(d.n_users() - 1);
        let s = dataset::split_base_eval(&d, k, seed).unwrap();
        prop_assert_eq!(s.base_row_ids.len() + s.eval_row_ids.len(), d.n_users());
        let base: HashSet<_> = s.base_row_ids.iter().collect();
        prop_assert!(s.eval_row_ids.iter().all(|u| !base.contains(u)));
        prop_assert_eq!(s.base_raw.len() + s.eval.len(), d.len());
    }

    #[test]
    fn csv_round_trip(d in ratings(10, 10, 5.0)) {
        let mut buf = Vec::new();
        dataset::write_csv_triples(&d, &mut buf).unwrap();
        let back = dataset::parse_csv_triples(buf.as_slice(), 5.0).unwrap();
        prop_assert_eq!(back.triples(), d.triples());
        prop_assert_eq!(back.n_users(), d.n_users());
    }

    #[test]
    fn movielens_parse_then_csv_round_trip(d in ratings(10, 10, 5.0), ts in any::<u32>()) {
        let mut text = String::new();
        for t in d.triples() {
            text.push_str(&format!("{}::{}::{}::{}\n", t.user + 1, t.item + 1, t.rating, ts));
        }
        let ml = dataset::parse_movielens(text.as_bytes()).unwrap();
        prop_assert_eq!(ml.triples(), d.triples());
        let mut buf = Vec::new();
        dataset::write_csv_triples(&ml, &mut buf).unwrap();
        let back = dataset::parse_csv_triples(buf.as_slice(), 5.0).unwrap();
        prop_assert_eq!(back.triples(), ml.triples());
    }

    #[test]
    fn fills_respect_observed_values_and_bounds(d in ratings(8, 8, 1.0), seed in any::<u64>()) {
        let zero = fill(&d, ImputationMethod::Zero, seed).unwrap();
        for t in d.triples() {
            prop_assert_eq!(zero.context(t.item)[t.user].to_bits(), t.rating.to_bits());
        }
        let avg = fill(&d, ImputationMethod::ItemAverage, seed).unwrap();
        for j in 0..d.n_items() {
            let col: Vec<f64> = d.triples().iter().filter(|t| t.item == j).map(|t| t.rating).collect();
            let mean = if col.is_empty() { 0.0 } else { col.iter().sum::<f64>() / col.len() as f64 };
            for u in 0..d.n_users() {
                let observed = d.user_ratings(u).iter().any(|t| t.item == j);
                if !observed {
                    prop_assert!((avg.context(j)[u] - mean).abs() < 1e-12);
                }
            }
        }
        for m in [
            ImputationMethod::Zero,
            ImputationMethod::ItemAverage,
            ImputationMethod::ImputedSvd { rank: 2 },
            ImputationMethod::AlsWr { rank: 2, lambda: 0.05, iters: 5 },
        ] {
            let x = fill(&d, m, seed).unwrap();
            for j in 0..x.n() {
                prop_assert!(x.context(j).iter().all(|v| (0.0..=1.0).contains(v)));
                let recomputed = linalg::norm_sq(x.context(j));
                prop_assert!((x.column_norms_sq()[j] - recomputed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn argmax_ignores_positive_scaling(scores in vec(-5.0f64..5.0, 1..30), c in 0.01f64..100.0, mask in any::<u32>()) {
        let mut available: Vec<usize> = (0..scores.len()).filter(|j| mask >> (j % 32) & 1 == 1).collect();
        if available.is_empty() {
            available.push(0);
        }
        let plain = argmax_lowest(&available, |j| scores[j]);
        let scaled = argmax_lowest(&available, |j| c * scores[j]);
        prop_assert_eq!(plain, scaled);
    }

    #[test]
    fn exp3_distribution_bounds(weights in vec(1e-6f64..1.0, 1..40), gamma in 0.001f64..1.0) {
        let n = weights.len() as f64;
        let p = exp3_distribution(&weights, gamma);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for &pj in &p {
            prop_assert!(pj >= gamma / n - 1e-15 && pj <= 1.0 - gamma + gamma / n + 1e-15);
        }
    }

    #[test]
    fn linucb_width_never_grows(base in base_strategy(6, 4), rewards in vec(0.0f64..=1.0, 1..20)) {
        let base = Arc::new(base);
        let mut p = LinUcb::new(Arc::clone(&base), 1.0, LinUcbInverse::Dense).unwrap();
        let mut last = p.width(0);
        for r in rewards {
            p.update(0, r).unwrap();
            let w = p.width(0);
            prop_assert!(w <= last + 1e-15);
            last = w;
        }
    }

    #[test]
    fn alinucb_widths_are_constant(base in base_strategy(6, 5), steps in vec((0usize..5, 0.0f64..=1.0), 1..40)) {
        let mut p = ALinUcb::new(&base, 0.5).unwrap();
        let initial: Vec<u64> = p.widths().iter().map(|w| w.to_bits()).collect();
        let all: Vec<usize> = (0..base.n()).collect();
        for (t, (arm, r)) in steps.into_iter().enumerate() {
            let _ = p.select(&Decision { t: t + 1, user: 0, available: &all }).unwrap();
            p.update(arm % base.n(), r).unwrap();
            let now: Vec<u64> = p.widths().iter().map(|w| w.to_bits()).collect();
            prop_assert_eq!(&now, &initial);
        }
    }

    #[test]
    fn every_policy_picks_available_arms_reproducibly(
        base in base_strategy(4, 6),
        seed in any::<u64>(),
        masks in vec(any::<u8>(), 1..25),
    ) {
        let base = Arc::new(base);
        let n = base.n();
        let specs = [
            PolicySpec::Random,
            PolicySpec::Aver,
            PolicySpec::EGreedy { c: 0.1, d: 0.5 },
            PolicySpec::Ucb,
            PolicySpec::Exp3 { gamma: 0.1 },
            PolicySpec::Thompson { v: 0.1 },
            PolicySpec::LinUcb { alpha: 0.5 },
            PolicySpec::ALinUcb { alpha: 0.5 },
        ];
        for spec in specs {
            let mut a = spec.build(Arc::clone(&base), seed).unwrap();
            let mut b = spec.build(Arc::clone(&base), seed).unwrap();
            for (t, mask) in masks.iter().enumerate() {
                let mut available: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
                if available.is_empty() {
                    available.push(t % n);
                }
                let d = Decision { t: t + 1, user: 0, available: &available };
                let pa = a.select(&d).unwrap();
                prop_assert_eq!(pa, b.select(&d).unwrap());
                prop_assert!(available.contains(&pa));
                let r = (t % 3) as f64 / 2.0;
                a.update(pa, r).unwrap();
                b.update(pa, r).unwrap();
            }
            let single = [n - 1];
            prop_assert_eq!(a.select(&Decision { t: 99, user: 0, available: &single }).unwrap(), n - 1);
        }
    }

    #[test]
    fn replay_trace_invariants(d in ratings(6, 5, 1.0), user_seed in any::<u64>(), horizon in 1usize..60) {
        let y = EvalSet::from_dataset(&d);
        let n = d.n_items();
        let base = Arc::new(BaseMatrix::from_contexts(Matrix::from_vec(n, 2, vec![0.5; 2 * n]).unwrap()).unwrap());
        let cfg = ReplayConfig { horizon, user_seed };
        let mut users_seen = Vec::new();
        for spec in [PolicySpec::Random, PolicySpec::ALinUcb { alpha: 0.1 }, PolicySpec::Exp3 { gamma: 0.2 }] {
            let mut p = spec.build(Arc::clone(&base), 5).unwrap();
            let trace = run_experiment(&cfg, n, &y, p.as_mut()).unwrap();
            prop_assert_eq!(trace.steps(), horizon.min(d.n_users() * n));
            prop_assert_eq!(trace.early_stopped, horizon > d.n_users() * n);
            let mut pairs = HashSet::new();
            let mut sum = 0.0;
            for (rec, cum) in trace.records.iter().zip(&trace.cumulative) {
                prop_assert!(rec.increment >= 0.0);
                prop_assert_eq!(rec.increment, rec.best - rec.revealed);
                prop_assert!(pairs.insert((rec.user, rec.arm)));
                sum += rec.increment;
                prop_assert!((sum - cum).abs() <= 1e-9);
            }
            prop_assert!(trace.cumulative.windows(2).all(|w| w[1] >= w[0]));
            users_seen.push(trace.records.iter().map(|r| r.user).collect::<Vec<_>>());
        }
        // The user sequence does not depend on the policy.
        prop_assert!(users_seen.windows(2).all(|w| w[0] == w[1]));
    }
}
