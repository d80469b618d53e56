//! Fusion, thresholding and F1 properties.

use std::collections::BTreeSet;

use kgrelex_core::aggregate::{aggregate, bce_loss, f1_metrics, predict, AggregationConfig, Fact, PairScore};
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn fact(i: u8) -> Fact {
    Fact {
        doc_id: format!("d{}", i % 3),
        head: (i / 3 % 3) as usize,
        tail: (i / 9 % 3) as usize,
        relation: format!("r{}", i / 27),
        head_name: format!("h{}", i / 3 % 3),
        tail_name: format!("t{}", i / 9 % 3),
    }
}

fn fact_set() -> impl Strategy<Value = BTreeSet<Fact>> {
    prop::collection::btree_set((0u8..54).prop_map(fact), 0..12)
}

fn scores(n_rel: usize) -> impl Strategy<Value = Vec<PairScore>> {
    prop::collection::vec(prop::collection::vec(unit(), n_rel), 0..8).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, final_probs)| PairScore {
                doc_id: "d".into(),
                head: i,
                tail: i + 1,
                head_name: format!("e{i}"),
                tail_name: format!("e{}", i + 1),
                reasoning: final_probs.clone(),
                linkpred: final_probs.clone(),
                winners: vec![None; final_probs.len()],
                final_probs,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn aggregate_is_monotone(r in unit(), l in unit(), dr in unit(), dl in unit(), lambda in unit()) {
        let base = aggregate(r, l, lambda).unwrap();
        prop_assert!(aggregate((r + dr).min(1.0), l, lambda).unwrap() >= base);
        prop_assert!(aggregate(r, (l + dl).min(1.0), lambda).unwrap() >= base);
    }

    #[test]
    fn aggregate_stays_between_inputs(r in unit(), l in unit(), lambda in unit()) {
        let f = aggregate(r, l, lambda).unwrap();
        prop_assert!(f >= r.min(l) && f <= r.max(l));
    }

    #[test]
    fn predict_is_a_filter(scores in scores(3), threshold in 0.01..0.99f64) {
        let rels: Vec<String> = (0..3).map(|r| format!("r{r}")).collect();
        let config = AggregationConfig { threshold, ..AggregationConfig::default() };
        let set = predict(&scores, &rels, &config);
        let mut expected = BTreeSet::new();
        for s in &scores {
            for (r, &p) in s.final_probs.iter().enumerate() {
                if p >= threshold {
                    expected.insert((s.head, r, s.tail));
                }
            }
        }
        let got: BTreeSet<_> = set
            .predictions
            .iter()
            .map(|p| (p.fact.head, rels.iter().position(|r| *r == p.fact.relation).unwrap(), p.fact.tail))
            .collect();
        prop_assert_eq!(got, expected);
        prop_assert!(set.predictions.iter().all(|p| p.prob >= threshold));
    }

    #[test]
    fn lower_thresholds_predict_more(scores in scores(2), a in 0.01..0.99f64, b in 0.01..0.99f64) {
        let rels = vec!["r0".to_string(), "r1".to_string()];
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let at = |t: f64| predict(&scores, &rels, &AggregationConfig { threshold: t, ..AggregationConfig::default() }).facts();
        prop_assert!(at(lo).is_superset(&at(hi)));
    }

    #[test]
    fn f1_without_training_facts(pred in fact_set(), gold in fact_set()) {
        let s = f1_metrics(&pred, &gold, &BTreeSet::new());
        prop_assert_eq!(s.f1, s.ign_f1);
        let correct = pred.intersection(&gold).count() as f64;
        let expected = if pred.is_empty() || gold.is_empty() || correct == 0.0 {
            0.0
        } else {
            2.0 * correct / (pred.len() + gold.len()) as f64
        };
        prop_assert!((s.f1 - expected).abs() < 1e-12);
    }

    #[test]
    fn bce_matches_scalar_loop(rows in prop::collection::vec(prop::collection::vec((unit(), any::<bool>()), 3), 1..6)) {
        let probs: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|c| c.0).collect()).collect();
        let labels: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|c| c.1 as u8 as f64).collect()).collect();
        let mut total = 0.0;
        let mut n = 0.0;
        for row in &rows {
            for &(p, y) in row {
                let p = p.max(1e-7).min(1.0 - 1e-7);
                total += if y { -p.ln() } else { -(1.0 - p).ln() };
                n += 1.0;
            }
        }
        prop_assert!((bce_loss(&probs, &labels).unwrap() - total / n).abs() < 1e-12);
    }
}
