use dgwm::analysis::{partition_features, pl_agreement};
use dgwm::pipeline::pseudo_label_from_logits;
use dgwm::Tensor;
use proptest::prelude::*;

fn logits() -> impl Strategy<Value = Tensor> {
    (1usize..12, 2usize..7).prop_flat_map(|(n, c)| {
        prop::collection::vec(-8.0f64..8.0, n * c).prop_map(move |v| Tensor::new(vec![n, c], v).unwrap())
    })
}

proptest! {
    #[test]
    fn higher_threshold_accepts_a_subset(z in logits(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let r_lo = pseudo_label_from_logits(&z, lo, None).unwrap();
        let r_hi = pseudo_label_from_logits(&z, hi, None).unwrap();
        for (k, i) in r_hi.accepted.iter().enumerate() {
            let pos = r_lo.accepted.iter().position(|j| j == i);
            prop_assert!(pos.is_some());
            prop_assert_eq!(r_lo.labels[pos.unwrap()], r_hi.labels[k]);
        }
        prop_assert!(r_hi.utilization <= r_lo.utilization);
        for c in &r_hi.confidences {
            prop_assert!(*c >= hi - 1e-12 && *c <= 1.0);
        }
    }

    #[test]
    fn rates_stay_in_unit_interval(z in logits(), tau in 0.01f64..1.0, seed in any::<u64>()) {
        let n = z.dims2().unwrap().0;
        let c = z.dims2().unwrap().1;
        let hidden: Vec<usize> = (0..n).map(|i| ((seed >> (i % 60)) as usize + i) % c).collect();
        let r = pseudo_label_from_logits(&z, tau, Some(&hidden)).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.pl_accuracy));
        prop_assert!((0.0..=1.0).contains(&r.utilization));
    }

    #[test]
    fn agreement_is_symmetric(z in logits(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let ra = pseudo_label_from_logits(&z, a, None).unwrap();
        let rb = pseudo_label_from_logits(&z, b, None).unwrap();
        let ab = pl_agreement(&ra, &rb);
        prop_assert_eq!(ab, pl_agreement(&rb, &ra));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(pl_agreement(&ra, &ra), 1.0);
    }

    #[test]
    fn negated_partition_swaps_nonzero_entries(v in prop::collection::vec(prop_oneof![Just(0.0), -3.0f64..3.0], 1..16)) {
        let p = partition_features(&v);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let q = partition_features(&neg);
        let nonzero = |s: &[usize]| s.iter().copied().filter(|&j| v[j] != 0.0).collect::<Vec<_>>();
        prop_assert_eq!(nonzero(&p.j_plus), nonzero(&q.j_minus));
        prop_assert_eq!(nonzero(&p.j_minus), nonzero(&q.j_plus));
        prop_assert_eq!(p.j_plus.len() + p.j_minus.len(), v.len());
    }
}
