mod common;

use common::*;
use cpgkit::kronecker::{
    filtered, identity, identity_tensor_right, kfold_sum, kron_product, kron_sum, merry, plus, selective_kron,
    LazyMatrix, Term,
};
use cpgkit::labels::{LabelPartition, LabelSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kron_sum_is_associative(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ms: Vec<LazyMatrix> = (0..3).map(|_| { let n = r.gen_range(1..=4); leaf(&random_matrix(&mut r, n, &pool(), 2, false)) }).collect();
        let left = kron_sum(&kron_sum(&ms[0], &ms[1]), &ms[2]);
        let right = kron_sum(&ms[0], &kron_sum(&ms[1], &ms[2]));
        prop_assert_eq!(entries(&left), entries(&right));
    }

    #[test]
    fn kron_product_is_associative(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ms: Vec<LazyMatrix> = (0..3).map(|_| { let n = r.gen_range(1..=4); leaf(&random_matrix(&mut r, n, &pool(), 2, false)) }).collect();
        let left = kron_product(&kron_product(&ms[0], &ms[1]), &ms[2]);
        let right = kron_product(&ms[0], &kron_product(&ms[1], &ms[2]));
        prop_assert_eq!(entries(&left), entries(&right));
    }

    #[test]
    fn kron_sum_splits_into_identity_products(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, m) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let a = leaf(&random_matrix(&mut r, n, &pool(), 2, false));
        let b = leaf(&random_matrix(&mut r, m, &pool(), 2, false));
        let split = union(&[&kron_product(&a, &identity(m).unwrap()), &kron_product(&identity(n).unwrap(), &b)]);
        prop_assert_eq!(entries(&kron_sum(&a, &b)), split);
    }

    #[test]
    fn product_distributes_over_disjoint_sum(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, m) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let a = leaf(&random_matrix(&mut r, n, &pool(), 2, false));
        let (b, c, _) = disjoint_pair(&mut r, m, false);
        let (b, c) = (leaf(&b), leaf(&c));
        let bc = plus(&b, &c).unwrap();
        prop_assert_eq!(entries(&kron_product(&a, &bc)), entries(&plus(&kron_product(&a, &b), &kron_product(&a, &c)).unwrap()));
        prop_assert_eq!(entries(&kron_product(&bc, &a)), entries(&plus(&kron_product(&b, &a), &kron_product(&c, &a)).unwrap()));
    }

    #[test]
    fn mixed_sum_rule(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, m) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let (a, c, ac) = disjoint_pair(&mut r, n, true);
        let (b, d, bd) = disjoint_pair(&mut r, m, true);
        let lhs = plus(&kron_sum(&leaf(&a), &leaf(&b)), &kron_sum(&leaf(&c), &leaf(&d))).unwrap();
        let rhs = kron_sum(&leaf(&ac), &leaf(&bd));
        prop_assert_eq!(entries(&lhs), entries(&rhs));
    }

    #[test]
    fn selective_product_is_a_sum_of_label_products(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, m) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let t = leaf(&random_matrix(&mut r, n, &pool(), 2, false));
        let s = leaf(&random_matrix(&mut r, m, &sync_pool(), 2, false));
        let sync: LabelSet = sync_pool().into_iter().collect();
        let parts: Vec<LazyMatrix> = sync
            .iter()
            .map(|l| {
                let one: LabelSet = [l.clone()].into_iter().collect();
                kron_product(&filtered(&t, &one), &filtered(&s, &one))
            })
            .collect();
        let mut summed: Vec<(u64, u64, Term)> = union(&parts.iter().collect::<Vec<_>>())
            .into_iter()
            .map(|(i, j, w)| (i, j, Term::atom(w.factors()[0].clone())))
            .collect();
        summed.sort();
        prop_assert_eq!(entries(&selective_kron(&t, &s, &sync)), summed);
    }

    #[test]
    fn merry_splits_into_sync_and_variable_parts(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, m) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let t = leaf(&random_matrix(&mut r, n, &pool(), 2, false));
        let s = leaf(&random_matrix(&mut r, m, &sync_pool(), 2, true));
        let partition = LabelPartition::from_labels(&pool());
        let p = merry(&t, &s, &partition).unwrap();
        let parts = union(&[
            &selective_kron(&t, &s, partition.sync_labels()),
            &identity_tensor_right(&filtered(&t, &partition.variable_labels()), &[m]),
        ]);
        prop_assert_eq!(entries(&p), parts);
    }

    #[test]
    fn interleaving_entry_bound(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (k, n) = (r.gen_range(1..=3), r.gen_range(1..=4));
        let threads: Vec<LazyMatrix> = (0..k).map(|_| leaf(&random_matrix(&mut r, n, &pool(), 2, false))).collect();
        let count = kfold_sum(&threads).unwrap().count_entries(1 << 16).unwrap();
        prop_assert!(count <= 2 * k * n.pow(k as u32));
    }
}
