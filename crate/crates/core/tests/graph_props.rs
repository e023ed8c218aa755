use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synctool::graph::{
    expanded_laplacian, has_spanning_tree, laplacian, random_spanning_tree_graph, reduced_laplacian, root_set_covers, CommGraph,
    RootSet,
};
use synctool::numlin::{eigenvalues, Matrix};

fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> CommGraph {
    let w = Matrix::from_fn(n, n, |i, j| if i != j && rng.random_bool(density) { rng.random_range(0.2..3.0) } else { 0.0 });
    CommGraph::from_adjacency(w).unwrap()
}

/// Rejection-sampled graph containing a directed spanning tree.
fn spanning_graph(rng: &mut ChaCha8Rng) -> CommGraph {
    loop {
        let n = rng.random_range(2..=12);
        let density = rng.random_range(0.1..0.5);
        let g = random_graph(rng, n, density);
        if has_spanning_tree(&g) {
            return g;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn laplacian_rows_sum_to_zero(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=15);
        let g = random_graph(&mut rng, n, 0.4);
        let l = laplacian(&g);
        prop_assert!((l * Matrix::from_element(n, 1, 1.0)).amax() <= 1e-12);
    }

    #[test]
    fn single_zero_eigenvalue_and_reduced_spectrum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = spanning_graph(&mut rng);
        let l = laplacian(&g);
        let mut spec = eigenvalues(&l).unwrap().values().to_vec();
        spec.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        prop_assert!(spec[0].norm() < 1e-8);
        prop_assert!(spec[1..].iter().all(|z| z.re > 1e-8));
        let lhat = reduced_laplacian(&l).unwrap();
        prop_assert!(eigenvalues(&lhat).unwrap().matches(&spec[1..], 1e-8));
    }

    #[test]
    fn covered_root_set_makes_expanded_laplacian_stable(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, root) = loop {
            let n = rng.random_range(1..=12);
            let density = rng.random_range(0.05..0.4);
            let g = random_graph(&mut rng, n, density);
            let k = rng.random_range(1..=n.min(3));
            let members: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
            let root = RootSet::new(n, &members).unwrap();
            if root_set_covers(&g, &root).unwrap() {
                break (g, root);
            }
        };
        let lbar = expanded_laplacian(&laplacian(&g), &root).unwrap();
        prop_assert!(eigenvalues(&lbar).unwrap().values().iter().all(|z| z.re > 1e-8));
    }

    #[test]
    fn generated_graphs_have_spanning_trees(seed in any::<u64>(), n in 1usize..30, extra in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(has_spanning_tree(&random_spanning_tree_graph(n, extra, &mut rng)));
    }

    #[test]
    fn relabeling_preserves_spanning_trees(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=10);
        let g = random_graph(&mut rng, n, 0.3);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let h = g.permuted(&perm).unwrap();
        prop_assert_eq!(has_spanning_tree(&g), has_spanning_tree(&h));
        let spec_g = eigenvalues(&laplacian(&g)).unwrap();
        prop_assert!(spec_g.matches(eigenvalues(&laplacian(&h)).unwrap().values(), 1e-8));
    }
}
