//! Forgy convergence against a textbook Lloyd iteration written from scratch.

use proptest::prelude::*;
use tandem_core::clustering::{forgy_converge, select_seeds, within_cluster_ss, ForgyParams};
use tandem_core::numerics::Rng;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn closest(x: &[f64], cs: &[Vec<f64>]) -> usize {
    let mut best = 0;
    for c in 1..cs.len() {
        if sq(x, &cs[c]) < sq(x, &cs[best]) {
            best = c;
        }
    }
    best
}

/// Plain Lloyd. Empty clusters jump to the point farthest from its closest
/// centroid, one at a time in index order.
fn lloyd(data: &[Vec<f64>], seeds: &[Vec<f64>], max_iter: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let k = seeds.len();
    let d = seeds[0].len();
    let mut cs = seeds.to_vec();
    let mut labels: Vec<usize> = data.iter().map(|x| closest(x, &cs)).collect();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.iter().zip(&labels) {
            counts[l] += 1;
            for j in 0..d {
                sums[l][j] += x[j];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                cs[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let mut far = 0;
                let mut far_d = -1.0;
                for (i, x) in data.iter().enumerate() {
                    let dist = sq(x, &cs[closest(x, &cs)]);
                    if dist > far_d {
                        far_d = dist;
                        far = i;
                    }
                }
                cs[c] = data[far].clone();
            }
        }
        let next: Vec<usize> = data.iter().map(|x| closest(x, &cs)).collect();
        if next == labels {
            return (cs, labels);
        }
        labels = next;
    }
    panic!("oracle did not converge");
}

fn random_problem(rng: &mut Rng) -> (Vec<Vec<f64>>, usize) {
    let k = 2 + rng.below(4);
    let d = 1 + rng.below(4);
    let n = k + 5 + rng.below(60);
    let data = (0..n)
        .map(|_| (0..d).map(|_| rng.uniform(0.0, 1.0).unwrap()).collect())
        .collect();
    (data, k)
}

#[test]
fn matches_textbook_lloyd_on_200_random_datasets() {
    let mut rng = Rng::new(2024);
    let mut checked = 0;
    while checked < 200 {
        let (data, k) = random_problem(&mut rng);
        let params = ForgyParams::new(k, 0.0);
        let Ok(seeds) = select_seeds(&data, &params, &mut rng) else {
            continue;
        };
        let got = forgy_converge(&data, &seeds, &params).unwrap();
        let (want_c, want_l) = lloyd(&data, &seeds, params.max_iterations);
        assert!(got.converged);
        assert_eq!(got.assignments, want_l);
        for (a, b) in got.centroids.iter().zip(&want_c) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
        checked += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fixed_point_is_a_local_optimum_of_assignment(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let (data, k) = random_problem(&mut rng);
        let params = ForgyParams::new(k, 0.0);
        if let Ok(seeds) = select_seeds(&data, &params, &mut rng) {
            let got = forgy_converge(&data, &seeds, &params).unwrap();
            prop_assert!(got.converged);
            let wcss = within_cluster_ss(&data, &got.centroids, &got.assignments);
            let oracle_labels: Vec<usize> = data.iter().map(|x| closest(x, &got.centroids)).collect();
            prop_assert_eq!(&oracle_labels, &got.assignments);
            prop_assert!(wcss.is_finite() && wcss >= 0.0);
        }
    }
}
