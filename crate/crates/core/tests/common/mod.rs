#![allow(dead_code)]

use edgedispatch::model::SystemConfig;

/// One AP, one server, one type.
pub fn single_link(lambda: f64, delay: f64, pmf: Vec<f64>, n_max: usize, l_max: usize, gamma: f64) -> SystemConfig {
    SystemConfig {
        num_aps: 1,
        num_servers: 1,
        num_types: 1,
        arrival_prob: vec![vec![lambda]],
        mean_upload_delay: vec![vec![vec![delay]]],
        eta_max: pmf.len(),
        comp_time_pmf: vec![vec![pmf]],
        discount: gamma,
        overflow_weight: 10.0,
        n_max,
        l_max,
    }
}

/// Two APs, two servers, two types of different shapes.
pub fn two_type() -> SystemConfig {
    SystemConfig {
        num_aps: 2,
        num_servers: 2,
        num_types: 2,
        arrival_prob: vec![vec![0.3, 0.1], vec![0.2, 0.25]],
        mean_upload_delay: vec![vec![vec![2.0, 3.0], vec![1.5, 4.0]], vec![vec![3.0, 2.0], vec![2.5, 1.2]]],
        comp_time_pmf: vec![
            vec![vec![0.5, 0.5, 0.0], vec![0.2, 0.3, 0.5]],
            vec![vec![0.8, 0.2, 0.0], vec![1.0, 0.0, 0.0]],
        ],
        discount: 0.9,
        overflow_weight: 10.0,
        n_max: 2,
        l_max: 2,
        eta_max: 3,
    }
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Total-variation distance between a reference law and empirical counts.
pub fn tv_distance<K: std::hash::Hash + Eq + Clone>(
    reference: &[(K, f64)],
    counts: &std::collections::HashMap<K, usize>,
    samples: usize,
) -> f64 {
    let mut keys: std::collections::HashMap<K, (f64, f64)> = std::collections::HashMap::new();
    for (k, p) in reference {
        keys.entry(k.clone()).or_default().0 += p;
    }
    for (k, &c) in counts {
        keys.entry(k.clone()).or_default().1 += c as f64 / samples as f64;
    }
    0.5 * keys.values().map(|(p, q)| (p - q).abs()).sum::<f64>()
}
