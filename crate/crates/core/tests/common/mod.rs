#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use xmc::{CollectiveMatrix, CollectiveSchema};

/// Random connected bipartite schema: a random tree plus extra edges between
/// opposite colors, random orientations, sizes in `1..=max_size`.
pub fn random_bipartite_schema(rng: &mut ChaCha8Rng, max_entities: usize, max_size: usize) -> Arc<CollectiveSchema> {
    let k = rng.random_range(2..=max_entities);
    let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..=max_size)).collect();
    let mut color = vec![0u8; k];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for j in 1..k {
        let i = rng.random_range(0..j);
        color[j] = 1 - color[i];
        edges.push((i, j));
    }
    for a in 0..k {
        for b in a + 1..k {
            let linked = edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a));
            if color[a] != color[b] && !linked && rng.random_bool(0.3) {
                edges.push((a, b));
            }
        }
    }
    let views: Vec<(usize, usize)> = edges
        .into_iter()
        .map(|(a, b)| if rng.random_bool(0.5) { (a, b) } else { (b, a) })
        .collect();
    Arc::new(CollectiveSchema::from_sizes(&sizes, &views).expect("tree-based schemas are valid"))
}

pub fn gaussian(schema: &Arc<CollectiveSchema>, rng: &mut ChaCha8Rng) -> CollectiveMatrix {
    CollectiveMatrix::from_fn(schema.clone(), |_| StandardNormal.sample(rng))
}

pub fn unit_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
