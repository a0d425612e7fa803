//! Seeded synthetic graph generators.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use thiserror::Error;

use crate::graph::Graph;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("edge probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("vertex count must be at least 1")]
    EmptyVertexSet,
    #[error("no {degree}-regular graph on {n} vertices (need n*d even and d < n)")]
    InfeasibleRegular { n: usize, degree: usize },
    #[error("pairing model failed to produce a simple {degree}-regular graph on {n} vertices after {attempts} attempts")]
    PairingExhausted {
        n: usize,
        degree: usize,
        attempts: usize,
    },
}

/// Directed G(n, p): each ordered pair (u, v), u != v, is an edge
/// independently with probability `p`. All labels 0. Deterministic in
/// the seed.
pub fn generate_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph, GenerateError> {
    if n == 0 {
        return Err(GenerateError::EmptyVertexSet);
    }
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(GenerateError::ProbabilityOutOfRange(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen_bool(p) {
                edges.push((u, v, 0));
            }
        }
    }
    let g = Graph::new(format!("er_n{n}_p{p}_s{seed}"), n, vec![0; n], edges)
        .expect("generated edges respect graph invariants");
    Ok(g)
}

/// Undirected G(n, p) stored as a bidirected lift: each unordered pair
/// {u, v} is an edge with probability `p` and contributes both directed
/// copies. All labels 0. Deterministic in the seed.
///
/// This is the benchmark-dataset flavor; expected directed edge count is
/// 2 * C(n, 2) * p (27 for n = 10, p = 0.3).
pub fn generate_bidirected_erdos_renyi(
    n: usize,
    p: f64,
    seed: u64,
) -> Result<Graph, GenerateError> {
    if n == 0 {
        return Err(GenerateError::EmptyVertexSet);
    }
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(GenerateError::ProbabilityOutOfRange(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(p) {
                edges.push((u, v, 0));
                edges.push((v, u, 0));
            }
        }
    }
    let g = Graph::new(format!("uer_n{n}_p{p}_s{seed}"), n, vec![0; n], edges)
        .expect("generated edges respect graph invariants");
    Ok(g)
}

const PAIRING_ATTEMPTS: usize = 200;

/// Bidirected lift of an undirected d-regular simple graph drawn from the
/// pairing model. All labels 0. Deterministic in the seed.
pub fn generate_random_regular(n: usize, degree: usize, seed: u64) -> Result<Graph, GenerateError> {
    if n == 0 {
        return Err(GenerateError::EmptyVertexSet);
    }
    if degree >= n || (n * degree) % 2 == 1 {
        return Err(GenerateError::InfeasibleRegular { n, degree });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = format!("reg_n{n}_d{degree}_s{seed}");
    if degree == 0 {
        return Ok(Graph::new(id, n, vec![0; n], Vec::new()).expect("empty edge set"));
    }
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
    'attempt: for _ in 0..PAIRING_ATTEMPTS {
        stubs.shuffle(&mut rng);
        let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(n * degree / 2);
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !seen.insert((a, b)) {
                continue 'attempt;
            }
        }
        let mut edges = Vec::with_capacity(n * degree);
        for pair in stubs.chunks_exact(2) {
            edges.push((pair[0], pair[1], 0));
            edges.push((pair[1], pair[0], 0));
        }
        let g = Graph::new(id, n, vec![0; n], edges).expect("pairing produced a simple graph");
        return Ok(g);
    }
    Err(GenerateError::PairingExhausted {
        n,
        degree,
        attempts: PAIRING_ATTEMPTS,
    })
}
