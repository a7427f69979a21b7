use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfloss::adjacency::NormalizedAdjacency;
use cfloss::backbone::{backpropagate, init_embeddings, propagate};
use cfloss::matrix::Matrix;
use cfloss_oracle::dense_propagate;

struct Graph {
    users: usize,
    items: usize,
    edges: Vec<(usize, usize)>,
}

fn random_graph(rng: &mut ChaCha8Rng) -> Graph {
    let users = rng.random_range(1..=50);
    let items = rng.random_range(1..=100 - users);
    let density: f64 = rng.random_range(0.02..0.5);
    let mut edges = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random_bool(density) {
                edges.push((u, i));
            }
        }
    }
    Graph { users, items, edges }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for g in 0..20 {
        let graph = random_graph(&mut rng);
        assert!(graph.users + graph.items <= 100);
        let adj = NormalizedAdjacency::from_edges(graph.users, graph.items, &graph.edges);
        let state = init_embeddings(graph.users, graph.items, 5, g, 1.0).unwrap();
        for layers in 0..=3 {
            let fast = propagate(&state, &adj, layers).unwrap();
            let (users, items) = dense_propagate(
                state.users.as_slice(),
                state.items.as_slice(),
                5,
                &graph.edges,
                layers,
            )
            .unwrap();
            for (a, b) in fast.users.as_slice().iter().zip(&users) {
                assert!((a - b).abs() < 1e-10, "graph {g} K={layers}");
            }
            for (a, b) in fast.items.as_slice().iter().zip(&items) {
                assert!((a - b).abs() < 1e-10, "graph {g} K={layers}");
            }
        }
    }
}

#[test]
fn zero_layers_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let graph = random_graph(&mut rng);
    let adj = NormalizedAdjacency::from_edges(graph.users, graph.items, &graph.edges);
    let state = init_embeddings(graph.users, graph.items, 4, 1, 1.0).unwrap();
    let out = propagate(&state, &adj, 0).unwrap();
    assert_eq!(out.users, state.users);
    assert_eq!(out.items, state.items);
}

#[test]
fn adjoint_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let graph = random_graph(&mut rng);
        let adj = NormalizedAdjacency::from_edges(graph.users, graph.items, &graph.edges);
        let dim = 3;
        let x = init_embeddings(graph.users, graph.items, dim, rng.random(), 1.0).unwrap();
        let gu = random_matrix(&mut rng, graph.users, dim);
        let gi = random_matrix(&mut rng, graph.items, dim);
        for layers in 0..=3 {
            let px = propagate(&x, &adj, layers).unwrap();
            let (bu, bi) = backpropagate(&gu, &gi, &adj, layers).unwrap();
            let lhs = px.users.dot(&gu) + px.items.dot(&gi);
            let rhs = x.users.dot(&bu) + x.items.dot(&bi);
            assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn isolated_nodes_keep_a_scaled_embedding() {
    let adj = NormalizedAdjacency::from_edges(2, 3, &[(0, 0)]);
    let state = init_embeddings(2, 3, 2, 5, 1.0).unwrap();
    let out = propagate(&state, &adj, 2).unwrap();
    for k in 0..2 {
        assert!((out.users.row(1)[k] - state.users.row(1)[k] / 3.0).abs() < 1e-15);
        assert!((out.items.row(2)[k] - state.items.row(2)[k] / 3.0).abs() < 1e-15);
    }
}
