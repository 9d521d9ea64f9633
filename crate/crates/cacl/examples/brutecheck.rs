//! Scratch: louvain vs exhaustive max-modularity on small graphs.

use cacl::community::{louvain_k, louvain_partition, modularity, CommunityPartition};
use cacl::graph::UserGraph;

fn ug(n: usize, edges: &[(usize, usize)]) -> UserGraph {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for nb in &mut adj {
        nb.sort_unstable();
    }
    let degrees = adj.iter().map(Vec::len).collect();
    UserGraph { user_ids: (0..n).collect(), adj, degrees, edge_count: edges.len() }
}

/// All set partitions of n items as restricted-growth strings.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut a = vec![0usize; n];
    loop {
        out.push(a.clone());
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            let max_prefix = *a[..i].iter().max().unwrap();
            if a[i] <= max_prefix {
                a[i] += 1;
                for v in a[i + 1..].iter_mut() {
                    *v = 0;
                }
                break;
            }
            a[i] = 0;
            i -= 1;
        }
    }
}

/// Textbook modularity from the dense adjacency, diagonal included.
fn brute_q(g: &UserGraph, assign: &[usize]) -> f64 {
    let n = g.n();
    let two_m = (2 * g.edge_count) as f64;
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if assign[i] != assign[j] {
                continue;
            }
            let a = if g.has_edge(i, j) { 1.0 } else { 0.0 };
            q += a - (g.degrees[i] * g.degrees[j]) as f64 / two_m;
        }
    }
    q / two_m
}

fn main() {
    let graphs: Vec<(&str, UserGraph)> = vec![
        ("two_triangles_bridge", ug(6, &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)])),
        ("path_4", ug(4, &[(0, 1), (1, 2), (2, 3)])),
        ("path_8", ug(8, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7)])),
        ("cycle_5", ug(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])),
        ("cycle_8", ug(8, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 0)])),
        ("star_6", ug(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)])),
        ("complete_5", ug(5, &[(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)])),
        (
            "barbell_8",
            ug(
                8,
                &[
                    (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3),
                    (4, 5), (4, 6), (4, 7), (5, 6), (5, 7), (6, 7),
                    (3, 4),
                ],
            ),
        ),
        ("two_triangles_apart", ug(6, &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)])),
        ("kite_7", ug(7, &[(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 5), (4, 6), (5, 6)])),
        (
            "two_squares_bridge",
            ug(
                8,
                &[
                    (0, 1), (1, 2), (2, 3), (3, 0),
                    (4, 5), (5, 6), (6, 7), (7, 4),
                    (3, 4),
                ],
            ),
        ),
        (
            "clique_plus_pendant",
            ug(5, &[(0, 1), (0, 2), (1, 2), (0, 3), (3, 4)]),
        ),
    ];
    for (name, g) in &graphs {
        let parts = partitions(g.n());
        let mut best_q = f64::NEG_INFINITY;
        let mut best_counts = Vec::new();
        let mut max_dev: f64 = 0.0;
        for assign in &parts {
            let q_ref = brute_q(g, assign);
            let k = assign.iter().max().unwrap() + 1;
            let part = CommunityPartition { assignment: assign.clone(), k };
            let q_impl = modularity(g, &part).unwrap();
            max_dev = max_dev.max((q_ref - q_impl).abs());
            if q_ref > best_q + 1e-12 {
                best_q = q_ref;
                best_counts = vec![k];
            } else if (q_ref - best_q).abs() <= 1e-12 && !best_counts.contains(&k) {
                best_counts.push(k);
            }
        }
        let lp = louvain_partition(g);
        let lq = modularity(g, &lp).unwrap();
        let lk = louvain_k(g);
        println!(
            "{name}: partitions {} best_q {best_q:.6} best_k {best_counts:?} louvain q {lq:.6} k {lk} dev {max_dev:.2e} dq {:.2e}",
            parts.len(),
            (lq - best_q).abs()
        );
    }
}
