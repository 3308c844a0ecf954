//! Greedy modularity communities on the engaged/engaging interaction graphs.
//!
//! One graph per reaction type. Directed engagement edges are collapsed to
//! weighted undirected edges (weight = interaction count), then partitioned
//! by Louvain-style local moving: one full local-moving phase, community
//! aggregation, and one refinement sweep on the aggregated graph.

use std::collections::HashMap;

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::data::InteractionRecord;

/// user -> (partition id, partition cardinality)
pub type CommunityMap = HashMap<u64, (u32, u32)>;

struct Graph {
    /// adjacency: node -> (neighbor, weight); no self loops
    adj: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
    total_weight: f64,
}

impl Graph {
    fn from_edges(n: usize, edges: &HashMap<(usize, usize), f64>) -> Graph {
        let mut adj = vec![Vec::new(); n];
        let mut degree = vec![0.0; n];
        let mut total = 0.0;
        let mut sorted: Vec<(&(usize, usize), &f64)> = edges.iter().collect();
        sorted.sort_by_key(|(k, _)| **k);
        for (&(a, b), &w) in sorted {
            adj[a].push((b, w));
            if a != b {
                adj[b].push((a, w));
            }
            degree[a] += w;
            degree[b] += w;
            total += w;
        }
        Graph {
            adj,
            degree,
            total_weight: total,
        }
    }
}

/// One phase of local moving; returns the community of each node and whether
/// anything moved.
fn local_moving(graph: &Graph, rng: &mut ChaCha20Rng) -> (Vec<usize>, bool) {
    let n = graph.adj.len();
    let mut community: Vec<usize> = (0..n).collect();
    let mut comm_degree: Vec<f64> = graph.degree.clone();
    let m2 = 2.0 * graph.total_weight;
    if m2 == 0.0 {
        return (community, false);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut moved_any = false;
    let mut improved = true;
    let mut neighbor_weights: HashMap<usize, f64> = HashMap::new();
    while improved {
        improved = false;
        for &node in &order {
            let current = community[node];
            neighbor_weights.clear();
            for &(nb, w) in &graph.adj[node] {
                if nb != node {
                    *neighbor_weights.entry(community[nb]).or_insert(0.0) += w;
                }
            }
            comm_degree[current] -= graph.degree[node];
            let base = neighbor_weights.get(&current).copied().unwrap_or(0.0);
            // best modularity gain; ties broken toward the smallest id
            let mut best_comm = current;
            let mut best_gain =
                base - graph.degree[node] * comm_degree[current] / m2;
            let mut cands: Vec<(usize, f64)> =
                neighbor_weights.iter().map(|(&c, &w)| (c, w)).collect();
            cands.sort_unstable_by_key(|&(c, _)| c);
            for (c, w) in cands {
                let gain = w - graph.degree[node] * comm_degree[c] / m2;
                if gain > best_gain + 1e-12 {
                    best_gain = gain;
                    best_comm = c;
                }
            }
            comm_degree[best_comm] += graph.degree[node];
            if best_comm != current {
                community[node] = best_comm;
                improved = true;
                moved_any = true;
            }
        }
    }
    (community, moved_any)
}

fn relabel_dense(community: &[usize]) -> (Vec<usize>, usize) {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let mut out = Vec::with_capacity(community.len());
    for &c in community {
        let next = map.len();
        let id = *map.entry(c).or_insert(next);
        out.push(id);
    }
    (out, map.len())
}

fn louvain(graph: &Graph, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (community, moved) = local_moving(graph, &mut rng);
    let (community, n_comms) = relabel_dense(&community);
    if !moved {
        return community;
    }
    // aggregate and refine once
    let mut agg_edges: HashMap<(usize, usize), f64> = HashMap::new();
    for (a, nbs) in graph.adj.iter().enumerate() {
        for &(b, w) in nbs {
            if a <= b {
                let (ca, cb) = (community[a], community[b]);
                let key = if ca <= cb { (ca, cb) } else { (cb, ca) };
                *agg_edges.entry(key).or_insert(0.0) += w;
            }
        }
    }
    let agg = Graph::from_edges(n_comms, &agg_edges);
    let (refined, _) = local_moving(&agg, &mut rng);
    let (refined, _) = relabel_dense(&refined);
    community.iter().map(|&c| refined[c]).collect()
}

/// Partition users of each reaction graph into modularity communities.
///
/// Returns one map per reaction, in canonical reaction order. Users with no
/// edges in a graph form singleton partitions. Partition ids are dense and
/// deterministic for a fixed seed.
pub fn community_partitions(history: &[InteractionRecord], seed: u64) -> [CommunityMap; 4] {
    std::array::from_fn(|r| {
        let mut users: Vec<u64> = Vec::new();
        let mut idx: HashMap<u64, usize> = HashMap::new();
        let intern = |u: u64, users: &mut Vec<u64>, idx: &mut HashMap<u64, usize>| {
            *idx.entry(u).or_insert_with(|| {
                users.push(u);
                users.len() - 1
            })
        };
        let mut edges: HashMap<(usize, usize), f64> = HashMap::new();
        for rec in history {
            let a = intern(rec.engaged_user, &mut users, &mut idx);
            let b = intern(rec.engaging_user, &mut users, &mut idx);
            if rec.reaction_timestamps[r].is_some() {
                let key = if a <= b { (a, b) } else { (b, a) };
                *edges.entry(key).or_insert(0.0) += 1.0;
            }
        }
        let graph = Graph::from_edges(users.len(), &edges);
        let community = louvain(&graph, seed.wrapping_add(r as u64));
        // sizes per partition
        let mut sizes: HashMap<usize, u32> = HashMap::new();
        for &c in &community {
            *sizes.entry(c).or_insert(0) += 1;
        }
        users
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, (community[i] as u32, sizes[&community[i]])))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MediaFlags, TweetType};

    fn like_row(tweet_id: u64, engaged: u64, engaging: u64, liked: bool) -> InteractionRecord {
        InteractionRecord {
            tweet_id,
            engaged_user: engaged,
            engaging_user: engaging,
            tweet_tokens: vec![0],
            hashtags: vec![],
            language: 0,
            media_flags: MediaFlags::default(),
            tweet_type: TweetType::TopLevel,
            tweet_timestamp: 1_000_000,
            reaction_timestamps: [liked.then_some(1_000_100), None, None, None],
            engaged_follower_count: 1,
            engaged_following_count: 1,
            engaging_follower_count: 1,
            engaging_following_count: 1,
            engaged_verified: false,
            engaging_verified: false,
            engaging_follows_engaged: false,
            engaged_account_created: 0,
            engaging_account_created: 0,
        }
    }

    /// Exhaustive max-modularity oracle over all partitions of <= 8 nodes.
    fn modularity(adj: &[Vec<f64>], partition: &[usize]) -> f64 {
        let n = adj.len();
        let degree: Vec<f64> = (0..n).map(|i| adj[i].iter().sum::<f64>()).collect();
        let m2: f64 = degree.iter().sum();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if partition[i] == partition[j] {
                    q += adj[i][j] - degree[i] * degree[j] / m2;
                }
            }
        }
        q / m2
    }

    fn best_partition_exhaustive(adj: &[Vec<f64>]) -> Vec<usize> {
        let n = adj.len();
        let mut best = vec![0; n];
        let mut best_q = f64::NEG_INFINITY;
        // restricted-growth strings enumerate set partitions
        let mut assignment = vec![0usize; n];
        loop {
            let q = modularity(adj, &assignment);
            if q > best_q {
                best_q = q;
                best = assignment.clone();
            }
            // next restricted-growth string
            let mut i = n - 1;
            loop {
                let max_allowed = assignment[..i].iter().max().map_or(0, |&m| m + 1);
                if assignment[i] < max_allowed {
                    assignment[i] += 1;
                    for a in assignment.iter_mut().skip(i + 1) {
                        *a = 0;
                    }
                    break;
                }
                if i == 0 {
                    return best;
                }
                i -= 1;
            }
        }
    }

    fn as_groups(part: &CommunityMap) -> Vec<Vec<u64>> {
        let mut groups: HashMap<u32, Vec<u64>> = HashMap::new();
        for (&u, &(c, _)) in part {
            groups.entry(c).or_default().push(u);
        }
        let mut out: Vec<Vec<u64>> = groups
            .into_values()
            .map(|mut g| {
                g.sort_unstable();
                g
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn two_cliques_split_into_two_partitions() {
        let mut history = Vec::new();
        let mut t = 0;
        for clique in [[0u64, 1, 2], [3, 4, 5]] {
            for &a in &clique {
                for &b in &clique {
                    if a != b {
                        history.push(like_row(t, a, b, true));
                        t += 1;
                    }
                }
            }
        }
        let parts = community_partitions(&history, 0);
        let like = &parts[0];
        assert_eq!(like[&0].0, like[&1].0);
        assert_eq!(like[&1].0, like[&2].0);
        assert_eq!(like[&3].0, like[&4].0);
        assert_ne!(like[&0].0, like[&3].0);
        assert_eq!(like[&0].1, 3);
        assert_eq!(like[&3].1, 3);

        // agreement with the exhaustive modularity oracle
        let mut adj = vec![vec![0.0; 6]; 6];
        for r in &history {
            if r.reaction_timestamps[0].is_some() {
                adj[r.engaged_user as usize][r.engaging_user as usize] += 1.0;
                adj[r.engaging_user as usize][r.engaged_user as usize] += 1.0;
            }
        }
        let oracle = best_partition_exhaustive(&adj);
        let mut oracle_map: CommunityMap = HashMap::new();
        let mut sizes: HashMap<usize, u32> = HashMap::new();
        for &c in &oracle {
            *sizes.entry(c).or_insert(0) += 1;
        }
        for (u, &c) in oracle.iter().enumerate() {
            oracle_map.insert(u as u64, (c as u32, sizes[&c]));
        }
        assert_eq!(as_groups(like), as_groups(&oracle_map));
    }

    #[test]
    fn no_edges_gives_singletons() {
        let history = vec![
            like_row(0, 0, 1, false),
            like_row(1, 2, 3, false),
        ];
        let parts = community_partitions(&history, 0);
        for map in &parts {
            let ids: std::collections::HashSet<u32> = map.values().map(|&(c, _)| c).collect();
            assert_eq!(ids.len(), map.len());
            assert!(map.values().all(|&(_, s)| s == 1));
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut history = Vec::new();
        for i in 0..40u64 {
            history.push(like_row(i, i % 7, (i % 7) + 7, i % 3 != 0));
        }
        let a = community_partitions(&history, 9);
        let b = community_partitions(&history, 9);
        for r in 0..4 {
            assert_eq!(a[r], b[r]);
        }
    }
}
