//! All-pairs follower-set similarity above a threshold, via inverted-index
//! prefix filtering, followed by connected-component clustering.

use std::collections::HashMap;

use crate::data::FollowerSets;
use crate::error::{EngageError, Result};

pub fn jaccard(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    // both sorted ascending
    let (mut i, mut j, mut inter) = (0usize, 0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // deterministic: smaller index wins
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Cluster users whose follower-set Jaccard similarity meets `threshold`.
///
/// Pairs are found with prefix filtering over an inverted index instead of
/// an O(U^2) scan: sets are processed in ascending size order and only the
/// first |F| - ceil(t*|F|) + 1 elements of each set are indexed, which is
/// sufficient to reach every qualifying pair. Clusters are the connected
/// components of the pair graph; ids are dense, ordered by each cluster's
/// smallest user id. Users with empty follower sets are singletons.
pub fn similar_user_clusters(
    followers: &FollowerSets,
    threshold: f64,
) -> Result<HashMap<u64, u32>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EngageError::Config(
            "jaccard threshold must be in (0, 1]".into(),
        ));
    }
    let users: Vec<u64> = followers.followers.keys().copied().collect();
    let sets: Vec<Vec<u64>> = users
        .iter()
        .map(|u| followers.followers[u].iter().copied().collect())
        .collect();

    // ascending size, ties by user id, keeps candidate sets no larger than
    // the probing set
    let mut order: Vec<usize> = (0..users.len()).collect();
    order.sort_by_key(|&i| (sets[i].len(), users[i]));

    let mut uf = UnionFind::new(users.len());
    let mut index: HashMap<u64, Vec<usize>> = HashMap::new();
    for &i in &order {
        let set = &sets[i];
        if set.is_empty() {
            continue;
        }
        let prefix = set.len() - (threshold * set.len() as f64).ceil() as usize + 1;
        let mut candidates: Vec<usize> = Vec::new();
        for &tok in &set[..prefix] {
            if let Some(list) = index.get(&tok) {
                candidates.extend_from_slice(list);
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        for j in candidates {
            // size filter: |y| >= t * |x| is necessary for J >= t
            if (sets[j].len() as f64) < threshold * set.len() as f64 {
                continue;
            }
            if jaccard(set, &sets[j]) >= threshold {
                uf.union(i, j);
            }
        }
        for &tok in &set[..prefix] {
            index.entry(tok).or_default().push(i);
        }
    }

    // dense cluster ids ordered by the smallest user id in each component
    let mut root_min_user: HashMap<usize, u64> = HashMap::new();
    for i in 0..users.len() {
        let r = uf.find(i);
        let e = root_min_user.entry(r).or_insert(users[i]);
        if users[i] < *e {
            *e = users[i];
        }
    }
    let mut roots: Vec<(u64, usize)> = root_min_user.iter().map(|(&r, &m)| (m, r)).collect();
    roots.sort_unstable();
    let root_id: HashMap<usize, u32> = roots
        .iter()
        .enumerate()
        .map(|(id, &(_, r))| (r, id as u32))
        .collect();

    Ok((0..users.len())
        .map(|i| (users[i], root_id[&uf.find(i)]))
        .collect())
}
