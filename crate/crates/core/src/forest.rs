//! Union-find and spanning-tree helpers on vertex indices.

pub struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    pub fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Merges the sets of `a` and `b`; false if they were already one set.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Whether the undirected shadow of `edges` is a spanning tree on `vertices`.
pub fn is_spanning_tree(vertices: &[usize], edges: &[(usize, usize)]) -> bool {
    if edges.len() + 1 != vertices.len() {
        return false;
    }
    let Some(&max) = vertices.iter().max() else { return false };
    let mut member = vec![false; max + 1];
    for &v in vertices {
        member[v] = true;
    }
    let mut ds = DisjointSets::new(max + 1);
    edges.iter().all(|&(u, v)| u <= max && v <= max && member[u] && member[v] && ds.union(u, v))
}

/// Whether the undirected shadow of `edges` connects all of `0..n`.
pub fn is_connected(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> bool {
    let mut ds = DisjointSets::new(n);
    let mut components = n;
    for (u, v) in edges {
        if ds.union(u, v) {
            components -= 1;
        }
    }
    components <= 1
}
