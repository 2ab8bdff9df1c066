use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::CsrMatrix;
use crate::{Error, Result};

/// Undirected simple graph with canonical `(i, j)`, `i < j` edges kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    features: Option<Arc<CsrMatrix>>,
    labels: Option<Vec<usize>>,
}

fn canonical(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl Graph {
    /// Drops self-loops and duplicates; either orientation is accepted.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut out = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::usage(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u != v {
                out.push(canonical(u, v));
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(Self {
            n,
            edges: out,
            features: None,
            labels: None,
        })
    }

    pub fn with_features(mut self, x: CsrMatrix) -> Result<Self> {
        if x.rows() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.rows(),
            });
        }
        self.features = Some(Arc::new(x));
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> Option<&Arc<CsrMatrix>> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&canonical(u, v)).is_ok()
    }

    /// Same nodes, features and labels with a different edge set.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::new(self.n, edges.iter().copied())?;
        g.features = self.features.clone();
        g.labels = self.labels.clone();
        Ok(g)
    }

    /// `D^{-1/2} (A + I) D^{-1/2}`.
    pub fn normalized_adjacency(&self) -> CsrMatrix {
        let mut deg = vec![1.0f64; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1.0;
            deg[v] += 1.0;
        }
        let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut t = Vec::with_capacity(self.n + 2 * self.edges.len());
        for (i, w) in inv.iter().enumerate() {
            t.push((i, i, w * w));
        }
        for &(u, v) in &self.edges {
            let w = inv[u] * inv[v];
            t.push((u, v, w));
            t.push((v, u, w));
        }
        CsrMatrix::from_triplets(self.n, self.n, t)
    }

    /// Number of connected components.
    pub fn components(&self) -> usize {
        let mut uf = UnionFind::new(self.n);
        self.edges.iter().filter(|&&(u, v)| uf.union(u, v)).count();
        (0..self.n).filter(|&i| uf.find(i) == i).count()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Counts from a loader that tolerates bad records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Citation lines naming a paper absent from the content file.
    pub skipped: usize,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Whitespace-separated `u v` lines with integer ids; `#` starts a comment.
/// The node count is one more than the largest id.
pub fn load_edge_list(path: &Path) -> Result<Graph> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    let mut max_id = None;
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let body = line.split('#').next().unwrap_or("");
        let mut it = body.split_whitespace();
        if let Some(a) = it.next() {
            let parse = |s: Option<&str>| -> Result<usize> {
                s.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Format {
                    path: path.to_path_buf(),
                    offset,
                    msg: format!("expected two node ids, got {:?}", line.trim_end()),
                })
            };
            let u = parse(Some(a))?;
            let v = parse(it.next())?;
            max_id = max_id.max(Some(u.max(v)));
            edges.push((u, v));
        }
        offset += line.len() as u64;
    }
    Graph::new(max_id.map_or(0, |m| m + 1), edges)
}

/// Loads the Cora `content` (`id word_1 … word_k label`) and `cites`
/// (`cited citing`) files. Paper ids are remapped to `0..n` in content order;
/// labels are numbered in order of first appearance.
pub fn load_cora(content: &Path, cites: &Path) -> Result<(Graph, LoadReport)> {
    let text = read_text(content)?;
    let mut ids = HashMap::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut trip = Vec::new();
    let mut width = None;
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            offset += line.len() as u64;
            continue;
        }
        let bad = |msg: String| Error::Format {
            path: content.to_path_buf(),
            offset,
            msg,
        };
        if fields.len() < 3 {
            return Err(bad("expected id, features and label".into()));
        }
        let k = fields.len() - 2;
        if *width.get_or_insert(k) != k {
            return Err(bad(format!(
                "row has {k} features, expected {}",
                width.unwrap()
            )));
        }
        let row = ids.len();
        if ids.insert(fields[0].to_string(), row).is_some() {
            return Err(bad(format!("duplicate paper id {}", fields[0])));
        }
        for (j, f) in fields[1..=k].iter().enumerate() {
            match *f {
                "0" => {}
                "1" => trip.push((row, j, 1.0)),
                other => return Err(bad(format!("feature value {other:?} is not 0/1"))),
            }
        }
        let next = label_ids.len();
        labels.push(*label_ids.entry(fields[k + 1].to_string()).or_insert(next));
        offset += line.len() as u64;
    }
    let n = ids.len();
    if n == 0 {
        return Err(Error::Format {
            path: content.to_path_buf(),
            offset: 0,
            msg: "no papers".into(),
        });
    }
    let x = CsrMatrix::from_triplets(n, width.unwrap_or(0), trip);

    let text = read_text(cites)?;
    let mut edges = Vec::new();
    let mut report = LoadReport::default();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !fields.is_empty() {
            if fields.len() != 2 {
                return Err(Error::Format {
                    path: cites.to_path_buf(),
                    offset,
                    msg: format!("expected two paper ids, got {:?}", line.trim_end()),
                });
            }
            match (ids.get(fields[0]), ids.get(fields[1])) {
                (Some(&u), Some(&v)) => edges.push((u, v)),
                _ => report.skipped += 1,
            }
        }
        offset += line.len() as u64;
    }
    if report.skipped > 0 {
        log::warn!(
            "{}: skipped {} citations with unknown paper ids",
            cites.display(),
            report.skipped
        );
    }
    let g = Graph::new(n, edges)?
        .with_features(x)?
        .with_labels(labels)?;
    Ok((g, report))
}

/// Tree of depth `levels` whose root has `b + 1` children and every other
/// internal node `b`. Nodes are numbered breadth-first from the root.
pub fn synth_tree(b: usize, levels: usize) -> Graph {
    let mut edges = Vec::new();
    let mut frontier = vec![0usize];
    let mut next = 1usize;
    for level in 0..levels {
        let kids = if level == 0 { b + 1 } else { b };
        let mut new_frontier = Vec::with_capacity(frontier.len() * kids);
        for &p in &frontier {
            for _ in 0..kids {
                edges.push((p, next));
                new_frontier.push(next);
                next += 1;
            }
        }
        frontier = new_frontier;
    }
    Graph::new(next, edges).expect("tree edges are in range")
}

/// Held-out positives plus fixed negatives for validation and testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

/// Masks `⌊E·val_frac⌋` and `⌊E·test_frac⌋` edges. Edges of a random
/// spanning forest are masked only once all other edges are used up, so the
/// training graph keeps the components of `g` whenever possible. Negatives
/// are drawn uniformly from non-edges, distinct across both sets.
pub fn split_edges<R: Rng + ?Sized>(
    g: &Graph,
    val_frac: f64,
    test_frac: f64,
    rng: &mut R,
) -> Result<EdgeSplit> {
    if !(val_frac >= 0.0 && test_frac >= 0.0 && val_frac + test_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fractions {val_frac}, {test_frac} must be >= 0 with sum < 1"
        )));
    }
    let e = g.num_edges();
    let n_val = (e as f64 * val_frac).floor() as usize;
    let n_test = (e as f64 * test_frac).floor() as usize;

    let mut order = g.edges().to_vec();
    order.shuffle(rng);
    let mut uf = UnionFind::new(g.num_nodes());
    let (mut tree, mut rest) = (Vec::new(), Vec::new());
    for &(u, v) in &order {
        if uf.union(u, v) {
            tree.push((u, v));
        } else {
            rest.push((u, v));
        }
    }
    // Candidates in masking order: non-forest edges first, then forest edges.
    let mut candidates = rest;
    candidates.extend(tree);
    let test: Vec<_> = candidates[..n_test].to_vec();
    let val: Vec<_> = candidates[n_test..n_test + n_val].to_vec();
    let mut train: Vec<_> = candidates[n_test + n_val..].to_vec();
    train.sort_unstable();

    let negs = sample_negative_edges(g, n_val + n_test, rng)?;
    let (val_neg, test_neg) = negs.split_at(n_val);
    Ok(EdgeSplit {
        train,
        val,
        test,
        val_neg: val_neg.to_vec(),
        test_neg: test_neg.to_vec(),
    })
}

/// `n` distinct node pairs that are not edges of `g`, uniformly at random.
pub fn sample_negative_edges<R: Rng + ?Sized>(
    g: &Graph,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let nodes = g.num_nodes();
    let pairs = nodes * nodes.saturating_sub(1) / 2;
    let available = pairs - g.num_edges();
    if n > available {
        return Err(Error::usage(format!(
            "asked for {n} negative edges but only {available} non-edges exist"
        )));
    }
    if 2 * n > available {
        let mut all: Vec<_> = (0..nodes)
            .flat_map(|u| (u + 1..nodes).map(move |v| (u, v)))
            .filter(|&(u, v)| !g.has_edge(u, v))
            .collect();
        all.shuffle(rng);
        all.truncate(n);
        return Ok(all);
    }
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u = rng.random_range(0..nodes);
        let v = rng.random_range(0..nodes);
        if u == v {
            continue;
        }
        let p = canonical(u, v);
        if !g.has_edge(p.0, p.1) && seen.insert(p) {
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn edge_list_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        std::fs::write(&p, "0 1\n1 2 # comment\n\n2 0\n").unwrap();
        let g = load_edge_list(&p).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (3, 3));
        std::fs::write(&p, "0 1\n1 0\n1 1\n").unwrap();
        let g = load_edge_list(&p).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        std::fs::write(&p, "0 1\n1 x\n").unwrap();
        assert!(matches!(
            load_edge_list(&p),
            Err(Error::Format { offset: 4, .. })
        ));
    }

    #[test]
    fn cora_format() {
        let dir = tempfile::tempdir().unwrap();
        let c = dir.path().join("cora.content");
        let s = dir.path().join("cora.cites");
        std::fs::write(&c, "31336\t0\t1\t0\tNeural_Networks\n1061127\t1\t0\t0\tRule_Learning\n1106406\t0\t0\t1\tNeural_Networks\n").unwrap();
        std::fs::write(
            &s,
            "31336\t1061127\n1061127\t31336\n1106406\t31336\n999\t31336\n",
        )
        .unwrap();
        let (g, rep) = load_cora(&c, &s).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges(), &[(0, 1), (0, 2)]);
        assert_eq!(rep.skipped, 1);
        assert_eq!(g.labels().unwrap(), &[0, 1, 0]);
        let x = g.features().unwrap().to_dense();
        assert_eq!(x.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn tree_sizes() {
        let g = synth_tree(2, 1);
        assert_eq!((g.num_nodes(), g.num_edges()), (4, 3));
        let g = synth_tree(2, 0);
        assert_eq!((g.num_nodes(), g.num_edges()), (1, 0));
        assert_eq!(synth_tree(2, 3).num_nodes(), 22);
        for (b, l) in [(2usize, 7usize), (3, 4), (1, 5)] {
            let expect = 1 + (0..l).map(|k| (b + 1) * b.pow(k as u32)).sum::<usize>();
            let g = synth_tree(b, l);
            assert_eq!(g.num_nodes(), expect);
            assert_eq!(g.num_edges(), expect - 1);
            assert_eq!(g.components(), 1);
        }
    }

    #[test]
    fn normalized_adjacency_values() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let a = g.normalized_adjacency().to_dense();
        let expect = [0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0];
        for (x, y) in a.data().iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn split_without_masking_keeps_everything() {
        let g = synth_tree(2, 3);
        let s = split_edges(&g, 0.0, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.train, g.edges());
        assert!(s.val.is_empty() && s.test.is_empty() && s.test_neg.is_empty());
    }

    #[test]
    fn split_protects_spanning_forest() {
        // grid graph: plenty of non-forest edges
        let w = 8;
        let mut e = Vec::new();
        for r in 0..w {
            for c in 0..w {
                let i = r * w + c;
                if c + 1 < w {
                    e.push((i, i + 1));
                }
                if r + 1 < w {
                    e.push((i, i + w));
                }
            }
        }
        let g = Graph::new(w * w, e).unwrap();
        let s = split_edges(&g, 0.05, 0.10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        // 112 edges: ⌊11.2⌋ test, ⌊5.6⌋ validation
        assert_eq!(s.test.len(), 11);
        assert_eq!(s.val.len(), 5);
        assert_eq!(g.with_edges(&s.train).unwrap().components(), 1);
    }

    #[test]
    fn negatives_when_nearly_complete() {
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let all = sample_negative_edges(&g, 6, &mut rng).unwrap();
        let set: HashSet<_> = all.iter().copied().collect();
        assert_eq!(set.len(), 6);
        assert!(all.iter().all(|&(u, v)| !g.has_edge(u, v)));
        assert!(sample_negative_edges(&g, 7, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(
            n in 4usize..30,
            raw in prop::collection::vec((0usize..30, 0usize..30), 1..120),
            seed in 0u64..1000,
            vf in 0.0f64..0.3,
            tf in 0.0f64..0.3,
        ) {
            let g = Graph::new(n, raw.into_iter().map(|(u, v)| (u % n, v % n))).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = match split_edges(&g, vf, tf, &mut rng) {
                Ok(s) => s,
                Err(_) => return Ok(()), // too few non-edges for the negatives
            };
            let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(&all[..], g.edges());
            let mut negs: Vec<_> = s.val_neg.iter().chain(&s.test_neg).copied().collect();
            prop_assert_eq!(negs.len(), s.val.len() + s.test.len());
            for &(u, v) in &negs {
                prop_assert!(u < v && !g.has_edge(u, v));
            }
            negs.sort_unstable();
            negs.dedup();
            prop_assert_eq!(negs.len(), s.val.len() + s.test.len());
            let train = g.with_edges(&s.train).unwrap();
            for &(u, v) in s.val.iter().chain(&s.test) {
                prop_assert!(!train.has_edge(u, v));
            }
            // Masking never disconnects more than forced by the quota.
            let forced = (s.val.len() + s.test.len())
                .saturating_sub(g.num_edges() + g.components() - n);
            prop_assert!(train.components() <= g.components() + forced);
        }
    }
}
