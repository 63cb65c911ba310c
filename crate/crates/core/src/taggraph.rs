//! Tag co-occurrence graph, pruning, and genre-cluster extraction.
//!
//! Edge weight between two tags is the number of videos carrying both.
//! Edges lighter than a threshold `eta` are dropped and each connected
//! component of what remains becomes one genre-cluster. Every video is then
//! assigned to the component holding the plurality of its tags.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Event, EventStream};

/// Undirected weighted tag graph. Edge keys are stored with the smaller tag
/// first; a missing key means weight zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<(String, String), u64>,
}

impl TagGraph {
    pub fn weight(&self, a: &str, b: &str) -> u64 {
        if a == b {
            return 0;
        }
        let key = ordered(a, b);
        self.edges
            .get(&(key.0.to_string(), key.1.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn max_weight(&self) -> u64 {
        self.edges.values().copied().max().unwrap_or(0)
    }
}

fn ordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A genre-cluster: one tag component and the videos assigned to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreCluster {
    pub cluster_id: usize,
    pub tags: BTreeSet<String>,
    pub events: EventStream,
}

impl GenreCluster {
    pub fn times(&self) -> Vec<f64> {
        self.events.times()
    }
}

/// Count pairwise tag co-occurrences. Partial counts are built per worker and
/// merged, so the result does not depend on scheduling or input order.
pub fn build_affinity_graph(s: &EventStream) -> TagGraph {
    let counts = s
        .events
        .par_iter()
        .fold(HashMap::<(&str, &str), u64>::new, |mut acc, e| {
            let tags: Vec<&str> = e.tags.iter().map(String::as_str).collect();
            for (i, a) in tags.iter().enumerate() {
                for b in &tags[i + 1..] {
                    *acc.entry((*a, *b)).or_insert(0) += 1;
                }
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let nodes = s
        .events
        .iter()
        .flat_map(|e| e.tags.iter().cloned())
        .collect();
    let edges = counts
        .into_iter()
        .map(|((a, b), w)| ((a.to_string(), b.to_string()), w))
        .collect();
    TagGraph { nodes, edges }
}

/// Drop every edge with weight below `eta`. Nodes are kept.
pub fn prune_graph(g: &TagGraph, eta: u64) -> Result<TagGraph> {
    if eta < 1 {
        return Err(Error::invalid("eta must be at least 1"));
    }
    Ok(TagGraph {
        nodes: g.nodes.clone(),
        edges: g
            .edges
            .iter()
            .filter(|(_, &w)| w >= eta)
            .map(|(k, &w)| (k.clone(), w))
            .collect(),
    })
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
    }
}

/// Partition the node set into connected components, ordered by each
/// component's smallest tag.
pub fn connected_components(g: &TagGraph) -> Vec<BTreeSet<String>> {
    let names: Vec<&String> = g.nodes.iter().collect();
    let index: HashMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut dsu = DisjointSet::new(names.len());
    for (a, b) in g.edges.keys() {
        if let (Some(&i), Some(&j)) = (index.get(a.as_str()), index.get(b.as_str())) {
            dsu.union(i, j);
        }
    }
    // Nodes are visited in sorted order, so the first member seen for each
    // root is its smallest tag and component order follows.
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut out: Vec<BTreeSet<String>> = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let root = dsu.find(i);
        let k = *slot.entry(root).or_insert_with(|| {
            out.push(BTreeSet::new());
            out.len() - 1
        });
        out[k].insert((*name).clone());
    }
    out
}

/// Assign each video to the component with the most of its tags; ties go to
/// the tied component whose smallest tag sorts first. Empty clusters are
/// dropped and the survivors numbered from zero in component order.
pub fn assign_videos(s: &EventStream, components: &[BTreeSet<String>]) -> Result<Vec<GenreCluster>> {
    let owner: HashMap<&str, usize> = components
        .iter()
        .enumerate()
        .flat_map(|(k, c)| c.iter().map(move |t| (t.as_str(), k)))
        .collect();
    // Components are not guaranteed to arrive sorted; rank by smallest tag.
    let mut rank: Vec<usize> = (0..components.len()).collect();
    rank.sort_by(|&a, &b| components[a].first().cmp(&components[b].first()));
    let mut position = vec![0; components.len()];
    for (r, &k) in rank.iter().enumerate() {
        position[k] = r;
    }

    let mut members: Vec<Vec<&Event>> = vec![Vec::new(); components.len()];
    for e in &s.events {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for tag in &e.tags {
            let k = owner.get(tag.as_str()).ok_or_else(|| Error::UnassignedTag {
                video_id: e.video_id.clone(),
                tag: tag.clone(),
            })?;
            *votes.entry(*k).or_insert(0) += 1;
        }
        let best = votes
            .iter()
            .max_by(|(ka, va), (kb, vb)| va.cmp(vb).then(position[**kb].cmp(&position[**ka])))
            .map(|(k, _)| *k)
            .expect("tag set is non-empty");
        members[best].push(e);
    }

    Ok(rank
        .into_iter()
        .filter(|&k| !members[k].is_empty())
        .enumerate()
        .map(|(id, k)| GenreCluster {
            cluster_id: id,
            tags: components[k].clone(),
            events: s.restricted(members[k].iter().copied()),
        })
        .collect())
}

/// build → prune → components → assign, in one call.
pub fn cluster_stream(s: &EventStream, eta: u64) -> Result<Vec<GenreCluster>> {
    let g = prune_graph(&build_affinity_graph(s), eta)?;
    assign_videos(s, &connected_components(&g))
}

/// Component statistics at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: u64,
    pub n_components: usize,
    pub n_clusters: usize,
    pub min_cluster_size: usize,
    pub median_cluster_size: usize,
    pub max_cluster_size: usize,
}

/// Component and cluster-size summary for each `eta` in the inclusive range.
pub fn sweep(s: &EventStream, eta_min: u64, eta_max: u64) -> Result<Vec<SweepRow>> {
    if eta_min < 1 || eta_max < eta_min {
        return Err(Error::invalid(format!("bad eta range {eta_min}:{eta_max}")));
    }
    let full = build_affinity_graph(s);
    (eta_min..=eta_max)
        .map(|eta| {
            let comps = connected_components(&prune_graph(&full, eta)?);
            let clusters = assign_videos(s, &comps)?;
            let mut sizes: Vec<usize> = clusters.iter().map(|c| c.events.len()).collect();
            sizes.sort_unstable();
            Ok(SweepRow {
                eta,
                n_components: comps.len(),
                n_clusters: clusters.len(),
                min_cluster_size: sizes.first().copied().unwrap_or(0),
                median_cluster_size: sizes.get(sizes.len() / 2).copied().unwrap_or(0),
                max_cluster_size: sizes.last().copied().unwrap_or(0),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RawRecord;

    pub(crate) fn stream(videos: &[&[&str]]) -> EventStream {
        EventStream::from_records(
            videos
                .iter()
                .enumerate()
                .map(|(i, tags)| RawRecord {
                    video_id: format!("v{i}"),
                    timestamp: i as f64 * 3600.0,
                    uploader_id: "u".into(),
                    tags: tags.iter().map(|t| t.to_string()).collect(),
                    n_views: 0,
                    n_comments: 0,
                })
                .collect(),
        )
    }

    fn set(tags: &[&str]) -> BTreeSet<String> {
        tags.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn pair_counts() {
        let g = build_affinity_graph(&stream(&[&["a", "b"], &["a", "b"], &["c"]]));
        assert_eq!(g.weight("a", "b"), 2);
        assert_eq!(g.weight("b", "a"), 2);
        assert_eq!(g.weight("a", "c"), 0);
        assert!(g.nodes.contains("c"));

        let g = build_affinity_graph(&stream(&[&["a", "b", "c"]]));
        assert_eq!(g.edges.len(), 3);
        assert!(g.edges.values().all(|&w| w == 1));
    }

    #[test]
    fn pruning() {
        let g = build_affinity_graph(&stream(&[&["a", "b"], &["a", "b", "c"]]));
        // (a,b)=2, (a,c)=1, (b,c)=1
        let p = prune_graph(&g, 2).unwrap();
        assert_eq!(p.edges.len(), 1);
        assert_eq!(p.weight("a", "b"), 2);
        assert_eq!(p.nodes, g.nodes);
        assert_eq!(prune_graph(&g, 1).unwrap(), g);
        assert!(prune_graph(&g, g.max_weight() + 1).unwrap().edges.is_empty());
        assert!(prune_graph(&g, 0).is_err());
    }

    #[test]
    fn components_small_cases() {
        let g = build_affinity_graph(&stream(&[&["a", "b"], &["c"]]));
        assert_eq!(connected_components(&g), vec![set(&["a", "b"]), set(&["c"])]);
        let empty = TagGraph {
            nodes: set(&["a", "b", "c"]),
            edges: BTreeMap::new(),
        };
        assert_eq!(connected_components(&empty).len(), 3);
    }

    #[test]
    fn plurality_and_tie_rules() {
        let s = stream(&[&["a", "b", "c"]]);
        let c = assign_videos(&s, &[set(&["a", "b"]), set(&["c"])]).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].tags, set(&["a", "b"]));

        let s = stream(&[&["a", "c"]]);
        let c = assign_videos(&s, &[set(&["c"]), set(&["a"])]).unwrap();
        assert_eq!(c[0].tags, set(&["a"]));

        let s = stream(&[&["a"], &["c"], &["c"]]);
        let c = assign_videos(&s, &[set(&["a"]), set(&["c"])]).unwrap();
        assert_eq!(c[0].events.len(), 1);
        assert_eq!(c[1].events.len(), 2);
    }

    #[test]
    fn unknown_tag_is_an_error() {
        let s = stream(&[&["a", "z"]]);
        assert!(matches!(
            assign_videos(&s, &[set(&["a"])]),
            Err(Error::UnassignedTag { .. })
        ));
    }

    #[test]
    fn toy_fixture_two_components_at_eta_two() {
        let s = stream(&[&["a", "b"], &["a", "b"], &["c", "d"], &["c", "d"], &["a", "b", "d"]]);
        let comps = connected_components(&prune_graph(&build_affinity_graph(&s), 2).unwrap());
        assert_eq!(comps, vec![set(&["a", "b"]), set(&["c", "d"])]);
        let clusters = cluster_stream(&s, 2).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].events.len(), 3);
    }

    #[test]
    fn sweep_rows() {
        let s = stream(&[&["a", "b"], &["a", "b"], &["b", "c"], &["d", "e"], &["d", "e"]]);
        let rows = sweep(&s, 1, 5).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.windows(2).all(|w| w[0].n_components <= w[1].n_components));
        assert_eq!(rows[0].n_components, 2);
    }
}
