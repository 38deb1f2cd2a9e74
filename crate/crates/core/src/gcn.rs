//! Two-layer graph convolutional encoder producing a fixed-width state.
//!
//! Nodes are typed. Each type has its own input projection so that nodes
//! with differently sized feature vectors share one hidden width. String
//! identifiers enter through a hashed embedding table and are summed per
//! node, so the encoding depends on names only, never on enumeration order.
//! After two propagation steps with the symmetric normalised adjacency the
//! node embeddings are mean-pooled and linearly mapped to the state.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{matrix, xavier_uniform, Parameters};

pub const STATE_DIM: usize = 22;
pub const EMBED_VOCAB: usize = 64;
pub const EMBED_WIDTH: usize = 4;
const PROJ_WIDTH: usize = 32;
const HIDDEN1: usize = 64;
const HIDDEN2: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    Talker,
    Listener,
    ScheduledQueue,
    BeQueue,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::Talker,
        NodeType::Listener,
        NodeType::ScheduledQueue,
        NodeType::BeQueue,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Length of the numeric feature vector for this node type.
    pub fn feature_len(self) -> usize {
        match self {
            NodeType::Talker => 10,
            NodeType::Listener => 4,
            NodeType::ScheduledQueue => 6,
            NodeType::BeQueue => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub node_type: NodeType,
    pub features: Vec<f64>,
    /// Identifiers looked up in the embedding table.
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphState {
    pub nodes: Vec<GraphNode>,
    /// Undirected edges; duplicates and self loops are ignored.
    pub edges: Vec<(usize, usize)>,
}

impl GraphState {
    /// Reorder nodes by `perm` (new position i holds old node perm[i]).
    pub fn permuted(&self, perm: &[usize]) -> GraphState {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        GraphState {
            nodes: perm.iter().map(|&o| self.nodes[o].clone()).collect(),
            edges: self.edges.iter().map(|&(a, b)| (inv[a], inv[b])).collect(),
        }
    }

    /// D^-1/2 (A + I) D^-1/2 on the symmetrised adjacency.
    pub fn normalized_adjacency(&self) -> Array2<f64> {
        let n = self.nodes.len();
        let mut a = Array2::<f64>::eye(n);
        for &(u, v) in &self.edges {
            if u != v {
                a[(u, v)] = 1.0;
                a[(v, u)] = 1.0;
            }
        }
        let d: Array1<f64> = a.sum_axis(Axis(1)).mapv(|x| 1.0 / x.sqrt());
        let mut out = a;
        for ((i, j), v) in out.indexed_iter_mut() {
            *v *= d[i] * d[j];
        }
        out
    }
}

/// Stable FNV-1a hash of an identifier into the embedding vocabulary.
pub fn token_slot(token: &str) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % EMBED_VOCAB as u64) as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnEncoder {
    #[serde(with = "matrix")]
    embed: Array2<f64>,
    #[serde(with = "crate::nn::matrices")]
    proj_w: Vec<Array2<f64>>,
    #[serde(with = "crate::nn::matrices")]
    proj_b: Vec<Array2<f64>>,
    #[serde(with = "matrix")]
    w1: Array2<f64>,
    #[serde(with = "matrix")]
    b1: Array2<f64>,
    #[serde(with = "matrix")]
    w2: Array2<f64>,
    #[serde(with = "matrix")]
    b2: Array2<f64>,
    #[serde(with = "matrix")]
    wo: Array2<f64>,
    #[serde(with = "matrix")]
    bo: Array2<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct GcnCache {
    adj: Array2<f64>,
    inputs: Vec<Array1<f64>>,
    types: Vec<usize>,
    slots: Vec<Vec<usize>>,
    m0: Array2<f64>,
    h1: Array2<f64>,
    m1: Array2<f64>,
    h2: Array2<f64>,
    pooled: Array2<f64>,
    pub state: Array1<f64>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GcnError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node {node} has {got} features, expected {expected}")]
    FeatureLen { node: usize, got: usize, expected: usize },
    #[error("edge ({0}, {1}) references a missing node")]
    BadEdge(usize, usize),
}

impl GcnEncoder {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> GcnEncoder {
        let proj_w = NodeType::ALL
            .iter()
            .map(|t| xavier_uniform(rng, t.feature_len() + EMBED_WIDTH, PROJ_WIDTH))
            .collect();
        GcnEncoder {
            embed: Array2::from_shape_fn((EMBED_VOCAB, EMBED_WIDTH), |_| rng.random_range(-0.1..0.1)),
            proj_w,
            proj_b: vec![Array2::zeros((1, PROJ_WIDTH)); 4],
            w1: xavier_uniform(rng, PROJ_WIDTH, HIDDEN1),
            b1: Array2::zeros((1, HIDDEN1)),
            w2: xavier_uniform(rng, HIDDEN1, HIDDEN2),
            b2: Array2::zeros((1, HIDDEN2)),
            wo: xavier_uniform(rng, HIDDEN2, STATE_DIM),
            bo: Array2::zeros((1, STATE_DIM)),
        }
    }

    pub fn validate(graph: &GraphState) -> Result<(), GcnError> {
        if graph.nodes.is_empty() {
            return Err(GcnError::Empty);
        }
        for (i, n) in graph.nodes.iter().enumerate() {
            if n.features.len() != n.node_type.feature_len() {
                return Err(GcnError::FeatureLen {
                    node: i,
                    got: n.features.len(),
                    expected: n.node_type.feature_len(),
                });
            }
        }
        let n = graph.nodes.len();
        if let Some(&(a, b)) = graph.edges.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(GcnError::BadEdge(a, b));
        }
        Ok(())
    }

    pub fn encode(&self, graph: &GraphState) -> Result<Array1<f64>, GcnError> {
        Ok(self.forward(graph)?.state)
    }

    pub fn forward(&self, graph: &GraphState) -> Result<GcnCache, GcnError> {
        Self::validate(graph)?;
        let n = graph.nodes.len();
        let adj = graph.normalized_adjacency();
        let mut h0 = Array2::zeros((n, PROJ_WIDTH));
        let mut inputs = Vec::with_capacity(n);
        let mut types = Vec::with_capacity(n);
        let mut slots = Vec::with_capacity(n);
        for (i, node) in graph.nodes.iter().enumerate() {
            let t = node.node_type.index();
            let sl: Vec<usize> = node.tokens.iter().map(|s| token_slot(s)).collect();
            let mut x = Array1::zeros(node.features.len() + EMBED_WIDTH);
            for (k, &f) in node.features.iter().enumerate() {
                x[k] = f;
            }
            for &s in &sl {
                let mut tail = x.slice_mut(s![node.features.len()..]);
                tail += &self.embed.row(s);
            }
            let row = x.dot(&self.proj_w[t]) + self.proj_b[t].row(0);
            h0.row_mut(i).assign(&row);
            inputs.push(x);
            types.push(t);
            slots.push(sl);
        }
        let m0 = adj.dot(&h0);
        let h1 = (m0.dot(&self.w1) + &self.b1).mapv(|v| v.max(0.0));
        let m1 = adj.dot(&h1);
        let h2 = (m1.dot(&self.w2) + &self.b2).mapv(|v| v.max(0.0));
        let pooled = h2.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        let state = (pooled.dot(&self.wo) + &self.bo).row(0).to_owned();
        Ok(GcnCache {
            adj,
            inputs,
            types,
            slots,
            m0,
            h1,
            m1,
            h2,
            pooled,
            state,
        })
    }

    /// Accumulate parameter gradients for upstream gradient `d_state`.
    pub fn backward(&self, cache: &GcnCache, d_state: &Array1<f64>, grads: &mut [Array2<f64>]) {
        let n = cache.h2.nrows() as f64;
        let ds = d_state.view().insert_axis(Axis(0));
        grads[13] += &cache.pooled.t().dot(&ds);
        grads[14] += &ds;
        let dpool = ds.dot(&self.wo.t());
        let mut dz2 = Array2::from_shape_fn(cache.h2.raw_dim(), |(_, j)| dpool[(0, j)] / n);
        dz2.zip_mut_with(&cache.h2, |g, &h| {
            if h <= 0.0 {
                *g = 0.0
            }
        });
        grads[11] += &cache.m1.t().dot(&dz2);
        grads[12] += &dz2.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut dz1 = cache.adj.t().dot(&dz2.dot(&self.w2.t()));
        dz1.zip_mut_with(&cache.h1, |g, &h| {
            if h <= 0.0 {
                *g = 0.0
            }
        });
        grads[9] += &cache.m0.t().dot(&dz1);
        grads[10] += &dz1.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dh0 = cache.adj.t().dot(&dz1.dot(&self.w1.t()));
        for (i, x) in cache.inputs.iter().enumerate() {
            let t = cache.types[i];
            let g = dh0.row(i);
            let outer = x
                .view()
                .insert_axis(Axis(1))
                .dot(&g.insert_axis(Axis(0)));
            grads[1 + t] += &outer;
            grads[5 + t] += &g.insert_axis(Axis(0));
            if !cache.slots[i].is_empty() {
                let dx = self.proj_w[t].dot(&g);
                let de = dx.slice(s![x.len() - EMBED_WIDTH..]);
                for &s in &cache.slots[i] {
                    let mut row = grads[0].row_mut(s);
                    row += &de;
                }
            }
        }
    }
}

impl Parameters for GcnEncoder {
    fn params(&self) -> Vec<&Array2<f64>> {
        let mut v = vec![&self.embed];
        v.extend(self.proj_w.iter());
        v.extend(self.proj_b.iter());
        v.extend([&self.w1, &self.b1, &self.w2, &self.b2, &self.wo, &self.bo]);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.embed];
        v.extend(self.proj_w.iter_mut());
        v.extend(self.proj_b.iter_mut());
        v.extend([
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.wo,
            &mut self.bo,
        ]);
        v
    }
}

/// Linear decoder used to pretrain the encoder without a critic: from the
/// state it predicts the per-type mean of the numeric node features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionHead {
    #[serde(with = "matrix")]
    w: Array2<f64>,
    #[serde(with = "matrix")]
    b: Array2<f64>,
}

impl ReconstructionHead {
    pub fn target_len() -> usize {
        NodeType::ALL.iter().map(|t| t.feature_len()).sum()
    }

    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> ReconstructionHead {
        ReconstructionHead {
            w: xavier_uniform(rng, STATE_DIM, Self::target_len()),
            b: Array2::zeros((1, Self::target_len())),
        }
    }

    pub fn target(graph: &GraphState) -> Array1<f64> {
        let mut out = Vec::with_capacity(Self::target_len());
        for t in NodeType::ALL {
            let rows: Vec<&GraphNode> = graph.nodes.iter().filter(|n| n.node_type == t).collect();
            for k in 0..t.feature_len() {
                let s: f64 = rows.iter().map(|n| n.features[k]).sum();
                out.push(if rows.is_empty() { 0.0 } else { s / rows.len() as f64 });
            }
        }
        Array1::from(out)
    }

    /// One gradient step of mean squared reconstruction error over
    /// `graphs`; returns the loss before the step.
    pub fn train_step(
        &mut self,
        encoder: &mut GcnEncoder,
        enc_opt: &mut crate::nn::Adam,
        lr: f64,
        graphs: &[GraphState],
    ) -> Result<f64, GcnError> {
        let mut enc_grads = encoder.zero_grads();
        let mut dw = Array2::zeros(self.w.raw_dim());
        let mut db = Array2::zeros(self.b.raw_dim());
        let mut loss = 0.0;
        let scale = 1.0 / (graphs.len() * Self::target_len()) as f64;
        for g in graphs {
            let cache = encoder.forward(g)?;
            let pred = cache.state.dot(&self.w) + self.b.row(0);
            let err = &pred - &Self::target(g);
            loss += err.mapv(|e| e * e).sum() * scale;
            let dpred = err * (2.0 * scale);
            dw += &cache
                .state
                .view()
                .insert_axis(Axis(1))
                .dot(&dpred.view().insert_axis(Axis(0)));
            db += &dpred.view().insert_axis(Axis(0));
            let ds = self.w.dot(&dpred);
            encoder.backward(&cache, &ds, &mut enc_grads);
        }
        enc_opt.step(encoder, &enc_grads);
        self.w.scaled_add(-lr, &dw);
        self.b.scaled_add(-lr, &db);
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_difference, relative_error, Adam};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> GraphState {
        let nodes = (0..n)
            .map(|i| {
                let t = NodeType::ALL[i % 4];
                GraphNode {
                    node_type: t,
                    features: (0..t.feature_len()).map(|_| rng.random_range(0.0..1.0)).collect(),
                    tokens: vec![format!("node{i}")],
                }
            })
            .collect();
        let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
        for _ in 0..n {
            edges.push((rng.random_range(0..n), rng.random_range(0..n)));
        }
        GraphState { nodes, edges }
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = GcnEncoder::new(&mut rng);
        let g = random_graph(&mut rng, 17);
        let base = enc.encode(&g).unwrap();
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..17).collect();
            perm.shuffle(&mut rng);
            let s = enc.encode(&g.permuted(&perm)).unwrap();
            assert!((&s - &base).iter().all(|d| d.abs() < 1e-9));
        }
    }

    #[test]
    fn fixed_width_for_any_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let enc = GcnEncoder::new(&mut rng);
        for n in [1, 4, 9, 40] {
            assert_eq!(enc.encode(&random_graph(&mut rng, n)).unwrap().len(), STATE_DIM);
        }
    }

    #[test]
    fn rejects_bad_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = GcnEncoder::new(&mut rng);
        assert_eq!(enc.encode(&GraphState::default()).unwrap_err(), GcnError::Empty);
        let mut g = random_graph(&mut rng, 4);
        g.nodes[1].features.pop();
        assert!(matches!(enc.encode(&g), Err(GcnError::FeatureLen { node: 1, .. })));
        let mut g = random_graph(&mut rng, 4);
        g.edges.push((0, 9));
        assert_eq!(enc.encode(&g).unwrap_err(), GcnError::BadEdge(0, 9));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut enc = GcnEncoder::new(&mut rng);
        let g = random_graph(&mut rng, 9);
        let weights = Array1::from_shape_fn(STATE_DIM, |i| (i as f64 * 0.37).sin());
        let f = |e: &GcnEncoder| e.encode(&g).unwrap().dot(&weights);
        let cache = enc.forward(&g).unwrap();
        let mut grads = enc.zero_grads();
        enc.backward(&cache, &weights, &mut grads);
        let slot = token_slot("node3");
        let mut checked = 0;
        for t in 0..grads.len() {
            let (r, c) = grads[t].dim();
            let mut idx = vec![(0, 0), (r - 1, c - 1), (r / 2, c / 3)];
            if t == 0 {
                idx.push((slot, 1));
            }
            for (i, j) in idx {
                let analytic = grads[t][(i, j)];
                let fd = finite_difference(&mut enc, t, (i, j), 1e-6, f);
                if analytic.abs() > 1e-8 || fd.abs() > 1e-8 {
                    assert!(relative_error(fd, analytic) < 1e-4, "tensor {t} ({i},{j}) {fd} vs {analytic}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn reconstruction_pretraining_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut enc = GcnEncoder::new(&mut rng);
        let mut head = ReconstructionHead::new(&mut rng);
        let graphs: Vec<GraphState> = (0..8).map(|i| random_graph(&mut rng, 6 + i)).collect();
        let mut opt = Adam::new(&enc, 1e-3);
        let first = head.train_step(&mut enc, &mut opt, 1e-2, &graphs).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = head.train_step(&mut enc, &mut opt, 1e-2, &graphs).unwrap();
        }
        assert!(last < first * 0.5, "{first} -> {last}");
    }
}
