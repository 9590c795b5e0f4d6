use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{BatchNorm, Linear, ParamStore};
use super::tape::{Sparse, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{MultiGraph, FEATURE_DIM};
use crate::seed::rng_for;
use crate::symh::{Census, NodeKind, Obb, SymhNode, SymhTree, SymmetryParam};

/// Switches for the ablation variants. All on is the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Type one-hot in the node features.
    pub node_types: bool,
    pub structure_edges: bool,
    pub spatial_edges: bool,
    /// Messages carry `h_j − h_i` rather than `h_j`.
    pub edge_difference: bool,
    /// Trees keep symmetry nodes; off trains on symmetry-free trees.
    pub symmetry: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { node_types: true, structure_edges: true, spatial_edges: true, edge_difference: true, symmetry: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Code width; must be even.
    pub d: usize,
    /// Message-passing steps.
    pub steps: usize,
    /// Hidden width of the decoder MLPs.
    pub hidden: usize,
    /// Depth cap of free decoding; the root is at depth 1.
    pub max_depth: usize,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { d: 80, steps: 3, hidden: 200, max_depth: 10, ablation: Ablation::default() }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % 2 != 0 {
            return Err(Error::Config(format!("code width d must be even and positive, got {}", self.d)));
        }
        if self.steps == 0 {
            return Err(Error::Config("at least one message-passing step is required".into()));
        }
        if self.hidden == 0 || self.max_depth == 0 {
            return Err(Error::Config("hidden width and max depth must be positive".into()));
        }
        Ok(())
    }
}

/// Two-layer perceptron with a tanh hidden layer and linear output.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    fn new(store: &mut ParamStore, rng: &mut rand_chacha::ChaCha8Rng, name: &str, dims: (usize, usize, usize)) -> Self {
        Self {
            hidden: Linear::new(store, rng, &format!("{name}.0"), dims.0, dims.1),
            out: Linear::new(store, rng, &format!("{name}.1"), dims.1, dims.2),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Step {
    local: Linear,
    msg1: Linear,
    msg_bn: BatchNorm,
    msg2: Linear,
    spatial: Linear,
    spatial_bn: BatchNorm,
}

/// Encoder and decoder parameters with their layout.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    embed: Linear,
    steps: Vec<Step>,
    readout_s: (Linear, BatchNorm, Linear),
    readout_p: (Linear, BatchNorm, Linear),
    cls: Mlp,
    adj: Mlp,
    sym: Mlp,
    obb: Mlp,
}

/// Several graphs as one disjoint union, with the aggregation maps the
/// encoder needs.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub features: Array2<f64>,
    /// Row range of each graph.
    pub segments: Vec<(usize, usize)>,
    /// Directed structure edges: message into `src[k]` from `dst[k]`.
    src: Vec<usize>,
    dst: Vec<usize>,
    message_mean: Sparse,
    spatial_mean: Sparse,
    graph_mean: Sparse,
}

impl GraphBatch {
    pub fn new(graphs: &[&MultiGraph], ablation: &Ablation) -> Result<Self> {
        let total: usize = graphs.iter().map(|g| g.len()).sum();
        let mut features = Array2::zeros((total, FEATURE_DIM));
        let mut segments = Vec::with_capacity(graphs.len());
        let (mut src, mut dst) = (Vec::new(), Vec::new());
        let mut spatial_mean = Sparse { rows: Vec::with_capacity(total) };
        let mut graph_mean = Sparse { rows: Vec::with_capacity(graphs.len()) };
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); total];
        let mut offset = 0;
        for g in graphs {
            if g.is_empty() {
                return Err(Error::Shape("cannot encode a graph without nodes".into()));
            }
            let n = g.len();
            for i in 0..n {
                let f = g.feature(i);
                let width = if ablation.node_types { FEATURE_DIM } else { 2 };
                for k in 0..width {
                    features[[offset + i, k]] = f[k];
                }
            }
            if ablation.structure_edges {
                for &(i, j) in &g.structure_edges {
                    for (a, b) in [(i, j), (j, i)] {
                        incoming[offset + a].push(src.len());
                        src.push(offset + a);
                        dst.push(offset + b);
                    }
                }
            }
            let w = 1.0 / n as f64;
            let block: Vec<(usize, f64)> = (offset..offset + n).map(|j| (j, w)).collect();
            for i in 0..n {
                spatial_mean.rows.push(if ablation.spatial_edges { block.clone() } else { vec![(offset + i, 1.0)] });
            }
            graph_mean.rows.push(block);
            segments.push((offset, offset + n));
            offset += n;
        }
        let message_mean = Sparse {
            rows: incoming
                .into_iter()
                .map(|edges| {
                    let w = 1.0 / edges.len().max(1) as f64;
                    edges.into_iter().map(|e| (e, w)).collect()
                })
                .collect(),
        };
        Ok(Self { features, segments, src, dst, message_mean, spatial_mean, graph_mean })
    }

    pub fn graph_count(&self) -> usize {
        self.segments.len()
    }
}

/// Teacher-forced decoder outputs, level by level, with aligned targets.
#[derive(Debug, Default)]
pub struct TeacherOutputs {
    pub cls: Vec<(Var, Vec<usize>)>,
    pub sym: Vec<(Var, Array2<f64>)>,
    pub obb: Vec<(Var, Array2<f64>)>,
    /// Census of all supervising trees.
    pub census: Census,
}

impl TeacherOutputs {
    pub fn counts(&self, tape: &Tape) -> (usize, usize, usize) {
        let rows = |v: &Var| tape.value(*v).nrows();
        (
            self.cls.iter().map(|(v, _)| rows(v)).sum(),
            self.sym.iter().map(|(v, _)| rows(v)).sum(),
            self.obb.iter().map(|(v, _)| rows(v)).sum(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cls: f64,
    pub sym: f64,
    pub obb: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { cls: 1.0, sym: 1.0, obb: 1.0 }
    }
}

/// Unweighted per-type means, and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub sym: f64,
    pub obb: f64,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_for(seed, "model/init");
        let mut store = ParamStore::default();
        let (d, h, t) = (cfg.d, cfg.hidden, cfg.steps);
        let embed = Linear::new(&mut store, &mut rng, "embed", FEATURE_DIM, d);
        let steps = (0..t)
            .map(|k| Step {
                local: Linear::new(&mut store, &mut rng, &format!("step{k}.local"), d, d),
                msg1: Linear::new(&mut store, &mut rng, &format!("step{k}.msg.0"), 2 * d, d),
                msg_bn: BatchNorm::new(&mut store, &format!("step{k}.msg.bn"), d),
                msg2: Linear::new(&mut store, &mut rng, &format!("step{k}.msg.1"), d, d),
                spatial: Linear::new(&mut store, &mut rng, &format!("step{k}.spatial"), d, d),
                spatial_bn: BatchNorm::new(&mut store, &format!("step{k}.spatial.bn"), d),
            })
            .collect();
        let mut readout = |name: &str, store: &mut ParamStore| {
            (
                Linear::new(store, &mut rng, &format!("{name}.f"), (t + 1) * d, d),
                BatchNorm::new(store, &format!("{name}.bn"), d),
                Linear::new(store, &mut rng, &format!("{name}.g"), d + (t + 1) * d, d / 2),
            )
        };
        let readout_s = readout("readout_s", &mut store);
        let readout_p = readout("readout_p", &mut store);
        let cls = Mlp::new(&mut store, &mut rng, "dec.cls", (d, h, 3));
        let adj = Mlp::new(&mut store, &mut rng, "dec.adj", (d, h, 2 * d));
        let sym = Mlp::new(&mut store, &mut rng, "dec.sym", (d, h, d + 6));
        let obb = Mlp::new(&mut store, &mut rng, "dec.obb", (d, h, 12));
        Ok(Self { cfg, store, embed, steps, readout_s, readout_p, cls, adj, sym, obb })
    }

    fn linear(&self, tape: &mut Tape, x: Var, l: &Linear, label: &str) -> Var {
        let w = tape.param(&self.store, l.w);
        let b = tape.param(&self.store, l.b);
        tape.linear(x, w, b, label)
    }

    fn bn(&self, tape: &mut Tape, x: Var, bn: &BatchNorm, training: bool, label: &str) -> Var {
        let g = tape.param(&self.store, bn.gamma);
        let b = tape.param(&self.store, bn.beta);
        tape.batch_norm(&self.store, x, g, b, (bn.running_mean, bn.running_var), training, label)
    }

    fn mlp(&self, tape: &mut Tape, x: Var, m: &Mlp, label: &str) -> Var {
        let h = self.linear(tape, x, &m.hidden, label);
        let h = tape.tanh(h, label);
        self.linear(tape, h, &m.out, label)
    }

    /// Root codes, one row per graph. With `training`, batch norm uses the
    /// statistics of the whole batch.
    pub fn encode(&self, tape: &mut Tape, batch: &GraphBatch, training: bool) -> Var {
        let x = tape.input(batch.features.clone(), "features");
        let mut h = self.linear(tape, x, &self.embed, "embed");
        let mut z = h;
        let (mut hs, mut zs) = (vec![h], vec![z]);
        let use_messages = !batch.src.is_empty();
        for (k, step) in self.steps.iter().enumerate() {
            let local = self.linear(tape, h, &step.local, "structure.local");
            h = if use_messages {
                let hi = tape.gather_rows(h, &batch.src, "structure.h_i");
                let hj = tape.gather_rows(h, &batch.dst, "structure.h_j");
                let other =
                    if self.cfg.ablation.edge_difference { tape.sub(hj, hi, "structure.diff") } else { hj };
                let m = tape.concat_cols(&[hi, other], "structure.edge_input");
                let m = self.linear(tape, m, &step.msg1, "structure.msg.0");
                let m = self.bn(tape, m, &step.msg_bn, training, "structure.msg.bn");
                let m = tape.relu(m, "structure.msg.relu");
                let m = self.linear(tape, m, &step.msg2, "structure.msg.1");
                let agg = tape.aggregate(m, batch.message_mean.clone(), "structure.mean");
                tape.add(local, agg, "structure.h")
            } else {
                local
            };
            let p = self.linear(tape, z, &step.spatial, "spatial.lin");
            let p = self.bn(tape, p, &step.spatial_bn, training, "spatial.bn");
            let p = tape.relu(p, "spatial.relu");
            z = tape.aggregate(p, batch.spatial_mean.clone(), "spatial.mean");
            hs.push(h);
            zs.push(z);
            let _ = k;
        }
        let rs = tape.concat_cols(&hs, "readout.structure_trace");
        let rp = tape.concat_cols(&zs, "readout.spatial_trace");
        let branch = |tape: &mut Tape, r: Var, parts: &(Linear, BatchNorm, Linear), name: &str| {
            let a = self.linear(tape, r, &parts.0, name);
            let a = self.bn(tape, a, &parts.1, training, name);
            let a = tape.relu(a, name);
            let a = tape.concat_cols(&[a, r], name);
            self.linear(tape, a, &parts.2, name)
        };
        let s = branch(tape, rs, &self.readout_s, "readout.structure");
        let s = tape.segment_max(s, &batch.segments, "readout.max_pool");
        let p = branch(tape, rp, &self.readout_p, "readout.spatial");
        let p = tape.aggregate(p, batch.graph_mean.clone(), "readout.mean_pool");
        tape.concat_cols(&[s, p], "root_code")
    }

    /// Decodes along the ground-truth trees, all samples of one tree level
    /// at a time. `roots` has one row per tree.
    pub fn decode_teacher_forced(&self, tape: &mut Tape, roots: Var, trees: &[&SymhTree]) -> Result<TeacherOutputs> {
        if tape.value(roots).nrows() != trees.len() {
            return Err(Error::Shape(format!(
                "{} root codes for {} trees",
                tape.value(roots).nrows(),
                trees.len()
            )));
        }
        let d = self.cfg.d;
        let mut out = TeacherOutputs::default();
        for t in trees {
            let c = t.census();
            out.census.leaves += c.leaves;
            out.census.adjacency += c.adjacency;
            out.census.symmetry += c.symmetry;
        }
        let mut frontier: Vec<(usize, usize)> = (0..trees.len()).map(|b| (b, 0)).collect();
        let mut codes = roots;
        while !frontier.is_empty() {
            let kinds: Vec<NodeKind> = frontier.iter().map(|&(b, i)| trees[b].nodes()[i].kind()).collect();
            let logits = self.mlp(tape, codes, &self.cls, "decoder.cls");
            out.cls.push((logits, kinds.iter().map(|k| k.index()).collect()));

            let pick = |k: NodeKind| -> Vec<usize> { (0..frontier.len()).filter(|&r| kinds[r] == k).collect() };
            let (adj_rows, sym_rows, leaf_rows) = (pick(NodeKind::Adjacency), pick(NodeKind::Symmetry), pick(NodeKind::Leaf));
            let mut next_parts = Vec::new();
            let mut next_frontier = Vec::new();
            if !adj_rows.is_empty() {
                let g = tape.gather_rows(codes, &adj_rows, "decoder.adj_in");
                let split = self.mlp(tape, g, &self.adj, "decoder.adj");
                let left = tape.slice_cols(split, 0, d, "decoder.adj_left");
                let right = tape.slice_cols(split, d, 2 * d, "decoder.adj_right");
                next_parts.push(left);
                next_parts.push(right);
                for side in 0..2 {
                    for &r in &adj_rows {
                        let (b, i) = frontier[r];
                        next_frontier.push((b, trees[b].children(i).expect("validated tree")[side]));
                    }
                }
            }
            if !sym_rows.is_empty() {
                let g = tape.gather_rows(codes, &sym_rows, "decoder.sym_in");
                let o = self.mlp(tape, g, &self.sym, "decoder.sym");
                let child = tape.slice_cols(o, 0, d, "decoder.sym_child");
                let params = tape.slice_cols(o, d, d + 6, "decoder.sym_params");
                let mut target = Array2::zeros((sym_rows.len(), 6));
                for (k, &r) in sym_rows.iter().enumerate() {
                    let (b, i) = frontier[r];
                    let SymhNode::Symmetry(p) = &trees[b].nodes()[i] else { unreachable!() };
                    for (c, v) in p.to_code().iter().enumerate() {
                        target[[k, c]] = *v;
                    }
                    next_frontier.push((b, i + 1));
                }
                next_parts.push(child);
                out.sym.push((params, target));
            }
            if !leaf_rows.is_empty() {
                let g = tape.gather_rows(codes, &leaf_rows, "decoder.obb_in");
                let o = self.mlp(tape, g, &self.obb, "decoder.obb");
                let mut target = Array2::zeros((leaf_rows.len(), 12));
                for (k, &r) in leaf_rows.iter().enumerate() {
                    let (b, i) = frontier[r];
                    let SymhNode::Leaf(obb) = &trees[b].nodes()[i] else { unreachable!() };
                    for (c, v) in obb.to_code().iter().enumerate() {
                        target[[k, c]] = *v;
                    }
                }
                out.obb.push((o, target));
            }
            if next_parts.is_empty() {
                break;
            }
            codes = tape.concat_rows(&next_parts, "decoder.codes");
            frontier = next_frontier;
        }
        Ok(out)
    }

    /// Classification cross-entropy plus squared errors of symmetry and box
    /// codes, each averaged within its type, then weighted and summed.
    pub fn loss(&self, tape: &mut Tape, out: &TeacherOutputs, w: &LossWeights) -> Result<(Var, LossBreakdown)> {
        let (n_cls, n_sym, n_obb) = out.counts(tape);
        let c = out.census;
        if n_cls != c.total() || n_sym != c.symmetry || n_obb != c.leaves {
            return Err(Error::Shape(format!(
                "predictions ({n_cls} nodes, {n_sym} symmetry, {n_obb} boxes) do not match the trees ({c:?})"
            )));
        }
        let mut terms = Vec::new();
        let mut parts = LossBreakdown::default();
        for (v, targets) in &out.cls {
            let ce = tape.softmax_ce(*v, targets, 1.0 / n_cls as f64, "loss.cls");
            parts.cls += tape.scalar(ce);
            terms.push((ce, w.cls));
        }
        for (v, target) in &out.sym {
            let e = tape.mse(*v, target.clone(), 1.0 / (6 * n_sym) as f64, "loss.sym");
            parts.sym += tape.scalar(e);
            terms.push((e, w.sym));
        }
        for (v, target) in &out.obb {
            let e = tape.mse(*v, target.clone(), 1.0 / (12 * n_obb) as f64, "loss.obb");
            parts.obb += tape.scalar(e);
            terms.push((e, w.obb));
        }
        let total = tape.weighted_sum(&terms, "loss");
        parts.total = tape.scalar(total);
        Ok((total, parts))
    }

    /// Teacher-forced loss of one batch on a fresh tape.
    pub fn batch_loss(
        &self,
        graphs: &[&MultiGraph],
        trees: &[&SymhTree],
        weights: &LossWeights,
        training: bool,
    ) -> Result<(Tape, Var, LossBreakdown)> {
        let batch = GraphBatch::new(graphs, &self.cfg.ablation)?;
        let mut tape = Tape::new(&self.store);
        let roots = self.encode(&mut tape, &batch, training);
        let out = self.decode_teacher_forced(&mut tape, roots, trees)?;
        let (loss, parts) = self.loss(&mut tape, &out, weights)?;
        tape.check_finite()?;
        Ok((tape, loss, parts))
    }

    /// Root code of one graph with running batch-norm statistics.
    pub fn encode_one(&self, graph: &MultiGraph) -> Result<Vec<f64>> {
        let batch = GraphBatch::new(&[graph], &self.cfg.ablation)?;
        let mut tape = Tape::new(&self.store);
        let r = self.encode(&mut tape, &batch, false);
        tape.check_finite()?;
        Ok(tape.value(r).row(0).to_vec())
    }

    fn apply_mlp(&self, m: &Mlp, x: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let h = (x.dot(self.store.value(m.hidden.w)) + self.store.value(m.hidden.b)).mapv(f64::tanh);
        let y = h.dot(self.store.value(m.out.w)) + self.store.value(m.out.b);
        y.into_raw_vec_and_offset().0
    }

    /// Decodes a tree from a root code, following the classifier's argmax.
    pub fn decode_free(&self, code: &[f64]) -> SymhTree {
        self.decode_free_with(code, self.cfg.max_depth, |logits| {
            let mut best = 0;
            for k in 1..3 {
                if logits[k] > logits[best] {
                    best = k;
                }
            }
            NodeKind::from_index(best).expect("three classes")
        })
    }

    /// Free decoding with a custom node-kind rule; nodes at `max_depth`
    /// become leaves.
    pub fn decode_free_with(
        &self,
        code: &[f64],
        max_depth: usize,
        mut choose: impl FnMut(&[f64]) -> NodeKind,
    ) -> SymhTree {
        let mut nodes = Vec::new();
        self.decode_node(code, 1, max_depth.max(1), &mut choose, &mut nodes);
        SymhTree::from_nodes_unchecked(nodes)
    }

    fn decode_node(
        &self,
        code: &[f64],
        depth: usize,
        max_depth: usize,
        choose: &mut impl FnMut(&[f64]) -> NodeKind,
        nodes: &mut Vec<SymhNode>,
    ) {
        let d = self.cfg.d;
        let kind = if depth >= max_depth { NodeKind::Leaf } else { choose(&self.apply_mlp(&self.cls, code)) };
        match kind {
            NodeKind::Leaf => nodes.push(SymhNode::Leaf(Obb::from_code(&self.apply_mlp(&self.obb, code)))),
            NodeKind::Adjacency => {
                nodes.push(SymhNode::Adjacency);
                let split = self.apply_mlp(&self.adj, code);
                self.decode_node(&split[..d], depth + 1, max_depth, choose, nodes);
                self.decode_node(&split[d..], depth + 1, max_depth, choose, nodes);
            }
            NodeKind::Symmetry => {
                let o = self.apply_mlp(&self.sym, code);
                nodes.push(SymhNode::Symmetry(SymmetryParam::from_code(&o[d..])));
                self.decode_node(&o[..d], depth + 1, max_depth, choose, nodes);
            }
        }
    }

    /// Encodes a graph and decodes a tree from it.
    pub fn infer(&self, graph: &MultiGraph) -> Result<SymhTree> {
        Ok(self.decode_free(&self.encode_one(graph)?))
    }
}
