//! Parameter storage and the tying layout.
//!
//! A [`Layout`] maps every role a matrix plays in the forward pass (input
//! embedding of hop k, answer matrix, ...) onto a distinct stored tensor.
//! Tied roles resolve to the same tensor index, so sharing is aliasing and
//! gradients of a shared tensor accumulate into one buffer.

use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Tying};
use crate::tensor::{gaussian_init_with, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    /// d x V; the null column is pinned to zero.
    Embedding,
    /// V x d; the null row is pinned to zero.
    Answer,
    /// capacity x d
    Temporal,
    /// d x d
    StateMap,
}

/// A role in the forward pass. Hop indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Input(usize),
    Output(usize),
    Query,
    Answer,
    StateMap(usize),
    TemporalInput(usize),
    TemporalOutput(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binding {
    pub role: Role,
    pub tensor: usize,
    /// The role sees the stored tensor transposed (answer matrix tied to `C^K`).
    pub transposed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub kind: TensorKind,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
    bindings: Vec<Binding>,
    input: Vec<usize>,
    output: Vec<usize>,
    query: Option<usize>,
    answer: (usize, bool),
    state_map: Vec<usize>,
    temporal_input: Vec<usize>,
    temporal_output: Vec<usize>,
}

struct LayoutBuilder {
    dim: usize,
    vocab: usize,
    capacity: usize,
    tensors: Vec<TensorSpec>,
    bindings: Vec<Binding>,
}

impl LayoutBuilder {
    fn tensor(&mut self, name: String, kind: TensorKind) -> usize {
        let (rows, cols) = match kind {
            TensorKind::Embedding => (self.dim, self.vocab),
            TensorKind::Answer => (self.vocab, self.dim),
            TensorKind::Temporal => (self.capacity, self.dim),
            TensorKind::StateMap => (self.dim, self.dim),
        };
        self.tensors.push(TensorSpec { name, kind, rows, cols });
        self.tensors.len() - 1
    }

    fn bind(&mut self, role: Role, tensor: usize, transposed: bool) -> usize {
        self.bindings.push(Binding {
            role,
            tensor,
            transposed,
        });
        tensor
    }
}

impl Layout {
    /// Layout with the sharing prescribed by `config.tying`.
    pub fn tied(config: &ModelConfig, vocab_size: usize) -> Self {
        let k = config.hops;
        let mut b = LayoutBuilder {
            dim: config.dim,
            vocab: vocab_size,
            capacity: config.capacity,
            tensors: Vec::new(),
            bindings: Vec::new(),
        };
        let mut layout = match config.tying {
            Tying::Adjacent => {
                // embedding.j serves as C^j and A^{j+1}; embedding.0 is A^1 = B.
                let emb: Vec<usize> = (0..=k)
                    .map(|j| b.tensor(format!("embedding.{j}"), TensorKind::Embedding))
                    .collect();
                let tmp: Vec<usize> = if config.temporal {
                    (0..=k)
                        .map(|j| b.tensor(format!("temporal.{j}"), TensorKind::Temporal))
                        .collect()
                } else {
                    Vec::new()
                };
                let input = (0..k).map(|h| b.bind(Role::Input(h), emb[h], false)).collect();
                let output = (0..k).map(|h| b.bind(Role::Output(h), emb[h + 1], false)).collect();
                let query = (!config.lm_mode).then(|| b.bind(Role::Query, emb[0], false));
                b.bind(Role::Answer, emb[k], true);
                let (temporal_input, temporal_output) = if config.temporal {
                    (
                        (0..k).map(|h| b.bind(Role::TemporalInput(h), tmp[h], false)).collect(),
                        (0..k)
                            .map(|h| b.bind(Role::TemporalOutput(h), tmp[h + 1], false))
                            .collect(),
                    )
                } else {
                    (Vec::new(), Vec::new())
                };
                Layout {
                    tensors: Vec::new(),
                    bindings: Vec::new(),
                    input,
                    output,
                    query,
                    answer: (emb[k], true),
                    state_map: Vec::new(),
                    temporal_input,
                    temporal_output,
                }
            }
            Tying::LayerWise => {
                let a = b.tensor("input_embedding".into(), TensorKind::Embedding);
                let c = b.tensor("output_embedding".into(), TensorKind::Embedding);
                let q = (!config.lm_mode).then(|| b.tensor("query_embedding".into(), TensorKind::Embedding));
                let w = b.tensor("answer".into(), TensorKind::Answer);
                let h = b.tensor("state_map".into(), TensorKind::StateMap);
                let temporal = config.temporal.then(|| {
                    (
                        b.tensor("temporal_input".into(), TensorKind::Temporal),
                        b.tensor("temporal_output".into(), TensorKind::Temporal),
                    )
                });
                let input = (0..k).map(|hop| b.bind(Role::Input(hop), a, false)).collect();
                let output = (0..k).map(|hop| b.bind(Role::Output(hop), c, false)).collect();
                let query = q.map(|q| b.bind(Role::Query, q, false));
                b.bind(Role::Answer, w, false);
                let state_map = (0..k).map(|hop| b.bind(Role::StateMap(hop), h, false)).collect();
                let (temporal_input, temporal_output) = match temporal {
                    Some((ta, tc)) => (
                        (0..k).map(|hop| b.bind(Role::TemporalInput(hop), ta, false)).collect(),
                        (0..k).map(|hop| b.bind(Role::TemporalOutput(hop), tc, false)).collect(),
                    ),
                    None => (Vec::new(), Vec::new()),
                };
                Layout {
                    tensors: Vec::new(),
                    bindings: Vec::new(),
                    input,
                    output,
                    query,
                    answer: (w, false),
                    state_map,
                    temporal_input,
                    temporal_output,
                }
            }
        };
        layout.tensors = b.tensors;
        layout.bindings = b.bindings;
        layout
    }

    /// Same roles as [`Layout::tied`], but every role owns its tensor.
    /// Used as the reference for checking that tying is pure aliasing.
    pub fn untied(config: &ModelConfig, vocab_size: usize) -> Self {
        let tied = Layout::tied(config, vocab_size);
        let mut b = LayoutBuilder {
            dim: config.dim,
            vocab: vocab_size,
            capacity: config.capacity,
            tensors: Vec::new(),
            bindings: Vec::new(),
        };
        let mut layout = Layout {
            tensors: Vec::new(),
            bindings: Vec::new(),
            input: Vec::new(),
            output: Vec::new(),
            query: None,
            answer: (0, false),
            state_map: Vec::new(),
            temporal_input: Vec::new(),
            temporal_output: Vec::new(),
        };
        for binding in &tied.bindings {
            let (name, kind) = match binding.role {
                Role::Input(h) => (format!("A.{h}"), TensorKind::Embedding),
                Role::Output(h) => (format!("C.{h}"), TensorKind::Embedding),
                Role::Query => ("B".into(), TensorKind::Embedding),
                Role::Answer => ("W".into(), TensorKind::Answer),
                Role::StateMap(h) => (format!("H.{h}"), TensorKind::StateMap),
                Role::TemporalInput(h) => (format!("T_A.{h}"), TensorKind::Temporal),
                Role::TemporalOutput(h) => (format!("T_C.{h}"), TensorKind::Temporal),
            };
            let t = b.tensor(name, kind);
            b.bind(binding.role, t, false);
            match binding.role {
                Role::Input(_) => layout.input.push(t),
                Role::Output(_) => layout.output.push(t),
                Role::Query => layout.query = Some(t),
                Role::Answer => layout.answer = (t, false),
                Role::StateMap(_) => layout.state_map.push(t),
                Role::TemporalInput(_) => layout.temporal_input.push(t),
                Role::TemporalOutput(_) => layout.temporal_output.push(t),
            }
        }
        layout.tensors = b.tensors;
        layout.bindings = b.bindings;
        layout
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn bindings(&self) -> &[Binding] {
        &self.bindings
    }

    pub fn input(&self, hop: usize) -> usize {
        self.input[hop]
    }

    pub fn output(&self, hop: usize) -> usize {
        self.output[hop]
    }

    pub fn query(&self) -> Option<usize> {
        self.query
    }

    /// Answer tensor index, and whether it is stored as `d x V` (transposed).
    pub fn answer(&self) -> (usize, bool) {
        self.answer
    }

    pub fn state_map(&self, hop: usize) -> Option<usize> {
        self.state_map.get(hop).copied()
    }

    pub fn temporal_input(&self, hop: usize) -> Option<usize> {
        self.temporal_input.get(hop).copied()
    }

    pub fn temporal_output(&self, hop: usize) -> Option<usize> {
        self.temporal_output.get(hop).copied()
    }
}

/// Distinct parameter tensors under a [`Layout`]. Also used for gradients,
/// which share the exact same shape and aliasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layout: Layout,
    tensors: Vec<Mat>,
    null: usize,
}

pub type ModelParams = ParamSet;
pub type Gradients = ParamSet;

impl ParamSet {
    pub fn zeros(layout: Layout, null: usize) -> Self {
        let tensors = layout.tensors.iter().map(|s| Mat::zeros(s.rows, s.cols)).collect();
        Self { layout, tensors, null }
    }

    /// Tied parameters drawn from `N(0, sigma^2)`, null symbol zeroed.
    pub fn gaussian(config: &ModelConfig, vocab_size: usize, null: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Self {
        let layout = Layout::tied(config, vocab_size);
        let tensors = layout
            .tensors
            .iter()
            .map(|s| gaussian_init_with(s.rows, s.cols, sigma, rng))
            .collect();
        let mut p = Self { layout, tensors, null };
        p.zero_null();
        p
    }

    /// Rebuilds from stored tensors; shapes must match the layout.
    pub fn from_tensors(layout: Layout, tensors: Vec<Mat>, null: usize) -> Option<Self> {
        if tensors.len() != layout.tensors.len()
            || tensors
                .iter()
                .zip(&layout.tensors)
                .any(|(t, s)| t.shape() != (s.rows, s.cols))
        {
            return None;
        }
        Some(Self { layout, tensors, null })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone(), self.null)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn null(&self) -> usize {
        self.null
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Mat] {
        &mut self.tensors
    }

    pub fn tensor(&self, i: usize) -> &Mat {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Mat {
        &mut self.tensors[i]
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.layout.tensors.iter().map(|s| s.name.as_str()).zip(&self.tensors)
    }

    pub fn input(&self, hop: usize) -> &Mat {
        &self.tensors[self.layout.input(hop)]
    }

    pub fn output(&self, hop: usize) -> &Mat {
        &self.tensors[self.layout.output(hop)]
    }

    pub fn query(&self) -> Option<&Mat> {
        self.layout.query().map(|i| &self.tensors[i])
    }

    pub fn state_map(&self, hop: usize) -> Option<&Mat> {
        self.layout.state_map(hop).map(|i| &self.tensors[i])
    }

    pub fn temporal_input(&self, hop: usize) -> Option<&Mat> {
        self.layout.temporal_input(hop).map(|i| &self.tensors[i])
    }

    pub fn temporal_output(&self, hop: usize) -> Option<&Mat> {
        self.layout.temporal_output(hop).map(|i| &self.tensors[i])
    }

    /// Answer matrix and whether it is stored transposed (`d x V`).
    pub fn answer(&self) -> (&Mat, bool) {
        let (i, t) = self.layout.answer();
        (&self.tensors[i], t)
    }

    pub fn vocab_size(&self) -> usize {
        let (w, transposed) = self.answer();
        if transposed {
            w.cols()
        } else {
            w.rows()
        }
    }

    pub fn dim(&self) -> usize {
        self.input(0).rows()
    }

    /// Pins the null-symbol column (row, for an untied answer matrix) to zero.
    pub fn zero_null(&mut self) {
        let null = self.null;
        for (spec, t) in self.layout.tensors.iter().zip(self.tensors.iter_mut()) {
            match spec.kind {
                TensorKind::Embedding => t.set_column(null, 0.0),
                TensorKind::Answer => t.row_mut(null).fill(0.0),
                TensorKind::Temporal | TensorKind::StateMap => {}
            }
        }
    }

    /// Whether flat coordinate `index` of tensor `t` is pinned by the null constraint.
    pub fn is_constrained(&self, t: usize, index: usize) -> bool {
        let spec = &self.layout.tensors[t];
        match spec.kind {
            TensorKind::Embedding => index % spec.cols == self.null,
            TensorKind::Answer => index / spec.cols == self.null,
            TensorKind::Temporal | TensorKind::StateMap => false,
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| crate::tensor::sum_sq(t.as_slice()))
            .sum::<f64>()
            .sqrt()
    }

    pub fn add_scaled(&mut self, other: &ParamSet, alpha: f64) {
        assert_eq!(self.layout, other.layout, "parameter layouts differ");
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_scaled(b, alpha);
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.tensors.iter_mut().for_each(|t| t.fill(value));
    }

    /// Expands into the untied layout, copying each tied tensor into every
    /// role it plays.
    pub fn untie(&self, config: &ModelConfig) -> ParamSet {
        let untied = Layout::untied(config, self.vocab_size());
        let mut out = ParamSet::zeros(untied, self.null);
        for (tb, ub) in self.layout.bindings.iter().zip(out.layout.bindings.clone()) {
            debug_assert_eq!(tb.role, ub.role);
            let src = &self.tensors[tb.tensor];
            out.tensors[ub.tensor] = if tb.transposed { src.transpose() } else { src.clone() };
        }
        out
    }

    /// Sums role-wise tensors of an untied set (typically gradients) back
    /// into this set's tied tensors.
    pub fn accumulate_untied(&mut self, untied: &ParamSet) {
        for (tb, ub) in self.layout.bindings.clone().iter().zip(&untied.layout.bindings) {
            assert_eq!(tb.role, ub.role, "layouts describe different models");
            let src = &untied.tensors[ub.tensor];
            if tb.transposed {
                self.tensors[tb.tensor].add_scaled(&src.transpose(), 1.0);
            } else {
                self.tensors[tb.tensor].add_scaled(src, 1.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::seeded_rng;

    #[test]
    fn adjacent_aliases() {
        let cfg = ModelConfig {
            hops: 3,
            ..ModelConfig::qa()
        };
        let l = Layout::tied(&cfg, 10);
        assert_eq!(l.tensors().len(), 8); // 4 embeddings + 4 temporal tables
        for h in 0..2 {
            assert_eq!(l.input(h + 1), l.output(h));
            assert_eq!(l.temporal_input(h + 1), l.temporal_output(h));
        }
        assert_eq!(l.query(), Some(l.input(0)));
        assert_eq!(l.answer(), (l.output(2), true));
        assert_eq!(l.state_map(0), None);
    }

    #[test]
    fn layerwise_aliases() {
        let mut cfg = ModelConfig::qa();
        cfg.tying = Tying::LayerWise;
        cfg.temporal = false;
        let l = Layout::tied(&cfg, 10);
        assert_eq!(l.tensors().len(), 5);
        assert!((1..3).all(|h| l.input(h) == l.input(0) && l.output(h) == l.output(0)));
        assert!((1..3).all(|h| l.state_map(h) == l.state_map(0)));
        assert_eq!(l.answer().1, false);
    }

    #[test]
    fn untie_then_fold_doubles_shared_roles() {
        let cfg = ModelConfig {
            dim: 3,
            hops: 2,
            capacity: 4,
            ..ModelConfig::qa()
        };
        let p = ParamSet::gaussian(&cfg, 6, 5, 0.1, &mut seeded_rng(1, 0));
        let u = p.untie(&cfg);
        let mut folded = p.zeros_like();
        folded.accumulate_untied(&u);
        // embedding.0 plays Input(0) and Query; embedding.1 Output(0) and Input(1);
        // embedding.2 Output(1) and Answer.
        for i in 0..3 {
            let mut twice = p.tensor(i).clone();
            twice.scale(2.0);
            assert_eq!(folded.tensor(i), &twice);
        }
    }

    #[test]
    fn gaussian_zeroes_null() {
        let mut cfg = ModelConfig::qa();
        cfg.tying = Tying::LayerWise;
        let p = ParamSet::gaussian(&cfg, 7, 4, 0.1, &mut seeded_rng(3, 0));
        let (w, _) = p.answer();
        assert!(w.row(4).iter().all(|&x| x == 0.0));
        assert!(p.input(0).column(4).iter().all(|&x| x == 0.0));
        assert!(p.query().unwrap().column(4).iter().all(|&x| x == 0.0));
    }
}
