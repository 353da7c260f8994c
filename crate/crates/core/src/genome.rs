//! Heritable network description: node genes, a lower-triangular
//! adjacency matrix, and optimizer genes, plus validation and the JSON
//! schema used for fixtures and checkpoints.

use crate::tensor::optim::OptKind;
use crate::tensor::tape::{ActivationKind, ConnectiveKind, ResizeTarget};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GENOME_SCHEMA_VERSION: u32 = 1;

pub const LR_MIN: f64 = 1e-5;
pub const LR_MAX: f64 = 1e-1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelRule {
    Same,
    Double,
    Half,
    Quadruple,
    Quarter,
    Three,
    ThirtyTwo,
}

pub const ALL_CHANNEL_RULES: [ChannelRule; 7] = [
    ChannelRule::Same,
    ChannelRule::Double,
    ChannelRule::Half,
    ChannelRule::Quadruple,
    ChannelRule::Quarter,
    ChannelRule::Three,
    ChannelRule::ThirtyTwo,
];

impl ChannelRule {
    /// Output channels given the predecessor's channel count. Divisions
    /// round up with a floor of 1.
    pub fn resolve(&self, in_channels: usize) -> usize {
        match self {
            ChannelRule::Same => in_channels,
            ChannelRule::Double => in_channels * 2,
            ChannelRule::Half => in_channels.div_ceil(2).max(1),
            ChannelRule::Quadruple => in_channels * 4,
            ChannelRule::Quarter => in_channels.div_ceil(4).max(1),
            ChannelRule::Three => 3,
            ChannelRule::ThirtyTwo => 32,
        }
    }
}

/// Normalisation slot of a conv block. Softmax2d is admitted here in
/// addition to the three norm layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    None,
    BatchNorm,
    InstanceNorm,
    Lrn,
    SoftmaxChannels,
}

pub const ALL_NORM_KINDS: [NormKind; 5] = [
    NormKind::None,
    NormKind::BatchNorm,
    NormKind::InstanceNorm,
    NormKind::Lrn,
    NormKind::SoftmaxChannels,
];

pub const ALL_ACTIVATION_KINDS: [ActivationKind; 8] = [
    ActivationKind::None,
    ActivationKind::Relu,
    ActivationKind::PRelu,
    ActivationKind::Elu,
    ActivationKind::Selu,
    ActivationKind::Tanh,
    ActivationKind::Sigmoid,
    ActivationKind::SoftmaxChannels,
];

/// Conv block gene: everything except the absolute channel counts, which
/// are resolved topologically at compile time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvGene {
    pub kernel: u8,
    pub stride: u8,
    pub transposed: bool,
    pub separable: bool,
    pub weight_norm: bool,
    pub bias: bool,
    pub channel_rule: ChannelRule,
    pub activation: ActivationKind,
    pub norm: NormKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NodeGene {
    Input,
    ConvBlock { conv: ConvGene },
    MaxPool2x2,
    UpsampleNn2x,
    Connective {
        connective: ConnectiveKind,
        resize_target: ResizeTarget,
    },
}

impl NodeGene {
    pub fn arity(&self) -> usize {
        match self {
            NodeGene::Input => 0,
            NodeGene::Connective { .. } => 2,
            _ => 1,
        }
    }

    pub fn is_connective(&self) -> bool {
        matches!(self, NodeGene::Connective { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerGenes {
    pub kind: OptKind,
    pub lr0: f64,
    pub decay: f64,
}

/// Full heritable description of one candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Genome {
    pub nodes: Vec<NodeGene>,
    /// adjacency[i][j] == true means node j feeds node i; legal only for j < i.
    pub adjacency: Vec<Vec<bool>>,
    pub optimizer: OptimizerGenes,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum Violation {
    #[error("genome has no nodes")]
    Empty,
    #[error("adjacency matrix is not {0}x{0}")]
    MatrixShape(usize),
    #[error("node 0 must be the input node")]
    InputNotFirst,
    #[error("input node reappears at index {0}")]
    InputReappears(usize),
    #[error("acyclicity: adjacency[{i}][{j}] set on or above the diagonal")]
    Acyclicity { i: usize, j: usize },
    #[error("arity: node {node} has {got} predecessors, expected {expected}")]
    Arity {
        node: usize,
        expected: usize,
        got: usize,
    },
    #[error("conv kernel {0} not in {{1,3,5}}")]
    Kernel(u8),
    #[error("conv stride {0} not in {{1,2}}")]
    Stride(u8),
    #[error("learning rate {0} outside [1e-5, 1e-1]")]
    LearningRate(f64),
    #[error("decay {0} outside [0, 1]")]
    Decay(f64),
}

impl Genome {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Output node: the highest-indexed node.
    pub fn output(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn predecessors(&self, i: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&j| self.adjacency[i][j])
            .collect()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.nodes.len();
        if n == 0 {
            out.push(Violation::Empty);
            return out;
        }
        if self.adjacency.len() != n || self.adjacency.iter().any(|row| row.len() != n) {
            out.push(Violation::MatrixShape(n));
            return out;
        }
        if self.nodes[0] != NodeGene::Input {
            out.push(Violation::InputNotFirst);
        }
        for (i, node) in self.nodes.iter().enumerate().skip(1) {
            if *node == NodeGene::Input {
                out.push(Violation::InputReappears(i));
            }
        }
        for i in 0..n {
            for j in i..n {
                if self.adjacency[i][j] {
                    out.push(Violation::Acyclicity { i, j });
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let got = self.adjacency[i].iter().filter(|&&b| b).count();
            let expected = node.arity();
            if got != expected {
                out.push(Violation::Arity {
                    node: i,
                    expected,
                    got,
                });
            }
            if let NodeGene::ConvBlock { conv } = node {
                if !matches!(conv.kernel, 1 | 3 | 5) {
                    out.push(Violation::Kernel(conv.kernel));
                }
                if !matches!(conv.stride, 1 | 2) {
                    out.push(Violation::Stride(conv.stride));
                }
            }
        }
        if !(LR_MIN..=LR_MAX).contains(&self.optimizer.lr0) {
            out.push(Violation::LearningRate(self.optimizer.lr0));
        }
        if !(0.0..=1.0).contains(&self.optimizer.decay) {
            out.push(Violation::Decay(self.optimizer.decay));
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

// --- random initialisation ---

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InitConfig {
    pub min_nodes: usize,
    pub max_nodes: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            min_nodes: 3,
            max_nodes: 12,
        }
    }
}

pub fn random_conv_gene<R: Rng>(rng: &mut R) -> ConvGene {
    ConvGene {
        kernel: *[1u8, 3, 5].iter().nth(rng.gen_range(0..3)).unwrap(),
        stride: if rng.gen_bool(0.5) { 1 } else { 2 },
        transposed: rng.gen_bool(0.5),
        separable: rng.gen_bool(0.5),
        weight_norm: rng.gen_bool(0.5),
        bias: rng.gen_bool(0.5),
        channel_rule: ALL_CHANNEL_RULES[rng.gen_range(0..ALL_CHANNEL_RULES.len())],
        activation: ALL_ACTIVATION_KINDS[rng.gen_range(0..ALL_ACTIVATION_KINDS.len())],
        norm: ALL_NORM_KINDS[rng.gen_range(0..ALL_NORM_KINDS.len())],
    }
}

/// Random node gene for position `index` (connectives need two distinct
/// predecessors, so they cannot sit at index 1).
pub fn random_node_gene<R: Rng>(index: usize, rng: &mut R) -> NodeGene {
    let n_kinds = if index >= 2 { 6 } else { 4 };
    match rng.gen_range(0..n_kinds) {
        0 => NodeGene::ConvBlock {
            conv: random_conv_gene(rng),
        },
        1 => NodeGene::MaxPool2x2,
        2 => NodeGene::UpsampleNn2x,
        // Extra weight on conv blocks among the single-input kinds.
        3 => NodeGene::ConvBlock {
            conv: random_conv_gene(rng),
        },
        k => NodeGene::Connective {
            connective: match k {
                4 => ConnectiveKind::Concat,
                _ => {
                    if rng.gen_bool(0.5) {
                        ConnectiveKind::Add
                    } else {
                        ConnectiveKind::Mul
                    }
                }
            },
            resize_target: if rng.gen_bool(0.5) {
                ResizeTarget::First
            } else {
                ResizeTarget::Second
            },
        },
    }
}

pub fn random_optimizer_genes<R: Rng>(rng: &mut R) -> OptimizerGenes {
    let kind = match rng.gen_range(0..3) {
        0 => OptKind::Adam,
        1 => OptKind::RmsProp,
        _ => OptKind::SgdMomentum,
    };
    // lr0 log-uniform over four decades.
    let lr0 = 10f64.powf(rng.gen_range(LR_MIN.log10()..=LR_MAX.log10()));
    OptimizerGenes {
        kind,
        lr0: lr0.clamp(LR_MIN, LR_MAX),
        decay: rng.gen_range(0.0..=1.0),
    }
}

pub fn random_genome<R: Rng>(config: &InitConfig, rng: &mut R) -> Genome {
    let n = rng.gen_range(config.min_nodes..=config.max_nodes);
    let mut nodes = vec![NodeGene::Input];
    for i in 1..n {
        nodes.push(random_node_gene(i, rng));
    }
    let mut adjacency = vec![vec![false; n]; n];
    for i in 1..n {
        match nodes[i].arity() {
            1 => {
                let j = rng.gen_range(0..i);
                adjacency[i][j] = true;
            }
            2 => {
                let j1 = rng.gen_range(0..i);
                let mut j2 = rng.gen_range(0..i - 1);
                if j2 >= j1 {
                    j2 += 1;
                }
                adjacency[i][j1] = true;
                adjacency[i][j2] = true;
            }
            _ => unreachable!(),
        }
    }
    Genome {
        nodes,
        adjacency,
        optimizer: random_optimizer_genes(rng),
    }
}

// --- serialization ---

#[derive(Serialize, Deserialize)]
struct GenomeDoc {
    schema_version: u32,
    nodes: Vec<NodeGene>,
    /// Edge list [src, dst]; equivalent to adjacency[dst][src].
    edges: Vec<[usize; 2]>,
    optimizer: OptimizerGenes,
}

#[derive(Debug, Error)]
pub enum GenomeError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("edge [{0}, {1}] references a node out of range")]
    EdgeOutOfRange(usize, usize),
    #[error("invalid genome: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

impl Genome {
    /// Canonical JSON: equal genomes serialize to identical text.
    pub fn to_json(&self) -> String {
        let n = self.nodes.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.adjacency[i][j] {
                    edges.push([j, i]);
                }
            }
        }
        edges.sort_unstable();
        let doc = GenomeDoc {
            schema_version: GENOME_SCHEMA_VERSION,
            nodes: self.nodes.clone(),
            edges,
            optimizer: self.optimizer,
        };
        serde_json::to_string_pretty(&doc).expect("genome serialization cannot fail")
    }

    /// Parses and validates; documents violating any genome invariant are
    /// rejected.
    pub fn from_json(text: &str) -> Result<Genome, GenomeError> {
        let doc: GenomeDoc = serde_json::from_str(text)?;
        if doc.schema_version != GENOME_SCHEMA_VERSION {
            return Err(GenomeError::Schema(doc.schema_version));
        }
        let n = doc.nodes.len();
        let mut adjacency = vec![vec![false; n]; n];
        for [src, dst] in &doc.edges {
            if *src >= n || *dst >= n {
                return Err(GenomeError::EdgeOutOfRange(*src, *dst));
            }
            adjacency[*dst][*src] = true;
        }
        let genome = Genome {
            nodes: doc.nodes,
            adjacency,
            optimizer: doc.optimizer,
        };
        let violations = genome.validate();
        if !violations.is_empty() {
            return Err(GenomeError::Invalid(violations));
        }
        Ok(genome)
    }
}

/// Builds a genome from (node, predecessor list) pairs. Panics on
/// out-of-range predecessors; intended for fixtures and tests.
pub fn genome_from_parts(
    entries: Vec<(NodeGene, Vec<usize>)>,
    optimizer: OptimizerGenes,
) -> Genome {
    let n = entries.len();
    let mut nodes = Vec::with_capacity(n);
    let mut adjacency = vec![vec![false; n]; n];
    for (i, (node, preds)) in entries.into_iter().enumerate() {
        nodes.push(node);
        for p in preds {
            assert!(p < n, "predecessor out of range");
            adjacency[i][p] = true;
        }
    }
    Genome {
        nodes,
        adjacency,
        optimizer,
    }
}

/// Small fixed encoder-decoder comparator network (3 levels, skip
/// concatenations, PReLU + batch norm) used for side-by-side reports.
pub fn comparator_genome() -> Genome {
    let conv = |rule: ChannelRule, stride: u8, transposed: bool, act, norm| NodeGene::ConvBlock {
        conv: ConvGene {
            kernel: 3,
            stride,
            transposed,
            separable: false,
            weight_norm: false,
            bias: true,
            channel_rule: rule,
            activation: act,
            norm,
        },
    };
    let prelu_bn = |rule, stride, transposed| {
        conv(
            rule,
            stride,
            transposed,
            ActivationKind::PRelu,
            NormKind::BatchNorm,
        )
    };
    let concat = NodeGene::Connective {
        connective: ConnectiveKind::Concat,
        resize_target: ResizeTarget::First,
    };
    genome_from_parts(
        vec![
            (NodeGene::Input, vec![]),                            // 0
            (prelu_bn(ChannelRule::ThirtyTwo, 1, false), vec![0]), // 1: stem
            (prelu_bn(ChannelRule::Same, 2, false), vec![1]),      // 2: down 1
            (prelu_bn(ChannelRule::Same, 2, false), vec![2]),      // 3: down 2
            (prelu_bn(ChannelRule::Same, 2, false), vec![3]),      // 4: bottleneck
            (prelu_bn(ChannelRule::Same, 2, true), vec![4]),       // 5: up 1
            (concat, vec![5, 3]),                                  // 6: skip
            (prelu_bn(ChannelRule::Half, 1, false), vec![6]),      // 7
            (prelu_bn(ChannelRule::Same, 2, true), vec![7]),       // 8: up 2
            (concat, vec![8, 2]),                                  // 9: skip
            (prelu_bn(ChannelRule::Half, 1, false), vec![9]),      // 10
            (prelu_bn(ChannelRule::Same, 2, true), vec![10]),      // 11: up 3
            (concat, vec![11, 1]),                                 // 12: skip
            (
                conv(
                    ChannelRule::Three,
                    1,
                    false,
                    ActivationKind::None,
                    NormKind::None,
                ),
                vec![12],
            ), // 13: head
        ],
        OptimizerGenes {
            kind: OptKind::Adam,
            lr0: 0.01,
            decay: 0.5,
        },
    )
}
