//! Genetic operators over genomes. Every operator is closed over valid
//! genomes: anything it produces passes `Genome::validate`.

use crate::genome::{
    random_conv_gene, random_node_gene, random_optimizer_genes, Genome, NodeGene, ALL_ACTIVATION_KINDS,
    ALL_CHANNEL_RULES, ALL_NORM_KINDS,
};
use crate::tensor::tape::{ConnectiveKind, ResizeTarget};
use rand::Rng;

/// What a single `mutate` call actually did, for calibration tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MutationReport {
    pub flipped_edge: bool,
    pub added_node: bool,
    pub deleted_node: bool,
    pub reinit_node: bool,
    pub optimizer_mutated: bool,
}

fn pred_lists(g: &Genome) -> Vec<(NodeGene, Vec<usize>)> {
    g.nodes
        .iter()
        .enumerate()
        .map(|(i, node)| (*node, g.predecessors(i)))
        .collect()
}

fn from_pred_lists(entries: Vec<(NodeGene, Vec<usize>)>, g: &Genome) -> Genome {
    let n = entries.len();
    let mut nodes = Vec::with_capacity(n);
    let mut adjacency = vec![vec![false; n]; n];
    for (i, (node, preds)) in entries.into_iter().enumerate() {
        nodes.push(node);
        for p in preds {
            if p < i {
                adjacency[i][p] = true;
            }
        }
    }
    Genome {
        nodes,
        adjacency,
        optimizer: g.optimizer,
    }
}

/// Fixes arity violations: orphans are connected to the nearest preceding
/// node, over-connected nodes keep their highest-indexed predecessors,
/// under-connected connectives gain the nearest unconnected predecessor.
/// Connectives that cannot reach two distinct predecessors (index 1) are
/// dropped.
pub fn repair(g: &Genome) -> Genome {
    let mut entries = pred_lists(g);

    // A connective at index 1 has only node 0 available; remove it.
    loop {
        if entries.len() >= 2 && entries[1].0.is_connective() {
            remove_node(&mut entries, 1);
        } else {
            break;
        }
    }

    for i in 1..entries.len() {
        let arity = entries[i].0.arity();
        let preds = &mut entries[i].1;
        preds.retain(|&p| p < i);
        preds.sort_unstable();
        preds.dedup();
        while preds.len() > arity {
            preds.remove(0); // keep the highest-indexed
        }
        while preds.len() < arity {
            // nearest preceding node not already connected
            let next = (0..i).rev().find(|j| !preds.contains(j));
            match next {
                Some(j) => {
                    preds.push(j);
                    preds.sort_unstable();
                }
                None => break,
            }
        }
    }
    from_pred_lists(entries, g)
}

/// Removes nodes with no directed path to the output (highest-indexed)
/// node. Node 0 is always retained.
pub fn prune(g: &Genome) -> Genome {
    let n = g.nodes.len();
    let output = n - 1;
    let mut keep = vec![false; n];
    let mut stack = vec![output];
    while let Some(i) = stack.pop() {
        if keep[i] {
            continue;
        }
        keep[i] = true;
        for j in g.predecessors(i) {
            if !keep[j] {
                stack.push(j);
            }
        }
    }
    keep[0] = true;
    let remap: Vec<Option<usize>> = {
        let mut next = 0usize;
        (0..n)
            .map(|i| {
                if keep[i] {
                    let idx = next;
                    next += 1;
                    Some(idx)
                } else {
                    None
                }
            })
            .collect()
    };
    let kept = keep.iter().filter(|&&k| k).count();
    let mut nodes = Vec::with_capacity(kept);
    let mut adjacency = vec![vec![false; kept]; kept];
    for i in 0..n {
        let Some(ni) = remap[i] else { continue };
        nodes.push(g.nodes[i]);
        for j in g.predecessors(i) {
            if let Some(nj) = remap[j] {
                adjacency[ni][nj] = true;
            }
        }
    }
    Genome {
        nodes,
        adjacency,
        optimizer: g.optimizer,
    }
}

fn remove_node(entries: &mut Vec<(NodeGene, Vec<usize>)>, idx: usize) {
    entries.remove(idx);
    for (i, (_, preds)) in entries.iter_mut().enumerate() {
        preds.retain(|&p| p != idx);
        for p in preds.iter_mut() {
            if *p > idx {
                *p -= 1;
            }
        }
        preds.retain(|&p| p < i);
    }
}

fn insert_node<R: Rng>(entries: &mut Vec<(NodeGene, Vec<usize>)>, pos: usize, rng: &mut R) {
    let node = random_node_gene(pos, rng);
    for (_, preds) in entries.iter_mut() {
        for p in preds.iter_mut() {
            if *p >= pos {
                *p += 1;
            }
        }
    }
    let preds = match node.arity() {
        1 => vec![rng.gen_range(0..pos)],
        2 => {
            let j1 = rng.gen_range(0..pos);
            let mut j2 = rng.gen_range(0..pos - 1);
            if j2 >= j1 {
                j2 += 1;
            }
            vec![j1, j2]
        }
        _ => vec![],
    };
    entries.insert(pos, (node, preds));
}

fn reinit_node<R: Rng>(node: &mut NodeGene, rate: f64, rng: &mut R) {
    match node {
        NodeGene::ConvBlock { conv } => {
            let fresh = random_conv_gene(rng);
            if rng.gen_bool(rate) {
                conv.kernel = fresh.kernel;
            }
            if rng.gen_bool(rate) {
                conv.stride = fresh.stride;
            }
            if rng.gen_bool(rate) {
                conv.transposed = fresh.transposed;
            }
            if rng.gen_bool(rate) {
                conv.separable = fresh.separable;
            }
            if rng.gen_bool(rate) {
                conv.weight_norm = fresh.weight_norm;
            }
            if rng.gen_bool(rate) {
                conv.bias = fresh.bias;
            }
            if rng.gen_bool(rate) {
                conv.channel_rule = ALL_CHANNEL_RULES[rng.gen_range(0..ALL_CHANNEL_RULES.len())];
            }
            if rng.gen_bool(rate) {
                conv.activation =
                    ALL_ACTIVATION_KINDS[rng.gen_range(0..ALL_ACTIVATION_KINDS.len())];
            }
            if rng.gen_bool(rate) {
                conv.norm = ALL_NORM_KINDS[rng.gen_range(0..ALL_NORM_KINDS.len())];
            }
        }
        NodeGene::Connective {
            connective,
            resize_target,
        } => {
            if rng.gen_bool(rate) {
                *connective = match rng.gen_range(0..3) {
                    0 => ConnectiveKind::Concat,
                    1 => ConnectiveKind::Add,
                    _ => ConnectiveKind::Mul,
                };
            }
            if rng.gen_bool(rate) {
                *resize_target = if rng.gen_bool(0.5) {
                    ResizeTarget::First
                } else {
                    ResizeTarget::Second
                };
            }
        }
        _ => {}
    }
}

/// The three mutation rules, each applied independently with probability
/// `rate`: an adjacency bit flip, one primitive-list edit, and optimizer
/// gene reinitialisation. The result is repaired and pruned.
pub fn mutate_with_report<R: Rng>(g: &Genome, rate: f64, rng: &mut R) -> (Genome, MutationReport) {
    assert!((0.0..=1.0).contains(&rate));
    let mut report = MutationReport::default();
    let mut work = g.clone();
    let mut touched = false;

    // (a) adjacency bit flip strictly below the diagonal
    if rate > 0.0 && rng.gen_bool(rate) && work.len() >= 2 {
        let n = work.len();
        let total = n * (n - 1) / 2;
        let mut pick = rng.gen_range(0..total);
        'outer: for i in 1..n {
            for j in 0..i {
                if pick == 0 {
                    work.adjacency[i][j] = !work.adjacency[i][j];
                    break 'outer;
                }
                pick -= 1;
            }
        }
        report.flipped_edge = true;
        touched = true;
    }

    // (b) one primitive-list mutation
    if rate > 0.0 && rng.gen_bool(rate) {
        let mut entries = pred_lists(&work);
        match rng.gen_range(0..3) {
            0 => {
                let pos = rng.gen_range(1..=entries.len());
                insert_node(&mut entries, pos, rng);
                report.added_node = true;
            }
            1 => {
                if entries.len() >= 2 {
                    let idx = rng.gen_range(1..entries.len());
                    remove_node(&mut entries, idx);
                    report.deleted_node = true;
                }
            }
            _ => {
                if entries.len() >= 2 {
                    let idx = rng.gen_range(1..entries.len());
                    reinit_node(&mut entries[idx].0, rate, rng);
                    report.reinit_node = true;
                }
            }
        }
        work = from_pred_lists(entries, &work);
        touched = true;
    }

    // (c) optimizer genes, per-gene at the same rate
    if rate > 0.0 && rng.gen_bool(rate) {
        let fresh = random_optimizer_genes(rng);
        if rng.gen_bool(rate) {
            work.optimizer.kind = fresh.kind;
        }
        if rng.gen_bool(rate) {
            work.optimizer.lr0 = fresh.lr0;
        }
        if rng.gen_bool(rate) {
            work.optimizer.decay = fresh.decay;
        }
        report.optimizer_mutated = true;
        touched = true;
    }

    if touched {
        work = prune(&repair(&work));
    }
    (work, report)
}

pub fn mutate<R: Rng>(g: &Genome, rate: f64, rng: &mut R) -> Genome {
    mutate_with_report(g, rate, rng).0
}

/// Uniform crossover of optimizer genes, single-point crossover of the
/// primitive list with adjacency rows carried from the matching parent.
pub fn crossover<R: Rng>(a: &Genome, b: &Genome, rng: &mut R) -> Genome {
    let k = rng.gen_range(1..=a.len().min(b.len()));
    let mut entries = Vec::with_capacity(b.len().max(k));
    for i in 0..k {
        entries.push((a.nodes[i], a.predecessors(i)));
    }
    for i in k..b.len() {
        entries.push((b.nodes[i], b.predecessors(i)));
    }
    let mut optimizer = a.optimizer;
    if rng.gen_bool(0.5) {
        optimizer.kind = b.optimizer.kind;
    }
    if rng.gen_bool(0.5) {
        optimizer.lr0 = b.optimizer.lr0;
    }
    if rng.gen_bool(0.5) {
        optimizer.decay = b.optimizer.decay;
    }
    let child = Genome {
        nodes: entries.iter().map(|(n, _)| *n).collect(),
        adjacency: {
            let n = entries.len();
            let mut adj = vec![vec![false; n]; n];
            for (i, (_, preds)) in entries.iter().enumerate() {
                for &p in preds {
                    if p < i {
                        adj[i][p] = true;
                    }
                }
            }
            adj
        },
        optimizer,
    };
    prune(&repair(&child))
}
