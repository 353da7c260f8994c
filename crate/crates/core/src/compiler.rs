//! Compiles a genome into an execution plan with every shape resolved,
//! coercions materialized as explicit steps, memory accounting, and the
//! memory-limit truncation rule; executes plans on a gradient tape.

use crate::genome::{ConvGene, Genome, NodeGene, NormKind};
use crate::scalar::{lit, Scalar};
use crate::tensor::conv::ResolvedConv;
use crate::tensor::norm::RunningStats;
use crate::tensor::tape::{ActivationKind, ConnectiveKind, FilterMap, ResizeTarget, Tape, Var, PRELU_INIT_SLOPE};
use crate::tensor::{Shape, TensorData, TensorError};
use rand::Rng;

/// One convolution stage of a conv block (separable blocks may need two).
#[derive(Clone, Debug)]
pub struct ConvStage {
    pub rc: ResolvedConv,
    pub weight_norm: bool,
    /// Index of the weight (or direction, under weight norm) parameter.
    pub weights_param: usize,
    pub gain_param: Option<usize>,
    pub bias_param: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ConvBlockPlan {
    pub stages: Vec<ConvStage>,
    pub activation: ActivationKind,
    pub slope_param: Option<usize>,
    pub norm: NormKind,
    pub norm_scale_param: Option<usize>,
    pub norm_shift_param: Option<usize>,
    pub running_stats: Option<usize>,
}

#[derive(Clone, Debug)]
pub enum StepOp {
    Input,
    ConvBlock(Box<ConvBlockPlan>),
    MaxPool,
    /// MaxPool on a too-small input degrades to identity.
    PassThrough,
    Upsample,
    Connective {
        kind: ConnectiveKind,
        resize: ResizeTarget,
    },
    /// Inserted adaptive-pool coercion.
    Coerce,
}

#[derive(Clone, Debug)]
pub struct PlanStep {
    /// Genome node this step realizes; None for inserted coercions.
    pub node: Option<usize>,
    pub op: StepOp,
    /// Indices of earlier steps feeding this one.
    pub inputs: Vec<usize>,
    /// Resolved output (c, h, w).
    pub out_shape: (usize, usize, usize),
}

#[derive(Clone, Copy, Debug)]
pub enum ParamInit {
    KaimingConv { fan_in: usize },
    Zeros,
    Ones,
    PReluSlope,
    /// Gain initialised to the per-filter norm of the named weight param.
    WeightNormGain { weights_param: usize },
}

#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub shape: Shape,
    pub init: ParamInit,
}

#[derive(Clone, Debug)]
pub struct ExecutionPlan {
    pub steps: Vec<PlanStep>,
    pub truncated_at: Option<usize>,
    pub memory_elements: usize,
    pub params: Vec<ParamSpec>,
    pub num_running_stats: usize,
    pub input_shape: (usize, usize, usize),
    pub mem_limit_elements: usize,
}

impl ExecutionPlan {
    /// Activation-element memory estimate (per sample) over all retained
    /// steps.
    pub fn estimate_memory(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.out_shape.0 * s.out_shape.1 * s.out_shape.2)
            .sum()
    }

    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(|p| p.shape.len()).sum()
    }

    /// Human-readable plan table: node
    /// index, input nodes, description.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        out.push_str("Step | Node | Inputs | Output (c,h,w) | Description\n");
        for (i, step) in self.steps.iter().enumerate() {
            let node = step
                .node
                .map(|n| n.to_string())
                .unwrap_or_else(|| "-".into());
            let inputs = step
                .inputs
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            let desc = describe_step(&step.op);
            out.push_str(&format!(
                "{} | {} | {} | ({}, {}, {}) | {}{}\n",
                i,
                node,
                inputs,
                step.out_shape.0,
                step.out_shape.1,
                step.out_shape.2,
                desc,
                if self.truncated_at == Some(i) {
                    "  [truncated here]"
                } else {
                    ""
                }
            ));
        }
        out.push_str(&format!(
            "memory elements: {}, parameters: {}\n",
            self.memory_elements,
            self.count_parameters()
        ));
        out
    }
}

fn describe_step(op: &StepOp) -> String {
    match op {
        StepOp::Input => "input".into(),
        StepOp::MaxPool => "maxpool 2x2".into(),
        StepOp::PassThrough => "pass-through (maxpool on <2px input)".into(),
        StepOp::Upsample => "upsample nn 2x".into(),
        StepOp::Coerce => "adaptive avg pool coercion".into(),
        StepOp::Connective { kind, resize } => format!(
            "{} - resize to {}",
            match kind {
                ConnectiveKind::Concat => "concat",
                ConnectiveKind::Add => "add",
                ConnectiveKind::Mul => "mul",
            },
            match resize {
                ResizeTarget::First => "first",
                ResizeTarget::Second => "second",
            }
        ),
        StepOp::ConvBlock(cb) => {
            let mut parts = Vec::new();
            for st in &cb.stages {
                parts.push(format!(
                    "{}({}, {}, kernel={}, stride={}{}{})",
                    if st.rc.transposed {
                        "ConvTranspose2d"
                    } else {
                        "Conv2d"
                    },
                    st.rc.in_channels,
                    st.rc.out_channels,
                    st.rc.kernel,
                    st.rc.stride,
                    if st.rc.groups > 1 {
                        format!(", groups={}", st.rc.groups)
                    } else {
                        String::new()
                    },
                    if st.weight_norm { ", weight_norm" } else { "" },
                ));
            }
            parts.push(format!("activ={:?}", cb.activation));
            parts.push(format!("norm={:?}", cb.norm));
            parts.join("; ")
        }
    }
}

struct PlanBuilder {
    steps: Vec<PlanStep>,
    params: Vec<ParamSpec>,
    num_running_stats: usize,
    running_sum: usize,
    mem_limit: usize,
    truncated_at: Option<usize>,
}

impl PlanBuilder {
    /// Appends a step and applies the memory rule. Returns the step index,
    /// or None once the budget is exhausted (the exceeding step is kept).
    fn push_step(&mut self, step: PlanStep) -> Option<usize> {
        let elems = step.out_shape.0 * step.out_shape.1 * step.out_shape.2;
        self.steps.push(step);
        let idx = self.steps.len() - 1;
        self.running_sum += elems;
        if self.running_sum > self.mem_limit {
            self.truncated_at = Some(idx);
            None
        } else {
            Some(idx)
        }
    }

    fn add_param(&mut self, shape: Shape, init: ParamInit) -> usize {
        self.params.push(ParamSpec { shape, init });
        self.params.len() - 1
    }
}

fn build_conv_block(
    b: &mut PlanBuilder,
    gene: &ConvGene,
    in_channels: usize,
) -> (ConvBlockPlan, usize) {
    let out_channels = gene.channel_rule.resolve(in_channels);
    let mut stage_specs: Vec<ResolvedConv> = Vec::new();
    if gene.separable {
        if out_channels % in_channels == 0 {
            // depthwise with channel multiplier
            stage_specs.push(ResolvedConv {
                in_channels,
                out_channels,
                kernel: gene.kernel as usize,
                stride: gene.stride as usize,
                transposed: gene.transposed,
                groups: in_channels,
            });
        } else {
            // depthwise followed by a pointwise mix
            stage_specs.push(ResolvedConv {
                in_channels,
                out_channels: in_channels,
                kernel: gene.kernel as usize,
                stride: gene.stride as usize,
                transposed: gene.transposed,
                groups: in_channels,
            });
            stage_specs.push(ResolvedConv {
                in_channels,
                out_channels,
                kernel: 1,
                stride: 1,
                transposed: false,
                groups: 1,
            });
        }
    } else {
        stage_specs.push(ResolvedConv {
            in_channels,
            out_channels,
            kernel: gene.kernel as usize,
            stride: gene.stride as usize,
            transposed: gene.transposed,
            groups: 1,
        });
    }

    let last = stage_specs.len() - 1;
    let mut stages = Vec::new();
    for (si, rc) in stage_specs.iter().enumerate() {
        let ws = rc.weight_shape();
        let fan_in = (rc.in_channels / rc.groups) * rc.kernel * rc.kernel;
        let weights_param = b.add_param(ws, ParamInit::KaimingConv { fan_in });
        let gain_param = gene.weight_norm.then(|| {
            b.add_param(
                Shape::new(1, rc.out_channels, 1, 1),
                ParamInit::WeightNormGain { weights_param },
            )
        });
        let bias_param = (gene.bias && si == last)
            .then(|| b.add_param(Shape::new(1, rc.out_channels, 1, 1), ParamInit::Zeros));
        stages.push(ConvStage {
            rc: *rc,
            weight_norm: gene.weight_norm,
            weights_param,
            gain_param,
            bias_param,
        });
    }

    let slope_param = (gene.activation == ActivationKind::PRelu)
        .then(|| b.add_param(Shape::new(1, 1, 1, 1), ParamInit::PReluSlope));

    let (norm_scale_param, norm_shift_param, running_stats) = if gene.norm == NormKind::BatchNorm {
        let scale = b.add_param(Shape::new(1, out_channels, 1, 1), ParamInit::Ones);
        let shift = b.add_param(Shape::new(1, out_channels, 1, 1), ParamInit::Zeros);
        let rs = b.num_running_stats;
        b.num_running_stats += 1;
        (Some(scale), Some(shift), Some(rs))
    } else {
        (None, None, None)
    };

    (
        ConvBlockPlan {
            stages,
            activation: gene.activation,
            slope_param,
            norm: gene.norm,
            norm_scale_param,
            norm_shift_param,
            running_stats,
        },
        out_channels,
    )
}

/// Resolves every shape, inserts coercions, applies the memory rule.
pub fn compile(
    genome: &Genome,
    input_shape: (usize, usize, usize),
    mem_limit_elements: usize,
) -> ExecutionPlan {
    debug_assert!(genome.is_valid(), "compile requires a valid genome");
    let mut b = PlanBuilder {
        steps: Vec::new(),
        params: Vec::new(),
        num_running_stats: 0,
        running_sum: 0,
        mem_limit: mem_limit_elements,
        truncated_at: None,
    };
    // step index of each genome node
    let mut node_step: Vec<Option<usize>> = vec![None; genome.len()];

    'nodes: for (i, node) in genome.nodes.iter().enumerate() {
        let step_idx = match node {
            NodeGene::Input => b.push_step(PlanStep {
                node: Some(i),
                op: StepOp::Input,
                inputs: vec![],
                out_shape: input_shape,
            }),
            NodeGene::ConvBlock { conv } => {
                let pred = genome.predecessors(i)[0];
                let ps = node_step[pred].expect("predecessor compiled");
                let in_shape = b.steps[ps].out_shape;
                let (cb, out_c) = build_conv_block(&mut b, conv, in_shape.0);
                let mut h = in_shape.1;
                let mut w = in_shape.2;
                for rc in cb.stages.iter().map(|s| s.rc) {
                    let (nh, nw) = rc.out_spatial(h, w);
                    h = nh;
                    w = nw;
                }
                b.push_step(PlanStep {
                    node: Some(i),
                    op: StepOp::ConvBlock(Box::new(cb)),
                    inputs: vec![ps],
                    out_shape: (out_c, h, w),
                })
            }
            NodeGene::MaxPool2x2 => {
                let pred = genome.predecessors(i)[0];
                let ps = node_step[pred].expect("predecessor compiled");
                let (c, h, w) = b.steps[ps].out_shape;
                if h < 2 || w < 2 {
                    b.push_step(PlanStep {
                        node: Some(i),
                        op: StepOp::PassThrough,
                        inputs: vec![ps],
                        out_shape: (c, h, w),
                    })
                } else {
                    b.push_step(PlanStep {
                        node: Some(i),
                        op: StepOp::MaxPool,
                        inputs: vec![ps],
                        out_shape: (c, h / 2, w / 2),
                    })
                }
            }
            NodeGene::UpsampleNn2x => {
                let pred = genome.predecessors(i)[0];
                let ps = node_step[pred].expect("predecessor compiled");
                let (c, h, w) = b.steps[ps].out_shape;
                b.push_step(PlanStep {
                    node: Some(i),
                    op: StepOp::Upsample,
                    inputs: vec![ps],
                    out_shape: (c, h * 2, w * 2),
                })
            }
            NodeGene::Connective {
                connective,
                resize_target,
            } => {
                let preds = genome.predecessors(i);
                let (first, second) = (preds[0], preds[1]);
                let mut fs = node_step[first].expect("predecessor compiled");
                let mut ss = node_step[second].expect("predecessor compiled");
                let (target_shape, moving_is_first) = match resize_target {
                    ResizeTarget::First => (b.steps[fs].out_shape, false),
                    ResizeTarget::Second => (b.steps[ss].out_shape, true),
                };
                let moving = if moving_is_first { fs } else { ss };
                let moving_shape = b.steps[moving].out_shape;
                let goal = match connective {
                    ConnectiveKind::Concat => (moving_shape.0, target_shape.1, target_shape.2),
                    _ => target_shape,
                };
                let coerced = if moving_shape == goal {
                    moving
                } else {
                    match b.push_step(PlanStep {
                        node: None,
                        op: StepOp::Coerce,
                        inputs: vec![moving],
                        out_shape: goal,
                    }) {
                        Some(idx) => idx,
                        None => break 'nodes,
                    }
                };
                if moving_is_first {
                    fs = coerced;
                } else {
                    ss = coerced;
                }
                let out_shape = match connective {
                    ConnectiveKind::Concat => (
                        b.steps[fs].out_shape.0 + b.steps[ss].out_shape.0,
                        target_shape.1,
                        target_shape.2,
                    ),
                    _ => target_shape,
                };
                b.push_step(PlanStep {
                    node: Some(i),
                    op: StepOp::Connective {
                        kind: *connective,
                        resize: *resize_target,
                    },
                    inputs: vec![fs, ss],
                    out_shape,
                })
            }
        };
        match step_idx {
            Some(idx) => node_step[i] = Some(idx),
            None => break 'nodes,
        }
    }

    let memory_elements = b
        .steps
        .iter()
        .map(|s| s.out_shape.0 * s.out_shape.1 * s.out_shape.2)
        .sum();

    // Parameters of dropped steps never run; strip any specs added by a
    // conv block that did not make it into the plan. Params are allocated
    // in step order, so the retained ones form a prefix.
    let mut keep_params = 0usize;
    for s in &b.steps {
        if let StepOp::ConvBlock(cb) = &s.op {
            for st in &cb.stages {
                keep_params = keep_params.max(st.weights_param + 1);
                if let Some(p) = st.gain_param {
                    keep_params = keep_params.max(p + 1);
                }
                if let Some(p) = st.bias_param {
                    keep_params = keep_params.max(p + 1);
                }
            }
            for p in [cb.slope_param, cb.norm_scale_param, cb.norm_shift_param]
                .into_iter()
                .flatten()
            {
                keep_params = keep_params.max(p + 1);
            }
        }
    }
    b.params.truncate(keep_params);

    ExecutionPlan {
        steps: b.steps,
        truncated_at: b.truncated_at,
        memory_elements,
        params: b.params,
        num_running_stats: b.num_running_stats,
        input_shape,
        mem_limit_elements,
    }
}

/// Trainable state attached to one compiled plan.
#[derive(Clone, Debug)]
pub struct ModelState<T> {
    pub params: Vec<TensorData<T>>,
    pub running: Vec<RunningStats<T>>,
}

pub fn init_params<T: Scalar, R: Rng>(plan: &ExecutionPlan, rng: &mut R) -> ModelState<T> {
    let mut params: Vec<TensorData<T>> = Vec::with_capacity(plan.params.len());
    for spec in &plan.params {
        let t = match spec.init {
            ParamInit::KaimingConv { fan_in } => {
                let bound = (6.0 / fan_in as f64).sqrt();
                TensorData::uniform(spec.shape, -bound, bound, rng)
            }
            ParamInit::Zeros => TensorData::zeros(spec.shape),
            ParamInit::Ones => TensorData::filled(spec.shape, T::one()),
            ParamInit::PReluSlope => TensorData::filled(spec.shape, lit(PRELU_INIT_SLOPE)),
            ParamInit::WeightNormGain { weights_param } => {
                let v = &params[weights_param];
                let per_filter = v.data.len() / spec.shape.c;
                let mut g = TensorData::zeros(spec.shape);
                for f in 0..spec.shape.c {
                    let mut sq = T::zero();
                    for i in 0..per_filter {
                        let x = v.data[f * per_filter + i];
                        sq += x * x;
                    }
                    g.data[f] = sq.sqrt();
                }
                g
            }
        };
        params.push(t);
    }
    // Running stats channel counts come from the BN scale params.
    let mut running = Vec::with_capacity(plan.num_running_stats);
    for step in &plan.steps {
        if let StepOp::ConvBlock(cb) = &step.op {
            if let Some(scale) = cb.norm_scale_param {
                running.push(RunningStats::new(plan.params[scale].shape.c));
            }
        }
    }
    ModelState { params, running }
}

pub struct Execution<T: Scalar> {
    pub tape: Tape<T>,
    pub output: Var,
    pub step_vars: Vec<Var>,
    pub param_vars: Vec<Var>,
}

/// Runs the plan; the final (or truncation-point) tensor is coerced to
/// `target_shape`.
pub fn execute<T: Scalar>(
    plan: &ExecutionPlan,
    state: &mut ModelState<T>,
    input: TensorData<T>,
    target_shape: (usize, usize, usize),
    training: bool,
) -> Result<Execution<T>, TensorError> {
    assert_eq!(
        input.shape.chw(),
        plan.input_shape,
        "input does not match the compiled input shape"
    );
    let mut tape = Tape::new();
    let mut param_vars = Vec::with_capacity(state.params.len());
    for p in &state.params {
        param_vars.push(tape.leaf(p.clone()));
    }
    let mut step_vars: Vec<Var> = Vec::with_capacity(plan.steps.len());
    for step in &plan.steps {
        let var = match &step.op {
            StepOp::Input => tape.leaf(input.clone()),
            StepOp::PassThrough => step_vars[step.inputs[0]],
            StepOp::MaxPool => tape.max_pool_2x2(step_vars[step.inputs[0]])?,
            StepOp::Upsample => tape.upsample_nn_2x(step_vars[step.inputs[0]]),
            StepOp::Coerce => tape.adaptive_avg_pool3d(step_vars[step.inputs[0]], step.out_shape),
            StepOp::Connective { kind, resize } => tape.connective(
                *kind,
                step_vars[step.inputs[0]],
                step_vars[step.inputs[1]],
                *resize,
            )?,
            StepOp::ConvBlock(cb) => {
                let mut cur = step_vars[step.inputs[0]];
                for st in &cb.stages {
                    let weights = if st.weight_norm {
                        let g = param_vars[st.gain_param.unwrap()];
                        let v = param_vars[st.weights_param];
                        tape.weight_norm(v, g, FilterMap::for_conv(&st.rc))
                    } else {
                        param_vars[st.weights_param]
                    };
                    let bias = st.bias_param.map(|b| param_vars[b]);
                    cur = tape.conv2d(cur, weights, bias, st.rc)?;
                }
                cur = tape.activation(cur, cb.activation, cb.slope_param.map(|s| param_vars[s]))?;
                cur = match cb.norm {
                    NormKind::None => cur,
                    NormKind::BatchNorm => tape.batch_norm(
                        cur,
                        param_vars[cb.norm_scale_param.unwrap()],
                        param_vars[cb.norm_shift_param.unwrap()],
                        &mut state.running[cb.running_stats.unwrap()],
                        training,
                    )?,
                    NormKind::InstanceNorm => tape.instance_norm(cur),
                    NormKind::Lrn => tape.local_response_norm(cur),
                    NormKind::SoftmaxChannels => tape.softmax_channels(cur),
                };
                cur
            }
        };
        debug_assert_eq!(
            tape.value(var).shape.chw(),
            step.out_shape,
            "compiled shape disagrees with execution"
        );
        step_vars.push(var);
    }
    let last = *step_vars.last().expect("plan has at least the input step");
    let output = if tape.value(last).shape.chw() == target_shape {
        last
    } else {
        tape.adaptive_avg_pool3d(last, target_shape)
    };
    if !tape.value(output).all_finite() {
        return Err(TensorError::NonFinite("network output"));
    }
    Ok(Execution {
        tape,
        output,
        step_vars,
        param_vars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{
        genome_from_parts, random_genome, ChannelRule, ConvGene, InitConfig, OptimizerGenes,
    };
    use crate::tensor::optim::OptKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn opt() -> OptimizerGenes {
        OptimizerGenes {
            kind: OptKind::Adam,
            lr0: 0.01,
            decay: 0.5,
        }
    }

    fn conv_gene(rule: ChannelRule) -> ConvGene {
        ConvGene {
            kernel: 3,
            stride: 1,
            transposed: false,
            separable: false,
            weight_norm: false,
            bias: true,
            channel_rule: rule,
            activation: ActivationKind::PRelu,
            norm: NormKind::BatchNorm,
        }
    }

    fn one_block_genome(gene: ConvGene) -> Genome {
        genome_from_parts(
            vec![
                (NodeGene::Input, vec![]),
                (NodeGene::ConvBlock { conv: gene }, vec![0]),
            ],
            opt(),
        )
    }

    #[test]
    fn single_conv_block_parameter_count() {
        // 3 -> 32, k3, bias, PReLU, batch norm:
        // 32*3*9 + 32 + 1 + 32 + 32 = 961
        let plan = compile(&one_block_genome(conv_gene(ChannelRule::ThirtyTwo)), (3, 8, 8), 1 << 20);
        assert_eq!(plan.count_parameters(), 961);
        assert_eq!(plan.num_running_stats, 1);
        assert!(plan.truncated_at.is_none());
    }

    #[test]
    fn weight_norm_adds_one_gain_per_filter() {
        let mut gene = conv_gene(ChannelRule::ThirtyTwo);
        gene.weight_norm = true;
        let plan = compile(&one_block_genome(gene), (3, 8, 8), 1 << 20);
        assert_eq!(plan.count_parameters(), 961 + 32);
    }

    #[test]
    fn separable_divisible_becomes_one_grouped_stage() {
        let mut gene = conv_gene(ChannelRule::Quadruple);
        gene.separable = true;
        gene.norm = NormKind::None;
        gene.activation = ActivationKind::Relu;
        gene.bias = false;
        // 3 -> 12, groups=3: weights [12, 1, 3, 3] = 108
        let plan = compile(&one_block_genome(gene), (3, 8, 8), 1 << 20);
        let StepOp::ConvBlock(cb) = &plan.steps[1].op else {
            panic!("expected conv block")
        };
        assert_eq!(cb.stages.len(), 1);
        assert_eq!(cb.stages[0].rc.groups, 3);
        assert_eq!(plan.count_parameters(), 108);
    }

    #[test]
    fn separable_indivisible_becomes_depthwise_plus_pointwise() {
        let mut gene = conv_gene(ChannelRule::ThirtyTwo);
        gene.separable = true;
        gene.norm = NormKind::None;
        gene.activation = ActivationKind::Relu;
        // 3 -> 32: depthwise [3,1,3,3]=27, pointwise [32,3,1,1]=96, bias 32
        let plan = compile(&one_block_genome(gene), (3, 8, 8), 1 << 20);
        let StepOp::ConvBlock(cb) = &plan.steps[1].op else {
            panic!("expected conv block")
        };
        assert_eq!(cb.stages.len(), 2);
        assert_eq!(cb.stages[0].rc.groups, 3);
        assert_eq!(cb.stages[1].rc.kernel, 1);
        // bias only on the last stage
        assert!(cb.stages[0].bias_param.is_none());
        assert!(cb.stages[1].bias_param.is_some());
        assert_eq!(plan.count_parameters(), 27 + 96 + 32);
    }

    #[test]
    fn maxpool_on_tiny_input_degrades_to_pass_through() {
        let g = genome_from_parts(
            vec![
                (NodeGene::Input, vec![]),
                (NodeGene::MaxPool2x2, vec![0]),
            ],
            opt(),
        );
        let plan = compile(&g, (3, 1, 1), 1 << 20);
        assert!(matches!(plan.steps[1].op, StepOp::PassThrough));
        assert_eq!(plan.steps[1].out_shape, (3, 1, 1));
    }

    #[test]
    fn coercion_steps_are_materialized_for_mismatched_connectives() {
        // maxpool halves, then add with the input requires a coercion
        let g = genome_from_parts(
            vec![
                (NodeGene::Input, vec![]),
                (NodeGene::MaxPool2x2, vec![0]),
                (
                    NodeGene::Connective {
                        connective: ConnectiveKind::Add,
                        resize_target: ResizeTarget::Second,
                    },
                    vec![0, 1],
                ),
            ],
            opt(),
        );
        let plan = compile(&g, (3, 8, 8), 1 << 20);
        let coerce: Vec<_> = plan
            .steps
            .iter()
            .filter(|s| matches!(s.op, StepOp::Coerce))
            .collect();
        assert_eq!(coerce.len(), 1);
        assert_eq!(coerce[0].out_shape, (3, 4, 4));
        assert_eq!(plan.steps.last().unwrap().out_shape, (3, 4, 4));
        // memory: 3*8*8 + 3*4*4 (pool) + 3*4*4 (coerce) + 3*4*4 (add)
        assert_eq!(plan.memory_elements, 192 + 48 * 3);
    }

    #[test]
    fn memory_rule_keeps_the_exceeding_step_and_strips_later_params() {
        let g = genome_from_parts(
            vec![
                (NodeGene::Input, vec![]),
                (NodeGene::ConvBlock { conv: conv_gene(ChannelRule::Same) }, vec![0]),
                (NodeGene::ConvBlock { conv: conv_gene(ChannelRule::Same) }, vec![1]),
            ],
            opt(),
        );
        // input 3*4*4 = 48; limit 60 -> step 1 (48 more) exceeds
        let plan = compile(&g, (3, 4, 4), 60);
        assert_eq!(plan.truncated_at, Some(1));
        assert_eq!(plan.steps.len(), 2);
        // only the first block's params remain: 3*3*9 + 3 + 1 + 3 + 3 = 91
        assert_eq!(plan.count_parameters(), 91);
        // memory counts the kept steps including the exceeding one
        assert_eq!(plan.memory_elements, 96);
    }

    #[test]
    fn mem_limit_of_one_truncates_at_the_input_step() {
        let g = one_block_genome(conv_gene(ChannelRule::Same));
        let plan = compile(&g, (3, 16, 16), 1);
        assert_eq!(plan.truncated_at, Some(0));
        assert_eq!(plan.steps.len(), 1);
        assert_eq!(plan.count_parameters(), 0);
    }

    #[test]
    fn execute_coerces_the_final_output_to_the_target_shape() {
        let mut gene = conv_gene(ChannelRule::Double);
        gene.stride = 2;
        let g = one_block_genome(gene);
        let plan = compile(&g, (3, 16, 16), 1 << 20);
        assert_eq!(plan.steps[1].out_shape, (6, 8, 8));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = init_params::<f32, _>(&plan, &mut rng);
        let input = TensorData::uniform(Shape::new(2, 3, 16, 16), 0.0, 1.0, &mut rng);
        let exec = execute(&plan, &mut state, input, (3, 16, 16), true).unwrap();
        assert_eq!(
            exec.tape.value(exec.output).shape,
            Shape::new(2, 3, 16, 16)
        );
    }

    #[test]
    fn predicted_shapes_match_executed_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let g = random_genome(&InitConfig::default(), &mut rng);
            let plan = compile(&g, (3, 16, 16), 1 << 16);
            let mut state = init_params::<f32, _>(&plan, &mut rng);
            let input = TensorData::uniform(Shape::new(1, 3, 16, 16), 0.0, 1.0, &mut rng);
            let exec = execute(&plan, &mut state, input, (3, 16, 16), true).unwrap();
            for (i, step) in plan.steps.iter().enumerate() {
                let got = exec.tape.value(exec.step_vars[i]).shape;
                assert_eq!(got.chw(), step.out_shape, "step {i}");
            }
        }
    }

    #[test]
    fn kaiming_init_is_bounded_and_gain_matches_filter_norms() {
        let mut gene = conv_gene(ChannelRule::ThirtyTwo);
        gene.weight_norm = true;
        let plan = compile(&one_block_genome(gene), (3, 8, 8), 1 << 20);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = init_params::<f64, _>(&plan, &mut rng);
        // param 0: weights, param 1: gains
        let w = &state.params[0];
        let bound = (6.0f64 / (3.0 * 9.0)).sqrt();
        assert!(w.data.iter().all(|v| v.abs() <= bound));
        let g = &state.params[1];
        let per = w.data.len() / 32;
        for f in 0..32 {
            let norm: f64 = w.data[f * per..(f + 1) * per]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            assert!((g.data[f] - norm).abs() < 1e-12);
        }
    }
}
