use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

use super::kernels::{self, PoolMode, BATCHNORM_MOMENTUM};
use super::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batchnorm uses batch statistics and updates its running averages.
    Train,
    /// Batchnorm uses the running averages.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input(String),
    Param(usize),
    /// `x [n, in]`, `w [out, in]`, optional `b [out]`.
    Dense {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Conv2d {
        x: NodeId,
        k: NodeId,
        b: NodeId,
    },
    MaxPool2d {
        x: NodeId,
        window: usize,
        mode: PoolMode,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        state: usize,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Add(NodeId, NodeId),
    /// Adds one scalar per record (`s` holds `batch` values) to every
    /// coordinate of that record.
    AddRowScalar {
        x: NodeId,
        s: NodeId,
    },
    /// Elementwise `scale * x + shift` with constant coefficients.
    Affine {
        x: NodeId,
        scale: f64,
        shift: f64,
    },
    Flatten(NodeId),
    /// Mean of squared differences; scalar output.
    MseLoss {
        pred: NodeId,
        target: NodeId,
    },
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Dense { .. } => "dense",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool2d { .. } => "maxpool2d",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Add(..) => "add",
            Op::AddRowScalar { .. } => "add_row_scalar",
            Op::Affine { .. } => "affine",
            Op::Flatten(_) => "flatten",
            Op::MseLoss { .. } => "mse_loss",
        }
    }

    fn operands(&self) -> Vec<NodeId> {
        match *self {
            Op::Input(_) | Op::Param(_) => vec![],
            Op::Dense { x, w, b } => {
                let mut v = vec![x, w];
                v.extend(b);
                v
            }
            Op::Conv2d { x, k, b } => vec![x, k, b],
            Op::MaxPool2d { x, .. } => vec![x],
            Op::BatchNorm { x, gamma, beta, .. } => vec![x, gamma, beta],
            Op::Relu(x) | Op::Sigmoid(x) | Op::Flatten(x) => vec![x],
            Op::Affine { x, .. } => vec![x],
            Op::Add(a, b) => vec![a, b],
            Op::AddRowScalar { x, s } => vec![x, s],
            Op::MseLoss { pred, target } => vec![pred, target],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    name: String,
    op: Op,
}

/// Running statistics of one batchnorm node.
#[derive(Debug, Clone, PartialEq)]
pub struct NormState {
    pub name: String,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Pool { argmax: Vec<usize>, gap: f64 },
    Norm { xhat: Vec<f64>, inv_std: Vec<f64>, batch_stats: bool },
}

#[derive(Debug, Clone)]
struct Cache {
    target: NodeId,
    values: Vec<Option<Tensor>>,
    aux: Vec<Aux>,
}

/// Parameter gradients keyed by name, in parameter declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    names: Vec<String>,
    grads: Vec<Tensor>,
}

impl GradientMap {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.grads[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.grads)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub(crate) fn by_index(&self, i: usize) -> &Tensor {
        &self.grads[i]
    }
}

/// Result of a backward pass: parameter gradients plus gradients with
/// respect to every bound input placeholder.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: GradientMap,
    pub inputs: BTreeMap<String, Tensor>,
}

/// Which ReLU units were active and which element won each pooling window.
/// Two evaluations with the same signature lie on the same linear piece.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KinkSignature(Vec<u64>);

/// Ordered computation graph over the primitive set with named parameters.
///
/// Nodes may only reference earlier nodes, so declaration order is a
/// topological order. Values from the latest forward pass are cached for
/// [`NetworkGraph::backward`].
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    params: Vec<(String, Tensor)>,
    param_index: HashMap<String, usize>,
    norm_states: Vec<NormState>,
    output: Option<NodeId>,
    cache: Option<Cache>,
}

impl Default for NetworkGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl NetworkGraph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
            param_index: HashMap::new(),
            norm_states: Vec::new(),
            output: None,
            cache: None,
        }
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let id = self.nodes.len();
        if let Some(bad) = op.operands().into_iter().find(|&o| o >= id) {
            return Err(Error::Graph(format!(
                "{} node {id} references node {bad} which is not declared before it",
                op.kind()
            )));
        }
        let name = format!("#{id}:{}", op.kind());
        self.nodes.push(Node { name, op });
        self.cache = None;
        Ok(id)
    }

    /// Placeholder bound at forward time.
    pub fn input(&mut self, name: &str) -> NodeId {
        if let Some(id) = self
            .nodes
            .iter()
            .position(|n| matches!(&n.op, Op::Input(s) if s == name))
        {
            return id;
        }
        self.push(Op::Input(name.to_string())).expect("inputs have no operands")
    }

    pub fn param(&mut self, name: &str, value: Tensor) -> Result<NodeId> {
        if self.param_index.contains_key(name) {
            return Err(Error::Graph(format!("duplicate parameter `{name}`")));
        }
        let idx = self.params.len();
        self.params.push((name.to_string(), value));
        self.param_index.insert(name.to_string(), idx);
        self.push(Op::Param(idx))
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        self.push(Op::Dense { x, w, b })
    }

    pub fn conv2d(&mut self, x: NodeId, k: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Conv2d { x, k, b })
    }

    pub fn maxpool2d(&mut self, x: NodeId, window: usize, mode: PoolMode) -> Result<NodeId> {
        self.push(Op::MaxPool2d { x, window, mode })
    }

    /// Adds a batchnorm node with fresh running statistics (mean 0, var 1)
    /// sized from `gamma`.
    pub fn batchnorm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, name: &str) -> Result<NodeId> {
        let width = match self.nodes.get(gamma).map(|n| &n.op) {
            Some(Op::Param(i)) => self.params[*i].1.numel(),
            _ => return Err(Error::Graph("batchnorm gamma must be a parameter".into())),
        };
        let state = self.norm_states.len();
        self.norm_states.push(NormState {
            name: name.to_string(),
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        });
        self.push(Op::BatchNorm { x, gamma, beta, state })
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn add_row_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        self.push(Op::AddRowScalar { x, s })
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        if !scale.is_finite() || !shift.is_finite() {
            return Err(Error::Graph("affine coefficients must be finite".into()));
        }
        self.push(Op::Affine { x, scale, shift })
    }

    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Flatten(x))
    }

    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.push(Op::MseLoss { pred, target })
    }

    pub fn set_output(&mut self, node: NodeId) -> Result<()> {
        if node >= self.nodes.len() {
            return Err(Error::Graph(format!("output node {node} does not exist")));
        }
        self.output = Some(node);
        self.cache = None;
        Ok(())
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    /// Human-readable name of a node, used in error messages.
    pub fn node_name(&self, node: NodeId) -> &str {
        &self.nodes[node].name
    }

    /// Attaches a descriptive label to a node's diagnostic name.
    pub fn label(&mut self, node: NodeId, label: &str) {
        let n = &mut self.nodes[node];
        n.name = format!("#{node}:{}({label})", n.op.kind());
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, node: NodeId) -> &Op {
        &self.nodes[node].op
    }

    // ── parameters ───────────────────────────────────────────────────

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn param_value(&self, name: &str) -> Option<&Tensor> {
        self.param_index.get(name).map(|&i| &self.params[i].1)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Replaces a parameter; the new value must keep the old shape.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let &i = self
            .param_index
            .get(name)
            .ok_or_else(|| Error::Graph(format!("unknown parameter `{name}`")))?;
        if self.params[i].1.shape() != value.shape() {
            return Err(Error::shape(
                name,
                format!("expected {:?}, got {:?}", self.params[i].1.shape(), value.shape()),
            ));
        }
        self.params[i].1 = value;
        self.cache = None;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.cache = None;
        self.params.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn norm_states(&self) -> &[NormState] {
        &self.norm_states
    }

    pub(crate) fn norm_states_mut(&mut self) -> &mut [NormState] {
        self.cache = None;
        &mut self.norm_states
    }

    // ── evaluation ───────────────────────────────────────────────────

    fn needed(&self, target: NodeId) -> Vec<bool> {
        let mut need = vec![false; self.nodes.len()];
        need[target] = true;
        for id in (0..=target).rev() {
            if need[id] {
                for o in self.nodes[id].op.operands() {
                    need[o] = true;
                }
            }
        }
        need
    }

    /// Evaluates the designated output node.
    pub fn forward(&mut self, inputs: &[(&str, &Tensor)], mode: Mode) -> Result<&Tensor> {
        let out = self
            .output
            .ok_or_else(|| Error::Graph("graph has no designated output".into()))?;
        self.forward_node(out, inputs, mode)
    }

    /// Evaluates `target` and everything it depends on, caching values for a
    /// subsequent backward pass.
    pub fn forward_node(&mut self, target: NodeId, inputs: &[(&str, &Tensor)], mode: Mode) -> Result<&Tensor> {
        if target >= self.nodes.len() {
            return Err(Error::Graph(format!("node {target} does not exist")));
        }
        self.cache = None;
        let need = self.needed(target);
        let mut values: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut aux: Vec<Aux> = vec![Aux::None; self.nodes.len()];
        for id in 0..=target {
            if !need[id] {
                continue;
            }
            let (value, extra) = self.eval_node(id, &values, inputs, mode)?;
            if let Some(v) = &value {
                kernels::check_finite(&self.nodes[id].name, v.data())?;
            }
            values[id] = value;
            aux[id] = extra;
        }
        self.cache = Some(Cache { target, values, aux });
        Ok(self.cached_value(target))
    }

    fn cached_value(&self, id: NodeId) -> &Tensor {
        let cache = self.cache.as_ref().expect("forward populated the cache");
        match &self.nodes[id].op {
            Op::Param(i) => &self.params[*i].1,
            _ => cache.values[id].as_ref().expect("needed node evaluated"),
        }
    }

    fn eval_node(
        &mut self,
        id: NodeId,
        values: &[Option<Tensor>],
        inputs: &[(&str, &Tensor)],
        mode: Mode,
    ) -> Result<(Option<Tensor>, Aux)> {
        let params = &self.params;
        let nodes = &self.nodes;
        let get = |n: NodeId| -> &Tensor {
            match &nodes[n].op {
                Op::Param(i) => &params[*i].1,
                _ => values[n].as_ref().expect("operand evaluated earlier"),
            }
        };
        let name = nodes[id].name.as_str();
        let op = nodes[id].op.clone();
        let v = match op {
            Op::Input(ref slot) => {
                let t = inputs
                    .iter()
                    .find(|(n, _)| n == slot)
                    .map(|(_, t)| (*t).clone())
                    .ok_or_else(|| Error::Graph(format!("input `{slot}` is not bound")))?;
                Some(t)
            }
            Op::Param(_) => None,
            Op::Dense { x, w, b } => {
                let (xt, wt) = (get(x), get(w));
                if xt.rank() != 2 || wt.rank() != 2 || xt.shape()[1] != wt.shape()[1] {
                    return Err(Error::shape(
                        name,
                        format!("input {:?} incompatible with weight {:?}", xt.shape(), wt.shape()),
                    ));
                }
                let (n, inp, out) = (xt.shape()[0], xt.shape()[1], wt.shape()[0]);
                let bias = match b {
                    Some(b) => {
                        let bt = get(b);
                        if bt.numel() != out {
                            return Err(Error::shape(name, format!("bias {:?} for {out} outputs", bt.shape())));
                        }
                        Some(bt.data())
                    }
                    None => None,
                };
                let y = kernels::dense_forward(n, inp, out, xt.data(), wt.data(), bias);
                Some(Tensor::from_raw(vec![n, out], y))
            }
            Op::Conv2d { x, k, b } => {
                let (xt, kt, bt) = (get(x), get(k), get(b));
                let d = kernels::conv_dims(name, xt.shape(), kt.shape(), bt.shape())?;
                let y = kernels::conv2d_forward(d, xt.data(), kt.data(), bt.data());
                Some(Tensor::from_raw(vec![d.n, d.o, d.out_h(), d.out_w()], y))
            }
            Op::MaxPool2d { x, window, mode: pm } => {
                let xt = get(x);
                let d = kernels::pool_dims(name, xt.shape(), window, pm)?;
                let (y, argmax, gap) = kernels::maxpool_forward(d, xt.data());
                let shape = vec![xt.shape()[0], xt.shape()[1], d.out_h(), d.out_w()];
                return Ok((Some(Tensor::from_raw(shape, y)), Aux::Pool { argmax, gap }));
            }
            Op::BatchNorm { x, gamma, beta, state } => {
                let (xt, gt, bt) = (get(x), get(gamma), get(beta));
                let d = kernels::norm_dims(name, xt.shape(), gt.shape(), bt.shape())?;
                let shape = xt.shape().to_vec();
                match mode {
                    Mode::Train => {
                        if d.n < 2 {
                            return Err(Error::shape(name, "training-mode batchnorm needs a batch of at least 2"));
                        }
                        let (y, xhat, inv_std, mean, var) =
                            kernels::batchnorm_train_forward(d, xt.data(), gt.data(), bt.data());
                        let st = &mut self.norm_states[state];
                        for c in 0..d.c {
                            st.running_mean[c] =
                                BATCHNORM_MOMENTUM * st.running_mean[c] + (1.0 - BATCHNORM_MOMENTUM) * mean[c];
                            st.running_var[c] =
                                BATCHNORM_MOMENTUM * st.running_var[c] + (1.0 - BATCHNORM_MOMENTUM) * var[c];
                        }
                        return Ok((
                            Some(Tensor::from_raw(shape, y)),
                            Aux::Norm { xhat, inv_std, batch_stats: true },
                        ));
                    }
                    Mode::Eval => {
                        let st = &self.norm_states[state];
                        let (y, xhat, inv_std) = kernels::batchnorm_eval_forward(
                            d,
                            xt.data(),
                            gt.data(),
                            bt.data(),
                            &st.running_mean,
                            &st.running_var,
                        );
                        return Ok((
                            Some(Tensor::from_raw(shape, y)),
                            Aux::Norm { xhat, inv_std, batch_stats: false },
                        ));
                    }
                }
            }
            Op::Relu(x) => Some(map(get(x), kernels::relu)),
            Op::Sigmoid(x) => Some(map(get(x), kernels::sigmoid)),
            Op::Affine { x, scale, shift } => Some(map(get(x), |v| scale * v + shift)),
            Op::Add(a, b) => {
                let (at, bt) = (get(a), get(b));
                if at.shape() != bt.shape() {
                    return Err(Error::shape(name, format!("{:?} + {:?}", at.shape(), bt.shape())));
                }
                let y = at.data().iter().zip(bt.data()).map(|(p, q)| p + q).collect();
                Some(Tensor::from_raw(at.shape().to_vec(), y))
            }
            Op::AddRowScalar { x, s } => {
                let (xt, st) = (get(x), get(s));
                let n = xt.shape()[0];
                if st.numel() != n {
                    return Err(Error::shape(
                        name,
                        format!("{} per-record scalars for a batch of {n}", st.numel()),
                    ));
                }
                let width = xt.numel() / n;
                let mut y = xt.data().to_vec();
                for (r, chunk) in y.chunks_mut(width).enumerate() {
                    let add = st.data()[r];
                    chunk.iter_mut().for_each(|v| *v += add);
                }
                Some(Tensor::from_raw(xt.shape().to_vec(), y))
            }
            Op::Flatten(x) => {
                let xt = get(x);
                let n = xt.shape()[0];
                Some(Tensor::from_raw(vec![n, xt.numel() / n], xt.data().to_vec()))
            }
            Op::MseLoss { pred, target } => {
                let (pt, tt) = (get(pred), get(target));
                if pt.numel() != tt.numel() {
                    return Err(Error::shape(
                        name,
                        format!("prediction {:?} vs target {:?}", pt.shape(), tt.shape()),
                    ));
                }
                let m = pt.numel() as f64;
                let loss = pt
                    .data()
                    .iter()
                    .zip(tt.data())
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>()
                    / m;
                Some(Tensor::from_raw(vec![1], vec![loss]))
            }
        };
        Ok((v, Aux::None))
    }

    /// Reverse-mode gradients of the (scalar) output from the latest
    /// [`NetworkGraph::forward`] call.
    pub fn backward(&self) -> Result<Gradients> {
        let out = self
            .output
            .ok_or_else(|| Error::Graph("graph has no designated output".into()))?;
        let cache = self
            .cache
            .as_ref()
            .filter(|c| c.target == out)
            .ok_or_else(|| Error::Graph("backward called before forward of the output node".into()))?;
        let out_val = self.cached_value(out);
        if out_val.numel() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar output, got shape {:?}",
                out_val.shape()
            )));
        }
        let need = self.needed(out);
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out] = Some(vec![1.0]);

        let accumulate = |grads: &mut Vec<Option<Vec<f64>>>, id: NodeId, g: Vec<f64>| match &mut grads[id] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        };

        for id in (0..=out).rev() {
            if !need[id] {
                continue;
            }
            let Some(dy) = grads[id].take() else { continue };
            let val = |n: NodeId| self.cached_value(n);
            match &self.nodes[id].op {
                Op::Input(_) | Op::Param(_) => {
                    grads[id] = Some(dy);
                }
                Op::Dense { x, w, b } => {
                    let (xt, wt) = (val(*x), val(*w));
                    let (n, inp, o) = (xt.shape()[0], xt.shape()[1], wt.shape()[0]);
                    let (dx, dw, db) = kernels::dense_backward(n, inp, o, xt.data(), wt.data(), &dy);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    if let Some(b) = b {
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Conv2d { x, k, b } => {
                    let (xt, kt, bt) = (val(*x), val(*k), val(*b));
                    let d = kernels::conv_dims("", xt.shape(), kt.shape(), bt.shape())?;
                    let (dx, dk, db) = kernels::conv2d_backward(d, xt.data(), kt.data(), &dy);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *k, dk);
                    accumulate(&mut grads, *b, db);
                }
                Op::MaxPool2d { x, .. } => {
                    let Aux::Pool { argmax, .. } = &cache.aux[id] else {
                        unreachable!("pool aux cached")
                    };
                    let dx = kernels::maxpool_backward(val(*x).numel(), argmax, &dy);
                    accumulate(&mut grads, *x, dx);
                }
                Op::BatchNorm { x, gamma, beta, .. } => {
                    let Aux::Norm { xhat, inv_std, batch_stats } = &cache.aux[id] else {
                        unreachable!("norm aux cached")
                    };
                    let (xt, gt, bt) = (val(*x), val(*gamma), val(*beta));
                    let d = kernels::norm_dims("", xt.shape(), gt.shape(), bt.shape())?;
                    let (dx, dg, db) = kernels::batchnorm_backward(d, xhat, inv_std, gt.data(), &dy, *batch_stats);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gamma, dg);
                    accumulate(&mut grads, *beta, db);
                }
                Op::Relu(x) => {
                    let xv = val(*x).data();
                    let dx = dy.iter().zip(xv).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let yv = val(id).data();
                    let dx = dy.iter().zip(yv).map(|(g, &s)| g * s * (1.0 - s)).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Affine { x, scale, .. } => {
                    let dx = dy.iter().map(|g| g * scale).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, dy.clone());
                    accumulate(&mut grads, *b, dy);
                }
                Op::AddRowScalar { x, s } => {
                    let n = val(*s).numel();
                    let width = dy.len() / n;
                    let ds = dy.chunks(width).map(|c| c.iter().sum()).collect();
                    accumulate(&mut grads, *x, dy);
                    accumulate(&mut grads, *s, ds);
                }
                Op::Flatten(x) => accumulate(&mut grads, *x, dy),
                Op::MseLoss { pred, target } => {
                    let (pt, tt) = (val(*pred), val(*target));
                    let m = pt.numel() as f64;
                    let g = dy[0];
                    let dp: Vec<f64> = pt
                        .data()
                        .iter()
                        .zip(tt.data())
                        .map(|(p, t)| g * 2.0 * (p - t) / m)
                        .collect();
                    let dt = dp.iter().map(|v| -v).collect();
                    accumulate(&mut grads, *pred, dp);
                    accumulate(&mut grads, *target, dt);
                }
            }
        }

        let mut names = Vec::with_capacity(self.params.len());
        let mut pgrads = Vec::with_capacity(self.params.len());
        let mut param_node = vec![None; self.params.len()];
        let mut inputs = BTreeMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Param(i) => param_node[*i] = Some(id),
                Op::Input(slot) if need[id] => {
                    let shape = self.cached_value(id).shape().to_vec();
                    let g = grads[id].take().unwrap_or_else(|| vec![0.0; shape.iter().product()]);
                    inputs.insert(slot.clone(), Tensor::from_raw(shape, g));
                }
                _ => {}
            }
        }
        for (i, (name, value)) in self.params.iter().enumerate() {
            let g = param_node[i]
                .and_then(|id| grads[id].take())
                .unwrap_or_else(|| vec![0.0; value.numel()]);
            names.push(name.clone());
            pgrads.push(Tensor::from_raw(value.shape().to_vec(), g));
        }
        Ok(Gradients {
            params: GradientMap { names, grads: pgrads },
            inputs,
        })
    }

    /// Smallest distance of any cached ReLU input to zero, or of any pooling
    /// window maximum to its runner-up.
    pub fn kink_margin(&self) -> f64 {
        let Some(cache) = &self.cache else { return f64::INFINITY };
        let mut margin = f64::INFINITY;
        for (id, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Relu(x) if cache.values[id].is_some() => {
                    for v in self.cached_value(*x).data() {
                        margin = margin.min(v.abs());
                    }
                }
                Op::MaxPool2d { .. } => {
                    if let Aux::Pool { gap, .. } = &cache.aux[id] {
                        margin = margin.min(*gap);
                    }
                }
                _ => {}
            }
        }
        margin
    }

    pub fn kink_signature(&self) -> KinkSignature {
        let mut sig = Vec::new();
        let Some(cache) = &self.cache else { return KinkSignature(sig) };
        for (id, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Relu(x) if cache.values[id].is_some() => {
                    let mut word = 0u64;
                    for (i, v) in self.cached_value(*x).data().iter().enumerate() {
                        if *v > 0.0 {
                            word |= 1 << (i % 64);
                        }
                        if i % 64 == 63 {
                            sig.push(word);
                            word = 0;
                        }
                    }
                    sig.push(word);
                }
                Op::MaxPool2d { .. } => {
                    if let Aux::Pool { argmax, .. } = &cache.aux[id] {
                        sig.extend(argmax.iter().map(|&a| a as u64));
                    }
                }
                _ => {}
            }
        }
        KinkSignature(sig)
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_raw(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
}
