//! Exact derivatives for PINN losses.
//!
//! Input derivatives (u_x, u_t, u_xx) are carried forward through the network
//! as truncated second-order jets. Parameter gradients of any scalar built from
//! those jets come from a reverse sweep over a [`Tape`] that records whole-layer
//! operations on batches of collocation points.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{check_dim, Error, Result};
use crate::network::{Dense, Mlp};

/// Value of a scalar together with ∂/∂x, ∂/∂t and ∂²/∂x².
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    pub dx: f64,
    pub dt: f64,
    pub dxx: f64,
}

impl Jet2 {
    pub const fn new(v: f64, dx: f64, dt: f64, dxx: f64) -> Self {
        Self { v, dx, dt, dxx }
    }

    pub const fn constant(c: f64) -> Self {
        Self::new(c, 0.0, 0.0, 0.0)
    }

    /// Seed for the spatial input.
    pub const fn seed_x(x: f64) -> Self {
        Self::new(x, 1.0, 0.0, 0.0)
    }

    /// Seed for the time input.
    pub const fn seed_t(t: f64) -> Self {
        Self::new(t, 0.0, 1.0, 0.0)
    }

    pub fn channel(&self, c: Channel) -> f64 {
        match c {
            Channel::Value => self.v,
            Channel::Dx => self.dx,
            Channel::Dt => self.dt,
            Channel::Dxx => self.dxx,
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2::new(self.v + o.v, self.dx + o.dx, self.dt + o.dt, self.dxx + o.dxx)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2::new(self.v - o.v, self.dx - o.dx, self.dt - o.dt, self.dxx - o.dxx)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2::new(-self.v, -self.dx, -self.dt, -self.dxx)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2::new(
            self.v * o.v,
            self.dx * o.v + self.v * o.dx,
            self.dt * o.v + self.v * o.dt,
            self.dxx * o.v + 2.0 * self.dx * o.dx + self.v * o.dxx,
        )
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, c: f64) -> Jet2 {
        Jet2::new(self.v * c, self.dx * c, self.dt * c, self.dxx * c)
    }
}

/// One of the four jet components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Value,
    Dx,
    Dt,
    Dxx,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Value, Channel::Dx, Channel::Dt, Channel::Dxx];

    fn index(self) -> usize {
        self as usize
    }
}

/// Pointwise nonlinearity. Every kind supplies σ through σ''' in closed form;
/// the reverse sweep through the u_xx channel needs the third derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
    /// σ(z) = z², mostly useful for hand-built test networks.
    Square,
}

impl Activation {
    /// Returns `[σ(z), σ'(z), σ''(z), σ'''(z)]`.
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let s = z.tanh();
                let d1 = 1.0 - s * s;
                let d2 = -2.0 * s * d1;
                let d3 = -2.0 * d1 * (1.0 - 3.0 * s * s);
                [s, d1, d2, d3]
            }
            Activation::Identity => [z, 1.0, 0.0, 0.0],
            Activation::Square => [z * z, 2.0 * z, 2.0, 0.0],
        }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
            Activation::Square => z * z,
        }
    }
}

/// Applies `W·a + b` to a vector of jets; each channel transforms linearly and
/// the bias only enters the value channel.
pub fn jet_affine(layer: &Dense, input: &[Jet2]) -> Result<Vec<Jet2>> {
    check_dim("jet_affine input", layer.n_in(), input.len())?;
    let out = (0..layer.n_out())
        .map(|j| {
            let row = layer.row(j);
            let mut acc = Jet2::constant(layer.bias()[j]);
            for (w, a) in row.iter().zip(input) {
                acc.v += w * a.v;
                acc.dx += w * a.dx;
                acc.dt += w * a.dt;
                acc.dxx += w * a.dxx;
            }
            acc
        })
        .collect();
    Ok(out)
}

/// Chain rule through a scalar nonlinearity, truncated at second order in x.
pub fn jet_activation(z: Jet2, kind: Activation) -> Jet2 {
    let [s, d1, d2, _] = kind.derivatives(z.v);
    Jet2::new(s, d1 * z.dx, d1 * z.dt, d2 * z.dx * z.dx + d1 * z.dxx)
}

/// Seeds the network inputs for the point `(x, t)`. One-input networks see
/// only `t`; two-input networks see `(x, t)`.
pub(crate) fn seed_inputs(input_dim: usize, x: f64, t: f64) -> Result<Vec<Jet2>> {
    match input_dim {
        1 => Ok(vec![Jet2::seed_t(t)]),
        2 => Ok(vec![Jet2::seed_x(x), Jet2::seed_t(t)]),
        d => Err(Error::Dimension {
            context: "network input width (1 = t, 2 = x,t)",
            expected: 2,
            got: d,
        }),
    }
}

/// Network output at `(x, t)` with its exact input derivatives.
pub fn forward_jet(net: &Mlp, x: f64, t: f64) -> Result<Jet2> {
    check_dim("forward_jet output width", 1, net.output_dim())?;
    let mut a = seed_inputs(net.input_dim(), x, t)?;
    let last = net.layers().len() - 1;
    for (l, layer) in net.layers().iter().enumerate() {
        let z = jet_affine(layer, &a)?;
        let kind = if l == last { Activation::Identity } else { net.hidden_activation() };
        a = z.into_iter().map(|z| jet_activation(z, kind)).collect();
    }
    Ok(a[0])
}

/// Jets of `width` neurons at `points` collocation points, stored per channel
/// as row-major `[neuron][point]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetBatch {
    width: usize,
    points: usize,
    channels: [Vec<f64>; 4],
}

impl JetBatch {
    fn zeros(width: usize, points: usize) -> Self {
        let z = vec![0.0; width * points];
        Self {
            width,
            points,
            channels: [z.clone(), z.clone(), z.clone(), z],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn get(&self, neuron: usize, point: usize) -> Jet2 {
        let i = neuron * self.points + point;
        Jet2::new(
            self.channels[0][i],
            self.channels[1][i],
            self.channels[2][i],
            self.channels[3][i],
        )
    }

    fn row(&self, c: Channel, neuron: usize) -> &[f64] {
        &self.channels[c.index()][neuron * self.points..(neuron + 1) * self.points]
    }
}

#[derive(Debug, Clone)]
enum Value {
    Jets(JetBatch),
    Vector(Vec<f64>),
}

impl Value {
    fn zeros_like(&self) -> Value {
        match self {
            Value::Jets(j) => Value::Jets(JetBatch::zeros(j.width, j.points)),
            Value::Vector(v) => Value::Vector(vec![0.0; v.len()]),
        }
    }

    fn jets(&self) -> &JetBatch {
        match self {
            Value::Jets(j) => j,
            Value::Vector(_) => unreachable!("tape node holds a vector, not jets"),
        }
    }

    fn jets_mut(&mut self) -> &mut JetBatch {
        match self {
            Value::Jets(j) => j,
            Value::Vector(_) => unreachable!("tape node holds a vector, not jets"),
        }
    }

    fn vector(&self) -> &[f64] {
        match self {
            Value::Vector(v) => v,
            Value::Jets(_) => unreachable!("tape node holds jets, not a vector"),
        }
    }

    fn vector_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Vector(v) => v,
            Value::Jets(_) => unreachable!("tape node holds jets, not a vector"),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Affine { layer: usize, input: usize },
    Activation { input: usize, kind: Activation },
    Channel { input: usize, channel: Channel, neuron: usize },
    Gather { input: usize, indices: Vec<usize> },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Square(usize),
    Mean(usize),
}

/// Handle to a value recorded on a specific [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Record of layer-level operations evaluated against one network's
/// parameters. Replaying it backward yields the gradient of any recorded
/// scalar with respect to every weight and bias.
pub struct Tape<'n> {
    id: u64,
    net: &'n Mlp,
    ops: Vec<Op>,
    values: Vec<Value>,
}

impl<'n> Tape<'n> {
    pub fn new(net: &'n Mlp) -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            net,
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        NodeId {
            tape: self.id,
            index: self.ops.len() - 1,
        }
    }

    fn resolve(&self, node: NodeId) -> Result<usize> {
        if node.tape != self.id || node.index >= self.ops.len() {
            return Err(Error::Usage("node was not recorded on this tape".into()));
        }
        Ok(node.index)
    }

    fn vec_of(&self, node: NodeId) -> Result<(usize, &[f64])> {
        let i = self.resolve(node)?;
        match &self.values[i] {
            Value::Vector(v) => Ok((i, v)),
            Value::Jets(_) => Err(Error::Usage("expected a vector node, found jets".into())),
        }
    }

    /// Values of a vector node.
    pub fn value(&self, node: NodeId) -> Result<&[f64]> {
        Ok(self.vec_of(node)?.1)
    }

    /// Value of a length-one node.
    pub fn scalar(&self, node: NodeId) -> Result<f64> {
        let v = self.value(node)?;
        check_dim("scalar node length", 1, v.len())?;
        Ok(v[0])
    }

    /// Jets of a jet node.
    pub fn jets(&self, node: NodeId) -> Result<&JetBatch> {
        let i = self.resolve(node)?;
        match &self.values[i] {
            Value::Jets(j) => Ok(j),
            Value::Vector(_) => Err(Error::Usage("expected a jet node, found a vector".into())),
        }
    }

    /// Runs the network over `points` (each `(x, t)`) and returns the output jets.
    pub fn forward(&mut self, points: &[(f64, f64)]) -> Result<NodeId> {
        let n = points.len();
        let dim = self.net.input_dim();
        let mut input = JetBatch::zeros(dim, n);
        for (p, &(x, t)) in points.iter().enumerate() {
            for (k, jet) in seed_inputs(dim, x, t)?.into_iter().enumerate() {
                for c in Channel::ALL {
                    input.channels[c.index()][k * n + p] = jet.channel(c);
                }
            }
        }
        let mut node = self.push(Op::Input, Value::Jets(input));
        let last = self.net.layers().len() - 1;
        for l in 0..=last {
            node = self.affine(l, node)?;
            if l < last {
                node = self.activation(node, self.net.hidden_activation())?;
            }
        }
        Ok(node)
    }

    fn affine(&mut self, l: usize, input: NodeId) -> Result<NodeId> {
        let i = self.resolve(input)?;
        let layer = &self.net.layers()[l];
        let a = self.values[i].jets();
        check_dim("affine input width", layer.n_in(), a.width)?;
        let n = a.points;
        let mut z = JetBatch::zeros(layer.n_out(), n);
        for j in 0..layer.n_out() {
            z.channels[0][j * n..(j + 1) * n].fill(layer.bias()[j]);
            let row = layer.row(j);
            for c in Channel::ALL {
                let out = &mut z.channels[c.index()][j * n..(j + 1) * n];
                for (k, &w) in row.iter().enumerate() {
                    for (o, &x) in out.iter_mut().zip(a.row(c, k)) {
                        *o += w * x;
                    }
                }
            }
        }
        Ok(self.push(Op::Affine { layer: l, input: i }, Value::Jets(z)))
    }

    fn activation(&mut self, input: NodeId, kind: Activation) -> Result<NodeId> {
        let i = self.resolve(input)?;
        let z = self.values[i].jets();
        let mut a = JetBatch::zeros(z.width, z.points);
        for e in 0..z.width * z.points {
            let jet = Jet2::new(
                z.channels[0][e],
                z.channels[1][e],
                z.channels[2][e],
                z.channels[3][e],
            );
            let out = jet_activation(jet, kind);
            for c in Channel::ALL {
                a.channels[c.index()][e] = out.channel(c);
            }
        }
        Ok(self.push(Op::Activation { input: i, kind }, Value::Jets(a)))
    }

    /// Extracts one channel of one neuron across all points.
    pub fn channel(&mut self, input: NodeId, channel: Channel, neuron: usize) -> Result<NodeId> {
        let i = self.resolve(input)?;
        let j = self.values[i].jets();
        if neuron >= j.width {
            return Err(Error::Dimension {
                context: "channel neuron index",
                expected: j.width,
                got: neuron,
            });
        }
        let v = j.row(channel, neuron).to_vec();
        Ok(self.push(Op::Channel { input: i, channel, neuron }, Value::Vector(v)))
    }

    /// Selects entries of a vector by index.
    pub fn gather(&mut self, input: NodeId, indices: &[usize]) -> Result<NodeId> {
        let (i, v) = self.vec_of(input)?;
        if let Some(&bad) = indices.iter().find(|&&k| k >= v.len()) {
            return Err(Error::Dimension {
                context: "gather index",
                expected: v.len(),
                got: bad,
            });
        }
        let out = indices.iter().map(|&k| v[k]).collect();
        Ok(self.push(Op::Gather { input: i, indices: indices.to_vec() }, Value::Vector(out)))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Result<(usize, usize, Vec<f64>)> {
        let (ia, va) = self.vec_of(a)?;
        let (ib, vb) = self.vec_of(b)?;
        check_dim("elementwise operand length", va.len(), vb.len())?;
        let out = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        Ok((ia, ib, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib, out) = self.binary(a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(ia, ib), Value::Vector(out)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib, out) = self.binary(a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(ia, ib), Value::Vector(out)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib, out) = self.binary(a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(ia, ib), Value::Vector(out)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let (i, v) = self.vec_of(a)?;
        let out = v.iter().map(|x| x * c).collect();
        Ok(self.push(Op::Scale(i, c), Value::Vector(out)))
    }

    /// Adds a constant vector (e.g. negated labels) elementwise.
    pub fn offset(&mut self, a: NodeId, constants: &[f64]) -> Result<NodeId> {
        let (i, v) = self.vec_of(a)?;
        check_dim("offset length", v.len(), constants.len())?;
        let out = v.iter().zip(constants).map(|(x, c)| x + c).collect();
        Ok(self.push(Op::Offset(i), Value::Vector(out)))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        let (i, v) = self.vec_of(a)?;
        let out = v.iter().map(|x| x * x).collect();
        Ok(self.push(Op::Square(i), Value::Vector(out)))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let (i, v) = self.vec_of(a)?;
        if v.is_empty() {
            return Err(Error::Config("mean of an empty vector".into()));
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        Ok(self.push(Op::Mean(i), Value::Vector(vec![m])))
    }

    /// Mean of squares, the building block of every loss term.
    pub fn mean_square(&mut self, a: NodeId) -> Result<NodeId> {
        let sq = self.square(a)?;
        self.mean(sq)
    }

    /// Gradient of the scalar `loss` with respect to the flattened network
    /// parameters (same ordering as [`Mlp::flatten`]).
    pub fn grad_params(&self, loss: NodeId) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Usage("tape is empty".into()));
        }
        let root = self.resolve(loss)?;
        match &self.values[root] {
            Value::Vector(v) if v.len() == 1 => {}
            _ => return Err(Error::Usage("loss node must be a scalar".into())),
        }
        let net = self.net;
        let offsets = net.param_offsets();
        let mut grad = vec![0.0; net.param_count()];
        let mut adj: Vec<Option<Value>> = vec![None; root + 1];
        adj[root] = Some(Value::Vector(vec![1.0]));

        for i in (0..=root).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &self.ops[i] {
                Op::Input => {}
                Op::Affine { layer, input } => {
                    let layer_ref = &net.layers()[*layer];
                    let a = self.values[*input].jets();
                    let gz = g.jets();
                    let n = a.points;
                    let (w_off, b_off) = offsets[*layer];
                    for j in 0..layer_ref.n_out() {
                        grad[b_off + j] += gz.row(Channel::Value, j).iter().sum::<f64>();
                        for k in 0..layer_ref.n_in() {
                            let mut s = 0.0;
                            for c in Channel::ALL {
                                s += dot(gz.row(c, j), a.row(c, k));
                            }
                            grad[w_off + j * layer_ref.n_in() + k] += s;
                        }
                    }
                    if !matches!(self.ops[*input], Op::Input) {
                        let ga = accumulator(&mut adj, &self.values, *input).jets_mut();
                        for j in 0..layer_ref.n_out() {
                            let row = layer_ref.row(j);
                            for c in Channel::ALL {
                                let src = &gz.channels[c.index()][j * n..(j + 1) * n];
                                for (k, &w) in row.iter().enumerate() {
                                    let dst = &mut ga.channels[c.index()][k * n..(k + 1) * n];
                                    for (d, &s) in dst.iter_mut().zip(src) {
                                        *d += w * s;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Activation { input, kind } => {
                    let z = self.values[*input].jets();
                    let ga_out = g.jets();
                    let gz = accumulator(&mut adj, &self.values, *input).jets_mut();
                    for e in 0..z.width * z.points {
                        let [_, d1, d2, d3] = kind.derivatives(z.channels[0][e]);
                        let (zdx, zdt, zdxx) = (z.channels[1][e], z.channels[2][e], z.channels[3][e]);
                        let (bv, bdx, bdt, bdxx) = (
                            ga_out.channels[0][e],
                            ga_out.channels[1][e],
                            ga_out.channels[2][e],
                            ga_out.channels[3][e],
                        );
                        gz.channels[0][e] += bv * d1
                            + bdx * d2 * zdx
                            + bdt * d2 * zdt
                            + bdxx * (d3 * zdx * zdx + d2 * zdxx);
                        gz.channels[1][e] += bdx * d1 + bdxx * 2.0 * d2 * zdx;
                        gz.channels[2][e] += bdt * d1;
                        gz.channels[3][e] += bdxx * d1;
                    }
                }
                Op::Channel { input, channel, neuron } => {
                    let gv = g.vector();
                    let acc = accumulator(&mut adj, &self.values, *input).jets_mut();
                    let n = acc.points;
                    let dst = &mut acc.channels[channel.index()][neuron * n..(neuron + 1) * n];
                    for (d, s) in dst.iter_mut().zip(gv) {
                        *d += s;
                    }
                }
                Op::Gather { input, indices } => {
                    let gv = g.vector();
                    let acc = accumulator(&mut adj, &self.values, *input).vector_mut();
                    for (&k, s) in indices.iter().zip(gv) {
                        acc[k] += s;
                    }
                }
                Op::Add(a, b) => {
                    add_into(accumulator(&mut adj, &self.values, *a).vector_mut(), g.vector(), 1.0);
                    add_into(accumulator(&mut adj, &self.values, *b).vector_mut(), g.vector(), 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(accumulator(&mut adj, &self.values, *a).vector_mut(), g.vector(), 1.0);
                    add_into(accumulator(&mut adj, &self.values, *b).vector_mut(), g.vector(), -1.0);
                }
                Op::Mul(a, b) => {
                    let gv = g.vector();
                    let (va, vb) = (self.values[*a].vector(), self.values[*b].vector());
                    let da: Vec<f64> = gv.iter().zip(vb).map(|(s, y)| s * y).collect();
                    let db: Vec<f64> = gv.iter().zip(va).map(|(s, x)| s * x).collect();
                    add_into(accumulator(&mut adj, &self.values, *a).vector_mut(), &da, 1.0);
                    add_into(accumulator(&mut adj, &self.values, *b).vector_mut(), &db, 1.0);
                }
                Op::Scale(a, c) => {
                    add_into(accumulator(&mut adj, &self.values, *a).vector_mut(), g.vector(), *c);
                }
                Op::Offset(a) => {
                    add_into(accumulator(&mut adj, &self.values, *a).vector_mut(), g.vector(), 1.0);
                }
                Op::Square(a) => {
                    let va = self.values[*a].vector();
                    let d: Vec<f64> = g.vector().iter().zip(va).map(|(s, x)| 2.0 * s * x).collect();
                    add_into(accumulator(&mut adj, &self.values, *a).vector_mut(), &d, 1.0);
                }
                Op::Mean(a) => {
                    let s = g.vector()[0];
                    let acc = accumulator(&mut adj, &self.values, *a).vector_mut();
                    let scale = s / acc.len() as f64;
                    for d in acc.iter_mut() {
                        *d += scale;
                    }
                }
            }
        }
        Ok(grad)
    }
}

fn accumulator<'a>(adj: &'a mut [Option<Value>], values: &[Value], i: usize) -> &'a mut Value {
    adj[i].get_or_insert_with(|| values[i].zeros_like())
}

fn add_into(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
