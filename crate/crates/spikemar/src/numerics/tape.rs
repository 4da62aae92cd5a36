//! Reverse-mode gradient tape.
//!
//! A Wengert list: ops append nodes during the forward pass, so topological
//! order is guaranteed by construction and the backward sweep visits nodes in
//! reverse construction order exactly once. Tensors without a node on the
//! tape act as constants — an op whose inputs are all constants records
//! nothing, which makes a no-grad forward pass free.

use std::cell::RefCell;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

use super::tensor::{matmul_nt, matmul_tn, matmul_val, same_shape, screen, NodeRef, Tensor};

static TAPE_IDS: AtomicU64 = AtomicU64::new(1);

/// Cotangent contributions: (parent node index, gradient w.r.t. that parent).
type Contribs = Vec<(usize, Vec<f64>)>;

struct Node {
    numel: usize,
    /// None for leaves.
    backward: Option<Box<dyn Fn(&[f64]) -> Contribs>>,
}

pub struct GradTape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for GradTape {
    fn default() -> Self {
        Self::new()
    }
}

impl GradTape {
    pub fn new() -> Self {
        GradTape {
            id: TAPE_IDS.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a leaf whose gradient will be tracked.
    pub fn watch(&self, t: &Tensor) -> Tensor {
        let index = self.push(t.numel(), None);
        let mut out = t.clone().with_grad();
        out.node = Some(NodeRef { tape: self.id, index });
        out
    }

    fn push(&self, numel: usize, backward: Option<Box<dyn Fn(&[f64]) -> Contribs>>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { numel, backward });
        nodes.len() - 1
    }

    /// Node index of `t` on this tape; `Ok(None)` for constants.
    fn node_of(&self, op: &'static str, t: &Tensor) -> Result<Option<usize>> {
        match t.node {
            None => Ok(None),
            Some(NodeRef { tape, index }) if tape == self.id => Ok(Some(index)),
            Some(_) => Err(Error::contract(op, "tensor belongs to a different tape")),
        }
    }

    fn emit(
        &self,
        shape: Vec<usize>,
        data: Vec<f64>,
        taped: bool,
        backward: impl Fn(&[f64]) -> Contribs + 'static,
    ) -> Tensor {
        let mut out = Tensor::from_parts(shape, data);
        if taped {
            let index = self.push(out.numel(), Some(Box::new(backward)));
            out.node = Some(NodeRef { tape: self.id, index });
        }
        out
    }

    // ---- elementwise binary ----

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_op("add", a, b, |x, y| x + y, |_, _, g| (g, g))
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_op("sub", a, b, |x, y| x - y, |_, _, g| (g, -g))
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_op("mul", a, b, |x, y| x * y, |x, y, g| (g * y, g * x))
    }

    fn zip_op(
        &self,
        op: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64,
        df: impl Fn(f64, f64, f64) -> (f64, f64) + 'static,
    ) -> Result<Tensor> {
        same_shape(op, a, b)?;
        let pa = self.node_of(op, a)?;
        let pb = self.node_of(op, b)?;
        let data: Vec<f64> = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        screen(op, &data)?;
        let (ad, bd) = (a.data_arc(), b.data_arc());
        Ok(self.emit(a.shape().to_vec(), data, pa.is_some() || pb.is_some(), move |g| {
            let mut out = Contribs::new();
            let mut ga = Vec::new();
            let mut gb = Vec::new();
            if pa.is_some() {
                ga = vec![0.0; g.len()];
            }
            if pb.is_some() {
                gb = vec![0.0; g.len()];
            }
            for i in 0..g.len() {
                let (da, db) = df(ad[i], bd[i], g[i]);
                if pa.is_some() {
                    ga[i] = da;
                }
                if pb.is_some() {
                    gb[i] = db;
                }
            }
            if let Some(ia) = pa {
                out.push((ia, ga));
            }
            if let Some(ib) = pb {
                out.push((ib, gb));
            }
            out
        }))
    }

    // ---- elementwise unary ----

    pub fn scale(&self, a: &Tensor, k: f64) -> Result<Tensor> {
        self.map_op("scale", a, move |x| k * x, move |_, y, g| {
            let _ = y;
            k * g
        })
    }

    pub fn exp(&self, a: &Tensor) -> Result<Tensor> {
        self.map_op("exp", a, f64::exp, |_, y, g| g * y)
    }

    pub fn sigmoid(&self, a: &Tensor) -> Result<Tensor> {
        self.map_op("sigmoid", a, sigmoid, |_, y, g| g * y * (1.0 - y))
    }

    pub fn softplus(&self, a: &Tensor) -> Result<Tensor> {
        self.map_op("softplus", a, softplus, |x, _, g| g * sigmoid(x))
    }

    /// x * sigmoid(x), the FFN gate nonlinearity.
    pub fn silu(&self, a: &Tensor) -> Result<Tensor> {
        self.map_op("silu", a, |x| x * sigmoid(x), |x, _, g| {
            let s = sigmoid(x);
            g * s * (1.0 + x * (1.0 - s))
        })
    }

    fn map_op(
        &self,
        op: &'static str,
        a: &Tensor,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64, f64) -> f64 + 'static,
    ) -> Result<Tensor> {
        let pa = self.node_of(op, a)?;
        let data: Vec<f64> = a.data().iter().map(|&x| f(x)).collect();
        screen(op, &data)?;
        let ad = a.data_arc();
        let yd = Arc::new(data.clone());
        Ok(self.emit(a.shape().to_vec(), data, pa.is_some(), move |g| {
            let ia = pa.expect("recorded only when parent is taped");
            let gx: Vec<f64> = (0..g.len()).map(|i| df(ad[i], yd[i], g[i])).collect();
            vec![(ia, gx)]
        }))
    }

    // ---- linear algebra ----

    /// `[m x k] . [k x n] -> [m x n]`.
    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        const OP: &str = "matmul";
        let (ashape, bshape) = (a.shape(), b.shape());
        if ashape.len() != 2 || bshape.len() != 2 || ashape[1] != bshape[0] {
            return Err(Error::ShapeMismatch {
                op: OP,
                left: ashape.to_vec(),
                right: bshape.to_vec(),
            });
        }
        let (m, k, n) = (ashape[0], ashape[1], bshape[1]);
        let pa = self.node_of(OP, a)?;
        let pb = self.node_of(OP, b)?;
        let data = matmul_val(a.data(), b.data(), m, k, n);
        screen(OP, &data)?;
        let (ad, bd) = (a.data_arc(), b.data_arc());
        Ok(self.emit(vec![m, n], data, pa.is_some() || pb.is_some(), move |g| {
            let mut out = Contribs::new();
            if let Some(ia) = pa {
                // dA = g . B^T  (B stored [k x n], so use the n-t kernel)
                out.push((ia, matmul_nt(g, &bd, m, n, k)));
            }
            if let Some(ib) = pb {
                // dB = A^T . g
                out.push((ib, matmul_tn(&ad, g, k, m, n)));
            }
            out
        }))
    }

    /// Gathers rows of `table` at `idx` (embedding lookup).
    pub fn gather_rows(&self, table: &Tensor, idx: &[usize]) -> Result<Tensor> {
        const OP: &str = "gather_rows";
        if table.shape().len() != 2 {
            return Err(Error::contract(OP, "table must be 2-D"));
        }
        let (rows, cols) = (table.shape()[0], table.shape()[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::Input(format!(
                "index {bad} out of range for table with {rows} rows"
            )));
        }
        let pt = self.node_of(OP, table)?;
        let td = table.data_arc();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(&td[i * cols..(i + 1) * cols]);
        }
        let idx = idx.to_vec();
        let table_numel = table.numel();
        Ok(self.emit(vec![idx.len(), cols], data, pt.is_some(), move |g| {
            let it = pt.expect("recorded only when table is taped");
            let mut gt = vec![0.0; table_numel];
            for (r, &i) in idx.iter().enumerate() {
                for c in 0..cols {
                    gt[i * cols + c] += g[r * cols + c];
                }
            }
            vec![(it, gt)]
        }))
    }

    /// Column slice `[.., start..start+len]` of a 2-D tensor.
    pub fn slice_cols(&self, a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        const OP: &str = "slice_cols";
        if a.shape().len() != 2 {
            return Err(Error::contract(OP, "input must be 2-D"));
        }
        let (rows, cols) = (a.shape()[0], a.shape()[1]);
        if start + len > cols {
            return Err(Error::contract(
                OP,
                format!("slice {start}..{} out of {cols} columns", start + len),
            ));
        }
        let pa = self.node_of(OP, a)?;
        let ad = a.data_arc();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&ad[r * cols + start..r * cols + start + len]);
        }
        Ok(self.emit(vec![rows, len], data, pa.is_some(), move |g| {
            let ia = pa.expect("recorded only when parent is taped");
            let mut ga = vec![0.0; rows * cols];
            for r in 0..rows {
                ga[r * cols + start..r * cols + start + len]
                    .copy_from_slice(&g[r * len..(r + 1) * len]);
            }
            vec![(ia, ga)]
        }))
    }

    /// Repeats the whole row block `n` times: `[r x c] -> [n*r x c]`.
    pub fn tile_rows(&self, a: &Tensor, n: usize) -> Result<Tensor> {
        const OP: &str = "tile_rows";
        if n == 0 {
            return Err(Error::contract(OP, "tile count must be >= 1"));
        }
        let pa = self.node_of(OP, a)?;
        let block = a.numel();
        let rows = a.leading();
        let cols = a.last_dim();
        let mut data = Vec::with_capacity(block * n);
        for _ in 0..n {
            data.extend_from_slice(a.data());
        }
        Ok(self.emit(vec![rows * n, cols], data, pa.is_some(), move |g| {
            let ia = pa.expect("recorded only when parent is taped");
            let mut ga = vec![0.0; block];
            for t in 0..n {
                for i in 0..block {
                    ga[i] += g[t * block + i];
                }
            }
            vec![(ia, ga)]
        }))
    }

    /// Multiplies each row of `a: [r x c]` elementwise by `v: [c]`.
    pub fn mul_cols(&self, a: &Tensor, v: &Tensor) -> Result<Tensor> {
        const OP: &str = "mul_cols";
        let cols = a.last_dim();
        if v.shape() != [cols] {
            return Err(Error::ShapeMismatch {
                op: OP,
                left: a.shape().to_vec(),
                right: v.shape().to_vec(),
            });
        }
        let rows = a.leading();
        let pa = self.node_of(OP, a)?;
        let pv = self.node_of(OP, v)?;
        let (ad, vd) = (a.data_arc(), v.data_arc());
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(ad[r * cols + c] * vd[c]);
            }
        }
        screen(OP, &data)?;
        Ok(self.emit(a.shape().to_vec(), data, pa.is_some() || pv.is_some(), move |g| {
            let mut out = Contribs::new();
            if let Some(ia) = pa {
                let mut ga = vec![0.0; rows * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        ga[r * cols + c] = g[r * cols + c] * vd[c];
                    }
                }
                out.push((ia, ga));
            }
            if let Some(iv) = pv {
                let mut gv = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        gv[c] += g[r * cols + c] * ad[r * cols + c];
                    }
                }
                out.push((iv, gv));
            }
            out
        }))
    }

    // ---- normalization and log-probabilities ----

    /// RMS normalization over the trailing dimension:
    /// `x / sqrt(mean(x^2) + eps)`, optionally scaled elementwise by `weight`.
    pub fn rmsnorm(&self, x: &Tensor, weight: Option<&Tensor>, eps: f64) -> Result<Tensor> {
        const OP: &str = "rmsnorm";
        let d = x.last_dim();
        if d == 0 {
            return Err(Error::contract(OP, "trailing dimension must be >= 1"));
        }
        if eps <= 0.0 {
            return Err(Error::contract(OP, format!("eps must be > 0, got {eps}")));
        }
        if let Some(w) = weight {
            if w.shape() != [d] {
                return Err(Error::ShapeMismatch {
                    op: OP,
                    left: x.shape().to_vec(),
                    right: w.shape().to_vec(),
                });
            }
        }
        let rows = x.leading();
        let px = self.node_of(OP, x)?;
        let pw = match weight {
            Some(w) => self.node_of(OP, w)?,
            None => None,
        };
        let xd = x.data_arc();
        let wd = weight.map(|w| w.data_arc());

        let mut inv_rms = vec![0.0; rows];
        let mut data = vec![0.0; rows * d];
        for r in 0..rows {
            let xr = &xd[r * d..(r + 1) * d];
            let ms = xr.iter().map(|v| v * v).sum::<f64>() / d as f64;
            let inv = 1.0 / (ms + eps).sqrt();
            inv_rms[r] = inv;
            for c in 0..d {
                let xhat = xr[c] * inv;
                data[r * d + c] = match &wd {
                    Some(w) => w[c] * xhat,
                    None => xhat,
                };
            }
        }
        screen(OP, &data)?;
        let inv_rms = Arc::new(inv_rms);
        Ok(self.emit(
            x.shape().to_vec(),
            data,
            px.is_some() || pw.is_some(),
            move |g| {
                let mut out = Contribs::new();
                let mut gx = if px.is_some() { vec![0.0; rows * d] } else { Vec::new() };
                let mut gw = if pw.is_some() { vec![0.0; d] } else { Vec::new() };
                for r in 0..rows {
                    let xr = &xd[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let inv = inv_rms[r];
                    if pw.is_some() {
                        for c in 0..d {
                            gw[c] += gr[c] * xr[c] * inv;
                        }
                    }
                    if px.is_some() {
                        // ghat = g * w; dx = inv * (ghat - xhat * mean(ghat * xhat))
                        let mut dot = 0.0;
                        for c in 0..d {
                            let gh = match &wd {
                                Some(w) => gr[c] * w[c],
                                None => gr[c],
                            };
                            dot += gh * xr[c] * inv;
                        }
                        dot /= d as f64;
                        for c in 0..d {
                            let gh = match &wd {
                                Some(w) => gr[c] * w[c],
                                None => gr[c],
                            };
                            gx[r * d + c] = inv * (gh - xr[c] * inv * dot);
                        }
                    }
                }
                if let Some(ix) = px {
                    out.push((ix, gx));
                }
                if let Some(iw) = pw {
                    out.push((iw, gw));
                }
                out
            },
        ))
    }

    /// Log-probabilities over the trailing dimension, computed with
    /// max-subtraction so huge logits cannot overflow.
    pub fn softmax_logprobs(&self, logits: &Tensor) -> Result<Tensor> {
        const OP: &str = "softmax_logprobs";
        let d = logits.last_dim();
        if d == 0 {
            return Err(Error::contract(OP, "trailing dimension must be >= 1"));
        }
        let rows = logits.leading();
        let px = self.node_of(OP, logits)?;
        let xd = logits.data_arc();
        let mut data = vec![0.0; rows * d];
        for r in 0..rows {
            let xr = &xd[r * d..(r + 1) * d];
            let max = xr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + xr.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for c in 0..d {
                data[r * d + c] = xr[c] - lse;
            }
        }
        screen(OP, &data)?;
        let yd = Arc::new(data.clone());
        Ok(self.emit(logits.shape().to_vec(), data, px.is_some(), move |g| {
            let ix = px.expect("recorded only when parent is taped");
            let mut gx = vec![0.0; rows * d];
            for r in 0..rows {
                let gsum: f64 = g[r * d..(r + 1) * d].iter().sum();
                for c in 0..d {
                    gx[r * d + c] = g[r * d + c] - yd[r * d + c].exp() * gsum;
                }
            }
            vec![(ix, gx)]
        }))
    }

    // ---- reductions ----

    pub fn sum_all(&self, a: &Tensor) -> Result<Tensor> {
        const OP: &str = "sum_all";
        let pa = self.node_of(OP, a)?;
        let s = a.data().iter().sum::<f64>();
        screen(OP, &[s])?;
        let n = a.numel();
        Ok(self.emit(vec![1], vec![s], pa.is_some(), move |g| {
            let ia = pa.expect("recorded only when parent is taped");
            vec![(ia, vec![g[0]; n])]
        }))
    }

    pub fn mean_all(&self, a: &Tensor) -> Result<Tensor> {
        const OP: &str = "mean_all";
        if a.numel() == 0 {
            return Err(Error::contract(OP, "mean of empty tensor"));
        }
        let n = a.numel();
        let s = self.sum_all(a)?;
        self.scale(&s, 1.0 / n as f64)
    }

    /// Mean over rows of the euclidean norm of each row.
    pub fn rows_l2norm_mean(&self, a: &Tensor) -> Result<Tensor> {
        const OP: &str = "rows_l2norm_mean";
        let d = a.last_dim();
        let rows = a.leading();
        if rows == 0 || d == 0 {
            return Err(Error::contract(OP, "empty input"));
        }
        let pa = self.node_of(OP, a)?;
        let ad = a.data_arc();
        let mut norms = vec![0.0; rows];
        let mut total = 0.0;
        for r in 0..rows {
            let n2: f64 = ad[r * d..(r + 1) * d].iter().map(|v| v * v).sum();
            norms[r] = n2.sqrt();
            total += norms[r];
        }
        let value = total / rows as f64;
        screen(OP, &[value])?;
        let norms = Arc::new(norms);
        Ok(self.emit(vec![1], vec![value], pa.is_some(), move |g| {
            let ia = pa.expect("recorded only when parent is taped");
            let mut ga = vec![0.0; rows * d];
            for r in 0..rows {
                if norms[r] > 0.0 {
                    let k = g[0] / (rows as f64 * norms[r]);
                    for c in 0..d {
                        ga[r * d + c] = k * ad[r * d + c];
                    }
                }
            }
            vec![(ia, ga)]
        }))
    }

    /// Negative log-likelihood of per-row targets given log-probabilities.
    pub fn nll_rows(&self, logprobs: &Tensor, targets: &[usize]) -> Result<Tensor> {
        const OP: &str = "nll_rows";
        let d = logprobs.last_dim();
        let rows = logprobs.leading();
        if targets.len() != rows {
            return Err(Error::contract(
                OP,
                format!("{} targets for {} rows", targets.len(), rows),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= d) {
            return Err(Error::Input(format!("target {bad} out of range {d}")));
        }
        let pa = self.node_of(OP, logprobs)?;
        let ld = logprobs.data_arc();
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            total -= ld[r * d + t];
        }
        let value = total / rows as f64;
        screen(OP, &[value])?;
        let targets = targets.to_vec();
        Ok(self.emit(vec![1], vec![value], pa.is_some(), move |g| {
            let ia = pa.expect("recorded only when parent is taped");
            let mut ga = vec![0.0; rows * d];
            let k = g[0] / rows as f64;
            for (r, &t) in targets.iter().enumerate() {
                ga[r * d + t] = -k;
            }
            vec![(ia, ga)]
        }))
    }

    // ---- extension point for fused ops (ATMN, selective scan) ----

    /// Records a custom op. `out` carries the forward value; `vjp` receives
    /// the output cotangent and returns one optional cotangent per entry of
    /// `parents` (in order). Constant parents are skipped automatically.
    pub fn custom_op(
        &self,
        out: Tensor,
        op: &'static str,
        parents: &[&Tensor],
        vjp: impl Fn(&[f64]) -> Vec<Option<Vec<f64>>> + 'static,
    ) -> Result<Tensor> {
        screen(op, out.data())?;
        let ids: Vec<Option<usize>> = parents
            .iter()
            .map(|p| self.node_of(op, p))
            .collect::<Result<_>>()?;
        if ids.iter().all(Option::is_none) {
            return Ok(out);
        }
        let mut out = out;
        let index = self.push(
            out.numel(),
            Some(Box::new(move |g| {
                let cots = vjp(g);
                debug_assert_eq!(cots.len(), ids.len());
                ids.iter()
                    .zip(cots)
                    .filter_map(|(id, c)| match (id, c) {
                        (Some(i), Some(c)) => Some((*i, c)),
                        _ => None,
                    })
                    .collect()
            })),
        );
        out.node = Some(NodeRef { tape: self.id, index });
        Ok(out)
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss. Gradients for every node on the
    /// tape (leaves included) are retained in the returned map.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        const OP: &str = "backward";
        if loss.numel() != 1 {
            return Err(Error::contract(
                OP,
                format!("loss must be scalar, shape is {:?}", loss.shape()),
            ));
        }
        let lid = self
            .node_of(OP, loss)?
            .ok_or_else(|| Error::contract(OP, "loss is not attached to this tape"))?;
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[lid] = Some(vec![1.0]);
        for i in (0..=lid).rev() {
            if grads[i].is_none() {
                continue;
            }
            let Some(bw) = nodes[i].backward.as_ref() else {
                continue;
            };
            let contribs = bw(grads[i].as_ref().expect("checked above"));
            for (p, c) in contribs {
                debug_assert!(p < i, "tape order violated");
                debug_assert_eq!(c.len(), nodes[p].numel);
                match &mut grads[p] {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(&c) {
                            *a += v;
                        }
                    }
                    slot => *slot = Some(c),
                }
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }
}

/// Per-node gradients produced by [`GradTape::backward`].
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient w.r.t. `t`, if `t` is on the tape and received one.
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        match t.node {
            Some(NodeRef { tape, index }) if tape == self.tape => {
                self.grads.get(index).and_then(|g| g.as_deref())
            }
            _ => None,
        }
    }

    /// Copies the gradient for `t` into its `grad` field (zeros if none).
    pub fn write_back(&self, t: &mut Tensor) {
        let g = self
            .get(t)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; t.numel()]);
        t.set_grad(g).expect("gradient length matches by construction");
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    // ln(1 + e^x) without overflow for large |x|
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
