//! Define-by-run autodiff over (N, C, H, W) rasters. Forward values are
//! computed at node creation; backward walks the tape in reverse and
//! accumulates into per-node gradient buffers.

use ndarray::Array4;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Central-difference response at one position: every in-bounds kernel tap
/// contributes w * (x_tap - theta * x_center). Out-of-bounds taps drop out
/// entirely, so a constant input is annihilated at theta = 1 everywhere,
/// borders included, and theta = 0 reduces to zero-padded convolution.
#[derive(Debug)]
enum Op {
    Leaf,
    CdcConv { x: NodeId, w: NodeId, theta: f64 },
    AddBias { x: NodeId, b: NodeId },
    Silu(NodeId),
    Sigmoid(NodeId),
    AvgPool2(NodeId),
    UpsampleNearest { x: NodeId, factor: usize },
    ConcatC(Vec<NodeId>),
    Add(NodeId, NodeId),
    Mse { a: NodeId, b: NodeId },
    ContrastiveDepth { a: NodeId, b: NodeId },
    WeightedSum(Vec<(NodeId, f64)>),
}

struct Node {
    op: Op,
    value: Array4<f64>,
    grad: Option<Array4<f64>>,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub const CD_DIRECTIONS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Array4<f64>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            grad: None,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn value(&self, id: NodeId) -> &Array4<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[[0, 0, 0, 0]]
    }

    pub fn grad(&self, id: NodeId) -> Option<&Array4<f64>> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn leaf(&mut self, value: Array4<f64>, needs_grad: bool) -> NodeId {
        self.push(Op::Leaf, value, needs_grad)
    }

    pub fn cdc_conv(&mut self, x: NodeId, w: NodeId, theta: f64) -> Result<NodeId> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (_, cin, _, _) = xv.dim();
        let (_, wcin, kh, kw) = wv.dim();
        if kh != kw || (kh != 1 && kh != 3) {
            return Err(Error::invalid(format!("kernel must be 1x1 or 3x3, got {kh}x{kw}")));
        }
        if wcin != cin {
            return Err(Error::invalid(format!(
                "kernel expects {wcin} input channels, tensor has {cin}"
            )));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!("theta {theta} outside [0, 1]")));
        }
        let value = cdc_forward(xv, wv, theta);
        let needs = self.needs(x) || self.needs(w);
        Ok(self.push(Op::CdcConv { x, w, theta }, value, needs))
    }

    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let xv = self.value(x);
        let bv = self.value(b);
        let (_, c, _, _) = xv.dim();
        assert_eq!(bv.dim(), (1, c, 1, 1), "bias shape");
        let mut value = xv.clone();
        for n in 0..value.dim().0 {
            for ci in 0..c {
                let beta = bv[[0, ci, 0, 0]];
                value
                    .index_axis_mut(ndarray::Axis(0), n)
                    .index_axis_mut(ndarray::Axis(0), ci)
                    .mapv_inplace(|v| v + beta);
            }
        }
        let needs = self.needs(x) || self.needs(b);
        self.push(Op::AddBias { x, b }, value, needs)
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(|v| v * sigmoid(v));
        let needs = self.needs(x);
        self.push(Op::Silu(x), value, needs)
    }

    pub fn sigmoid_node(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(sigmoid);
        let needs = self.needs(x);
        self.push(Op::Sigmoid(x), value, needs)
    }

    pub fn avg_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dim();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::invalid(format!("pooling an odd {h}x{w} raster")));
        }
        let mut value = Array4::<f64>::zeros((n, c, h / 2, w / 2));
        for nn in 0..n {
            for ci in 0..c {
                for i in 0..h / 2 {
                    for j in 0..w / 2 {
                        value[[nn, ci, i, j]] = (xv[[nn, ci, 2 * i, 2 * j]]
                            + xv[[nn, ci, 2 * i, 2 * j + 1]]
                            + xv[[nn, ci, 2 * i + 1, 2 * j]]
                            + xv[[nn, ci, 2 * i + 1, 2 * j + 1]])
                            * 0.25;
                    }
                }
            }
        }
        let needs = self.needs(x);
        Ok(self.push(Op::AvgPool2(x), value, needs))
    }

    pub fn upsample_nearest(&mut self, x: NodeId, factor: usize) -> NodeId {
        assert!(factor >= 1);
        let xv = self.value(x);
        let (n, c, h, w) = xv.dim();
        let mut value = Array4::<f64>::zeros((n, c, h * factor, w * factor));
        for nn in 0..n {
            for ci in 0..c {
                for i in 0..h * factor {
                    for j in 0..w * factor {
                        value[[nn, ci, i, j]] = xv[[nn, ci, i / factor, j / factor]];
                    }
                }
            }
        }
        let needs = self.needs(x);
        self.push(Op::UpsampleNearest { x, factor }, value, needs)
    }

    pub fn concat_c(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let (n, _, h, w) = self.value(xs[0]).dim();
        let total: usize = xs.iter().map(|&id| self.value(id).dim().1).sum();
        let mut value = Array4::<f64>::zeros((n, total, h, w));
        let mut offset = 0;
        for &id in xs {
            let xv = self.value(id);
            let c = xv.dim().1;
            value
                .slice_mut(ndarray::s![.., offset..offset + c, .., ..])
                .assign(xv);
            offset += c;
        }
        let needs = xs.iter().any(|&id| self.needs(id));
        self.push(Op::ConcatC(xs.to_vec()), value, needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a) + self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::Add(a, b), value, needs)
    }

    pub fn mse(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.dim(), bv.dim(), "mse operand shapes");
        let m = av.len() as f64;
        let sum: f64 = av
            .iter()
            .zip(bv.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let value = Array4::from_elem((1, 1, 1, 1), sum / m);
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::Mse { a, b }, value, needs)
    }

    pub fn contrastive_depth(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.dim(), bv.dim(), "contrastive operand shapes");
        let value = Array4::from_elem((1, 1, 1, 1), cd_forward(av, bv));
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::ContrastiveDepth { a, b }, value, needs)
    }

    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        assert!(!terms.is_empty());
        let total: f64 = terms.iter().map(|&(id, k)| self.scalar(id) * k).sum();
        let value = Array4::from_elem((1, 1, 1, 1), total);
        let needs = terms.iter().any(|&(id, _)| self.needs(id));
        self.push(Op::WeightedSum(terms.to_vec()), value, needs)
    }

    fn accumulate(&mut self, id: NodeId, delta: &Array4<f64>) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match self.nodes[id.0].grad.as_mut() {
            Some(g) => *g += delta,
            None => self.nodes[id.0].grad = Some(delta.clone()),
        }
    }

    /// Seed dL/d(root) = 1 and propagate back through every node.
    pub fn backward(&mut self, root: NodeId) {
        assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward roots must be scalar nodes"
        );
        let ones = Array4::from_elem((1, 1, 1, 1), 1.0);
        self.nodes[root.0].grad = Some(ones);

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].needs_grad || self.nodes[idx].grad.is_none() {
                continue;
            }
            let g = self.nodes[idx].grad.clone().expect("checked above");
            // Ops read upstream values; split borrows by cloning the small
            // bits we need.
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::CdcConv { x, w, theta } => {
                    let (x, w, theta) = (*x, *w, *theta);
                    let (gx, gw) = cdc_backward(
                        &self.nodes[x.0].value,
                        &self.nodes[w.0].value,
                        theta,
                        &g,
                        self.needs(x),
                        self.needs(w),
                    );
                    if let Some(gx) = gx {
                        self.accumulate(x, &gx);
                    }
                    if let Some(gw) = gw {
                        self.accumulate(w, &gw);
                    }
                }
                Op::AddBias { x, b } => {
                    let (x, b) = (*x, *b);
                    self.accumulate(x, &g);
                    if self.needs(b) {
                        let (_, c, _, _) = self.nodes[b.0].value.dim();
                        let mut gb = Array4::<f64>::zeros((1, c, 1, 1));
                        for ci in 0..c {
                            gb[[0, ci, 0, 0]] =
                                g.index_axis(ndarray::Axis(1), ci).iter().sum();
                        }
                        self.accumulate(b, &gb);
                    }
                }
                Op::Silu(x) => {
                    let x = *x;
                    let xv = &self.nodes[x.0].value;
                    let mut gx = g.clone();
                    gx.zip_mut_with(xv, |gv, &v| {
                        let s = sigmoid(v);
                        *gv *= s * (1.0 + v * (1.0 - s));
                    });
                    self.accumulate(x, &gx);
                }
                Op::Sigmoid(x) => {
                    let x = *x;
                    let yv = &self.nodes[idx].value;
                    let mut gx = g.clone();
                    gx.zip_mut_with(yv, |gv, &y| *gv *= y * (1.0 - y));
                    self.accumulate(x, &gx);
                }
                Op::AvgPool2(x) => {
                    let x = *x;
                    let (n, c, h2, w2) = g.dim();
                    let mut gx = Array4::<f64>::zeros((n, c, h2 * 2, w2 * 2));
                    for nn in 0..n {
                        for ci in 0..c {
                            for i in 0..h2 {
                                for j in 0..w2 {
                                    let q = g[[nn, ci, i, j]] * 0.25;
                                    gx[[nn, ci, 2 * i, 2 * j]] += q;
                                    gx[[nn, ci, 2 * i, 2 * j + 1]] += q;
                                    gx[[nn, ci, 2 * i + 1, 2 * j]] += q;
                                    gx[[nn, ci, 2 * i + 1, 2 * j + 1]] += q;
                                }
                            }
                        }
                    }
                    self.accumulate(x, &gx);
                }
                Op::UpsampleNearest { x, factor } => {
                    let (x, f) = (*x, *factor);
                    let (n, c, hf, wf) = g.dim();
                    let mut gx = Array4::<f64>::zeros((n, c, hf / f, wf / f));
                    for nn in 0..n {
                        for ci in 0..c {
                            for i in 0..hf {
                                for j in 0..wf {
                                    gx[[nn, ci, i / f, j / f]] += g[[nn, ci, i, j]];
                                }
                            }
                        }
                    }
                    self.accumulate(x, &gx);
                }
                Op::ConcatC(xs) => {
                    let xs = xs.clone();
                    let mut offset = 0;
                    for id in xs {
                        let c = self.nodes[id.0].value.dim().1;
                        let part = g
                            .slice(ndarray::s![.., offset..offset + c, .., ..])
                            .to_owned();
                        self.accumulate(id, &part);
                        offset += c;
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, &g);
                    self.accumulate(b, &g);
                }
                Op::Mse { a, b } => {
                    let (a, b) = (*a, *b);
                    let gs = g[[0, 0, 0, 0]];
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let m = av.len() as f64;
                    let diff = (av - bv) * (2.0 * gs / m);
                    if self.needs(a) {
                        self.accumulate(a, &diff);
                    }
                    if self.needs(b) {
                        self.accumulate(b, &(-&diff));
                    }
                }
                Op::ContrastiveDepth { a, b } => {
                    let (a, b) = (*a, *b);
                    let gs = g[[0, 0, 0, 0]];
                    let (ga, gb) = cd_backward(
                        &self.nodes[a.0].value,
                        &self.nodes[b.0].value,
                        gs,
                        self.needs(a),
                        self.needs(b),
                    );
                    if let Some(ga) = ga {
                        self.accumulate(a, &ga);
                    }
                    if let Some(gb) = gb {
                        self.accumulate(b, &gb);
                    }
                }
                Op::WeightedSum(terms) => {
                    let terms = terms.clone();
                    let gs = g[[0, 0, 0, 0]];
                    for (id, k) in terms {
                        let delta = Array4::from_elem((1, 1, 1, 1), gs * k);
                        self.accumulate(id, &delta);
                    }
                }
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Forward CDC pass; shapes (N, Cin, H, W) x (Cout, Cin, k, k) -> (N, Cout, H, W).
pub fn cdc_forward(x: &Array4<f64>, w: &Array4<f64>, theta: f64) -> Array4<f64> {
    let (n, cin, h, wd) = x.dim();
    let (cout, _, k, _) = w.dim();
    let xs = x.as_standard_layout();
    let xsl = xs.as_slice().expect("contiguous");
    let ws = w.as_standard_layout();
    let wsl = ws.as_slice().expect("contiguous");
    let mut y = vec![0.0f64; n * cout * h * wd];

    for nn in 0..n {
        for co in 0..cout {
            let ybase = (nn * cout + co) * h * wd;
            for ci in 0..cin {
                let xbase = (nn * cin + ci) * h * wd;
                let wbase = (co * cin + ci) * k * k;
                let kw = &wsl[wbase..wbase + k * k];
                if k == 1 {
                    let scale = kw[0] * (1.0 - theta);
                    for idx in 0..h * wd {
                        y[ybase + idx] += scale * xsl[xbase + idx];
                    }
                    continue;
                }
                let wsum: f64 = kw.iter().sum();
                let (w00, w01, w02, w10, w11, w12, w20, w21, w22) = (
                    kw[0], kw[1], kw[2], kw[3], kw[4], kw[5], kw[6], kw[7], kw[8],
                );
                if h >= 3 && wd >= 3 {
                    for i in 1..h - 1 {
                        let r0 = xbase + (i - 1) * wd;
                        let r1 = xbase + i * wd;
                        let r2 = xbase + (i + 1) * wd;
                        let yrow = ybase + i * wd;
                        for j in 1..wd - 1 {
                            let c = xsl[r1 + j];
                            y[yrow + j] += w00 * xsl[r0 + j - 1]
                                + w01 * xsl[r0 + j]
                                + w02 * xsl[r0 + j + 1]
                                + w10 * xsl[r1 + j - 1]
                                + w11 * c
                                + w12 * xsl[r1 + j + 1]
                                + w20 * xsl[r2 + j - 1]
                                + w21 * xsl[r2 + j]
                                + w22 * xsl[r2 + j + 1]
                                - theta * c * wsum;
                        }
                    }
                }
                // Frame positions take only in-bounds taps.
                let mut border = |i: usize, j: usize| {
                    let c = xsl[xbase + i * wd + j];
                    let mut acc = 0.0;
                    for di in 0..3usize {
                        let ii = i as isize + di as isize - 1;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for dj in 0..3usize {
                            let jj = j as isize + dj as isize - 1;
                            if jj < 0 || jj >= wd as isize {
                                continue;
                            }
                            acc += kw[di * 3 + dj]
                                * (xsl[xbase + ii as usize * wd + jj as usize] - theta * c);
                        }
                    }
                    y[ybase + i * wd + j] += acc;
                };
                if h >= 3 && wd >= 3 {
                    for j in 0..wd {
                        border(0, j);
                        border(h - 1, j);
                    }
                    for i in 1..h - 1 {
                        border(i, 0);
                        border(i, wd - 1);
                    }
                } else {
                    for i in 0..h {
                        for j in 0..wd {
                            border(i, j);
                        }
                    }
                }
            }
        }
    }
    Array4::from_shape_vec((n, cout, h, wd), y).expect("length computed above")
}

/// Transposed CDC pass: grads w.r.t. input and kernel.
pub fn cdc_backward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    theta: f64,
    g: &Array4<f64>,
    need_x: bool,
    need_w: bool,
) -> (Option<Array4<f64>>, Option<Array4<f64>>) {
    let (n, cin, h, wd) = x.dim();
    let (cout, _, k, _) = w.dim();
    let xs = x.as_standard_layout();
    let xsl = xs.as_slice().expect("contiguous");
    let ws = w.as_standard_layout();
    let wsl = ws.as_slice().expect("contiguous");
    let gs = g.as_standard_layout();
    let gsl = gs.as_slice().expect("contiguous");

    let mut gx = if need_x {
        vec![0.0f64; n * cin * h * wd]
    } else {
        Vec::new()
    };
    let mut gw = if need_w {
        vec![0.0f64; cout * cin * k * k]
    } else {
        Vec::new()
    };

    for nn in 0..n {
        for co in 0..cout {
            let gbase = (nn * cout + co) * h * wd;
            for ci in 0..cin {
                let xbase = (nn * cin + ci) * h * wd;
                let wbase = (co * cin + ci) * k * k;
                let kw = &wsl[wbase..wbase + k * k];
                if k == 1 {
                    let coef = kw[0] * (1.0 - theta);
                    for idx in 0..h * wd {
                        let e = gsl[gbase + idx];
                        if need_x {
                            gx[xbase + idx] += coef * e;
                        }
                        if need_w {
                            gw[wbase] += e * (1.0 - theta) * xsl[xbase + idx];
                        }
                    }
                    continue;
                }
                for i in 0..h {
                    for j in 0..wd {
                        let e = gsl[gbase + i * wd + j];
                        if e == 0.0 {
                            continue;
                        }
                        let c = xsl[xbase + i * wd + j];
                        for di in 0..3usize {
                            let ii = i as isize + di as isize - 1;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for dj in 0..3usize {
                                let jj = j as isize + dj as isize - 1;
                                if jj < 0 || jj >= wd as isize {
                                    continue;
                                }
                                let tap = xbase + ii as usize * wd + jj as usize;
                                let wv = kw[di * 3 + dj];
                                if need_w {
                                    gw[wbase + di * 3 + dj] += e * (xsl[tap] - theta * c);
                                }
                                if need_x {
                                    gx[tap] += e * wv;
                                    gx[xbase + i * wd + j] -= theta * e * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    (
        if need_x {
            Some(Array4::from_shape_vec((n, cin, h, wd), gx).expect("length"))
        } else {
            None
        },
        if need_w {
            Some(Array4::from_shape_vec((cout, cin, k, k), gw).expect("length"))
        } else {
            None
        },
    )
}

/// Sum over 8 directions of the mean squared difference of directional
/// contrasts, restricted to positions whose neighbor is in bounds. The
/// restriction makes constant offsets vanish exactly.
pub fn cd_forward(a: &Array4<f64>, b: &Array4<f64>) -> f64 {
    let (n, c, h, w) = a.dim();
    let mut total = 0.0;
    for &(di, dj) in &CD_DIRECTIONS {
        let i_lo = if di < 0 { 1 } else { 0 };
        let i_hi = if di > 0 { h.saturating_sub(1) } else { h };
        let j_lo = if dj < 0 { 1 } else { 0 };
        let j_hi = if dj > 0 { w.saturating_sub(1) } else { w };
        if i_lo >= i_hi || j_lo >= j_hi {
            continue;
        }
        let count = (n * c * (i_hi - i_lo) * (j_hi - j_lo)) as f64;
        let mut sum = 0.0;
        for nn in 0..n {
            for ci in 0..c {
                for i in i_lo..i_hi {
                    for j in j_lo..j_hi {
                        let ii = (i as isize + di) as usize;
                        let jj = (j as isize + dj) as usize;
                        let da = a[[nn, ci, i, j]] - a[[nn, ci, ii, jj]];
                        let db = b[[nn, ci, i, j]] - b[[nn, ci, ii, jj]];
                        sum += (da - db) * (da - db);
                    }
                }
            }
        }
        total += sum / count;
    }
    total
}

fn cd_backward(
    a: &Array4<f64>,
    b: &Array4<f64>,
    gs: f64,
    need_a: bool,
    need_b: bool,
) -> (Option<Array4<f64>>, Option<Array4<f64>>) {
    let (n, c, h, w) = a.dim();
    let mut ga = if need_a {
        Some(Array4::<f64>::zeros((n, c, h, w)))
    } else {
        None
    };
    let mut gb = if need_b {
        Some(Array4::<f64>::zeros((n, c, h, w)))
    } else {
        None
    };
    for &(di, dj) in &CD_DIRECTIONS {
        let i_lo = if di < 0 { 1 } else { 0 };
        let i_hi = if di > 0 { h.saturating_sub(1) } else { h };
        let j_lo = if dj < 0 { 1 } else { 0 };
        let j_hi = if dj > 0 { w.saturating_sub(1) } else { w };
        if i_lo >= i_hi || j_lo >= j_hi {
            continue;
        }
        let count = (n * c * (i_hi - i_lo) * (j_hi - j_lo)) as f64;
        let scale = 2.0 * gs / count;
        for nn in 0..n {
            for ci in 0..c {
                for i in i_lo..i_hi {
                    for j in j_lo..j_hi {
                        let ii = (i as isize + di) as usize;
                        let jj = (j as isize + dj) as usize;
                        let da = a[[nn, ci, i, j]] - a[[nn, ci, ii, jj]];
                        let db = b[[nn, ci, i, j]] - b[[nn, ci, ii, jj]];
                        let e = scale * (da - db);
                        if let Some(ga) = ga.as_mut() {
                            ga[[nn, ci, i, j]] += e;
                            ga[[nn, ci, ii, jj]] -= e;
                        }
                        if let Some(gb) = gb.as_mut() {
                            gb[[nn, ci, i, j]] -= e;
                            gb[[nn, ci, ii, jj]] += e;
                        }
                    }
                }
            }
        }
    }
    (ga, gb)
}
