use alloc::vec;
use alloc::vec::Vec;

use super::tensor::affine_forward;
use super::{NumError, ParamId, ParamSet, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Geometry of a square-kernel, stride-1, unpadded patch extraction over
/// channels-last images stored one per row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGeometry {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kernel: usize,
}

impl PatchGeometry {
    pub fn out_height(&self) -> usize {
        self.height + 1 - self.kernel
    }

    pub fn out_width(&self) -> usize {
        self.width + 1 - self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Source offset within the image for (patch position, element in patch).
    fn source(&self, pos: usize, elem: usize) -> usize {
        let (oy, ox) = (pos / self.out_width(), pos % self.out_width());
        let ch = elem % self.channels;
        let kx = (elem / self.channels) % self.kernel;
        let ky = elem / (self.channels * self.kernel);
        ((oy + ky) * self.width + (ox + kx)) * self.channels + ch
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine { x: Var, w: ParamId, b: ParamId },
    Relu(Var),
    Concat(Vec<Var>),
    Gather { x: Var, idx: Vec<usize> },
    SegmentSum { x: Var, seg: Vec<usize> },
    Overwrite { base: Var, idx: Vec<usize>, rows: Var },
    Patches { x: Var, geom: PatchGeometry },
    Reshape(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation over 2-D tensors so gradients can be
/// propagated back into a [`ParamSet`].
///
/// Every tensor on the tape is treated as a matrix `[rows × cols]`.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    layout: Vec<Option<Vec<usize>>>,
}

/// Gradients with respect to the tape's leaf inputs after a backward pass.
#[derive(Debug)]
pub struct InputGrads {
    grads: Vec<Option<Tensor>>,
}

impl InputGrads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn check(op: &'static str, t: &Tensor) -> Result<(), NumError> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(NumError::NonFinite { op })
    }
}

fn shape_err(op: &'static str, detail: alloc::string::String) -> NumError {
    NumError::Shape { op, detail }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn note_param(&mut self, params: &ParamSet, id: ParamId) {
        if self.layout.len() < params.len() {
            self.layout.resize(params.len(), None);
        }
        self.layout[id.0] = Some(params.value(id).shape().to_vec());
    }

    /// Records a constant input. Input must be 2-D (or a vector, read as one row).
    pub fn input(&mut self, t: Tensor) -> Result<Var, NumError> {
        check("input", &t)?;
        let t = if t.shape().len() == 2 {
            t
        } else {
            let (r, c) = (t.rows(), t.cols());
            t.reshape(&[r, c])?
        };
        Ok(self.push(t, Op::Leaf))
    }

    /// `x · W + b` with `W: [in × out]`, `b: [out]` taken from `params`.
    pub fn affine(&mut self, x: Var, params: &ParamSet, w: ParamId, b: ParamId) -> Result<Var, NumError> {
        let wt = params.value(w);
        let bt = params.value(b);
        let xv = &self.nodes[x.0].value;
        if wt.shape().len() != 2 || bt.len() != wt.shape()[1] || xv.cols() != wt.shape()[0] {
            return Err(shape_err(
                "affine",
                alloc::format!("x {:?}, w {:?}, b {:?}", xv.shape(), wt.shape(), bt.shape()),
            ));
        }
        let (inp, out) = (wt.shape()[0], wt.shape()[1]);
        let rows = xv.rows();
        let y = Tensor::matrix(rows, out, affine_forward(xv.data(), rows, wt.data(), bt.data(), inp, out))?;
        check("affine", &y)?;
        self.note_param(params, w);
        self.note_param(params, b);
        Ok(self.push(y, Op::Affine { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NumError> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let y = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(y, Op::Relu(x)))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        if parts.is_empty() {
            return Err(shape_err("concat", "no inputs".into()));
        }
        let rows = self.nodes[parts[0].0].value.rows();
        if parts.iter().any(|p| self.nodes[p.0].value.rows() != rows) {
            return Err(shape_err("concat", "row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        let y = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(y, Op::Concat(parts.to_vec())))
    }

    /// Selects rows `idx` of `x` (repeats allowed).
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var, NumError> {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = (xv.rows(), xv.cols());
        if let Some(bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(shape_err("gather", alloc::format!("row {bad} out of {rows}")));
        }
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(xv.row(i));
        }
        let y = Tensor::matrix(idx.len(), cols, data)?;
        Ok(self.push(y, Op::Gather { x, idx: idx.to_vec() }))
    }

    /// Row-wise sum per group; see [`super::segment_sum`].
    pub fn segment_sum(&mut self, x: Var, seg: &[usize], groups: usize) -> Result<Var, NumError> {
        let xv = &self.nodes[x.0].value;
        if xv.rows() != seg.len() && !(seg.is_empty() && xv.is_empty()) {
            return Err(shape_err(
                "segment_sum",
                alloc::format!("{} rows, {} segment labels", xv.rows(), seg.len()),
            ));
        }
        let y = super::segment_sum(xv, seg, groups)?;
        Ok(self.push(y, Op::SegmentSum { x, seg: seg.to_vec() }))
    }

    /// Copy of `base` with rows `idx` replaced by the rows of `rows`. Indices must be distinct.
    pub fn overwrite(&mut self, base: Var, idx: &[usize], rows: Var) -> Result<Var, NumError> {
        let bv = &self.nodes[base.0].value;
        let rv = &self.nodes[rows.0].value;
        if !idx.is_empty() && (rv.rows() != idx.len() || rv.cols() != bv.cols()) {
            return Err(shape_err("overwrite", alloc::format!("base {:?}, rows {:?}", bv.shape(), rv.shape())));
        }
        let mut seen = vec![false; bv.rows()];
        let mut y = bv.clone();
        for (k, &i) in idx.iter().enumerate() {
            if i >= bv.rows() || seen[i] {
                return Err(shape_err("overwrite", alloc::format!("bad or repeated row {i}")));
            }
            seen[i] = true;
            y.row_mut(i).copy_from_slice(rv.row(k));
        }
        Ok(self.push(y, Op::Overwrite { base, idx: idx.to_vec(), rows }))
    }

    /// im2col: `[n × h·w·c]` images to `[n·positions × k·k·c]` patches.
    pub fn patches(&mut self, x: Var, geom: PatchGeometry) -> Result<Var, NumError> {
        let xv = &self.nodes[x.0].value;
        if xv.cols() != geom.image_len() || geom.kernel == 0 || geom.kernel > geom.height || geom.kernel > geom.width {
            return Err(shape_err("patches", alloc::format!("{:?} vs {:?}", xv.shape(), geom)));
        }
        let n = xv.rows();
        let (pos, plen) = (geom.positions(), geom.patch_len());
        let mut data = Vec::with_capacity(n * pos * plen);
        for s in 0..n {
            let img = xv.row(s);
            for p in 0..pos {
                for e in 0..plen {
                    data.push(img[geom.source(p, e)]);
                }
            }
        }
        let y = Tensor::matrix(n * pos, plen, data)?;
        Ok(self.push(y, Op::Patches { x, geom }))
    }

    /// Reinterprets a matrix with a new row count, keeping row-major data.
    pub fn reshape_rows(&mut self, x: Var, rows: usize) -> Result<Var, NumError> {
        let xv = &self.nodes[x.0].value;
        if rows == 0 || !xv.len().is_multiple_of(rows) {
            return Err(shape_err("reshape", alloc::format!("{:?} into {rows} rows", xv.shape())));
        }
        let cols = xv.len() / rows;
        let y = xv.clone().reshape(&[rows, cols])?;
        Ok(self.push(y, Op::Reshape(x)))
    }

    /// Reverse-mode pass from `out` seeded with `out_grad`. Parameter gradients are
    /// added into `params`; repeated calls accumulate.
    pub fn backward(&self, out: Var, out_grad: &Tensor, params: &mut ParamSet) -> Result<InputGrads, NumError> {
        if out.0 >= self.nodes.len() {
            return Err(NumError::TapeMismatch("output var not on this tape".into()));
        }
        for (i, shape) in self.layout.iter().enumerate() {
            if let Some(shape) = shape {
                if i >= params.len() || params.value(ParamId(i)).shape() != shape.as_slice() {
                    return Err(NumError::TapeMismatch(alloc::format!("parameter {i} layout differs")));
                }
            }
        }
        let ov = &self.nodes[out.0].value;
        if out_grad.len() != ov.len() {
            return Err(shape_err(
                "backward",
                alloc::format!("grad {:?} for output {:?}", out_grad.shape(), ov.shape()),
            ));
        }
        check("backward", out_grad)?;
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(out_grad.clone().reshape(ov.shape())?);

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Affine { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let wt = params.value(*w);
                    let (inp, outd) = (wt.shape()[0], wt.shape()[1]);
                    let rows = xv.rows();
                    // dx = g · Wᵀ
                    let mut dx = vec![0.0; rows * inp];
                    for r in 0..rows {
                        let gr = &g.data()[r * outd..(r + 1) * outd];
                        let dxr = &mut dx[r * inp..(r + 1) * inp];
                        for (k, d) in dxr.iter_mut().enumerate() {
                            let wr = &wt.data()[k * outd..(k + 1) * outd];
                            *d = gr.iter().zip(wr).map(|(a, b)| a * b).sum();
                        }
                    }
                    // dW += xᵀ · g, db += Σ_rows g
                    {
                        let dw = params.grad_mut(*w).data_mut();
                        for r in 0..rows {
                            let xr = &xv.data()[r * inp..(r + 1) * inp];
                            let gr = &g.data()[r * outd..(r + 1) * outd];
                            for (k, &xk) in xr.iter().enumerate() {
                                if xk == 0.0 {
                                    continue;
                                }
                                for (d, &gv) in dw[k * outd..(k + 1) * outd].iter_mut().zip(gr) {
                                    *d += xk * gv;
                                }
                            }
                        }
                    }
                    {
                        let db = params.grad_mut(*b).data_mut();
                        for r in 0..rows {
                            for (d, &gv) in db.iter_mut().zip(&g.data()[r * outd..(r + 1) * outd]) {
                                *d += gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::matrix(rows, inp, dx)?);
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::Concat(parts) => {
                    let rows = g.rows();
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.nodes[p.0].value.cols();
                        let mut data = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[offset..offset + pc]);
                        }
                        offset += pc;
                        accumulate(&mut grads, *p, Tensor::matrix(rows, pc, data)?);
                    }
                }
                Op::Gather { x, idx } => {
                    let xv = &self.nodes[x.0].value;
                    let mut dx = Tensor::zeros(&[xv.rows(), xv.cols()]);
                    for (k, &src) in idx.iter().enumerate() {
                        for (d, &gv) in dx.row_mut(src).iter_mut().zip(g.row(k)) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::SegmentSum { x, seg } => {
                    let xv = &self.nodes[x.0].value;
                    let mut data = Vec::with_capacity(xv.len());
                    for &s in seg {
                        data.extend_from_slice(g.row(s));
                    }
                    accumulate(&mut grads, *x, Tensor::matrix(xv.rows(), xv.cols(), data)?);
                }
                Op::Overwrite { base, idx, rows } => {
                    let mut dbase = g.clone();
                    let rv = &self.nodes[rows.0].value;
                    let mut drows = Vec::with_capacity(rv.len());
                    for &i in idx {
                        drows.extend_from_slice(g.row(i));
                        dbase.row_mut(i).fill(0.0);
                    }
                    accumulate(&mut grads, *base, dbase);
                    if !idx.is_empty() {
                        accumulate(&mut grads, *rows, Tensor::matrix(idx.len(), rv.cols(), drows)?);
                    }
                }
                Op::Patches { x, geom } => {
                    let xv = &self.nodes[x.0].value;
                    let mut dx = Tensor::zeros(&[xv.rows(), xv.cols()]);
                    let (pos, plen) = (geom.positions(), geom.patch_len());
                    for s in 0..xv.rows() {
                        let dimg = dx.row_mut(s);
                        for p in 0..pos {
                            let gr = g.row(s * pos + p);
                            for (e, &gv) in gr.iter().enumerate().take(plen) {
                                dimg[geom.source(p, e)] += gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Reshape(x) => {
                    let xv = &self.nodes[x.0].value;
                    accumulate(&mut grads, *x, g.reshape(xv.shape())?);
                }
            }
        }
        Ok(InputGrads { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
