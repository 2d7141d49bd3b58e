//! Dense tensors, a recording tape for reverse-mode gradients, an Adam
//! optimizer, soft target updates and a binary checkpoint container.

mod checkpoint;
mod gradcheck;
mod layer;
mod params;
mod tape;
mod tensor;

use alloc::string::String;
use core::fmt;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, rel_err, GradReport};
pub use layer::{forward, Layer, Mlp};
pub use params::{ParamId, ParamSet};
pub use tape::{InputGrads, PatchGeometry, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum NumError {
    Shape { op: &'static str, detail: String },
    NonFinite { op: &'static str },
    SegmentOutOfRange { index: usize, groups: usize },
    DuplicateName(String),
    TapeMismatch(String),
    ParamMismatch(String),
    Checkpoint(String),
}

impl fmt::Display for NumError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumError::Shape { op, detail } => write!(f, "{op}: shape mismatch ({detail})"),
            NumError::NonFinite { op } => write!(f, "{op}: non-finite value"),
            NumError::SegmentOutOfRange { index, groups } => {
                write!(f, "segment index {index} out of range for {groups} groups")
            }
            NumError::DuplicateName(n) => write!(f, "duplicate parameter name {n:?}"),
            NumError::TapeMismatch(m) => write!(f, "tape/params mismatch: {m}"),
            NumError::ParamMismatch(m) => write!(f, "parameter sets differ: {m}"),
            NumError::Checkpoint(m) => write!(f, "checkpoint: {m}"),
        }
    }
}

impl core::error::Error for NumError {}

/// Sums the rows of `values` (`[m × f]`) into `groups` output rows by segment label.
pub fn segment_sum(values: &Tensor, segments: &[usize], groups: usize) -> Result<Tensor, NumError> {
    let cols = values.cols();
    if let Some(&bad) = segments.iter().find(|&&s| s >= groups) {
        return Err(NumError::SegmentOutOfRange { index: bad, groups });
    }
    if !values.is_empty() && values.rows() != segments.len() {
        return Err(NumError::Shape {
            op: "segment_sum",
            detail: alloc::format!("{} rows, {} labels", values.rows(), segments.len()),
        });
    }
    let mut out = Tensor::zeros(&[groups, cols]);
    for (r, &s) in segments.iter().enumerate() {
        for (o, &v) in out.row_mut(s).iter_mut().zip(values.row(r)) {
            *o += v;
        }
    }
    Ok(out)
}

/// Hyperparameters of [`adam_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every entry, then zeroes the gradients.
pub fn adam_step(params: &mut ParamSet, cfg: &AdamConfig) {
    params.adam_steps += 1;
    let t = params.adam_steps as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for e in &mut params.entries {
        let (value, grad, m, v) = (e.value.data_mut(), e.grad.data_mut(), e.m.data_mut(), e.v.data_mut());
        for k in 0..value.len() {
            let g = grad[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            value[k] -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
            grad[k] = 0.0;
        }
    }
}

/// `target ← tau·online + (1−tau)·target`, entry by entry.
pub fn soft_update(target: &mut ParamSet, online: &ParamSet, tau: f64) -> Result<(), NumError> {
    if !target.same_layout(online) {
        return Err(NumError::ParamMismatch("names or shapes differ".into()));
    }
    for (t, o) in target.entries.iter_mut().zip(&online.entries) {
        for (tv, &ov) in t.value.data_mut().iter_mut().zip(o.value.data()) {
            *tv = tau * ov + (1.0 - tau) * *tv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn segment_sum_basic() {
        let v = Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let out = segment_sum(&v, &[0, 0, 1], 2).unwrap();
        assert_eq!(out.data(), &[3.0, 3.0]);
    }

    #[test]
    fn segment_sum_empty_input() {
        let v = Tensor::zeros(&[0, 1]);
        let out = segment_sum(&v, &[], 2).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn segment_sum_rejects_out_of_range() {
        let v = Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(
            segment_sum(&v, &[0, 2], 2),
            Err(NumError::SegmentOutOfRange { index: 2, groups: 2 })
        );
    }

    fn scalar_set(v: f64) -> (ParamSet, ParamId) {
        let mut p = ParamSet::new();
        let id = p.insert("p", Tensor::vector(vec![v])).unwrap();
        (p, id)
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let (mut p, id) = scalar_set(0.7);
        adam_step(&mut p, &AdamConfig::default());
        assert_eq!(p.value(id).data(), &[0.7]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // m̂ = g, v̂ = g² on the first step, so the move is lr·g/(|g|+eps).
        let (mut p, id) = scalar_set(1.0);
        p.grad_mut(id).data_mut()[0] = 1.0;
        adam_step(&mut p, &AdamConfig::with_lr(0.1));
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.value(id).data()[0] - expected).abs() < 1e-15);
        assert_eq!(p.grad(id).data(), &[0.0]);
    }

    #[test]
    fn adam_minimizes_quadratic_bowl() {
        let mut p = ParamSet::new();
        let id = p.insert("x", Tensor::vector(vec![3.0, -2.0, 0.5])).unwrap();
        let centre = [1.0, 0.5, -1.5];
        let cfg = AdamConfig::with_lr(0.05);
        let loss = |p: &ParamSet| -> f64 {
            p.value(id).data().iter().zip(&centre).map(|(x, c)| (x - c) * (x - c)).sum()
        };
        let mut steps = 0;
        while loss(&p) >= 1e-6 && steps < 500 {
            let g: alloc::vec::Vec<f64> = p.value(id).data().iter().zip(&centre).map(|(x, c)| 2.0 * (x - c)).collect();
            p.grad_mut(id).data_mut().copy_from_slice(&g);
            adam_step(&mut p, &cfg);
            steps += 1;
        }
        assert!(loss(&p) < 1e-6, "loss {} after {steps} steps", loss(&p));
    }

    #[test]
    fn soft_update_cases() {
        let (online, id) = scalar_set(2.0);
        let (mut target, _) = scalar_set(0.0);
        soft_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target.value(id).data(), &[0.0]);
        soft_update(&mut target, &online, 0.5).unwrap();
        assert_eq!(target.value(id).data(), &[1.0]);
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.value(id).data(), &[2.0]);
    }

    #[test]
    fn soft_update_rejects_layout_mismatch() {
        let (online, _) = scalar_set(2.0);
        let mut other = ParamSet::new();
        other.insert("q", Tensor::vector(vec![0.0])).unwrap();
        assert!(soft_update(&mut other, &online, 0.5).is_err());
    }
}
