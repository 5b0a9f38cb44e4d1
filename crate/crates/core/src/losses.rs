//! Training losses as plain functionals over peel maps.
//!
//! Every depth term is reduced per layer as the mean over foreground pixels,
//! then summed over layers. Reductions use pairwise summation in a fixed
//! order, so results do not depend on thread count.

use serde::{Deserialize, Serialize};

use crate::error::{check_resolution, Error, Result};
use crate::fusion::ResidualStack;
use crate::map::{Mask, Plane};
use crate::peel::PeelStack;

/// Pairwise (cascade) sum.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

fn check_layers<A, B>(a: &[Plane<A>], b: &[Plane<B>], support: &Mask) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LayerMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    for (x, y) in a.iter().zip(b) {
        check_resolution(support.dims(), x.dims())?;
        check_resolution(support.dims(), y.dims())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rd: f64,
    pub rgb: f64,
    pub sm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rd: 1.0,
            rgb: 0.1,
            sm: 0.001,
        }
    }
}

impl LossWeights {
    pub fn new(rd: f64, rgb: f64, sm: f64) -> Result<Self> {
        for (name, v) in [("rd", rd), ("rgb", rgb), ("sm", sm)] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!("loss weight {name} must be >= 0, got {v}")));
            }
        }
        Ok(Self { rd, rgb, sm })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_fuse: f64,
    pub l_rd: f64,
    pub l_rgb: f64,
    pub l_sm_rd: f64,
    pub l_sm_fuse: f64,
    pub total: f64,
}

/// Σ over layers of the mean `|pred − gt|` over `support`.
pub fn loss_fuse(pred: &[Plane<f32>], gt: &[Plane<f32>], support: &Mask) -> Result<f64> {
    loss_rd(pred, gt, &[], support)
}

/// As [`loss_fuse`], additionally skipping pixels flagged in the per-layer
/// `conflict` masks (pass an empty slice for none).
pub fn loss_rd(pred: &[Plane<f32>], gt: &[Plane<f32>], conflict: &[Mask], support: &Mask) -> Result<f64> {
    check_layers(pred, gt, support)?;
    if !conflict.is_empty() {
        check_layers(pred, conflict, support)?;
    }
    let mut layers = Vec::with_capacity(pred.len());
    let mut terms = Vec::new();
    for (l, (p, g)) in pred.iter().zip(gt).enumerate() {
        terms.clear();
        for i in 0..p.data().len() {
            if support.is_set(i) && !conflict.get(l).is_some_and(|c| c.is_set(i)) {
                terms.push((p.data()[i] as f64 - g.data()[i] as f64).abs());
            }
        }
        layers.push(mean(&terms));
    }
    Ok(pairwise_sum(&layers))
}

/// Forward differences `(∂x, ∂y)` at pixel `i`; zero on the last
/// column/row.
fn gradient(v: &[f64], w: usize, h: usize, i: usize) -> (f64, f64) {
    let (x, y) = (i % w, i / w);
    let gx = if x + 1 < w { v[i + 1] - v[i] } else { 0.0 };
    let gy = if y + 1 < h { v[i + w] - v[i] } else { 0.0 };
    (gx, gy)
}

fn smooth_term(pred: &[Vec<f64>], gt: &[Vec<f64>], support: &Mask) -> f64 {
    let (w, h) = support.dims();
    let mut layers = Vec::with_capacity(pred.len());
    let mut terms = Vec::new();
    for (p, g) in pred.iter().zip(gt) {
        terms.clear();
        for i in 0..w * h {
            if support.is_set(i) {
                let (px, py) = gradient(p, w, h, i);
                let (gx, gy) = gradient(g, w, h, i);
                terms.push((gx - px).abs() + (gy - py).abs());
            }
        }
        layers.push(mean(&terms));
    }
    pairwise_sum(&layers)
}

fn widen(layers: &[Plane<f32>]) -> Vec<Vec<f64>> {
    layers.iter().map(|p| p.data().iter().map(|&x| x as f64).collect()).collect()
}

/// First-order gradient matching: `(‖∇gt_a − ∇pred_a‖₁, ‖∇gt_b − ∇pred_b‖₁)`,
/// each the per-layer mean over `support` summed over layers. `*_a` are the
/// prior-plus-residual maps, `*_b` the fused maps.
pub fn loss_smooth(
    pred_a: &[Plane<f32>],
    gt_a: &[Plane<f32>],
    pred_b: &[Plane<f32>],
    gt_b: &[Plane<f32>],
    support: &Mask,
) -> Result<(f64, f64)> {
    check_layers(pred_a, gt_a, support)?;
    check_layers(pred_b, gt_b, support)?;
    Ok((
        smooth_term(&widen(pred_a), &widen(gt_a), support),
        smooth_term(&widen(pred_b), &widen(gt_b), support),
    ))
}

/// Σ over the given layers of the mean `|Δrgb|` over support pixels and
/// channels. Callers pass layers 2..L; the first is the input image.
pub fn loss_rgb(pred: &[Plane<[f32; 3]>], gt: &[Plane<[f32; 3]>], support: &Mask) -> Result<f64> {
    check_layers(pred, gt, support)?;
    let mut layers = Vec::with_capacity(pred.len());
    let mut terms = Vec::new();
    for (p, g) in pred.iter().zip(gt) {
        terms.clear();
        for i in 0..p.data().len() {
            if support.is_set(i) {
                for c in 0..3 {
                    terms.push((p.data()[i][c] as f64 - g.data()[i][c] as f64).abs());
                }
            }
        }
        layers.push(mean(&terms));
    }
    Ok(pairwise_sum(&layers))
}

/// `prior + δ` per layer.
pub fn prior_plus_residual(prior: &PeelStack, rd: &ResidualStack) -> Result<Vec<Plane<f32>>> {
    check_resolution(prior.dims(), rd.dims())?;
    if prior.layers() != rd.layers() {
        return Err(Error::LayerMismatch {
            left: prior.layers(),
            right: rd.layers(),
        });
    }
    Ok((0..prior.layers())
        .map(|l| {
            let d = rd.delta(l).data();
            let data = prior.depth(l).data().iter().zip(d).map(|(p, d)| p + d).collect();
            Plane::from_vec(prior.width(), prior.height(), data)
        })
        .collect())
}

/// Everything the total loss needs. RGB comes from the fused stacks; both
/// must carry color for `l_rgb` to be non-zero.
pub struct LossInputs<'a> {
    pub prior: &'a PeelStack,
    pub pred_rd: &'a ResidualStack,
    pub gt_rd: &'a ResidualStack,
    pub pred_fused: &'a PeelStack,
    pub gt_fused: &'a PeelStack,
    pub foreground: &'a Mask,
}

fn rgb_layers(s: &PeelStack) -> Option<Vec<Plane<[f32; 3]>>> {
    (1..s.layers()).map(|l| s.rgb(l).cloned()).collect()
}

pub fn total_loss(inputs: &LossInputs<'_>, weights: &LossWeights) -> Result<LossReport> {
    let f = inputs.foreground;
    let l_fuse = loss_fuse(inputs.pred_fused.depths(), inputs.gt_fused.depths(), f)?;
    let l_rd = loss_rd(inputs.pred_rd.deltas(), inputs.gt_rd.deltas(), inputs.gt_rd.conflicts(), f)?;
    let pred_a = prior_plus_residual(inputs.prior, inputs.pred_rd)?;
    let gt_a = prior_plus_residual(inputs.prior, inputs.gt_rd)?;
    let (l_sm_rd, l_sm_fuse) = loss_smooth(&pred_a, &gt_a, inputs.pred_fused.depths(), inputs.gt_fused.depths(), f)?;
    let l_rgb = match (rgb_layers(inputs.pred_fused), rgb_layers(inputs.gt_fused)) {
        (Some(p), Some(g)) => loss_rgb(&p, &g, f)?,
        _ => 0.0,
    };
    let total = l_fuse + weights.rd * l_rd + weights.rgb * l_rgb + weights.sm * (l_sm_rd + l_sm_fuse);
    Ok(LossReport {
        l_fuse,
        l_rd,
        l_rgb,
        l_sm_rd,
        l_sm_fuse,
        total,
    })
}
