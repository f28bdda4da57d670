//! The masking module: oracle dereverberation / estimated-ratio masks and
//! the learned three-sub-layer estimator.
//!
//! Oracle masks are elementwise ratios over any non-negative T x D
//! representation (spectrogram bins for evaluation, latent channels in
//! training terms): DM = (S + I) / Y and ERM = |S| / |Y_d|, denominators
//! floored. Composing both against Y cancels algebraically back to |S|,
//! which is what the ceiling harness exploits.
//!
//! The learned module mirrors that structure with two small conv stacks and
//! a residual connection from the module input into the pre-PReLU sum.

use alloc::vec::Vec;

use crate::graph::{Graph, GraphError, NodeId, ParamId, ParamSet};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Denominator floor for the oracle ratios.
pub const MASK_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Dm,
    Erm,
}

/// Non-negative T x D mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub values: Tensor,
    pub kind: MaskKind,
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), GraphError> {
    if a.shape() != b.shape() {
        return Err(GraphError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Dereverberation mask DM = (S + I) / max(Y, eps), elementwise.
pub fn oracle_dm(s: &Tensor, i: &Tensor, y: &Tensor, eps: f64) -> Result<Mask, GraphError> {
    check_same("oracle_dm", s, i)?;
    check_same("oracle_dm", s, y)?;
    let values: Vec<f64> = s
        .data()
        .iter()
        .zip(i.data().iter())
        .zip(y.data().iter())
        .map(|((sv, iv), yv)| (sv + iv) / yv.max(eps))
        .collect();
    Ok(Mask {
        values: Tensor::from_vec(s.shape(), values).expect("oracle_dm shape"),
        kind: MaskKind::Dm,
    })
}

/// Dereverberated mixture estimate: Y_d = Y .* DM.
pub fn apply_dm(y: &Tensor, dm: &Mask) -> Result<Tensor, GraphError> {
    check_same("apply_dm", y, &dm.values)?;
    let values: Vec<f64> = y
        .data()
        .iter()
        .zip(dm.values.data().iter())
        .map(|(a, b)| a * b)
        .collect();
    Ok(Tensor::from_vec(y.shape(), values).expect("apply_dm shape"))
}

/// Estimated ratio mask ERM = |S| / max(|Y_d|, eps), elementwise.
pub fn oracle_erm(s: &Tensor, y_d: &Tensor, eps: f64) -> Result<Mask, GraphError> {
    check_same("oracle_erm", s, y_d)?;
    let values: Vec<f64> = s
        .data()
        .iter()
        .zip(y_d.data().iter())
        .map(|(sv, yv)| sv.abs() / yv.abs().max(eps))
        .collect();
    Ok(Mask {
        values: Tensor::from_vec(s.shape(), values).expect("oracle_erm shape"),
        kind: MaskKind::Erm,
    })
}

/// Target estimate from both masks: S_hat = PReLU(ERM .* DM .* Y).
pub fn compose_estimate(
    y: &Tensor,
    dm: &Mask,
    erm: &Mask,
    prelu_alpha: f64,
) -> Result<Tensor, GraphError> {
    check_same("compose_estimate", y, &dm.values)?;
    check_same("compose_estimate", y, &erm.values)?;
    let values: Vec<f64> = y
        .data()
        .iter()
        .zip(dm.values.data().iter())
        .zip(erm.values.data().iter())
        .map(|((yv, dv), ev)| {
            let v = ev * dv * yv;
            if v > 0.0 {
                v
            } else {
                prelu_alpha * v
            }
        })
        .collect();
    Ok(Tensor::from_vec(y.shape(), values).expect("compose_estimate shape"))
}

/// Learned masking module parameters: one two-layer conv stack per mask
/// plus the shared PReLU slope.
#[derive(Debug, Clone)]
pub struct MaskingModule {
    pub dm_stack: [ConvHead; 2],
    pub erm_stack: [ConvHead; 2],
    pub prelu_alpha: ParamId,
    pub latent_dim: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvHead {
    pub w: ParamId,
    pub b: ParamId,
}

pub fn init_conv(
    params: &mut ParamSet,
    rng: &mut Rng,
    name: &str,
    k: usize,
    c_in: usize,
    c_out: usize,
) -> Result<ConvHead, GraphError> {
    let bound = libm::sqrt(1.0 / (c_in * k) as f64);
    let data: Vec<f64> = (0..k * c_in * c_out).map(|_| rng.uniform(-bound, bound)).collect();
    let w = params.register(
        &alloc::format!("{name}.w"),
        Tensor::from_vec(&[k, c_in, c_out], data).expect("conv init shape"),
    )?;
    let b = params.register(&alloc::format!("{name}.b"), Tensor::zeros(&[c_out]))?;
    Ok(ConvHead { w, b })
}

impl MaskingModule {
    pub fn init(
        params: &mut ParamSet,
        rng: &mut Rng,
        latent_dim: usize,
        kernel: usize,
    ) -> Result<Self, GraphError> {
        let dm_stack = [
            init_conv(params, rng, "mask.dm0", kernel, latent_dim, latent_dim)?,
            init_conv(params, rng, "mask.dm1", kernel, latent_dim, latent_dim)?,
        ];
        let erm_stack = [
            init_conv(params, rng, "mask.erm0", kernel, latent_dim, latent_dim)?,
            init_conv(params, rng, "mask.erm1", kernel, latent_dim, latent_dim)?,
        ];
        let prelu_alpha =
            params.register("mask.prelu_alpha", Tensor::from_vec(&[1], [0.25].to_vec()).unwrap())?;
        Ok(MaskingModule { dm_stack, erm_stack, prelu_alpha, latent_dim, kernel })
    }

    fn stack(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        stack: &[ConvHead; 2],
        x: NodeId,
    ) -> Result<NodeId, GraphError> {
        let w0 = g.param(params, stack[0].w);
        let b0 = g.param(params, stack[0].b);
        let h = g.conv1d(x, w0, b0)?;
        let h = g.relu(h);
        let w1 = g.param(params, stack[1].w);
        let b1 = g.param(params, stack[1].b);
        let out = g.conv1d(h, w1, b1)?;
        Ok(g.relu(out))
    }

    /// Forward pass over a T x latent_dim representation. Returns
    /// (estimate, dm_hat, erm_hat); estimate = PReLU(erm .* dm .* y + y).
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        y: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId), GraphError> {
        let dm_hat = self.stack(g, params, &self.dm_stack, y)?;
        let y_d = g.mul(y, dm_hat)?;
        let erm_hat = self.stack(g, params, &self.erm_stack, y_d)?;
        let masked = g.mul(erm_hat, y_d)?;
        let residual = g.add(masked, y)?;
        let alpha = g.param(params, self.prelu_alpha);
        let estimate = g.prelu(residual, alpha)?;
        Ok((estimate, dm_hat, erm_hat))
    }
}
