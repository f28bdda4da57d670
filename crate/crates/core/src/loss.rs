//! Loss terms. Graph builders for training plus plain-value forms used when
//! re-checking logged totals.
//!
//! The masking objective combines three terms,
//!   L = theta1 * L_KL + L_S + L_cyc,
//! where L_S is the mean-squared reconstruction error and the cycle term
//! repeats L_S plus a theta2-weighted latent re-encoding error, so the
//! reconstruction error intentionally enters the total twice.

use crate::graph::{Graph, GraphError, NodeId};

/// KL divergence of the latent posterior from N(0, I); see [`Graph::kl`].
pub fn kl_loss(g: &mut Graph, mu: NodeId, logvar: NodeId) -> Result<NodeId, GraphError> {
    g.kl(mu, logvar)
}

/// Mean-squared reconstruction error.
pub fn recon_loss(g: &mut Graph, target: NodeId, estimate: NodeId) -> Result<NodeId, GraphError> {
    g.mse(target, estimate)
}

/// Cycle loss: ||S - S_hat||^2 + theta2 * ||X_S - X_S_hat||^2 (both terms
/// mean-normalized), where the latent pair compares the representation that
/// produced the estimate against the re-encoded estimate.
pub fn cycle_loss(
    g: &mut Graph,
    target: NodeId,
    estimate: NodeId,
    latent: NodeId,
    latent_reencoded: NodeId,
    theta2: f64,
) -> Result<NodeId, GraphError> {
    let recon = g.mse(target, estimate)?;
    let latent_err = g.mse(latent, latent_reencoded)?;
    let weighted = g.scale(latent_err, theta2);
    g.add(recon, weighted)
}

/// Combined masking objective from already-built scalar terms.
pub fn masking_loss(
    g: &mut Graph,
    kl: NodeId,
    recon: NodeId,
    cycle: NodeId,
    theta1: f64,
) -> Result<NodeId, GraphError> {
    let weighted_kl = g.scale(kl, theta1);
    let partial = g.add(weighted_kl, recon)?;
    g.add(partial, cycle)
}

/// Plain-value form of [`masking_loss`] for log verification.
pub fn masking_loss_value(kl: f64, recon: f64, cycle: f64, theta1: f64) -> f64 {
    theta1 * kl + recon + cycle
}
