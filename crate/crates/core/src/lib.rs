//! Self-supervised speech enhancement, desk scale.
//!
//! Two variational autoencoders share a 64-dim latent space: a pre-training
//! autoencoder learns clean-speech representations together with a DM/ERM
//! masking module from a small paired pool, and a downstream autoencoder
//! trains on unlabeled reverberant mixtures against the frozen pre-trained
//! latents. Everything from corpus synthesis to metrics is a pure function
//! of explicit seeds.
//!
//! The crate is `no_std`-compatible (alloc required). Transcendental math
//! goes through `libm` in every configuration so results do not depend on
//! the platform's libm; the default `std` feature only switches the inner
//! kernels to hardware fused multiply-add.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
extern crate alloc;

pub mod checkpoint;
pub mod datagen;
pub mod dsp;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod masking;
pub mod metrics;
pub mod models;
mod mathfn;
pub mod optim;
pub mod rng;
pub mod train;
pub mod tensor;
