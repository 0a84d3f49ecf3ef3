//! Spectral-Galerkin Monte Carlo for jump-diffusion SDEs on a Hilbert space.
//!
//! The state space is modelled through a diagonal basis: a compact operator
//! `J` with eigenvalues `λ_k`, a dissipative linearity `A` with eigenvalues
//! `μ_k`, and coefficient vectors in the common eigenbasis.

pub mod cli;
pub mod coefficients;
pub mod diagnostics;
pub mod generator;
pub mod noise;
pub mod quadrature;
pub mod simulator;
pub mod spectral_space;
