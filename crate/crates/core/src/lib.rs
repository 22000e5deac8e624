//! Spectral solver and split-step simulator for normalized standing waves of
//! the Schrödinger equation with two competing Riesz-potential nonlinearities.

pub mod fft;
pub mod grid;
pub mod riesz;
pub mod functional;
pub mod fibering;
pub mod solver;
pub mod dynamics;
pub mod io;
