//! Modem and channel model equivalence checks.

use nalgebra::RowDVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{build_symbol_matrix, build_symbol_matrix_frac};
use crate::channel::{build_h_fractional, build_h_integer, gen_gains, ChannelProfile, PathSpec};
use crate::error::Result;
use crate::grid::{DDFrame, OtfsGrid};
use crate::modem::{apply_td_channel_with, otfs_demodulate, otfs_modulate, PulseModel};
use crate::CVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainReport {
    pub instances: usize,
    /// Max `|y_chain - H x|` with the ideal pulse model.
    pub ideal_chain: f64,
    /// The same for the frame-cyclic pulse model (informational; it does not reproduce `H`).
    pub frame_cyclic_chain: f64,
    /// Max `|h' X - (H x)^T|` for integer taps.
    pub integer_symbol_matrix: f64,
    /// The same for fractional paths.
    pub fractional_symbol_matrix: f64,
}

impl ChainReport {
    pub const IDEAL_TOL: f64 = 1e-9;
    pub const INTEGER_TOL: f64 = 1e-10;
    pub const FRACTIONAL_TOL: f64 = 1e-9;

    pub fn passed(&self) -> bool {
        self.ideal_chain <= Self::IDEAL_TOL
            && self.integer_symbol_matrix <= Self::INTEGER_TOL
            && self.fractional_symbol_matrix <= Self::FRACTIONAL_TOL
    }
}

fn max_dev(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// A random integer-tap profile with distinct taps and `CN(0, 1/P)` gains.
pub fn random_integer_profile<R: Rng>(
    grid: OtfsGrid,
    max_paths: usize,
    rng: &mut R,
) -> Result<ChannelProfile> {
    let mn = grid.frame_size();
    let p = rng.random_range(1..=mn.min(max_paths));
    let mut bins: Vec<usize> = (0..mn).collect();
    for i in 0..p {
        let j = rng.random_range(i..mn);
        bins.swap(i, j);
    }
    let gains = gen_gains(p, rng.random());
    let paths = (0..p)
        .map(|i| PathSpec::integer(gains[i], bins[i] / grid.n(), (bins[i] % grid.n()) as i64))
        .collect();
    ChannelProfile::new(grid, paths)
}

/// Run `instances` random checks on grids with `M, N <= max_dim`.
pub fn chain_check(instances: usize, max_dim: usize, seed: u64) -> Result<ChainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ChainReport {
        instances,
        ideal_chain: 0.0,
        frame_cyclic_chain: 0.0,
        integer_symbol_matrix: 0.0,
        fractional_symbol_matrix: 0.0,
    };
    let cx = |rng: &mut ChaCha8Rng| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    };
    for _ in 0..instances {
        let grid = OtfsGrid::new(
            rng.random_range(1..=max_dim),
            rng.random_range(1..=max_dim),
            15e3,
        )?;
        let mn = grid.frame_size();
        let profile = random_integer_profile(grid, 6, &mut rng)?;
        let frame = DDFrame::from_fn(grid, |_, _| cx(&mut rng));
        let x = frame.vectorize();
        let hx = build_h_integer(&profile)?.into_matrix() * &x;
        let s = otfs_modulate(&frame);
        for (pulse, slot) in [
            (PulseModel::Ideal, &mut report.ideal_chain),
            (PulseModel::FrameCyclic, &mut report.frame_cyclic_chain),
        ] {
            let y =
                otfs_demodulate(&apply_td_channel_with(&s, &profile, pulse)?, &grid)?.vectorize();
            *slot = slot.max(max_dev(y.as_slice(), hx.as_slice()));
        }
        let hp = RowDVector::from_vec(profile.effective_gains());
        let lhs = (&hp * build_symbol_matrix(x.as_slice(), &profile)?.into_matrix()).transpose();
        report.integer_symbol_matrix = report
            .integer_symbol_matrix
            .max(max_dev(lhs.as_slice(), hx.as_slice()));

        let frac = ChannelProfile::new(
            grid,
            profile
                .paths()
                .iter()
                .map(|p| PathSpec {
                    frac_delay: rng.random_range(-0.49..0.5),
                    frac_doppler: rng.random_range(-0.49..0.5),
                    ..*p
                })
                .collect(),
        )?;
        let xf = CVector::from_fn(mn, |_, _| cx(&mut rng));
        let hx = build_h_fractional(&frac).into_matrix() * &xf;
        let hp = RowDVector::from_vec(frac.effective_gains());
        let lhs = (&hp * build_symbol_matrix_frac(xf.as_slice(), &frac)?.into_matrix()).transpose();
        report.fractional_symbol_matrix = report
            .fractional_symbol_matrix
            .max(max_dev(lhs.as_slice(), hx.as_slice()));
    }
    Ok(report)
}
