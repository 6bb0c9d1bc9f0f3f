//! Frame geometry, constellations and the delay-Doppler frame container.
//!
//! Index conventions used across the crate:
//!
//! * `k` is the Doppler index in `[0, N)`, `l` the delay index in `[0, M)`.
//! * Delay-Doppler frames flatten Doppler-major: element `k + N*l` holds `x[k, l]`.
//! * Time-frequency grids are stored symbol-major: element `n*M + m` holds `X[n, m]`.

use num_complex::Complex64;

use crate::error::{OtfsError, Result};
use crate::CVector;

/// Geometry of one OTFS frame.
///
/// The symbol time is always derived as `1 / delta_f`, so `T * delta_f == 1` holds by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtfsGrid {
    m: usize,
    n: usize,
    delta_f: f64,
    carrier: f64,
}

impl OtfsGrid {
    pub fn new(m: usize, n: usize, delta_f: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(OtfsError::config(format!(
                "grid needs M >= 1 and N >= 1, got M={m}, N={n}"
            )));
        }
        if !(delta_f.is_finite() && delta_f > 0.0) {
            return Err(OtfsError::config(format!(
                "subcarrier spacing must be positive, got {delta_f}"
            )));
        }
        Ok(OtfsGrid {
            m,
            n,
            delta_f,
            carrier: 0.0,
        })
    }

    /// Attach a carrier frequency. Metadata only; no computation depends on it.
    pub fn with_carrier(mut self, carrier_hz: f64) -> Self {
        self.carrier = carrier_hz;
        self
    }

    /// Number of delay bins.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of Doppler bins.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn symbol_time(&self) -> f64 {
        1.0 / self.delta_f
    }

    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    pub fn frame_size(&self) -> usize {
        self.m * self.n
    }

    /// Delay bin width `1 / (M * delta_f)` in seconds.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.m as f64 * self.delta_f)
    }

    /// Doppler bin width `1 / (N * T)` in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.n as f64 * self.symbol_time())
    }

    /// Flat Doppler-major index of `(k, l)`.
    #[inline]
    pub fn index(&self, k: usize, l: usize) -> usize {
        k + self.n * l
    }

    /// Inverse of [`OtfsGrid::index`].
    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.n, i / self.n)
    }
}

/// Size a grid from system requirements.
///
/// Requires `nu_max < delta_f < 1 / tau_max`; then `M = floor(bandwidth / delta_f)` and
/// `N = floor(latency * delta_f)`.
pub fn grid_from_requirements(
    bandwidth: f64,
    latency: f64,
    tau_max: f64,
    nu_max: f64,
    delta_f: f64,
) -> Result<OtfsGrid> {
    if !(nu_max < delta_f) {
        return Err(OtfsError::config(format!(
            "violated nu_max < delta_f ({nu_max} Hz >= {delta_f} Hz)"
        )));
    }
    if tau_max > 0.0 && !(delta_f < 1.0 / tau_max) {
        return Err(OtfsError::config(format!(
            "violated delta_f < 1/tau_max ({delta_f} Hz >= {} Hz)",
            1.0 / tau_max
        )));
    }
    // Guard against 499.99999 style rounding of exact quotients.
    let m = (bandwidth / delta_f + 1e-9).floor();
    let n = (latency * delta_f + 1e-9).floor();
    if m < 1.0 || n < 1.0 {
        return Err(OtfsError::config(format!(
            "requirements give an empty grid (M={m}, N={n})"
        )));
    }
    OtfsGrid::new(m as usize, n as usize, delta_f)
}

/// A unit-energy constellation.
///
/// Points are stored in label order: `points()[b]` is the point carrying bit pattern `b`,
/// most significant bit first.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    name: String,
    points: Vec<Complex64>,
    bits_per_symbol: usize,
}

impl Alphabet {
    /// Build from raw points in label order; energies are normalized to unit mean.
    pub fn from_points(name: impl Into<String>, raw: &[Complex64]) -> Result<Self> {
        let q = raw.len();
        if q < 2 || !q.is_power_of_two() {
            return Err(OtfsError::config(format!(
                "alphabet size must be a power of two >= 2, got {q}"
            )));
        }
        let energy = raw.iter().map(|p| p.norm_sqr()).sum::<f64>() / q as f64;
        if energy <= 0.0 {
            return Err(OtfsError::config("alphabet has zero energy"));
        }
        let scale = energy.sqrt().recip();
        Ok(Alphabet {
            name: name.into(),
            points: raw.iter().map(|p| p * scale).collect(),
            bits_per_symbol: q.trailing_zeros() as usize,
        })
    }

    /// Bit 0 maps to +1 and bit 1 to -1.
    pub fn bpsk() -> Self {
        Self::from_points(
            "bpsk",
            &[Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        )
        .expect("static constellation")
    }

    /// Gray-labelled QPSK.
    pub fn qpsk() -> Self {
        let pts = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .map(|(re, im)| Complex64::new(re, im));
        Self::from_points("qpsk", &pts).expect("static constellation")
    }

    /// Rectangular 4x2 8-QAM with Gray labels.
    ///
    /// Label bits `b2 b1 b0`: `b2 b1` Gray-select the in-phase level from
    /// `{-3, -1, +1, +3}` (00, 01, 11, 10) and `b0` selects quadrature `+1` (0) or `-1` (1).
    /// The raw energy of 6 is scaled away.
    pub fn qam8() -> Self {
        let mut pts = [Complex64::new(0.0, 0.0); 8];
        let in_phase = [(0b00, -3.0), (0b01, -1.0), (0b11, 1.0), (0b10, 3.0)];
        for (gray, re) in in_phase {
            for (bit, im) in [(0, 1.0), (1, -1.0)] {
                pts[(gray << 1) | bit] = Complex64::new(re, im);
            }
        }
        Self::from_points("8qam", &pts).expect("static constellation")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Self::bpsk()),
            "qpsk" | "4qam" => Ok(Self::qpsk()),
            "8qam" | "qam8" | "8-qam" => Ok(Self::qam8()),
            other => Err(OtfsError::config(format!("unknown alphabet '{other}'"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Label of point `index`. Points are kept in label order, so this is the identity; it
    /// exists to make the labelling explicit at call sites.
    pub fn label(&self, index: usize) -> u32 {
        index as u32
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    /// Append the bits of symbol `index` (MSB first).
    pub fn push_bits(&self, index: usize, out: &mut Vec<u8>) {
        let label = self.label(index);
        for b in (0..self.bits_per_symbol).rev() {
            out.push(((label >> b) & 1) as u8);
        }
    }

    /// Map a bit slice (MSB-first groups) to symbol indices.
    pub fn indices_from_bits(&self, bits: &[u8]) -> Result<Vec<usize>> {
        let k = self.bits_per_symbol;
        if bits.len() % k != 0 {
            return Err(OtfsError::LengthMismatch {
                expected: bits.len().div_ceil(k) * k,
                got: bits.len(),
            });
        }
        Ok(bits
            .chunks(k)
            .map(|c| {
                c.iter()
                    .fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)
            })
            .collect())
    }

    pub fn bits_from_indices(&self, indices: &[usize]) -> Vec<u8> {
        let mut out = Vec::with_capacity(indices.len() * self.bits_per_symbol);
        for &i in indices {
            self.push_bits(i, &mut out);
        }
        out
    }

    pub fn modulate(&self, indices: &[usize]) -> CVector {
        CVector::from_iterator(indices.len(), indices.iter().map(|&i| self.points[i]))
    }

    /// Index of the nearest point; ties resolve to the lowest label.
    pub fn slice(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Delay-Doppler symbols `x[k, l]` of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DDFrame {
    grid: OtfsGrid,
    data: Vec<Complex64>,
}

impl DDFrame {
    pub fn zeros(grid: OtfsGrid) -> Self {
        DDFrame {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.frame_size()],
        }
    }

    /// Build from a function of `(k, l)`.
    pub fn from_fn(grid: OtfsGrid, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut frame = Self::zeros(grid);
        for l in 0..grid.m() {
            for k in 0..grid.n() {
                frame.data[grid.index(k, l)] = f(k, l);
            }
        }
        frame
    }

    /// Inverse of [`DDFrame::vectorize`].
    pub fn devectorize(grid: OtfsGrid, x: &[Complex64]) -> Result<Self> {
        if x.len() != grid.frame_size() {
            return Err(OtfsError::LengthMismatch {
                expected: grid.frame_size(),
                got: x.len(),
            });
        }
        Ok(DDFrame {
            grid,
            data: x.to_vec(),
        })
    }

    pub fn grid(&self) -> &OtfsGrid {
        &self.grid
    }

    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[self.grid.index(k, l)]
    }

    pub fn set(&mut self, k: usize, l: usize, v: Complex64) {
        let i = self.grid.index(k, l);
        self.data[i] = v;
    }

    /// Flatten Doppler-major: element `k + N*l` is `x[k, l]`.
    pub fn vectorize(&self) -> CVector {
        CVector::from_column_slice(&self.data)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}
