//! Wave packets adapted to tiles, in an exact Walsh model and a band-limited Fourier model.

use crate::error::{invalid, Error, Result};
use crate::grid::{GridSpec, Signal};
use crate::tiles::Tile;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PacketBackend {
    /// `2^{k/2} W_m(2^k x - n)` on `I_P`, with `W_m` the Walsh function in Paley order.
    Walsh,
    /// Raised-cosine spectral window `cos^{2 order}` of half-width `rho |ω|`, centered on `ω`
    /// and modulated to the center of `I_P`.
    Fourier { rho: f64, order: u32 },
}

impl Default for PacketBackend {
    fn default() -> Self {
        PacketBackend::Walsh
    }
}

impl PacketBackend {
    pub fn fourier_default() -> Self {
        PacketBackend::Fourier { rho: 0.5, order: 2 }
    }

    pub fn check(&self) -> Result<()> {
        if let PacketBackend::Fourier { rho, order } = *self {
            if !(rho > 0.0 && rho <= 0.5) {
                return invalid(format!("Fourier half-width fraction must lie in (0, 1/2], got {rho}"));
            }
            if order == 0 {
                return invalid("Fourier window order must be at least 1");
            }
        }
        Ok(())
    }

    pub fn is_real(&self) -> bool {
        matches!(self, PacketBackend::Walsh)
    }
}

/// A packet stored on a cyclic window `start .. start + values.len()` of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub start: usize,
    pub values: Vec<Complex64>,
}

impl Packet {
    pub fn to_signal(&self, g: &GridSpec) -> Signal {
        let n = g.n_samples();
        let mut s = Signal::zeros(g);
        for (o, v) in self.values.iter().enumerate() {
            s.samples[(self.start + o) % n] = *v;
        }
        s
    }

    /// `⟨f, φ⟩ = Σ f conj(φ) 2^{-J}`.
    pub fn coefficient(&self, f: &[Complex64]) -> Complex64 {
        let n = f.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (o, v) in self.values.iter().enumerate() {
            acc += f[(self.start + o) % n] * v.conj();
        }
        acc / n as f64
    }

    /// Adds `c · φ` into `out`.
    pub fn accumulate(&self, c: Complex64, out: &mut [Complex64]) {
        let n = out.len();
        for (o, v) in self.values.iter().enumerate() {
            out[(self.start + o) % n] += c * v;
        }
    }

    /// Adds `c · conj(φ)` into `out`.
    pub fn accumulate_conj(&self, c: Complex64, out: &mut [Complex64]) {
        let n = out.len();
        for (o, v) in self.values.iter().enumerate() {
            out[(self.start + o) % n] += c * v.conj();
        }
    }
}

fn reverse_bits(u: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        u.reverse_bits() >> (usize::BITS - bits)
    }
}

fn walsh_packet(p: &Tile, g: &GridSpec) -> Packet {
    let bits = g.j() - p.k;
    let len = 1usize << bits;
    let amp = (p.k as f64 * 0.5).exp2();
    let m = p.m as usize;
    let values = (0..len)
        .map(|u| {
            let sign = if (m & reverse_bits(u, bits)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            Complex64::new(sign * amp, 0.0)
        })
        .collect();
    Packet { start: p.space().start(g), values }
}

/// Integer frequencies of the shrunk component with their window weights.
pub fn fourier_window(p: &Tile, rho: f64, order: u32) -> Vec<(u64, f64)> {
    let width = (1u64 << p.k) as f64;
    let lo = p.m << p.k;
    let center = lo as f64 + 0.5 * (width - 1.0);
    let half = rho * width;
    (lo..lo + (1u64 << p.k))
        .filter_map(|nu| {
            let d = nu as f64 - center;
            if d.abs() < half {
                let w = (PI * d / (2.0 * half)).cos().powi(2 * order as i32);
                (w > 0.0).then_some((nu, w))
            } else {
                None
            }
        })
        .collect()
}

fn fourier_packet(p: &Tile, g: &GridSpec, rho: f64, order: u32) -> Result<Packet> {
    let window = fourier_window(p, rho, order);
    if window.is_empty() {
        return invalid(format!("Fourier half-width fraction {rho} leaves no frequency of tile {p:?}"));
    }
    let n = g.n_samples();
    let space = p.space();
    let center = (space.start(g) as f64 + 0.5 * space.len_samples(g) as f64) / n as f64;
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for &(nu, w) in &window {
        let phase = -2.0 * PI * nu as f64 * center;
        spectrum[nu as usize % n] += Complex64::from_polar(w, phase);
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let energy: f64 = spectrum.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
    let scale = 1.0 / energy.sqrt();
    Ok(Packet { start: 0, values: spectrum.into_iter().map(|z| z * scale).collect() })
}

pub fn packet(p: &Tile, b: &PacketBackend, g: &GridSpec) -> Result<Packet> {
    p.check(g)?;
    b.check()?;
    match *b {
        PacketBackend::Walsh => Ok(walsh_packet(p, g)),
        PacketBackend::Fourier { rho, order } => fourier_packet(p, g, rho, order),
    }
}

pub fn wave_packet(p: &Tile, b: &PacketBackend, g: &GridSpec) -> Result<Signal> {
    Ok(packet(p, b, g)?.to_signal(g))
}

/// `Σ f conj(g) 2^{-J}`.
pub fn inner_product(f: &Signal, h: &Signal) -> Result<Complex64> {
    if f.len() != h.len() {
        return Err(Error::LengthMismatch { expected: f.len(), got: h.len() });
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, b) in f.samples.iter().zip(&h.samples) {
        acc += a * b.conj();
    }
    Ok(acc / f.len() as f64)
}

/// Read-only packet store keyed by tile, built once for a fixed grid and backend.
#[derive(Debug, Clone)]
pub struct PacketCache {
    grid: GridSpec,
    backend: PacketBackend,
    map: HashMap<Tile, Packet>,
}

impl PacketCache {
    pub fn build(grid: GridSpec, backend: PacketBackend, tiles: impl IntoIterator<Item = Tile>) -> Result<Self> {
        let mut list: Vec<Tile> = tiles.into_iter().collect();
        list.sort();
        list.dedup();
        let built: Vec<(Tile, Packet)> = list
            .par_iter()
            .map(|t| packet(t, &backend, &grid).map(|p| (*t, p)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, backend, map: built.into_iter().collect() })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn backend(&self) -> PacketBackend {
        self.backend
    }

    pub fn get(&self, t: &Tile) -> Result<&Packet> {
        self.map.get(t).ok_or_else(|| Error::InvalidArgument(format!("tile {t:?} not in packet cache")))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `⟨f, φ_P⟩` for each tile, in input order.
    pub fn coefficients(&self, f: &Signal, tiles: &[Tile]) -> Result<Vec<Complex64>> {
        f.check_len(&self.grid)?;
        tiles.iter().map(|t| Ok(self.get(t)?.coefficient(&f.samples))).collect()
    }
}
