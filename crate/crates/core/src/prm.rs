//! Lazily realized Poisson random measures on time × mark strips and the
//! band split into a lower and an upper measure.
//!
//! A measure is cut into unit cells `[k, k+1) × [l, l+1)`. Each cell owns a
//! ChaCha stream keyed by `(seed, tag, k, l)`, so any rectangle can be
//! re-queried in any order with identical results.

use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use std::collections::HashMap;

/// Atom `(time, mark)`.
pub type Point = (f64, f64);

/// Handle on one Lebesgue-intensity PRM on `ℝ × ℝ₊`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrmStream {
    seed: u64,
    tag: u64,
}

/// Tags separating the independent measures of one simulation.
pub mod tags {
    pub const PI: u64 = 0x5052_4d5f_5049;
    pub const PI_BAR: u64 = 0x50_52_4d_5f_42_41_52;
    pub const TAIL: u64 = 0x5441_494c;
    pub const AUX: u64 = 0x41_55_58;
}

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG keyed by four words, used wherever a reproducible side stream is needed.
pub fn keyed_rng(a: u64, b: u64, c: u64, d: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (i, w) in [a, b, c, d].into_iter().enumerate() {
        key[8 * i..8 * i + 8].copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

impl PrmStream {
    pub fn new(seed: u64, tag: u64) -> Self {
        PrmStream { seed, tag }
    }

    /// An independent measure derived from this one (e.g. per regeneration block).
    pub fn derive(&self, index: u64) -> Self {
        PrmStream { seed: splitmix(self.seed ^ splitmix(index.wrapping_add(0x51))), tag: self.tag }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Points of the unit cell with time index `strip` and mark index `layer`, sorted by time.
    pub fn cell(&self, strip: i64, layer: u64) -> Vec<Point> {
        let mut rng = keyed_rng(self.seed, self.tag, strip as u64, layer);
        let n = Poisson::new(1.0).expect("unit mean").sample(&mut rng) as usize;
        let mut pts: Vec<Point> = (0..n).map(|_| (strip as f64 + rng.random::<f64>(), layer as f64 + rng.random::<f64>())).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }

    /// All points in `(t0, t1] × [0, zmax]`, sorted by time.
    pub fn sample_strip(&self, t0: f64, t1: f64, zmax: f64) -> Result<Vec<Point>> {
        if !zmax.is_finite() {
            return Err(Error::UnboundedMark);
        }
        if t1 <= t0 || zmax <= 0.0 {
            return Ok(Vec::new());
        }
        let layers = zmax.ceil() as u64;
        let mut out = Vec::new();
        for strip in (t0.floor() as i64)..=(t1.ceil() as i64) {
            for layer in 0..layers {
                out.extend(self.cell(strip, layer).into_iter().filter(|&(t, z)| t > t0 && t <= t1 && z <= zmax));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out)
    }

    pub fn cursor(&self) -> PrmCursor {
        PrmCursor { stream: *self, cache: HashMap::new(), strip: i64::MIN }
    }
}

/// Sequential access to a point set in time order under a varying mark bound.
pub trait PointSource {
    /// First point with `t0 < t ≤ t1` and mark `≤ zmax`.
    fn first_in(&mut self, t0: f64, t1: f64, zmax: f64) -> Result<Option<Point>>;
}

/// The zero measure.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPoints;

impl PointSource for NoPoints {
    fn first_in(&mut self, _: f64, _: f64, _: f64) -> Result<Option<Point>> {
        Ok(None)
    }
}

/// Strip-caching reader of a [`PrmStream`]; cheap when queries move forward in time.
///
/// Each cached strip holds the time-sorted union of its lowest `layers` cells.
#[derive(Debug, Clone)]
pub struct PrmCursor {
    stream: PrmStream,
    cache: HashMap<i64, (u64, Vec<Point>)>,
    strip: i64,
}

impl PrmCursor {
    fn strip(&mut self, strip: i64, layers: u64) -> &[Point] {
        if strip > self.strip {
            self.cache.retain(|&k, _| k >= strip);
            self.strip = strip;
        }
        let s = self.stream;
        let entry = self.cache.entry(strip).or_insert_with(|| (0, Vec::new()));
        if entry.0 < layers {
            // grow geometrically so slowly rising bounds do not re-sort every query
            let target = layers.max(entry.0 * 2).max(4);
            for layer in entry.0..target {
                entry.1.extend(s.cell(strip, layer));
            }
            entry.1.sort_by(|a, b| a.0.total_cmp(&b.0));
            entry.0 = target;
        }
        &entry.1
    }
}

impl PointSource for PrmCursor {
    fn first_in(&mut self, t0: f64, t1: f64, zmax: f64) -> Result<Option<Point>> {
        if !zmax.is_finite() {
            return Err(Error::UnboundedMark);
        }
        if t1 <= t0 || zmax <= 0.0 {
            return Ok(None);
        }
        let layers = zmax.ceil() as u64;
        let mut strip = t0.floor() as i64;
        while (strip as f64) < t1 {
            let pts = self.strip(strip, layers);
            let start = pts.partition_point(|p| p.0 <= t0);
            for &p in &pts[start..] {
                if p.0 > t1 {
                    return Ok(None);
                }
                if p.1 <= zmax {
                    return Ok(Some(p));
                }
            }
            strip += 1;
        }
        Ok(None)
    }
}

/// Lower split measure `π↓` of two measures along a band `[f₁(s), f₂(s))`.
///
/// Points of `π` outside the band and points of `π̄` inside it.
pub struct SplitDown<'a, B> {
    pi: PrmCursor,
    pibar: PrmCursor,
    band: &'a B,
}

impl<'a, B: Fn(f64) -> (f64, f64)> SplitDown<'a, B> {
    pub fn new(pi: PrmStream, pibar: PrmStream, band: &'a B) -> Self {
        SplitDown { pi: pi.cursor(), pibar: pibar.cursor(), band }
    }
}

fn in_band(z: f64, (lo, hi): (f64, f64)) -> bool {
    z >= lo && z < hi
}

impl<B: Fn(f64) -> (f64, f64)> PointSource for SplitDown<'_, B> {
    fn first_in(&mut self, t0: f64, t1: f64, zmax: f64) -> Result<Option<Point>> {
        let mut from_pi = t0;
        let mut from_bar = t0;
        let mut p = self.pi.first_in(from_pi, t1, zmax)?;
        let mut q = self.pibar.first_in(from_bar, t1, zmax)?;
        loop {
            match (p, q) {
                (None, None) => return Ok(None),
                (Some(a), b) if b.is_none_or(|b| a.0 <= b.0) => {
                    if !in_band(a.1, (self.band)(a.0)) {
                        return Ok(Some(a));
                    }
                    from_pi = a.0;
                    p = self.pi.first_in(from_pi, t1, zmax)?;
                }
                (_, Some(b)) => {
                    if in_band(b.1, (self.band)(b.0)) {
                        return Ok(Some(b));
                    }
                    from_bar = b.0;
                    q = self.pibar.first_in(from_bar, t1, zmax)?;
                }
                _ => unreachable!(),
            }
        }
    }
}

/// Materialized split of a window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitStreams {
    /// `π↓` points.
    pub down: Vec<Point>,
    /// `π↑` points (marks shifted down by `f₁`).
    pub up: Vec<Point>,
    /// How many of `up` come from `π` (marks below the band width).
    pub up_from_pi: usize,
    /// Band `(f₁, f₂)` evaluated at every sampled point time.
    pub band: Vec<(f64, f64, f64)>,
}

/// Splits `π, π̄` on `(t0, t1]` along `[f₁, f₂)`.
///
/// Only source points with raw mark `≤ zmax` are materialized, so `down` is
/// exact below `zmax` and `up` holds the images of those points.
pub fn split(
    pi: &PrmStream,
    pibar: &PrmStream,
    f1: &dyn Fn(f64) -> f64,
    f2: &dyn Fn(f64) -> f64,
    window: (f64, f64),
    zmax: f64,
) -> Result<SplitStreams> {
    let (t0, t1) = window;
    let check = |s: f64| -> Result<(f64, f64)> {
        let (a, b) = (f1(s), f2(s));
        if a > b || a < 0.0 {
            return Err(Error::Band { t: s, lower: a, upper: b });
        }
        Ok((a, b))
    };
    let mut out = SplitStreams::default();
    for (s, z) in pi.sample_strip(t0, t1, zmax)? {
        let (a, b) = check(s)?;
        out.band.push((s, a, b));
        if in_band(z, (a, b)) {
            out.up.push((s, z - a));
            out.up_from_pi += 1;
        } else {
            out.down.push((s, z));
        }
    }
    for (s, z) in pibar.sample_strip(t0, t1, zmax)? {
        let (a, b) = check(s)?;
        out.band.push((s, a, b));
        if in_band(z, (a, b)) {
            out.down.push((s, z));
        } else if z >= b {
            out.up.push((s, z - a));
        }
    }
    out.down.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.up.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.band.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.band.dedup_by(|a, b| a.0 == b.0);
    Ok(out)
}
