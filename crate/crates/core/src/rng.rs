//! Counter-based random numbers.
//!
//! Every Wiener increment is a pure function of `(seed, path, step,
//! coordinate)`: each step gets its own Philox4x32-10 counter block, and the
//! coordinates of that step are drawn from it in order. Paths can therefore
//! run on any thread in any order and still see the same increments.

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 bijection with 10 rounds.
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(W0);
            key[1] = key[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, ctr[0]);
        let (hi1, lo1) = mulhilo(M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator over one `(seed, path, step, stream)` cell. The first counter
/// word enumerates blocks within the cell.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: [u32; 2],
    ctr: [u32; 4],
    buf: [u32; 4],
    used: usize,
}

impl CounterRng {
    /// `stream` separates independent uses of the same step (e.g. the
    /// Wiener increments and an auxiliary uniform).
    pub fn new(seed: u64, path: u64, step: u64, stream: u8) -> Self {
        let k = splitmix64(splitmix64(seed) ^ (path >> 32));
        Self {
            key: [k as u32, (k >> 32) as u32],
            ctr: [u32::from(stream) << 24, step as u32, (step >> 32) as u32, path as u32],
            buf: [0; 4],
            used: 4,
        }
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.buf = philox4x32_10(self.ctr, self.key);
            self.ctr[0] = self.ctr[0].wrapping_add(1);
            self.used = 0;
        }
        let v = self.buf[self.used];
        self.used += 1;
        v
    }

    fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        rand_core::impls::fill_bytes_via_next(self, dst)
    }
}

/// Supplier of Wiener increments for one path.
pub trait IncrementSource {
    /// Fills `out` with independent `N(0, dt)` increments for step `step`.
    fn increments(&mut self, step: u64, dt: f64, out: &mut [f64]);

    /// `(seed, path)` of the underlying stream, if seeded.
    fn provenance(&self) -> Option<(u64, u64)> {
        None
    }
}

/// Seeded increments of one ensemble path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseStream {
    pub seed: u64,
    pub path: u64,
    /// Adds `bias · dt` to coordinate 0. Nonzero only for negative controls.
    pub bias: f64,
}

impl NoiseStream {
    pub fn new(seed: u64, path: u64) -> Self {
        Self { seed, path, bias: 0.0 }
    }

    pub fn with_bias(self, bias: f64) -> Self {
        Self { bias, ..self }
    }

    /// Auxiliary generator for `step`, independent of the increments.
    pub fn aux_rng(&self, step: u64) -> CounterRng {
        CounterRng::new(self.seed, self.path, step, 1)
    }
}

impl IncrementSource for NoiseStream {
    fn increments(&mut self, step: u64, dt: f64, out: &mut [f64]) {
        let mut rng = CounterRng::new(self.seed, self.path, step, 0);
        let sd = dt.sqrt();
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *o = sd * z;
        }
        if let Some(first) = out.first_mut() {
            *first += self.bias * dt;
        }
    }

    fn provenance(&self) -> Option<(u64, u64)> {
        Some((self.seed, self.path))
    }
}

/// Coarse increments built by summing `factor` consecutive fine ones, so a
/// coarse run sees the same Brownian path as the fine run.
#[derive(Clone, Debug)]
pub struct Refined<S> {
    inner: S,
    factor: u64,
    scratch: Vec<f64>,
}

impl<S: IncrementSource> Refined<S> {
    pub fn new(inner: S, factor: u64) -> Self {
        assert!(factor >= 1, "refinement factor must be positive");
        Self {
            inner,
            factor,
            scratch: Vec::new(),
        }
    }
}

impl<S: IncrementSource> IncrementSource for Refined<S> {
    fn increments(&mut self, step: u64, dt: f64, out: &mut [f64]) {
        self.scratch.resize(out.len(), 0.0);
        out.fill(0.0);
        let fine = dt / self.factor as f64;
        for j in 0..self.factor {
            self.inner.increments(step * self.factor + j, fine, &mut self.scratch);
            for (o, s) in out.iter_mut().zip(&self.scratch) {
                *o += s;
            }
        }
    }

    fn provenance(&self) -> Option<(u64, u64)> {
        self.inner.provenance()
    }
}

impl<S: IncrementSource + ?Sized> IncrementSource for &mut S {
    fn increments(&mut self, step: u64, dt: f64, out: &mut [f64]) {
        (**self).increments(step, dt, out)
    }

    fn provenance(&self) -> Option<(u64, u64)> {
        (**self).provenance()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0; 4], [0; 2]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn increments_are_pure_functions_of_their_coordinates() {
        let mut a = NoiseStream::new(7, 3);
        let mut b = NoiseStream::new(7, 3);
        let (mut x, mut y) = (vec![0.0; 5], vec![0.0; 5]);
        a.increments(11, 1e-3, &mut x);
        b.increments(10, 1e-3, &mut y);
        b.increments(11, 1e-3, &mut y);
        assert_eq!(x, y);
        NoiseStream::new(7, 4).increments(11, 1e-3, &mut y);
        assert_ne!(x, y);
        NoiseStream::new(8, 3).increments(11, 1e-3, &mut y);
        assert_ne!(x, y);
    }

    #[test]
    fn increments_have_the_right_variance() {
        let mut s = NoiseStream::new(1, 0);
        let mut out = [0.0; 2];
        let (mut sum, mut sq, n) = (0.0, 0.0, 50_000);
        for step in 0..n {
            s.increments(step, 0.01, &mut out);
            for v in out {
                sum += v;
                sq += v * v;
            }
        }
        let m = (2 * n) as f64;
        assert!((sum / m).abs() < 4.0 * 0.1 / m.sqrt());
        assert!((sq / m / 0.01 - 1.0).abs() < 0.03);
    }

    #[test]
    fn refined_sums_fine_increments() {
        let mut fine = NoiseStream::new(5, 2);
        let mut coarse = Refined::new(NoiseStream::new(5, 2), 10);
        let mut c = [0.0; 3];
        coarse.increments(4, 1e-2, &mut c);
        let mut f = [0.0; 3];
        let mut total = [0.0; 3];
        for j in 40..50 {
            fine.increments(j, 1e-3, &mut f);
            for i in 0..3 {
                total[i] += f[i];
            }
        }
        for i in 0..3 {
            assert!((c[i] - total[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn bias_shifts_first_coordinate() {
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        NoiseStream::new(1, 1).increments(0, 0.5, &mut a);
        NoiseStream::new(1, 1).with_bias(2.0).increments(0, 0.5, &mut b);
        assert!((b[0] - a[0] - 1.0).abs() < 1e-12);
        assert_eq!(a[1], b[1]);
    }
}
