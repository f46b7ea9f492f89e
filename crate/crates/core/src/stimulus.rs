//! Bit sources and the ideal NRZ transmitter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Smallest oversampling ratio accepted by [`Waveform`].
pub const MIN_SAMPLES_PER_UI: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    /// Independent equiprobable bits from a seeded ChaCha stream.
    Uniform,
    /// x^7 + x^6 + 1, period 127.
    Prbs7,
    /// x^15 + x^14 + 1, period 32767.
    Prbs15,
    /// Caller-supplied bits.
    Explicit,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Uniform => "uniform",
            SourceKind::Prbs7 => "prbs7",
            SourceKind::Prbs15 => "prbs15",
            SourceKind::Explicit => "explicit",
        }
    }
}

impl std::str::FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SourceKind::Uniform),
            "prbs7" => Ok(SourceKind::Prbs7),
            "prbs15" => Ok(SourceKind::Prbs15),
            "explicit" => Ok(SourceKind::Explicit),
            other => Err(Error::Config(format!("unknown source kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitStream {
    pub bits: Vec<bool>,
    pub seed: u64,
    pub source_kind: SourceKind,
}

impl BitStream {
    pub fn explicit(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::EmptyStream);
        }
        Ok(BitStream {
            bits,
            seed: 0,
            source_kind: SourceKind::Explicit,
        })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Complemented copy of the stream.
    pub fn inverted(&self) -> BitStream {
        BitStream {
            bits: self.bits.iter().map(|b| !b).collect(),
            ..self.clone()
        }
    }

    pub fn ones_fraction(&self) -> f64 {
        self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len() as f64
    }
}

/// Fibonacci LFSR over the two highest taps `width` and `width - 1`.
#[derive(Debug, Clone)]
pub struct Lfsr {
    state: u32,
    width: u32,
}

impl Lfsr {
    /// A zero (or out-of-range) seed maps to the all-ones state; the all-zero
    /// state is the lock-up state of an XOR LFSR.
    pub fn new(width: u32, seed: u64) -> Self {
        let mask = (1u32 << width) - 1;
        let mut state = (seed as u32) & mask;
        if state == 0 {
            state = mask;
        }
        Lfsr { state, width }
    }

    pub fn prbs7(seed: u64) -> Self {
        Self::new(7, seed)
    }

    pub fn prbs15(seed: u64) -> Self {
        Self::new(15, seed)
    }

    pub fn next_bit(&mut self) -> bool {
        let w = self.width;
        let fb = ((self.state >> (w - 1)) ^ (self.state >> (w - 2))) & 1;
        self.state = ((self.state << 1) | fb) & ((1 << w) - 1);
        fb == 1
    }
}

pub fn generate_bits(kind: SourceKind, n: usize, seed: u64) -> Result<BitStream> {
    if n == 0 {
        return Err(Error::EmptyStream);
    }
    let bits = match kind {
        SourceKind::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.gen_bool(0.5)).collect()
        }
        SourceKind::Prbs7 => {
            let mut lfsr = Lfsr::prbs7(seed);
            (0..n).map(|_| lfsr.next_bit()).collect()
        }
        SourceKind::Prbs15 => {
            let mut lfsr = Lfsr::prbs15(seed);
            (0..n).map(|_| lfsr.next_bit()).collect()
        }
        SourceKind::Explicit => {
            return Err(Error::Config(
                "explicit streams are built with BitStream::explicit".into(),
            ))
        }
    };
    Ok(BitStream {
        bits,
        seed,
        source_kind: kind,
    })
}

/// Uniformly sampled analog signal. The sample grid is an integer
/// subdivision of the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    samples_per_ui: usize,
    ui: f64,
    t0: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, ui: f64, samples_per_ui: usize, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidWaveform("no samples".into()));
        }
        if !(ui.is_finite() && ui > 0.0) {
            return Err(Error::InvalidWaveform(format!("unit interval {ui} must be > 0")));
        }
        if samples_per_ui < MIN_SAMPLES_PER_UI {
            return Err(Error::InvalidWaveform(format!(
                "{samples_per_ui} samples per UI, need at least {MIN_SAMPLES_PER_UI}"
            )));
        }
        Ok(Waveform {
            samples,
            samples_per_ui,
            ui,
            t0,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Same time base, new sample values (must have the same length).
    pub fn with_samples(&self, samples: Vec<f64>) -> Waveform {
        debug_assert_eq!(samples.len(), self.samples.len());
        Waveform { samples, ..*self }
    }

    /// Drops the first `n` UI, keeping absolute times.
    pub fn skip_ui(&self, n: usize) -> Result<Waveform> {
        let k = n * self.samples_per_ui;
        if k >= self.samples.len() {
            return Err(Error::InvalidWaveform(format!(
                "cannot skip {n} UI of a {} UI record",
                self.n_ui()
            )));
        }
        Ok(Waveform {
            samples: self.samples[k..].to_vec(),
            t0: self.t0 + n as f64 * self.ui,
            ..*self
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ui(&self) -> f64 {
        self.ui
    }

    pub fn samples_per_ui(&self) -> usize {
        self.samples_per_ui
    }

    pub fn sample_period(&self) -> f64 {
        self.ui / self.samples_per_ui as f64
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Samples are cell-centred: sample `i` represents the sub-interval
    /// `[t0 + i*Ts, t0 + (i+1)*Ts)` and sits at its midpoint.
    pub fn time_at(&self, index: usize) -> f64 {
        self.t0 + (index as f64 + 0.5) * self.sample_period()
    }

    /// End of the record (right edge of the last cell).
    pub fn end_time(&self) -> f64 {
        self.t0 + self.samples.len() as f64 * self.sample_period()
    }

    pub fn n_ui(&self) -> f64 {
        self.samples.len() as f64 / self.samples_per_ui as f64
    }

    /// Linearly interpolated value at `t`; the half cells at either end hold
    /// the first/last sample. `None` outside `[t0, end_time()]`.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        if !(t >= self.t0 && t <= self.end_time()) {
            return None;
        }
        let x = (t - self.t0) / self.sample_period() - 0.5;
        let last = self.samples.len() - 1;
        if x <= 0.0 {
            return Some(self.samples[0]);
        }
        let i = x.floor() as usize;
        if i >= last {
            return Some(self.samples[last]);
        }
        let frac = x - i as f64;
        Some(self.samples[i] + (self.samples[i + 1] - self.samples[i]) * frac)
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Neg for Waveform {
    type Output = Waveform;

    fn neg(mut self) -> Waveform {
        self.samples.iter_mut().for_each(|v| *v = -*v);
        self
    }
}

/// Zero-rise-time NRZ: bit 1 holds `+amplitude`, bit 0 holds `-amplitude`,
/// one UI each, starting at t = 0.
pub fn nrz_modulate(bits: &BitStream, ui: f64, samples_per_ui: usize, amplitude: f64) -> Result<Waveform> {
    if bits.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut samples = Vec::with_capacity(bits.len() * samples_per_ui);
    for &b in &bits.bits {
        let level = if b { amplitude } else { -amplitude };
        samples.extend(std::iter::repeat_n(level, samples_per_ui));
    }
    Waveform::new(samples, ui, samples_per_ui, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stream_rejected() {
        assert_eq!(generate_bits(SourceKind::Uniform, 0, 1), Err(Error::EmptyStream));
        assert_eq!(BitStream::explicit(vec![]), Err(Error::EmptyStream));
    }

    #[test]
    fn uniform_is_reproducible_and_balanced() {
        let a = generate_bits(SourceKind::Uniform, 100_000, 42).unwrap();
        let b = generate_bits(SourceKind::Uniform, 100_000, 42).unwrap();
        assert_eq!(a, b);
        // 0.01 is 6.3 sigma of Binomial(1e5, 1/2)
        let f = a.ones_fraction();
        assert!((0.49..=0.51).contains(&f), "ones fraction {f}");
        let c = generate_bits(SourceKind::Uniform, 100_000, 43).unwrap();
        assert_ne!(a.bits, c.bits);
    }

    #[test]
    fn zero_seed_lfsr_does_not_lock_up() {
        let s = generate_bits(SourceKind::Prbs7, 200, 0).unwrap();
        assert!(s.bits.iter().any(|&b| b));
        assert!(s.bits.iter().any(|&b| !b));
    }

    #[test]
    fn nrz_levels() {
        let bits = BitStream::explicit(vec![false, true]).unwrap();
        let w = nrz_modulate(&bits, 1e-9, 16, 0.2).unwrap();
        assert_eq!(w.len(), 32);
        assert!(w.samples()[..16].iter().all(|&v| v == -0.2));
        assert!(w.samples()[16..].iter().all(|&v| v == 0.2));
    }

    #[test]
    fn nrz_all_ones_is_constant() {
        let bits = BitStream::explicit(vec![true; 10]).unwrap();
        let w = nrz_modulate(&bits, 1e-9, 64, 0.2).unwrap();
        assert!(w.samples().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn nrz_mean_scales_like_sqrt_n() {
        let amplitude = 0.2;
        for (n, seed) in [(1_000usize, 1u64), (10_000, 2), (100_000, 3)] {
            let bits = generate_bits(SourceKind::Uniform, n, seed).unwrap();
            let w = nrz_modulate(&bits, 1e-9, 16, amplitude).unwrap();
            // mean = A (2p - 1); sd of the mean is A / sqrt(n)
            let bound = 5.0 * amplitude / (n as f64).sqrt();
            assert!(w.mean().abs() < bound, "n={n} mean={}", w.mean());
        }
    }

    #[test]
    fn coarse_oversampling_rejected() {
        let bits = BitStream::explicit(vec![true]).unwrap();
        assert!(matches!(
            nrz_modulate(&bits, 1e-9, 8, 0.2),
            Err(Error::InvalidWaveform(_))
        ));
    }

    #[test]
    fn interpolated_value() {
        // sample period 1, samples at t = 0.5, 1.5, 2.5
        let w = Waveform::new(vec![0.0, 1.0, 3.0], 16.0, 16, 0.0).unwrap();
        assert_eq!(w.value_at(0.2), Some(0.0));
        assert_eq!(w.value_at(1.0), Some(0.5));
        assert_eq!(w.value_at(2.0), Some(2.0));
        assert_eq!(w.value_at(2.9), Some(3.0));
        assert_eq!(w.value_at(3.1), None);
        assert_eq!(w.value_at(-0.1), None);
    }

    /// Smallest p such that the sequence repeats with period p over its
    /// whole length.
    fn minimal_period(bits: &[bool]) -> usize {
        (1..bits.len())
            .find(|&p| (p..bits.len()).all(|i| bits[i] == bits[i - p]))
            .unwrap_or(bits.len())
    }

    fn check_prbs(kind: SourceKind, degree: usize, tap: usize, period: usize) {
        let s = generate_bits(kind, 2 * period, u64::MAX).unwrap().bits;
        // The output of an LFSR with characteristic polynomial
        // x^degree + x^tap + 1 obeys s[n] = s[n - degree] ^ s[n - tap].
        for n in degree..s.len() {
            assert_eq!(s[n], s[n - degree] ^ s[n - tap], "n={n}");
        }
        assert_eq!(minimal_period(&s), period);
        assert_eq!(s[..period], s[period..]);
        // maximal length: 2^(k-1) ones and 2^(k-1) - 1 zeros per period
        let ones = s[..period].iter().filter(|&&b| b).count();
        assert_eq!(ones, period.div_ceil(2));
    }

    #[test]
    fn prbs7_period() {
        check_prbs(SourceKind::Prbs7, 7, 6, 127);
    }

    #[test]
    fn prbs15_period() {
        check_prbs(SourceKind::Prbs15, 15, 14, 32_767);
    }

    #[test]
    fn prbs_all_seeds_share_the_cycle() {
        let reference = generate_bits(SourceKind::Prbs7, 254, 1).unwrap().bits;
        for seed in 2..128u64 {
            let s = generate_bits(SourceKind::Prbs7, 127, seed).unwrap().bits;
            assert!(
                (0..127).any(|k| s[..] == reference[k..k + 127]),
                "seed {seed} is off the maximal cycle"
            );
        }
    }

    #[test]
    fn skip_keeps_absolute_time() {
        let bits = BitStream::explicit(vec![false, true, true, false]).unwrap();
        let w = nrz_modulate(&bits, 1e-9, 16, 0.2).unwrap();
        let s = w.skip_ui(1).unwrap();
        assert_eq!(s.len(), 48);
        assert_eq!(s.t0(), 1e-9);
        assert_eq!(s.value_at(1.5e-9), w.value_at(1.5e-9));
        assert!(w.skip_ui(4).is_err());
    }

    #[test]
    fn lengths_are_exact() {
        let bits = generate_bits(SourceKind::Uniform, 37, 5).unwrap();
        let w = nrz_modulate(&bits, 1e-9, 24, 0.1).unwrap();
        assert_eq!(w.len(), 37 * 24);
        assert_eq!(w.n_ui(), 37.0);
    }

    proptest::proptest! {
        #[test]
        fn inversion_negates(seed: u64, n in 1usize..400, spu in 16usize..80, amp in 1e-3f64..2.0) {
            let bits = generate_bits(SourceKind::Uniform, n, seed).unwrap();
            let a = nrz_modulate(&bits, 1e-9, spu, amp).unwrap();
            let b = nrz_modulate(&bits.inverted(), 1e-9, spu, amp).unwrap();
            proptest::prop_assert!(a.samples().iter().zip(b.samples()).all(|(x, y)| *x == -*y));
        }

        #[test]
        fn generation_is_deterministic(seed: u64, n in 1usize..2000, k in 0usize..3) {
            let kind = [SourceKind::Uniform, SourceKind::Prbs7, SourceKind::Prbs15][k];
            proptest::prop_assert_eq!(generate_bits(kind, n, seed), generate_bits(kind, n, seed));
        }
    }
}
