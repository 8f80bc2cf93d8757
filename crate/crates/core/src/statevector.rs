//! Dense statevector engine over the five-register layout
//! `index | sign | data | reference | flag`.
//!
//! Basis labels are little-endian: the index register occupies the lowest bits
//! and the flag qubit the highest one.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

/// Default maximum number of simulated qubits (2^26 amplitudes, about 1 GiB).
pub const DEFAULT_QUBIT_CAP: usize = 26;

/// Probability below which a postselection is treated as impossible.
pub const POSTSELECT_FLOOR: f64 = 1e-14;

/// Squared magnitude above which a basis state counts as populated.
pub(crate) const POPULATED: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegisterKind {
    Index,
    Sign,
    Data,
    Reference,
    Flag,
}

impl RegisterKind {
    pub const ALL: [RegisterKind; 5] = [
        RegisterKind::Index,
        RegisterKind::Sign,
        RegisterKind::Data,
        RegisterKind::Reference,
        RegisterKind::Flag,
    ];
}

/// A contiguous run of qubits inside a basis label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Register {
    pub offset: usize,
    pub width: usize,
}

impl Register {
    pub fn mask(&self) -> usize {
        ((1usize << self.width) - 1) << self.offset
    }

    pub fn extract(&self, label: usize) -> usize {
        (label >> self.offset) & ((1usize << self.width) - 1)
    }

    /// Qubit position of bit `bit` of this register.
    pub fn qubit(&self, bit: usize) -> usize {
        debug_assert!(bit < self.width);
        self.offset + bit
    }

    pub fn qubits(&self) -> impl Iterator<Item = usize> {
        self.offset..self.offset + self.width
    }
}

/// Widths and offsets of the five registers; `q = m + 2n + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterLayout {
    index_width: usize,
    data_width: usize,
}

impl RegisterLayout {
    pub fn new(index_width: usize, data_width: usize) -> Self {
        Self {
            index_width,
            data_width,
        }
    }

    pub fn index_width(&self) -> usize {
        self.index_width
    }

    pub fn data_width(&self) -> usize {
        self.data_width
    }

    pub fn total_qubits(&self) -> usize {
        self.index_width + 2 * self.data_width + 2
    }

    pub fn register(&self, kind: RegisterKind) -> Register {
        let (m, n) = (self.index_width, self.data_width);
        match kind {
            RegisterKind::Index => Register { offset: 0, width: m },
            RegisterKind::Sign => Register { offset: m, width: 1 },
            RegisterKind::Data => Register { offset: m + 1, width: n },
            RegisterKind::Reference => Register { offset: m + 1 + n, width: n },
            RegisterKind::Flag => Register { offset: m + 1 + 2 * n, width: 1 },
        }
    }

    /// Single qubit of the flag register.
    pub fn flag_qubit(&self) -> usize {
        self.register(RegisterKind::Flag).offset
    }

    pub fn sign_qubit(&self) -> usize {
        self.register(RegisterKind::Sign).offset
    }

    /// Mask and value selecting basis labels that match every `(register, value)` pair.
    pub fn pattern(&self, pattern: &[(RegisterKind, usize)]) -> Result<(usize, usize)> {
        let mut mask = 0usize;
        let mut value = 0usize;
        for &(kind, v) in pattern {
            let reg = self.register(kind);
            if mask & reg.mask() != 0 {
                return Err(Error::Layout(format!("register {kind:?} appears twice in pattern")));
            }
            if reg.width < usize::BITS as usize && v >> reg.width != 0 {
                return Err(Error::Layout(format!(
                    "value {v} does not fit in {kind:?} register of width {}",
                    reg.width
                )));
            }
            mask |= reg.mask();
            value |= v << reg.offset;
        }
        Ok((mask, value))
    }
}

/// Result of a projective measurement, exact or sampled.
#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    pub probability: f64,
    pub collapsed: Option<StateVector>,
    pub counts: BTreeMap<u64, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
    layout: RegisterLayout,
}

impl StateVector {
    /// All-zeros state for `layout`, refusing layouts above `qubit_cap` qubits.
    pub fn init_zero(layout: RegisterLayout, qubit_cap: usize) -> Result<Self> {
        let q = layout.total_qubits();
        if q > qubit_cap || q >= usize::BITS as usize - 1 {
            return Err(Error::Resource { qubits: q, cap: qubit_cap });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1usize << q];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { amps, layout })
    }

    /// Wraps explicit amplitudes; the length must be `2^q` for the layout.
    pub fn from_amplitudes(layout: RegisterLayout, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1usize << layout.total_qubits() {
            return Err(Error::Layout(format!(
                "expected {} amplitudes, got {}",
                1usize << layout.total_qubits(),
                amps.len()
            )));
        }
        Ok(Self { amps, layout })
    }

    pub fn layout(&self) -> RegisterLayout {
        self.layout
    }

    pub fn num_qubits(&self) -> usize {
        self.layout.total_qubits()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, label: usize) -> Complex64 {
        self.amps[label]
    }

    /// Basis label assembled from per-register values; unlisted registers are zero.
    pub fn label(&self, values: &[(RegisterKind, usize)]) -> Result<usize> {
        self.layout.pattern(values).map(|(_, v)| v)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    /// Prepares `M^-1/2 sum_{i<M} |i>` on the index register of a fresh state.
    ///
    /// For `M = 2^m` this is `H^{(x)m}`; otherwise a Householder reflection that
    /// maps `|0>` to the uniform state. Both are self-inverse.
    pub fn apply_uniform_index(&mut self, rows: usize) -> Result<()> {
        self.check_rows(rows)?;
        let index_mask = self.layout.register(RegisterKind::Index).mask();
        if self
            .amps
            .iter()
            .enumerate()
            .any(|(b, a)| b & index_mask != 0 && a.norm_sqr() > POPULATED)
        {
            return Err(Error::Layout("index register is not in the zero state".into()));
        }
        self.uniform_index_unitary(rows);
        Ok(())
    }

    /// Applies the inverse of [`apply_uniform_index`](Self::apply_uniform_index) to an arbitrary state.
    pub fn apply_uniform_index_inverse(&mut self, rows: usize) -> Result<()> {
        self.check_rows(rows)?;
        self.uniform_index_unitary(rows);
        Ok(())
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        let m = self.layout.index_width();
        if rows == 0 || rows > 1usize << m {
            return Err(Error::Layout(format!(
                "{rows} data points do not fit an index register of width {m}"
            )));
        }
        Ok(())
    }

    fn uniform_index_unitary(&mut self, rows: usize) {
        let m = self.layout.index_width();
        let dim = 1usize << m;
        if rows == 1 {
            return;
        }
        if rows == dim {
            for q in 0..m {
                self.apply_hadamard(q);
            }
            return;
        }
        // U = I - 2 w w^T / |w|^2 with w = e_0 - u, u uniform over the first `rows` labels.
        let u = 1.0 / (rows as f64).sqrt();
        let w_norm_sqr = 2.0 - 2.0 * u;
        for chunk in self.amps.chunks_exact_mut(dim) {
            let mut dot = chunk[0] * (1.0 - u);
            for a in &chunk[1..rows] {
                dot -= *a * u;
            }
            let coef = dot * (2.0 / w_norm_sqr);
            chunk[0] -= coef * (1.0 - u);
            for a in &mut chunk[1..rows] {
                *a += coef * u;
            }
        }
    }

    pub fn apply_hadamard(&mut self, qubit: usize) {
        let stride = 1usize << qubit;
        let s = FRAC_1_SQRT_2;
        for block in self.amps.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = (x + y) * s;
                *b = (x - y) * s;
            }
        }
    }

    /// Hadamard on every qubit of `register`.
    pub fn apply_hadamard_layer(&mut self, register: RegisterKind) {
        for q in self.layout.register(register).qubits() {
            self.apply_hadamard(q);
        }
    }

    pub fn apply_x(&mut self, target: usize) {
        self.apply_controlled_x(0, target);
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        self.apply_controlled_x(1 << control, target);
    }

    pub fn apply_toffoli(&mut self, c1: usize, c2: usize, target: usize) {
        self.apply_controlled_x((1 << c1) | (1 << c2), target);
    }

    fn apply_controlled_x(&mut self, controls: usize, target: usize) {
        let t = 1usize << target;
        debug_assert_eq!(controls & t, 0, "target cannot be a control");
        for b in 0..self.amps.len() {
            if b & t == 0 && b & controls == controls {
                self.amps.swap(b, b | t);
            }
        }
    }

    /// Controlled-Z: negates amplitudes where both qubits are 1.
    pub fn apply_cz(&mut self, control: usize, target: usize) -> Result<()> {
        if control == target {
            return Err(Error::Layout("controlled-Z needs two distinct qubits".into()));
        }
        let mask = (1usize << control) | (1usize << target);
        for (b, a) in self.amps.iter_mut().enumerate() {
            if b & mask == mask {
                *a = -*a;
            }
        }
        Ok(())
    }

    /// Moves the amplitude of basis `b` to `f(b)`.
    ///
    /// `f` must be a bijection; this is verified in debug builds for `q <= 16`.
    pub fn apply_permutation<F>(&mut self, f: F) -> Result<()>
    where
        F: Fn(usize) -> usize,
    {
        let len = self.amps.len();
        if cfg!(debug_assertions) && self.num_qubits() <= 16 {
            let mut seen = vec![false; len];
            for b in 0..len {
                let image = f(b);
                if image >= len || std::mem::replace(&mut seen[image], true) {
                    return Err(Error::NotBijective);
                }
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        for (b, a) in self.amps.iter().enumerate() {
            let image = f(b);
            if image >= len {
                return Err(Error::NotBijective);
            }
            out[image] = *a;
        }
        self.amps = out;
        Ok(())
    }

    /// In-place variant for involutions `f(f(b)) = b`, which covers every XOR oracle.
    pub(crate) fn apply_involution<F>(&mut self, f: F)
    where
        F: Fn(usize) -> usize,
    {
        for b in 0..self.amps.len() {
            let image = f(b);
            debug_assert_eq!(f(image), b, "map is not an involution");
            if image > b {
                self.amps.swap(b, image);
            }
        }
    }

    /// Exact probability of observing `pattern` on the listed registers.
    pub fn probability_of(&self, pattern: &[(RegisterKind, usize)]) -> Result<f64> {
        let (mask, value) = self.layout.pattern(pattern)?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(b, _)| b & mask == value)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Projects onto `pattern` and renormalizes.
    pub fn postselect(&self, pattern: &[(RegisterKind, usize)]) -> Result<MeasurementOutcome> {
        let (mask, value) = self.layout.pattern(pattern)?;
        let probability: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(b, _)| b & mask == value)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if probability < POSTSELECT_FLOOR {
            return Err(Error::PostselectionImpossible { probability });
        }
        let scale = 1.0 / probability.sqrt();
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(b, a)| {
                if b & mask == value {
                    *a * scale
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Ok(MeasurementOutcome {
            probability,
            collapsed: Some(Self { amps, layout: self.layout }),
            counts: BTreeMap::new(),
        })
    }

    /// Draws `shots` i.i.d. measurements of `registers` (first register in the low bits
    /// of each key) and tallies them.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        registers: &[RegisterKind],
        shots: u64,
        rng: &mut R,
    ) -> Result<MeasurementOutcome> {
        if shots == 0 {
            return Err(Error::InvalidArgument("shots must be at least 1".into()));
        }
        let regs: Vec<Register> = registers.iter().map(|&k| self.layout.register(k)).collect();
        let mut marginal: BTreeMap<u64, f64> = BTreeMap::new();
        for (b, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let mut key = 0u64;
            let mut shift = 0;
            for r in &regs {
                key |= (r.extract(b) as u64) << shift;
                shift += r.width;
            }
            *marginal.entry(key).or_insert(0.0) += p;
        }
        let counts = multinomial(&marginal, shots, rng)?;
        Ok(MeasurementOutcome {
            probability: 1.0,
            collapsed: None,
            counts,
        })
    }

    /// Samples whether each of `shots` full measurements lands on `pattern`.
    ///
    /// Key 1 counts hits and key 0 misses; `probability` carries the exact value.
    pub fn sample_pattern<R: Rng + ?Sized>(
        &self,
        pattern: &[(RegisterKind, usize)],
        shots: u64,
        rng: &mut R,
    ) -> Result<MeasurementOutcome> {
        if shots == 0 {
            return Err(Error::InvalidArgument("shots must be at least 1".into()));
        }
        let probability = self.probability_of(pattern)?;
        let hits = binomial(shots, probability, rng)?;
        let mut counts = BTreeMap::new();
        if hits > 0 {
            counts.insert(1, hits);
        }
        if hits < shots {
            counts.insert(0, shots - hits);
        }
        Ok(MeasurementOutcome {
            probability,
            collapsed: None,
            counts,
        })
    }
}

pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> Result<u64> {
    if n == 0 {
        return Ok(0);
    }
    let p = p.clamp(0.0, 1.0);
    let dist = Binomial::new(n, p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(dist.sample(rng))
}

fn multinomial<R: Rng + ?Sized>(
    probs: &BTreeMap<u64, f64>,
    shots: u64,
    rng: &mut R,
) -> Result<BTreeMap<u64, u64>> {
    let mut counts = BTreeMap::new();
    let mut remaining = shots;
    let mut mass: f64 = probs.values().sum();
    let last = probs.len().saturating_sub(1);
    for (pos, (&key, &p)) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let c = if pos == last {
            remaining
        } else {
            binomial(remaining, if mass > 0.0 { p / mass } else { 0.0 }, rng)?
        };
        if c > 0 {
            counts.insert(key, c);
        }
        remaining -= c;
        mass -= p;
    }
    Ok(counts)
}
