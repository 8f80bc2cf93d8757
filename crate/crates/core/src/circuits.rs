//! Named unitaries of the estimation pipelines, built on the statevector engine.
//!
//! Every classical-reversible block (data oracles, comparator) runs as a
//! basis-label permutation. The ripple MAJ ladder in [`comparator_gate_level`]
//! exists to cross-check the functional comparator gate by gate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::QuantizedDataset;
use crate::statevector::{RegisterKind, StateVector, POPULATED};

/// Widest comparator the gate-level ladder is built for.
pub const GATE_LEVEL_MAX_WIDTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Sign,
    Magnitude,
}

/// Read access to feature `j` of a dataset, either its sign bit or its magnitude bits.
#[derive(Debug, Clone, Copy)]
pub struct OracleSpec<'a> {
    dataset: &'a QuantizedDataset,
    feature: usize,
    kind: OracleKind,
}

impl<'a> OracleSpec<'a> {
    pub fn new(dataset: &'a QuantizedDataset, feature: usize, kind: OracleKind) -> Result<Self> {
        if feature >= dataset.cols() {
            return Err(Error::InvalidArgument(format!(
                "feature {feature} out of range for {} columns",
                dataset.cols()
            )));
        }
        Ok(Self { dataset, feature, kind })
    }

    pub fn sign(dataset: &'a QuantizedDataset, feature: usize) -> Result<Self> {
        Self::new(dataset, feature, OracleKind::Sign)
    }

    pub fn magnitude(dataset: &'a QuantizedDataset, feature: usize) -> Result<Self> {
        Self::new(dataset, feature, OracleKind::Magnitude)
    }

    fn target(&self) -> RegisterKind {
        match self.kind {
            OracleKind::Sign => RegisterKind::Sign,
            OracleKind::Magnitude => RegisterKind::Data,
        }
    }

    fn stored(&self, row: usize) -> usize {
        let v = self.dataset.value(row, self.feature);
        match self.kind {
            OracleKind::Sign => v.sign_bit() as usize,
            OracleKind::Magnitude => v.magnitude() as usize,
        }
    }
}

/// XORs the stored bits of row `i` into the target register, `|i>|t> -> |i>|t ^ x_i>`.
pub fn oracle_apply(state: &mut StateVector, spec: &OracleSpec<'_>) -> Result<()> {
    let layout = state.layout();
    let target = layout.register(spec.target());
    let expected = match spec.kind {
        OracleKind::Sign => 1,
        OracleKind::Magnitude => spec.dataset.bits() as usize,
    };
    if target.width != expected {
        return Err(Error::Layout(format!(
            "{:?} oracle needs a {expected}-qubit target, layout has {}",
            spec.kind, target.width
        )));
    }
    let index = layout.register(RegisterKind::Index);
    let rows = spec.dataset.rows();
    if rows > 1 << index.width {
        return Err(Error::Layout(format!(
            "{rows} rows do not fit an index register of width {}",
            index.width
        )));
    }
    if let Some((b, _)) = state
        .amplitudes()
        .iter()
        .enumerate()
        .find(|(b, a)| index.extract(*b) >= rows && a.norm_sqr() > POPULATED)
    {
        return Err(Error::DataAccess { index: index.extract(b), rows });
    }
    let table: Vec<usize> = (0..1usize << index.width)
        .map(|i| if i < rows { spec.stored(i) << target.offset } else { 0 })
        .collect();
    state.apply_involution(|b| b ^ table[index.extract(b)]);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparatorMode {
    Functional,
    GateLevel,
}

/// The comparator flips the flag iff `a > b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparator {
    mode: ComparatorMode,
    width: usize,
}

impl Comparator {
    pub fn functional(width: usize) -> Self {
        Self {
            mode: ComparatorMode::Functional,
            width,
        }
    }

    pub fn gate_level(width: usize) -> Result<Self> {
        if width > GATE_LEVEL_MAX_WIDTH {
            return Err(Error::UnsupportedWidth {
                width,
                max: GATE_LEVEL_MAX_WIDTH,
            });
        }
        Ok(Self {
            mode: ComparatorMode::GateLevel,
            width,
        })
    }

    pub fn new(mode: ComparatorMode, width: usize) -> Result<Self> {
        match mode {
            ComparatorMode::Functional => Ok(Self::functional(width)),
            ComparatorMode::GateLevel => Self::gate_level(width),
        }
    }

    pub fn mode(&self) -> ComparatorMode {
        self.mode
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Flips the flag qubit iff the value of register `a` exceeds that of `b`.
///
/// The gate-level backend borrows the sign qubit as its carry ancilla, which
/// must be zero on every populated basis state and is returned to zero.
pub fn comparator_apply(
    state: &mut StateVector,
    a: RegisterKind,
    b: RegisterKind,
    backend: Comparator,
) -> Result<()> {
    let layout = state.layout();
    let (ra, rb) = (layout.register(a), layout.register(b));
    if ra.width != rb.width || ra.width != backend.width {
        return Err(Error::Layout(format!(
            "comparator width {} does not match registers of width {} and {}",
            backend.width, ra.width, rb.width
        )));
    }
    let flag = 1usize << layout.flag_qubit();
    if ra.mask() & flag != 0 || rb.mask() & flag != 0 || ra.mask() & rb.mask() != 0 {
        return Err(Error::Layout("comparator registers must be disjoint from each other and the flag".into()));
    }
    match backend.mode {
        ComparatorMode::Functional => {
            state.apply_involution(|l| if ra.extract(l) > rb.extract(l) { l ^ flag } else { l });
            Ok(())
        }
        ComparatorMode::GateLevel => {
            let carry = layout.sign_qubit();
            if ra.mask() & (1 << carry) != 0 || rb.mask() & (1 << carry) != 0 {
                return Err(Error::Layout("gate-level comparator needs the sign qubit as a free ancilla".into()));
            }
            if state
                .amplitudes()
                .iter()
                .enumerate()
                .any(|(l, amp)| l & (1 << carry) != 0 && amp.norm_sqr() > POPULATED)
            {
                return Err(Error::Layout("carry ancilla (sign qubit) is not zero".into()));
            }
            let wires = ComparatorWires {
                a: ra.qubits().collect(),
                b: rb.qubits().collect(),
                carry,
                flag: layout.flag_qubit(),
            };
            comparator_gate_level(backend.width, &wires)?.apply(state);
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    X(usize),
    Cnot { control: usize, target: usize },
    Toffoli { c1: usize, c2: usize, target: usize },
}

/// Straight-line reversible circuit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Circuit {
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    /// Number of Toffoli gates.
    pub fn toffoli_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Toffoli { .. })).count()
    }

    pub fn apply(&self, state: &mut StateVector) {
        for g in &self.gates {
            match *g {
                Gate::X(t) => state.apply_x(t),
                Gate::Cnot { control, target } => state.apply_cnot(control, target),
                Gate::Toffoli { c1, c2, target } => state.apply_toffoli(c1, c2, target),
            }
        }
    }

    fn push_maj(&mut self, c: usize, b: usize, a: usize) {
        self.gates.push(Gate::Cnot { control: a, target: b });
        self.gates.push(Gate::Cnot { control: a, target: c });
        self.gates.push(Gate::Toffoli { c1: c, c2: b, target: a });
    }

    fn push_maj_inverse(&mut self, c: usize, b: usize, a: usize) {
        self.gates.push(Gate::Toffoli { c1: c, c2: b, target: a });
        self.gates.push(Gate::Cnot { control: a, target: c });
        self.gates.push(Gate::Cnot { control: a, target: b });
    }
}

/// Qubit assignment for the gate-level comparator; bit 0 is least significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparatorWires {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub carry: usize,
    pub flag: usize,
}

/// Ripple comparator: `a > b` iff `a + !b` carries out of `n` bits.
///
/// Complement `b`, run the MAJ ladder so the top `a` wire holds the carry,
/// copy it onto the flag, then undo the ladder and the complement.
pub fn comparator_gate_level(width: usize, wires: &ComparatorWires) -> Result<Circuit> {
    if width > GATE_LEVEL_MAX_WIDTH {
        return Err(Error::UnsupportedWidth {
            width,
            max: GATE_LEVEL_MAX_WIDTH,
        });
    }
    if wires.a.len() != width || wires.b.len() != width {
        return Err(Error::Layout("comparator wires do not match the width".into()));
    }
    let mut c = Circuit::default();
    if width == 0 {
        return Ok(c);
    }
    let (a, b) = (&wires.a, &wires.b);
    c.gates.extend(b.iter().map(|&q| Gate::X(q)));
    c.push_maj(wires.carry, b[0], a[0]);
    for i in 1..width {
        c.push_maj(a[i - 1], b[i], a[i]);
    }
    c.gates.push(Gate::Cnot {
        control: a[width - 1],
        target: wires.flag,
    });
    for i in (1..width).rev() {
        c.push_maj_inverse(a[i - 1], b[i], a[i]);
    }
    c.push_maj_inverse(wires.carry, b[0], a[0]);
    c.gates.extend(b.iter().map(|&q| Gate::X(q)));
    Ok(c)
}

fn ensure_zero(state: &StateVector, registers: &[RegisterKind]) -> Result<()> {
    let layout = state.layout();
    let mask = registers.iter().fold(0, |m, &k| m | layout.register(k).mask());
    if state
        .amplitudes()
        .iter()
        .enumerate()
        .any(|(l, a)| l & mask != 0 && a.norm_sqr() > POPULATED)
    {
        return Err(Error::Layout(format!(
            "registers {registers:?} must be zero before amplitude transduction"
        )));
    }
    Ok(())
}

/// Amplitude transduction for feature `feature`: moves `|x_ij|` into the flag amplitude.
///
/// Runs oracle, Hadamard layer on the reference register, comparator
/// (data > reference), Hadamard layer, inverse oracle. On the reference-zero
/// slice the flag-1 amplitude becomes `prior * magnitude / 2^n`.
pub fn amplitude_transduction(
    state: &mut StateVector,
    dataset: &QuantizedDataset,
    feature: usize,
    comparator: Comparator,
) -> Result<()> {
    ensure_zero(
        state,
        &[RegisterKind::Data, RegisterKind::Reference, RegisterKind::Flag],
    )?;
    let oracle = OracleSpec::magnitude(dataset, feature)?;
    oracle_apply(state, &oracle)?;
    state.apply_hadamard_layer(RegisterKind::Reference);
    comparator_apply(state, RegisterKind::Data, RegisterKind::Reference, comparator)?;
    state.apply_hadamard_layer(RegisterKind::Reference);
    oracle_apply(state, &oracle)?;
    Ok(())
}

/// Turns the `|x_ij|` flag amplitude into the signed `x_ij`: sign oracle, CZ(sign, flag), sign oracle.
pub fn signed_load(state: &mut StateVector, dataset: &QuantizedDataset, feature: usize) -> Result<()> {
    let oracle = OracleSpec::sign(dataset, feature)?;
    let layout = state.layout();
    oracle_apply(state, &oracle)?;
    state.apply_cz(layout.sign_qubit(), layout.flag_qubit())?;
    oracle_apply(state, &oracle)
}

/// Loads the sign of `x_ij * x_ik` onto the flag amplitude.
pub fn signed_load_pair(
    state: &mut StateVector,
    dataset: &QuantizedDataset,
    j: usize,
    k: usize,
) -> Result<()> {
    let oj = OracleSpec::sign(dataset, j)?;
    let ok = OracleSpec::sign(dataset, k)?;
    let layout = state.layout();
    oracle_apply(state, &oj)?;
    oracle_apply(state, &ok)?;
    state.apply_cz(layout.sign_qubit(), layout.flag_qubit())?;
    oracle_apply(state, &ok)?;
    oracle_apply(state, &oj)
}
