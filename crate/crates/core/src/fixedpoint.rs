//! Sign-and-magnitude fixed-point encoding of feature values.
//!
//! A value in `(-1, 1)` is stored as a sign bit plus an `n`-bit magnitude on a
//! grid of spacing `2^-n`. The data oracles expose exactly these bits, so all
//! downstream identities hold exactly on the quantized data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported precision.
pub const MAX_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointValue {
    negative: bool,
    magnitude: u32,
    bits: u32,
}

impl FixedPointValue {
    /// Builds a value from raw parts. Negative zero is normalized to positive zero.
    pub fn new(negative: bool, magnitude: u32, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        if magnitude > max_magnitude(bits) {
            return Err(Error::InvalidArgument(format!(
                "magnitude {magnitude} does not fit in {bits} bits"
            )));
        }
        Ok(Self {
            negative: negative && magnitude != 0,
            magnitude,
            bits,
        })
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    /// The sign bit as stored by the sign oracle (1 = negative).
    pub fn sign_bit(&self) -> u64 {
        u64::from(self.negative)
    }

    pub fn magnitude(&self) -> u32 {
        self.magnitude
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn decode(&self) -> f64 {
        let v = f64::from(self.magnitude) / scale(self.bits);
        if self.negative {
            -v
        } else {
            v
        }
    }

    pub fn abs(&self) -> f64 {
        f64::from(self.magnitude) / scale(self.bits)
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::InvalidArgument(format!(
            "precision must be between 1 and {MAX_BITS} bits, got {bits}"
        )));
    }
    Ok(())
}

fn scale(bits: u32) -> f64 {
    f64::from(1u32 << bits)
}

fn max_magnitude(bits: u32) -> u32 {
    (1u32 << bits) - 1
}

/// Outcome of quantizing a single raw value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    pub value: FixedPointValue,
    /// Set when the rounded magnitude exceeded `2^n - 1` and was clamped.
    pub clamped: bool,
}

/// Round-to-nearest (ties away from zero) quantization, clamped to `2^n - 1`.
pub fn quantize_with_report(raw: f64, bits: u32) -> Result<Quantized> {
    check_bits(bits)?;
    if !raw.is_finite() || raw.abs() >= 1.0 {
        return Err(Error::Domain { value: raw });
    }
    // Multiplying by a power of two is exact, so the rounding step is the only
    // source of error.
    let rounded = (raw.abs() * scale(bits)).round();
    let max = max_magnitude(bits);
    let clamped = rounded > f64::from(max);
    let magnitude = if clamped { max } else { rounded as u32 };
    Ok(Quantized {
        value: FixedPointValue::new(raw < 0.0, magnitude, bits)?,
        clamped,
    })
}

pub fn quantize(raw: f64, bits: u32) -> Result<FixedPointValue> {
    quantize_with_report(raw, bits).map(|q| q.value)
}

pub fn decode(value: &FixedPointValue) -> f64 {
    value.decode()
}

/// `ceil(log2(rows))`, the width of the index register.
pub fn index_width(rows: usize) -> usize {
    if rows <= 1 {
        0
    } else {
        (usize::BITS - (rows - 1).leading_zeros()) as usize
    }
}

/// An `M x D` grid of fixed-point values sharing one precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedDataset {
    values: Vec<FixedPointValue>,
    rows: usize,
    cols: usize,
    bits: u32,
    clamped: Vec<(usize, usize)>,
}

impl QuantizedDataset {
    /// Builds a dataset from already-quantized values in row-major order.
    ///
    /// Only `M >= 1` is enforced here; the covariance pipeline checks `M >= 2`.
    pub fn from_values(values: Vec<FixedPointValue>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Format("dataset must have at least one row and one column".into()));
        }
        if values.len() != rows * cols {
            return Err(Error::Format(format!(
                "expected {} values for a {rows}x{cols} grid, got {}",
                rows * cols,
                values.len()
            )));
        }
        let bits = values[0].bits();
        if values.iter().any(|v| v.bits() != bits) {
            return Err(Error::Format("all values must share one precision".into()));
        }
        Ok(Self {
            values,
            rows,
            cols,
            bits,
            clamped: Vec::new(),
        })
    }

    /// Number of data points `M`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of features `D`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Shared precision `n`.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Index register width `m = ceil(log2 M)`.
    pub fn index_width(&self) -> usize {
        index_width(self.rows)
    }

    /// Cells whose magnitude was clamped to `2^n - 1` during ingestion.
    pub fn clamped_cells(&self) -> &[(usize, usize)] {
        &self.clamped
    }

    pub fn value(&self, row: usize, col: usize) -> FixedPointValue {
        self.values[row * self.cols + col]
    }

    pub fn decoded(&self, row: usize, col: usize) -> f64 {
        self.value(row, col).decode()
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.decoded(i, col)).collect()
    }

    pub fn decoded_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.decoded(i, j)).collect())
            .collect()
    }
}

/// Element-wise quantization of a raw grid, allowing a single row.
pub fn quantize_rows(raw: &[Vec<f64>], bits: u32) -> Result<QuantizedDataset> {
    check_bits(bits)?;
    let rows = raw.len();
    let cols = raw.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::Format("dataset is empty".into()));
    }
    let mut values = Vec::with_capacity(rows * cols);
    let mut clamped = Vec::new();
    for (i, row) in raw.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Format(format!(
                "row {i} has {} columns, expected {cols}",
                row.len()
            )));
        }
        for (j, &x) in row.iter().enumerate() {
            let q = quantize_with_report(x, bits).map_err(|e| match e {
                Error::Domain { value } => Error::DomainAt { row: i, col: j, value },
                other => other,
            })?;
            if q.clamped {
                clamped.push((i, j));
            }
            values.push(q.value);
        }
    }
    let mut ds = QuantizedDataset::from_values(values, rows, cols)?;
    ds.clamped = clamped;
    Ok(ds)
}

/// Element-wise quantization of a raw `M x D` grid with `M >= 2`.
pub fn quantize_dataset(raw: &[Vec<f64>], bits: u32) -> Result<QuantizedDataset> {
    let ds = quantize_rows(raw, bits)?;
    if ds.rows() < 2 {
        return Err(Error::Format(format!(
            "need at least 2 data points, got {}",
            ds.rows()
        )));
    }
    Ok(ds)
}
