//! Orthonormal multilevel Haar transform.
//!
//! Coefficient layout after `levels` stages on a signal of length `N`:
//! `[approx (N/2^L) | detail_L | detail_{L-1} | ... | detail_1 (N/2)]`,
//! i.e. coarsest first, finest last.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn check_levels(len: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::InvalidInput("Haar transform needs at least one level".into()));
    }
    if levels >= usize::BITS as usize || len == 0 || len % (1usize << levels) != 0 {
        return Err(Error::InvalidInput(format!(
            "signal length {len} is not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

/// Largest `J` with `len = 2^J`, if `len` is a power of two.
pub fn log2_exact(len: usize) -> Option<usize> {
    if len.is_power_of_two() {
        Some(len.trailing_zeros() as usize)
    } else {
        None
    }
}

pub fn forward(signal: &[f64], levels: usize) -> Result<Vec<f64>> {
    check_levels(signal.len(), levels)?;
    let mut out = signal.to_vec();
    let mut scratch = vec![0.0; signal.len()];
    let mut len = signal.len();
    for _ in 0..levels {
        let half = len / 2;
        for k in 0..half {
            let (a, b) = (out[2 * k], out[2 * k + 1]);
            scratch[k] = (a + b) * INV_SQRT2;
            scratch[half + k] = (a - b) * INV_SQRT2;
        }
        out[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
    Ok(out)
}

pub fn inverse(coefficients: &[f64], levels: usize) -> Result<Vec<f64>> {
    check_levels(coefficients.len(), levels)?;
    let mut out = coefficients.to_vec();
    let mut scratch = vec![0.0; coefficients.len()];
    let mut len = coefficients.len() >> levels;
    for _ in 0..levels {
        for k in 0..len {
            let (a, d) = (out[k], out[len + k]);
            scratch[2 * k] = (a + d) * INV_SQRT2;
            scratch[2 * k + 1] = (a - d) * INV_SQRT2;
        }
        len *= 2;
        out[..len].copy_from_slice(&scratch[..len]);
    }
    Ok(out)
}

/// Coefficient ranges: approximation block first, then details from the
/// coarsest level to the finest. `levels + 1` blocks partitioning `0..len`.
pub fn level_blocks(len: usize, levels: usize) -> Result<Vec<Range<usize>>> {
    check_levels(len, levels)?;
    let coarse = len >> levels;
    let mut blocks = vec![0..coarse];
    let mut start = coarse;
    let mut size = coarse;
    for _ in 0..levels {
        blocks.push(start..start + size);
        start += size;
        size *= 2;
    }
    Ok(blocks)
}

/// Orthonormal synthesis matrix `H`: `signal = H * coefficients`.
pub fn synthesis_matrix(len: usize, levels: usize) -> Result<DMatrix<f64>> {
    check_levels(len, levels)?;
    let mut h = DMatrix::zeros(len, len);
    let mut unit = vec![0.0; len];
    for j in 0..len {
        unit[j] = 1.0;
        let column = inverse(&unit, levels)?;
        h.column_mut(j).copy_from(&DVector::from_vec(column));
        unit[j] = 0.0;
    }
    Ok(h)
}
