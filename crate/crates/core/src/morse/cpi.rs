//! Critical points at infinity: membership, indices and levels.

use super::critical::CriticalPoint;
use crate::constants::s_n;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpiRecord {
    pub points: Vec<Vec<f64>>,
    pub k_values: Vec<f64>,
    pub level: f64,
    pub morse_index_at_infinity: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Included,
    Excluded,
    /// Sign within the tolerance band around zero.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classified {
    pub y: Vec<f64>,
    pub morse_index: usize,
    /// `−ΔK(y)` for n ≥ 7, `−ΔK(y)/(60K(y)) + H(y,y)` for n = 6.
    pub sign_value: f64,
    pub membership: Membership,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpiTable {
    pub dim: usize,
    pub classified: Vec<Classified>,
    pub singles: Vec<CpiRecord>,
    pub pairs: Vec<CpiRecord>,
}

/// Relative width of the indeterminate band.
pub const SIGN_TOL: f64 = 1e-8;

/// `S_n^{4/n} K^{−(n−4)/n}`
pub fn single_level(n: usize, k: f64) -> f64 {
    let nf = n as f64;
    s_n(n).powf(4.0 / nf) * k.powf(-(nf - 4.0) / nf)
}

/// `S_n^{4/n} (K_i^{(4−n)/4} + K_j^{(4−n)/4})^{4/n}`
pub fn pair_level(n: usize, ki: f64, kj: f64) -> f64 {
    let nf = n as f64;
    let e = (4.0 - nf) / 4.0;
    s_n(n).powf(4.0 / nf) * (ki.powf(e) + kj.powf(e)).powf(4.0 / nf)
}

/// The dimension-appropriate CPI sign quantity.
pub fn sign_value(n: usize, p: &CriticalPoint) -> Result<f64> {
    if n >= 7 {
        Ok(-p.laplacian_k)
    } else if n == 6 {
        let h = match p.robin_value {
            Some(h) => h,
            None => crate::green::robin(&p.y)?,
        };
        Ok(-p.laplacian_k / (60.0 * p.k_value) + h)
    } else {
        Err(Error::InvalidInput(format!(
            "CPI enumeration needs n >= 6, got {n}"
        )))
    }
}

// n = 6 compares a dimensionless quantity; n ≥ 7 compares ΔK itself.
fn band(n: usize, scale: f64) -> f64 {
    if n == 6 {
        SIGN_TOL
    } else {
        SIGN_TOL * scale
    }
}

/// Classifies each point and returns single-mass records for the included
/// ones, in the input order.
pub fn enumerate_cpi_single(
    points: &[CriticalPoint],
    n: usize,
) -> Result<(Vec<Classified>, Vec<CpiRecord>)> {
    crate::error::check_dim(n)?;
    let scale = points.iter().map(|p| p.k_value.abs()).fold(0.0, f64::max);
    let mut classified = Vec::with_capacity(points.len());
    let mut records = Vec::new();
    for p in points {
        if p.y.len() != n {
            return Err(Error::InvalidInput(
                "critical point dimension mismatch".into(),
            ));
        }
        let s = sign_value(n, p)?;
        let membership = if s.abs() <= band(n, scale) {
            Membership::Indeterminate
        } else if s > 0.0 {
            Membership::Included
        } else {
            Membership::Excluded
        };
        if membership == Membership::Included {
            records.push(CpiRecord {
                points: vec![p.y.clone()],
                k_values: vec![p.k_value],
                level: single_level(n, p.k_value),
                morse_index_at_infinity: n as i64 - p.morse_index as i64,
            });
        }
        classified.push(Classified {
            y: p.y.clone(),
            morse_index: p.morse_index,
            sign_value: s,
            membership,
        });
    }
    Ok((classified, records))
}

/// All unordered pairs of distinct included points (n ≥ 7).
pub fn enumerate_cpi_pairs(points: &[CriticalPoint], n: usize) -> Result<Vec<CpiRecord>> {
    if n < 7 {
        return Err(Error::InvalidInput(format!(
            "two-mass enumeration needs n >= 7, got {n}"
        )));
    }
    let (classified, _) = enumerate_cpi_single(points, n)?;
    let inc: Vec<&CriticalPoint> = points
        .iter()
        .zip(&classified)
        .filter(|(_, c)| c.membership == Membership::Included)
        .map(|(p, _)| p)
        .collect();
    let mut out = Vec::new();
    for i in 0..inc.len() {
        for j in i + 1..inc.len() {
            let (a, b) = (inc[i], inc[j]);
            out.push(CpiRecord {
                points: vec![a.y.clone(), b.y.clone()],
                k_values: vec![a.k_value, b.k_value],
                level: pair_level(n, a.k_value, b.k_value),
                morse_index_at_infinity: 2 * n as i64 - (a.morse_index + b.morse_index) as i64 + 1,
            });
        }
    }
    Ok(out)
}

/// Singles and (for n ≥ 7) pairs in one table.
pub fn cpi_table(points: &[CriticalPoint], n: usize) -> Result<CpiTable> {
    let (classified, singles) = enumerate_cpi_single(points, n)?;
    let pairs = if n >= 7 {
        enumerate_cpi_pairs(points, n)?
    } else {
        Vec::new()
    };
    Ok(CpiTable {
        dim: n,
        classified,
        singles,
        pairs,
    })
}
