//! Ambiguity indicator cells and the total-spread estimator.

use serde::{Deserialize, Serialize};

use crate::emaf::{AmbiguityGrid, Lattice};
use crate::error::{Error, Result};

/// Fraction of nonzero cells over a region of the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadReport {
    pub total_spread: f64,
    pub nonzero_cells: usize,
    pub region_cells: usize,
    pub region_desc: String,
}

/// Region over which the spread is measured.
#[derive(Debug, Clone, PartialEq)]
pub enum SpreadRegion {
    /// The full `2N x (2N-1)` plane.
    All,
    /// The single lag row `tau = tau0`.
    Lag(i64),
    /// An explicit cell mask.
    Mask(Vec<bool>),
}

/// Indicator of nonzero cells. The test is exact: estimators write literal zeros.
pub fn indicator(g: &AmbiguityGrid) -> Vec<bool> {
    g.values().iter().map(|v| v.re != 0.0 || v.im != 0.0).collect()
}

/// Total spread of an indicator mask over `region`.
pub fn total_spread(mask: &[bool], n: usize, region: &SpreadRegion) -> Result<SpreadReport> {
    let l = Lattice::new(n);
    if mask.len() != l.cells() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} cells, lattice for N={n} has {}",
            mask.len(),
            l.cells()
        )));
    }
    let (nonzero, cells, desc) = match region {
        SpreadRegion::All => (mask.iter().filter(|&&m| m).count(), l.cells(), "all".to_string()),
        SpreadRegion::Lag(tau) => {
            let row = l
                .row_of(*tau)
                .ok_or_else(|| Error::EmptyRegion(format!("lag {tau} is off the lattice")))?;
            let slice = &mask[row * l.cols()..(row + 1) * l.cols()];
            (slice.iter().filter(|&&m| m).count(), l.cols(), format!("tau={tau}"))
        }
        SpreadRegion::Mask(region) => {
            if region.len() != mask.len() {
                return Err(Error::DimensionMismatch("region mask size differs from lattice".into()));
            }
            let cells = region.iter().filter(|&&r| r).count();
            let nonzero = mask.iter().zip(region).filter(|(&m, &r)| m && r).count();
            (nonzero, cells, "mask".to_string())
        }
    };
    if cells == 0 {
        return Err(Error::EmptyRegion("spread over an empty region".into()));
    }
    Ok(SpreadReport {
        total_spread: nonzero as f64 / cells as f64,
        nonzero_cells: nonzero,
        region_cells: cells,
        region_desc: desc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emaf::GridKind;
    use num_complex::Complex64;

    #[test]
    fn zero_grid_has_empty_indicator() {
        let g = AmbiguityGrid::zeros(8, GridKind::Thresholded);
        assert!(indicator(&g).iter().all(|&b| !b));
        let r = total_spread(&indicator(&g), 8, &SpreadRegion::All).unwrap();
        assert_eq!(r.total_spread, 0.0);
    }

    #[test]
    fn full_mask_and_lag_rows() {
        let n = 8;
        let l = Lattice::new(n);
        let all = vec![true; l.cells()];
        assert_eq!(total_spread(&all, n, &SpreadRegion::All).unwrap().total_spread, 1.0);
        let mut g = AmbiguityGrid::zeros(n, GridKind::Reference);
        g.set(l.row_of(0).unwrap(), 3, Complex64::new(-0.0, 1e-300));
        let m = indicator(&g);
        let r = total_spread(&m, n, &SpreadRegion::Lag(0)).unwrap();
        assert_eq!((r.nonzero_cells, r.region_cells), (1, 16));
        assert!(total_spread(&m, n, &SpreadRegion::Lag(8)).is_err());
        assert!(total_spread(&m, n, &SpreadRegion::Mask(vec![false; l.cells()])).is_err());
    }

    #[test]
    fn indicator_is_idempotent() {
        let n = 4;
        let mut g = AmbiguityGrid::zeros(n, GridKind::Thresholded);
        g.values_mut()[2] = Complex64::new(0.5, 0.0);
        g.values_mut()[9] = Complex64::new(0.0, -3.0);
        let m = indicator(&g);
        let masked: Vec<Complex64> = m
            .iter()
            .map(|&b| if b { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
            .collect();
        let again = indicator(&AmbiguityGrid::from_values(n, GridKind::Thresholded, masked).unwrap());
        assert_eq!(m, again);
    }
}
