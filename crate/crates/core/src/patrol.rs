//! Patrol densities `ψ` normalized to a budget `E = ∫_Ω ψ`.

use crate::error::{Error, Result};
use crate::grid::{integrate, DomainMask, NodeMask, ScalarField};
use crate::solver::ArrivalTimeField;

#[derive(Debug, Clone)]
pub struct PatrolStrategy {
    psi: ScalarField,
    budget: f64,
}

impl PatrolStrategy {
    pub fn psi(&self) -> &ScalarField {
        &self.psi
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Takes `ψ` as given on the mask (zeroed outside); the budget is its
    /// integral.
    pub fn from_density(psi: &ScalarField, mask: &DomainMask) -> Result<Self> {
        psi.grid().ensure_same(mask.grid(), "patrol density vs mask")?;
        let mut values = vec![0.0; psi.values().len()];
        for k in mask.indices() {
            let v = psi.at(k);
            if psi.nodata()[k] || !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Model(format!("patrol density must be finite and >= 0, got {v} at node {k}")));
            }
            values[k] = v;
        }
        let psi = ScalarField::new(*mask.grid(), values)?;
        let budget = integrate(&psi, mask)?;
        Ok(Self { psi, budget })
    }

    /// Zero density everywhere.
    pub fn none(mask: &DomainMask) -> Self {
        Self {
            psi: ScalarField::constant(*mask.grid(), 0.0),
            budget: 0.0,
        }
    }
}

fn check_budget(e: f64) -> Result<()> {
    if !(e >= 0.0 && e.is_finite()) {
        return Err(Error::invalid(format!("patrol budget must be >= 0, got {e}")));
    }
    Ok(())
}

/// `ψ = E·w / ∫_Ω w` on the mask, 0 elsewhere.
fn normalize(weights: Vec<f64>, e: f64, mask: &NodeMask) -> Result<PatrolStrategy> {
    let g = *mask.grid();
    let w = ScalarField::new(g, weights)?;
    let total = integrate(&w, mask)?;
    if !(total > 0.0) {
        return Err(Error::Model("patrol shape is zero over the mask".into()));
    }
    let psi = (0..g.len())
        .map(|k| if mask.contains_index(k) { e * w.at(k) / total } else { 0.0 })
        .collect();
    Ok(PatrolStrategy {
        psi: ScalarField::new(g, psi)?,
        budget: e,
    })
}

/// `ψ = E / A` over the mask.
pub fn homogeneous(e: f64, mask: &DomainMask) -> Result<PatrolStrategy> {
    check_budget(e)?;
    normalize(vec![1.0; mask.grid().len()], e, mask)
}

/// Band between depths `lo_frac·d_m` and `hi_frac·d_m`, densest at the
/// outer edge and falling linearly to zero at the inner one.
pub fn band(
    e: f64,
    depth: &ArrivalTimeField,
    mask: &DomainMask,
    lo_frac: f64,
    hi_frac: f64,
) -> Result<PatrolStrategy> {
    check_budget(e)?;
    if !(0.0 <= lo_frac && lo_frac < hi_frac && hi_frac <= 1.0) {
        return Err(Error::invalid(format!(
            "band needs 0 <= lo < hi <= 1, got lo={lo_frac} hi={hi_frac}"
        )));
    }
    depth.times.grid().ensure_same(mask.grid(), "depth vs mask")?;
    let dm = depth.max_on(mask);
    if !(dm > 0.0) {
        return Err(Error::Model("depth field is zero over the mask".into()));
    }
    let (lo, hi) = (lo_frac * dm, hi_frac * dm);
    let w = depth
        .times
        .values()
        .iter()
        .map(|&d| band_weight(d, lo, hi))
        .collect();
    normalize(w, e, mask).map_err(|err| match err {
        Error::Model(_) => Error::Model(format!("patrol band [{lo}, {hi}] holds no cells")),
        other => other,
    })
}

fn band_weight(d: f64, lo: f64, hi: f64) -> f64 {
    if d >= lo && d <= hi {
        ((hi - d) / (hi - lo)).max(0.0)
    } else {
        0.0
    }
}

/// `ψ = E·shape / ∫_Ω shape`. The shape must be co-registered with the
/// mask, non-negative and not identically zero on it.
pub fn from_raster(shape: &ScalarField, e: f64, mask: &DomainMask) -> Result<PatrolStrategy> {
    check_budget(e)?;
    shape.grid().ensure_same(mask.grid(), "patrol raster vs mask")?;
    for k in mask.indices() {
        if shape.nodata()[k] {
            let (i, j) = shape.grid().ij(k);
            return Err(Error::Nodata { i, j });
        }
        if shape.at(k) < 0.0 {
            return Err(Error::Model(format!("patrol raster is negative at node {k}")));
        }
    }
    let w = (0..shape.values().len())
        .map(|k| if mask.contains_index(k) { shape.at(k) } else { 0.0 })
        .collect();
    normalize(w, e, mask)
}
