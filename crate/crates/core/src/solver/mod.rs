//! Level-set front propagation for `φ_t + ṽ |∇φ| = 0`.
//!
//! Spatial derivatives are second-order ENO, the Hamiltonian is Godunov's
//! upwind form, time stepping is two-stage TVD Runge-Kutta, and `φ` is reset
//! to the exact signed distance of its zero contour every few steps. Arrival
//! times are read off per node at the first sign change of `φ`. A
//! first-order monotone variant is available for comparisons that must be
//! exactly ordered.

mod kernel;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{marching_squares, DomainMask, Grid, NodeMask, ScalarField, SegmentIndex};
use crate::par::*;
use crate::terrain::write_esri_ascii;

pub use kernel::{eno2_pair, godunov_hamiltonian, upwind1_update};

/// Half-width, in cells, of the band around the front where redistancing
/// keeps values whose gradient is already close to unit length.
const BAND: f64 = 6.0;

/// Cells of padding kept around the positive region of `φ₀`.
pub const BOX_MARGIN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone)]
pub struct LevelSetState {
    pub phi: ScalarField,
    pub t: f64,
}

/// Non-negative normal speed per node.
#[derive(Debug, Clone)]
pub struct NormalSpeed {
    vtilde: ScalarField,
}

impl NormalSpeed {
    pub fn new(vtilde: ScalarField) -> Result<Self> {
        if vtilde.has_nodata() {
            return Err(Error::invalid("normal speed has nodata nodes"));
        }
        if let Some(k) = vtilde.values().iter().position(|&v| !(v >= 0.0)) {
            return Err(Error::invalid(format!(
                "normal speed must be >= 0, got {} at node {k}",
                vtilde.at(k)
            )));
        }
        Ok(Self { vtilde })
    }

    pub fn uniform(grid: Grid, v: f64) -> Result<Self> {
        Self::new(ScalarField::constant(grid, v))
    }

    pub fn field(&self) -> &ScalarField {
        &self.vtilde
    }

    pub fn grid(&self) -> &Grid {
        self.vtilde.grid()
    }

    pub fn max(&self) -> f64 {
        self.vtilde.values().iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct ArrivalTimeField {
    /// First time the front reaches each node; 0 where `φ₀ <= 0`. Unreached
    /// nodes hold `t_end + φ/ṽ`, a finite continuation of the field.
    pub times: ScalarField,
    pub unreached: NodeMask,
    pub steps: usize,
    pub dt: f64,
    pub t_end: f64,
}

impl ArrivalTimeField {
    pub fn reached_everywhere(&self) -> bool {
        self.unreached.is_empty()
    }

    /// Largest arrival time over `mask`.
    pub fn max_on(&self, mask: &NodeMask) -> f64 {
        mask.indices().map(|k| self.times.at(k)).fold(0.0, f64::max)
    }
}

/// Spatial discretization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Second-order ENO with periodic redistancing.
    #[default]
    Eno2,
    /// First-order upwind without redistancing. Only first-order accurate,
    /// but monotone: a pointwise slower `ṽ` or a pointwise larger `φ₀` never
    /// produces an earlier arrival anywhere, rounding included.
    Upwind1,
}

#[derive(Debug, Clone)]
pub struct SolverParams {
    pub cfl: f64,
    pub scheme: Scheme,
    /// Ignored by [`Scheme::Upwind1`].
    pub redistance_interval: usize,
    /// Stop time; `None` picks four box diagonals at the median interior speed.
    pub t_max: Option<f64>,
    /// Upper bound on the time step. The CFL step is used when it is smaller.
    pub dt: Option<f64>,
    /// Write `phi_t<time>.asc` every `record_dt` into `record_dir`.
    pub record_dt: Option<f64>,
    pub record_dir: Option<PathBuf>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            scheme: Scheme::Eno2,
            redistance_interval: 20,
            t_max: None,
            dt: None,
            record_dt: None,
            record_dir: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::invalid(format!("cfl must be in (0, 1], got {}", self.cfl)));
        }
        if self.redistance_interval == 0 {
            return Err(Error::invalid("redistance_interval must be >= 1"));
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return Err(Error::invalid(format!("t_max must be > 0, got {t}")));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
            }
        }
        if let Some(r) = self.record_dt {
            if !(r > 0.0) {
                return Err(Error::invalid(format!("record_dt must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

fn check_axis_len(grid: &Grid) -> Result<()> {
    if grid.nx() < 5 || grid.ny() < 5 {
        return Err(Error::InvalidGrid(format!(
            "the ENO2 stencil needs at least 5 nodes per axis, got {}x{}",
            grid.nx(),
            grid.ny()
        )));
    }
    Ok(())
}

/// One-sided ENO2 derivatives `(φ⁻, φ⁺)` along `axis`. The two outermost
/// layers fall back to first-order differences; on the edge node itself both
/// equal the one available difference.
pub fn eno2_derivatives(phi: &ScalarField, axis: Axis) -> Result<(ScalarField, ScalarField)> {
    let g = *phi.grid();
    check_axis_len(&g)?;
    if phi.has_nodata() {
        return Err(Error::invalid("phi has nodata nodes"));
    }
    let inv_h = 1.0 / g.cellsize();
    let (mut minus, mut plus) = (vec![0.0; g.len()], vec![0.0; g.len()]);
    for k in 0..g.len() {
        let (i, j) = g.ij(k);
        let (m, p) = match axis {
            Axis::X => eno2_pair(phi.values(), k, 1, i, g.nx(), inv_h),
            Axis::Y => eno2_pair(phi.values(), k, g.nx(), j, g.ny(), inv_h),
        };
        minus[k] = m;
        plus[k] = p;
    }
    Ok((ScalarField::new(g, minus)?, ScalarField::new(g, plus)?))
}

/// `dt = cfl·h / (2·max ṽ)`.
pub fn cfl_timestep(vtilde: &NormalSpeed, cellsize: f64, cfl: f64) -> Result<f64> {
    let vmax = vtilde.max();
    if !(vmax > 0.0) {
        return Err(Error::invalid("normal speed is zero everywhere"));
    }
    if !(vmax.is_finite() && cellsize > 0.0 && cfl > 0.0) {
        return Err(Error::invalid("invalid speed, cellsize or cfl"));
    }
    Ok(cfl * cellsize / (2.0 * vmax))
}

/// One Heun (TVD-RK2) step with ENO2 derivatives.
pub fn rk2_step(state: &LevelSetState, vtilde: &NormalSpeed, dt: f64) -> Result<LevelSetState> {
    let g = *state.phi.grid();
    g.ensure_same(vtilde.grid(), "phi vs speed")?;
    check_axis_len(&g)?;
    let mut ws = kernel::Workspace::new(&g, Scheme::Eno2);
    let mut out = vec![0.0; g.len()];
    ws.rk2(state.phi.values(), vtilde.field().values(), dt, &mut out);
    Ok(LevelSetState {
        phi: ScalarField::new(g, out)?,
        t: state.t + dt,
    })
}

/// Resets `φ` to a signed distance of its zero contour.
///
/// Nodes take the exact distance to the marching-squares polyline, except
/// inside a band around the front where a node whose upwind gradient norm
/// is within a quarter of 1 keeps its value. Negative nodes far outside the
/// band are left alone. Signs never change: nodes with `φ >= 0` stay `>= 0`
/// and negative nodes stay strictly negative.
pub fn redistance(state: &LevelSetState) -> Result<LevelSetState> {
    let g = *state.phi.grid();
    let mut phi = state.phi.values().to_vec();
    redistance_in_place(&g, &mut phi)?;
    Ok(LevelSetState {
        phi: ScalarField::new(g, phi)?,
        t: state.t,
    })
}

fn redistance_in_place(g: &Grid, phi: &mut [f64]) -> Result<()> {
    let field = ScalarField::new(*g, phi.to_vec())?;
    let contours = marching_squares(&field, 0.0);
    if contours.is_empty() {
        return Err(Error::FrontVanished);
    }
    let (nx, ny, h) = (g.nx(), g.ny(), g.cellsize());
    let index = SegmentIndex::new(&contours, 4.0 * h);
    let old = field.values();
    // negative nodes this far out lie downstream of the front and keep their value
    let far_outside = -3.0 * BAND * h;
    let reset: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            if old[k] < far_outside {
                return old[k];
            }
            let (i, j) = g.ij(k);
            let d = index.distance(g.node(i, j));
            let keep = d < BAND * h && {
                let (xm, xp) = eno2_pair(old, k, 1, i, nx, 1.0 / h);
                let (ym, yp) = eno2_pair(old, k, nx, j, ny, 1.0 / h);
                // upwind norm, which stays near 1 at ridges and cone tips of φ
                let gn = if old[k] >= 0.0 {
                    godunov_hamiltonian(1.0, xm, xp, ym, yp)
                } else {
                    godunov_hamiltonian(1.0, -xm, -xp, -ym, -yp)
                };
                (gn - 1.0).abs() <= 0.25
            };
            let dist = if keep { old[k].abs() } else { d };
            if old[k] >= 0.0 {
                dist
            } else {
                -dist.max(f64::MIN_POSITIVE)
            }
        })
        .collect();
    phi.copy_from_slice(&reset);
    Ok(())
}

/// Evolves `state` to exactly `t_end`, redistancing every
/// `params.redistance_interval` steps. Returns the number of steps taken.
pub fn evolve_to(
    state: &LevelSetState,
    vtilde: &NormalSpeed,
    t_end: f64,
    params: &SolverParams,
) -> Result<(LevelSetState, usize)> {
    params.validate()?;
    let g = *state.phi.grid();
    g.ensure_same(vtilde.grid(), "phi vs speed")?;
    check_axis_len(&g)?;
    let mut dt = cfl_timestep(vtilde, g.cellsize(), params.cfl)?;
    if let Some(cap) = params.dt {
        dt = dt.min(cap);
    }
    let mut ws = kernel::Workspace::new(&g, params.scheme);
    let mut phi = state.phi.values().to_vec();
    let mut next = vec![0.0; g.len()];
    let mut t = state.t;
    let mut steps = 0;
    while t < t_end {
        let step = dt.min(t_end - t);
        ws.rk2(&phi, vtilde.field().values(), step, &mut next);
        std::mem::swap(&mut phi, &mut next);
        t = if step < dt { t_end } else { t + step };
        steps += 1;
        if params.scheme == Scheme::Eno2 && steps % params.redistance_interval == 0 && t < t_end {
            redistance_in_place(&g, &mut phi)?;
        }
    }
    Ok((
        LevelSetState {
            phi: ScalarField::new(g, phi)?,
            t,
        },
        steps,
    ))
}

/// Index window around the positive region of `phi0`, padded by
/// [`BOX_MARGIN`] and grown to at least 5 nodes per axis where the grid allows.
pub fn computational_box(phi0: &ScalarField) -> Option<(usize, usize, Grid)> {
    let g = *phi0.grid();
    let pos = NodeMask::from_fn(g, |i, j| phi0.get(i, j) > 0.0);
    let (i0, j0, i1, j1) = pos.bounds()?;
    let span = |lo: usize, hi: usize, n: usize| {
        let mut lo = lo.saturating_sub(BOX_MARGIN);
        let mut hi = (hi + BOX_MARGIN).min(n - 1);
        while hi - lo + 1 < 5 && (lo > 0 || hi < n - 1) {
            lo = lo.saturating_sub(1);
            hi = (hi + 1).min(n - 1);
        }
        (lo, hi)
    };
    let (i0, i1) = span(i0, i1, g.nx());
    let (j0, j1) = span(j0, j1, g.ny());
    let sub = g.window(i0, j0, i1 - i0 + 1, j1 - j0 + 1).ok()?;
    Some((i0, j0, sub))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Arrival time of the zero contour of `phi0` (positive inside) at every
/// node, running until all positive nodes have been crossed or `t_max`.
///
/// Each node's time is interpolated linearly between the last step where
/// `φ > 0` and the first where `φ <= 0`.
pub fn evolve_arrival_times(
    phi0: &ScalarField,
    vtilde: &NormalSpeed,
    params: &SolverParams,
) -> Result<ArrivalTimeField> {
    params.validate()?;
    let g = *phi0.grid();
    g.ensure_same(vtilde.grid(), "phi0 vs speed")?;
    if phi0.has_nodata() {
        return Err(Error::invalid("phi0 has nodata nodes"));
    }
    let Some((bi, bj, sub)) = computational_box(phi0) else {
        return Ok(ArrivalTimeField {
            times: ScalarField::constant(g, 0.0),
            unreached: NodeMask::empty(g),
            steps: 0,
            dt: 0.0,
            t_end: 0.0,
        });
    };
    check_axis_len(&sub)?;
    let v = vtilde.field().crop(bi, bj, sub).into_values();
    let mut phi = phi0.crop(bi, bj, sub).into_values();
    let speed = NormalSpeed::new(ScalarField::new(sub, v.clone())?)?;
    let mut dt = cfl_timestep(&speed, g.cellsize(), params.cfl)?;
    if let Some(cap) = params.dt {
        dt = dt.min(cap);
    }

    let n = sub.len();
    let mut times = vec![0.0; n];
    let mut done: Vec<bool> = phi.iter().map(|&p| p <= 0.0).collect();
    let mut remaining = done.iter().filter(|&&d| !d).count();
    let t_max = match params.t_max {
        Some(t) => t,
        None => {
            let interior: Vec<f64> = (0..n).filter(|&k| !done[k]).map(|k| v[k]).collect();
            let vmed = median(interior).max(f64::MIN_POSITIVE);
            let diag = (sub.nx() as f64).hypot(sub.ny() as f64) * sub.cellsize();
            4.0 * diag / vmed
        }
    };

    let mut ws = kernel::Workspace::new(&sub, params.scheme);
    let mut next = vec![0.0; n];
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut next_record = params.record_dt.map(|_| 0.0);
    loop {
        if let (Some(rdt), Some(dir), Some(tr)) = (params.record_dt, &params.record_dir, next_record) {
            if t >= tr {
                let field = ScalarField::new(sub, phi.clone())?;
                let path = dir.join(format!("phi_t{t:.6}.asc"));
                std::fs::write(&path, write_esri_ascii(&field)).map_err(|e| Error::io(&path, e))?;
                next_record = Some(tr + rdt * ((t - tr) / rdt).floor() + rdt);
            }
        }
        if remaining == 0 || t >= t_max {
            break;
        }
        ws.rk2(&phi, &v, dt, &mut next);
        debug_assert!(phi.iter().zip(&next).all(|(a, b)| b <= a), "phi increased");
        for k in 0..n {
            if !done[k] && next[k] <= 0.0 {
                let (a, b) = (phi[k], next[k]);
                // a/(a−b) written so that rounding keeps it monotone in a and b
                let frac = if a > 0.0 { 1.0 / (1.0 + (-b) / a) } else { 0.0 };
                times[k] = t + dt * frac;
                done[k] = true;
                remaining -= 1;
            }
        }
        std::mem::swap(&mut phi, &mut next);
        t += dt;
        steps += 1;
        if params.scheme == Scheme::Eno2 && remaining > 0 && steps % params.redistance_interval == 0 {
            match redistance_in_place(&sub, &mut phi) {
                Ok(()) => {}
                Err(Error::FrontVanished) => break,
                Err(e) => return Err(e),
            }
        }
    }

    let mut unreached_sub = vec![false; n];
    for k in 0..n {
        if !done[k] {
            unreached_sub[k] = true;
            times[k] = t + phi[k].max(0.0) / v[k].max(f64::MIN_POSITIVE);
        }
    }
    let mut full = ScalarField::constant(g, 0.0);
    full.paste(bi, bj, &ScalarField::new(sub, times)?);
    let mut unreached = NodeMask::empty(g);
    for k in 0..n {
        if unreached_sub[k] {
            let (i, j) = sub.ij(k);
            unreached.set(g.index(bi + i, bj + j), true);
        }
    }
    Ok(ArrivalTimeField {
        times: full,
        unreached,
        steps,
        dt,
        t_end: t,
    })
}

/// Unit-speed arrival time from the boundary of `mask`: the depth `d(x)`.
pub fn depth_field(mask: &DomainMask, params: &SolverParams) -> Result<ArrivalTimeField> {
    let phi0 = mask.signed_distance();
    let speed = NormalSpeed::uniform(*mask.grid(), 1.0)?;
    evolve_arrival_times(&phi0, &speed, params)
}
