use super::Scheme;
use crate::grid::Grid;
use crate::par::*;

#[inline(always)]
fn smaller(a: f64, b: f64) -> f64 {
    if a.abs() <= b.abs() {
        a
    } else {
        b
    }
}

/// `(φ⁻, φ⁺)` at position `i` of a line of `n` values starting `i·stride`
/// before `p[k]`.
#[inline(always)]
pub fn eno2_pair(p: &[f64], k: usize, stride: usize, i: usize, n: usize, inv_h: f64) -> (f64, f64) {
    let at = |o: isize| p[(k as isize + o * stride as isize) as usize];
    let c = at(0);
    let d2 = |o: isize| at(o + 1) - 2.0 * at(o) + at(o - 1);
    let minus = (i > 0).then(|| {
        let d = (c - at(-1)) * inv_h;
        if i >= 2 && i + 1 < n {
            d + 0.5 * inv_h * smaller(d2(-1), d2(0))
        } else {
            d
        }
    });
    let plus = (i + 1 < n).then(|| {
        let d = (at(1) - c) * inv_h;
        if i >= 1 && i + 2 < n {
            d - 0.5 * inv_h * smaller(d2(0), d2(1))
        } else {
            d
        }
    });
    match (minus, plus) {
        (Some(m), Some(p)) => (m, p),
        (Some(m), None) => (m, m),
        (None, Some(p)) => (p, p),
        (None, None) => (0.0, 0.0),
    }
}

/// Double-double value `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

#[inline(always)]
fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

#[inline(always)]
fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

impl Dd {
    #[inline(always)]
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = two_sum(self.1, o.1);
        let u = quick_two_sum(s.0, s.1 + t.0);
        quick_two_sum(u.0, u.1 + t.1)
    }

    #[inline(always)]
    fn square(self) -> Dd {
        let p = self.0 * self.0;
        let e = self.0.mul_add(self.0, -p);
        quick_two_sum(p, e + 2.0 * self.0 * self.1)
    }

    #[inline(always)]
    fn scale(self, c: f64) -> Dd {
        let p = c * self.0;
        let e = c.mul_add(self.0, -p);
        quick_two_sum(p, e + c * self.1)
    }

    #[inline(always)]
    fn sqrt(self) -> Dd {
        if self.0 <= 0.0 {
            return Dd(0.0, 0.0);
        }
        let r = self.0.sqrt();
        let rr = r * r;
        let e = r.mul_add(r, -rr);
        let resid = ((self.0 - rr) - e) + self.1;
        quick_two_sum(r, resid / (2.0 * r))
    }
}

/// `max(a − b, 0)` carried exactly.
#[inline(always)]
fn pos_diff(a: f64, b: f64) -> Dd {
    let d = two_sum(a, -b);
    if d.0 > 0.0 || (d.0 == 0.0 && d.1 > 0.0) {
        d
    } else {
        Dd(0.0, 0.0)
    }
}

/// First-order Godunov update `φ − c·sqrt(max(φ−m_x,0)² + max(φ−m_y,0)²)`
/// where `m_x`, `m_y` are the smaller neighbours along each axis and
/// `c = dt·ṽ/h`. Evaluated in double-double and rounded once, so the result
/// is nondecreasing in `φ`, `m_x`, `m_y` and nonincreasing in `c` as
/// computed, not just in exact arithmetic.
#[inline(always)]
pub fn upwind1_update(phi: f64, mx: f64, my: f64, c: f64) -> f64 {
    let n = pos_diff(phi, mx).square().add(pos_diff(phi, my).square()).sqrt();
    let step = n.scale(c);
    let z = two_sum(phi, -step.0);
    z.0 + (z.1 - step.1)
}

/// `ṽ · sqrt(max((φx⁻)₊², (φx⁺)₋²) + max((φy⁻)₊², (φy⁺)₋²))`.
#[inline(always)]
pub fn godunov_hamiltonian(vtilde: f64, pxm: f64, pxp: f64, pym: f64, pyp: f64) -> f64 {
    let sq = |a: f64| a * a;
    let gx = sq(pxm.max(0.0)).max(sq(pxp.min(0.0)));
    let gy = sq(pym.max(0.0)).max(sq(pyp.min(0.0)));
    vtilde * (gx + gy).sqrt()
}

pub(crate) struct Workspace {
    nx: usize,
    ny: usize,
    inv_h: f64,
    scheme: Scheme,
    stage: Vec<f64>,
}

impl Workspace {
    pub fn new(g: &Grid, scheme: Scheme) -> Self {
        Self {
            nx: g.nx(),
            ny: g.ny(),
            inv_h: 1.0 / g.cellsize(),
            scheme,
            stage: vec![0.0; g.len()],
        }
    }

    /// `out[k] = phi[k] − dt·Ĥ(phi)[k]`, then `out = ½·base + ½·out` when
    /// `blend` is given.
    fn euler(&self, phi: &[f64], v: &[f64], dt: f64, blend: Option<&[f64]>, out: &mut [f64]) {
        let (nx, ny, inv_h) = (self.nx, self.ny, self.inv_h);
        let scheme = self.scheme;
        out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            for (i, o) in row.iter_mut().enumerate() {
                let k = j * nx + i;
                let stepped = match scheme {
                    Scheme::Eno2 => {
                        let (xm, xp) = eno2_pair(phi, k, 1, i, nx, inv_h);
                        let (ym, yp) = eno2_pair(phi, k, nx, j, ny, inv_h);
                        phi[k] - dt * godunov_hamiltonian(v[k], xm, xp, ym, yp)
                    }
                    Scheme::Upwind1 => {
                        let low = |a: Option<f64>, b: Option<f64>| match (a, b) {
                            (Some(a), Some(b)) => a.min(b),
                            (Some(a), None) | (None, Some(a)) => a,
                            (None, None) => phi[k],
                        };
                        let mx = low((i > 0).then(|| phi[k - 1]), (i + 1 < nx).then(|| phi[k + 1]));
                        let my = low((j > 0).then(|| phi[k - nx]), (j + 1 < ny).then(|| phi[k + nx]));
                        upwind1_update(phi[k], mx, my, dt * inv_h * v[k])
                    }
                };
                *o = match blend {
                    Some(base) => 0.5 * base[k] + 0.5 * stepped,
                    None => stepped,
                };
            }
        });
    }

    /// Heun step: `φ¹ = φ − dt·Ĥ(φ)`, `out = ½φ + ½(φ¹ − dt·Ĥ(φ¹))`.
    pub fn rk2(&mut self, phi: &[f64], v: &[f64], dt: f64, out: &mut [f64]) {
        let mut stage = std::mem::take(&mut self.stage);
        self.euler(phi, v, dt, None, &mut stage);
        self.euler(&stage, v, dt, Some(phi), out);
        self.stage = stage;
    }
}
