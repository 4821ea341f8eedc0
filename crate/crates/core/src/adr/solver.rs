//! Steady advection-diffusion-reaction solve on a uniform grid.
//!
//! Interior and Neumann nodes carry
//! `u·∇c − D Δc + r c = q` with first-order upwind advection and second-order
//! central diffusion. The inflow column (`i = 0`) and the top row
//! (`j = ny - 1`) are Dirichlet zero. At the bottom row and the outflow column
//! a zero normal gradient is imposed by mirroring the ghost node, which also
//! removes the normal advective term there.
//!
//! With `c1`, `c2` the reactants and `c3` the pollutant:
//!
//! ```text
//! L c1 + K12 c1 c2 = Q1
//! L c2 + K12 c1 c2 = Q2
//! L c3 + K3 c3     = K12 c1 c2
//! ```
//!
//! The reactant pair is solved by Picard iteration (Gauss-Seidel order,
//! `c2` frozen in the first equation and the new `c1` in the second), after
//! which the pollutant equation is linear.

use serde::{Deserialize, Serialize};

use super::{AdrError, AdrParams, FlowField, FlowSettings, Grid};

/// Disc-shaped source of constant strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disc {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub amplitude: f64,
}

impl Disc {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        if dx * dx + dy * dy < self.radius * self.radius {
            self.amplitude
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdrOptions {
    /// Sources of the two reactants.
    pub sources: [Disc; 2],
    /// Use the reaction signs `−K12 c1 c2` in all three equations.
    pub sink_signs: bool,
    /// Relative change between successive Picard iterates.
    pub picard_tol: f64,
    /// Max-norm residual of the reactant equations at convergence.
    pub residual_tol: f64,
    pub max_picard: usize,
    /// Max-norm residual accepted from each banded solve.
    pub linear_tol: f64,
}

impl Default for AdrOptions {
    fn default() -> Self {
        Self {
            sources: [
                Disc {
                    cx: 0.1,
                    cy: 0.1,
                    radius: 0.5,
                    amplitude: 0.1,
                },
                Disc {
                    cx: 0.1,
                    cy: 0.3,
                    radius: 0.5,
                    amplitude: 0.1,
                },
            ],
            sink_signs: false,
            picard_tol: 1e-8,
            residual_tol: 1e-9,
            max_picard: 200,
            linear_tol: 1e-10,
        }
    }
}

/// Velocity sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalVelocity {
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl NodalVelocity {
    pub fn sample<F>(grid: &Grid, mut field: F) -> Result<Self, AdrError>
    where
        F: FnMut(f64, f64) -> Result<(f64, f64), AdrError>,
    {
        let mut ux = vec![0.0; grid.len()];
        let mut uy = vec![0.0; grid.len()];
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let (u, v) = field(grid.x(i), grid.y(j))?;
                if !u.is_finite() || !v.is_finite() {
                    return Err(AdrError::Velocity { i, j });
                }
                let k = grid.index(i, j);
                ux[k] = u;
                uy[k] = v;
            }
        }
        Ok(Self { ux, uy })
    }

    pub fn from_flow(grid: &Grid, flow: &FlowField) -> Result<Self, AdrError> {
        Self::sample(grid, |x, y| flow.velocity(x, y))
    }
}

/// Concentration fields, indexed like [`Grid::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    pub grid: Grid,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub c3: Vec<f64>,
    pub picard_iterations: usize,
    /// Max-norm discrete residual over the three equations.
    pub residual: f64,
}

impl Fields {
    /// `∫ c3 dA` by the trapezoidal rule.
    pub fn c3_mass(&self) -> f64 {
        let g = &self.grid;
        let mut total = 0.0;
        for i in 0..g.nx {
            let wx = if i == 0 || i == g.nx - 1 { 0.5 } else { 1.0 };
            for j in 0..g.ny {
                let wy = if j == 0 || j == g.ny - 1 { 0.5 } else { 1.0 };
                total += wx * wy * self.c3[g.index(i, j)];
            }
        }
        total * g.dx() * g.dy()
    }

    /// x-coordinate of the centroid of `c3`.
    pub fn c3_centroid_x(&self) -> f64 {
        let g = &self.grid;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..g.nx {
            for j in 0..g.ny {
                let c = self.c3[g.index(i, j)];
                num += c * g.x(i);
                den += c;
            }
        }
        num / den
    }

    pub fn c3_max(&self) -> f64 {
        self.c3.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals, row-major band storage.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside band");
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU factorization without pivoting.
    ///
    /// Safe for the diagonally dominant M-matrices assembled here; fill-in stays in the band.
    pub fn factor(mut self) -> Result<BandedLu, AdrError> {
        let n = self.n;
        for k in 0..n {
            let pivot = self.data[self.slot(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(AdrError::ZeroPivot(k));
            }
            let i_end = (k + self.kl).min(n - 1);
            let j_end = (k + self.ku).min(n - 1);
            for i in k + 1..=i_end {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[sik] = l;
                let row_k = self.slot(k, k + 1);
                let row_i = self.slot(i, k + 1);
                for off in 0..j_end - k {
                    self.data[row_i + off] -= l * self.data[row_k + off];
                }
            }
        }
        Ok(BandedLu { lu: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
}

impl BandedLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = &self.lu;
        let n = m.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(m.kl);
            let mut s = x[i];
            for j in lo..i {
                s -= m.data[m.slot(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + m.ku).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=hi {
                s -= m.data[m.slot(i, j)] * x[j];
            }
            x[i] = s / m.data[m.slot(i, i)];
        }
        x
    }
}

#[inline]
fn is_dirichlet(grid: &Grid, i: usize, j: usize) -> bool {
    i == 0 || j == grid.ny - 1
}

/// `L + diag(reaction)` with Dirichlet rows replaced by identity.
fn assemble(grid: &Grid, vel: &NodalVelocity, d: f64, reaction: &[f64]) -> BandedMatrix {
    let (nx, ny) = (grid.nx, grid.ny);
    let (dx, dy) = (grid.dx(), grid.dy());
    let (ax, ay) = (d / (dx * dx), d / (dy * dy));
    let mut a = BandedMatrix::zeros(grid.len(), ny, ny);
    for i in 0..nx {
        for j in 0..ny {
            let k = grid.index(i, j);
            if is_dirichlet(grid, i, j) {
                a.add(k, k, 1.0);
                continue;
            }
            let mut diag = reaction[k] + 2.0 * ax + 2.0 * ay;
            if i == nx - 1 {
                a.add(k, grid.index(i - 1, j), -2.0 * ax);
            } else {
                let u = vel.ux[k];
                a.add(k, grid.index(i - 1, j), -ax - u.max(0.0) / dx);
                a.add(k, grid.index(i + 1, j), -ax + u.min(0.0) / dx);
                diag += u.abs() / dx;
            }
            if j == 0 {
                a.add(k, grid.index(i, j + 1), -2.0 * ay);
            } else {
                let v = vel.uy[k];
                a.add(k, grid.index(i, j - 1), -ay - v.max(0.0) / dy);
                a.add(k, grid.index(i, j + 1), -ay + v.min(0.0) / dy);
                diag += v.abs() / dy;
            }
            a.add(k, k, diag);
        }
    }
    a
}

fn source_vector(grid: &Grid, disc: &Disc) -> Vec<f64> {
    let mut q = vec![0.0; grid.len()];
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            if !is_dirichlet(grid, i, j) {
                q[grid.index(i, j)] = disc.value(grid.x(i), grid.y(j));
            }
        }
    }
    q
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn solve_linear(a: BandedMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>, AdrError> {
    let original = a.clone();
    let lu = a.factor()?;
    let mut x = lu.solve(b);
    for _ in 0..2 {
        let ax = original.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        if max_abs(&r) <= tol {
            return Ok(x);
        }
        let dx = lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
    }
    let ax = original.matvec(&x);
    let res = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).abs()).fold(0.0, f64::max);
    if res <= tol {
        Ok(x)
    } else {
        Err(AdrError::LinearResidual(res))
    }
}

/// Steady solution of the three-species system for a given nodal velocity.
pub fn solve_adr(
    params: &AdrParams,
    grid: &Grid,
    vel: &NodalVelocity,
    options: &AdrOptions,
) -> Result<Fields, AdrError> {
    params.validate()?;
    grid.validate()?;
    if vel.ux.len() != grid.len() || vel.uy.len() != grid.len() {
        return Err(AdrError::Grid("velocity does not match grid size".into()));
    }
    let n = grid.len();
    let q1 = source_vector(grid, &options.sources[0]);
    let q2 = source_vector(grid, &options.sources[1]);
    let sign = if options.sink_signs { -1.0 } else { 1.0 };
    let k12 = params.k12;

    let mut c1 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut residual = f64::INFINITY;
    while iterations < options.max_picard {
        iterations += 1;
        let r1: Vec<f64> = c2.iter().map(|v| sign * k12 * v).collect();
        let c1_new = solve_linear(assemble(grid, vel, params.d, &r1), &q1, options.linear_tol)?;
        let r2: Vec<f64> = c1_new.iter().map(|v| sign * k12 * v).collect();
        let c2_new = solve_linear(assemble(grid, vel, params.d, &r2), &q2, options.linear_tol)?;

        let rel = |new: &[f64], old: &[f64]| {
            let diff = new.iter().zip(old).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let scale = max_abs(new);
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        };
        change = rel(&c1_new, &c1).max(rel(&c2_new, &c2));
        c1 = c1_new;
        c2 = c2_new;
        if !change.is_finite() {
            break;
        }
        let res = equation_residuals(params, grid, vel, options, &c1, &c2, None);
        residual = res[0].max(res[1]);
        if change <= options.picard_tol && residual <= options.residual_tol {
            break;
        }
    }
    if !(change <= options.picard_tol && residual <= options.residual_tol) {
        return Err(AdrError::Picard {
            iterations,
            change,
            residual,
        });
    }

    let production: Vec<f64> = (0..n)
        .map(|k| {
            let (i, j) = (k / grid.ny, k % grid.ny);
            if is_dirichlet(grid, i, j) {
                0.0
            } else {
                sign * k12 * c1[k] * c2[k]
            }
        })
        .collect();
    let decay = vec![params.k3; n];
    let c3 = solve_linear(assemble(grid, vel, params.d, &decay), &production, options.linear_tol)?;

    let res = equation_residuals(params, grid, vel, options, &c1, &c2, Some(&c3));
    let residual = res.iter().copied().fold(0.0, f64::max);
    let min = c1.iter().chain(&c2).chain(&c3).copied().fold(f64::INFINITY, f64::min);
    if min < -1e-8 {
        log::warn!("negative concentration {min:e} in ADR solution for {params:?}");
    }
    Ok(Fields {
        grid: *grid,
        c1,
        c2,
        c3,
        picard_iterations: iterations,
        residual,
    })
}

/// Builds the flow for `params`, samples it on the grid and solves.
pub fn solve_sample(
    params: &AdrParams,
    grid: &Grid,
    flow: &FlowSettings,
    options: &AdrOptions,
) -> Result<Fields, AdrError> {
    let field = FlowField::new(params, flow)?;
    let vel = NodalVelocity::from_flow(grid, &field)?;
    solve_adr(params, grid, &vel, options)
}

/// Stencil residual of one scalar equation at node `(i, j)`: `u·∇c − DΔc`.
fn transport(grid: &Grid, vel: &NodalVelocity, d: f64, c: &[f64], i: usize, j: usize) -> f64 {
    let (dx, dy) = (grid.dx(), grid.dy());
    let k = grid.index(i, j);
    let at = |ii: usize, jj: usize| c[grid.index(ii, jj)];
    let ck = c[k];

    let (west, east) = if i == grid.nx - 1 {
        (at(i - 1, j), at(i - 1, j))
    } else {
        (at(i - 1, j), at(i + 1, j))
    };
    let (south, north) = if j == 0 {
        (at(i, j + 1), at(i, j + 1))
    } else {
        (at(i, j - 1), at(i, j + 1))
    };
    let diffusion = d * ((west - 2.0 * ck + east) / (dx * dx) + (south - 2.0 * ck + north) / (dy * dy));

    let mut advection = 0.0;
    if i != grid.nx - 1 {
        let u = vel.ux[k];
        advection += if u > 0.0 { u * (ck - west) / dx } else { u * (east - ck) / dx };
    }
    if j != 0 {
        let v = vel.uy[k];
        advection += if v > 0.0 { v * (ck - south) / dy } else { v * (north - ck) / dy };
    }
    advection - diffusion
}

fn equation_residuals(
    params: &AdrParams,
    grid: &Grid,
    vel: &NodalVelocity,
    options: &AdrOptions,
    c1: &[f64],
    c2: &[f64],
    c3: Option<&[f64]>,
) -> [f64; 3] {
    let sign = if options.sink_signs { -1.0 } else { 1.0 };
    let mut res = [0.0f64; 3];
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let k = grid.index(i, j);
            if is_dirichlet(grid, i, j) {
                res[0] = res[0].max(c1[k].abs());
                res[1] = res[1].max(c2[k].abs());
                if let Some(c3) = c3 {
                    res[2] = res[2].max(c3[k].abs());
                }
                continue;
            }
            let (x, y) = (grid.x(i), grid.y(j));
            let react = sign * params.k12 * c1[k] * c2[k];
            let e1 = transport(grid, vel, params.d, c1, i, j) + react - options.sources[0].value(x, y);
            let e2 = transport(grid, vel, params.d, c2, i, j) + react - options.sources[1].value(x, y);
            res[0] = res[0].max(e1.abs());
            res[1] = res[1].max(e2.abs());
            if let Some(c3) = c3 {
                let e3 = transport(grid, vel, params.d, c3, i, j) - react + params.k3 * c3[k];
                res[2] = res[2].max(e3.abs());
            }
        }
    }
    res
}

/// Max-norm residual of each of the three discrete equations, evaluated
/// pointwise from the stencil without assembling a matrix.
pub fn adr_residual(
    params: &AdrParams,
    vel: &NodalVelocity,
    options: &AdrOptions,
    fields: &Fields,
) -> [f64; 3] {
    equation_residuals(params, &fields.grid, vel, options, &fields.c1, &fields.c2, Some(&fields.c3))
}
