use serde::{Deserialize, Serialize};

use super::{AdrError, AdrParams};

/// Shooting scans `f''(0)` over this interval.
const BRACKET: (f64, f64) = (-5.0, 5.0);
const SCAN_POINTS: usize = 101;
/// Integration is abandoned once any state component exceeds this magnitude.
const BLOW_UP: f64 = 1e8;
/// Residuals larger than this are treated as unreliable when looking for sign changes.
const SCAN_CAP: f64 = 1e3;
const SHOOT_TOL: f64 = 1e-8;
const MAX_SECANT: usize = 200;

/// Choice of similarity variable.
///
/// `TwoNu`: `eta = y sqrt(U0 / (2 nu x))`, `f''' + f f'' = 0`,
/// `u_y = sqrt(nu U0 / (2x)) (eta f' - f)`, `f(0) = -u_v sqrt(2 / (nu U0))`.
///
/// `Nu`: `eta = y sqrt(U0 / (nu x))`, `2 f''' + f f'' = 0`,
/// `u_y = 1/2 sqrt(nu U0 / x) (eta f' - f)`, `f(0) = -2 u_v / sqrt(nu U0)`.
///
/// Both describe the same velocity field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityScaling {
    #[default]
    TwoNu,
    Nu,
}

impl SimilarityScaling {
    /// `k` in `f''' = -k f f''`.
    fn curvature(self) -> f64 {
        match self {
            SimilarityScaling::TwoNu => 1.0,
            SimilarityScaling::Nu => 0.5,
        }
    }

    pub fn eta(self, x: f64, y: f64, u0: f64, nu: f64) -> f64 {
        match self {
            SimilarityScaling::TwoNu => y * (u0 / (2.0 * nu * x)).sqrt(),
            SimilarityScaling::Nu => y * (u0 / (nu * x)).sqrt(),
        }
    }

    /// Factor multiplying `eta f' - f` in the vertical velocity.
    fn uy_scale(self, x: f64, u0: f64, nu: f64) -> f64 {
        match self {
            SimilarityScaling::TwoNu => (nu * u0 / (2.0 * x)).sqrt(),
            SimilarityScaling::Nu => 0.5 * (nu * u0 / x).sqrt(),
        }
    }

    /// `f(0)` for a wall velocity `u_y(x, 0) = uv / sqrt(x)`.
    pub fn wall_value(self, uv: f64, u0: f64, nu: f64) -> f64 {
        match self {
            SimilarityScaling::TwoNu => -uv * (2.0 / (nu * u0)).sqrt(),
            SimilarityScaling::Nu => -2.0 * uv / (nu * u0).sqrt(),
        }
    }

    /// Converts a wall value expressed in the `TwoNu` scaling to this scaling.
    fn convert_two_nu(self, f0: f64) -> f64 {
        match self {
            SimilarityScaling::TwoNu => f0,
            SimilarityScaling::Nu => std::f64::consts::SQRT_2 * f0,
        }
    }
}

/// Similarity profile sampled on a uniform `eta` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlasiusSolution {
    pub eta: Vec<f64>,
    pub f: Vec<f64>,
    pub fp: Vec<f64>,
    pub fpp: Vec<f64>,
    /// The shot value `f''(0)`.
    pub fpp0: f64,
    pub scaling: SimilarityScaling,
}

impl BlasiusSolution {
    pub fn eta_max(&self) -> f64 {
        *self.eta.last().expect("non-empty grid")
    }

    /// `(f, f')` at `eta >= 0` by linear interpolation; beyond the grid the
    /// free-stream continuation `f' = f'(eta_max)` is used.
    pub fn at(&self, eta: f64) -> (f64, f64) {
        let n = self.eta.len();
        let eta_max = self.eta_max();
        if eta >= eta_max {
            let fp = self.fp[n - 1];
            return (self.f[n - 1] + (eta - eta_max) * fp, fp);
        }
        let h = eta_max / (n - 1) as f64;
        let pos = (eta.max(0.0) / h).min((n - 1) as f64);
        let k = (pos.floor() as usize).min(n - 2);
        let t = pos - k as f64;
        (
            self.f[k] + t * (self.f[k + 1] - self.f[k]),
            self.fp[k] + t * (self.fp[k + 1] - self.fp[k]),
        )
    }
}

#[inline]
fn rhs(y: [f64; 3], k: f64) -> [f64; 3] {
    [y[1], y[2], -k * y[0] * y[2]]
}

#[inline]
fn rk4_step(y: [f64; 3], h: f64, k: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = rhs(y, k);
    let k2 = rhs(add(y, k1, h / 2.0), k);
    let k3 = rhs(add(y, k2, h / 2.0), k);
    let k4 = rhs(add(y, k3, h), k);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        y[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

struct Shot {
    f0: f64,
    fp0: f64,
    k: f64,
    eta_max: f64,
    n: usize,
}

impl Shot {
    /// `f'(eta_max) - 1`, or `None` if the trajectory blows up.
    fn residual(&self, g: f64) -> Option<f64> {
        let h = self.eta_max / (self.n - 1) as f64;
        let mut y = [self.f0, self.fp0, g];
        for _ in 1..self.n {
            y = rk4_step(y, h, self.k);
            if !y.iter().all(|v| v.abs() < BLOW_UP) {
                return None;
            }
        }
        Some(y[1] - 1.0)
    }

    fn profile(&self, g: f64, scaling: SimilarityScaling) -> BlasiusSolution {
        let h = self.eta_max / (self.n - 1) as f64;
        let mut sol = BlasiusSolution {
            eta: Vec::with_capacity(self.n),
            f: Vec::with_capacity(self.n),
            fp: Vec::with_capacity(self.n),
            fpp: Vec::with_capacity(self.n),
            fpp0: g,
            scaling,
        };
        let mut y = [self.f0, self.fp0, g];
        for i in 0..self.n {
            if i > 0 {
                y = rk4_step(y, h, self.k);
            }
            sol.eta.push(if i + 1 == self.n { self.eta_max } else { i as f64 * h });
            sol.f.push(y[0]);
            sol.fp.push(y[1]);
            sol.fpp.push(y[2]);
        }
        sol
    }

    /// Illinois-modified secant inside a sign-change bracket.
    fn refine(&self, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> Option<(f64, f64)> {
        for _ in 0..MAX_SECANT {
            let c = b - fb * (b - a) / (fb - fa);
            let fc = self.residual(c)?;
            if fc.abs() <= SHOOT_TOL {
                return Some((c, fc));
            }
            if fc.signum() != fb.signum() {
                a = b;
                fa = fb;
            } else {
                fa /= 2.0;
            }
            b = c;
            fb = fc;
            if (b - a).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0) {
                break;
            }
        }
        (fb.abs() <= SHOOT_TOL).then_some((b, fb))
    }
}

/// Solves `f''' = -k f f''` with `f(0) = f0`, `f'(0) = fp0`, `f'(eta_max) = 1`
/// by RK4 shooting on `f''(0)`.
///
/// `f''(0)` is scanned over `[-5, 5]`; the first sign change of
/// `f'(eta_max) - 1` between two well-behaved trajectories is refined until the
/// far-field condition holds to `1e-8`.
pub fn shoot(
    f0: f64,
    fp0: f64,
    scaling: SimilarityScaling,
    eta_max: f64,
    n_eta: usize,
) -> Result<BlasiusSolution, AdrError> {
    if !(eta_max >= 8.0 && eta_max.is_finite()) || n_eta < 200 {
        return Err(AdrError::Params(format!(
            "need eta_max >= 8 and n_eta >= 200, got {eta_max} and {n_eta}"
        )));
    }
    if !f0.is_finite() || !fp0.is_finite() {
        return Err(AdrError::Params(format!("non-finite wall values f(0)={f0}, f'(0)={fp0}")));
    }
    let shot = Shot {
        f0,
        fp0,
        k: scaling.curvature(),
        eta_max,
        n: n_eta,
    };
    let step = (BRACKET.1 - BRACKET.0) / (SCAN_POINTS - 1) as f64;
    let scan: Vec<(f64, Option<f64>)> = (0..SCAN_POINTS)
        .map(|i| {
            let g = BRACKET.0 + i as f64 * step;
            (g, shot.residual(g))
        })
        .collect();

    let usable = |r: Option<f64>| r.filter(|v| v.abs() < SCAN_CAP);
    let mut best_failure: Option<(usize, f64)> = None;
    for w in scan.windows(2) {
        let (ga, ra) = w[0];
        let (gb, rb) = w[1];
        let (Some(fa), Some(fb)) = (usable(ra), usable(rb)) else {
            continue;
        };
        if fa.abs() <= SHOOT_TOL {
            return Ok(shot.profile(ga, scaling));
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        if fb.abs() <= SHOOT_TOL {
            return Ok(shot.profile(gb, scaling));
        }
        match shot.refine(ga, fa, gb, fb) {
            Some((g, _)) => return Ok(shot.profile(g, scaling)),
            None => best_failure = Some((MAX_SECANT, fa.abs().min(fb.abs()))),
        }
    }
    if let Some((g, Some(r))) = scan.last().map(|&(g, r)| (g, usable(r))) {
        if r.abs() <= SHOOT_TOL {
            return Ok(shot.profile(g, scaling));
        }
    }
    if let Some((iterations, residual)) = best_failure {
        return Err(AdrError::ShootingConvergence { iterations, residual });
    }
    Err(AdrError::ShootingBracket {
        low: scan[0].1.unwrap_or(f64::INFINITY),
        high: scan[SCAN_POINTS - 1].1.unwrap_or(f64::INFINITY),
    })
}

/// Similarity profile for the wall conditions `f'(0) = uh / U0`,
/// `f(0) = -u_v sqrt(2 / (nu U0))`, in the default scaling.
pub fn solve_blasius(params: &AdrParams, eta_max: f64, n_eta: usize) -> Result<BlasiusSolution, AdrError> {
    params.validate()?;
    let scaling = SimilarityScaling::TwoNu;
    shoot(
        scaling.wall_value(params.uv, params.u0, params.nu),
        params.uh / params.u0,
        scaling,
        eta_max,
        n_eta,
    )
}

/// Bounds that keep the shooting problem well posed.
///
/// Strong blowing or reverse slip has no attached similarity solution, so the
/// slip ratio `f'(0)` and the wall value `f(0)` (expressed in the `TwoNu`
/// scaling) are clamped into these intervals. The transpiration removed by the
/// clamp is restored as a uniform vertical drift `c / sqrt(x)`, which is
/// divergence free, so the wall still sees `u_y = u_v / sqrt(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regularization {
    pub slip_ratio: (f64, f64),
    pub wall_value: (f64, f64),
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            slip_ratio: (-0.2, 2.0),
            wall_value: (-0.25, 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSettings {
    pub eta_max: f64,
    pub n_eta: usize,
    pub scaling: SimilarityScaling,
    /// Use `u_y = 1/2 (nu U0 / x) (eta f' - f)` without the square root.
    pub uy_without_sqrt: bool,
    pub regularization: Option<Regularization>,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self {
            eta_max: 10.0,
            n_eta: 2001,
            scaling: SimilarityScaling::TwoNu,
            uy_without_sqrt: false,
            regularization: Some(Regularization::default()),
        }
    }
}

/// Boundary-layer velocity field over the plate.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub blasius: BlasiusSolution,
    pub u0: f64,
    pub nu: f64,
    pub uy_without_sqrt: bool,
    /// Coefficient of the uniform vertical drift `drift / sqrt(x)`.
    pub drift: f64,
}

impl FlowField {
    pub fn new(params: &AdrParams, settings: &FlowSettings) -> Result<Self, AdrError> {
        params.validate()?;
        let scaling = settings.scaling;
        let mut slip = params.uh / params.u0;
        let mut wall = SimilarityScaling::TwoNu.wall_value(params.uv, params.u0, params.nu);
        if let Some(reg) = settings.regularization {
            slip = slip.clamp(reg.slip_ratio.0, reg.slip_ratio.1);
            wall = wall.clamp(reg.wall_value.0, reg.wall_value.1);
        }
        let f0 = scaling.convert_two_nu(wall);
        let blasius = shoot(f0, slip, scaling, settings.eta_max, settings.n_eta)?;
        // wall-normal velocity carried by the similarity profile: -f(0) * uy_scale(x) = uv_eff / sqrt(x)
        let uv_eff = -f0 * scaling.uy_scale(1.0, params.u0, params.nu);
        Ok(Self {
            blasius,
            u0: params.u0,
            nu: params.nu,
            uy_without_sqrt: settings.uy_without_sqrt,
            drift: params.uv - uv_eff,
        })
    }

    /// `(u_x, u_y)` at `(x, y)`, `x > 0`, `y >= 0`.
    pub fn velocity(&self, x: f64, y: f64) -> Result<(f64, f64), AdrError> {
        if x <= 0.0 || !x.is_finite() {
            return Err(AdrError::UpstreamOfOrigin(x));
        }
        if y < 0.0 || !y.is_finite() {
            return Err(AdrError::Params(format!("y must be >= 0, got {y}")));
        }
        let scaling = self.blasius.scaling;
        let eta = scaling.eta(x, y, self.u0, self.nu);
        let (f, fp) = self.blasius.at(eta);
        let ux = fp * self.u0;
        let shape = eta * fp - f;
        let uy = if self.uy_without_sqrt {
            0.5 * (self.nu * self.u0 / x) * shape
        } else {
            scaling.uy_scale(x, self.u0, self.nu) * shape
        };
        Ok((ux, uy + self.drift / x.sqrt()))
    }
}
