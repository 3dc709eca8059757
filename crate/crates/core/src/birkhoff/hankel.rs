//! The solutions `y_k(x, rho)` of the model equation with asymptotics
//! `exp(rho R_k x)` for `rho` on a fixed ray, their duals `y*_k`, and the
//! weights `F_{k nu}`, `F*_k`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{cpow, det, CMatrix, C64, ONE, ZERO};
use crate::singular_ode::{build_series, CharData, FrobeniusBasis};

use super::exponential::{stokes_from_e, ExponentialSolutions, StokesData};
use super::sector::SectorData;

const PANEL_NODES: usize = 16;

/// Barycentric interpolant on Chebyshev–Lobatto nodes of `[a, b]`.
#[derive(Debug, Clone)]
struct ChebPanel {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    values: Vec<Vec<C64>>,
}

impl ChebPanel {
    fn nodes(a: f64, b: f64) -> Vec<f64> {
        let m = PANEL_NODES - 1;
        (0..=m).map(|i| 0.5 * (a + b) - 0.5 * (b - a) * (PI * i as f64 / m as f64).cos()).collect()
    }

    fn eval(&self, r: f64) -> Vec<C64> {
        let m = self.nodes.len() - 1;
        let dim = self.values[0].len();
        let mut num = vec![ZERO; dim];
        let mut den = 0.0;
        for (i, (x, v)) in self.nodes.iter().zip(&self.values).enumerate() {
            let d = r - x;
            if d == 0.0 {
                return v.clone();
            }
            let mut w = if i % 2 == 0 { 1.0 } else { -1.0 };
            if i == 0 || i == m {
                w *= 0.5;
            }
            let c = w / d;
            den += c;
            for (acc, val) in num.iter_mut().zip(v) {
                *acc += val * c;
            }
        }
        num.into_iter().map(|v| v / den).collect()
    }
}

/// `y_k`, `y*_k` and the normalized quantities for `rho = |rho| e^{i alpha}`.
#[derive(Debug, Clone)]
pub struct HankelRay {
    pub sector: SectorData,
    pub cd: CharData,
    pub alpha: f64,
    /// `arg rho_hat`.
    pub hat_alpha: f64,
    pub stokes: StokesData,
    pub frob: Arc<FrobeniusBasis>,
    pub es: ExponentialSolutions,
    /// Below this `|rho x|` the series form of `y_k` is used.
    pub r_lo: f64,
    /// From this `|rho x|` on the asymptotic series is used.
    pub r_hi: f64,
    /// Largest mismatch between neighbouring regimes at the switch points.
    pub switch_defect: f64,
    tables: Vec<Vec<ChebPanel>>,
}

impl HankelRay {
    pub fn new(cd: &CharData, sector: SectorData, alpha: f64) -> Result<Self> {
        if sector.n != cd.n {
            return Err(Error::InvalidConfig("sector and edge orders differ".into()));
        }
        if !sector.contains(C64::from_polar(1.0, alpha)) {
            return Err(Error::RayOutsideSector { arg: alpha });
        }
        let es = ExponentialSolutions::new(cd);
        let frob = Arc::new(build_series(cd, 1e-16));
        let stokes = stokes_from_e(&es, &frob, 0.5)?;
        let hat_alpha = sector.hat_arg(alpha);
        let (r_lo, r_hi) = (1.0, 16.0);
        let mut ray = HankelRay {
            sector,
            cd: cd.clone(),
            alpha,
            hat_alpha,
            stokes,
            frob,
            es,
            r_lo,
            r_hi,
            switch_defect: 0.0,
            tables: Vec::new(),
        };
        let edges = [1.0, 2.0, 4.0, 8.0, 16.0];
        for s in 0..cd.n {
            let mut panels = Vec::new();
            for w in edges.windows(2) {
                let nodes = ChebPanel::nodes(w[0], w[1]);
                let ws: Vec<C64> = nodes.iter().map(|r| C64::from_polar(*r, hat_alpha)).collect();
                let values = ray.es.eval_normalized(s + 1, &ws)?;
                panels.push(ChebPanel { a: w[0], b: w[1], nodes, values });
            }
            ray.tables.push(panels);
        }
        let mut defect: f64 = 0.0;
        for s in 0..cd.n {
            let lo_tab = ray.tables[s][0].eval(r_lo);
            let lo_ser = ray.series_normalized(s, r_lo)?;
            let hi_tab = ray.tables[s].last().unwrap().eval(r_hi);
            let (hi_asy, _) = ray.es.series[s].normalized(C64::from_polar(r_hi, hat_alpha), cd.n);
            for nu in 0..cd.n {
                defect = defect.max((lo_tab[nu] - lo_ser[nu]).norm() / lo_ser[nu].norm().max(1e-300));
                defect = defect.max((hi_tab[nu] - hi_asy[nu]).norm() / hi_asy[nu].norm().max(1e-300));
            }
        }
        ray.switch_defect = defect;
        if defect > 1e-7 {
            return Err(Error::GapRegion { value: if defect.is_nan() { r_lo } else { r_hi } });
        }
        Ok(ray)
    }

    pub fn n(&self) -> usize {
        self.cd.n
    }

    pub fn rho(&self, rho_abs: f64) -> C64 {
        C64::from_polar(rho_abs, self.alpha)
    }

    /// `e_{s+1}` from the Stokes representation through the `C_j`, normalized.
    fn series_normalized(&self, s: usize, r: f64) -> Result<Vec<C64>> {
        let n = self.n();
        let w = C64::from_polar(r, self.hat_alpha);
        let mut e = vec![ZERO; n];
        for j in 0..n {
            let c = self.frob.eval_c_complex(j + 1, w, ONE)?;
            let b = self.stokes.beta[(s, j)];
            for nu in 0..n {
                e[nu] += b * c[nu];
            }
        }
        let eps = self.es.eps[s];
        let ex = (eps * w).exp();
        Ok(e.iter().enumerate().map(|(nu, v)| v / (eps.powi(nu as i32) * ex)).collect())
    }

    /// `e_{s+1}^{(nu)}(w) / (eps^nu e^{eps w})` at `w = r e^{i hat_alpha}`.
    pub fn e_normalized(&self, s: usize, r: f64) -> Result<Vec<C64>> {
        if r < self.r_lo {
            self.series_normalized(s, r)
        } else if r >= self.r_hi {
            let (v, err) = self.es.series[s].normalized(C64::from_polar(r, self.hat_alpha), self.n());
            if err > 1e-10 {
                return Err(Error::GapRegion { value: r });
            }
            Ok(v)
        } else {
            let p = self.tables[s].iter().find(|p| r <= p.b).unwrap();
            debug_assert!(r >= p.a);
            Ok(p.eval(r))
        }
    }

    /// `N_{k nu} = y_k^{(nu)}(x, rho) / ((rho R_k)^nu e^{rho R_k x})`.
    pub fn n_values(&self, k: usize, x: f64, rho_abs: f64) -> Result<Vec<C64>> {
        self.e_normalized(self.sector.e_index(k), rho_abs * x)
    }

    /// `y_k^{(nu)}(x, rho)`, `nu = 0..n-1`.
    pub fn y(&self, k: usize, x: f64, rho_abs: f64) -> Result<Vec<C64>> {
        let rho = self.rho(rho_abs);
        let rr = rho * self.sector.r[k - 1];
        let ex = (rr * x).exp();
        Ok(self.n_values(k, x, rho_abs)?.iter().enumerate().map(|(nu, v)| v * rr.powi(nu as i32) * ex).collect())
    }

    /// `y*_j(t, rho)` from the minors of `[y_k^{(nu)}(t)]`, `nu <= n-2`, `k != j`.
    pub fn y_star(&self, j: usize, t: f64, rho_abs: f64) -> Result<C64> {
        let n = self.n();
        let rho = self.rho(rho_abs);
        let ys: Vec<Vec<C64>> = (1..=n).filter(|k| *k != j).map(|k| self.y(k, t, rho_abs)).collect::<Result<_>>()?;
        let m = CMatrix::from_fn(n - 1, n - 1, |nu, col| ys[col][nu]);
        let sign = if (n - j) % 2 == 0 { 1.0 } else { -1.0 };
        Ok(det(&m) * sign / (rho.powi(((n - 1) * (n - 2) / 2) as i32) * self.sector.omega))
    }

    /// Whether `|rho x|` uses the small-argument branch of the weights.
    pub fn is_small(x: f64, rho_abs: f64) -> bool {
        rho_abs * x <= 1.0
    }

    /// `U0_{k nu}(x, rho) = y_k^{(nu)} / (rho^nu F_{k nu}(rho x))`.
    pub fn u0(&self, k: usize, x: f64, rho_abs: f64) -> Result<Vec<C64>> {
        let nv = self.n_values(k, x, rho_abs)?;
        if !Self::is_small(x, rho_abs) {
            return Ok(nv);
        }
        let rho = self.rho(rho_abs);
        let rk = self.sector.r[k - 1];
        let ex = (rho * rk * x).exp();
        let mu1 = self.cd.mu[0];
        Ok(nv.iter().enumerate().map(|(nu, v)| v * rk.powi(nu as i32) * ex / cpow(rho * x, mu1 - nu as f64)).collect())
    }

    /// `U0*_j(t, rho) = y*_j(t) / F*_j(rho t)`.
    pub fn u0_star(&self, j: usize, t: f64, rho_abs: f64) -> Result<C64> {
        let n = self.n();
        if Self::is_small(t, rho_abs) {
            let rho = self.rho(rho_abs);
            let fs = cpow(rho * t, C64::from((n - 1) as f64) - self.cd.mu[n - 1]);
            return Ok(self.y_star(j, t, rho_abs)? / fs);
        }
        let cols: Vec<(usize, Vec<C64>)> =
            (1..=n).filter(|k| *k != j).map(|k| Ok((k, self.n_values(k, t, rho_abs)?))).collect::<Result<_>>()?;
        let m = CMatrix::from_fn(n - 1, n - 1, |nu, col| {
            let (k, v) = &cols[col];
            self.sector.r[k - 1].powi(nu as i32) * v[nu]
        });
        let sign = if (n - j) % 2 == 0 { 1.0 } else { -1.0 };
        Ok(det(&m) * sign / self.sector.omega)
    }

    /// Relative defect of `det[y_k^{(nu-1)}] = rho^{n(n-1)/2} Omega`.
    pub fn det_defect(&self, x: f64, rho_abs: f64) -> Result<f64> {
        let n = self.n();
        let omega = self.sector.omega;
        if Self::is_small(x, rho_abs) {
            let ys: Vec<Vec<C64>> = (1..=n).map(|k| self.y(k, x, rho_abs)).collect::<Result<_>>()?;
            let d = det(&CMatrix::from_fn(n, n, |k, nu| ys[k][nu]));
            let want = self.rho(rho_abs).powi((n * (n - 1) / 2) as i32) * omega;
            return Ok((d / want - ONE).norm());
        }
        let ns: Vec<Vec<C64>> = (1..=n).map(|k| self.n_values(k, x, rho_abs)).collect::<Result<_>>()?;
        let d = det(&CMatrix::from_fn(n, n, |k, nu| self.sector.r[k].powi(nu as i32) * ns[k][nu]));
        Ok((d / omega - ONE).norm())
    }

    /// `rho^{1-n} sum_j y_j(x) y*_j(t)`, to be compared with the Cauchy function.
    pub fn green(&self, x: f64, t: f64, rho_abs: f64) -> Result<C64> {
        let n = self.n();
        let mut s = ZERO;
        for j in 1..=n {
            s += self.y(j, x, rho_abs)?[0] * self.y_star(j, t, rho_abs)?;
        }
        Ok(s * self.rho(rho_abs).powi(1 - n as i32))
    }

    /// `max_{k, nu} |N_{k nu} - 1|` at `|rho| x = w`: the `y_k` asymptotic defect at one point.
    pub fn asymptotic_defect(&self, w: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 1..=self.n() {
            for v in self.n_values(k, w, 1.0)? {
                worst = worst.max((v - ONE).norm());
            }
        }
        Ok(worst)
    }
}
