//! Butcher tableau pairs and linear stability analysis.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Explicit,
    Imex,
}

/// Explicit tableau `(a, b, c)` paired with an implicit tableau `(ã, b̃, c̃)`.
///
/// Explicit methods carry a copy of their own coefficients as the implicit
/// part, so the stability recursion treats both terms alike.
#[derive(Debug, Clone, PartialEq)]
pub struct TableauPair {
    pub name: String,
    pub kind: MethodKind,
    pub order: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub a_imp: Vec<Vec<f64>>,
    pub b_imp: Vec<f64>,
    pub c_imp: Vec<f64>,
}

fn row_sums(a: &[Vec<f64>]) -> Vec<f64> {
    a.iter().map(|r| r.iter().sum()).collect()
}

fn square(rows: &[&[f64]], s: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let mut v = r.to_vec();
            v.resize(s, 0.0);
            v
        })
        .collect()
}

impl TableauPair {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn is_imex(&self) -> bool {
        self.kind == MethodKind::Imex
    }

    fn explicit(name: &str, order: usize, a: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        let c = row_sums(&a);
        TableauPair {
            name: name.into(),
            kind: MethodKind::Explicit,
            order,
            a_imp: a.clone(),
            b_imp: b.clone(),
            c_imp: c.clone(),
            a,
            b,
            c,
        }
    }

    fn imex(name: &str, order: usize, a: Vec<Vec<f64>>, b: Vec<f64>, a_imp: Vec<Vec<f64>>, b_imp: Vec<f64>) -> Self {
        TableauPair {
            name: name.into(),
            kind: MethodKind::Imex,
            order,
            c: row_sums(&a),
            c_imp: row_sums(&a_imp),
            a,
            b,
            a_imp,
            b_imp,
        }
    }

    /// Diagonal coefficient shared by the implicit stages (zero for explicit methods).
    pub fn implicit_diagonal(&self) -> f64 {
        if self.is_imex() {
            self.a_imp[1][1]
        } else {
            0.0
        }
    }

    /// Checks the structural invariants of the pair.
    pub fn validate(&self) -> Result<()> {
        let s = self.stages();
        let shapes_ok = self.a.len() == s
            && self.a_imp.len() == s
            && self.b_imp.len() == s
            && self.a.iter().chain(&self.a_imp).all(|r| r.len() == s);
        if !shapes_ok {
            return Err(Error::config(format!("tableau {} has inconsistent shapes", self.name)));
        }
        for i in 0..s {
            for j in i..s {
                if self.a[i][j] != 0.0 {
                    return Err(Error::config(format!("explicit tableau {} is not strictly lower", self.name)));
                }
                if j > i && self.a_imp[i][j] != 0.0 {
                    return Err(Error::config(format!("implicit tableau {} is not lower", self.name)));
                }
            }
        }
        if self.is_imex() {
            let g = self.a_imp[1][1];
            if self.a_imp[0][0] != 0.0 || (1..s).any(|i| self.a_imp[i][i] != g) {
                return Err(Error::config(format!("implicit tableau {} is not ESDIRK", self.name)));
            }
        }
        Ok(())
    }
}

/// Giraldo-Kelly-Constantinescu ARK2 with free coefficient `a32`.
pub fn ark2_with_a32(name: &str, a32: f64) -> TableauPair {
    let r2 = 2f64.sqrt();
    let g = 1.0 - 1.0 / r2;
    let w = 1.0 / (2.0 * r2);
    let a = vec![vec![0.0, 0.0, 0.0], vec![2.0 - r2, 0.0, 0.0], vec![1.0 - a32, a32, 0.0]];
    let a_imp = vec![vec![0.0, 0.0, 0.0], vec![g, g, 0.0], vec![w, w, g]];
    let b = vec![w, w, g];
    TableauPair::imex(name, 2, a, b.clone(), a_imp, b)
}

fn ark3() -> TableauPair {
    let g = 1767732205903.0 / 4055673282236.0;
    let a_imp = square(
        &[
            &[0.0],
            &[g, g],
            &[2746238789719.0 / 10658868560708.0, -640167445237.0 / 6845629431997.0, g],
            &[
                1471266399579.0 / 7840856788654.0,
                -4482444167858.0 / 7529755066697.0,
                11266239266428.0 / 11593286722821.0,
                g,
            ],
        ],
        4,
    );
    let a = square(
        &[
            &[],
            &[1767732205903.0 / 2027836641118.0],
            &[5535828885825.0 / 10492691773637.0, 788022342437.0 / 10882634858940.0],
            &[
                6485989280629.0 / 16251701735622.0,
                -4246266847089.0 / 9704473918619.0,
                10755448449292.0 / 10357097424841.0,
            ],
        ],
        4,
    );
    let b = a_imp[3].clone();
    TableauPair::imex("ARK3", 3, a, b.clone(), a_imp, b)
}

fn ark4() -> TableauPair {
    let g = 0.25;
    let a_imp = square(
        &[
            &[0.0],
            &[g, g],
            &[8611.0 / 62500.0, -1743.0 / 31250.0, g],
            &[5012029.0 / 34652500.0, -654441.0 / 2922500.0, 174375.0 / 388108.0, g],
            &[
                15267082809.0 / 155376265600.0,
                -71443401.0 / 120774400.0,
                730878875.0 / 902184768.0,
                2285395.0 / 8070912.0,
                g,
            ],
            &[82889.0 / 524892.0, 0.0, 15625.0 / 83664.0, 69875.0 / 102672.0, -2260.0 / 8211.0, g],
        ],
        6,
    );
    let a = square(
        &[
            &[],
            &[0.5],
            &[13861.0 / 62500.0, 6889.0 / 62500.0],
            &[
                -116923316275.0 / 2393684061468.0,
                -2731218467317.0 / 15368042101831.0,
                9408046702089.0 / 11113171139209.0,
            ],
            &[
                -451086348788.0 / 2902428689909.0,
                -2682348792572.0 / 7519795681897.0,
                12662868775082.0 / 11960479115383.0,
                3355817975965.0 / 11060851509271.0,
            ],
            &[
                647845179188.0 / 3216320057751.0,
                73281519250.0 / 8382639484533.0,
                552539513391.0 / 3454668386233.0,
                3354512671639.0 / 8306763924573.0,
                4040.0 / 17871.0,
            ],
        ],
        6,
    );
    let b = a_imp[5].clone();
    TableauPair::imex("ARK4", 4, a, b.clone(), a_imp, b)
}

fn normalize(name: &str) -> String {
    name.chars()
        .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Names accepted by [`tableau`].
pub const METHOD_NAMES: [&str; 7] = ["ARK2c", "ARK2e", "ARK3", "ARK4", "RK2a", "RK3", "RK4"];

/// Looks up a method by name (case, spaces and dashes ignored).
///
/// `ARK2e` is the ARK2 family member with `a32 = (3 + 2√2)/6`.
pub fn tableau(name: &str) -> Result<TableauPair> {
    let tab = match normalize(name).as_str() {
        "ark2c" => ark2_with_a32("ARK2c", 0.5),
        "ark2e" => ark2_with_a32("ARK2e", (3.0 + 2.0 * 2f64.sqrt()) / 6.0),
        "ark3" => ark3(),
        "ark4" => ark4(),
        "rk2a" => TableauPair::explicit("RK2a", 2, vec![vec![0.0, 0.0], vec![0.5, 0.0]], vec![0.0, 1.0]),
        "rk3" => TableauPair::explicit(
            "RK3",
            3,
            vec![vec![0.0, 0.0, 0.0], vec![0.5, 0.0, 0.0], vec![-1.0, 2.0, 0.0]],
            vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        ),
        "rk4" => TableauPair::explicit(
            "RK4",
            4,
            vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        ),
        _ => {
            return Err(Error::config(format!(
                "unknown time integrator '{name}' (expected one of {})",
                METHOD_NAMES.join(", ")
            )))
        }
    };
    Ok(tab)
}

/// Amplification factor `R(z, w)` for `y' = λy + μy` with `z = λΔt`
/// treated by the explicit part and `w = μΔt` by the implicit part.
pub fn stability_function(tab: &TableauPair, z: Complex64, w: Complex64) -> Result<Complex64> {
    let s = tab.stages();
    let mut y = vec![Complex64::new(0.0, 0.0); s];
    for i in 0..s {
        let mut sum = Complex64::new(1.0, 0.0);
        for j in 0..i {
            sum += (tab.a[i][j] * z + tab.a_imp[i][j] * w) * y[j];
        }
        let den = Complex64::new(1.0, 0.0) - tab.a_imp[i][i] * w;
        if den.norm() < 1e-14 {
            return Err(Error::Pole { stage: i + 1 });
        }
        y[i] = sum / den;
    }
    let mut r = Complex64::new(1.0, 0.0);
    for j in 0..s {
        r += (tab.b[j] * z + tab.b_imp[j] * w) * y[j];
    }
    Ok(r)
}

/// Rectangular sampling of the explicit-eigenvalue plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanWindow {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub n_re: usize,
    pub n_im: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub z: Complex64,
    /// Largest `|R(z, w)|` over the stiff set (`|R(z, 0)|` when the set is empty).
    pub max_abs: f64,
}

impl ScanPoint {
    pub fn stable(&self) -> bool {
        self.max_abs <= 1.0
    }
}

/// Evaluates `max_w |R(z, w)|` over the stiff set at every grid point `z`.
/// Points where a stage factor is singular are reported as unstable.
pub fn stability_region_scan(tab: &TableauPair, stiff: &[Complex64], window: &ScanWindow) -> Vec<ScanPoint> {
    let default = [Complex64::new(0.0, 0.0)];
    let set: &[Complex64] = if stiff.is_empty() { &default } else { stiff };
    let lin = |(lo, hi): (f64, f64), n: usize, k: usize| {
        if n <= 1 {
            lo
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(window.n_re * window.n_im);
    for ki in 0..window.n_im {
        let im = lin(window.im, window.n_im, ki);
        for kr in 0..window.n_re {
            let z = Complex64::new(lin(window.re, window.n_re, kr), im);
            let max_abs = set
                .iter()
                .map(|w| stability_function(tab, z, *w).map(|r| r.norm()).unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max);
            out.push(ScanPoint { z, max_abs });
        }
    }
    out
}

/// Largest `t` along the ray `t·dir` (up to `t_max`) for which every point from
/// the origin is stable, located by bisection after a uniform march of `n` steps.
pub fn stable_extent(tab: &TableauPair, stiff: &[Complex64], dir: Complex64, t_max: f64, n: usize) -> f64 {
    let stable = |t: f64| {
        let z = dir * t;
        let default = [Complex64::new(0.0, 0.0)];
        let set: &[Complex64] = if stiff.is_empty() { &default } else { stiff };
        set.iter()
            .all(|w| stability_function(tab, z, *w).map(|r| r.norm() <= 1.0 + 1e-12).unwrap_or(false))
    };
    let h = t_max / n as f64;
    let mut last = 0.0;
    for k in 1..=n {
        let t = k as f64 * h;
        if !stable(t) {
            let (mut lo, mut hi) = (last, t);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if stable(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return lo;
        }
        last = t;
    }
    t_max
}
