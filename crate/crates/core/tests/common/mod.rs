#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ne_invariant::{GameKind, GameSpec};

pub type Mat = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Mat {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn transpose(a: &Mat) -> Mat {
    let (m, n) = (a.len(), a[0].len());
    (0..n).map(|j| (0..m).map(|i| a[i][j]).collect()).collect()
}

pub fn scale(a: &Mat, s: f64) -> Mat {
    a.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn rel_err(est: &[f64], truth: &[f64]) -> f64 {
    let d = norm(&sub(est, truth));
    let t = norm(truth);
    if t > 0.0 { d / t } else { d }
}

fn lu(a: &Mat) -> Option<(Mat, Vec<usize>, f64)> {
    let n = a.len();
    let mut m = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c] == 0.0 {
            return None;
        }
        if p != c {
            m.swap(p, c);
            perm.swap(p, c);
            sign = -sign;
        }
        let (top, rest) = m.split_at_mut(c + 1);
        let pivot = &top[c];
        for row in rest.iter_mut() {
            let f = row[c] / pivot[c];
            row[c] = f;
            row[c + 1..].iter_mut().zip(&pivot[c + 1..]).for_each(|(v, p)| *v -= f * p);
        }
    }
    Some((m, perm, sign))
}

fn lu_solve(f: &Mat, perm: &[usize], b: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut y: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for k in 0..i {
            y[i] -= f[i][k] * y[k];
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= f[i][k] * y[k];
        }
        y[i] /= f[i][i];
    }
    y
}

/// Gaussian elimination with partial pivoting and two refinement sweeps.
pub fn solve_ge(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let (f, perm, _) = lu(a)?;
    let mut x = lu_solve(&f, &perm, b);
    for _ in 0..2 {
        let r = sub(b, &matvec(a, &x));
        let d = lu_solve(&f, &perm, &r);
        x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += di);
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `log10 |det a|`, `-inf` when singular.
pub fn log10_abs_det(a: &Mat) -> f64 {
    match lu(a) {
        Some((f, _, _)) => (0..f.len()).map(|i| f[i][i].abs().log10()).sum(),
        None => f64::NEG_INFINITY,
    }
}

pub struct Game {
    pub a: Mat,
    pub b: Mat,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub eta1: f64,
    pub eta2: f64,
    pub zero_sum: bool,
}

pub fn game(spec: &GameSpec) -> Game {
    let a = to_rows(&spec.a);
    let zero_sum = spec.kind == GameKind::ZeroSum;
    let b = scale(&transpose(&a), if zero_sum { -1.0 } else { 1.0 });
    Game { a, b, b1: to_vec(&spec.b1), b2: to_vec(&spec.b2), eta1: spec.eta1, eta2: spec.eta2, zero_sum }
}

/// `(x*, y*)` from `B x* = b2`, `A y* = b1`.
pub fn nash(g: &Game) -> Option<(Vec<f64>, Vec<f64>)> {
    Some((solve_ge(&g.b, &g.b2)?, solve_ge(&g.a, &g.b1)?))
}

pub fn altgd_step(g: &Game, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g1 = sub(&matvec(&g.a, y), &g.b1);
    let x1: Vec<f64> = x.iter().zip(&g1).map(|(xi, gi)| xi + g.eta1 * gi).collect();
    let g2 = sub(&matvec(&g.b, &x1), &g.b2);
    let y1: Vec<f64> = y.iter().zip(&g2).map(|(yi, gi)| yi + g.eta2 * gi).collect();
    (x1, y1)
}

/// Energy value and the sum of its terms' magnitudes.
pub fn energy(g: &Game, xs: &[f64], ys: &[f64], x: &[f64], y: &[f64]) -> (f64, f64) {
    let dx = norm(&sub(x, xs)).powi(2) / g.eta1;
    let dy = norm(&sub(y, ys)).powi(2) / g.eta2;
    let pay = dot(x, &sub(&matvec(&g.a, y), &g.b1));
    let cost = dot(y, &g.b2);
    let s = if g.zero_sum { 1.0 } else { -1.0 };
    (dx + s * dy + pay + s * cost, dx.abs() + dy.abs() + pay.abs() + cost.abs())
}

/// Fully mixed equilibrium of the simplex game with payoff `x^T M y` to
/// agent 1 and `y^T N x` to agent 2, from the two bordered indifference
/// systems.
pub fn fully_mixed(m: &Mat, n: &Mat) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = m.len();
    let bordered = |p: &Mat| -> Mat {
        let mut out: Mat = p.iter().map(|r| r.iter().copied().chain([-1.0]).collect()).collect();
        out.push(std::iter::repeat_n(1.0, k).chain([0.0]).collect());
        out
    };
    let mut rhs = vec![0.0; k];
    rhs.push(1.0);
    let y = solve_ge(&bordered(m), &rhs)?;
    let x = solve_ge(&bordered(n), &rhs)?;
    Some((x[..k].to_vec(), y[..k].to_vec()))
}
