//! Test-only reference integrators for linear rate equations.
//!
//! For `dp/dt = M p` one classical RK4 step of size `h` is the matrix
//! polynomial `I + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24`; `n` steps are its
//! `n`-th power, computed here by repeated squaring. Propagators are stored as
//! their deviation `D = P - I`, composed with `(I + A)(I + B) = I + A + B + AB`,
//! so rates far below the fastest one are not rounded away against the unit diagonal.

#![allow(clippy::needless_range_loop)]

type Mat<const N: usize> = [[f64; N]; N];

fn matmul<const N: usize>(a: &Mat<N>, b: &Mat<N>) -> Mat<N> {
    let mut c = [[0.0; N]; N];
    for i in 0..N {
        for k in 0..N {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..N {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Deviation from identity of the product of two propagators.
fn compose<const N: usize>(a: &Mat<N>, b: &Mat<N>) -> Mat<N> {
    let mut c = matmul(a, b);
    for i in 0..N {
        for j in 0..N {
            c[i][j] += a[i][j] + b[i][j];
        }
    }
    c
}

fn rk4_step_delta<const N: usize>(m: &Mat<N>, h: f64) -> Mat<N> {
    let mut hm = *m;
    hm.iter_mut().flatten().for_each(|v| *v *= h);
    let mut out = [[0.0; N]; N];
    let mut term = hm;
    for k in 1..=4 {
        if k > 1 {
            term = matmul(&term, &hm);
        }
        let inv = 1.0 / (1..=k).product::<usize>() as f64;
        for i in 0..N {
            for j in 0..N {
                out[i][j] += term[i][j] * inv;
            }
        }
    }
    out
}

fn deltapow<const N: usize>(base: &Mat<N>, mut n: u64) -> Mat<N> {
    let mut acc = [[0.0; N]; N];
    let mut b = *base;
    while n > 0 {
        if n & 1 == 1 {
            acc = compose(&acc, &b);
        }
        b = compose(&b, &b);
        n >>= 1;
    }
    acc
}

/// `(I + d) p`.
fn apply_delta<const N: usize>(d: &Mat<N>, p: &[f64; N]) -> [f64; N] {
    let mut out = *p;
    for i in 0..N {
        out[i] += (0..N).map(|j| d[i][j] * p[j]).sum::<f64>();
    }
    out
}

fn max_rate<const N: usize>(m: &Mat<N>) -> f64 {
    (0..N).map(|i| m[i][i].abs()).fold(0.0, f64::max)
}

/// Propagates `p0` through `duration` with RK4 steps no larger than `0.01 / max_rate`.
pub fn rk4_propagate<const N: usize>(m: &Mat<N>, p0: [f64; N], duration: f64) -> [f64; N] {
    if duration <= 0.0 {
        return p0;
    }
    let n = (duration * max_rate(m) / 0.01).ceil().max(1.0) as u64;
    let step = rk4_step_delta(m, duration / n as f64);
    apply_delta(&deltapow(&step, n), &p0)
}

/// State at each of the ascending `times`, starting from `p0` at `t = 0`.
pub fn rk4_trajectory<const N: usize>(m: &Mat<N>, p0: [f64; N], times: &[f64]) -> Vec<[f64; N]> {
    let mut t = 0.0;
    let mut p = p0;
    times
        .iter()
        .map(|&next| {
            p = rk4_propagate(m, p, next - t);
            t = next;
            p
        })
        .collect()
}

/// Integrates from `t = 100 / (smallest nonzero transition rate)`, doubling the
/// horizon until successive states agree to 1e-14 (slow collective modes can
/// relax much more slowly than any single rate).
pub fn rk4_long_time<const N: usize>(m: &Mat<N>, p0: [f64; N]) -> [f64; N] {
    let mut min_rate = f64::INFINITY;
    for i in 0..N {
        for j in 0..N {
            if i != j && m[i][j] > 0.0 {
                min_rate = min_rate.min(m[i][j]);
            }
        }
    }
    let horizon = 100.0 / min_rate;
    let n = (horizon * max_rate(m) / 0.01).ceil().max(1.0) as u64;
    let mut prop = deltapow(&rk4_step_delta(m, horizon / n as f64), n);
    let mut p = apply_delta(&prop, &p0);
    for _ in 0..60 {
        prop = compose(&prop, &prop);
        // columns of an exact deviation sum to zero; undo round-off drift
        for j in 0..N {
            let total: f64 = (0..N).map(|i| prop[i][j]).sum();
            prop[j][j] -= total;
        }
        let next = apply_delta(&prop, &p0);
        let delta = (0..N).map(|k| (next[k] - p[k]).abs()).fold(0.0, f64::max);
        p = next;
        if delta < 1e-14 {
            break;
        }
    }
    p
}
