//! Small dense linear algebra for the handful of 2..6 dimensional systems
//! that appear in steady-state solves and Levenberg-Marquardt steps.

/// Solves `a * x = b` in place by Gaussian elimination with partial pivoting.
///
/// `a` is row-major `n x n`. On success `b` holds `x`. Returns `None` when a
/// pivot falls below `rel_tol` times the largest absolute entry of `a`.
pub(crate) fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize, rel_tol: f64) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let tol = rel_tol * scale;
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= tol {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for r in (col + 1)..n {
            let factor = a[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= factor * a[col * n + k];
            }
            b[r] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    Some(())
}

/// Inverse of a row-major `n x n` matrix, or `None` if singular.
pub(crate) fn invert(a: &[f64], n: usize, rel_tol: f64) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut work = a.to_vec();
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        solve_in_place(&mut work, &mut e, n, rel_tol)?;
        for row in 0..n {
            inv[row * n + col] = e[row];
        }
    }
    Some(inv)
}

/// Stationary distribution of a continuous-time Markov generator.
///
/// `m[to][from]` holds the transition rate `from -> to` off the diagonal and
/// minus the total out-rate on it, so that `dp/dt = m * p`. The last balance
/// equation is replaced by normalization. Returns `None` if the kernel is not
/// one-dimensional (more than one closed class).
pub(crate) fn stationary<const N: usize>(m: &[[f64; N]; N]) -> Option<[f64; N]> {
    let mut a = vec![0.0; N * N];
    for (r, row) in m.iter().enumerate() {
        a[r * N..(r + 1) * N].copy_from_slice(row);
    }
    let mut b = vec![0.0; N];
    for k in 0..N {
        a[(N - 1) * N + k] = 1.0;
    }
    b[N - 1] = 1.0;
    solve_in_place(&mut a, &mut b, N, 1e-13)?;
    let mut p = [0.0; N];
    for (dst, v) in p.iter_mut().zip(b) {
        // round-off can leave -1e-17 on empty states
        *dst = if v < 0.0 && v > -1e-12 { 0.0 } else { v };
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return None;
    }
    Some(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = vec![2.0, 1.0, 1.0, 3.0];
        let mut b = vec![3.0, 5.0];
        solve_in_place(&mut a, &mut b, 2, 1e-14).unwrap();
        assert!((b[0] - 0.8).abs() < 1e-14);
        assert!((b[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_is_rejected() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(solve_in_place(&mut a, &mut b, 2, 1e-12).is_none());
    }

    #[test]
    fn inverse_round_trip() {
        let a = vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = invert(&a, 3, 1e-14).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn two_closed_classes_have_no_unique_stationary_state() {
        // states 0 and 1 never communicate
        let m = [[0.0, 0.0], [0.0, 0.0]];
        assert!(stationary(&m).is_none());
    }
}
