// Float methods through libm when std is off; inherent methods win otherwise.
#[allow(unused_imports)]
pub(crate) use num_traits::Float;

/// Sum with Neumaier compensation; masses are compared at 1e-12.
pub(crate) fn ksum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Solves a tridiagonal system in place (Thomas). `sub[0]` and `sup[n-1]` are ignored.
/// Requires diagonal dominance or SPD; returns false on a vanishing pivot.
pub(crate) fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> bool {
    let n = diag.len();
    if n == 0 {
        return true;
    }
    let mut c = alloc::vec![0.0; n];
    let mut b = diag[0];
    if b == 0.0 || !b.is_finite() {
        return false;
    }
    c[0] = sup[0] / b;
    rhs[0] /= b;
    for i in 1..n {
        b = diag[i] - sub[i] * c[i - 1];
        if b == 0.0 || !b.is_finite() {
            return false;
        }
        if i + 1 < n {
            c[i] = sup[i] / b;
        }
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / b;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ksum_recovers_cancelled_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(ksum(v.iter().copied()), 2.0);
    }

    #[test]
    fn tridiagonal_matches_dense_product() {
        let sub = [0.0, -1.0, -1.0, -1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let sup = [-1.0, -1.0, -1.0, 0.0];
        let x = [1.0, -2.0, 3.0, 0.5];
        let mut rhs = [0.0; 4];
        for i in 0..4 {
            rhs[i] = diag[i] * x[i];
            if i > 0 {
                rhs[i] += sub[i] * x[i - 1];
            }
            if i < 3 {
                rhs[i] += sup[i] * x[i + 1];
            }
        }
        assert!(solve_tridiagonal(&sub, &diag, &sup, &mut rhs));
        for i in 0..4 {
            assert!((rhs[i] - x[i]).abs() < 1e-14);
        }
    }
}
