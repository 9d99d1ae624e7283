//! Dense row-major matrix kernels backing the graph ops.
//!
//! All matrices are row-major `Vec<f64>` slices. The heavy lifting is
//! delegated to `matrixmultiply::dgemm`; the wrappers here fix the stride
//! bookkeeping so callers only think in (rows, cols).

/// c = a @ b, with a: m×k, b: k×n, c: m×n (c is overwritten).
pub fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c += a @ bᵀ, with a: m×k, b: n×k (interpreted transposed), c: m×n.
pub fn matmul_nt_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c += aᵀ @ b, with a: k×m (interpreted transposed), b: k×n, c: m×n.
pub fn matmul_tn_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_1x2_2x1() {
        // [1,2] @ [3,4]ᵀ = [11]
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let mut c = [0.0];
        matmul(1, 2, 1, &a, &b, &mut c);
        assert_eq!(c[0], 11.0);
    }

    #[test]
    fn matmul_2x3_3x2() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        matmul(2, 3, 2, &a, &b, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_variants_agree_with_plain() {
        let a = [1.0, -2.0, 0.5, 3.0, 4.0, -1.0]; // 2×3
        let b = [2.0, 1.0, 0.0, -1.0, 1.5, 2.5]; // 3×2
        let mut c = [0.0; 4];
        matmul(2, 3, 2, &a, &b, &mut c);

        // a @ bᵀ where b is stored as 2×3 (the transpose of the 3×2 above)
        let bt = [2.0, 0.0, 1.5, 1.0, -1.0, 2.5];
        let mut c2 = [0.0; 4];
        matmul_nt_acc(2, 3, 2, &a, &bt, &mut c2);
        assert_eq!(c, c2);

        // aᵀ @ b where a is stored as 3×2 (the transpose of the 2×3 above)
        let at = [1.0, 3.0, -2.0, 4.0, 0.5, -1.0];
        let mut c3 = [0.0; 4];
        matmul_tn_acc(2, 3, 2, &at, &b, &mut c3);
        assert_eq!(c, c3);
    }
}
