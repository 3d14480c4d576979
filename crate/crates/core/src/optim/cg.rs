use crate::scalar::{axpy, dot, Scalar};

/// Solves `A x = b` for symmetric positive-definite `A` given only
/// matrix-vector products. Stops after `iters` iterations or once the squared
/// residual drops below `tol`.
pub fn conjugate_gradient<T: Scalar, F: FnMut(&[T]) -> Vec<T>>(mut avp: F, b: &[T], iters: usize, tol: f64) -> Vec<T> {
    let mut x = vec![T::zero(); b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if rr.f64() <= tol {
            break;
        }
        let ap = avp(&p);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let next = dot(&r, &r);
        let beta = next / rr;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = next;
    }
    x
}
