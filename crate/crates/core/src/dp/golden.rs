//! Golden-section search for the minimum of a unimodal scalar function.

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub argmin: f64,
    pub value: f64,
}

/// Minimizes `f` on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// The endpoints are always candidates, so boundary minima are returned
/// exactly. Equal values resolve to the smaller argument.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Minimum {
    let f_lo = f(lo);
    if hi <= lo {
        return Minimum {
            argmin: lo,
            value: f_lo,
        };
    }
    let f_hi = f(hi);
    let mut best = Minimum {
        argmin: lo,
        value: f_lo,
    };
    let consider = |m: Minimum, best: &mut Minimum| {
        if m.value < best.value || (m.value == best.value && m.argmin < best.argmin) {
            *best = m;
        }
    };
    consider(
        Minimum {
            argmin: hi,
            value: f_hi,
        },
        &mut best,
    );

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iter = 0;
    while b - a > tol && iter < MAX_ITER {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    consider(
        Minimum {
            argmin: c,
            value: fc,
        },
        &mut best,
    );
    consider(
        Minimum {
            argmin: d,
            value: fd,
        },
        &mut best,
    );
    if fc.is_nan() || fd.is_nan() || f_lo.is_nan() || f_hi.is_nan() {
        best.value = f64::NAN;
    }
    best
}
