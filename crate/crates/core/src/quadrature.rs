//! Summation and one-dimensional adaptive quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Fixed-order pairwise summation. The split points depend only on the
/// length, so the result is bit-identical across runs.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

// 7-point Gauss / 15-point Kronrod abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Five-point Gauss–Legendre rule on [-1, 1].
pub const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
pub const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = hl * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * hl, ((kron - gauss) * hl).abs())
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
/// `breaks` are interior points where `f` may have kinks; they become
/// initial interval ends.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    max_intervals: usize,
) -> QuadResult {
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().cloned().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    pts.extend(inner);
    pts.push(b);
    let mut heap = BinaryHeap::new();
    for w in pts.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gk15(&mut f, w[0], w[1]);
            heap.push(Piece {
                a: w[0],
                b: w[1],
                value,
                error,
            });
        }
    }
    loop {
        let total_err: f64 = heap.iter().map(|p| p.error).sum();
        if total_err <= abs_tol || heap.len() >= max_intervals {
            break;
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            heap.push(worst);
            break;
        }
        for (lo, hi) in [(worst.a, m), (m, worst.b)] {
            let (value, error) = gk15(&mut f, lo, hi);
            heap.push(Piece {
                a: lo,
                b: hi,
                value,
                error,
            });
        }
    }
    let mut pieces = heap.into_vec();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    let vals: Vec<f64> = pieces.iter().map(|p| p.value).collect();
    QuadResult {
        value: pairwise_sum(&vals),
        error: pieces.iter().map(|p| p.error).sum(),
        intervals: pieces.len(),
    }
}

/// `∫∫ f(x, y)` over the disc of radius `radius` about the origin, in polar
/// coordinates. `theta_breaks` are angles where the radial integral has kinks,
/// `radial_breaks(θ)` lists radii where `f` kinks along the ray at angle `θ`.
pub fn integrate_disc<F, B>(
    f: F,
    radius: f64,
    theta_breaks: &[f64],
    radial_breaks: B,
    abs_tol: f64,
) -> QuadResult
where
    F: Fn(f64, f64) -> f64,
    B: Fn(f64) -> Vec<f64>,
{
    let two_pi = 2.0 * std::f64::consts::PI;
    let inner_tol = abs_tol / (4.0 * two_pi);
    integrate(
        |th| {
            let (s, c) = th.sin_cos();
            let rb = radial_breaks(th);
            integrate(|r| f(r * c, r * s) * r, 0.0, radius, &rb, inner_tol, 400).value
        },
        0.0,
        two_pi,
        theta_breaks,
        abs_tol,
        2000,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn gk_integrates_polynomials_and_kinks() {
        let r = integrate(|x| x.powi(5) - 3.0 * x, 0.0, 2.0, &[], 1e-13, 50);
        assert!((r.value - (64.0 / 6.0 - 6.0)).abs() < 1e-12);
        let k = integrate(|x: f64| (x - 0.3).abs(), -1.0, 1.0, &[], 1e-12, 200);
        assert!((k.value - (0.5 * 1.3 * 1.3 + 0.5 * 0.7 * 0.7)).abs() < 1e-11);
        let kb = integrate(|x: f64| (x - 0.3).abs(), -1.0, 1.0, &[0.3], 1e-12, 10);
        assert!((kb.value - k.value).abs() < 1e-12);
        assert!(kb.intervals <= 2);
    }

    #[test]
    fn gauss_legendre_five_is_degree_nine_exact() {
        let v: f64 = GL5_NODES
            .iter()
            .zip(GL5_WEIGHTS)
            .map(|(x, w)| w * x.powi(8))
            .sum();
        assert!((v - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn disc_area_and_moment() {
        let a = integrate_disc(|_, _| 1.0, 1.0, &[], |_| vec![], 1e-12);
        assert!((a.value - std::f64::consts::PI).abs() < 1e-11);
        let m = integrate_disc(|x, _| x.abs(), 1.0, &[], |_| vec![], 1e-10);
        assert!((m.value - 4.0 / 3.0).abs() < 1e-8);
    }
}
